#include "farfield/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/FFT>

#include "farfield/rng.hpp"

namespace farfield {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kRampSeconds = 0.005;
constexpr double kEnvelopeFloor = 0.03;
constexpr std::size_t kUnvoicedPartials = 80;

double ramp(double t, double start, double end) {
  if (t <= start || t >= end) return 0.0;
  const double r = std::min({1.0, (t - start) / kRampSeconds, (end - t) / kRampSeconds});
  return 0.5 - 0.5 * std::cos(std::numbers::pi * r);
}

struct Partial {
  double hz;
  double amp;
  double phase;
};

// Adds sum_p amp sin(2 pi f (t - tau) + phase) * ramp(t - tau) to x over the
// samples the delayed segment can reach.
void render_partials(std::vector<double>& x, const std::vector<Partial>& partials, double tau,
                     double start, double end, double sr) {
  const auto n0 = std::size_t(std::max(0.0, std::floor((start + tau) * sr)));
  const auto n1 = std::min(x.size(), std::size_t(std::ceil((end + tau) * sr)) + 1);
  if (n0 >= n1) return;
  std::vector<double> env(n1 - n0);
  for (std::size_t n = n0; n < n1; ++n) env[n - n0] = ramp(double(n) / sr - tau, start, end);
  for (const auto& p : partials) {
    const double w = kTwoPi * p.hz / sr;
    // Phasor recurrence, re-anchored periodically to bound drift.
    std::complex<double> z, step = std::polar(1.0, w);
    for (std::size_t n = n0; n < n1; ++n) {
      if ((n - n0) % 256 == 0) z = std::polar(1.0, kTwoPi * p.hz * (double(n) / sr - tau) + p.phase);
      x[n] += p.amp * env[n - n0] * z.imag();
      z *= step;
    }
  }
}

}  // namespace

std::vector<std::vector<double>> diffuse_noise(const ArrayGeometry& geom, const SubarraySelection& sel,
                                               std::size_t num_samples, std::uint64_t seed) {
  const std::size_t m = sel.size();
  const std::size_t n = num_samples;
  std::vector<std::vector<double>> out(m, std::vector<double>(n, 0.0));
  if (n < 2) return out;
  Rng rng(seed);
  std::vector<std::vector<std::complex<double>>> spec(m, std::vector<std::complex<double>>(n, 0.0));
  Eigen::VectorXcd z{Eigen::Index(m)};
  for (std::size_t k = 1; k <= (n - 1) / 2; ++k) {
    const double f = double(k) * geom.sample_rate / double(n);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(diffuse_coherence(geom, sel, f));
    const Eigen::MatrixXd root =
        es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
    for (std::size_t i = 0; i < m; ++i) z(Eigen::Index(i)) = {rng.normal(), rng.normal()};
    const Eigen::VectorXcd x = root * z;
    for (std::size_t i = 0; i < m; ++i) {
      spec[i][k] = x(Eigen::Index(i));
      spec[i][n - k] = std::conj(x(Eigen::Index(i)));
    }
  }
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> time;
  for (std::size_t i = 0; i < m; ++i) {
    fft.inv(time, spec[i]);
    double p = 0.0;
    for (std::size_t t = 0; t < n; ++t) p += time[t].real() * time[t].real();
    const double g = p > 0.0 ? std::sqrt(double(n) / p) : 0.0;
    for (std::size_t t = 0; t < n; ++t) out[i][t] = g * time[t].real();
  }
  return out;
}

void SyntheticCorpusConfig::validate() const {
  if (num_utterances == 0 || num_classes == 0 || !(utterance_seconds > 0.0) || !(signal_rms > 0.0)) {
    throw std::domain_error("corpus counts and durations must be positive");
  }
  if (!(snr_range_db.lo <= snr_range_db.hi) || snr_range_db.lo < -10.0 || snr_range_db.hi > 30.0) {
    throw std::domain_error("snr range must lie within [-10, 30] dB");
  }
  if (!(diffuse_noise_fraction >= 0.0 && diffuse_noise_fraction <= 1.0)) {
    throw std::domain_error("diffuse noise fraction must lie in [0, 1]");
  }
  if (min_segment_frames == 0 || min_segment_frames > max_segment_frames) {
    throw std::domain_error("invalid segment length range");
  }
  geometry.validate();
  if (geometry.sample_rate != 16000.0) throw std::domain_error("corpus generation assumes 16 kHz");
  if (samples_per_utterance() == 0) {
    throw std::domain_error("utterance is shorter than one 30 ms frame");
  }
  selection().validate(geometry);
}

SubarraySelection SyntheticCorpusConfig::selection() const {
  if (mic_indices.empty()) return select_opposite_pair(geometry);
  return SubarraySelection{mic_indices};
}

std::size_t SyntheticCorpusConfig::samples_per_utterance() const {
  const double n = std::floor(utterance_seconds * geometry.sample_rate);
  return std::size_t(n / double(kLabelHop)) * kLabelHop;
}

double ClassSignature::envelope(double hz) const {
  double e = kEnvelopeFloor;
  for (std::size_t i = 0; i < formants_hz.size(); ++i) {
    const double z = (hz - formants_hz[i]) / bandwidths_hz[i];
    e += std::exp(-0.5 * z * z);
  }
  return e;
}

std::vector<ClassSignature> make_class_table(std::size_t num_classes, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0xc1a55));
  std::vector<ClassSignature> table(num_classes);
  for (auto& c : table) {
    c.voiced = rng.uniform() < 0.7;
    c.formants_hz = {rng.uniform(250, 900), rng.uniform(900, 2300), rng.uniform(2300, 3500),
                     rng.uniform(3500, 5000)};
    for (std::size_t i = 0; i < 4; ++i) c.bandwidths_hz.push_back(rng.uniform(120, 300));
  }
  return table;
}

Utterance generate_utterance(const SyntheticCorpusConfig& cfg,
                             const std::vector<ClassSignature>& classes, std::size_t index,
                             UtteranceReferences* refs) {
  if (classes.size() != cfg.num_classes) throw std::domain_error("class table size mismatch");
  const double sr = cfg.geometry.sample_rate;
  const std::size_t n = cfg.samples_per_utterance();
  const auto sel = cfg.selection();
  Rng rng(mix_seed(cfg.seed, 0x5eed0000ull + index));

  Utterance u;
  u.index = index;
  u.azimuth = rng.uniform(0.0, kTwoPi);
  const auto tau = plane_wave_delays(cfg.geometry, sel, LookDirection{u.azimuth, 0.0});
  const double f0_base = rng.uniform(90, 240);
  const double snr = rng.uniform(cfg.snr_range_db.lo, cfg.snr_range_db.hi);

  std::vector<std::vector<double>> clean(sel.size(), std::vector<double>(n, 0.0));
  const std::size_t frames = n / kLabelHop;
  std::size_t t = 0;
  while (t < frames) {
    const std::size_t len = std::min(
        frames - t, cfg.min_segment_frames + rng.uniform_int(cfg.max_segment_frames - cfg.min_segment_frames + 1));
    const int cls = int(rng.uniform_int(cfg.num_classes));
    u.labels.insert(u.labels.end(), len, cls);

    ClassSignature sig = classes[std::size_t(cls)];
    for (double& f : sig.formants_hz) f *= 1.0 + 0.03 * rng.normal();
    const double gain = rng.uniform(0.6, 1.0);
    std::vector<Partial> partials;
    if (sig.voiced) {
      const double f0 = f0_base * (1.0 + 0.05 * rng.normal());
      for (double hz = f0; hz < 0.5 * sr - 100.0; hz += f0) {
        partials.push_back({hz, gain * sig.envelope(hz), rng.uniform(0, kTwoPi)});
      }
    } else {
      // Same mean power density as a 150 Hz harmonic series.
      const double scale = std::sqrt((0.5 * sr - 200.0) / 150.0 / double(kUnvoicedPartials));
      for (std::size_t p = 0; p < kUnvoicedPartials; ++p) {
        const double hz = rng.uniform(100.0, 0.5 * sr - 100.0);
        partials.push_back({hz, gain * scale * sig.envelope(hz), rng.uniform(0, kTwoPi)});
      }
    }
    const double start = double(t * kLabelHop) / sr;
    const double end = double((t + len) * kLabelHop) / sr;
    for (std::size_t m = 0; m < sel.size(); ++m) render_partials(clean[m], partials, tau[m], start, end, sr);
    t += len;
  }

  double p_clean = 0.0;
  for (const auto& ch : clean)
    for (double v : ch) p_clean += v * v;
  p_clean /= double(n * sel.size());
  const double g = p_clean > 0.0 ? cfg.signal_rms / std::sqrt(p_clean) : 0.0;
  for (auto& ch : clean)
    for (double& v : ch) v *= g;

  std::vector<std::vector<double>> noise(sel.size(), std::vector<double>(n));
  const auto diffuse =
      cfg.diffuse_noise_fraction > 0.0 ? diffuse_noise(cfg.geometry, sel, n, rng.next_u64()) : noise;
  const double wd = std::sqrt(cfg.diffuse_noise_fraction), wu = std::sqrt(1.0 - cfg.diffuse_noise_fraction);
  double p_noise = 0.0;
  for (std::size_t m = 0; m < sel.size(); ++m)
    for (std::size_t i = 0; i < n; ++i) {
      noise[m][i] = wd * diffuse[m][i] + wu * rng.normal();
      p_noise += noise[m][i] * noise[m][i];
    }
  p_noise /= double(n * sel.size());
  const double target = cfg.signal_rms * cfg.signal_rms / std::pow(10.0, snr / 10.0);
  const double gn = std::sqrt(target / p_noise);
  for (auto& ch : noise)
    for (double& v : ch) v *= gn;

  std::vector<std::vector<double>> mix(sel.size(), std::vector<double>(n));
  double peak = 0.0;
  for (std::size_t m = 0; m < sel.size(); ++m)
    for (std::size_t i = 0; i < n; ++i) {
      mix[m][i] = clean[m][i] + noise[m][i];
      peak = std::max(peak, std::abs(mix[m][i]));
    }
  if (peak > 0.98) {
    const double s = 0.98 / peak;
    for (auto* set : {&mix, &clean, &noise})
      for (auto& ch : *set)
        for (double& v : ch) v *= s;
  }
  u.audio = AudioClip::from_double(mix, int(sr));
  u.snr_db = snr_db(clean, noise);
  if (refs) {
    refs->clean = std::move(clean);
    refs->noise = std::move(noise);
  }
  return u;
}

const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::dev: return "dev";
    case Split::test: return "test";
  }
  return "?";
}

const std::vector<Utterance>& Corpus::split(Split s) const {
  switch (s) {
    case Split::train: return train;
    case Split::dev: return dev;
    case Split::test: return test;
  }
  return test;
}

Corpus generate_corpus(const SyntheticCorpusConfig& cfg) {
  cfg.validate();
  Corpus c;
  c.config = cfg;
  c.classes = make_class_table(cfg.num_classes, cfg.seed);
  const std::size_t n = cfg.num_utterances;
  const std::size_t n_train = n * 8 / 10;
  const std::size_t n_dev = (n - n_train) / 2;
  for (std::size_t i = 0; i < n; ++i) {
    auto u = generate_utterance(cfg, c.classes, i);
    if (i < n_train) {
      c.train.push_back(std::move(u));
    } else if (i < n_train + n_dev) {
      c.dev.push_back(std::move(u));
    } else {
      c.test.push_back(std::move(u));
    }
  }
  return c;
}

}  // namespace farfield
