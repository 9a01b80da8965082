#include "farfield/frontend.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "farfield/errors.hpp"

namespace farfield {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::domain_error(what);
}

// DFT basis restricted to bins 1..K: column 2k is cos, 2k+1 is -sin of bin k+1,
// window folded in.
const Mat& dft_basis(const StftConfig& cfg) {
  thread_local StftConfig cached{0, 0, 0, Window::rectangular, 0.0};
  thread_local Mat basis;
  if (cached.frame_length != cfg.frame_length || cached.fft_size != cfg.fft_size ||
      cached.window != cfg.window) {
    const auto n_len = Eigen::Index(cfg.frame_length);
    const auto bins = Eigen::Index(cfg.num_bins());
    basis.resize(n_len, 2 * bins);
    for (Eigen::Index n = 0; n < n_len; ++n) {
      double w = 1.0;
      if (cfg.window == Window::hann) {
        w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * double(n) / double(n_len));
      }
      for (Eigen::Index k = 0; k < bins; ++k) {
        // Reduce the phase index modulo N before converting to keep it exact.
        const auto idx = ((k + 1) * n) % Eigen::Index(cfg.fft_size);
        const double phase = 2.0 * std::numbers::pi * double(idx) / double(cfg.fft_size);
        basis(n, 2 * k) = w * std::cos(phase);
        basis(n, 2 * k + 1) = -w * std::sin(phase);
      }
    }
    cached = cfg;
  }
  return basis;
}

// Exact integral of the triangle (left, center, right) over [a, b].
double triangle_integral(double left, double center, double right, double a, double b) {
  auto tri = [&](double f) {
    if (f <= left || f >= right) return 0.0;
    return f <= center ? (f - left) / (center - left) : (right - f) / (right - center);
  };
  double pts[5] = {a, std::clamp(left, a, b), std::clamp(center, a, b), std::clamp(right, a, b), b};
  std::sort(pts, pts + 5);
  double total = 0.0;
  for (int i = 1; i < 5; ++i) total += 0.5 * (tri(pts[i - 1]) + tri(pts[i])) * (pts[i] - pts[i - 1]);
  return total;
}

}  // namespace

const char* stage_name(Stage s) {
  switch (s) {
    case Stage::complex_stft: return "complex_stft";
    case Stage::directional_power: return "directional_power";
    case Stage::log_mfb: return "log_mfb";
    case Stage::stacked: return "stacked";
  }
  return "unknown";
}

void StftConfig::validate() const {
  require(fft_size >= 4 && fft_size % 2 == 0, "fft_size must be even and >= 4");
  require(frame_length >= 1 && frame_length <= fft_size, "frame_length must be in [1, fft_size]");
  require(frame_shift >= 1 && frame_shift <= frame_length, "frame_shift must be in [1, frame_length]");
  require(sample_rate > 0.0, "sample_rate must be positive");
}

std::size_t StftConfig::num_frames(std::size_t num_samples) const {
  if (num_samples < frame_length) return 0;
  return (num_samples - frame_length) / frame_shift + 1;
}

FeatureTensor stft(std::span<const std::vector<double>> channels, const StftConfig& cfg) {
  cfg.validate();
  const std::size_t num_ch = channels.size();
  require(num_ch >= 1, "stft needs at least one channel");
  const std::size_t n = channels[0].size();
  for (const auto& ch : channels) require(ch.size() == n, "all channels must have equal length");

  const std::size_t frames = cfg.num_frames(n);
  const std::size_t bins = cfg.num_bins();
  FeatureTensor out;
  out.stage = Stage::complex_stft;
  out.shape = {frames, num_ch, bins, 2};
  out.frame_rate = cfg.sample_rate / double(cfg.frame_shift);
  out.data.setZero(Eigen::Index(frames), Eigen::Index(num_ch * bins * 2));
  if (frames == 0) return out;

  const Mat& basis = dft_basis(cfg);
  Mat framed(Eigen::Index(frames), Eigen::Index(cfg.frame_length));
  for (std::size_t c = 0; c < num_ch; ++c) {
    for (std::size_t t = 0; t < frames; ++t) {
      const double* src = channels[c].data() + t * cfg.frame_shift;
      for (std::size_t i = 0; i < cfg.frame_length; ++i) {
        require(std::isfinite(src[i]), "non-finite sample");
        framed(Eigen::Index(t), Eigen::Index(i)) = src[i];
      }
    }
    out.data.middleCols(Eigen::Index(c * bins * 2), Eigen::Index(bins * 2)).noalias() =
        framed * basis;
  }
  return out;
}

void NormStats::validate() const {
  require(mean.size() == variance.size(), "mean/variance size mismatch");
  for (Eigen::Index i = 0; i < variance.size(); ++i) {
    require(variance(i) > 0.0 && std::isfinite(variance(i)), "variance entries must be positive");
  }
}

void NormAccumulator::add(const Mat& rows) {
  if (rows.rows() == 0) return;
  if (count_ == 0 && sum_.size() == 0) {
    sum_.setZero(rows.cols());
    sum_sq_.setZero(rows.cols());
  }
  require(rows.cols() == sum_.size(), "inconsistent feature width in NormAccumulator");
  sum_ += rows.colwise().sum().transpose();
  sum_sq_ += rows.array().square().colwise().sum().matrix().transpose();
  count_ += std::size_t(rows.rows());
}

NormStats NormAccumulator::finish(double variance_floor) const {
  if (count_ == 0) throw std::domain_error("no frames accumulated");
  NormStats s;
  s.mean = sum_ / double(count_);
  s.variance = (sum_sq_ / double(count_) - s.mean.array().square().matrix())
                   .cwiseMax(variance_floor);
  return s;
}

FeatureTensor normalize(const FeatureTensor& x, const NormStats& stats) {
  stats.validate();
  require(stats.mean.size() == x.data.cols(),
          "normalization stats have dimension " + std::to_string(stats.mean.size()) +
              ", features have " + std::to_string(x.data.cols()));
  FeatureTensor y = x;
  const Eigen::RowVectorXd inv_std = stats.variance.array().rsqrt().matrix().transpose();
  y.data = ((x.data.rowwise() - stats.mean.transpose()).array().rowwise() * inv_std.array())
               .matrix();
  return y;
}

Mat block_affine_forward(const FeatureTensor& x, const BlockAffineParams& p) {
  require(x.stage == Stage::complex_stft, "block affine expects a complex_stft tensor");
  require(std::size_t(x.data.cols()) == p.mics * p.bins * 2,
          "block affine input width does not match parameters");
  require(p.coeff.size() == p.bins * p.dirs * p.mics * 2 && p.bias.size() == p.bins * p.dirs * 2,
          "block affine parameter size mismatch");
  const auto frames = x.data.rows();
  Mat y(frames, Eigen::Index(p.dirs * p.bins * 2));
  for (Eigen::Index t = 0; t < frames; ++t) {
    const double* xr = x.data.row(t).data();
    double* yr = y.row(t).data();
    for (std::size_t k = 0; k < p.bins; ++k) {
      for (std::size_t d = 0; d < p.dirs; ++d) {
        const auto bi = p.bias_index(k, d);
        double re = p.bias[bi], im = p.bias[bi + 1];
        for (std::size_t m = 0; m < p.mics; ++m) {
          const auto ci = p.coeff_index(k, d, m);
          const double a = p.coeff[ci], b = p.coeff[ci + 1];
          const double xre = xr[(m * p.bins + k) * 2], xim = xr[(m * p.bins + k) * 2 + 1];
          re += a * xre - b * xim;
          im += a * xim + b * xre;
        }
        yr[(d * p.bins + k) * 2] = re;
        yr[(d * p.bins + k) * 2 + 1] = im;
      }
    }
  }
  return y;
}

FeatureTensor power(const Mat& directional, std::size_t dirs, std::size_t bins) {
  require(std::size_t(directional.cols()) == dirs * bins * 2, "power input width mismatch");
  FeatureTensor out;
  out.stage = Stage::directional_power;
  out.shape = {std::size_t(directional.rows()), dirs, bins};
  out.data.resize(directional.rows(), Eigen::Index(dirs * bins));
  for (Eigen::Index t = 0; t < directional.rows(); ++t) {
    for (Eigen::Index j = 0; j < out.data.cols(); ++j) {
      const double re = directional(t, 2 * j), im = directional(t, 2 * j + 1);
      out.data(t, j) = re * re + im * im;
    }
  }
  return out;
}

AffineParams esf_init(std::size_t dirs, std::size_t bins) {
  AffineParams p;
  p.weight.setZero(Eigen::Index(bins), Eigen::Index(dirs * bins));
  for (std::size_t d = 0; d < dirs; ++d) {
    for (std::size_t k = 0; k < bins; ++k) {
      p.weight(Eigen::Index(k), Eigen::Index(d * bins + k)) = 1.0 / double(dirs);
    }
  }
  p.bias.setZero(Eigen::Index(bins));
  return p;
}

Mat esf_forward(const FeatureTensor& power_map, const AffineParams& p) {
  require(power_map.data.cols() == p.weight.cols(), "ESF input width does not match weights");
  require(p.bias.size() == p.weight.rows(), "ESF bias size mismatch");
  Mat z = power_map.data * p.weight.transpose();
  z.rowwise() += p.bias.transpose();
  return z;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<double> mel_center_frequencies(std::size_t num_filters, double sample_rate) {
  require(num_filters >= 1, "need at least one mel filter");
  const double top = hz_to_mel(sample_rate / 2.0);
  std::vector<double> centers(num_filters);
  for (std::size_t i = 0; i < num_filters; ++i) {
    centers[i] = mel_to_hz(top * double(i + 1) / double(num_filters + 1));
  }
  return centers;
}

Mat mel_filterbank_matrix(std::size_t num_filters, std::size_t num_bins, double sample_rate) {
  require(num_filters >= 1, "need at least one mel filter");
  require(num_bins >= 1, "need at least one bin");
  const double top = hz_to_mel(sample_rate / 2.0);
  const double bin_hz = sample_rate / double(2 * (num_bins + 1));
  std::vector<double> edges(num_filters + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(top * double(i) / double(num_filters + 1));
  }
  // Each weight is the triangle averaged over the bin's band [f - df/2, f + df/2],
  // so narrow low-frequency filters still register on the coarse bin grid.
  Mat w = Mat::Zero(Eigen::Index(num_filters), Eigen::Index(num_bins));
  for (std::size_t i = 0; i < num_filters; ++i) {
    for (std::size_t k = 0; k < num_bins; ++k) {
      const double f = double(k + 1) * bin_hz;
      w(Eigen::Index(i), Eigen::Index(k)) =
          triangle_integral(edges[i], edges[i + 1], edges[i + 2], f - 0.5 * bin_hz,
                            f + 0.5 * bin_hz) / bin_hz;
    }
    if (w.row(Eigen::Index(i)).maxCoeff() <= 0.0) {
      throw std::domain_error("mel filter " + std::to_string(i) + " of " +
                              std::to_string(num_filters) +
                              " has no support on the bin grid; use fewer filters");
    }
  }
  return w;
}

FeatureTensor mfb_log_forward(const Mat& spectrum, const AffineParams& p) {
  require(spectrum.cols() == p.weight.cols(), "MFB input width does not match weights");
  require(p.bias.size() == p.weight.rows(), "MFB bias size mismatch");
  Mat pre = spectrum * p.weight.transpose();
  pre.rowwise() += p.bias.transpose();
  FeatureTensor out;
  out.stage = Stage::log_mfb;
  out.shape = {std::size_t(pre.rows()), std::size_t(pre.cols())};
  out.data = pre.array().max(kLogFloor).log().matrix();
  return out;
}

FeatureTensor stack_frames(const FeatureTensor& x) {
  require(x.stage == Stage::log_mfb, "stack_frames expects a log_mfb tensor");
  const auto groups = x.data.rows() / Eigen::Index(kStackFactor);
  const auto dim = x.data.cols();
  FeatureTensor out;
  out.stage = Stage::stacked;
  out.frame_rate = x.frame_rate / double(kStackFactor);
  out.shape = {std::size_t(groups), std::size_t(dim) * kStackFactor};
  out.data.resize(groups, dim * Eigen::Index(kStackFactor));
  for (Eigen::Index g = 0; g < groups; ++g) {
    for (Eigen::Index j = 0; j < Eigen::Index(kStackFactor); ++j) {
      out.data.block(g, j * dim, 1, dim) = x.data.row(g * Eigen::Index(kStackFactor) + j);
    }
  }
  return out;
}

FrontendParams FrontendParams::zeros_like() const {
  FrontendParams z = *this;
  std::fill(z.block_affine.coeff.begin(), z.block_affine.coeff.end(), 0.0);
  std::fill(z.block_affine.bias.begin(), z.block_affine.bias.end(), 0.0);
  z.esf.weight.setZero();
  z.esf.bias.setZero();
  z.mfb.weight.setZero();
  z.mfb.bias.setZero();
  return z;
}

std::vector<ParamSpan> FrontendParams::groups(const TrainableGroups& which) {
  std::vector<ParamSpan> out;
  if (kind == FrontendKind::multi_channel) {
    if (which.block_affine) {
      out.push_back({"block_affine.coeff", as_span(block_affine.coeff)});
      out.push_back({"block_affine.bias", as_span(block_affine.bias)});
    }
    if (which.esf) {
      out.push_back({"esf.weight", as_span(esf.weight)});
      out.push_back({"esf.bias", as_span(esf.bias)});
    }
  }
  if (which.mfb) {
    out.push_back({"mfb.weight", as_span(mfb.weight)});
    out.push_back({"mfb.bias", as_span(mfb.bias)});
  }
  return out;
}

FrontendParams make_multichannel_frontend(const BeamformerBank& bank, std::size_t num_filters,
                                          double sample_rate) {
  FrontendParams p;
  p.kind = FrontendKind::multi_channel;
  p.channels = bank.num_mics();
  p.bins = bank.num_bins();
  p.dirs = bank.num_directions();
  p.sample_rate = sample_rate;
  p.block_affine = bank_to_block_affine(bank);
  p.esf = esf_init(p.dirs, p.bins);
  p.mfb.weight = mel_filterbank_matrix(num_filters, p.bins, sample_rate);
  p.mfb.bias.setZero(Eigen::Index(num_filters));
  return p;
}

FrontendParams make_single_channel_frontend(std::size_t bins, std::size_t num_filters,
                                            double sample_rate, std::size_t channels) {
  FrontendParams p;
  p.kind = FrontendKind::single_channel;
  p.channels = channels;
  p.bins = bins;
  p.dirs = 0;
  p.sample_rate = sample_rate;
  p.mfb.weight = mel_filterbank_matrix(num_filters, bins, sample_rate);
  p.mfb.bias.setZero(Eigen::Index(num_filters));
  return p;
}

FeatureTensor frontend_forward(const FrontendParams& params, const FeatureTensor& normalized,
                               FrontendCache* cache) {
  require(normalized.stage == Stage::complex_stft, "front-end expects a complex_stft tensor");
  require(std::size_t(normalized.data.cols()) == params.input_dim(),
          "front-end input width " + std::to_string(normalized.data.cols()) + " != expected " +
              std::to_string(params.input_dim()));
  Mat combined;
  Mat beamformed;
  FeatureTensor pw;
  if (params.kind == FrontendKind::multi_channel) {
    beamformed = block_affine_forward(normalized, params.block_affine);
    pw = power(beamformed, params.dirs, params.bins);
    combined = esf_forward(pw, params.esf);
  } else {
    // Channel 0 bins are the first 2*bins columns.
    pw = power(normalized.data.leftCols(Eigen::Index(params.bins * 2)), 1, params.bins);
    combined = pw.data;
  }
  FeatureTensor logmfb = mfb_log_forward(combined, params.mfb);
  logmfb.frame_rate = normalized.frame_rate;
  FeatureTensor stacked = stack_frames(logmfb);
  if (cache) {
    cache->valid = true;
    cache->frames = normalized.frames();
    cache->input = normalized.data;
    cache->beamformed = std::move(beamformed);
    cache->power = std::move(pw.data);
    cache->mfb_pre = combined * params.mfb.weight.transpose();
    cache->mfb_pre.rowwise() += params.mfb.bias.transpose();
    cache->combined = std::move(combined);
  }
  return stacked;
}

FrontendGradients frontend_backward(const Mat& grad_stacked, const FrontendCache& cache,
                                    const FrontendParams& params,
                                    const TrainableGroups& trainable, bool want_input_grad) {
  if (!cache.valid) throw UsageError("frontend_backward called without a cached forward pass");
  const auto frames = Eigen::Index(cache.frames);
  const auto filters = Eigen::Index(params.num_filters());
  const auto groups = frames / Eigen::Index(kStackFactor);
  require(grad_stacked.rows() == groups && grad_stacked.cols() == filters * 3,
          "stacked gradient shape mismatch");

  FrontendGradients g;
  g.params = params.zeros_like();

  // Unstack; dropped trailing frames receive zero gradient.
  Mat d_log = Mat::Zero(frames, filters);
  for (Eigen::Index s = 0; s < groups; ++s) {
    for (Eigen::Index j = 0; j < 3; ++j) {
      d_log.row(s * 3 + j) = grad_stacked.block(s, j * filters, 1, filters);
    }
  }
  // d/dx log(max(x, eps)) is 1/x above the floor and 0 at or below it.
  Mat d_pre = Mat::Zero(frames, filters);
  for (Eigen::Index t = 0; t < frames; ++t) {
    for (Eigen::Index i = 0; i < filters; ++i) {
      const double a = cache.mfb_pre(t, i);
      if (a > kLogFloor) d_pre(t, i) = d_log(t, i) / a;
    }
  }
  if (trainable.mfb) {
    g.params.mfb.weight.noalias() = d_pre.transpose() * cache.combined;
    g.params.mfb.bias = d_pre.colwise().sum().transpose();
  }

  const bool multi = params.kind == FrontendKind::multi_channel;
  const bool need_upstream = want_input_grad || (multi && (trainable.esf || trainable.block_affine));
  if (!need_upstream) return g;

  Mat d_combined = d_pre * params.mfb.weight;
  const auto bins = Eigen::Index(params.bins);

  if (!multi) {
    if (want_input_grad) {
      g.input = Mat::Zero(frames, Eigen::Index(params.input_dim()));
      for (Eigen::Index t = 0; t < frames; ++t) {
        for (Eigen::Index k = 0; k < bins; ++k) {
          g.input(t, 2 * k) = 2.0 * cache.input(t, 2 * k) * d_combined(t, k);
          g.input(t, 2 * k + 1) = 2.0 * cache.input(t, 2 * k + 1) * d_combined(t, k);
        }
      }
    }
    return g;
  }

  if (trainable.esf) {
    g.params.esf.weight.noalias() = d_combined.transpose() * cache.power;
    g.params.esf.bias = d_combined.colwise().sum().transpose();
  }
  if (!trainable.block_affine && !want_input_grad) return g;

  const Mat d_power = d_combined * params.esf.weight;
  const auto& ba = params.block_affine;
  auto& gba = g.params.block_affine;
  if (want_input_grad) g.input = Mat::Zero(frames, Eigen::Index(params.input_dim()));
  for (Eigen::Index t = 0; t < frames; ++t) {
    const double* y = cache.beamformed.row(t).data();
    const double* x = cache.input.row(t).data();
    const double* dp = d_power.row(t).data();
    for (std::size_t k = 0; k < ba.bins; ++k) {
      for (std::size_t d = 0; d < ba.dirs; ++d) {
        const std::size_t j = d * ba.bins + k;
        const double gre = 2.0 * y[2 * j] * dp[j];
        const double gim = 2.0 * y[2 * j + 1] * dp[j];
        if (trainable.block_affine) {
          const auto bi = ba.bias_index(k, d);
          gba.bias[bi] += gre;
          gba.bias[bi + 1] += gim;
        }
        for (std::size_t m = 0; m < ba.mics; ++m) {
          const auto ci = ba.coeff_index(k, d, m);
          const std::size_t xi = (m * ba.bins + k) * 2;
          const double xre = x[xi], xim = x[xi + 1];
          if (trainable.block_affine) {
            gba.coeff[ci] += gre * xre + gim * xim;
            gba.coeff[ci + 1] += -gre * xim + gim * xre;
          }
          if (want_input_grad) {
            const double a = ba.coeff[ci], b = ba.coeff[ci + 1];
            g.input(t, Eigen::Index(xi)) += a * gre + b * gim;
            g.input(t, Eigen::Index(xi + 1)) += -b * gre + a * gim;
          }
        }
      }
    }
  }
  return g;
}

}  // namespace farfield
