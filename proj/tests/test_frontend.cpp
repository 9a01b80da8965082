#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>

#include "farfield/errors.hpp"
#include "farfield/frontend.hpp"
#include "farfield/rng.hpp"
#include "grad_check.hpp"

using namespace farfield;
using cd = std::complex<double>;

namespace {

FeatureTensor stft_of(const std::vector<std::vector<double>>& x, const StftConfig& cfg = {}) {
  return stft(std::span<const std::vector<double>>(x), cfg);
}

FeatureTensor random_stft(Rng& rng, std::size_t frames, std::size_t channels, std::size_t bins) {
  FeatureTensor t;
  t.stage = Stage::complex_stft;
  t.shape = {frames, channels, bins, 2};
  t.data.resize(Eigen::Index(frames), Eigen::Index(channels * bins * 2));
  for (Eigen::Index i = 0; i < t.data.size(); ++i) t.data.data()[i] = rng.normal();
  return t;
}

FrontendParams default_multichannel() {
  const auto geom = ArrayGeometry::circular7();
  const auto bank = build_bank(geom, select_opposite_pair(geom), default_look_directions(12), 256);
  return make_multichannel_frontend(bank, 64, 16000.0);
}

}  // namespace

TEST_CASE("stft framing and zero signal") {
  CHECK(stft_of({std::vector<double>(480, 0.0)}).frames() == 3);
  CHECK(stft_of({std::vector<double>(479, 0.0)}).frames() == 2);
  const auto z = stft_of({std::vector<double>(800, 0.0), std::vector<double>(800, 0.0)});
  CHECK(z.shape == std::vector<std::size_t>{5, 2, 127, 2});
  CHECK(z.data.cols() == 2 * 127 * 2);
  CHECK(z.data.isZero());
  CHECK(z.frame_rate == 100.0);
  const auto empty = stft_of({std::vector<double>{}});
  CHECK(empty.frames() == 0);
  CHECK_THROWS_AS(stft_of({std::vector<double>(320), std::vector<double>(300)}), std::domain_error);
}

TEST_CASE("stft of a bin-centred sine matches a naive DFT") {
  std::vector<double> x(160);
  for (int n = 0; n < 160; ++n) x[n] = std::sin(2 * std::numbers::pi * 1000.0 * n / 16000.0);
  const auto s = stft_of({x});
  REQUIRE(s.frames() == 1);
  double best = 0;
  int best_k = -1;
  for (int k = 1; k <= 127; ++k) {
    cd acc = 0;
    for (int n = 0; n < 160; ++n) acc += x[n] * std::polar(1.0, -2 * std::numbers::pi * k * n / 256.0);
    const cd got(s.data(0, 2 * (k - 1)), s.data(0, 2 * (k - 1) + 1));
    CHECK(std::abs(got - acc) < 1e-9);
    if (std::norm(got) > best) {
      best = std::norm(got);
      best_k = k;
    }
  }
  CHECK(best_k == 16);
}

TEST_CASE("hann window is applied") {
  StftConfig cfg;
  cfg.window = Window::hann;
  std::vector<double> x(160, 1.0);
  const auto s = stft_of({x}, cfg);
  cd acc = 0;
  for (int n = 0; n < 160; ++n) {
    const double w = 0.5 - 0.5 * std::cos(2 * std::numbers::pi * n / 160.0);
    acc += w * std::polar(1.0, -2 * std::numbers::pi * 3 * n / 256.0);
  }
  CHECK(std::abs(cd(s.data(0, 4), s.data(0, 5)) - acc) < 1e-9);
}

TEST_CASE("normalization") {
  Rng rng(2);
  const auto x = random_stft(rng, 50, 2, 5);
  NormStats unit{Vec::Zero(20), Vec::Ones(20)};
  CHECK(normalize(x, unit).data.isApprox(x.data));

  NormAccumulator acc;
  acc.add(x.data.topRows(20));
  acc.add(x.data.bottomRows(30));
  const auto stats = acc.finish();
  const auto y = normalize(x, stats);
  const Vec mean = y.data.colwise().mean().transpose();
  const Vec var = (y.data.rowwise() - mean.transpose()).array().square().colwise().mean().transpose();
  CHECK(mean.cwiseAbs().maxCoeff() < 1e-6);
  CHECK((var.array() - 1.0).abs().maxCoeff() < 1e-6);

  const auto one = random_stft(rng, 1, 2, 5);
  NormStats self{one.data.row(0).transpose(), Vec::Ones(20)};
  CHECK(normalize(one, self).data.isZero());

  CHECK_THROWS_AS(normalize(x, NormStats{Vec::Zero(3), Vec::Ones(3)}), std::domain_error);
  CHECK_THROWS_AS(normalize(x, NormStats{Vec::Zero(20), Vec::Zero(20)}), std::domain_error);
}

TEST_CASE("block affine forward") {
  Rng rng(4);
  SUBCASE("identity single direction, one mic") {
    BlockAffineParams p{5, 1, 1, {}, {}};
    for (std::size_t k = 0; k < 5; ++k) p.coeff.insert(p.coeff.end(), {1.0, 0.0});
    p.bias.assign(10, 0.0);
    const auto x = random_stft(rng, 4, 1, 5);
    CHECK(block_affine_forward(x, p).isApprox(x.data));
  }
  SUBCASE("steering vector input yields 1+0j for its own direction") {
    const auto geom = ArrayGeometry::circular7();
    const auto sel = select_opposite_pair(geom);
    const auto dirs = default_look_directions(12);
    const auto bank = build_bank(geom, sel, dirs, 256);
    const auto p = bank_to_block_affine(bank);
    for (std::size_t d : {0u, 3u, 7u}) {
      FeatureTensor x;
      x.shape = {1, 2, 127, 2};
      x.data.resize(1, 2 * 127 * 2);
      for (std::size_t k = 0; k < 127; ++k) {
        const auto s = steering_vector(geom, sel, dirs[d], bank.bin_frequencies()[k]);
        for (std::size_t m = 0; m < 2; ++m) {
          x.data(0, Eigen::Index((m * 127 + k) * 2)) = s(Eigen::Index(m)).real();
          x.data(0, Eigen::Index((m * 127 + k) * 2 + 1)) = s(Eigen::Index(m)).imag();
        }
      }
      const Mat y = block_affine_forward(x, p);
      for (std::size_t k = 0; k < 127; ++k) {
        const cd out(y(0, Eigen::Index((d * 127 + k) * 2)), y(0, Eigen::Index((d * 127 + k) * 2 + 1)));
        CHECK(std::abs(out - 1.0) < 1e-9);
      }
    }
  }
  SUBCASE("random parameters against a complex arithmetic oracle") {
    BlockAffineParams p{7, 3, 2, {}, {}};
    for (int i = 0; i < 7 * 3 * 2 * 2; ++i) p.coeff.push_back(rng.normal());
    for (int i = 0; i < 7 * 3 * 2; ++i) p.bias.push_back(rng.normal());
    const auto x = random_stft(rng, 6, 2, 7);
    const Mat y = block_affine_forward(x, p);
    for (Eigen::Index t = 0; t < 6; ++t)
      for (std::size_t k = 0; k < 7; ++k)
        for (std::size_t d = 0; d < 3; ++d) {
          cd acc(p.bias[p.bias_index(k, d)], p.bias[p.bias_index(k, d) + 1]);
          for (std::size_t m = 0; m < 2; ++m) {
            const auto xi = Eigen::Index((m * 7 + k) * 2);
            acc += p.coefficient(k, d, m) * cd(x.data(t, xi), x.data(t, xi + 1));
          }
          const auto yi = Eigen::Index((d * 7 + k) * 2);
          CHECK(std::abs(cd(y(t, yi), y(t, yi + 1)) - acc) < 1e-12);
        }
  }
  SUBCASE("shape mismatch") {
    BlockAffineParams p{7, 3, 2, std::vector<double>(84), std::vector<double>(42)};
    CHECK_THROWS_AS(block_affine_forward(random_stft(rng, 2, 2, 6), p), std::domain_error);
  }
}

TEST_CASE("power") {
  Mat y(1, 2);
  y << 3, 4;
  CHECK(power(y, 1, 1).data(0, 0) == 25.0);
  CHECK(power(Mat::Zero(3, 8), 2, 2).data.isZero());
  Rng rng(9);
  Mat r(4, 24);
  for (Eigen::Index i = 0; i < r.size(); ++i) r.data()[i] = rng.normal();
  const auto p = power(r, 3, 4);
  CHECK(p.stage == Stage::directional_power);
  for (Eigen::Index t = 0; t < 4; ++t)
    for (Eigen::Index j = 0; j < 12; ++j) {
      CHECK(p.data(t, j) == doctest::Approx(std::norm(cd(r(t, 2 * j), r(t, 2 * j + 1)))).epsilon(1e-15));
      CHECK(p.data(t, j) >= 0.0);
    }
}

TEST_CASE("elastic spatial filtering affine") {
  const auto init = esf_init(12, 127);
  CHECK(init.weight.rows() == 127);
  CHECK(init.weight.cols() == 12 * 127);
  FeatureTensor pm;
  pm.stage = Stage::directional_power;
  pm.shape = {1, 12, 127};
  pm.data = Mat::Zero(1, 12 * 127);
  for (int k = 0; k < 127; ++k) pm.data(0, 4 * 127 + k) = 1.0 + k;  // direction 4 only
  const Mat z = esf_forward(pm, init);
  for (int k = 0; k < 127; ++k) CHECK(z(0, k) == doctest::Approx((1.0 + k) / 12.0));
  pm.data.setZero();
  CHECK(esf_forward(pm, init).isZero());

  Rng rng(6);
  AffineParams p{Mat(5, 8), Vec(5)};
  for (Eigen::Index i = 0; i < p.weight.size(); ++i) p.weight.data()[i] = rng.normal();
  for (Eigen::Index i = 0; i < 5; ++i) p.bias(i) = rng.normal();
  FeatureTensor in;
  in.stage = Stage::directional_power;
  in.shape = {3, 2, 4};
  in.data.resize(3, 8);
  for (Eigen::Index i = 0; i < in.data.size(); ++i) in.data.data()[i] = rng.uniform();
  const Mat out = esf_forward(in, p);
  for (int t = 0; t < 3; ++t)
    for (int o = 0; o < 5; ++o) {
      double acc = p.bias(o);
      for (int i = 0; i < 8; ++i) acc += p.weight(o, i) * in.data(t, i);
      CHECK(std::abs(out(t, o) - acc) < 1e-10);
    }
  in.data.resize(3, 7);
  CHECK_THROWS_AS(esf_forward(in, p), std::domain_error);
}

TEST_CASE("mel filterbank") {
  CHECK(hz_to_mel(700.0) == doctest::Approx(2595.0 * std::log10(2.0)));
  CHECK(mel_to_hz(hz_to_mel(1234.5)) == doctest::Approx(1234.5));
  const Mat w = mel_filterbank_matrix(64, 127, 16000.0);
  CHECK(w.rows() == 64);
  CHECK(w.cols() == 127);
  CHECK(w.minCoeff() >= 0.0);
  for (Eigen::Index i = 0; i < 64; ++i) CHECK(w.row(i).sum() > 0.0);
  for (Eigen::Index k = 0; k < 126; ++k) CHECK(w.col(k).maxCoeff() > 0.0);

  // Independent 66-point grid.
  const double top = 2595.0 * std::log10(1.0 + 8000.0 / 700.0);
  const auto centers = mel_center_frequencies(64, 16000.0);
  for (int i = 0; i < 64; ++i) {
    const double mel = top * (i + 1) / 65.0;
    CHECK(centers[i] == doctest::Approx(700.0 * (std::pow(10.0, mel / 2595.0) - 1.0)).epsilon(1e-12));
    if (i > 0) CHECK(centers[i] > centers[i - 1]);
  }
  CHECK(centers.front() > 0.0);
  CHECK(centers.back() < 8000.0);

  // Each filter's largest weight sits at the bin nearest its center once the
  // filters are wider than a bin.
  for (int i = 32; i < 64; ++i) {
    Eigen::Index arg = 0;
    w.row(i).maxCoeff(&arg);
    CHECK(std::abs((arg + 1) * 62.5 - centers[i]) <= 62.5);
  }
  CHECK_THROWS_AS(mel_filterbank_matrix(400, 127, 16000.0), std::domain_error);
  CHECK_THROWS_AS(mel_filterbank_matrix(0, 127, 16000.0), std::domain_error);
}

TEST_CASE("mfb log layer") {
  AffineParams unit{Mat::Zero(4, 6), Vec::Ones(4)};
  CHECK(mfb_log_forward(Mat::Random(3, 6), unit).data.isZero());
  AffineParams neg{Mat::Zero(4, 6), Vec::Constant(4, -2.0)};
  const auto floored = mfb_log_forward(Mat::Random(3, 6), neg);
  CHECK((floored.data.array() == std::log(kLogFloor)).all());

  Rng rng(8);
  AffineParams p{Mat(4, 6), Vec(4)};
  for (Eigen::Index i = 0; i < p.weight.size(); ++i) p.weight.data()[i] = rng.normal();
  for (Eigen::Index i = 0; i < 4; ++i) p.bias(i) = rng.normal();
  Mat x(5, 6);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  const auto out = mfb_log_forward(x, p);
  CHECK(out.stage == Stage::log_mfb);
  for (int t = 0; t < 5; ++t)
    for (int o = 0; o < 4; ++o) {
      double a = p.bias(o);
      for (int i = 0; i < 6; ++i) a += p.weight(o, i) * x(t, i);
      CHECK(std::abs(out.data(t, o) - std::log(std::max(std::max(a, 0.0), kLogFloor))) < 1e-10);
    }
}

TEST_CASE("frame stacking") {
  FeatureTensor x;
  x.stage = Stage::log_mfb;
  x.data.resize(7, 64);
  for (Eigen::Index i = 0; i < x.data.size(); ++i) x.data.data()[i] = double(i);
  x.shape = {7, 64};
  const auto s = stack_frames(x);
  CHECK(s.frames() == 2);
  CHECK(s.data.cols() == 192);
  CHECK(s.frame_rate == doctest::Approx(100.0 / 3.0));
  CHECK(s.data.row(0).segment(0, 64) == x.data.row(0));
  CHECK(s.data.row(0).segment(64, 64) == x.data.row(1));
  CHECK(s.data.row(0).segment(128, 64) == x.data.row(2));
  CHECK(s.data.row(1).segment(128, 64) == x.data.row(5));
  x.data.conservativeResize(6, 64);
  CHECK(stack_frames(x).frames() == 2);
  x.data.resize(0, 64);
  CHECK(stack_frames(x).frames() == 0);
}

TEST_CASE("end-to-end shape contract") {
  const auto fe = default_multichannel();
  NormStats unit{Vec::Zero(508), Vec::Ones(508)};
  for (std::size_t n : {160u, 479u, 480u, 1000u, 4800u, 4801u}) {
    std::vector<std::vector<double>> x(2, std::vector<double>(n));
    Rng rng(n);
    for (auto& ch : x)
      for (auto& v : ch) v = 0.1 * rng.normal();
    const auto out = frontend_forward(fe, normalize(stft_of(x), unit));
    const std::size_t frames = (n - 160) / 160 + 1;
    CHECK(out.frames() == frames / 3);
    CHECK(out.data.cols() == 192);
    CHECK(out.data.allFinite());
  }
}

namespace {

double linear_loss(const FrontendParams& p, const FeatureTensor& x, const Mat& r) {
  return (frontend_forward(p, x).data.array() * r.array()).sum();
}

}  // namespace

TEST_CASE("front-end gradients match central differences") {
  Rng rng(21);
  for (auto kind : {FrontendKind::multi_channel, FrontendKind::single_channel}) {
    CAPTURE(int(kind));
    FrontendParams p = kind == FrontendKind::multi_channel ? default_multichannel()
                                                           : make_single_channel_frontend(127, 64, 16000.0, 2);
    // Move away from the structured initialization so every coordinate matters.
    for (auto& g : p.groups()) {
      for (double& v : g.values) v += 0.01 * rng.normal() * (g.name == "mfb.weight" ? 0.1 : 1.0);
    }
    const auto x = random_stft(rng, 5, 2, 127);
    Mat r(1, 192);
    for (Eigen::Index i = 0; i < r.size(); ++i) r.data()[i] = rng.normal();

    FrontendCache cache;
    const auto out = frontend_forward(p, x, &cache);
    REQUIRE(out.frames() == 1);
    const auto grads = frontend_backward(r, cache, p, TrainableGroups::all(), true);

    FrontendParams g = grads.params;
    auto gs = g.groups();
    auto ps = p.groups();
    for (std::size_t i = 0; i < ps.size(); ++i) {
      CAPTURE(ps[i].name);
      const auto res = testing::check_coordinates(ps[i].values, gs[i].values,
                                                  [&] { return linear_loss(p, x, r); }, 20, rng);
      CHECK(res.worst_rel < 1e-3);
    }
    FeatureTensor xm = x;
    const auto res = testing::check_coordinates(
        {xm.data.data(), std::size_t(xm.data.size())},
        {grads.input.data(), std::size_t(grads.input.size())},
        [&] { return linear_loss(p, xm, r); }, 20, rng);
    CHECK(res.worst_rel < 1e-3);
  }
}

TEST_CASE("front-end backward contracts") {
  Rng rng(5);
  auto p = default_multichannel();
  const auto x = random_stft(rng, 6, 2, 127);
  FrontendCache cache;
  frontend_forward(p, x, &cache);
  auto zero = frontend_backward(Mat::Zero(2, 192), cache, p);
  for (auto& g : zero.params.groups()) {
    for (double v : g.values) REQUIRE(v == 0.0);
  }
  Mat r = Mat::Ones(2, 192);
  TrainableGroups only_mfb{false, false, true, true};
  auto frozen = frontend_backward(r, cache, p, only_mfb);
  for (auto& g : frozen.params.groups()) {
    CAPTURE(g.name);
    const bool any = std::any_of(g.values.begin(), g.values.end(), [](double v) { return v != 0.0; });
    CHECK(any == (g.name.rfind("mfb", 0) == 0));
  }
  CHECK_THROWS_AS(frontend_backward(r, FrontendCache{}, p), UsageError);
}

TEST_CASE("beamformed power peaks at the source direction") {
  // Broadband plane wave plus approximately diffuse noise (many random plane
  // waves), all rendered as exact sums of sinusoids.
  const auto geom = ArrayGeometry::circular7();
  const SubarraySelection ring{{0, 1, 2, 3, 4, 5}};
  const auto dirs = default_look_directions(12);
  const auto bank = build_bank(geom, ring, dirs, 256);
  FrontendParams fe;
  fe.channels = 6;
  fe.bins = 127;
  fe.dirs = 12;
  fe.block_affine = bank_to_block_affine(bank);
  Rng rng(17);
  const std::size_t n = 3200;

  auto render = [&](const LookDirection& dir, double amp, std::vector<std::vector<double>>& x) {
    const auto tau = plane_wave_delays(geom, ring, dir);
    for (int comp = 0; comp < 40; ++comp) {
      const double f = rng.uniform(500, 7000), ph = rng.uniform(0, 2 * std::numbers::pi);
      for (std::size_t m = 0; m < ring.size(); ++m)
        for (std::size_t i = 0; i < n; ++i)
          x[m][i] += amp * std::sin(2 * std::numbers::pi * f * (double(i) / 16000.0 - tau[m]) + ph);
    }
  };
  for (std::size_t target : {1u, 5u, 8u}) {
    std::vector<std::vector<double>> x(ring.size(), std::vector<double>(n, 0.0));
    const double az = dirs[target].azimuth + 0.1;
    render({az, 0.0}, 1.0, x);
    for (int s = 0; s < 30; ++s) {
      render({rng.uniform(0, 2 * std::numbers::pi), std::asin(rng.uniform(-1, 1))}, 0.15, x);
    }
    const auto beam = block_affine_forward(stft_of(x), fe.block_affine);
    const auto pw = power(beam, 12, 127);
    Eigen::VectorXd per_dir = Eigen::VectorXd::Zero(12);
    for (Eigen::Index d = 0; d < 12; ++d) per_dir(d) = pw.data.middleCols(d * 127, 127).sum();
    Eigen::Index best = 0;
    per_dir.maxCoeff(&best);
    CHECK(std::size_t(best) == target);
  }
}
