#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <set>

#include "farfield/config.hpp"
#include "farfield/corpus.hpp"
#include "farfield/errors.hpp"
#include "farfield/experiments.hpp"
#include "farfield/report.hpp"

#include <unsupported/Eigen/FFT>

using namespace farfield;

namespace {

SyntheticCorpusConfig small_corpus() {
  SyntheticCorpusConfig c;
  c.num_utterances = 10;
  c.utterance_seconds = 1.0;
  c.num_classes = 8;
  c.seed = 5;
  return c;
}

ExperimentConfig tiny_experiment() {
  ExperimentConfig e;
  e.corpus = small_corpus();
  e.corpus.num_utterances = 20;
  e.model = {1, 8, 8, 192};
  e.train.epochs = 1;
  e.budget_points = {8, 64};
  e.sweep_rates = {Bitrate::kbps(8), Bitrate::kbps(128)};
  e.allocation_plans = {BitratePlan::parse("u,8"), BitratePlan::parse("144,144")};
  e.mixed_test_rates = {Bitrate::kbps(16), Bitrate::uncompressed()};
  return e;
}

}  // namespace

TEST_CASE("diffuse noise has unit power and sinc coherence") {
  const auto geom = ArrayGeometry::circular7();
  const SubarraySelection pair{{0, 3}};
  const std::size_t n = 256 * 400;
  const auto x = diffuse_noise(geom, pair, n, 17);
  REQUIRE(x.size() == 2);
  for (const auto& ch : x) {
    double p = 0.0;
    for (double v : ch) p += v * v;
    CHECK(std::abs(p / double(n) - 1.0) < 1e-9);
  }
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> s01(129), s00(129), s11(129);
  for (std::size_t b = 0; b + 256 <= n; b += 256) {
    std::vector<double> a(x[0].begin() + long(b), x[0].begin() + long(b + 256));
    std::vector<double> c(x[1].begin() + long(b), x[1].begin() + long(b + 256));
    std::vector<std::complex<double>> A, C;
    fft.fwd(A, a);
    fft.fwd(C, c);
    for (std::size_t k = 0; k < 129; ++k) {
      s01[k] += A[k] * std::conj(C[k]);
      s00[k] += std::norm(A[k]);
      s11[k] += std::norm(C[k]);
    }
  }
  // Mics 0 and 3 sit 72 mm apart on the x axis.
  for (std::size_t k : {4, 16, 40, 80, 120}) {
    const double f = double(k) * 16000.0 / 256.0;
    const double kd = 2 * std::numbers::pi * f * 0.072 / 343.0;
    const double expected = std::sin(kd) / kd;
    const auto coh = s01[k] / std::sqrt(s00[k].real() * s11[k].real());
    CAPTURE(f);
    CHECK(std::abs(coh.real() - expected) < 0.1);
    CHECK(std::abs(coh.imag()) < 0.1);
  }
}

TEST_CASE("corpus configuration") {
  auto c = small_corpus();
  CHECK_NOTHROW(c.validate());
  CHECK(c.samples_per_utterance() == 15840);
  c.utterance_seconds = 0.02;
  CHECK_THROWS_AS(c.validate(), std::domain_error);
  c = small_corpus();
  c.snr_range_db = {-20, 10};
  CHECK_THROWS_AS(c.validate(), std::domain_error);
  c = small_corpus();
  c.num_classes = 0;
  CHECK_THROWS_AS(c.validate(), std::domain_error);
  CHECK(small_corpus().selection().mic_indices == std::vector<std::size_t>{0, 3});
}

TEST_CASE("corpus is deterministic and split 80/10/10") {
  const auto a = generate_corpus(small_corpus());
  const auto b = generate_corpus(small_corpus());
  REQUIRE(a.train.size() == 8);
  CHECK(a.dev.size() == 1);
  CHECK(a.test.size() == 1);
  std::set<std::size_t> ids;
  for (auto s : {Split::train, Split::dev, Split::test}) {
    for (std::size_t i = 0; i < a.split(s).size(); ++i) {
      CHECK(a.split(s)[i].audio == b.split(s)[i].audio);
      CHECK(a.split(s)[i].labels == b.split(s)[i].labels);
      ids.insert(a.split(s)[i].index);
    }
  }
  CHECK(ids.size() == 10);
  auto other = small_corpus();
  other.seed = 6;
  CHECK(generate_corpus(other).train[0].audio != a.train[0].audio);
}

TEST_CASE("utterance contents") {
  auto cfg = small_corpus();
  const auto classes = make_class_table(cfg.num_classes, cfg.seed);
  for (std::size_t idx = 0; idx < 6; ++idx) {
    UtteranceReferences refs;
    const auto u = generate_utterance(cfg, classes, idx, &refs);
    CHECK(u.audio.num_channels() == 2);
    CHECK(u.audio.num_samples() == cfg.samples_per_utterance());
    CHECK(u.labels.size() == cfg.samples_per_utterance() / kLabelHop);
    CHECK(u.snr_db >= cfg.snr_range_db.lo - 1e-9);
    CHECK(u.snr_db <= cfg.snr_range_db.hi + 1e-9);
    CHECK(u.snr_db == doctest::Approx(snr_db(refs.clean, refs.noise)));
    for (int l : u.labels) CHECK((l >= 0 && l < int(cfg.num_classes)));
  }
}

TEST_CASE("direct component carries the geometric inter-channel delay") {
  auto cfg = small_corpus();
  const auto classes = make_class_table(cfg.num_classes, cfg.seed);
  const auto sel = cfg.selection();
  for (std::size_t idx = 0; idx < 8; ++idx) {
    UtteranceReferences refs;
    const auto u = generate_utterance(cfg, classes, idx, &refs);
    const auto tau = plane_wave_delays(cfg.geometry, sel, LookDirection{u.azimuth, 0.0});
    const double expected = (tau[1] - tau[0]) * cfg.geometry.sample_rate;
    const auto [corr, lag] = max_normalized_xcorr(refs.clean[0], refs.clean[1], 8);
    CAPTURE(expected);
    CHECK(std::abs(double(lag) - expected) <= 1.0);
    CHECK(corr > 0.5);
  }
}

TEST_CASE("labels follow the class active at each frame start") {
  // Nearest class envelope of the clean 30 ms spectrum at high SNR.
  auto cfg = small_corpus();
  cfg.snr_range_db = {30, 30};
  const auto classes = make_class_table(cfg.num_classes, cfg.seed);
  std::size_t agree = 0, total = 0;
  for (std::size_t idx = 0; idx < 4; ++idx) {
    UtteranceReferences refs;
    const auto u = generate_utterance(cfg, classes, idx, &refs);
    for (std::size_t t = 0; t < u.labels.size(); ++t) {
      std::vector<double> spec(232);
      for (std::size_t k = 0; k < spec.size(); ++k) {
        std::complex<double> acc = 0;
        for (std::size_t n = 0; n < kLabelHop; ++n) {
          const double w = 0.5 - 0.5 * std::cos(2 * std::numbers::pi * double(n) / kLabelHop);
          acc += w * refs.clean[0][t * kLabelHop + n] *
                 std::polar(1.0, -2 * std::numbers::pi * double((k + 4) * n) / 480.0);
        }
        spec[k] = std::log(std::norm(acc) + 1e-12);
      }
      int best = -1;
      double best_score = -1e300;
      for (std::size_t c = 0; c < classes.size(); ++c) {
        std::vector<double> env(spec.size());
        double me = 0, ms = 0;
        for (std::size_t k = 0; k < spec.size(); ++k) {
          env[k] = 2 * std::log(classes[c].envelope(double(k + 4) * 16000.0 / 480.0));
          me += env[k];
          ms += spec[k];
        }
        me /= double(spec.size());
        ms /= double(spec.size());
        double score = 0;
        for (std::size_t k = 0; k < spec.size(); ++k) score += (env[k] - me) * (spec[k] - ms);
        if (score > best_score) {
          best_score = score;
          best = int(c);
        }
      }
      agree += best == u.labels[t];
      ++total;
    }
  }
  CHECK(double(agree) / double(total) > 0.8);
}

TEST_CASE("codec fidelity is monotone in bitrate on corpus audio") {
  const auto corpus = generate_corpus(small_corpus());
  double prev = -1.0;
  for (int r : {8, 16, 32, 64, 128}) {
    double sum = 0;
    std::size_t n = 0;
    for (const auto& u : corpus.train) {
      const auto out = transcode(u.audio, BitratePlan::uniform(2, Bitrate::kbps(r)));
      const auto a = u.audio.to_double(), b = out.to_double();
      for (std::size_t c = 0; c < 2; ++c, ++n) sum += max_normalized_xcorr(a[c], b[c], 2).first;
    }
    const double mean = sum / double(n);
    CAPTURE(r);
    CHECK(mean >= prev);
    prev = mean;
  }
}

TEST_CASE("relative degradation") {
  CHECK(relative_degradation(8.0, 9.008) == doctest::Approx(12.6));
  CHECK(relative_degradation(10.0, 30.21) == doctest::Approx(202.1));
  CHECK(relative_degradation(7.0, 7.0) == 0.0);
  CHECK(relative_degradation(10.0, 9.0) == doctest::Approx(-10.0));
  CHECK_THROWS_AS(relative_degradation(0.0, 1.0), std::domain_error);
}

TEST_CASE("chi-square tail") {
  CHECK(chi_square_sf(13.2767, 4) == doctest::Approx(0.01).epsilon(1e-3));
  CHECK(chi_square_sf(3.841459, 1) == doctest::Approx(0.05).epsilon(1e-4));
  for (double x : {0.5, 3.0, 12.0}) CHECK(chi_square_sf(x, 2) == doctest::Approx(std::exp(-x / 2)).epsilon(1e-10));
  CHECK(chi_square_sf(0.0, 3) == 1.0);
}

TEST_CASE("mixed bitrate sampler") {
  const std::vector<Bitrate> set = {Bitrate::uncompressed(), Bitrate::kbps(16), Bitrate::kbps(32),
                                    Bitrate::kbps(64), Bitrate::kbps(128)};
  const auto draws = mixed_bitrate_sampler(10000, set, 3);
  CHECK(draws.size() == 10000);
  CHECK(chi_square_uniformity(draws, set).p_value > 0.01);
  CHECK(draws == mixed_bitrate_sampler(10000, set, 3));
  CHECK(draws != mixed_bitrate_sampler(10000, set, 4));
  const auto one = mixed_bitrate_sampler(100, {Bitrate::kbps(32)}, 1);
  for (const auto& d : one) CHECK(d == Bitrate::kbps(32));
  CHECK_THROWS_AS(mixed_bitrate_sampler(10, {}, 1), std::domain_error);
  // A biased stream fails.
  std::vector<Bitrate> biased(draws.begin(), draws.end());
  for (std::size_t i = 0; i < 600; ++i) biased[i] = set[0];
  CHECK(chi_square_uniformity(biased, set).p_value < 0.01);
}

TEST_CASE("report csv and table") {
  DegradationReport rep;
  rep.rows.push_back({"sweep", "uncompressed", 20.0, std::nullopt, std::nullopt, std::nullopt, 1, "abc"});
  rep.rows.push_back({"sweep", "8 kbps", 60.42, 202.1, 150.0 / 7.0, -0.1, 1, "abc"});
  rep.rows.push_back({"x", "a, \"quoted\" cell", 0.1 + 0.2, 1e-300, 0.0, 12.25, 7, "abc"});
  const auto csv = report_to_csv(rep);
  CHECK(csv.rfind("experiment,condition,absolute_metric,rel_degradation,clean,noisy,seed,config_hash\n", 0) == 0);
  CHECK(csv.find("sweep,uncompressed,20,-,-,-,1,abc") != std::string::npos);
  CHECK(report_from_csv(csv) == rep);
  const auto table = report_to_table(rep);
  CHECK(table.find("202.1") != std::string::npos);
  CHECK(table.find("60.4") != std::string::npos);
  CHECK(table.find("21.4") != std::string::npos);
  CHECK(rep.row("8 kbps").absolute_metric == 60.42);
  CHECK_THROWS_AS(rep.row("missing"), std::out_of_range);
  CHECK_THROWS_AS(report_from_csv("bad header\n"), IoError);
  CHECK_THROWS_AS(emit_report(rep, "/nonexistent/dir/report"), IoError);
  const auto stem = (std::filesystem::temp_directory_path() / "farfield_report").string();
  emit_report(rep, stem);
  CHECK(load_report(stem + ".csv") == rep);
}

TEST_CASE("config json and hash") {
  ExperimentConfig c;
  const auto text = config_to_json(c);
  const auto back = config_from_json(text);
  CHECK(config_to_json(back) == text);
  CHECK(config_hash(back) == config_hash(c));
  auto changed = c;
  changed.allocation_plans[0] = BitratePlan::parse("u,16");
  CHECK(config_hash(changed) != config_hash(c));
  changed = c;
  changed.sweep_rates[1] = Bitrate::kbps(64);
  CHECK(config_hash(changed) != config_hash(c));
  CHECK(fnv1a_hex("") == "cbf29ce484222325");
  CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
  CHECK_THROWS_AS(config_from_json(R"({"bogus": 1})"), std::domain_error);
  CHECK_THROWS_AS(config_from_json(R"({"corpus": {"num_utterances": 0}})"), std::domain_error);
  CHECK_THROWS_AS(config_from_json(R"({"allocation_plans": ["u,24"]})"), std::domain_error);
  const auto partial = config_from_json(R"({"corpus": {"num_classes": 12}, "train": {"epochs": 3}})");
  CHECK(partial.model.num_classes == 12);
  CHECK(partial.train.epochs == 3);
  const auto sized = config_from_json(R"({"corpus": {"num_classes": 6}, "frontend": {"num_filters": 20},
                                          "model": {"cells_per_layer": 8}})");
  CHECK(sized.model.num_classes == 6);
  CHECK(sized.model.input_dim == 60);
  CHECK(sized.model.cells_per_layer == 8);
  CHECK_NOTHROW(sized.validate());
  const auto plans = default_allocation_plans();
  REQUIRE(plans.size() == 10);
  CHECK(plans[0].total_budget_kbps() == 264);
  CHECK(plans[4].total_budget_kbps() == 384);
  CHECK(plans[9].total_budget_kbps() == 384);
}

TEST_CASE("experiments end to end at toy scale") {
  Lab lab(tiny_experiment());
  const auto sweep = run_bitrate_sweep(lab);
  REQUIRE(sweep.rows.size() == 3);
  CHECK_FALSE(sweep.rows[0].rel_degradation.has_value());
  CHECK(sweep.rows[0].config_hash == lab.hash());
  CHECK(sweep.row("8 kbps").rel_degradation.has_value());
  CHECK(lab.training_log(ModelKind::multi_channel, TrainingCondition::uncompressed()) != nullptr);

  const auto svm = run_single_vs_multi(lab);
  // x = 64 per channel pairs with the single-channel model at 128.
  CHECK_NOTHROW(svm.row("budget 128 single 128"));
  CHECK_NOTHROW(svm.row("budget 128 multi 64+64"));
  CHECK_NOTHROW(svm.row("budget 16 advantage"));

  const auto alloc = run_allocation(lab);
  CHECK(alloc.rows[0].condition == "u+u (512)");
  CHECK(alloc.rows[1].condition == "u+8 (264)");
  CHECK(alloc.rows[2].condition == "144+144 (288)");

  const auto mixed = run_mixed_training(lab);
  CHECK_NOTHROW(mixed.row("test 16 train mixed"));
  CHECK(mixed.row("test uncompressed train matched").rel_degradation == 0.0);

  Lab again(tiny_experiment());
  CHECK(report_to_csv(run_bitrate_sweep(again)) == report_to_csv(sweep));
}
