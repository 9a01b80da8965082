// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Reports are written to the directory given as the first argument
// (default: acceptance_out).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>

#include "farfield/experiments.hpp"
#include "farfield/rng.hpp"
#include "grad_check.hpp"

using namespace farfield;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;
std::map<int, std::string> lines;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void verdict(int id, const char* title, bool ok, const std::string& detail) {
  lines[id] = std::string(ok ? "PASS" : "FAIL") + " " + std::to_string(id) + " " + title + ": " + detail;
  std::fprintf(stderr, "%s\n", lines[id].c_str());
  if (!ok) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

void beamformer_correctness() {
  const auto t0 = Clock::now();
  const auto geom = ArrayGeometry::circular7();
  const auto sel = select_opposite_pair(geom);
  const auto dirs = default_look_directions(12);
  const auto bank = build_bank(geom, sel, dirs, 256);
  const bool shape = bank.num_bins() == 127 && bank.num_directions() == 12 && bank.num_mics() == 2;
  const double max_err = max_distortionless_error(bank, geom, sel, dirs);

  Rng rng(20240);
  std::size_t trials = 0, beaten = 0;
  for (std::size_t k = 0; k < bank.num_bins(); k += 7) {
    const double f = bank.bin_frequencies()[k];
    const Eigen::MatrixXcd r =
        (diffuse_coherence(geom, sel, f) + kDefaultDiagonalLoading * Eigen::MatrixXd::Identity(2, 2))
            .cast<std::complex<double>>();
    for (std::size_t d = 0; d < dirs.size(); ++d) {
      const Eigen::VectorXcd steer = steering_vector(geom, sel, dirs[d], f);
      const Eigen::VectorXcd w = bank.weight_vector(k, d);
      const double best = w.dot(r * w).real();
      for (int i = 0; i < 100; ++i) {
        Eigen::VectorXcd z(steer.size());
        for (Eigen::Index j = 0; j < z.size(); ++j) z(j) = {rng.normal(), rng.normal()};
        z -= steer * (steer.dot(z) / steer.squaredNorm());
        const Eigen::VectorXcd v = steer / steer.squaredNorm() + z * rng.uniform(0.01, 2.0);
        ++trials;
        if (std::abs(v.dot(steer) - 1.0) < 1e-9 && best <= v.dot(r * v).real()) ++beaten;
      }
    }
  }
  const double t = seconds_since(t0);
  verdict(1, "beamformer correctness", shape && max_err < 1e-9 && beaten == trials && t < 10.0,
          fmt("127x12x2 bank %s, max |w^H d - 1| = %.2e (< 1e-9), superdirective beats %zu/%zu "
              "distortionless competitors, %.2f s (< 10 s)",
              shape ? "ok" : "WRONG SHAPE", max_err, beaten, trials, t));
}

void gradient_fidelity() {
  const auto t0 = Clock::now();
  SyntheticCorpusConfig cc;
  cc.utterance_seconds = 0.3;
  const auto classes = make_class_table(cc.num_classes, cc.seed);
  std::vector<Utterance> utts{generate_utterance(cc, classes, 0)};
  auto clips = std::make_shared<std::vector<AudioClip>>(std::vector<AudioClip>{utts[0].audio});
  const Dataset data = make_dataset(clips, utts);
  const LabeledFeatures ex = data.get(0);

  const auto geom = cc.geometry;
  Network net;
  NormAccumulator acc;
  acc.add(ex.stft.data);
  net.norm = acc.finish();
  net.frontend = make_multichannel_frontend(
      build_bank(geom, select_opposite_pair(geom), default_look_directions(12), 256), 64, 16000.0);
  net.model = init_model({1, 8, cc.num_classes, 192}, 77);
  Rng rng(4242);
  // Move off the initialization so no coordinate sits on a symmetric point.
  for (auto& g : net.frontend.groups())
    for (double& v : g.values) v += 0.01 * rng.normal() * (g.name == "mfb.weight" ? 0.1 : 1.0);

  const auto grads = example_gradients(net, ex, TrainableGroups::all());
  auto loss = [&] { return example_gradients(net, ex, TrainableGroups::lstm_only()).loss; };
  double worst = 0.0;
  std::string worst_name;
  std::size_t layers = 0, coords = 0;
  auto run = [&](std::vector<ParamSpan> params, const std::vector<ParamSpan>& analytic) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto r = testing::check_coordinates(params[i].values, analytic[i].values, loss, 20, rng);
      ++layers;
      coords += r.checked;
      if (r.worst_rel >= worst) {
        worst = r.worst_rel;
        worst_name = params[i].name;
      }
    }
  };
  auto fg = grads.frontend;
  auto mg = grads.model;
  run(net.frontend.groups(), fg.groups());
  run(net.model.groups(), mg.groups());
  const double t = seconds_since(t0);
  verdict(2, "gradient fidelity", worst < 1e-3 && t < 60.0,
          fmt("%zu coordinates over %zu parameter blocks (block affine, ESF, MFB, 1x8 LSTM, output), "
              "worst relative error %.2e in %s (< 1e-3), %.1f s (< 60 s)",
              coords, layers, worst, worst_name.c_str(), t));
}

void codec_bandwidth(Lab& lab) {
  const auto& test = lab.corpus().test;
  const std::size_t n = std::min<std::size_t>(20, test.size());
  const auto nb = lab.uniform_plan(ModelKind::multi_channel, Bitrate::kbps(8));
  const auto hi = lab.uniform_plan(ModelKind::multi_channel, Bitrate::kbps(128));
  double worst8 = 0.0, worst128 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& clip = test[i].audio;
    const auto r0 = band_energy_ratio(clip, 4500.0);
    const auto r8 = band_energy_ratio(transcode(clip, nb), 4500.0);
    const auto r128 = band_energy_ratio(transcode(clip, hi), 4500.0);
    for (std::size_t c = 0; c < r0.size(); ++c) {
      worst8 = std::max(worst8, r8[c]);
      worst128 = std::max(worst128, std::abs(r128[c] - r0[c]));
    }
  }
  verdict(3, "codec bandwidth", n == 20 && worst8 < 0.01 && worst128 < 0.1,
          fmt("%zu utterances x 2 channels: max energy ratio above 4.5 kHz at 8 kbps %.4f (< 0.01), "
              "max |ratio(128) - ratio(uncompressed)| %.4f (< 0.1)",
              n, worst8, worst128));
}

double deg(const DegradationReport& r, const std::string& cond) {
  return r.row(cond).rel_degradation.value();
}

void bitrate_sweep(const DegradationReport& rep, double full_run_s) {
  const double d8 = deg(rep, sweep_condition(Bitrate::kbps(8)));
  const double d16 = deg(rep, sweep_condition(Bitrate::kbps(16)));
  const double d32 = deg(rep, sweep_condition(Bitrate::kbps(32)));
  const double d128 = deg(rep, sweep_condition(Bitrate::kbps(128)));
  const bool order = d8 > d16 && d16 > d32 && d32 > d128 && d128 >= 0.0;
  const bool ratio = d8 >= 3.0 * d16;
  verdict(4, "bitrate sweep ordering", order && ratio && full_run_s < 1800.0,
          fmt("deg(8) %.2f%% > deg(16) %.2f%% > deg(32) %.2f%% > deg(128) %.2f%% >= 0: %s; "
              "deg(8)/deg(16) = %.2f (>= 3); full run %.0f s (< 1800 s)",
              d8, d16, d32, d128, order ? "yes" : "no", d16 != 0 ? d8 / d16 : INFINITY, full_run_s));
}

void single_vs_multi(const DegradationReport& rep, const std::vector<int>& budgets) {
  bool ok = true;
  std::string detail;
  for (int x : budgets) {
    const double m = rep.row(budget_condition(x, "multi")).absolute_metric;
    const double s = rep.row(budget_condition(x, "single")).absolute_metric;
    ok = ok && m <= s;
    detail += fmt("%s%d kbps: multi %.2f%% vs single %.2f%% (advantage %.1f%%)", detail.empty() ? "" : "; ",
                  2 * x, m, s, rep.row(budget_condition(x, "advantage")).absolute_metric);
  }
  detail += fmt("; reference advantage band 4-6%% (not asserted); single 256 vs multi 64+64 advantage %.1f%%",
                rep.row("single 256 vs multi 64+64 advantage").absolute_metric);
  verdict(5, "multi-channel beats single-channel at equal budget", ok, detail);
}

void allocation(const DegradationReport& rep) {
  auto plan = [](const char* text) { return plan_condition(BitratePlan::parse(text)); };
  const double u32 = deg(rep, plan("u,32")), e144 = deg(rep, plan("144,144"));
  const double u8 = deg(rep, plan("u,8")), e132 = deg(rep, plan("132,132"));
  verdict(6, "bandwidth allocation crossover", u32 < e144 && u8 > e132,
          fmt("(256,32) %.2f%% < (144,144) %.2f%%: %s; (256,8) %.2f%% > (132,132) %.2f%%: %s", u32, e144,
              u32 < e144 ? "yes" : "no", u8, e132, u8 > e132 ? "yes" : "no"));
}

void mixed_training(const DegradationReport& rep) {
  const auto r16 = Bitrate::kbps(16);
  const double base16 = deg(rep, mixed_condition(r16, "uncompressed"));
  const double matched16 = deg(rep, mixed_condition(r16, "matched"));
  const double mixed16 = deg(rep, mixed_condition(r16, "mixed"));
  const double mixed_u = deg(rep, mixed_condition(Bitrate::uncompressed(), "mixed"));
  verdict(7, "mixed-bitrate training", matched16 < base16 && mixed16 < base16 && mixed_u > 0.0,
          fmt("at 16 kbps: matched %.2f%% and mixed %.2f%% vs uncompressed-trained %.2f%%; "
              "mixed on uncompressed test %.2f%% (> 0)",
              matched16, mixed16, base16, mixed_u));
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void determinism(const ExperimentConfig& cfg, const fs::path& out) {
  const auto t0 = Clock::now();
  Lab again(cfg);
  const auto sweep = run_bitrate_sweep(again);
  const auto alloc = run_allocation(again);
  emit_report(sweep, (out / "rerun_sweep").string());
  emit_report(alloc, (out / "rerun_allocation").string());
  const bool s = read_file(out / "sweep.csv") == read_file(out / "rerun_sweep.csv");
  const bool a = read_file(out / "allocation.csv") == read_file(out / "rerun_allocation.csv");
  verdict(8, "determinism", s && a,
          fmt("fresh rerun (corpus, training, transcodes): sweep.csv %s, allocation.csv %s, %.0f s",
              s ? "byte-identical" : "DIFFERS", a ? "byte-identical" : "DIFFERS", seconds_since(t0)));
}

void sampler_uniformity(const ExperimentConfig& cfg) {
  const std::size_t n = 10000;
  const auto draws = mixed_bitrate_sampler(n, cfg.mixed_rate_set, 9);
  const auto chi = chi_square_uniformity(draws, cfg.mixed_rate_set);
  verdict(9, "sampler uniformity", draws.size() == n && chi.p_value > 0.01,
          fmt("%zu assignments for %zu utterances, chi-square %.2f on %zu dof, p = %.3f (> 0.01)", draws.size(),
              n, chi.statistic, chi.dof, chi.p_value));
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path out = argc > 1 ? argv[1] : "acceptance_out";
  fs::create_directories(out);
  const auto t0 = Clock::now();

  auto guarded = [](int id, const char* title, const std::function<void()>& f) {
    try {
      f();
    } catch (const std::exception& e) {
      verdict(id, title, false, std::string("exception: ") + e.what());
    }
  };

  guarded(1, "beamformer correctness", beamformer_correctness);
  guarded(2, "gradient fidelity", gradient_fidelity);

  const ExperimentConfig cfg;
  guarded(9, "sampler uniformity", [&] { sampler_uniformity(cfg); });

  Lab lab(cfg);
  lab.set_logger([t0](const std::string& m) { std::fprintf(stderr, "[%7.1f] %s\n", seconds_since(t0), m.c_str()); });
  guarded(3, "codec bandwidth", [&] { codec_bandwidth(lab); });

  const auto runs_t0 = Clock::now();
  DegradationReport sweep, svm, alloc, mixed;
  try {
    sweep = run_bitrate_sweep(lab);
    emit_report(sweep, (out / "sweep").string());
    svm = run_single_vs_multi(lab);
    emit_report(svm, (out / "single_vs_multi").string());
    alloc = run_allocation(lab);
    emit_report(alloc, (out / "allocation").string());
    mixed = run_mixed_training(lab);
    emit_report(mixed, (out / "mixed_training").string());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "experiment failed: %s\n", e.what());
  }
  const double full_run = seconds_since(runs_t0);
  for (const auto* r : {&sweep, &svm, &alloc, &mixed}) std::fputs(report_to_table(*r).c_str(), stderr);

  guarded(4, "bitrate sweep ordering", [&] { bitrate_sweep(sweep, full_run); });
  guarded(5, "multi-channel beats single-channel at equal budget", [&] { single_vs_multi(svm, cfg.budget_points); });
  guarded(6, "bandwidth allocation crossover", [&] { allocation(alloc); });
  guarded(7, "mixed-bitrate training", [&] { mixed_training(mixed); });
  guarded(8, "determinism", [&] { determinism(cfg, out); });

  for (const auto& [id, line] : lines) std::printf("%s\n", line.c_str());
  std::printf("%d of 9 criteria failed, %.0f s total\n", failures, seconds_since(t0));
  return failures == 0 ? 0 : 1;
}
