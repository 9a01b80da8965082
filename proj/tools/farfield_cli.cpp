#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "farfield/config.hpp"
#include "farfield/errors.hpp"
#include "farfield/experiments.hpp"
#include "farfield/wav.hpp"

namespace fs = std::filesystem;
using namespace farfield;

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string run_dir;
  bool quiet = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "JSON experiment config");
  cmd->add_option("--seed", c.seed, "Corpus and training seed");
  cmd->add_option("--run-dir", c.run_dir, "Output directory (default runs/<command>-<hash>)");
  cmd->add_flag("--quiet", c.quiet, "No progress on stderr");
}

ExperimentConfig resolve_config(const Common& c, std::optional<ExperimentKind> kind) {
  ExperimentConfig cfg = c.config_path.empty() ? ExperimentConfig{} : load_config(c.config_path);
  if (c.seed) {
    cfg.corpus.seed = *c.seed;
    cfg.train.seed = *c.seed;
  }
  if (kind) cfg.experiment = *kind;
  cfg.validate();
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw IoError("cannot write " + path.string());
}

class Run {
 public:
  Run(const Common& c, const std::string& command, ExperimentConfig cfg)
      : lab_(std::move(cfg)),
        dir_(c.run_dir.empty() ? fs::path("runs") / (command + "-" + lab_.hash()) : fs::path(c.run_dir)),
        quiet_(c.quiet),
        t0_(std::chrono::steady_clock::now()) {
    fs::create_directories(dir_);
    log_.open(dir_ / "run.log", std::ios::app);
    if (!log_) throw IoError("cannot write " + (dir_ / "run.log").string());
    write_text(dir_ / "config.json", config_to_json(lab_.config(), 2) + "\n");
    lab_.set_logger([this](const std::string& m) { note(m); });
    note(command + " config " + lab_.hash());
  }

  Lab& lab() { return lab_; }
  const fs::path& dir() const { return dir_; }

  void note(const std::string& msg) {
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
    char stamp[32];
    std::snprintf(stamp, sizeof stamp, "[%8.1f] ", s);
    log_ << stamp << msg << "\n" << std::flush;
    if (!quiet_) std::cerr << stamp << msg << "\n";
  }

  void report(const DegradationReport& rep, const std::string& stem) {
    emit_report(rep, (dir_ / stem).string());
    std::cout << report_to_table(rep);
    note("wrote " + (dir_ / (stem + ".csv")).string());
  }

  void save_models() {
    fs::create_directories(dir_ / "models");
    for (auto kind : {ModelKind::multi_channel, ModelKind::single_channel}) {
      for (const auto& cond : trained_conditions()) {
        const TrainResult* tr = lab_.training_log(kind, cond);
        if (!tr) continue;
        const std::string stem = std::string(kind == ModelKind::multi_channel ? "multi" : "single") + "-" +
                                 cond.name();
        save_checkpoint((dir_ / "models" / (stem + ".ffck")).string(), lab_.model(kind, cond));
        write_train_log((dir_ / "models" / (stem + "-train.csv")).string(), *tr);
      }
    }
  }

 private:
  std::vector<TrainingCondition> trained_conditions() const {
    std::vector<TrainingCondition> out = {TrainingCondition::uncompressed(), TrainingCondition::mixed()};
    for (int k : supported_kbps()) out.push_back(TrainingCondition::matched(Bitrate::kbps(k)));
    return out;
  }

  Lab lab_;
  fs::path dir_;
  bool quiet_;
  std::chrono::steady_clock::time_point t0_;
  std::ofstream log_;
};

void gen_corpus(Run& run) {
  const Corpus& corpus = run.lab().corpus();
  std::ofstream manifest(run.dir() / "manifest.csv");
  manifest << "split,index,file,snr_db,azimuth,condition,labels\n";
  for (auto split : {Split::train, Split::dev, Split::test}) {
    const fs::path sub = run.dir() / "audio" / split_name(split);
    fs::create_directories(sub);
    for (const auto& u : corpus.split(split)) {
      const std::string name = "utt" + std::to_string(u.index) + ".wav";
      write_wav((sub / name).string(), u.audio);
      manifest << split_name(split) << ',' << u.index << ",audio/" << split_name(split) << '/' << name << ','
               << u.snr_db << ',' << u.azimuth << ','
               << (snr_condition(u.snr_db) == SnrCondition::clean ? "clean" : "noisy") << ',';
      for (std::size_t i = 0; i < u.labels.size(); ++i) manifest << (i ? " " : "") << u.labels[i];
      manifest << '\n';
    }
  }
  if (!manifest) throw IoError("cannot write manifest");
  run.note("wrote " + std::to_string(corpus.train.size() + corpus.dev.size() + corpus.test.size()) +
           " utterances");
}

TrainingCondition parse_condition(const std::string& text) {
  if (text == "mixed") return TrainingCondition::mixed();
  const Bitrate r = Bitrate::parse(text);
  return r.is_uncompressed() ? TrainingCondition::uncompressed() : TrainingCondition::matched(r);
}

ModelKind parse_kind(const std::string& text) {
  if (text == "multi") return ModelKind::multi_channel;
  if (text == "single") return ModelKind::single_channel;
  throw UsageError("model kind must be multi or single, got " + text);
}

void train(Run& run, ModelKind kind, const TrainingCondition& cond) {
  auto& lab = run.lab();
  lab.model(kind, cond);
  run.save_models();
  const auto fer = lab.evaluate(kind, cond, lab.uniform_plan(kind, Bitrate::uncompressed()));
  char line[160];
  std::snprintf(line, sizeof line, "test FER %.2f%% (clean %.2f%%, noisy %.2f%%) over %zu frames", fer.overall,
                fer.clean, fer.noisy, fer.frames);
  run.note(line);
  std::cout << line << "\n";
}

void transcode_file(const std::string& in, const std::string& out, const std::string& plan_text,
                    const std::string& dump_stem) {
  const AudioClip clip = read_wav(in);
  const BitratePlan plan = BitratePlan::parse(plan_text);
  if (plan.per_channel.size() != clip.num_channels()) {
    throw UsageError("plan has " + std::to_string(plan.per_channel.size()) + " rates for " +
                     std::to_string(clip.num_channels()) + " channels");
  }
  write_wav(out, transcode(clip, plan));
  if (!dump_stem.empty()) {
    for (std::size_t c = 0; c < clip.num_channels(); ++c) {
      if (plan.per_channel[c].is_uncompressed()) continue;
      dump_packets(dump_stem + ".ch" + std::to_string(c) + ".ffop",
                   encode_channel(clip.channels[c], clip.sample_rate, plan.per_channel[c].kbps_value()),
                   clip.sample_rate);
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Far-field acoustic front ends under OPUS compression"};
  app.require_subcommand(1);

  Common common;
  std::string kind_text = "multi", cond_text = "u";
  std::string report_in, wav_in, wav_out, plan_text, dump_stem;

  auto* gen = app.add_subcommand("gen-corpus", "Write the synthetic corpus as WAV files plus a manifest");
  auto* tr = app.add_subcommand("train", "Train one acoustic model and save its checkpoint");
  tr->add_option("--model", kind_text, "multi or single")->check(CLI::IsMember({"multi", "single"}));
  tr->add_option("--condition", cond_text, "u, a kbps rate, or mixed");
  auto* sweep = app.add_subcommand("sweep", "Uniform bitrate sweep of the multi-channel model");
  auto* svm = app.add_subcommand("single-vs-multi", "Single vs multi-channel at equal budgets");
  auto* alloc = app.add_subcommand("allocate", "Per-channel bandwidth allocation plans");
  auto* mixed = app.add_subcommand("mixed-train", "Uncompressed, matched and mixed-bitrate training");
  for (auto* cmd : {gen, tr, sweep, svm, alloc, mixed}) add_common(cmd, common);

  auto* rep = app.add_subcommand("report", "Print a report CSV as a table");
  rep->add_option("csv", report_in, "Report CSV")->required()->check(CLI::ExistingFile);

  auto* tc = app.add_subcommand("transcode", "Transcode a WAV file under a per-channel plan");
  tc->add_option("--in", wav_in, "Input WAV")->required()->check(CLI::ExistingFile);
  tc->add_option("--out", wav_out, "Output WAV")->required();
  tc->add_option("--plan", plan_text, "Per-channel rates, e.g. u,8")->required();
  tc->add_option("--dump-packets", dump_stem, "Write encoded packets to <stem>.ch<N>.ffop");

  CLI11_PARSE(app, argc, argv);

  try {
    if (rep->parsed()) {
      std::cout << report_to_table(load_report(report_in));
      return 0;
    }
    if (tc->parsed()) {
      transcode_file(wav_in, wav_out, plan_text, dump_stem);
      return 0;
    }
    const auto* cmd = app.get_subcommands().front();
    std::optional<ExperimentKind> kind;
    if (cmd == tr) kind = ExperimentKind::train;
    if (cmd == sweep) kind = ExperimentKind::sweep;
    if (cmd == svm) kind = ExperimentKind::single_vs_multi;
    if (cmd == alloc) kind = ExperimentKind::allocation;
    if (cmd == mixed) kind = ExperimentKind::mixed_training;
    Run run(common, cmd->get_name(), resolve_config(common, kind));

    if (cmd == gen) gen_corpus(run);
    if (cmd == tr) train(run, parse_kind(kind_text), parse_condition(cond_text));
    if (cmd == sweep) run.report(run_bitrate_sweep(run.lab()), "sweep");
    if (cmd == svm) run.report(run_single_vs_multi(run.lab()), "single_vs_multi");
    if (cmd == alloc) run.report(run_allocation(run.lab()), "allocation");
    if (cmd == mixed) run.report(run_mixed_training(run.lab()), "mixed_training");
    if (cmd != gen && cmd != tr) run.save_models();
    return 0;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
