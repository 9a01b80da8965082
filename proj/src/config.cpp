#include "farfield/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "farfield/errors.hpp"
#include "farfield/report.hpp"

namespace farfield {

using nlohmann::json;

namespace {

json rates_json(const std::vector<Bitrate>& rates) {
  json a = json::array();
  for (const auto& r : rates) a.push_back(r.to_string());
  return a;
}

std::vector<Bitrate> rates_from(const json& j) {
  std::vector<Bitrate> out;
  for (const auto& v : j) out.push_back(v.is_number() ? Bitrate::kbps(v.get<int>()) : Bitrate::parse(v.get<std::string>()));
  return out;
}

// Reads `key` into `out` when present and records it as consumed.
template <typename T>
void take(const json& j, const char* key, T& out, std::vector<std::string>& seen) {
  seen.emplace_back(key);
  if (j.contains(key)) out = j.at(key).get<T>();
}

void reject_unknown(const json& j, const std::vector<std::string>& seen, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(seen.begin(), seen.end(), it.key()) == seen.end()) {
      throw std::domain_error("unknown config key '" + where + it.key() + "'");
    }
  }
}

json geometry_json(const ArrayGeometry& g) {
  json pos = json::array();
  for (const auto& p : g.mic_positions) pos.push_back({p.x(), p.y(), p.z()});
  return {{"mic_positions", pos}, {"speed_of_sound", g.speed_of_sound}, {"sample_rate", g.sample_rate}};
}

ArrayGeometry geometry_from(const json& j) {
  if (j.is_string()) return geometry_preset(j.get<std::string>());
  ArrayGeometry g;
  g.mic_positions.clear();
  for (const auto& p : j.at("mic_positions")) g.mic_positions.emplace_back(p.at(0), p.at(1), p.at(2));
  if (j.contains("speed_of_sound")) g.speed_of_sound = j.at("speed_of_sound");
  if (j.contains("sample_rate")) g.sample_rate = j.at("sample_rate");
  g.validate();
  return g;
}

}  // namespace

const char* experiment_name(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::train: return "train";
    case ExperimentKind::sweep: return "sweep";
    case ExperimentKind::single_vs_multi: return "single_vs_multi";
    case ExperimentKind::allocation: return "allocation";
    case ExperimentKind::mixed_training: return "mixed_training";
  }
  return "?";
}

ExperimentKind parse_experiment(const std::string& name) {
  for (auto k : {ExperimentKind::train, ExperimentKind::sweep, ExperimentKind::single_vs_multi,
                 ExperimentKind::allocation, ExperimentKind::mixed_training}) {
    if (name == experiment_name(k)) return k;
  }
  throw std::domain_error("unknown experiment '" + name + "'");
}

std::vector<BitratePlan> default_allocation_plans() {
  std::vector<BitratePlan> plans;
  for (int r : {8, 16, 32, 64, 128}) plans.push_back({{Bitrate::uncompressed(), Bitrate::kbps(r)}});
  for (int r : {132, 136, 144, 160, 192}) plans.push_back(BitratePlan::uniform(2, Bitrate::kbps(r)));
  return plans;
}

void ExperimentConfig::validate() const {
  corpus.validate();
  model.validate();
  train.validate();
  if (model.input_dim != frontend.num_filters * kStackFactor) {
    throw std::domain_error("model input_dim must equal 3 x num_filters");
  }
  if (model.num_classes != corpus.num_classes) throw std::domain_error("model and corpus class counts differ");
  if (frontend.look_directions == 0 || frontend.fft_size < 4) throw std::domain_error("bad front-end settings");
  const std::size_t channels = corpus.selection().size();
  for (const auto& p : allocation_plans) {
    if (p.per_channel.size() != channels) throw std::domain_error("allocation plan width != channel count");
  }
  for (int x : budget_points) {
    Bitrate::kbps(x);
    Bitrate::kbps(2 * x);
  }
  if (mixed_rate_set.empty()) throw std::domain_error("mixed rate set is empty");
}

std::string config_to_json(const ExperimentConfig& c, int indent) {
  json plans = json::array();
  for (const auto& p : c.allocation_plans) plans.push_back(p.to_string());
  json j = {
      {"experiment", experiment_name(c.experiment)},
      {"corpus",
       {{"num_utterances", c.corpus.num_utterances},
        {"utterance_seconds", c.corpus.utterance_seconds},
        {"num_classes", c.corpus.num_classes},
        {"snr_range_db", {c.corpus.snr_range_db.lo, c.corpus.snr_range_db.hi}},
        {"seed", c.corpus.seed},
        {"geometry", geometry_json(c.corpus.geometry)},
        {"mic_indices", c.corpus.mic_indices},
        {"min_segment_frames", c.corpus.min_segment_frames},
        {"max_segment_frames", c.corpus.max_segment_frames},
        {"signal_rms", c.corpus.signal_rms},
        {"diffuse_noise_fraction", c.corpus.diffuse_noise_fraction}}},
      {"frontend",
       {{"num_filters", c.frontend.num_filters},
        {"look_directions", c.frontend.look_directions},
        {"fft_size", c.frontend.fft_size},
        {"diagonal_loading", c.frontend.diagonal_loading}}},
      {"model",
       {{"num_layers", c.model.num_layers},
        {"cells_per_layer", c.model.cells_per_layer},
        {"num_classes", c.model.num_classes},
        {"input_dim", c.model.input_dim}}},
      {"train",
       {{"learning_rate", c.train.learning_rate},
        {"batch_size", c.train.batch_size},
        {"epochs", c.train.epochs},
        {"seed", c.train.seed},
        {"clip_norm", c.train.clip_norm},
        {"block_affine_lr_scale", c.train.block_affine_lr_scale},
        {"esf_lr_scale", c.train.esf_lr_scale},
        {"mfb_lr_scale", c.train.mfb_lr_scale},
        {"select_on_dev", c.train.select_on_dev},
        {"trainable",
         {{"block_affine", c.train.trainable.block_affine},
          {"esf", c.train.trainable.esf},
          {"mfb", c.train.trainable.mfb},
          {"lstm", c.train.trainable.lstm}}}}},
      {"codec",
       {{"vbr", c.codec.vbr},
        {"complexity", c.codec.complexity},
        {"frame_ms", c.codec.frame_ms},
        {"application", c.codec.application == Application::voip ? "voip" : "audio"}}},
      {"sweep_rates", rates_json(c.sweep_rates)},
      {"budget_points", c.budget_points},
      {"allocation_plans", plans},
      {"mixed_rate_set", rates_json(c.mixed_rate_set)},
      {"mixed_test_rates", rates_json(c.mixed_test_rates)},
  };
  return j.dump(indent);
}

ExperimentConfig config_from_json(const std::string& text) {
  ExperimentConfig c;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::domain_error(std::string("config is not valid JSON: ") + e.what());
  }
  try {
    std::vector<std::string> top;
    if (j.contains("experiment")) c.experiment = parse_experiment(j.at("experiment"));
    top.emplace_back("experiment");
    if (j.contains("corpus")) {
      const json& s = j.at("corpus");
      std::vector<std::string> seen;
      take(s, "num_utterances", c.corpus.num_utterances, seen);
      take(s, "utterance_seconds", c.corpus.utterance_seconds, seen);
      take(s, "num_classes", c.corpus.num_classes, seen);
      take(s, "seed", c.corpus.seed, seen);
      take(s, "mic_indices", c.corpus.mic_indices, seen);
      take(s, "min_segment_frames", c.corpus.min_segment_frames, seen);
      take(s, "max_segment_frames", c.corpus.max_segment_frames, seen);
      take(s, "signal_rms", c.corpus.signal_rms, seen);
      take(s, "diffuse_noise_fraction", c.corpus.diffuse_noise_fraction, seen);
      seen.emplace_back("snr_range_db");
      if (s.contains("snr_range_db")) c.corpus.snr_range_db = {s.at("snr_range_db").at(0), s.at("snr_range_db").at(1)};
      seen.emplace_back("geometry");
      if (s.contains("geometry")) c.corpus.geometry = geometry_from(s.at("geometry"));
      reject_unknown(s, seen, "corpus.");
    }
    top.emplace_back("corpus");
    if (j.contains("frontend")) {
      const json& s = j.at("frontend");
      std::vector<std::string> seen;
      take(s, "num_filters", c.frontend.num_filters, seen);
      take(s, "look_directions", c.frontend.look_directions, seen);
      take(s, "fft_size", c.frontend.fft_size, seen);
      take(s, "diagonal_loading", c.frontend.diagonal_loading, seen);
      reject_unknown(s, seen, "frontend.");
    }
    top.emplace_back("frontend");
    if (j.contains("model")) {
      const json& s = j.at("model");
      std::vector<std::string> seen;
      take(s, "num_layers", c.model.num_layers, seen);
      take(s, "cells_per_layer", c.model.cells_per_layer, seen);
      take(s, "num_classes", c.model.num_classes, seen);
      take(s, "input_dim", c.model.input_dim, seen);
      reject_unknown(s, seen, "model.");
    }
    // Sizes the model inherits unless given explicitly.
    const bool has_model = j.contains("model");
    if (!has_model || !j.at("model").contains("num_classes")) c.model.num_classes = c.corpus.num_classes;
    if (!has_model || !j.at("model").contains("input_dim")) c.model.input_dim = kStackFactor * c.frontend.num_filters;
    top.emplace_back("model");
    if (j.contains("train")) {
      const json& s = j.at("train");
      std::vector<std::string> seen;
      take(s, "learning_rate", c.train.learning_rate, seen);
      take(s, "batch_size", c.train.batch_size, seen);
      take(s, "epochs", c.train.epochs, seen);
      take(s, "seed", c.train.seed, seen);
      take(s, "clip_norm", c.train.clip_norm, seen);
      take(s, "block_affine_lr_scale", c.train.block_affine_lr_scale, seen);
      take(s, "esf_lr_scale", c.train.esf_lr_scale, seen);
      take(s, "mfb_lr_scale", c.train.mfb_lr_scale, seen);
      take(s, "select_on_dev", c.train.select_on_dev, seen);
      seen.emplace_back("trainable");
      if (s.contains("trainable")) {
        const json& t = s.at("trainable");
        std::vector<std::string> tseen;
        take(t, "block_affine", c.train.trainable.block_affine, tseen);
        take(t, "esf", c.train.trainable.esf, tseen);
        take(t, "mfb", c.train.trainable.mfb, tseen);
        take(t, "lstm", c.train.trainable.lstm, tseen);
        reject_unknown(t, tseen, "train.trainable.");
      }
      reject_unknown(s, seen, "train.");
    }
    top.emplace_back("train");
    if (j.contains("codec")) {
      const json& s = j.at("codec");
      std::vector<std::string> seen;
      take(s, "vbr", c.codec.vbr, seen);
      take(s, "complexity", c.codec.complexity, seen);
      take(s, "frame_ms", c.codec.frame_ms, seen);
      seen.emplace_back("application");
      if (s.contains("application")) {
        const std::string a = s.at("application");
        if (a != "voip" && a != "audio") throw std::domain_error("codec.application must be voip or audio");
        c.codec.application = a == "voip" ? Application::voip : Application::audio;
      }
      reject_unknown(s, seen, "codec.");
    }
    top.emplace_back("codec");
    for (auto [key, field] : {std::pair{"sweep_rates", &c.sweep_rates}, std::pair{"mixed_rate_set", &c.mixed_rate_set},
                              std::pair{"mixed_test_rates", &c.mixed_test_rates}}) {
      top.emplace_back(key);
      if (j.contains(key)) *field = rates_from(j.at(key));
    }
    take(j, "budget_points", c.budget_points, top);
    top.emplace_back("allocation_plans");
    if (j.contains("allocation_plans")) {
      c.allocation_plans.clear();
      for (const auto& p : j.at("allocation_plans")) c.allocation_plans.push_back(BitratePlan::parse(p.get<std::string>()));
    }
    reject_unknown(j, top, "");
  } catch (const json::exception& e) {
    throw std::domain_error(std::string("bad config value: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path);
  std::ostringstream s;
  s << in.rdbuf();
  return config_from_json(s.str());
}

std::string config_hash(const ExperimentConfig& cfg) { return fnv1a_hex(config_to_json(cfg)); }

}  // namespace farfield
