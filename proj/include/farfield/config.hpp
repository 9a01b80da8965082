#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "farfield/beamformer.hpp"
#include "farfield/codec.hpp"
#include "farfield/corpus.hpp"
#include "farfield/model.hpp"

namespace farfield {

struct FrontendSettings {
  std::size_t num_filters = 64;
  std::size_t look_directions = 12;
  std::size_t fft_size = 256;
  double diagonal_loading = kDefaultDiagonalLoading;
  bool operator==(const FrontendSettings&) const = default;
};

enum class ExperimentKind { train, sweep, single_vs_multi, allocation, mixed_training };
const char* experiment_name(ExperimentKind k);
ExperimentKind parse_experiment(const std::string& name);

std::vector<BitratePlan> default_allocation_plans();

struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::sweep;
  SyntheticCorpusConfig corpus;
  FrontendSettings frontend;
  AcousticModelConfig model;
  TrainConfig train;
  CodecSettings codec;
  std::vector<Bitrate> sweep_rates = {Bitrate::kbps(8), Bitrate::kbps(16), Bitrate::kbps(32),
                                      Bitrate::kbps(128)};
  /// Per-channel rates x of the multi-channel model; the single-channel model gets 2x.
  std::vector<int> budget_points = {8, 16, 32, 64, 128};
  std::vector<BitratePlan> allocation_plans = default_allocation_plans();
  std::vector<Bitrate> mixed_rate_set = {Bitrate::uncompressed(), Bitrate::kbps(16), Bitrate::kbps(32),
                                         Bitrate::kbps(64), Bitrate::kbps(128)};
  std::vector<Bitrate> mixed_test_rates = {Bitrate::kbps(16), Bitrate::kbps(32), Bitrate::kbps(128),
                                           Bitrate::uncompressed()};

  void validate() const;
};

/// Canonical JSON (sorted keys, compact).
std::string config_to_json(const ExperimentConfig& cfg, int indent = -1);
/// Missing keys keep their defaults; unknown keys are an error.
ExperimentConfig config_from_json(const std::string& text);
ExperimentConfig load_config(const std::string& path);
std::string config_hash(const ExperimentConfig& cfg);

}  // namespace farfield
