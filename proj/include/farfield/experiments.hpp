#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "farfield/config.hpp"
#include "farfield/corpus.hpp"
#include "farfield/model.hpp"
#include "farfield/report.hpp"

namespace farfield {

using ClipList = std::shared_ptr<const std::vector<AudioClip>>;

/// Labeled dataset computing the STFT of each clip on access.
Dataset make_dataset(ClipList clips, const std::vector<Utterance>& utterances,
                     const StftConfig& stft_cfg = {});

/// One rate per utterance, drawn uniformly from `rate_set`.
std::vector<Bitrate> mixed_bitrate_sampler(std::size_t num_utterances,
                                           const std::vector<Bitrate>& rate_set, std::uint64_t seed);

struct ChiSquareResult {
  double statistic = 0.0;
  std::size_t dof = 0;
  double p_value = 1.0;
};
/// Pearson goodness-of-fit against equal frequencies over `rate_set`.
ChiSquareResult chi_square_uniformity(const std::vector<Bitrate>& draws,
                                      const std::vector<Bitrate>& rate_set);
/// Upper tail of the chi-square distribution.
double chi_square_sf(double x, std::size_t dof);

enum class ModelKind { multi_channel, single_channel };

struct TrainingCondition {
  enum class Type { uncompressed, matched, mixed };
  Type type = Type::uncompressed;
  Bitrate rate = Bitrate::uncompressed();

  static TrainingCondition uncompressed() { return {}; }
  static TrainingCondition matched(Bitrate r);
  static TrainingCondition mixed() { return {Type::mixed, Bitrate::uncompressed()}; }
  std::string name() const;
};

struct FerBreakdown {
  double overall = 0.0;
  double clean = 0.0;
  double noisy = 0.0;
  std::size_t frames = 0;
  std::size_t clean_frames = 0;
  std::size_t noisy_frames = 0;
};

/// Holds the corpus, transcodes and trained models of one configuration so
/// that experiments sharing them do the work once.
class Lab {
 public:
  explicit Lab(ExperimentConfig cfg);

  const ExperimentConfig& config() const { return cfg_; }
  const std::string& hash() const { return hash_; }
  const Corpus& corpus();
  void set_logger(std::function<void(const std::string&)> log) { log_ = std::move(log); }

  /// Split audio under a plan. Single-channel audio is the first mic only,
  /// so its plan has one entry.
  ClipList audio(Split split, ModelKind kind, const BitratePlan& plan);
  /// Each utterance transcoded at its own sampled rate on all channels.
  ClipList mixed_audio(Split split, ModelKind kind);

  const Network& model(ModelKind kind, const TrainingCondition& cond);
  /// Training history of a model trained by this lab, or null.
  const TrainResult* training_log(ModelKind kind, const TrainingCondition& cond) const;
  /// Installs an externally trained model.
  void set_model(ModelKind kind, const TrainingCondition& cond, Network net);

  FerBreakdown evaluate(const Network& net, Split split, ClipList clips);
  FerBreakdown evaluate(ModelKind kind, const TrainingCondition& cond, const BitratePlan& test_plan);

  std::size_t channels() const;
  BitratePlan uniform_plan(ModelKind kind, Bitrate rate) const;

 private:
  Network fresh_network(ModelKind kind) const;
  std::string model_key(ModelKind kind, const TrainingCondition& cond) const;
  void log(const std::string& msg) const;

  ExperimentConfig cfg_;
  std::string hash_;
  std::unique_ptr<Corpus> corpus_;
  std::map<std::string, ClipList> audio_cache_;
  std::map<std::string, Network> models_;
  std::map<std::string, TrainResult> logs_;
  std::function<void(const std::string&)> log_;
};

/// Uncompressed baseline plus the configured per-channel sweep rates.
DegradationReport run_bitrate_sweep(Lab& lab);
/// Single-channel at 2x vs multi-channel at x per channel for each budget point.
DegradationReport run_single_vs_multi(Lab& lab);
/// Per-plan degradation vs uncompressed-both, split into clean and noisy.
DegradationReport run_allocation(Lab& lab);
/// Uncompressed-trained, matched-trained and mixed-trained models per test rate.
DegradationReport run_mixed_training(Lab& lab);

/// Condition labels used in the reports.
std::string sweep_condition(Bitrate rate);
std::string budget_condition(int x, const std::string& what);
std::string plan_condition(const BitratePlan& plan);
std::string mixed_condition(Bitrate test_rate, const std::string& family);

}  // namespace farfield
