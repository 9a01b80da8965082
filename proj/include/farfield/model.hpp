#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "farfield/frontend.hpp"
#include "farfield/linalg.hpp"

namespace farfield {

struct AcousticModelConfig {
  std::size_t num_layers = 2;
  std::size_t cells_per_layer = 64;
  std::size_t num_classes = 40;
  std::size_t input_dim = 192;

  void validate() const;
  /// 5 x 768 LSTM over 3183 senones.
  static AcousticModelConfig full_scale();
  bool operator==(const AcousticModelConfig&) const = default;
};

/// Gate blocks are stacked [input, forget, cell, output] along rows.
struct LstmLayer {
  Mat w_input;      // [4H x I]
  Mat w_recurrent;  // [4H x H]
  Vec bias;         // [4H]
};

struct AcousticModel {
  AcousticModelConfig config;
  std::vector<LstmLayer> layers;
  Mat out_weight;  // [C x H]
  Vec out_bias;    // [C]

  std::size_t parameter_count() const;
  AcousticModel zeros_like() const;
  std::vector<ParamSpan> groups();
  std::vector<ConstParamSpan> groups() const;
};

inline constexpr double kInitRange = 0.05;
inline constexpr double kForgetBias = 1.0;

/// Weights ~ U(-0.05, 0.05); forget-gate biases 1, all other biases 0.
AcousticModel init_model(const AcousticModelConfig& cfg, std::uint64_t seed);

struct LstmCache {
  bool valid = false;
  Mat input;
  std::vector<Mat> layer_inputs;  // per layer, [T x I_l]
  std::vector<Mat> gates;         // post-activation [T x 4H]
  std::vector<Mat> cells;         // [T x H]
  std::vector<Mat> hidden;        // [T x H]
};

/// Unnormalized class scores [T x C].
Mat model_logits(const AcousticModel& model, const Mat& features, LstmCache* cache = nullptr);

/// Row-wise softmax of model_logits.
Mat forward(const AcousticModel& model, const FeatureTensor& stacked);

Mat softmax_rows(const Mat& logits);

struct ModelGradients {
  AcousticModel params;
  Mat input;
};

ModelGradients model_backward(const AcousticModel& model, const LstmCache& cache,
                              const Mat& grad_logits);

/// Sum over frames of -log p(label); fills d loss / d logits when requested.
double cross_entropy(const Mat& logits, const std::vector<int>& labels, Mat* grad_logits);

/// Normalization statistics + front-end + classifier.
struct Network {
  NormStats norm;
  FrontendParams frontend;
  AcousticModel model;

  Mat posteriors(const FeatureTensor& raw_stft) const;
};

/// One utterance of training or evaluation data: un-normalized STFT and one
/// label per stacked frame.
struct LabeledFeatures {
  FeatureTensor stft;
  std::vector<int> labels;
};

struct Dataset {
  std::size_t size = 0;
  std::function<LabeledFeatures(std::size_t)> get;
};

struct TrainConfig {
  double learning_rate = 1.0;
  std::size_t batch_size = 1;
  std::size_t epochs = 12;
  std::uint64_t seed = 1;
  TrainableGroups trainable;
  double clip_norm = 5.0;
  /// Learning-rate multipliers for the front-end groups.
  double block_affine_lr_scale = 1.0;
  double esf_lr_scale = 0.0;
  double mfb_lr_scale = 0.0;
  /// Keep the parameters of the epoch with the lowest dev FER.
  bool select_on_dev = true;

  void validate() const;
  /// Multiplier for a parameter group by name; 1 for the LSTM.
  double lr_scale(const std::string& group) const;
};

struct EpochLog {
  std::size_t epoch = 0;
  double loss = 0.0;     // mean cross-entropy per frame
  double dev_fer = -1.0; // percent; -1 without a dev set
};

struct TrainResult {
  std::vector<EpochLog> epochs;
  double initial_loss = 0.0;  // before any update
  std::size_t selected_epoch = 0;
};

/// End-to-end SGD on cross-entropy through the LSTM and every trainable
/// front-end group. Throws NumericError on non-finite loss.
TrainResult train_ce(Network& net, const Dataset& train, const Dataset* dev,
                     const TrainConfig& cfg);

/// Mean per-frame cross-entropy over a dataset.
double mean_loss(const Network& net, const Dataset& data);

struct ErrorCount {
  std::size_t errors = 0;
  std::size_t frames = 0;
};

/// Per-utterance argmax error counts.
std::vector<ErrorCount> evaluate(const Network& net, const Dataset& data);

double frame_error_rate(const std::vector<ErrorCount>& counts);
/// 100 * misclassified / total. Empty datasets are a domain error.
double frame_error_rate(const Network& net, const Dataset& data);

/// Loss and gradients of one utterance (sum over its frames).
struct ExampleGradients {
  double loss = 0.0;
  std::size_t frames = 0;
  FrontendParams frontend;
  AcousticModel model;
};
ExampleGradients example_gradients(const Network& net, const LabeledFeatures& ex,
                                   const TrainableGroups& trainable);

// Checkpoint: "FFCK" u32 version, JSON header (length-prefixed) with the
// configs, then every parameter block as f64.
void save_checkpoint(const std::string& path, const Network& net);
Network load_checkpoint(const std::string& path);

void write_train_log(const std::string& path, const TrainResult& result);

}  // namespace farfield
