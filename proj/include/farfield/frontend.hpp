#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "farfield/beamformer.hpp"
#include "farfield/linalg.hpp"

namespace farfield {

enum class Window { rectangular, hann };

struct StftConfig {
  std::size_t frame_shift = 160;
  std::size_t frame_length = 160;
  std::size_t fft_size = 256;
  Window window = Window::rectangular;
  double sample_rate = 16000.0;

  std::size_t num_bins() const { return fft_size / 2 - 1; }
  std::size_t num_frames(std::size_t num_samples) const;
  void validate() const;
};

enum class Stage { complex_stft, directional_power, log_mfb, stacked };

const char* stage_name(Stage s);

/// Staged front-end data. `data` has one row per frame; `shape` lists the
/// full logical shape (frames first) and the row width is the product of
/// shape[1..].
struct FeatureTensor {
  Stage stage = Stage::complex_stft;
  std::vector<std::size_t> shape;
  Mat data;
  double frame_rate = 100.0;

  std::size_t frames() const { return std::size_t(data.rows()); }
  bool operator==(const FeatureTensor& o) const {
    return stage == o.stage && shape == o.shape && frame_rate == o.frame_rate &&
           data.rows() == o.data.rows() && data.cols() == o.data.cols() && data == o.data;
  }
};

inline constexpr std::size_t kStackFactor = 3;
inline constexpr double kLogFloor = 1e-7;

/// Complex STFT of bins 1 .. fft_size/2-1, interleaved (re, im) per channel:
/// row t holds [channel][bin][re, im] for samples [t*shift, t*shift+length).
/// Partial trailing frames are dropped.
FeatureTensor stft(std::span<const std::vector<double>> channels, const StftConfig& cfg);

struct NormStats {
  Vec mean;
  Vec variance;

  void validate() const;
  bool operator==(const NormStats&) const = default;
};

/// Accumulates per-coordinate first and second moments over many utterances.
class NormAccumulator {
 public:
  void add(const Mat& rows);
  NormStats finish(double variance_floor = 1e-12) const;
  std::size_t count() const { return count_; }

 private:
  std::size_t count_ = 0;
  Eigen::VectorXd sum_, sum_sq_;
};

/// (x - mean) / sqrt(variance) per coordinate; mismatched dims are a domain error.
FeatureTensor normalize(const FeatureTensor& x, const NormStats& stats);

/// Directional complex outputs [T x dirs x bins x 2].
Mat block_affine_forward(const FeatureTensor& x, const BlockAffineParams& params);

/// re^2 + im^2 of interleaved complex rows; output stage directional_power.
FeatureTensor power(const Mat& directional, std::size_t dirs, std::size_t bins);

struct AffineParams {
  Mat weight;  // [out x in]
  Vec bias;    // [out]

  bool operator==(const AffineParams& o) const {
    return weight.rows() == o.weight.rows() && weight.cols() == o.weight.cols() &&
           weight == o.weight && bias.size() == o.bias.size() && bias == o.bias;
  }
};

/// Full affine from the flattened [dirs x bins] power map to a bins-dim spectrum,
/// initialized to the per-bin average over directions.
AffineParams esf_init(std::size_t dirs, std::size_t bins);
Mat esf_forward(const FeatureTensor& power_map, const AffineParams& params);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Triangular mel filters with centers equispaced on the mel scale between
/// 0 Hz and sample_rate/2, evaluated at bin k (1-based) frequency
/// k * sample_rate / (2 * (num_bins + 1)). Throws if any filter is empty.
Mat mel_filterbank_matrix(std::size_t num_filters, std::size_t num_bins, double sample_rate);

/// Filter center frequencies used by mel_filterbank_matrix.
std::vector<double> mel_center_frequencies(std::size_t num_filters, double sample_rate);

/// log(max(ReLU(W x + b), floor)), stage log_mfb.
FeatureTensor mfb_log_forward(const Mat& spectrum, const AffineParams& params);

/// Concatenates non-overlapping triples of frames; T mod 3 trailing frames are dropped.
FeatureTensor stack_frames(const FeatureTensor& log_mfb);

enum class FrontendKind { multi_channel, single_channel };

struct TrainableGroups {
  bool block_affine = true;
  bool esf = true;
  bool mfb = true;
  bool lstm = true;

  static TrainableGroups all() { return {}; }
  static TrainableGroups lstm_only() { return {false, false, false, true}; }
};

/// Parameters of the learned feature-extraction layers. The same struct is
/// used to hold gradients.
///
/// multi_channel:  block affine -> power -> ESF affine -> MFB affine -> ReLU/log -> stack
/// single_channel: power of channel 0 -> MFB affine -> ReLU/log -> stack
struct FrontendParams {
  FrontendKind kind = FrontendKind::multi_channel;
  std::size_t channels = 2;
  std::size_t bins = 127;
  std::size_t dirs = 12;
  double sample_rate = 16000.0;
  BlockAffineParams block_affine;
  AffineParams esf;
  AffineParams mfb;

  std::size_t num_filters() const { return std::size_t(mfb.weight.rows()); }
  std::size_t output_dim() const { return num_filters() * kStackFactor; }
  /// Row width of the normalized STFT the front-end consumes.
  std::size_t input_dim() const { return channels * bins * 2; }

  /// Same shapes, all zeros.
  FrontendParams zeros_like() const;
  std::vector<ParamSpan> groups(const TrainableGroups& which = TrainableGroups::all());

  bool operator==(const FrontendParams&) const = default;
};

/// Beamformer-initialized multi-channel front-end.
FrontendParams make_multichannel_frontend(const BeamformerBank& bank, std::size_t num_filters,
                                          double sample_rate);
FrontendParams make_single_channel_frontend(std::size_t bins, std::size_t num_filters,
                                            double sample_rate, std::size_t channels);

/// Activations kept by frontend_forward for the backward pass.
struct FrontendCache {
  bool valid = false;
  Mat input;       // normalized STFT
  Mat beamformed;  // multi-channel only
  Mat power;
  Mat combined;    // ESF output (multi) or channel power (single)
  Mat mfb_pre;
  std::size_t frames = 0;
};

FeatureTensor frontend_forward(const FrontendParams& params, const FeatureTensor& normalized,
                               FrontendCache* cache = nullptr);

struct FrontendGradients {
  FrontendParams params;  // zeros for frozen groups
  Mat input;              // d loss / d normalized STFT (empty unless requested)
};

/// Reverse-mode gradients given d loss / d stacked features. Throws UsageError
/// if the cache was not filled by a forward pass.
FrontendGradients frontend_backward(const Mat& grad_stacked, const FrontendCache& cache,
                                    const FrontendParams& params,
                                    const TrainableGroups& trainable = TrainableGroups::all(),
                                    bool want_input_grad = false);

}  // namespace farfield
