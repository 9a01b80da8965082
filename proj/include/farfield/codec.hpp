#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "farfield/frontend.hpp"

namespace farfield {

/// Multi-channel 16-bit PCM.
struct AudioClip {
  std::vector<std::vector<std::int16_t>> channels;
  int sample_rate = 16000;

  std::size_t num_channels() const { return channels.size(); }
  std::size_t num_samples() const { return channels.empty() ? 0 : channels[0].size(); }
  void validate() const;

  /// Samples scaled to [-1, 1).
  std::vector<std::vector<double>> to_double() const;
  static AudioClip from_double(const std::vector<std::vector<double>>& x, int sample_rate);

  bool operator==(const AudioClip&) const = default;
};

/// Per-channel codec rate: pass-through or an OPUS CBR target in kbps.
class Bitrate {
 public:
  static Bitrate uncompressed() { return Bitrate(); }
  /// Throws std::domain_error for rates outside the supported set.
  static Bitrate kbps(int rate);
  /// "u"/"uncompressed" or an integer kbps value.
  static Bitrate parse(const std::string& text);

  bool is_uncompressed() const { return !kbps_.has_value(); }
  int kbps_value() const { return kbps_.value_or(0); }
  /// Budget accounting: uncompressed counts as 256 kbps.
  int budget_kbps() const { return kbps_.value_or(kUncompressedBudget); }
  std::string to_string() const;

  static constexpr int kUncompressedBudget = 256;

  bool operator==(const Bitrate&) const = default;
  auto operator<=>(const Bitrate&) const = default;

 private:
  Bitrate() = default;
  explicit Bitrate(int kbps) : kbps_(kbps) {}
  std::optional<int> kbps_;
};

/// The kbps values transcode accepts.
const std::vector<int>& supported_kbps();

struct BitratePlan {
  std::vector<Bitrate> per_channel;

  static BitratePlan uniform(std::size_t channels, Bitrate rate);
  /// Comma separated, e.g. "u,8" or "136,136".
  static BitratePlan parse(const std::string& text);
  std::string to_string() const;
  int total_budget_kbps() const;
  bool all_uncompressed() const;

  bool operator==(const BitratePlan&) const = default;
  auto operator<=>(const BitratePlan&) const = default;
};

enum class Application { voip, audio };

struct CodecSettings {
  bool vbr = false;
  int complexity = 10;
  int frame_ms = 20;
  Application application = Application::voip;
};

/// Encodes each channel independently with OPUS at its planned rate and
/// decodes back to PCM at the clip's sample rate. The decoder output is
/// shifted by the encoder lookahead and trimmed to the input length.
/// Uncompressed channels pass through bit-exact.
AudioClip transcode(const AudioClip& clip, const BitratePlan& plan,
                    const CodecSettings& settings = {});

/// Encoder lookahead in samples for the given settings (the pre-skip).
int codec_lookahead(int sample_rate, const CodecSettings& settings = {});

/// Packets produced while encoding one channel; for inspection dumps.
std::vector<std::vector<std::uint8_t>> encode_channel(const std::vector<std::int16_t>& pcm,
                                                      int sample_rate, int kbps,
                                                      const CodecSettings& settings = {});

/// Length-prefixed packet dump: "FFOP" u32 sample_rate, u32 count, then per
/// packet u32 size + bytes.
void dump_packets(const std::string& path, const std::vector<std::vector<std::uint8_t>>& packets,
                  int sample_rate);

/// Per channel, fraction of STFT power in bins above `cutoff_hz`. Silent
/// channels give 0.
std::vector<double> band_energy_ratio(const AudioClip& clip, double cutoff_hz,
                                      const StftConfig& cfg = {});

enum class SnrCondition { clean, noisy };

inline constexpr double kSnrThresholdDb = 5.0;

/// 10 log10(P_signal / P_noise) over all channels; +inf for zero noise.
double snr_db(const std::vector<std::vector<double>>& clean_ref,
              const std::vector<std::vector<double>>& noise_ref);
double snr_db(const AudioClip& clean_ref, const AudioClip& noise_ref);

inline SnrCondition snr_condition(double snr, double threshold_db = kSnrThresholdDb) {
  return snr >= threshold_db ? SnrCondition::clean : SnrCondition::noisy;
}
SnrCondition snr_label(const AudioClip& clean_ref, const AudioClip& noise_ref,
                       double threshold_db = kSnrThresholdDb);

/// Normalized cross-correlation maximized over lags |lag| <= max_lag.
/// Returns {correlation, lag} where y[n + lag] best matches x[n].
std::pair<double, int> max_normalized_xcorr(const std::vector<double>& x,
                                            const std::vector<double>& y, int max_lag);

}  // namespace farfield
