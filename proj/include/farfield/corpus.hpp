#pragma once

#include <cstdint>
#include <vector>

#include "farfield/codec.hpp"
#include "farfield/geometry.hpp"

namespace farfield {

inline constexpr std::size_t kLabelHop = 480;  // samples per 30 ms label frame at 16 kHz

/// Unit-power white noise with the diffuse-field coherence sin(kd)/(kd)
/// between every pair of selected mics, synthesized per FFT bin.
std::vector<std::vector<double>> diffuse_noise(const ArrayGeometry& geom, const SubarraySelection& sel,
                                               std::size_t num_samples, std::uint64_t seed);

struct SnrRange {
  double lo = -5.0;
  double hi = 20.0;
  bool operator==(const SnrRange&) const = default;
};

struct SyntheticCorpusConfig {
  std::size_t num_utterances = 1000;
  double utterance_seconds = 3.0;
  std::size_t num_classes = 40;
  SnrRange snr_range_db;
  std::uint64_t seed = 1;
  ArrayGeometry geometry = ArrayGeometry::circular7();
  /// Empty selects the opposite pair of the geometry.
  std::vector<std::size_t> mic_indices;
  /// Class segment length range, in label frames.
  std::size_t min_segment_frames = 2;
  std::size_t max_segment_frames = 6;
  /// RMS of the direct component over all channels, relative to full scale.
  double signal_rms = 0.05;
  /// Share of the noise power that is spherically diffuse; the rest is
  /// spatially uncorrelated.
  double diffuse_noise_fraction = 0.0;

  void validate() const;
  SubarraySelection selection() const;
  std::size_t samples_per_utterance() const;
  bool operator==(const SyntheticCorpusConfig&) const = default;
};

/// Spectral envelope of one class: Gaussian formant bumps over a floor, with
/// harmonic (voiced) or random-sinusoid (unvoiced) excitation.
struct ClassSignature {
  bool voiced = true;
  std::vector<double> formants_hz;
  std::vector<double> bandwidths_hz;

  double envelope(double hz) const;
};

std::vector<ClassSignature> make_class_table(std::size_t num_classes, std::uint64_t seed);

struct Utterance {
  std::size_t index = 0;
  AudioClip audio;
  std::vector<int> labels;  // one per 30 ms frame
  double snr_db = 0.0;
  double azimuth = 0.0;
};

/// Direct component and additive noise, before mixing and quantization.
struct UtteranceReferences {
  std::vector<std::vector<double>> clean;
  std::vector<std::vector<double>> noise;
};

/// Deterministic in (cfg, index).
Utterance generate_utterance(const SyntheticCorpusConfig& cfg,
                             const std::vector<ClassSignature>& classes, std::size_t index,
                             UtteranceReferences* refs = nullptr);

enum class Split { train, dev, test };
const char* split_name(Split s);

struct Corpus {
  SyntheticCorpusConfig config;
  std::vector<ClassSignature> classes;
  std::vector<Utterance> train, dev, test;

  const std::vector<Utterance>& split(Split s) const;
};

/// 80/10/10 split by utterance index.
Corpus generate_corpus(const SyntheticCorpusConfig& cfg);

}  // namespace farfield
