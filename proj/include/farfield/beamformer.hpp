#pragma once

#include <complex>
#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "farfield/geometry.hpp"

namespace farfield {

inline constexpr double kDefaultDiagonalLoading = 1e-2;

/// MVDR weights against a (regularized) noise coherence matrix:
///   w = (G + s I)^-1 d / (d^H (G + s I)^-1 d)
/// Throws NumericError if G + s I is not positive definite.
Eigen::VectorXcd superdirective_weights(const Eigen::MatrixXd& coherence,
                                        const Eigen::VectorXcd& steering, double loading);

/// Per-bin, per-direction beamformer weights w (the beamformer output is w^H x).
/// Bins are k = 1 .. fft_size/2 - 1; DC and Nyquist are excluded.
class BeamformerBank {
 public:
  BeamformerBank() = default;
  BeamformerBank(std::size_t bins, std::size_t dirs, std::size_t mics,
                 std::vector<double> bin_frequencies);

  std::size_t num_bins() const { return bins_; }
  std::size_t num_directions() const { return dirs_; }
  std::size_t num_mics() const { return mics_; }
  const std::vector<double>& bin_frequencies() const { return freqs_; }

  std::complex<double>& weight(std::size_t bin, std::size_t dir, std::size_t mic) {
    return weights_[(bin * dirs_ + dir) * mics_ + mic];
  }
  const std::complex<double>& weight(std::size_t bin, std::size_t dir, std::size_t mic) const {
    return weights_[(bin * dirs_ + dir) * mics_ + mic];
  }
  Eigen::VectorXcd weight_vector(std::size_t bin, std::size_t dir) const;
  const std::vector<std::complex<double>>& flat() const { return weights_; }

  bool operator==(const BeamformerBank&) const = default;

 private:
  std::size_t bins_ = 0, dirs_ = 0, mics_ = 0;
  std::vector<double> freqs_;
  std::vector<std::complex<double>> weights_;
};

BeamformerBank build_bank(const ArrayGeometry& geom, const SubarraySelection& sel,
                          const std::vector<LookDirection>& dirs, std::size_t fft_size,
                          double loading = kDefaultDiagonalLoading);

/// Largest |w^H d - 1| over the bank, with d rebuilt from the geometry.
double max_distortionless_error(const BeamformerBank& bank, const ArrayGeometry& geom,
                                const SubarraySelection& sel,
                                const std::vector<LookDirection>& dirs);

/// 2x2 real block [[a, -b], [b, a]] of the complex coefficient a + jb, acting
/// on interleaved (re, im) pairs.
Eigen::Matrix2d complex_block(std::complex<double> c);

/// Trainable first layer: per bin k and direction d,
///   y[d,k] = sum_m coeff[k,d,m] * x[m,k] + bias[d,k]
/// with every complex coeff applied as a complex_block. Coefficients are kept
/// as (re, im) pairs so the blocks stay rotation-scaling matrices under training.
struct BlockAffineParams {
  std::size_t bins = 0, dirs = 0, mics = 0;
  std::vector<double> coeff;  // [bins][dirs][mics][re,im]
  std::vector<double> bias;   // [bins][dirs][re,im]

  std::size_t coeff_index(std::size_t k, std::size_t d, std::size_t m) const {
    return ((k * dirs + d) * mics + m) * 2;
  }
  std::size_t bias_index(std::size_t k, std::size_t d) const { return (k * dirs + d) * 2; }

  std::complex<double> coefficient(std::size_t k, std::size_t d, std::size_t m) const {
    const auto i = coeff_index(k, d, m);
    return {coeff[i], coeff[i + 1]};
  }
  Eigen::Matrix2d block(std::size_t k, std::size_t d, std::size_t m) const {
    return complex_block(coefficient(k, d, m));
  }

  bool operator==(const BlockAffineParams&) const = default;
};

/// Coefficients are conj(w) so that the layer computes w^H x; bias starts at zero.
BlockAffineParams bank_to_block_affine(const BeamformerBank& bank);
BeamformerBank block_affine_to_bank(const BlockAffineParams& params,
                                    std::vector<double> bin_frequencies);

}  // namespace farfield
