#include "farfield/beamformer.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "farfield/errors.hpp"

namespace farfield {

Eigen::VectorXcd superdirective_weights(const Eigen::MatrixXd& coherence,
                                        const Eigen::VectorXcd& steering, double loading) {
  const auto n = coherence.rows();
  if (coherence.cols() != n || steering.size() != n || n == 0) {
    throw std::domain_error("coherence/steering dimension mismatch");
  }
  if (!(loading >= 0.0) || !std::isfinite(loading)) {
    throw std::domain_error("diagonal loading must be a finite nonnegative value");
  }
  const Eigen::MatrixXd regularized = coherence + loading * Eigen::MatrixXd::Identity(n, n);
  Eigen::LLT<Eigen::MatrixXd> llt(regularized);
  if (llt.info() != Eigen::Success) {
    throw NumericError("regularized coherence matrix is not positive definite");
  }
  // Reject matrices that factor but are numerically singular.
  const Eigen::VectorXd diag = llt.matrixL().toDenseMatrix().diagonal();
  if (diag.minCoeff() / diag.maxCoeff() < 1e-7) {
    throw NumericError("regularized coherence matrix is ill-conditioned");
  }
  const Eigen::VectorXcd solved = llt.solve(steering);
  const std::complex<double> denom = steering.dot(solved);  // d^H G^-1 d
  if (!std::isfinite(denom.real()) || denom.real() <= 0.0) {
    throw NumericError("degenerate MVDR normalization");
  }
  return solved / denom.real();
}

BeamformerBank::BeamformerBank(std::size_t bins, std::size_t dirs, std::size_t mics,
                               std::vector<double> bin_frequencies)
    : bins_(bins), dirs_(dirs), mics_(mics), freqs_(std::move(bin_frequencies)),
      weights_(bins * dirs * mics) {
  if (freqs_.size() != bins) throw std::domain_error("one frequency per bin required");
}

Eigen::VectorXcd BeamformerBank::weight_vector(std::size_t bin, std::size_t dir) const {
  Eigen::VectorXcd w{Eigen::Index(mics_)};
  for (std::size_t m = 0; m < mics_; ++m) w(Eigen::Index(m)) = weight(bin, dir, m);
  return w;
}

BeamformerBank build_bank(const ArrayGeometry& geom, const SubarraySelection& sel,
                          const std::vector<LookDirection>& dirs, std::size_t fft_size,
                          double loading) {
  geom.validate();
  sel.validate(geom);
  if (fft_size < 4 || fft_size % 2 != 0) throw std::domain_error("fft_size must be even and >= 4");
  if (dirs.empty()) throw std::domain_error("at least one look direction required");

  const std::size_t bins = fft_size / 2 - 1;
  std::vector<double> freqs(bins);
  for (std::size_t k = 0; k < bins; ++k) {
    freqs[k] = double(k + 1) * geom.sample_rate / double(fft_size);
  }
  BeamformerBank bank(bins, dirs.size(), sel.size(), freqs);
  for (std::size_t k = 0; k < bins; ++k) {
    const Eigen::MatrixXd gamma = diffuse_coherence(geom, sel, freqs[k]);
    for (std::size_t d = 0; d < dirs.size(); ++d) {
      Eigen::VectorXcd w;
      try {
        w = superdirective_weights(gamma, steering_vector(geom, sel, dirs[d], freqs[k]), loading);
      } catch (const NumericError& e) {
        throw NumericError("bin " + std::to_string(k + 1) + ", direction " + std::to_string(d) +
                           ": " + e.what());
      }
      for (std::size_t m = 0; m < sel.size(); ++m) bank.weight(k, d, m) = w(Eigen::Index(m));
    }
  }
  return bank;
}

double max_distortionless_error(const BeamformerBank& bank, const ArrayGeometry& geom,
                                const SubarraySelection& sel,
                                const std::vector<LookDirection>& dirs) {
  if (dirs.size() != bank.num_directions() || sel.size() != bank.num_mics()) {
    throw std::domain_error("bank does not match directions/selection");
  }
  double worst = 0.0;
  for (std::size_t k = 0; k < bank.num_bins(); ++k) {
    for (std::size_t d = 0; d < dirs.size(); ++d) {
      const auto steer = steering_vector(geom, sel, dirs[d], bank.bin_frequencies()[k]);
      worst = std::max(worst, std::abs(bank.weight_vector(k, d).dot(steer) - 1.0));
    }
  }
  return worst;
}

Eigen::Matrix2d complex_block(std::complex<double> c) {
  Eigen::Matrix2d b;
  b << c.real(), -c.imag(), c.imag(), c.real();
  return b;
}

BlockAffineParams bank_to_block_affine(const BeamformerBank& bank) {
  BlockAffineParams p;
  p.bins = bank.num_bins();
  p.dirs = bank.num_directions();
  p.mics = bank.num_mics();
  p.coeff.resize(p.bins * p.dirs * p.mics * 2);
  p.bias.assign(p.bins * p.dirs * 2, 0.0);
  for (std::size_t k = 0; k < p.bins; ++k) {
    for (std::size_t d = 0; d < p.dirs; ++d) {
      for (std::size_t m = 0; m < p.mics; ++m) {
        const auto c = std::conj(bank.weight(k, d, m));
        const auto i = p.coeff_index(k, d, m);
        p.coeff[i] = c.real();
        p.coeff[i + 1] = c.imag();
      }
    }
  }
  return p;
}

BeamformerBank block_affine_to_bank(const BlockAffineParams& params,
                                    std::vector<double> bin_frequencies) {
  BeamformerBank bank(params.bins, params.dirs, params.mics, std::move(bin_frequencies));
  for (std::size_t k = 0; k < params.bins; ++k) {
    for (std::size_t d = 0; d < params.dirs; ++d) {
      for (std::size_t m = 0; m < params.mics; ++m) {
        bank.weight(k, d, m) = std::conj(params.coefficient(k, d, m));
      }
    }
  }
  return bank;
}

}  // namespace farfield
