#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "farfield/beamformer.hpp"
#include "farfield/errors.hpp"
#include "farfield/rng.hpp"
#include "farfield/tensor_io.hpp"

using namespace farfield;
using cd = std::complex<double>;

namespace {

Eigen::VectorXcd random_distortionless(Rng& rng, const Eigen::VectorXcd& d) {
  // v = d/|d|^2 + (component orthogonal to d) keeps v^H d = 1.
  Eigen::VectorXcd z(d.size());
  for (Eigen::Index i = 0; i < d.size(); ++i) z(i) = cd(rng.normal(), rng.normal());
  z -= d * (d.dot(z) / d.squaredNorm());
  return d / d.squaredNorm() + z * rng.uniform(0.01, 2.0);
}

}  // namespace

TEST_CASE("identity coherence gives delay-and-sum") {
  Eigen::VectorXcd d(3);
  d << std::polar(1.0, 0.3), std::polar(1.0, -1.2), std::polar(1.0, 2.0);
  for (double sigma : {0.0, 0.5, 10.0}) {
    const auto w = superdirective_weights(Eigen::MatrixXd::Identity(3, 3), d, sigma);
    CHECK((w - d / 3.0).norm() < 1e-14);
    CHECK(std::abs(w.dot(d) - 1.0) < 1e-12);
  }
}

TEST_CASE("2x2 closed form") {
  const double gamma = 0.734, phi = 1.3195, sigma = 0.01;
  Eigen::MatrixXd g(2, 2);
  g << 1, gamma, gamma, 1;
  Eigen::VectorXcd d(2);
  d << 1.0, std::polar(1.0, -phi);
  // Hand inverse of [[a, gamma], [gamma, a]] with a = 1 + sigma.
  const double a = 1 + sigma, det = a * a - gamma * gamma;
  const cd z0 = (a * d(0) - gamma * d(1)) / det;
  const cd z1 = (-gamma * d(0) + a * d(1)) / det;
  const cd denom = std::conj(d(0)) * z0 + std::conj(d(1)) * z1;
  const auto w = superdirective_weights(g, d, sigma);
  CHECK(std::abs(w(0) - z0 / denom) < 1e-12);
  CHECK(std::abs(w(1) - z1 / denom) < 1e-12);
}

TEST_CASE("singular regularized coherence is rejected") {
  Eigen::MatrixXd g = Eigen::MatrixXd::Ones(2, 2);
  Eigen::VectorXcd d = Eigen::VectorXcd::Ones(2);
  CHECK_THROWS_AS(superdirective_weights(g, d, 0.0), NumericError);
  CHECK_THROWS_AS(superdirective_weights(g, d, -1.0), std::domain_error);
  CHECK_THROWS_AS(superdirective_weights(g, Eigen::VectorXcd::Ones(3), 0.1), std::domain_error);
}

TEST_CASE("default bank shape, frequencies and distortionless constraint") {
  const auto geom = ArrayGeometry::circular7();
  const auto sel = select_opposite_pair(geom);
  const auto dirs = default_look_directions(12);
  const auto bank = build_bank(geom, sel, dirs, 256);
  CHECK(bank.num_bins() == 127);
  CHECK(bank.num_directions() == 12);
  CHECK(bank.num_mics() == 2);
  for (std::size_t k = 0; k < 127; ++k) CHECK(bank.bin_frequencies()[k] == (k + 1) * 16000.0 / 256.0);
  CHECK(bank.bin_frequencies().front() == 62.5);
  CHECK(bank.bin_frequencies().back() == 7937.5);
  CHECK(max_distortionless_error(bank, geom, sel, dirs) < 1e-9);

  const auto small = build_bank(geom, sel, {LookDirection{}}, 8);
  CHECK(small.num_bins() == 3);
  CHECK(small.num_directions() == 1);
  CHECK_THROWS_AS(build_bank(geom, sel, dirs, 7), std::domain_error);
  CHECK_THROWS_AS(build_bank(geom, sel, {}, 256), std::domain_error);
}

TEST_CASE("singular bins are reported with their location") {
  // Two coincident mics make the unloaded coherence exactly rank deficient.
  ArrayGeometry geom;
  geom.mic_positions = {{0, 0, 0}, {0, 0, 0}, {0.05, 0, 0}};
  const SubarraySelection all{{0, 1, 2}};
  try {
    build_bank(geom, all, default_look_directions(2), 256, 0.0);
    FAIL("expected a numeric error for the unloaded coherence");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("bin ") != std::string::npos);
  }
}

TEST_CASE("superdirective weights minimize diffuse noise power among distortionless filters") {
  const auto geom = ArrayGeometry::circular7();
  const auto sel = select_opposite_pair(geom);
  const auto dirs = default_look_directions(12);
  const auto bank = build_bank(geom, sel, dirs, 256);
  Rng rng(11);
  for (std::size_t k = 0; k < bank.num_bins(); k += 9) {
    const double f = bank.bin_frequencies()[k];
    const Eigen::MatrixXcd r =
        (diffuse_coherence(geom, sel, f) + kDefaultDiagonalLoading * Eigen::MatrixXd::Identity(2, 2))
            .cast<cd>();
    for (std::size_t d = 0; d < dirs.size(); d += 5) {
      const auto steer = steering_vector(geom, sel, dirs[d], f);
      const auto w = bank.weight_vector(k, d);
      const double best = w.dot(r * w).real();
      for (int trial = 0; trial < 100; ++trial) {
        const auto v = random_distortionless(rng, steer);
        REQUIRE(std::abs(v.dot(steer) - 1.0) < 1e-9);
        CHECK(best <= v.dot(r * v).real() + 1e-12);
      }
    }
  }
}

TEST_CASE("heavy loading approaches delay-and-sum monotonically") {
  const auto geom = ArrayGeometry::circular7();
  const auto sel = select_opposite_pair(geom);
  for (double f : {250.0, 1000.0, 4000.0}) {
    const auto gamma = diffuse_coherence(geom, sel, f);
    const auto d = steering_vector(geom, sel, {0.4, 0.0}, f);
    double prev = 1e300;
    for (double sigma : {0.01, 0.1, 1.0, 10.0, 100.0, 1e4}) {
      const double dist = (superdirective_weights(gamma, d, sigma) - d / 2.0).norm();
      CHECK(dist <= prev + 1e-15);
      prev = dist;
    }
    CHECK(prev < 1e-4);
  }
}

TEST_CASE("complex blocks") {
  CHECK(complex_block(cd(1, 0)).isApprox(Eigen::Matrix2d::Identity()));
  Eigen::Matrix2d rot;
  rot << 0, -1, 1, 0;
  CHECK(complex_block(cd(0, 1)) == rot);
}

TEST_CASE("block affine parameters round-trip and implement w^H x") {
  const auto geom = ArrayGeometry::circular7();
  const auto sel = select_opposite_pair(geom);
  auto bank = build_bank(geom, sel, default_look_directions(3), 32);
  Rng rng(5);
  for (std::size_t k = 0; k < bank.num_bins(); ++k)
    for (std::size_t d = 0; d < 3; ++d)
      for (std::size_t m = 0; m < 2; ++m) bank.weight(k, d, m) = cd(rng.normal(), rng.normal());
  const auto params = bank_to_block_affine(bank);
  for (double b : params.bias) CHECK(b == 0.0);
  CHECK(block_affine_to_bank(params, bank.bin_frequencies()) == bank);

  for (std::size_t k = 0; k < bank.num_bins(); ++k) {
    Eigen::VectorXcd x(2);
    x << cd(rng.normal(), rng.normal()), cd(rng.normal(), rng.normal());
    for (std::size_t d = 0; d < 3; ++d) {
      Eigen::Vector2d acc = Eigen::Vector2d::Zero();
      for (std::size_t m = 0; m < 2; ++m) {
        acc += params.block(k, d, m) * Eigen::Vector2d(x(Eigen::Index(m)).real(), x(Eigen::Index(m)).imag());
      }
      const cd direct = bank.weight_vector(k, d).dot(x);
      CHECK(std::abs(cd(acc(0), acc(1)) - direct) < 1e-12);
    }
  }
}

TEST_CASE("bank serialization") {
  const auto geom = ArrayGeometry::circular7();
  const auto bank = build_bank(geom, select_opposite_pair(geom), default_look_directions(12), 256);
  std::stringstream ss;
  write_bank(ss, bank);
  CHECK(read_bank(ss) == bank);
  std::stringstream bad("XXXX");
  CHECK_THROWS(read_bank(bad));
}
