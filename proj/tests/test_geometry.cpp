#include <doctest.h>

#include <cmath>
#include <fstream>
#include <numbers>

#include "farfield/geometry.hpp"
#include "farfield/rng.hpp"

using namespace farfield;

namespace {

ArrayGeometry two_mic_x() {
  ArrayGeometry g;
  g.mic_positions = {{-0.036, 0, 0}, {0.036, 0, 0}};
  return g;
}

}  // namespace

TEST_CASE("default geometry is the 7-mic 72 mm ring") {
  const auto g = ArrayGeometry::circular7();
  CHECK(g.num_mics() == 7);
  CHECK(g.sample_rate == 16000.0);
  CHECK(g.speed_of_sound == 343.0);
  for (int i = 0; i < 6; ++i) CHECK(g.mic_positions[i].norm() == doctest::Approx(0.036));
  CHECK(g.mic_positions[6].norm() == 0.0);
  CHECK_NOTHROW(g.validate());
  CHECK(geometry_preset("circular-7").mic_positions == g.mic_positions);
  CHECK_THROWS_AS(geometry_preset("nope"), std::domain_error);
}

TEST_CASE("geometry validation") {
  ArrayGeometry g;
  g.mic_positions = {{0, 0, 0}};
  CHECK_THROWS_AS(g.validate(), std::domain_error);
  g.mic_positions = {{0, 0, 0}, {NAN, 0, 0}};
  CHECK_THROWS_AS(g.validate(), std::domain_error);
  SubarraySelection dup{{0, 0}};
  CHECK_THROWS_AS(dup.validate(two_mic_x()), std::domain_error);
  SubarraySelection oob{{0, 5}};
  CHECK_THROWS_AS(oob.validate(two_mic_x()), std::domain_error);
}

TEST_CASE("geometry config file") {
  const std::string path = "geometry_test.json";
  {
    std::ofstream f(path);
    f << R"({"mic_positions": [[0,0,0],[0.1,0,0],[0,0.1,0]], "speed_of_sound": 340})";
  }
  const auto g = load_geometry(path);
  CHECK(g.num_mics() == 3);
  CHECK(g.speed_of_sound == 340.0);
  {
    std::ofstream f(path);
    f << R"({"preset": "circular-7"})";
  }
  CHECK(load_geometry(path).num_mics() == 7);
  std::remove(path.c_str());
}

TEST_CASE("steering vector") {
  const auto g = two_mic_x();
  const SubarraySelection sel{{0, 1}};
  SUBCASE("zero frequency is all ones") {
    const auto d = steering_vector(g, sel, {1.1, 0.2}, 0.0);
    for (Eigen::Index i = 0; i < d.size(); ++i) CHECK(std::abs(d(i) - 1.0) < 1e-15);
  }
  SUBCASE("unit magnitude") {
    Rng rng(3);
    const auto g7 = ArrayGeometry::circular7();
    const SubarraySelection all{{0, 1, 2, 3, 4, 5, 6}};
    for (int trial = 0; trial < 50; ++trial) {
      LookDirection dir{rng.uniform(0, 2 * std::numbers::pi), rng.uniform(-1.5, 1.5)};
      const auto d = steering_vector(g7, all, dir, rng.uniform(0, 8000));
      for (Eigen::Index i = 0; i < d.size(); ++i) CHECK(std::abs(d(i)) == doctest::Approx(1.0));
    }
  }
  SUBCASE("end-fire phase difference matches the hand-computed delay") {
    // Source on +x: mic 1 (x = +0.036) hears it 0.072/343 s before mic 0.
    const auto d = steering_vector(g, sel, {0.0, 0.0}, 1000.0);
    const double expected = 2 * std::numbers::pi * 1000.0 * 0.072 / 343.0;
    const double diff = std::arg(d(1) / d(0));
    CHECK(diff == doctest::Approx(expected).epsilon(1e-12));
  }
  SUBCASE("translation invariance") {
    auto shifted = ArrayGeometry::circular7();
    for (auto& p : shifted.mic_positions) p += Eigen::Vector3d(1.5, -0.3, 0.7);
    const SubarraySelection all{{0, 1, 2, 3, 4, 5, 6}};
    const LookDirection dir{0.7, 0.1};
    const auto a = steering_vector(ArrayGeometry::circular7(), all, dir, 3000.0);
    const auto b = steering_vector(shifted, all, dir, 3000.0);
    CHECK((a - b).norm() < 1e-12);
  }
  SUBCASE("frequency out of range") {
    CHECK_THROWS_AS(steering_vector(g, sel, {}, -1.0), std::domain_error);
    CHECK_THROWS_AS(steering_vector(g, sel, {}, 8000.1), std::domain_error);
  }
}

TEST_CASE("diffuse coherence") {
  const auto g = two_mic_x();
  const SubarraySelection sel{{0, 1}};
  CHECK(diffuse_coherence(g, sel, 0.0).isApprox(Eigen::MatrixXd::Ones(2, 2)));
  const auto gamma = diffuse_coherence(g, sel, 1000.0);
  const double x = 2 * std::numbers::pi * 1000.0 * 0.072 / 343.0;
  CHECK(x == doctest::Approx(1.318919).epsilon(1e-6));
  CHECK(gamma(0, 1) == doctest::Approx(std::sin(x) / x).epsilon(1e-14));
  CHECK(gamma(0, 0) == 1.0);

  const auto g7 = ArrayGeometry::circular7();
  const SubarraySelection all{{0, 1, 2, 3, 4, 5, 6}};
  for (double f = 0; f <= 8000; f += 250) {
    const auto m = diffuse_coherence(g7, all, f);
    CHECK((m - m.transpose()).norm() == 0.0);
    CHECK(m.diagonal().isApprox(Eigen::VectorXd::Ones(7)));
    CHECK(m.minCoeff() >= -0.2173);
    CHECK(m.maxCoeff() <= 1.0);
    // Loaded with the default sigma the matrix stays positive definite.
    Eigen::LLT<Eigen::MatrixXd> llt(m + 0.01 * Eigen::MatrixXd::Identity(7, 7));
    CHECK(llt.info() == Eigen::Success);
  }
}

TEST_CASE("default look directions") {
  CHECK_THROWS_AS(default_look_directions(0), std::domain_error);
  auto one = default_look_directions(1);
  REQUIRE(one.size() == 1);
  CHECK(one[0].azimuth == 0.0);
  auto four = default_look_directions(4);
  for (int i = 0; i < 4; ++i) CHECK(four[i].azimuth == doctest::Approx(i * std::numbers::pi / 2));
  auto twelve = default_look_directions(12);
  REQUIRE(twelve.size() == 12);
  for (int i = 1; i < 12; ++i) {
    CHECK(twelve[i].azimuth - twelve[i - 1].azimuth == doctest::Approx(std::numbers::pi / 6));
    CHECK(twelve[i].elevation == 0.0);
  }
  CHECK(twelve.back().azimuth < 2 * std::numbers::pi);
}

TEST_CASE("opposite pair selection") {
  const auto g7 = ArrayGeometry::circular7();
  const auto sel = select_opposite_pair(g7);
  REQUIRE(sel.size() == 2);
  CHECK(sel.mic_indices[0] == 0);
  CHECK(sel.mic_indices[1] == 3);
  CHECK((g7.mic_positions[0] - g7.mic_positions[3]).norm() == doctest::Approx(0.072));

  CHECK(select_opposite_pair(two_mic_x()).mic_indices == std::vector<std::size_t>{0, 1});

  // Brute force over all pairs of a hexagon of radius r.
  ArrayGeometry hex;
  const double r = 0.05;
  for (int i = 0; i < 6; ++i) {
    const double a = 2 * std::numbers::pi * i / 6 + 0.3;
    hex.mic_positions.emplace_back(r * std::cos(a), r * std::sin(a), 0);
  }
  double best = 0;
  for (int i = 0; i < 6; ++i)
    for (int j = i + 1; j < 6; ++j) best = std::max(best, (hex.mic_positions[i] - hex.mic_positions[j]).norm());
  const auto hs = select_opposite_pair(hex);
  CHECK((hex.mic_positions[hs.mic_indices[0]] - hex.mic_positions[hs.mic_indices[1]]).norm() ==
        doctest::Approx(best));
  CHECK(best == doctest::Approx(2 * r));

  ArrayGeometry single;
  single.mic_positions = {{0, 0, 0}};
  CHECK_THROWS_AS(select_opposite_pair(single), std::domain_error);
}
