#include "farfield/geometry.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include <json.hpp>

#include "farfield/errors.hpp"

namespace farfield {

namespace {

void check_frequency(const ArrayGeometry& geom, double freq) {
  if (!(freq >= 0.0) || freq > geom.sample_rate / 2.0) {
    throw std::domain_error("frequency " + std::to_string(freq) +
                            " Hz outside [0, sample_rate/2]");
  }
}

}  // namespace

double sinc(double x) {
  if (std::abs(x) < 1e-8) return 1.0 - x * x / 6.0;
  return std::sin(x) / x;
}

Eigen::Vector3d ArrayGeometry::centroid() const {
  Eigen::Vector3d c = Eigen::Vector3d::Zero();
  for (const auto& p : mic_positions) c += p;
  return mic_positions.empty() ? c : Eigen::Vector3d(c / double(mic_positions.size()));
}

void ArrayGeometry::validate() const {
  if (mic_positions.size() < 2) throw std::domain_error("array needs at least 2 microphones");
  for (const auto& p : mic_positions) {
    if (!p.allFinite()) throw std::domain_error("non-finite microphone position");
  }
  if (!(speed_of_sound > 0.0) || !std::isfinite(speed_of_sound)) {
    throw std::domain_error("speed of sound must be positive");
  }
  if (!(sample_rate > 0.0) || !std::isfinite(sample_rate)) {
    throw std::domain_error("sample rate must be positive");
  }
}

ArrayGeometry ArrayGeometry::circular7() {
  ArrayGeometry g;
  const double radius = 0.072 / 2.0;
  for (int i = 0; i < 6; ++i) {
    const double a = 2.0 * std::numbers::pi * i / 6.0;
    g.mic_positions.emplace_back(radius * std::cos(a), radius * std::sin(a), 0.0);
  }
  g.mic_positions.emplace_back(0.0, 0.0, 0.0);
  return g;
}

ArrayGeometry geometry_preset(const std::string& name) {
  if (name == "circular-7") return ArrayGeometry::circular7();
  throw std::domain_error("unknown geometry preset '" + name + "'");
}

ArrayGeometry load_geometry(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open geometry file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed geometry file " + path + ": " + e.what());
  }
  ArrayGeometry g;
  if (j.contains("preset")) {
    g = geometry_preset(j.at("preset").get<std::string>());
  } else {
    for (const auto& p : j.at("mic_positions")) {
      if (p.size() != 3) throw std::domain_error("mic position must have 3 coordinates");
      g.mic_positions.emplace_back(p[0].get<double>(), p[1].get<double>(), p[2].get<double>());
    }
  }
  if (j.contains("speed_of_sound")) g.speed_of_sound = j["speed_of_sound"].get<double>();
  if (j.contains("sample_rate")) g.sample_rate = j["sample_rate"].get<double>();
  g.validate();
  return g;
}

Eigen::Vector3d LookDirection::unit_vector() const {
  return {std::cos(elevation) * std::cos(azimuth), std::cos(elevation) * std::sin(azimuth),
          std::sin(elevation)};
}

void SubarraySelection::validate(const ArrayGeometry& geom) const {
  if (mic_indices.empty()) throw std::domain_error("empty microphone selection");
  for (std::size_t i = 0; i < mic_indices.size(); ++i) {
    if (mic_indices[i] >= geom.num_mics()) {
      throw std::domain_error("microphone index " + std::to_string(mic_indices[i]) +
                              " out of range");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (mic_indices[i] == mic_indices[j]) throw std::domain_error("duplicate microphone index");
    }
  }
}

std::vector<double> plane_wave_delays(const ArrayGeometry& geom, const SubarraySelection& sel,
                                      const LookDirection& dir) {
  sel.validate(geom);
  const Eigen::Vector3d u = dir.unit_vector();
  const Eigen::Vector3d ref = geom.centroid();
  std::vector<double> tau(sel.size());
  for (std::size_t m = 0; m < sel.size(); ++m) {
    tau[m] = -u.dot(geom.mic_positions[sel.mic_indices[m]] - ref) / geom.speed_of_sound;
  }
  return tau;
}

Eigen::VectorXcd steering_vector(const ArrayGeometry& geom, const SubarraySelection& sel,
                                 const LookDirection& dir, double freq) {
  check_frequency(geom, freq);
  const auto tau = plane_wave_delays(geom, sel, dir);
  Eigen::VectorXcd d(sel.size());
  for (std::size_t m = 0; m < sel.size(); ++m) {
    d(Eigen::Index(m)) = std::polar(1.0, -2.0 * std::numbers::pi * freq * tau[m]);
  }
  return d;
}

Eigen::MatrixXd diffuse_coherence(const ArrayGeometry& geom, const SubarraySelection& sel,
                                  double freq) {
  check_frequency(geom, freq);
  sel.validate(geom);
  const auto n = Eigen::Index(sel.size());
  Eigen::MatrixXd gamma(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    gamma(i, i) = 1.0;
    for (Eigen::Index j = 0; j < i; ++j) {
      const double dist =
          (geom.mic_positions[sel.mic_indices[i]] - geom.mic_positions[sel.mic_indices[j]]).norm();
      gamma(i, j) = gamma(j, i) = sinc(2.0 * std::numbers::pi * freq * dist / geom.speed_of_sound);
    }
  }
  return gamma;
}

std::vector<LookDirection> default_look_directions(std::size_t count) {
  if (count == 0) throw std::domain_error("look direction count must be >= 1");
  std::vector<LookDirection> dirs(count);
  for (std::size_t i = 0; i < count; ++i) {
    dirs[i].azimuth = 2.0 * std::numbers::pi * double(i) / double(count);
  }
  return dirs;
}

SubarraySelection select_opposite_pair(const ArrayGeometry& geom) {
  if (geom.num_mics() < 2) throw std::domain_error("need at least 2 microphones");
  std::size_t best_i = 0, best_j = 1;
  double best = -1.0;
  for (std::size_t i = 0; i < geom.num_mics(); ++i) {
    for (std::size_t j = i + 1; j < geom.num_mics(); ++j) {
      const double d = (geom.mic_positions[i] - geom.mic_positions[j]).norm();
      // Values within rounding noise count as ties; the earlier pair wins.
      if (d > best + 1e-12) {
        best = d;
        best_i = i;
        best_j = j;
      }
    }
  }
  return SubarraySelection{{best_i, best_j}};
}

}  // namespace farfield
