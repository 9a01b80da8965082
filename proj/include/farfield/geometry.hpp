#pragma once

#include <complex>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace farfield {

/// Microphone array description. Positions are in meters.
struct ArrayGeometry {
  std::vector<Eigen::Vector3d> mic_positions;
  double speed_of_sound = 343.0;
  double sample_rate = 16000.0;

  std::size_t num_mics() const { return mic_positions.size(); }
  Eigen::Vector3d centroid() const;

  /// Throws std::domain_error unless there are >= 2 finite positions and
  /// positive acoustic constants.
  void validate() const;

  /// Six ring mics on a 72 mm diameter circle (indices 0..5, starting on the
  /// +x axis, counter-clockwise) plus one center mic (index 6), 16 kHz.
  static ArrayGeometry circular7();
};

/// Looks up a built-in preset ("circular-7") or throws.
ArrayGeometry geometry_preset(const std::string& name);

/// Reads a JSON geometry file:
///   {"mic_positions": [[x,y,z], ...], "speed_of_sound": 343, "sample_rate": 16000}
/// or {"preset": "circular-7"}.
ArrayGeometry load_geometry(const std::string& path);

struct LookDirection {
  double azimuth = 0.0;    // [0, 2pi)
  double elevation = 0.0;  // [-pi/2, pi/2]

  /// Unit vector from the array toward the source.
  Eigen::Vector3d unit_vector() const;
};

struct SubarraySelection {
  std::vector<std::size_t> mic_indices;

  std::size_t size() const { return mic_indices.size(); }
  void validate(const ArrayGeometry& geom) const;
};

/// Far-field plane-wave steering vector. Delays are referenced to the
/// centroid of the full array: tau_m = -(u . (p_m - centroid)) / c, entry
/// exp(-j 2 pi f tau_m), with u pointing toward the source.
Eigen::VectorXcd steering_vector(const ArrayGeometry& geom, const SubarraySelection& sel,
                                 const LookDirection& dir, double freq);

/// Per-mic propagation delays in seconds (same convention as steering_vector).
std::vector<double> plane_wave_delays(const ArrayGeometry& geom, const SubarraySelection& sel,
                                      const LookDirection& dir);

/// Spherically isotropic noise coherence: sin(2 pi f d_ij / c) / (2 pi f d_ij / c).
Eigen::MatrixXd diffuse_coherence(const ArrayGeometry& geom, const SubarraySelection& sel,
                                  double freq);

std::vector<LookDirection> default_look_directions(std::size_t count);

/// The maximally separated mic pair, lowest index pair on ties.
SubarraySelection select_opposite_pair(const ArrayGeometry& geom);

double sinc(double x);

}  // namespace farfield
