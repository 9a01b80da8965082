#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace farfield {

/// Frame-major dense matrix: one row per frame.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

/// Named view of one contiguous parameter block.
struct ParamSpan {
  std::string name;
  std::span<double> values;
};

struct ConstParamSpan {
  std::string name;
  std::span<const double> values;
};

inline std::span<double> as_span(Mat& m) { return {m.data(), std::size_t(m.size())}; }
inline std::span<double> as_span(Vec& v) { return {v.data(), std::size_t(v.size())}; }
inline std::span<double> as_span(std::vector<double>& v) { return {v.data(), v.size()}; }

}  // namespace farfield
