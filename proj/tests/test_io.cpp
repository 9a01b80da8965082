#include <doctest.h>

#include <filesystem>
#include <sstream>

#include "farfield/errors.hpp"
#include "farfield/rng.hpp"
#include "farfield/tensor_io.hpp"

using namespace farfield;

TEST_CASE("feature tensor round trip") {
  Rng rng(1);
  for (Stage st : {Stage::complex_stft, Stage::directional_power, Stage::log_mfb, Stage::stacked}) {
    FeatureTensor t;
    t.stage = st;
    t.shape = {4, 3, 5};
    t.data.resize(4, 15);
    for (Eigen::Index i = 0; i < t.data.size(); ++i) t.data.data()[i] = rng.normal();
    t.frame_rate = 100.0 / 3.0;
    std::stringstream ss;
    write_feature_tensor(ss, t);
    CHECK(read_feature_tensor(ss) == t);
  }
  FeatureTensor empty;
  empty.shape = {0, 192};
  empty.data.resize(0, 192);
  const auto path = std::filesystem::temp_directory_path() / "farfield_empty.fft";
  save_feature_tensor(path.string(), empty);
  CHECK(load_feature_tensor(path.string()) == empty);
}

TEST_CASE("corrupt inputs") {
  std::stringstream bad("XXXXabcdefgh");
  CHECK_THROWS_AS(read_feature_tensor(bad), IoError);
  FeatureTensor t;
  t.shape = {2, 2};
  t.data = Mat::Ones(2, 2);
  std::stringstream ss;
  write_feature_tensor(ss, t);
  const std::string bytes = ss.str();
  std::stringstream truncated(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(read_feature_tensor(truncated), IoError);
  CHECK_THROWS_AS(load_feature_tensor("/nonexistent/t.fft"), IoError);
  CHECK_THROWS_AS(load_bank("/nonexistent/b.ffbk"), IoError);
}

TEST_CASE("binary helpers") {
  using namespace binio;
  std::stringstream ss;
  write_u32(ss, 0xdeadbeef);
  write_u64(ss, 1ull << 40);
  write_f64(ss, -0.125);
  CHECK(read_u32(ss) == 0xdeadbeef);
  CHECK(read_u64(ss) == (1ull << 40));
  CHECK(read_f64(ss) == -0.125);
}
