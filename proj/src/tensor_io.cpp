#include "farfield/tensor_io.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "farfield/errors.hpp"

namespace farfield {

namespace binio {

namespace {
template <typename T>
void put(std::ostream& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.write(buf, sizeof(T));
}
template <typename T>
T get(std::istream& in) {
  char buf[sizeof(T)];
  if (!in.read(buf, sizeof(T))) throw IoError("truncated binary file");
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}
}  // namespace

void write_u32(std::ostream& out, std::uint32_t v) { put(out, v); }
void write_u64(std::ostream& out, std::uint64_t v) { put(out, v); }
void write_f64(std::ostream& out, double v) { put(out, v); }
void write_f64s(std::ostream& out, const double* v, std::size_t n) {
  out.write(reinterpret_cast<const char*>(v), std::streamsize(n * sizeof(double)));
}
std::uint32_t read_u32(std::istream& in) { return get<std::uint32_t>(in); }
std::uint64_t read_u64(std::istream& in) { return get<std::uint64_t>(in); }
double read_f64(std::istream& in) { return get<double>(in); }
void read_f64s(std::istream& in, double* v, std::size_t n) {
  if (!in.read(reinterpret_cast<char*>(v), std::streamsize(n * sizeof(double)))) {
    throw IoError("truncated binary file");
  }
}
void expect_magic(std::istream& in, const char (&magic)[5]) {
  char buf[4];
  if (!in.read(buf, 4) || std::memcmp(buf, magic, 4) != 0) {
    throw IoError(std::string("bad magic, expected ") + magic);
  }
}

}  // namespace binio

using namespace binio;

void write_feature_tensor(std::ostream& out, const FeatureTensor& t) {
  out.write("FFTN", 4);
  write_u32(out, 1);
  write_u32(out, std::uint32_t(t.stage));
  write_u32(out, std::uint32_t(t.shape.size()));
  for (auto d : t.shape) write_u64(out, d);
  write_f64(out, t.frame_rate);
  write_f64s(out, t.data.data(), std::size_t(t.data.size()));
  if (!out) throw IoError("failed writing feature tensor");
}

FeatureTensor read_feature_tensor(std::istream& in) {
  expect_magic(in, "FFTN");
  if (read_u32(in) != 1) throw IoError("unsupported feature tensor version");
  FeatureTensor t;
  const auto stage = read_u32(in);
  if (stage > std::uint32_t(Stage::stacked)) throw IoError("unknown feature stage");
  t.stage = Stage(stage);
  const auto ndim = read_u32(in);
  if (ndim == 0 || ndim > 8) throw IoError("bad tensor rank");
  std::size_t width = 1;
  for (std::uint32_t i = 0; i < ndim; ++i) {
    t.shape.push_back(read_u64(in));
    if (i > 0) width *= t.shape.back();
  }
  t.frame_rate = read_f64(in);
  t.data.resize(Eigen::Index(t.shape[0]), Eigen::Index(width));
  read_f64s(in, t.data.data(), std::size_t(t.data.size()));
  return t;
}

void save_feature_tensor(const std::string& path, const FeatureTensor& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  write_feature_tensor(out, t);
}

FeatureTensor load_feature_tensor(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  return read_feature_tensor(in);
}

void write_bank(std::ostream& out, const BeamformerBank& bank) {
  out.write("FFBK", 4);
  write_u32(out, 1);
  write_u64(out, bank.num_bins());
  write_u64(out, bank.num_directions());
  write_u64(out, bank.num_mics());
  write_f64s(out, bank.bin_frequencies().data(), bank.num_bins());
  for (const auto& w : bank.flat()) {
    write_f64(out, w.real());
    write_f64(out, w.imag());
  }
  if (!out) throw IoError("failed writing beamformer bank");
}

BeamformerBank read_bank(std::istream& in) {
  expect_magic(in, "FFBK");
  if (read_u32(in) != 1) throw IoError("unsupported bank version");
  const auto bins = read_u64(in), dirs = read_u64(in), mics = read_u64(in);
  if (bins * dirs * mics > (std::uint64_t(1) << 32)) throw IoError("implausible bank shape");
  std::vector<double> freqs(bins);
  read_f64s(in, freqs.data(), bins);
  BeamformerBank bank(bins, dirs, mics, std::move(freqs));
  for (std::size_t k = 0; k < bins; ++k) {
    for (std::size_t d = 0; d < dirs; ++d) {
      for (std::size_t m = 0; m < mics; ++m) {
        const double re = read_f64(in);
        const double im = read_f64(in);
        bank.weight(k, d, m) = {re, im};
      }
    }
  }
  return bank;
}

void save_bank(const std::string& path, const BeamformerBank& bank) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  write_bank(out, bank);
}

BeamformerBank load_bank(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  return read_bank(in);
}

}  // namespace farfield
