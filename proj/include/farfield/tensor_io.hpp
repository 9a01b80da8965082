#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "farfield/beamformer.hpp"
#include "farfield/frontend.hpp"

namespace farfield {

// Little-endian binary snapshots.
//
// Feature tensor: "FFTN" u32 version, u32 stage, u32 ndim, u64 dims[ndim],
//                 f64 frame_rate, f64 data[prod(dims)] (row-major).
// Beamformer bank: "FFBK" u32 version, u64 bins, u64 dirs, u64 mics,
//                  f64 bin_frequencies[bins], f64 weights[bins][dirs][mics][re,im].

void write_feature_tensor(std::ostream& out, const FeatureTensor& t);
FeatureTensor read_feature_tensor(std::istream& in);
void save_feature_tensor(const std::string& path, const FeatureTensor& t);
FeatureTensor load_feature_tensor(const std::string& path);

void write_bank(std::ostream& out, const BeamformerBank& bank);
BeamformerBank read_bank(std::istream& in);
void save_bank(const std::string& path, const BeamformerBank& bank);
BeamformerBank load_bank(const std::string& path);

namespace binio {

void write_u32(std::ostream& out, std::uint32_t v);
void write_u64(std::ostream& out, std::uint64_t v);
void write_f64(std::ostream& out, double v);
void write_f64s(std::ostream& out, const double* v, std::size_t n);
std::uint32_t read_u32(std::istream& in);
std::uint64_t read_u64(std::istream& in);
double read_f64(std::istream& in);
void read_f64s(std::istream& in, double* v, std::size_t n);
void expect_magic(std::istream& in, const char (&magic)[5]);

}  // namespace binio

}  // namespace farfield
