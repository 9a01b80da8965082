#include "farfield/wav.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "farfield/errors.hpp"

namespace farfield {

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff),
                     char((v >> 24) & 0xff)};
  out.write(b, 4);
}
void put_u16(std::ostream& out, std::uint16_t v) {
  const char b[2] = {char(v & 0xff), char((v >> 8) & 0xff)};
  out.write(b, 2);
}
std::uint32_t le32(const unsigned char* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
         (std::uint32_t(p[3]) << 24);
}
std::uint16_t le16(const unsigned char* p) { return std::uint16_t(p[0] | (p[1] << 8)); }

}  // namespace

void write_wav(const std::string& path, const AudioClip& clip) {
  clip.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  const auto ch = std::uint16_t(clip.num_channels());
  const auto data_bytes = std::uint32_t(clip.num_samples() * ch * 2);
  out.write("RIFF", 4);
  put_u32(out, 36 + data_bytes);
  out.write("WAVEfmt ", 8);
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, ch);
  put_u32(out, std::uint32_t(clip.sample_rate));
  put_u32(out, std::uint32_t(clip.sample_rate) * ch * 2);
  put_u16(out, std::uint16_t(ch * 2));
  put_u16(out, 16);
  out.write("data", 4);
  put_u32(out, data_bytes);
  std::vector<char> buf(data_bytes);
  std::size_t o = 0;
  for (std::size_t n = 0; n < clip.num_samples(); ++n) {
    for (std::size_t c = 0; c < ch; ++c) {
      const auto v = std::uint16_t(clip.channels[c][n]);
      buf[o++] = char(v & 0xff);
      buf[o++] = char(v >> 8);
    }
  }
  out.write(buf.data(), std::streamsize(buf.size()));
  if (!out) throw IoError("failed writing " + path);
}

AudioClip read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw IoError(path + " is not a RIFF/WAVE file");
  }
  std::size_t pos = 12;
  int channels = 0, rate = 0, bits = 0, format = 0;
  const unsigned char* data = nullptr;
  std::uint32_t data_size = 0;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* id = bytes.data() + pos;
    const std::uint32_t size = le32(id + 4);
    const unsigned char* body = id + 8;
    if (pos + 8 + size > bytes.size()) throw IoError(path + ": truncated chunk");
    if (std::memcmp(id, "fmt ", 4) == 0 && size >= 16) {
      format = le16(body);
      channels = le16(body + 2);
      rate = int(le32(body + 4));
      bits = le16(body + 14);
    } else if (std::memcmp(id, "data", 4) == 0) {
      data = body;
      data_size = size;
    }
    pos += 8 + size + (size & 1);
  }
  if (format != 1 || bits != 16 || channels < 1 || !data) {
    throw IoError(path + ": only 16-bit PCM WAV is supported");
  }
  AudioClip clip;
  clip.sample_rate = rate;
  const std::size_t frames = data_size / (2u * unsigned(channels));
  clip.channels.assign(std::size_t(channels), std::vector<std::int16_t>(frames));
  for (std::size_t n = 0; n < frames; ++n) {
    for (int c = 0; c < channels; ++c) {
      clip.channels[std::size_t(c)][n] = std::int16_t(le16(data + (n * unsigned(channels) + unsigned(c)) * 2));
    }
  }
  return clip;
}

}  // namespace farfield
