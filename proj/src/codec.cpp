#include "farfield/codec.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <memory>
#include <sstream>
#include <stdexcept>

#include <opus.h>

#include "farfield/errors.hpp"
#include "farfield/tensor_io.hpp"

namespace farfield {

void AudioClip::validate() const {
  if (sample_rate <= 0) throw std::domain_error("sample rate must be positive");
  for (const auto& ch : channels) {
    if (ch.size() != num_samples()) throw std::domain_error("channels must have equal length");
  }
}

std::vector<std::vector<double>> AudioClip::to_double() const {
  std::vector<std::vector<double>> out(channels.size());
  for (std::size_t c = 0; c < channels.size(); ++c) {
    out[c].resize(channels[c].size());
    for (std::size_t n = 0; n < channels[c].size(); ++n) out[c][n] = channels[c][n] / 32768.0;
  }
  return out;
}

AudioClip AudioClip::from_double(const std::vector<std::vector<double>>& x, int sample_rate) {
  AudioClip clip;
  clip.sample_rate = sample_rate;
  clip.channels.resize(x.size());
  for (std::size_t c = 0; c < x.size(); ++c) {
    clip.channels[c].resize(x[c].size());
    for (std::size_t n = 0; n < x[c].size(); ++n) {
      const double v = std::nearbyint(x[c][n] * 32768.0);
      clip.channels[c][n] = std::int16_t(std::clamp(v, -32768.0, 32767.0));
    }
  }
  clip.validate();
  return clip;
}

const std::vector<int>& supported_kbps() {
  static const std::vector<int> rates = {8, 16, 32, 64, 128, 132, 136, 144, 160, 192, 256};
  return rates;
}

Bitrate Bitrate::kbps(int rate) {
  const auto& ok = supported_kbps();
  if (std::find(ok.begin(), ok.end(), rate) == ok.end()) {
    throw std::domain_error("unsupported bitrate " + std::to_string(rate) + " kbps");
  }
  return Bitrate(rate);
}

Bitrate Bitrate::parse(const std::string& text) {
  if (text == "u" || text == "U" || text == "uncompressed") return uncompressed();
  std::size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(text, &used);
  } catch (const std::exception&) {
    throw std::domain_error("cannot parse bitrate '" + text + "'");
  }
  if (used != text.size()) throw std::domain_error("cannot parse bitrate '" + text + "'");
  return kbps(v);
}

std::string Bitrate::to_string() const {
  return is_uncompressed() ? "uncompressed" : std::to_string(*kbps_);
}

BitratePlan BitratePlan::uniform(std::size_t channels, Bitrate rate) {
  return BitratePlan{std::vector<Bitrate>(channels, rate)};
}

BitratePlan BitratePlan::parse(const std::string& text) {
  BitratePlan plan;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) plan.per_channel.push_back(Bitrate::parse(item));
  if (plan.per_channel.empty()) throw std::domain_error("empty bitrate plan");
  return plan;
}

std::string BitratePlan::to_string() const {
  std::string s;
  for (std::size_t i = 0; i < per_channel.size(); ++i) {
    if (i) s += ",";
    s += per_channel[i].is_uncompressed() ? "u" : std::to_string(per_channel[i].kbps_value());
  }
  return s;
}

int BitratePlan::total_budget_kbps() const {
  int total = 0;
  for (const auto& r : per_channel) total += r.budget_kbps();
  return total;
}

bool BitratePlan::all_uncompressed() const {
  return std::all_of(per_channel.begin(), per_channel.end(),
                     [](const Bitrate& r) { return r.is_uncompressed(); });
}

namespace {

struct EncoderDeleter {
  void operator()(OpusEncoder* e) const { opus_encoder_destroy(e); }
};
struct DecoderDeleter {
  void operator()(OpusDecoder* d) const { opus_decoder_destroy(d); }
};
using EncoderPtr = std::unique_ptr<OpusEncoder, EncoderDeleter>;
using DecoderPtr = std::unique_ptr<OpusDecoder, DecoderDeleter>;

int frame_duration_ctl(int ms) {
  switch (ms) {
    case 10: return OPUS_FRAMESIZE_10_MS;
    case 20: return OPUS_FRAMESIZE_20_MS;
    case 40: return OPUS_FRAMESIZE_40_MS;
    case 60: return OPUS_FRAMESIZE_60_MS;
  }
  throw std::domain_error("unsupported codec frame duration " + std::to_string(ms) + " ms");
}

EncoderPtr make_encoder(int sample_rate, int kbps, const CodecSettings& s, int channel) {
  int err = OPUS_OK;
  const int app = s.application == Application::voip ? OPUS_APPLICATION_VOIP
                                                     : OPUS_APPLICATION_AUDIO;
  EncoderPtr enc(opus_encoder_create(sample_rate, 1, app, &err));
  if (err != OPUS_OK || !enc) throw CodecError(channel, std::string("encoder: ") + opus_strerror(err));
  auto ctl = [&](int rc, const char* what) {
    if (rc != OPUS_OK) throw CodecError(channel, std::string(what) + ": " + opus_strerror(rc));
  };
  ctl(opus_encoder_ctl(enc.get(), OPUS_SET_BITRATE(kbps * 1000)), "set bitrate");
  ctl(opus_encoder_ctl(enc.get(), OPUS_SET_VBR(s.vbr ? 1 : 0)), "set vbr");
  ctl(opus_encoder_ctl(enc.get(), OPUS_SET_COMPLEXITY(s.complexity)), "set complexity");
  ctl(opus_encoder_ctl(enc.get(), OPUS_SET_LSB_DEPTH(16)), "set lsb depth");
  ctl(opus_encoder_ctl(enc.get(), OPUS_SET_EXPERT_FRAME_DURATION(frame_duration_ctl(s.frame_ms))),
      "set frame duration");
  return enc;
}

int lookahead_of(OpusEncoder* enc, int channel) {
  opus_int32 lookahead = 0;
  const int rc = opus_encoder_ctl(enc, OPUS_GET_LOOKAHEAD(&lookahead));
  if (rc != OPUS_OK) throw CodecError(channel, std::string("lookahead: ") + opus_strerror(rc));
  return int(lookahead);
}

std::vector<std::vector<std::uint8_t>> encode_padded(OpusEncoder* enc,
                                                     const std::vector<std::int16_t>& pcm,
                                                     std::size_t frame, int channel) {
  std::vector<std::vector<std::uint8_t>> packets;
  std::vector<std::int16_t> buf(frame);
  std::vector<unsigned char> out(4000);
  for (std::size_t start = 0; start < pcm.size(); start += frame) {
    std::fill(buf.begin(), buf.end(), 0);
    std::copy(pcm.begin() + std::ptrdiff_t(start),
              pcm.begin() + std::ptrdiff_t(std::min(pcm.size(), start + frame)), buf.begin());
    const int n = opus_encode(enc, buf.data(), int(frame), out.data(), opus_int32(out.size()));
    if (n < 0) throw CodecError(channel, std::string("encode: ") + opus_strerror(n));
    packets.emplace_back(out.begin(), out.begin() + n);
  }
  return packets;
}

std::vector<std::int16_t> transcode_channel(const std::vector<std::int16_t>& pcm, int sample_rate,
                                            int kbps, const CodecSettings& s, int channel) {
  auto enc = make_encoder(sample_rate, kbps, s, channel);
  const int lookahead = lookahead_of(enc.get(), channel);
  const auto frame = std::size_t(sample_rate * s.frame_ms / 1000);

  // Zero tail so the last input samples make it through the lookahead.
  std::vector<std::int16_t> padded(pcm);
  padded.resize(pcm.size() + std::size_t(lookahead), 0);
  const auto packets = encode_padded(enc.get(), padded, frame, channel);

  int err = OPUS_OK;
  DecoderPtr dec(opus_decoder_create(sample_rate, 1, &err));
  if (err != OPUS_OK || !dec) throw CodecError(channel, std::string("decoder: ") + opus_strerror(err));
  std::vector<std::int16_t> decoded;
  decoded.reserve(packets.size() * frame);
  std::vector<std::int16_t> buf(frame);
  for (const auto& p : packets) {
    const int n = opus_decode(dec.get(), p.data(), opus_int32(p.size()), buf.data(), int(frame), 0);
    if (n < 0) throw CodecError(channel, std::string("decode: ") + opus_strerror(n));
    decoded.insert(decoded.end(), buf.begin(), buf.begin() + n);
  }
  std::vector<std::int16_t> out(pcm.size(), 0);
  for (std::size_t i = 0; i < out.size() && i + std::size_t(lookahead) < decoded.size(); ++i) {
    out[i] = decoded[i + std::size_t(lookahead)];
  }
  return out;
}

}  // namespace

int codec_lookahead(int sample_rate, const CodecSettings& settings) {
  auto enc = make_encoder(sample_rate, 32, settings, 0);
  return lookahead_of(enc.get(), 0);
}

std::vector<std::vector<std::uint8_t>> encode_channel(const std::vector<std::int16_t>& pcm,
                                                      int sample_rate, int kbps,
                                                      const CodecSettings& settings) {
  (void)Bitrate::kbps(kbps);
  auto enc = make_encoder(sample_rate, kbps, settings, 0);
  return encode_padded(enc.get(), pcm, std::size_t(sample_rate * settings.frame_ms / 1000), 0);
}

void dump_packets(const std::string& path, const std::vector<std::vector<std::uint8_t>>& packets,
                  int sample_rate) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out.write("FFOP", 4);
  binio::write_u32(out, std::uint32_t(sample_rate));
  binio::write_u32(out, std::uint32_t(packets.size()));
  for (const auto& p : packets) {
    binio::write_u32(out, std::uint32_t(p.size()));
    out.write(reinterpret_cast<const char*>(p.data()), std::streamsize(p.size()));
  }
  if (!out) throw IoError("failed writing " + path);
}

AudioClip transcode(const AudioClip& clip, const BitratePlan& plan, const CodecSettings& settings) {
  clip.validate();
  if (plan.per_channel.size() != clip.num_channels()) {
    throw std::domain_error("plan has " + std::to_string(plan.per_channel.size()) +
                            " entries for " + std::to_string(clip.num_channels()) + " channels");
  }
  AudioClip out;
  out.sample_rate = clip.sample_rate;
  out.channels.resize(clip.num_channels());
  for (std::size_t c = 0; c < clip.num_channels(); ++c) {
    const Bitrate& rate = plan.per_channel[c];
    if (rate.is_uncompressed()) {
      out.channels[c] = clip.channels[c];
    } else {
      (void)Bitrate::kbps(rate.kbps_value());
      out.channels[c] =
          transcode_channel(clip.channels[c], clip.sample_rate, rate.kbps_value(), settings, int(c));
    }
  }
  return out;
}

std::vector<double> band_energy_ratio(const AudioClip& clip, double cutoff_hz,
                                      const StftConfig& cfg) {
  clip.validate();
  if (!(cutoff_hz >= 0.0) || cutoff_hz >= clip.sample_rate / 2.0) {
    throw std::domain_error("cutoff must be in [0, sample_rate/2)");
  }
  StftConfig c = cfg;
  c.sample_rate = clip.sample_rate;
  const auto x = clip.to_double();
  std::vector<double> ratios;
  for (const auto& ch : x) {
    const std::vector<double> one[1] = {ch};
    const FeatureTensor s = stft(std::span<const std::vector<double>>(one, 1), c);
    double total = 0.0, above = 0.0;
    const std::size_t bins = c.num_bins();
    for (Eigen::Index t = 0; t < s.data.rows(); ++t) {
      for (std::size_t k = 0; k < bins; ++k) {
        const double re = s.data(t, Eigen::Index(2 * k)), im = s.data(t, Eigen::Index(2 * k + 1));
        const double p = re * re + im * im;
        total += p;
        if (double(k + 1) * c.sample_rate / double(c.fft_size) > cutoff_hz) above += p;
      }
    }
    ratios.push_back(total > 0.0 ? above / total : 0.0);
  }
  return ratios;
}

double snr_db(const std::vector<std::vector<double>>& clean_ref,
              const std::vector<std::vector<double>>& noise_ref) {
  if (clean_ref.size() != noise_ref.size()) throw std::domain_error("reference channel mismatch");
  double ps = 0.0, pn = 0.0;
  for (std::size_t c = 0; c < clean_ref.size(); ++c) {
    if (clean_ref[c].size() != noise_ref[c].size()) {
      throw std::domain_error("reference length mismatch");
    }
    for (double v : clean_ref[c]) ps += v * v;
    for (double v : noise_ref[c]) pn += v * v;
  }
  if (pn == 0.0) return std::numeric_limits<double>::infinity();
  if (ps == 0.0) return -std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(ps / pn);
}

double snr_db(const AudioClip& clean_ref, const AudioClip& noise_ref) {
  return snr_db(clean_ref.to_double(), noise_ref.to_double());
}

SnrCondition snr_label(const AudioClip& clean_ref, const AudioClip& noise_ref, double threshold_db) {
  return snr_condition(snr_db(clean_ref, noise_ref), threshold_db);
}

std::pair<double, int> max_normalized_xcorr(const std::vector<double>& x,
                                            const std::vector<double>& y, int max_lag) {
  double best = -std::numeric_limits<double>::infinity();
  int best_lag = 0;
  const auto n = std::ptrdiff_t(std::min(x.size(), y.size()));
  for (int lag = -max_lag; lag <= max_lag; ++lag) {
    double xy = 0.0, xx = 0.0, yy = 0.0;
    for (std::ptrdiff_t i = std::max<std::ptrdiff_t>(0, -lag);
         i < n && i + lag < n; ++i) {
      const double a = x[std::size_t(i)], b = y[std::size_t(i + lag)];
      xy += a * b;
      xx += a * a;
      yy += b * b;
    }
    const double r = (xx > 0.0 && yy > 0.0) ? xy / std::sqrt(xx * yy) : 0.0;
    if (r > best) {
      best = r;
      best_lag = lag;
    }
  }
  return {best, best_lag};
}

}  // namespace farfield
