#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "farfield/codec.hpp"
#include "farfield/errors.hpp"
#include "farfield/rng.hpp"
#include "farfield/wav.hpp"

using namespace farfield;

namespace {

AudioClip sine_clip(std::size_t channels, std::size_t n, double hz, double amp = 0.3) {
  std::vector<std::vector<double>> x(channels, std::vector<double>(n));
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t i = 0; i < n; ++i) x[c][i] = amp * std::sin(2 * std::numbers::pi * hz * double(i) / 16000.0 + 0.3 * c);
  return AudioClip::from_double(x, 16000);
}

AudioClip noise_clip(std::size_t channels, std::size_t n, std::uint64_t seed, double sd = 0.1) {
  Rng rng(seed);
  std::vector<std::vector<double>> x(channels, std::vector<double>(n));
  for (auto& ch : x)
    for (auto& v : ch) v = sd * rng.normal();
  return AudioClip::from_double(x, 16000);
}

}  // namespace

TEST_CASE("bitrate parsing and budgets") {
  CHECK(Bitrate::parse("u").is_uncompressed());
  CHECK(Bitrate::parse("uncompressed").is_uncompressed());
  CHECK(Bitrate::parse("32").kbps_value() == 32);
  CHECK(Bitrate::uncompressed().budget_kbps() == 256);
  CHECK_THROWS_AS(Bitrate::kbps(24), std::domain_error);
  CHECK_THROWS_AS(Bitrate::parse("fast"), std::domain_error);
  for (int r : supported_kbps()) CHECK(Bitrate::kbps(r).to_string() == std::to_string(r));
  const auto plan = BitratePlan::parse("u,8");
  CHECK(plan.per_channel.size() == 2);
  CHECK(plan.total_budget_kbps() == 264);
  CHECK(plan.to_string() == "u,8");
  CHECK(BitratePlan::parse(plan.to_string()) == plan);
  CHECK(BitratePlan::uniform(2, Bitrate::uncompressed()).all_uncompressed());
  CHECK_FALSE(plan.all_uncompressed());
}

TEST_CASE("all-uncompressed transcode is bit-exact") {
  const auto clip = noise_clip(2, 4000, 1);
  CHECK(transcode(clip, BitratePlan::uniform(2, Bitrate::uncompressed())) == clip);
}

TEST_CASE("transcoded sine stays aligned and correlated") {
  const auto clip = sine_clip(2, 16000, 1000.0);
  const auto out = transcode(clip, BitratePlan::uniform(2, Bitrate::kbps(128)));
  REQUIRE(out.num_samples() == clip.num_samples());
  const auto a = clip.to_double(), b = out.to_double();
  for (std::size_t c = 0; c < 2; ++c) {
    // The search window stays under half the 16-sample period.
    const auto [corr, lag] = max_normalized_xcorr(a[c], b[c], 7);
    CHECK(corr > 0.95);
    CHECK(std::abs(lag) <= 1);
  }
}

TEST_CASE("mixed-rate transcode keeps channel lengths and alignment") {
  const auto clip = noise_clip(2, 12000, 3);
  const auto out = transcode(clip, BitratePlan::parse("256,8"));
  REQUIRE(out.num_channels() == 2);
  CHECK(out.channels[0].size() == 12000);
  CHECK(out.channels[1].size() == 12000);
  const auto a = clip.to_double(), b = out.to_double();
  CHECK(std::abs(max_normalized_xcorr(a[0], b[0], 40).second) <= 1);
  // Low-passed noise still aligns through its in-band content.
  const auto lp = transcode(clip, BitratePlan::parse("u,8"));
  CHECK(lp.channels[0] == clip.channels[0]);
  CHECK(std::abs(max_normalized_xcorr(a[1], lp.to_double()[1], 40).second) <= 1);
}

TEST_CASE("transcode is deterministic") {
  const auto clip = noise_clip(2, 8000, 5);
  const auto plan = BitratePlan::parse("16,64");
  CHECK(transcode(clip, plan) == transcode(clip, plan));
}

TEST_CASE("plan and clip mismatches are rejected") {
  const auto clip = noise_clip(2, 800, 5);
  CHECK_THROWS_AS(transcode(clip, BitratePlan::parse("16")), std::domain_error);
  AudioClip ragged = clip;
  ragged.channels[1].pop_back();
  CHECK_THROWS_AS(ragged.validate(), std::domain_error);
}

TEST_CASE("band energy ratio") {
  const auto noise = noise_clip(1, 16000, 7);
  const auto r = band_energy_ratio(noise, 4000.0);
  CHECK(std::abs(r[0] - 0.5) < 0.05);
  CHECK(band_energy_ratio(sine_clip(1, 16000, 1000.0), 4000.0)[0] < 1e-3);
  CHECK(band_energy_ratio(AudioClip{{std::vector<std::int16_t>(1600, 0)}, 16000}, 4000.0)[0] == 0.0);
  CHECK_THROWS_AS(band_energy_ratio(noise, 8000.0), std::domain_error);
  // The lowest rate limits the signal to narrowband.
  const auto nb = transcode(noise, BitratePlan::parse("8"));
  CHECK(band_energy_ratio(nb, 4500.0)[0] < 0.01);
  const auto wb = transcode(noise, BitratePlan::parse("128"));
  CHECK(std::abs(band_energy_ratio(wb, 4500.0)[0] - band_energy_ratio(noise, 4500.0)[0]) < 0.1);
}

TEST_CASE("snr labels") {
  const auto s = noise_clip(1, 1000, 1);
  AudioClip silence{{std::vector<std::int16_t>(1000, 0)}, 16000};
  CHECK(snr_label(s, s) == SnrCondition::noisy);
  CHECK(std::isinf(snr_db(s, silence)));
  CHECK(snr_label(s, silence) == SnrCondition::clean);
  CHECK(snr_condition(5.0) == SnrCondition::clean);
  CHECK(snr_condition(4.999) == SnrCondition::noisy);
  std::vector<std::vector<double>> a{{1.0, -1.0}}, b{{0.1, -0.1}};
  CHECK(snr_db(a, b) == doctest::Approx(20.0));
}

TEST_CASE("cross-correlation oracle") {
  std::vector<double> x(200), y(200, 0.0);
  Rng rng(11);
  for (auto& v : x) v = rng.normal();
  for (std::size_t i = 0; i + 3 < 200; ++i) y[i + 3] = 2.0 * x[i];
  const auto [corr, lag] = max_normalized_xcorr(x, y, 10);
  CHECK(lag == 3);
  CHECK(corr > 0.98);
}

TEST_CASE("lookahead and packets") {
  CHECK(codec_lookahead(16000) > 0);
  const auto clip = noise_clip(1, 3200, 9);
  const auto packets = encode_channel(clip.channels[0], 16000, 32);
  CHECK(packets.size() >= 10);
  std::size_t bytes = 0;
  for (const auto& p : packets) bytes += p.size();
  // Constant bitrate: 32 kbps for 20 ms frames is 80 bytes each.
  CHECK(double(bytes) / double(packets.size()) == doctest::Approx(80.0).epsilon(0.05));
  const auto path = std::filesystem::temp_directory_path() / "farfield_packets.bin";
  dump_packets(path.string(), packets, 16000);
  std::ifstream in(path, std::ios::binary);
  char magic[4];
  in.read(magic, 4);
  CHECK(std::string(magic, 4) == "FFOP");
  CHECK(std::filesystem::file_size(path) == 12 + 4 * packets.size() + bytes);
}

TEST_CASE("wav round trip") {
  const auto clip = noise_clip(3, 1234, 13);
  const auto path = std::filesystem::temp_directory_path() / "farfield_rt.wav";
  write_wav(path.string(), clip);
  CHECK(read_wav(path.string()) == clip);
  CHECK_THROWS_AS(read_wav("/nonexistent/x.wav"), IoError);
}

TEST_CASE("pcm conversion") {
  const auto c = AudioClip::from_double({{0.0, 0.5, -1.0, 2.0, -2.0}}, 16000);
  CHECK(c.channels[0] == std::vector<std::int16_t>{0, 16384, -32768, 32767, -32768});
  CHECK(c.to_double()[0][1] == 0.5);
}
