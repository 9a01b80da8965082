#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "farfield/errors.hpp"
#include "farfield/model.hpp"
#include "farfield/rng.hpp"
#include "grad_check.hpp"

using namespace farfield;

namespace {

FrontendParams multichannel_frontend() {
  const auto geom = ArrayGeometry::circular7();
  const auto bank = build_bank(geom, select_opposite_pair(geom), default_look_directions(12), 256);
  return make_multichannel_frontend(bank, 64, 16000.0);
}

// Class c puts energy into its own 10-bin band on both channels.
LabeledFeatures toy_utterance(Rng& rng, std::size_t stacked, std::size_t classes) {
  LabeledFeatures ex;
  ex.stft.stage = Stage::complex_stft;
  ex.stft.shape = {stacked * 3, 2, 127, 2};
  ex.stft.data.resize(Eigen::Index(stacked * 3), 2 * 127 * 2);
  for (Eigen::Index i = 0; i < ex.stft.data.size(); ++i) ex.stft.data.data()[i] = 0.1 * rng.normal();
  for (std::size_t s = 0; s < stacked; ++s) {
    const int c = int(rng.uniform_int(classes));
    ex.labels.push_back(c);
    for (std::size_t f = 0; f < 3; ++f)
      for (int m = 0; m < 2; ++m)
        for (int k = 10 * c + 5; k < 10 * c + 15; ++k)
          ex.stft.data(Eigen::Index(3 * s + f), (m * 127 + k) * 2) += 2.0;
  }
  return ex;
}

Dataset toy_dataset(std::size_t n, std::size_t classes, std::uint64_t seed) {
  auto items = std::make_shared<std::vector<LabeledFeatures>>();
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) items->push_back(toy_utterance(rng, 4, classes));
  return {n, [items](std::size_t i) { return (*items)[i]; }};
}

NormStats stats_of(const Dataset& d) {
  NormAccumulator acc;
  for (std::size_t i = 0; i < d.size; ++i) acc.add(d.get(i).stft.data);
  return acc.finish();
}

Network toy_network(std::size_t classes, std::uint64_t seed, const Dataset& data, bool single = true) {
  Network net;
  net.norm = stats_of(data);
  net.frontend = single ? make_single_channel_frontend(127, 64, 16000.0, 2) : multichannel_frontend();
  net.model = init_model({1, 16, classes, 192}, seed);
  return net;
}

}  // namespace

TEST_CASE("initialization") {
  const auto a = init_model({}, 3), b = init_model({}, 3), c = init_model({}, 4);
  CHECK(a.layers[0].w_input == b.layers[0].w_input);
  CHECK(a.out_weight == b.out_weight);
  CHECK(a.layers[0].w_input != c.layers[0].w_input);
  CHECK(a.parameter_count() == 65792 + 33024 + 2600);

  double abs_sum = 0.0, lo = 1.0, hi = -1.0;
  std::size_t n = 0;
  auto visit = [&](const Mat& w) {
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      abs_sum += std::abs(w.data()[i]);
      lo = std::min(lo, w.data()[i]);
      hi = std::max(hi, w.data()[i]);
      ++n;
    }
  };
  for (const auto& l : a.layers) {
    visit(l.w_input);
    visit(l.w_recurrent);
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) {
      const bool forget = r >= 64 && r < 128;
      CHECK(l.bias(r) == (forget ? 1.0 : 0.0));
    }
  }
  visit(a.out_weight);
  CHECK(n >= 100000);
  CHECK(lo >= -0.05);
  CHECK(hi <= 0.05);
  CHECK(std::abs(abs_sum / double(n) - 0.025) < 0.002);
  CHECK(a.out_bias.isZero());

  CHECK_NOTHROW(AcousticModelConfig::full_scale().validate());
  CHECK(AcousticModelConfig::full_scale().num_classes == 3183);
  CHECK_THROWS_AS((AcousticModelConfig{0, 64, 40, 192}).validate(), std::domain_error);
}

TEST_CASE("posteriors are normalized") {
  const auto m = init_model({}, 1);
  Rng rng(2);
  FeatureTensor x;
  x.stage = Stage::stacked;
  x.data.resize(30, 192);
  x.shape = {30, 192};
  for (Eigen::Index i = 0; i < x.data.size(); ++i) x.data.data()[i] = rng.normal();
  const Mat p = forward(m, x);
  CHECK(p.rows() == 30);
  CHECK(p.cols() == 40);
  CHECK((p.array() >= 0).all());
  CHECK((p.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);

  // Untrained, the posteriors are close to uniform.
  CHECK(p.rowwise().maxCoeff().mean() < 1.5 / 40.0);
  CHECK(std::abs(p.rowwise().maxCoeff().mean() - 0.02518) < 5e-4);

  x.data.resize(0, 192);
  CHECK(forward(m, x).rows() == 0);
  Mat big = Mat::Constant(2, 3, 1000.0);
  big(0, 1) = 1001.0;
  CHECK(softmax_rows(big).allFinite());
}

TEST_CASE("cross entropy oracle") {
  Mat logits(2, 3);
  logits << 0, 0, 0, 1, 2, 3;
  Mat g;
  const double loss = cross_entropy(logits, {1, 2}, &g);
  const double expect = std::log(3.0) + (std::log(std::exp(1) + std::exp(2) + std::exp(3)) - 3.0);
  CHECK(loss == doctest::Approx(expect));
  CHECK(g(0, 1) == doctest::Approx(1.0 / 3.0 - 1.0));
  CHECK(g.rowwise().sum().cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS(cross_entropy(logits, {1}, nullptr), std::domain_error);
  CHECK_THROWS_AS(cross_entropy(logits, {1, 3}, nullptr), std::domain_error);
}

TEST_CASE("full-stack gradients match central differences") {
  Rng rng(31);
  const auto data = toy_dataset(2, 5, 7);
  Network net = toy_network(5, 9, data, false);
  net.model = init_model({1, 8, 5, 192}, 9);
  for (auto& g : net.frontend.groups())
    for (double& v : g.values) v += 0.01 * rng.normal() * (g.name == "mfb.weight" ? 0.1 : 1.0);
  const auto ex = data.get(0);
  auto eg = example_gradients(net, ex, TrainableGroups::all());
  CHECK(eg.frames == 4);
  auto loss = [&] { return example_gradients(net, ex, TrainableGroups::lstm_only()).loss; };
  CHECK(loss() == doctest::Approx(eg.loss));

  auto fp = net.frontend.groups();
  auto fg = eg.frontend.groups();
  for (std::size_t i = 0; i < fp.size(); ++i) {
    CAPTURE(fp[i].name);
    CHECK(testing::check_coordinates(fp[i].values, fg[i].values, loss, 20, rng).worst_rel < 1e-3);
  }
  auto mp = net.model.groups();
  const auto mg = eg.model.groups();
  for (std::size_t i = 0; i < mp.size(); ++i) {
    CAPTURE(mp[i].name);
    CHECK(testing::check_coordinates(mp[i].values, mg[i].values, loss, 20, rng).worst_rel < 1e-3);
  }
}

TEST_CASE("two-layer lstm gradients") {
  Rng rng(3);
  AcousticModel m = init_model({2, 6, 4, 10}, 5);
  Mat x(7, 10);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  const std::vector<int> labels{0, 1, 2, 3, 0, 1, 2};
  LstmCache cache;
  Mat g;
  cross_entropy(model_logits(m, x, &cache), labels, &g);
  const auto grads = model_backward(m, cache, g);
  auto loss = [&] { return cross_entropy(model_logits(m, x), labels, nullptr); };
  auto mp = m.groups();
  const auto mg = grads.params.groups();
  for (std::size_t i = 0; i < mp.size(); ++i) {
    CAPTURE(mp[i].name);
    CHECK(testing::check_coordinates(mp[i].values, mg[i].values, loss, 30, rng).worst_rel < 1e-3);
  }
  CHECK(testing::check_coordinates({x.data(), std::size_t(x.size())},
                                   {grads.input.data(), std::size_t(grads.input.size())}, loss, 30, rng)
            .worst_rel < 1e-3);
}

TEST_CASE("training descends and is deterministic") {
  const auto train = toy_dataset(50, 4, 1);
  const auto dev = toy_dataset(8, 4, 2);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.learning_rate = 0.1;
  Network a = toy_network(4, 3, train), b = toy_network(4, 3, train);
  const auto ra = train_ce(a, train, &dev, cfg);
  const auto rb = train_ce(b, train, &dev, cfg);
  REQUIRE(ra.epochs.size() == 5);
  CHECK(ra.epochs.back().loss < ra.initial_loss);
  for (std::size_t e = 0; e < 5; ++e) {
    CHECK(ra.epochs[e].loss == rb.epochs[e].loss);
    CHECK(ra.epochs[e].dev_fer == rb.epochs[e].dev_fer);
  }
  CHECK(a.model.out_weight == b.model.out_weight);
  CHECK(frame_error_rate(a, dev) < 50.0);
  CHECK(frame_error_rate(a, dev) == ra.epochs[ra.selected_epoch - 1].dev_fer);

  const auto log = std::filesystem::temp_directory_path() / "farfield_train_log.csv";
  write_train_log(log.string(), ra);
  CHECK(std::filesystem::file_size(log) > 0);
}

TEST_CASE("frozen front-end stays bit-identical") {
  const auto train = toy_dataset(6, 4, 1);
  Network net = toy_network(4, 3, train, false);
  const FrontendParams before = net.frontend;
  const Mat out_before = net.model.out_weight;
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.trainable = TrainableGroups::lstm_only();
  train_ce(net, train, nullptr, cfg);
  CHECK(net.frontend == before);
  CHECK(net.model.out_weight != out_before);
}

TEST_CASE("frame error rate") {
  const auto data = toy_dataset(20, 5, 4);
  const Network net = toy_network(5, 8, data);
  // Oracle labels: the network's own decisions.
  std::vector<LabeledFeatures> own;
  std::vector<LabeledFeatures> shuffled;
  Rng rng(99);
  for (std::size_t i = 0; i < data.size; ++i) {
    auto ex = data.get(i);
    const Mat p = net.posteriors(ex.stft);
    auto shuf = ex;
    for (Eigen::Index t = 0; t < p.rows(); ++t) {
      Eigen::Index best = 0;
      p.row(t).maxCoeff(&best);
      ex.labels[std::size_t(t)] = int(best);
    }
    own.push_back(ex);
    for (std::size_t r = 0; r < 50; ++r) {
      auto copy = shuf;
      for (auto& l : copy.labels) l = int(rng.uniform_int(5));
      shuffled.push_back(copy);
    }
  }
  Dataset o{own.size(), [&](std::size_t i) { return own[i]; }};
  Dataset s{shuffled.size(), [&](std::size_t i) { return shuffled[i]; }};
  CHECK(frame_error_rate(net, o) == 0.0);
  CHECK(std::abs(frame_error_rate(net, s) - 80.0) < 2.5);
  CHECK_THROWS_AS(frame_error_rate(net, Dataset{0, {}}), std::domain_error);
  CHECK_THROWS_AS(frame_error_rate(std::vector<ErrorCount>{}), std::domain_error);
}

TEST_CASE("checkpoint round trip") {
  const auto data = toy_dataset(3, 4, 4);
  for (bool single : {true, false}) {
    Network net = toy_network(4, 8, data, single);
    const auto path = std::filesystem::temp_directory_path() / "farfield_ckpt.bin";
    save_checkpoint(path.string(), net);
    const Network back = load_checkpoint(path.string());
    CHECK(back.frontend == net.frontend);
    CHECK(back.model.config == net.model.config);
    CHECK(back.norm.mean == net.norm.mean);
    const auto ex = data.get(0);
    CHECK(back.posteriors(ex.stft) == net.posteriors(ex.stft));
  }
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/ckpt"), IoError);
}
