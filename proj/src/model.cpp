#include "farfield/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "farfield/errors.hpp"
#include "farfield/rng.hpp"
#include "farfield/tensor_io.hpp"

namespace farfield {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

template <typename Fn>
void for_each_pair(std::vector<ParamSpan>& a, std::vector<ParamSpan>& b, Fn fn) {
  for (std::size_t g = 0; g < a.size(); ++g) {
    for (std::size_t i = 0; i < a[g].values.size(); ++i) fn(a[g].values[i], b[g].values[i]);
  }
}

}  // namespace

void AcousticModelConfig::validate() const {
  if (num_layers == 0 || cells_per_layer == 0 || num_classes == 0 || input_dim == 0) {
    throw std::domain_error("acoustic model dimensions must be positive");
  }
}

AcousticModelConfig AcousticModelConfig::full_scale() { return {5, 768, 3183, 192}; }

std::size_t AcousticModel::parameter_count() const {
  std::size_t n = std::size_t(out_weight.size() + out_bias.size());
  for (const auto& l : layers) n += std::size_t(l.w_input.size() + l.w_recurrent.size() + l.bias.size());
  return n;
}

AcousticModel AcousticModel::zeros_like() const {
  AcousticModel z = *this;
  for (auto& l : z.layers) {
    l.w_input.setZero();
    l.w_recurrent.setZero();
    l.bias.setZero();
  }
  z.out_weight.setZero();
  z.out_bias.setZero();
  return z;
}

std::vector<ParamSpan> AcousticModel::groups() {
  std::vector<ParamSpan> g;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto p = "lstm" + std::to_string(i);
    g.push_back({p + ".w_input", as_span(layers[i].w_input)});
    g.push_back({p + ".w_recurrent", as_span(layers[i].w_recurrent)});
    g.push_back({p + ".bias", as_span(layers[i].bias)});
  }
  g.push_back({"output.weight", as_span(out_weight)});
  g.push_back({"output.bias", as_span(out_bias)});
  return g;
}

std::vector<ConstParamSpan> AcousticModel::groups() const {
  std::vector<ConstParamSpan> out;
  for (auto& s : const_cast<AcousticModel*>(this)->groups()) out.push_back({s.name, s.values});
  return out;
}

AcousticModel init_model(const AcousticModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  auto uniform_fill = [&](Mat& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-kInitRange, kInitRange);
  };
  AcousticModel model;
  model.config = cfg;
  const auto h = Eigen::Index(cfg.cells_per_layer);
  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    LstmLayer layer;
    const auto in = l == 0 ? Eigen::Index(cfg.input_dim) : h;
    layer.w_input.resize(4 * h, in);
    layer.w_recurrent.resize(4 * h, h);
    uniform_fill(layer.w_input);
    uniform_fill(layer.w_recurrent);
    layer.bias.setZero(4 * h);
    layer.bias.segment(h, h).setConstant(kForgetBias);
    model.layers.push_back(std::move(layer));
  }
  model.out_weight.resize(Eigen::Index(cfg.num_classes), h);
  uniform_fill(model.out_weight);
  model.out_bias.setZero(Eigen::Index(cfg.num_classes));
  return model;
}

Mat model_logits(const AcousticModel& model, const Mat& features, LstmCache* cache) {
  if (std::size_t(features.cols()) != model.config.input_dim) {
    throw std::domain_error("feature dim " + std::to_string(features.cols()) +
                            " != model input dim " + std::to_string(model.config.input_dim));
  }
  const auto steps = features.rows();
  const auto h = Eigen::Index(model.config.cells_per_layer);
  if (cache) {
    *cache = LstmCache{};
    cache->valid = true;
    cache->input = features;
  }
  Mat x = features;
  for (const auto& layer : model.layers) {
    Mat pre = x * layer.w_input.transpose();
    pre.rowwise() += layer.bias.transpose();
    Mat gates(steps, 4 * h), cells(steps, h), hidden(steps, h);
    Eigen::RowVectorXd h_prev = Eigen::RowVectorXd::Zero(h), c_prev = Eigen::RowVectorXd::Zero(h);
    for (Eigen::Index t = 0; t < steps; ++t) {
      Eigen::RowVectorXd a = pre.row(t);
      a.noalias() += h_prev * layer.w_recurrent.transpose();
      for (Eigen::Index j = 0; j < h; ++j) {
        const double ig = sigmoid(a(j));
        const double fg = sigmoid(a(h + j));
        const double gg = std::tanh(a(2 * h + j));
        const double og = sigmoid(a(3 * h + j));
        const double c = fg * c_prev(j) + ig * gg;
        gates(t, j) = ig;
        gates(t, h + j) = fg;
        gates(t, 2 * h + j) = gg;
        gates(t, 3 * h + j) = og;
        cells(t, j) = c;
        hidden(t, j) = og * std::tanh(c);
      }
      h_prev = hidden.row(t);
      c_prev = cells.row(t);
    }
    if (cache) {
      cache->layer_inputs.push_back(x);
      cache->gates.push_back(gates);
      cache->cells.push_back(cells);
      cache->hidden.push_back(hidden);
    }
    x = std::move(hidden);
  }
  Mat logits = x * model.out_weight.transpose();
  logits.rowwise() += model.out_bias.transpose();
  return logits;
}

Mat softmax_rows(const Mat& logits) {
  Mat p(logits.rows(), logits.cols());
  for (Eigen::Index t = 0; t < logits.rows(); ++t) {
    const double mx = logits.row(t).maxCoeff();
    p.row(t) = (logits.row(t).array() - mx).exp().matrix();
    p.row(t) /= p.row(t).sum();
  }
  return p;
}

Mat forward(const AcousticModel& model, const FeatureTensor& stacked) {
  if (stacked.frames() == 0) return Mat(0, Eigen::Index(model.config.num_classes));
  return softmax_rows(model_logits(model, stacked.data));
}

ModelGradients model_backward(const AcousticModel& model, const LstmCache& cache,
                              const Mat& grad_logits) {
  if (!cache.valid) throw UsageError("model_backward called without a cached forward pass");
  ModelGradients g;
  g.params = model.zeros_like();
  const auto h = Eigen::Index(model.config.cells_per_layer);
  const Mat& top = cache.hidden.back();
  const auto steps = top.rows();
  g.params.out_weight.noalias() = grad_logits.transpose() * top;
  g.params.out_bias = grad_logits.colwise().sum().transpose();
  Mat d_hidden = grad_logits * model.out_weight;

  for (std::size_t li = model.layers.size(); li-- > 0;) {
    const auto& layer = model.layers[li];
    const Mat& gates = cache.gates[li];
    const Mat& cells = cache.cells[li];
    const Mat& hidden = cache.hidden[li];
    auto& gl = g.params.layers[li];
    Mat d_pre(steps, 4 * h);
    Eigen::RowVectorXd dh_next = Eigen::RowVectorXd::Zero(h), dc_next = Eigen::RowVectorXd::Zero(h);
    for (Eigen::Index t = steps; t-- > 0;) {
      Eigen::RowVectorXd dh = d_hidden.row(t) + dh_next;
      for (Eigen::Index j = 0; j < h; ++j) {
        const double ig = gates(t, j), fg = gates(t, h + j), gg = gates(t, 2 * h + j),
                     og = gates(t, 3 * h + j);
        const double tc = std::tanh(cells(t, j));
        const double c_prev = t > 0 ? cells(t - 1, j) : 0.0;
        const double dc = dh(j) * og * (1.0 - tc * tc) + dc_next(j);
        d_pre(t, j) = dc * gg * ig * (1.0 - ig);
        d_pre(t, h + j) = dc * c_prev * fg * (1.0 - fg);
        d_pre(t, 2 * h + j) = dc * ig * (1.0 - gg * gg);
        d_pre(t, 3 * h + j) = dh(j) * tc * og * (1.0 - og);
        dc_next(j) = dc * fg;
      }
      dh_next.noalias() = d_pre.row(t) * layer.w_recurrent;
      if (t > 0) gl.w_recurrent.noalias() += d_pre.row(t).transpose() * hidden.row(t - 1);
    }
    gl.w_input.noalias() = d_pre.transpose() * cache.layer_inputs[li];
    gl.bias = d_pre.colwise().sum().transpose();
    d_hidden = d_pre * layer.w_input;
  }
  g.input = std::move(d_hidden);
  return g;
}

double cross_entropy(const Mat& logits, const std::vector<int>& labels, Mat* grad_logits) {
  if (std::size_t(logits.rows()) != labels.size()) {
    throw std::domain_error("one label per frame required");
  }
  const Mat p = softmax_rows(logits);
  double loss = 0.0;
  for (Eigen::Index t = 0; t < logits.rows(); ++t) {
    const int y = labels[std::size_t(t)];
    if (y < 0 || y >= logits.cols()) throw std::domain_error("label out of range");
    loss -= std::log(std::max(p(t, y), std::numeric_limits<double>::min()));
  }
  if (grad_logits) {
    *grad_logits = p;
    for (Eigen::Index t = 0; t < logits.rows(); ++t) (*grad_logits)(t, labels[std::size_t(t)]) -= 1.0;
  }
  return loss;
}

Mat Network::posteriors(const FeatureTensor& raw_stft) const {
  const FeatureTensor stacked = frontend_forward(frontend, normalize(raw_stft, norm));
  return forward(model, stacked);
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || batch_size == 0 || epochs == 0 || !(clip_norm > 0.0) ||
      !(block_affine_lr_scale >= 0.0) || !(esf_lr_scale >= 0.0) || !(mfb_lr_scale >= 0.0)) {
    throw std::domain_error("training hyperparameters must be positive");
  }
}

double TrainConfig::lr_scale(const std::string& group) const {
  if (group.starts_with("block_affine")) return block_affine_lr_scale;
  if (group.starts_with("esf")) return esf_lr_scale;
  if (group.starts_with("mfb")) return mfb_lr_scale;
  return 1.0;
}

ExampleGradients example_gradients(const Network& net, const LabeledFeatures& ex,
                                   const TrainableGroups& trainable) {
  const bool frontend_trainable =
      (trainable.mfb) || (net.frontend.kind == FrontendKind::multi_channel &&
                          (trainable.esf || trainable.block_affine));
  FrontendCache fcache;
  const FeatureTensor stacked =
      frontend_forward(net.frontend, normalize(ex.stft, net.norm), frontend_trainable ? &fcache : nullptr);
  ExampleGradients out;
  out.frames = stacked.frames();
  if (out.frames != ex.labels.size()) {
    throw std::domain_error("utterance has " + std::to_string(ex.labels.size()) +
                            " labels for " + std::to_string(out.frames) + " frames");
  }
  if (out.frames == 0) {
    out.frontend = net.frontend.zeros_like();
    out.model = net.model.zeros_like();
    return out;
  }
  LstmCache lcache;
  const Mat logits = model_logits(net.model, stacked.data, &lcache);
  Mat d_logits;
  out.loss = cross_entropy(logits, ex.labels, &d_logits);
  ModelGradients mg = model_backward(net.model, lcache, d_logits);
  out.model = trainable.lstm ? std::move(mg.params) : net.model.zeros_like();
  if (frontend_trainable) {
    out.frontend = frontend_backward(mg.input, fcache, net.frontend, trainable).params;
  } else {
    out.frontend = net.frontend.zeros_like();
  }
  return out;
}

double mean_loss(const Network& net, const Dataset& data) {
  double loss = 0.0;
  std::size_t frames = 0;
  for (std::size_t i = 0; i < data.size; ++i) {
    const auto ex = data.get(i);
    const FeatureTensor stacked = frontend_forward(net.frontend, normalize(ex.stft, net.norm));
    if (stacked.frames() == 0) continue;
    loss += cross_entropy(model_logits(net.model, stacked.data), ex.labels, nullptr);
    frames += stacked.frames();
  }
  return frames ? loss / double(frames) : 0.0;
}

TrainResult train_ce(Network& net, const Dataset& train, const Dataset* dev,
                     const TrainConfig& cfg) {
  cfg.validate();
  if (train.size == 0) throw std::domain_error("empty training set");
  Rng rng(mix_seed(cfg.seed, 0x7472));
  std::vector<std::size_t> order(train.size);
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  result.initial_loss = mean_loss(net, train);
  Network best = net;
  double best_dev = std::numeric_limits<double>::infinity();

  FrontendParams fe_grad = net.frontend.zeros_like();
  AcousticModel am_grad = net.model.zeros_like();
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    std::size_t epoch_frames = 0;
    for (std::size_t start = 0, batch = 0; start < order.size(); start += cfg.batch_size, ++batch) {
      fe_grad = net.frontend.zeros_like();
      am_grad = net.model.zeros_like();
      double batch_loss = 0.0;
      std::size_t batch_frames = 0;
      for (std::size_t i = start; i < std::min(order.size(), start + cfg.batch_size); ++i) {
        ExampleGradients eg = example_gradients(net, train.get(order[i]), cfg.trainable);
        batch_loss += eg.loss;
        batch_frames += eg.frames;
        auto a = fe_grad.groups(), b = eg.frontend.groups();
        for_each_pair(a, b, [](double& acc, double v) { acc += v; });
        auto c = am_grad.groups(), d = eg.model.groups();
        for_each_pair(c, d, [](double& acc, double v) { acc += v; });
      }
      if (!std::isfinite(batch_loss)) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch));
      }
      if (batch_frames == 0) continue;
      epoch_loss += batch_loss;
      epoch_frames += batch_frames;

      auto fe_g = fe_grad.groups(cfg.trainable);
      auto am_g = am_grad.groups();
      const double scale = 1.0 / double(batch_frames);
      double sq = 0.0;
      for (auto& s : fe_g) for (double& v : s.values) { v *= scale; sq += v * v; }
      if (cfg.trainable.lstm) {
        for (auto& s : am_g) for (double& v : s.values) { v *= scale; sq += v * v; }
      }
      if (!std::isfinite(sq)) {
        throw NumericError("non-finite gradient at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch));
      }
      const double norm = std::sqrt(sq);
      const double step = cfg.learning_rate * (norm > cfg.clip_norm ? cfg.clip_norm / norm : 1.0);
      auto fe_p = net.frontend.groups(cfg.trainable);
      for (std::size_t gi = 0; gi < fe_p.size(); ++gi) {
        const double s = step * cfg.lr_scale(fe_p[gi].name);
        for (std::size_t i = 0; i < fe_p[gi].values.size(); ++i) fe_p[gi].values[i] -= s * fe_g[gi].values[i];
      }
      if (cfg.trainable.lstm) {
        auto am_p = net.model.groups();
        for_each_pair(am_p, am_g, [step](double& p, double g) { p -= step * g; });
      }
    }
    EpochLog log;
    log.epoch = epoch;
    log.loss = epoch_frames ? epoch_loss / double(epoch_frames) : 0.0;
    if (dev && dev->size > 0) {
      log.dev_fer = frame_error_rate(net, *dev);
      if (cfg.select_on_dev && log.dev_fer < best_dev) {
        best_dev = log.dev_fer;
        best = net;
        result.selected_epoch = epoch;
      }
    }
    result.epochs.push_back(log);
  }
  if (dev && dev->size > 0 && cfg.select_on_dev) {
    net = std::move(best);
  } else {
    result.selected_epoch = cfg.epochs;
  }
  return result;
}

std::vector<ErrorCount> evaluate(const Network& net, const Dataset& data) {
  std::vector<ErrorCount> counts(data.size);
  for (std::size_t i = 0; i < data.size; ++i) {
    const auto ex = data.get(i);
    const Mat p = net.posteriors(ex.stft);
    if (std::size_t(p.rows()) != ex.labels.size()) {
      throw std::domain_error("label/frame count mismatch in evaluation");
    }
    for (Eigen::Index t = 0; t < p.rows(); ++t) {
      Eigen::Index best = 0;
      p.row(t).maxCoeff(&best);
      if (best != ex.labels[std::size_t(t)]) ++counts[i].errors;
    }
    counts[i].frames = std::size_t(p.rows());
  }
  return counts;
}

double frame_error_rate(const std::vector<ErrorCount>& counts) {
  std::size_t e = 0, n = 0;
  for (const auto& c : counts) {
    e += c.errors;
    n += c.frames;
  }
  if (n == 0) throw std::domain_error("frame error rate of an empty dataset");
  return 100.0 * double(e) / double(n);
}

double frame_error_rate(const Network& net, const Dataset& data) {
  if (data.size == 0) throw std::domain_error("frame error rate of an empty dataset");
  return frame_error_rate(evaluate(net, data));
}

namespace {

FrontendParams shaped_frontend(FrontendKind kind, std::size_t channels, std::size_t bins,
                               std::size_t dirs, std::size_t filters, double sample_rate) {
  FrontendParams p;
  p.kind = kind;
  p.channels = channels;
  p.bins = bins;
  p.dirs = dirs;
  p.sample_rate = sample_rate;
  if (kind == FrontendKind::multi_channel) {
    p.block_affine.bins = bins;
    p.block_affine.dirs = dirs;
    p.block_affine.mics = channels;
    p.block_affine.coeff.assign(bins * dirs * channels * 2, 0.0);
    p.block_affine.bias.assign(bins * dirs * 2, 0.0);
    p.esf.weight.setZero(Eigen::Index(bins), Eigen::Index(dirs * bins));
    p.esf.bias.setZero(Eigen::Index(bins));
  }
  p.mfb.weight.setZero(Eigen::Index(filters), Eigen::Index(bins));
  p.mfb.bias.setZero(Eigen::Index(filters));
  return p;
}

}  // namespace

void save_checkpoint(const std::string& path, const Network& net) {
  nlohmann::json h;
  h["frontend"] = {{"kind", net.frontend.kind == FrontendKind::multi_channel ? "multi" : "single"},
                   {"channels", net.frontend.channels},
                   {"bins", net.frontend.bins},
                   {"dirs", net.frontend.dirs},
                   {"filters", net.frontend.num_filters()},
                   {"sample_rate", net.frontend.sample_rate}};
  const auto& mc = net.model.config;
  h["model"] = {{"num_layers", mc.num_layers},
                {"cells_per_layer", mc.cells_per_layer},
                {"num_classes", mc.num_classes},
                {"input_dim", mc.input_dim}};
  h["norm_dim"] = net.norm.mean.size();
  const std::string header = h.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out.write("FFCK", 4);
  binio::write_u32(out, 1);
  binio::write_u32(out, std::uint32_t(header.size()));
  out.write(header.data(), std::streamsize(header.size()));
  binio::write_f64s(out, net.norm.mean.data(), std::size_t(net.norm.mean.size()));
  binio::write_f64s(out, net.norm.variance.data(), std::size_t(net.norm.variance.size()));
  Network& mut = const_cast<Network&>(net);
  for (const auto& s : mut.frontend.groups()) binio::write_f64s(out, s.values.data(), s.values.size());
  for (const auto& s : mut.model.groups()) binio::write_f64s(out, s.values.data(), s.values.size());
  if (!out) throw IoError("failed writing " + path);
}

Network load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  binio::expect_magic(in, "FFCK");
  if (binio::read_u32(in) != 1) throw IoError("unsupported checkpoint version");
  const auto len = binio::read_u32(in);
  std::string header(len, '\0');
  if (!in.read(header.data(), len)) throw IoError("truncated checkpoint header");
  const auto h = nlohmann::json::parse(header);
  Network net;
  const auto& fe = h.at("frontend");
  net.frontend = shaped_frontend(
      fe.at("kind").get<std::string>() == "multi" ? FrontendKind::multi_channel
                                                  : FrontendKind::single_channel,
      fe.at("channels").get<std::size_t>(), fe.at("bins").get<std::size_t>(),
      fe.at("dirs").get<std::size_t>(), fe.at("filters").get<std::size_t>(),
      fe.at("sample_rate").get<double>());
  const auto& m = h.at("model");
  AcousticModelConfig mc{m.at("num_layers").get<std::size_t>(),
                         m.at("cells_per_layer").get<std::size_t>(),
                         m.at("num_classes").get<std::size_t>(), m.at("input_dim").get<std::size_t>()};
  net.model = init_model(mc, 0).zeros_like();
  const auto nd = h.at("norm_dim").get<Eigen::Index>();
  net.norm.mean.resize(nd);
  net.norm.variance.resize(nd);
  binio::read_f64s(in, net.norm.mean.data(), std::size_t(nd));
  binio::read_f64s(in, net.norm.variance.data(), std::size_t(nd));
  for (auto& s : net.frontend.groups()) binio::read_f64s(in, s.values.data(), s.values.size());
  for (auto& s : net.model.groups()) binio::read_f64s(in, s.values.data(), s.values.size());
  return net;
}

void write_train_log(const std::string& path, const TrainResult& result) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "epoch,loss,dev_fer\n";
  char buf[96];
  std::snprintf(buf, sizeof buf, "0,%.6f,\n", result.initial_loss);
  out << buf;
  for (const auto& e : result.epochs) {
    if (e.dev_fer >= 0.0) {
      std::snprintf(buf, sizeof buf, "%zu,%.6f,%.4f\n", e.epoch, e.loss, e.dev_fer);
    } else {
      std::snprintf(buf, sizeof buf, "%zu,%.6f,\n", e.epoch, e.loss);
    }
    out << buf;
  }
}

}  // namespace farfield
