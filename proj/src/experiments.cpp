#include "farfield/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>

#include "farfield/errors.hpp"
#include "farfield/rng.hpp"

namespace farfield {

namespace {

std::optional<double> degradation(double baseline, double test) {
  if (!(baseline > 0.0)) return std::nullopt;
  return relative_degradation(baseline, test);
}

// Regularized lower incomplete gamma P(a, x) by its series; upper Q by a
// continued fraction (modified Lentz).
double gamma_p_series(double a, double x) {
  double sum = 1.0 / a, term = sum;
  for (int n = 1; n < 10000; ++n) {
    term *= x / (a + n);
    sum += term;
    if (std::abs(term) < std::abs(sum) * 1e-16) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

double gamma_q_fraction(double a, double x) {
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / b, h = d;
  for (int i = 1; i < 10000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-16) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace

Dataset make_dataset(ClipList clips, const std::vector<Utterance>& utterances, const StftConfig& stft_cfg) {
  if (clips->size() != utterances.size()) throw std::domain_error("clip and utterance counts differ");
  auto labels = std::make_shared<std::vector<std::vector<int>>>();
  for (const auto& u : utterances) labels->push_back(u.labels);
  return {clips->size(), [clips, labels, stft_cfg](std::size_t i) {
            const auto x = (*clips)[i].to_double();
            return LabeledFeatures{stft(std::span<const std::vector<double>>(x), stft_cfg), (*labels)[i]};
          }};
}

std::vector<Bitrate> mixed_bitrate_sampler(std::size_t num_utterances, const std::vector<Bitrate>& rate_set,
                                           std::uint64_t seed) {
  if (rate_set.empty()) throw std::domain_error("rate set is empty");
  Rng rng(mix_seed(seed, 0x6d6978));
  std::vector<Bitrate> out;
  out.reserve(num_utterances);
  for (std::size_t i = 0; i < num_utterances; ++i) out.push_back(rate_set[rng.uniform_int(rate_set.size())]);
  return out;
}

double chi_square_sf(double x, std::size_t dof) {
  if (dof == 0) throw std::domain_error("chi-square needs at least one degree of freedom");
  if (x <= 0.0) return 1.0;
  const double a = 0.5 * double(dof), h = 0.5 * x;
  return h < a + 1.0 ? 1.0 - gamma_p_series(a, h) : gamma_q_fraction(a, h);
}

ChiSquareResult chi_square_uniformity(const std::vector<Bitrate>& draws, const std::vector<Bitrate>& rate_set) {
  if (rate_set.size() < 2 || draws.empty()) throw std::domain_error("need two rates and at least one draw");
  std::vector<double> counts(rate_set.size(), 0.0);
  for (const auto& d : draws) {
    const auto it = std::find(rate_set.begin(), rate_set.end(), d);
    if (it == rate_set.end()) throw std::domain_error("draw outside the rate set");
    counts[std::size_t(it - rate_set.begin())] += 1.0;
  }
  const double expected = double(draws.size()) / double(rate_set.size());
  ChiSquareResult r;
  for (double c : counts) r.statistic += (c - expected) * (c - expected) / expected;
  r.dof = rate_set.size() - 1;
  r.p_value = chi_square_sf(r.statistic, r.dof);
  return r;
}

TrainingCondition TrainingCondition::matched(Bitrate r) {
  if (r.is_uncompressed()) return uncompressed();
  return {Type::matched, r};
}

std::string TrainingCondition::name() const {
  switch (type) {
    case Type::uncompressed: return "uncompressed";
    case Type::matched: return "matched-" + rate.to_string();
    case Type::mixed: return "mixed";
  }
  return "?";
}

Lab::Lab(ExperimentConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  hash_ = config_hash(cfg_);
}

void Lab::log(const std::string& msg) const {
  if (log_) log_(msg);
}

const Corpus& Lab::corpus() {
  if (!corpus_) {
    log("generating corpus");
    corpus_ = std::make_unique<Corpus>(generate_corpus(cfg_.corpus));
  }
  return *corpus_;
}

std::size_t Lab::channels() const { return cfg_.corpus.selection().size(); }

BitratePlan Lab::uniform_plan(ModelKind kind, Bitrate rate) const {
  return BitratePlan::uniform(kind == ModelKind::multi_channel ? channels() : 1, rate);
}

ClipList Lab::audio(Split split, ModelKind kind, const BitratePlan& plan) {
  const std::string key = std::string(split_name(split)) + "/" +
                          (kind == ModelKind::multi_channel ? "multi/" : "single/") + plan.to_string();
  if (auto it = audio_cache_.find(key); it != audio_cache_.end()) return it->second;
  const auto& utts = corpus().split(split);
  auto clips = std::make_shared<std::vector<AudioClip>>();
  clips->reserve(utts.size());
  if (!plan.all_uncompressed()) log("transcoding " + key);
  for (const auto& u : utts) {
    AudioClip c = u.audio;
    if (kind == ModelKind::single_channel) c.channels.resize(1);
    clips->push_back(plan.all_uncompressed() ? std::move(c) : transcode(c, plan, cfg_.codec));
  }
  // Compressed training audio is consumed once; keep only what gets reused.
  if (split != Split::train || plan.all_uncompressed()) audio_cache_[key] = clips;
  return clips;
}

ClipList Lab::mixed_audio(Split split, ModelKind kind) {
  const std::string key = std::string(split_name(split)) + "/" +
                          (kind == ModelKind::multi_channel ? "multi/" : "single/") + "mixed";
  if (auto it = audio_cache_.find(key); it != audio_cache_.end()) return it->second;
  const auto& utts = corpus().split(split);
  const auto rates =
      mixed_bitrate_sampler(utts.size(), cfg_.mixed_rate_set, mix_seed(cfg_.train.seed, 0x100 + int(split)));
  auto clips = std::make_shared<std::vector<AudioClip>>();
  log("transcoding " + key);
  for (std::size_t i = 0; i < utts.size(); ++i) {
    AudioClip c = utts[i].audio;
    if (kind == ModelKind::single_channel) c.channels.resize(1);
    const auto plan = BitratePlan::uniform(c.num_channels(), rates[i]);
    clips->push_back(plan.all_uncompressed() ? std::move(c) : transcode(c, plan, cfg_.codec));
  }
  if (split != Split::train) audio_cache_[key] = clips;
  return clips;
}

Network Lab::fresh_network(ModelKind kind) const {
  const auto& fs = cfg_.frontend;
  const double sr = cfg_.corpus.geometry.sample_rate;
  Network net;
  if (kind == ModelKind::multi_channel) {
    const auto bank = build_bank(cfg_.corpus.geometry, cfg_.corpus.selection(),
                                 default_look_directions(fs.look_directions), fs.fft_size, fs.diagonal_loading);
    net.frontend = make_multichannel_frontend(bank, fs.num_filters, sr);
  } else {
    net.frontend = make_single_channel_frontend(fs.fft_size / 2 - 1, fs.num_filters, sr, 1);
  }
  net.model = init_model(cfg_.model, mix_seed(cfg_.train.seed, 0x1417));
  return net;
}

std::string Lab::model_key(ModelKind kind, const TrainingCondition& cond) const {
  return std::string(kind == ModelKind::multi_channel ? "multi/" : "single/") + cond.name();
}

const Network& Lab::model(ModelKind kind, const TrainingCondition& cond) {
  const std::string key = model_key(kind, cond);
  if (auto it = models_.find(key); it != models_.end()) return it->second;

  StftConfig sc;
  sc.fft_size = cfg_.frontend.fft_size;
  sc.sample_rate = cfg_.corpus.geometry.sample_rate;
  ClipList train_clips, dev_clips;
  switch (cond.type) {
    case TrainingCondition::Type::uncompressed:
      train_clips = audio(Split::train, kind, uniform_plan(kind, Bitrate::uncompressed()));
      dev_clips = audio(Split::dev, kind, uniform_plan(kind, Bitrate::uncompressed()));
      break;
    case TrainingCondition::Type::matched:
      train_clips = audio(Split::train, kind, uniform_plan(kind, cond.rate));
      dev_clips = audio(Split::dev, kind, uniform_plan(kind, cond.rate));
      break;
    case TrainingCondition::Type::mixed:
      train_clips = mixed_audio(Split::train, kind);
      dev_clips = mixed_audio(Split::dev, kind);
      break;
  }
  const Dataset train = make_dataset(train_clips, corpus().train, sc);
  const Dataset dev = make_dataset(dev_clips, corpus().dev, sc);

  Network net = fresh_network(kind);
  NormAccumulator acc;
  for (std::size_t i = 0; i < train.size; ++i) acc.add(train.get(i).stft.data);
  net.norm = acc.finish();
  log("training " + key);
  TrainResult result = train_ce(net, train, &dev, cfg_.train);
  for (const auto& e : result.epochs) {
    log("  " + key + " epoch " + std::to_string(e.epoch) + " loss " + std::to_string(e.loss) + " dev FER " +
        std::to_string(e.dev_fer));
  }
  logs_[key] = std::move(result);
  return models_.emplace(key, std::move(net)).first->second;
}

const TrainResult* Lab::training_log(ModelKind kind, const TrainingCondition& cond) const {
  auto it = logs_.find(model_key(kind, cond));
  return it == logs_.end() ? nullptr : &it->second;
}

void Lab::set_model(ModelKind kind, const TrainingCondition& cond, Network net) {
  models_.insert_or_assign(model_key(kind, cond), std::move(net));
}

FerBreakdown Lab::evaluate(const Network& net, Split split, ClipList clips) {
  StftConfig sc;
  sc.fft_size = cfg_.frontend.fft_size;
  sc.sample_rate = cfg_.corpus.geometry.sample_rate;
  const auto& utts = corpus().split(split);
  const auto counts = farfield::evaluate(net, make_dataset(clips, utts, sc));
  ErrorCount all, clean, noisy;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    auto& bucket = snr_condition(utts[i].snr_db) == SnrCondition::clean ? clean : noisy;
    for (auto* c : {&all, &bucket}) {
      c->errors += counts[i].errors;
      c->frames += counts[i].frames;
    }
  }
  auto rate = [](const ErrorCount& c) { return c.frames ? 100.0 * double(c.errors) / double(c.frames) : 0.0; };
  if (all.frames == 0) throw std::domain_error("evaluation split is empty");
  return {rate(all), rate(clean), rate(noisy), all.frames, clean.frames, noisy.frames};
}

FerBreakdown Lab::evaluate(ModelKind kind, const TrainingCondition& cond, const BitratePlan& test_plan) {
  const Network& net = model(kind, cond);
  return evaluate(net, Split::test, audio(Split::test, kind, test_plan));
}

std::string sweep_condition(Bitrate rate) {
  return rate.is_uncompressed() ? "uncompressed" : rate.to_string() + " kbps";
}

std::string budget_condition(int x, const std::string& what) {
  const std::string head = "budget " + std::to_string(2 * x) + " ";
  if (what == "multi") return head + "multi " + std::to_string(x) + "+" + std::to_string(x);
  if (what == "single") return head + "single " + std::to_string(2 * x);
  return head + what;
}

std::string plan_condition(const BitratePlan& plan) {
  std::string s;
  for (std::size_t i = 0; i < plan.per_channel.size(); ++i) {
    if (i) s += "+";
    s += plan.per_channel[i].is_uncompressed() ? "u" : plan.per_channel[i].to_string();
  }
  return s + " (" + std::to_string(plan.total_budget_kbps()) + ")";
}

std::string mixed_condition(Bitrate test_rate, const std::string& family) {
  return "test " + test_rate.to_string() + " train " + family;
}

namespace {

ReportRow baseline_row(const Lab& lab, const char* experiment, const std::string& condition, double metric) {
  return {experiment, condition, metric, std::nullopt, std::nullopt, std::nullopt, lab.config().train.seed, lab.hash()};
}

ReportRow degraded_row(const Lab& lab, const char* experiment, const std::string& condition,
                       const FerBreakdown& base, const FerBreakdown& test) {
  return {experiment,
          condition,
          test.overall,
          degradation(base.overall, test.overall),
          degradation(base.clean, test.clean),
          degradation(base.noisy, test.noisy),
          lab.config().train.seed,
          lab.hash()};
}

}  // namespace

DegradationReport run_bitrate_sweep(Lab& lab) {
  const auto mc = ModelKind::multi_channel;
  const auto base_cond = TrainingCondition::uncompressed();
  const auto base = lab.evaluate(mc, base_cond, lab.uniform_plan(mc, Bitrate::uncompressed()));
  DegradationReport rep;
  // Baseline keeps its subset FERs out of the degradation columns.
  rep.rows.push_back(baseline_row(lab, "sweep", sweep_condition(Bitrate::uncompressed()), base.overall));
  for (const auto& r : lab.config().sweep_rates) {
    const auto fer = lab.evaluate(mc, base_cond, lab.uniform_plan(mc, r));
    rep.rows.push_back(degraded_row(lab, "sweep", sweep_condition(r), base, fer));
  }
  return rep;
}

DegradationReport run_single_vs_multi(Lab& lab) {
  const auto mc = ModelKind::multi_channel, sc = ModelKind::single_channel;
  const auto cond = TrainingCondition::uncompressed();
  const auto mbase = lab.evaluate(mc, cond, lab.uniform_plan(mc, Bitrate::uncompressed()));
  const auto sbase = lab.evaluate(sc, cond, lab.uniform_plan(sc, Bitrate::uncompressed()));
  DegradationReport rep;
  const char* ex = "single_vs_multi";
  rep.rows.push_back(baseline_row(lab, ex, "multi uncompressed", mbase.overall));
  rep.rows.push_back(baseline_row(lab, ex, "single uncompressed", sbase.overall));
  auto advantage = [](double single, double multi) { return single > 0 ? 100.0 * (single - multi) / single : 0.0; };
  for (int x : lab.config().budget_points) {
    const auto m = lab.evaluate(mc, cond, lab.uniform_plan(mc, Bitrate::kbps(x)));
    const auto s = lab.evaluate(sc, cond, lab.uniform_plan(sc, Bitrate::kbps(2 * x)));
    rep.rows.push_back(degraded_row(lab, ex, budget_condition(x, "multi"), mbase, m));
    rep.rows.push_back(degraded_row(lab, ex, budget_condition(x, "single"), sbase, s));
    rep.rows.push_back(baseline_row(lab, ex, budget_condition(x, "advantage"), advantage(s.overall, m.overall)));
  }
  // Unequal budgets: single at 256 against multi at 64 per channel.
  const auto s256 = lab.evaluate(sc, cond, lab.uniform_plan(sc, Bitrate::kbps(256)));
  const auto m64 = lab.evaluate(mc, cond, lab.uniform_plan(mc, Bitrate::kbps(64)));
  rep.rows.push_back(baseline_row(lab, ex, "single 256 vs multi 64+64 advantage", advantage(s256.overall, m64.overall)));
  return rep;
}

DegradationReport run_allocation(Lab& lab) {
  const auto mc = ModelKind::multi_channel;
  const auto cond = TrainingCondition::uncompressed();
  const auto base_plan = lab.uniform_plan(mc, Bitrate::uncompressed());
  const auto base = lab.evaluate(mc, cond, base_plan);
  DegradationReport rep;
  rep.rows.push_back(baseline_row(lab, "allocation", plan_condition(base_plan), base.overall));
  for (const auto& plan : lab.config().allocation_plans) {
    rep.rows.push_back(degraded_row(lab, "allocation", plan_condition(plan), base, lab.evaluate(mc, cond, plan)));
  }
  return rep;
}

DegradationReport run_mixed_training(Lab& lab) {
  const auto mc = ModelKind::multi_channel;
  const auto u = Bitrate::uncompressed();
  const auto base = lab.evaluate(mc, TrainingCondition::uncompressed(), lab.uniform_plan(mc, u));
  DegradationReport rep;
  const char* ex = "mixed_training";
  rep.rows.push_back(baseline_row(lab, ex, mixed_condition(u, "uncompressed"), base.overall));
  for (const auto& r : lab.config().mixed_test_rates) {
    const auto plan = lab.uniform_plan(mc, r);
    for (const auto& [family, cond] :
         {std::pair{std::string("uncompressed"), TrainingCondition::uncompressed()},
          std::pair{std::string("matched"), TrainingCondition::matched(r)},
          std::pair{std::string("mixed"), TrainingCondition::mixed()}}) {
      if (r.is_uncompressed() && family == "uncompressed") continue;
      rep.rows.push_back(degraded_row(lab, ex, mixed_condition(r, family), base, lab.evaluate(mc, cond, plan)));
    }
  }
  return rep;
}

}  // namespace farfield
