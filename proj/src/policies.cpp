#include "coop/policies.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "coop/errors.hpp"

namespace coop {

InterventionState::InterventionState(const ConceptSpace& space, const Instance& instance,
                                     const ConceptToLabelModel& model, const CostModel& costs,
                                     const CalibrationMap* calibration)
    : space_(&space),
      instance_(&instance),
      model_(&model),
      costs_(&costs),
      dists_(effective_distributions(instance, calibration)),
      offsets_(space.block_offsets()),
      revealed_(space.concept_count()) {
  if (costs.size() != space.concept_count()) fail(ErrorCode::Schema, "cost model does not match the concept space");
  if (instance.concept_probs.size() != space.concept_count()) fail(ErrorCode::Schema, "instance does not match the concept space");
  features_ = assemble_features(space, dists_, revealed_);
  label_dist_ = model.predict(features_);
  top_label_ = argmax(label_dist_);
}

void InterventionState::reveal(std::size_t index, int value) {
  if (index >= revealed_.size()) fail(ErrorCode::Arity, "concept index out of range");
  if (revealed_[index]) fail(ErrorCode::AlreadyRevealed, "concept '" + space_->concept_names[index] + "' already revealed");
  const int arity = space_->arities[index];
  if (value < 0 || value >= arity) {
    fail(ErrorCode::Arity, "value " + std::to_string(value + 1) + " out of range for concept '" +
                               space_->concept_names[index] + "'");
  }
  revealed_[index] = value;
  ++revealed_count_;
  spent_ += costs_->costs[index];
  for (int v = 0; v < arity; ++v) features_[offsets_[index] + static_cast<std::size_t>(v)] = v == value ? 1.0 : 0.0;
  label_dist_ = model_->predict(features_);
  top_label_ = argmax(label_dist_);
}

std::vector<std::size_t> InterventionState::unrevealed() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < revealed_.size(); ++i) {
    if (!revealed_[i]) out.push_back(i);
  }
  return out;
}

std::vector<double> InterventionState::predict_with(std::size_t index, int value) const {
  FeatureVector x = features_;
  const int arity = space_->arities.at(index);
  for (int v = 0; v < arity; ++v) x[offsets_[index] + static_cast<std::size_t>(v)] = v == value ? 1.0 : 0.0;
  return model_->predict(x);
}

double cpu_score(std::span<const double> dist) {
  double h = 0.0;
  for (double p : dist) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

double cis_score(const InterventionState& state, std::size_t index) {
  if (state.is_revealed(index)) {
    fail(ErrorCode::AlreadyRevealed, "concept '" + state.space().concept_names[index] + "' already revealed");
  }
  const std::size_t k = state.top_label();
  const auto& dist = state.distributions()[index];
  double expected = 0.0;
  for (std::size_t v = 0; v < dist.size(); ++v) {
    if (dist[v] == 0.0) continue;
    expected += dist[v] * state.predict_with(index, static_cast<int>(v))[k];
  }
  return std::abs(expected - state.label_dist()[k]);
}

double ScoreNorm::normalize(double raw) const noexcept {
  if (degenerate()) return 0.0;
  return std::clamp((raw - min) / (max - min), 0.0, 1.0);
}

void PolicyConfig::validate() const {
  if (!(alpha >= 0.0 && beta >= 0.0 && gamma >= 0.0)) fail(ErrorCode::Config, "alpha, beta and gamma must be >= 0");
}

Json to_json(const PolicyConfig& c) {
  return Json{{"alpha", c.alpha},
              {"beta", c.beta},
              {"gamma", c.gamma},
              {"cpu_norm", {{"min", c.cpu_norm.min}, {"max", c.cpu_norm.max}}},
              {"cis_norm", {{"min", c.cis_norm.min}, {"max", c.cis_norm.max}}},
              {"calibration_ref", c.calibration_ref}};
}

PolicyConfig policy_config_from_json(const Json& j) {
  PolicyConfig c;
  try {
    c.alpha = j.at("alpha").get<double>();
    c.beta = j.at("beta").get<double>();
    c.gamma = j.at("gamma").get<double>();
    c.cpu_norm = {j.at("cpu_norm").at("min").get<double>(), j.at("cpu_norm").at("max").get<double>()};
    c.cis_norm = {j.at("cis_norm").at("min").get<double>(), j.at("cis_norm").at("max").get<double>()};
    c.calibration_ref = j.value("calibration_ref", std::string{});
  } catch (const Json::exception& e) {
    fail(ErrorCode::Parse, std::string("policy config: ") + e.what());
  }
  c.validate();
  return c;
}

std::pair<ScoreNorm, ScoreNorm> fit_score_norm(const Dataset& valset, const ConceptToLabelModel& model,
                                               const CalibrationMap* calibration) {
  if (valset.empty()) fail(ErrorCode::EmptyInput, "score normalization needs a nonempty set");
  const CostModel costs = unit_costs(valset.space);
  constexpr double inf = std::numeric_limits<double>::infinity();
  ScoreNorm cpu{inf, -inf};
  ScoreNorm cis{inf, -inf};
  for (const auto& inst : valset.instances) {
    InterventionState state(valset.space, inst, model, costs, calibration);
    for (std::size_t i = 0; i < valset.space.concept_count(); ++i) {
      const double h = cpu_score(state.distributions()[i]);
      const double c = cis_score(state, i);
      cpu.min = std::min(cpu.min, h);
      cpu.max = std::max(cpu.max, h);
      cis.min = std::min(cis.min, c);
      cis.max = std::max(cis.max, c);
    }
  }
  return {cpu, cis};
}

Json to_json(const ScoreBreakdown& breakdown, const ConceptSpace& space) {
  Json out = Json::array();
  for (const auto& s : breakdown) {
    out.push_back({{"concept", space.concept_names[s.index]},
                   {"raw_cpu", s.raw_cpu},
                   {"raw_cis", s.raw_cis},
                   {"cost", s.cost},
                   {"norm_cpu", s.norm_cpu},
                   {"norm_cis", s.norm_cis},
                   {"score", s.combined}});
  }
  return out;
}

std::pair<std::size_t, ScoreBreakdown> coop_select(const InterventionState& state, const PolicyConfig& config) {
  const auto candidates = state.unrevealed();
  if (candidates.empty()) fail(ErrorCode::NothingToSelect, "every concept is already revealed");
  ScoreBreakdown breakdown;
  breakdown.reserve(candidates.size());
  std::size_t best = 0;
  for (std::size_t n = 0; n < candidates.size(); ++n) {
    const std::size_t i = candidates[n];
    ConceptScore s;
    s.index = i;
    s.raw_cpu = cpu_score(state.distributions()[i]);
    s.raw_cis = cis_score(state, i);
    s.cost = state.costs().costs[i];
    s.norm_cpu = config.cpu_norm.normalize(s.raw_cpu);
    s.norm_cis = config.cis_norm.normalize(s.raw_cis);
    s.combined = config.alpha * s.norm_cpu + config.beta * s.norm_cis - config.gamma * s.cost;
    breakdown.push_back(s);
    if (s.combined > breakdown[best].combined) best = n;
  }
  return {candidates[best], std::move(breakdown)};
}

std::size_t random_select(const InterventionState& state, Rng& rng) {
  const auto candidates = state.unrevealed();
  if (candidates.empty()) fail(ErrorCode::NothingToSelect, "every concept is already revealed");
  const auto pick = uniform_int(rng, 0, static_cast<std::int64_t>(candidates.size()) - 1);
  return candidates[static_cast<std::size_t>(pick)];
}

Json to_json(const GreedyOrder& order) {
  std::vector<std::size_t> one_based(order.ordering);
  for (auto& i : one_based) i += 1;
  return Json{{"ordering", one_based},
              {"fitted_on", order.fitted_on},
              {"metric", order.metric},
              {"step_metrics", order.step_metrics}};
}

GreedyOrder greedy_order_from_json(const Json& j, std::size_t concept_count) {
  GreedyOrder order;
  try {
    order.ordering = j.at("ordering").get<std::vector<std::size_t>>();
    order.fitted_on = j.value("fitted_on", std::string{});
    order.metric = j.value("metric", std::string{"accuracy"});
    order.step_metrics = j.value("step_metrics", std::vector<double>{});
  } catch (const Json::exception& e) {
    fail(ErrorCode::Parse, std::string("greedy order: ") + e.what());
  }
  std::vector<bool> seen(concept_count, false);
  if (order.ordering.size() != concept_count) fail(ErrorCode::Schema, "greedy ordering is not a permutation");
  for (auto& i : order.ordering) {
    if (i < 1 || i > concept_count || seen[i - 1]) fail(ErrorCode::Schema, "greedy ordering is not a permutation");
    seen[i - 1] = true;
    i -= 1;
  }
  return order;
}

std::string_view metric_name(Metric metric) noexcept {
  switch (metric) {
    case Metric::Accuracy: return "accuracy";
    case Metric::Auc: return "auc";
    case Metric::TrueLabelProb: return "true_label_prob";
  }
  return "accuracy";
}

Metric metric_from_name(std::string_view name) {
  if (name == "accuracy") return Metric::Accuracy;
  if (name == "auc") return Metric::Auc;
  if (name == "true_label_prob") return Metric::TrueLabelProb;
  fail(ErrorCode::Config, "unknown metric '" + std::string(name) + "'");
}

double score_metric(Metric metric, std::span<const std::vector<double>> label_dists, std::span<const int> labels) {
  switch (metric) {
    case Metric::Accuracy:
      return accuracy(label_dists, labels);
    case Metric::Auc: {
      std::vector<double> scores;
      scores.reserve(label_dists.size());
      for (const auto& d : label_dists) {
        if (d.size() != 2) fail(ErrorCode::MetricMismatch, "AUC needs a two-class task");
        scores.push_back(d[1]);
      }
      return auc(scores, labels);
    }
    case Metric::TrueLabelProb: {
      if (label_dists.empty()) fail(ErrorCode::EmptyInput, "no predictions");
      double sum = 0.0;
      for (std::size_t n = 0; n < labels.size(); ++n) sum += label_dists[n][static_cast<std::size_t>(labels[n])];
      return sum / static_cast<double>(labels.size());
    }
  }
  return 0.0;
}

GreedyOrder greedy_fit(const Dataset& valset, const ConceptToLabelModel& model, const CalibrationMap* calibration,
                       Metric metric) {
  if (valset.empty()) fail(ErrorCode::EmptyInput, "greedy ordering needs a nonempty validation set");
  if (metric == Metric::Auc && valset.space.label_count() != 2) fail(ErrorCode::MetricMismatch, "AUC needs a two-class task");
  const std::size_t m = valset.space.concept_count();
  std::vector<std::vector<std::vector<double>>> dists;
  std::vector<int> labels;
  for (const auto& inst : valset.instances) {
    dists.push_back(effective_distributions(inst, calibration));
    labels.push_back(inst.label);
  }

  GreedyOrder order;
  order.fitted_on = std::string(split_name(valset.split));
  order.metric = std::string(metric_name(metric));
  std::vector<bool> taken(m, false);
  std::vector<Revealed> revealed(valset.size(), Revealed(m));
  std::vector<std::vector<double>> preds(valset.size());
  for (std::size_t step = 0; step < m; ++step) {
    std::size_t best = m;
    double best_value = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < m; ++c) {
      if (taken[c]) continue;
      for (std::size_t n = 0; n < valset.size(); ++n) {
        Revealed r = revealed[n];
        r[c] = valset.instances[n].concept_true[c];
        preds[n] = model.predict(assemble_features(valset.space, dists[n], r));
      }
      const double value = score_metric(metric, preds, labels);
      if (value > best_value) {
        best_value = value;
        best = c;
      }
    }
    taken[best] = true;
    order.ordering.push_back(best);
    order.step_metrics.push_back(best_value);
    for (std::size_t n = 0; n < valset.size(); ++n) revealed[n][best] = valset.instances[n].concept_true[best];
  }
  return order;
}

std::size_t greedy_select(const GreedyOrder& order, const InterventionState& state) {
  for (std::size_t i : order.ordering) {
    if (!state.is_revealed(i)) return i;
  }
  fail(ErrorCode::NothingToSelect, "every concept is already revealed");
}

std::vector<std::pair<std::size_t, double>> skyline_gains(const InterventionState& state) {
  const auto& inst = state.instance();
  std::vector<std::pair<std::size_t, double>> gains;
  for (std::size_t i : state.unrevealed()) {
    gains.emplace_back(i, state.predict_with(i, inst.concept_true[i])[static_cast<std::size_t>(inst.label)]);
  }
  return gains;
}

std::size_t skyline_select(const InterventionState& state) {
  const auto gains = skyline_gains(state);
  if (gains.empty()) fail(ErrorCode::NothingToSelect, "every concept is already revealed");
  std::size_t best = 0;
  for (std::size_t n = 1; n < gains.size(); ++n) {
    if (gains[n].second > gains[best].second) best = n;
  }
  return gains[best].first;
}

std::size_t CoopPolicy::select(const InterventionState& state, Rng&) const { return coop_select(state, config_).first; }

std::size_t RandomPolicy::select(const InterventionState& state, Rng& rng) const { return random_select(state, rng); }

std::size_t GreedyPolicy::select(const InterventionState& state, Rng&) const { return greedy_select(order_, state); }

std::size_t SkylinePolicy::select(const InterventionState& state, Rng&) const { return skyline_select(state); }

PolicyConfig cpu_only(const PolicyConfig& base) {
  PolicyConfig c = base;
  c.alpha = 1.0;
  c.beta = 0.0;
  c.gamma = 0.0;
  return c;
}

PolicyConfig cis_only(const PolicyConfig& base) {
  PolicyConfig c = base;
  c.alpha = 0.0;
  c.beta = 1.0;
  c.gamma = 0.0;
  return c;
}

std::unique_ptr<Policy> make_policy(std::string_view id, const PolicyConfig* config, const GreedyOrder* order) {
  auto need_config = [&]() -> const PolicyConfig& {
    if (!config) fail(ErrorCode::UnknownPolicy, "policy '" + std::string(id) + "' needs a tuned CooP config");
    return *config;
  };
  if (id == "coop") return std::make_unique<CoopPolicy>(need_config(), "coop");
  if (id == "cpu-only") return std::make_unique<CoopPolicy>(cpu_only(need_config()), "cpu-only");
  if (id == "cis-only") return std::make_unique<CoopPolicy>(cis_only(need_config()), "cis-only");
  if (id == "random") return std::make_unique<RandomPolicy>();
  if (id == "skyline") return std::make_unique<SkylinePolicy>();
  if (id == "greedy") {
    if (!order) fail(ErrorCode::UnknownPolicy, "policy 'greedy' needs a fitted ordering");
    return std::make_unique<GreedyPolicy>(*order);
  }
  fail(ErrorCode::UnknownPolicy, "unknown policy '" + std::string(id) + "'");
}

}  // namespace coop
