#include "coop/cbm.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "coop/errors.hpp"
#include "coop/util.hpp"

namespace coop {

std::string_view architecture_name(Architecture arch) noexcept {
  return arch == Architecture::Linear ? "linear" : "mlp";
}

namespace {

Architecture architecture_from_name(const std::string& name) {
  if (name == "linear") return Architecture::Linear;
  if (name == "mlp") return Architecture::Mlp;
  fail(ErrorCode::Config, "unknown architecture '" + name + "'");
}

// out[r] = b[r] + sum_c w[r * cols + c] * x[c]
void affine(std::span<const double> w, std::span<const double> b, std::span<const double> x,
            std::span<double> out) {
  const std::size_t cols = x.size();
  for (std::size_t r = 0; r < out.size(); ++r) {
    const double* row = w.data() + r * cols;
    double acc = b[r];
    for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
    out[r] = acc;
  }
}

void softmax_in_place(std::vector<double>& z) {
  const double top = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double& v : z) {
    v = std::exp(v - top);
    sum += v;
  }
  for (double& v : z) v /= sum;
}

double sum_of_squares(const std::vector<double>& v) {
  return std::inner_product(v.begin(), v.end(), v.begin(), 0.0);
}

}  // namespace

ConceptToLabelModel ConceptToLabelModel::zeros(Architecture arch, std::size_t input_dim, std::size_t label_count,
                                               std::size_t hidden_dim) {
  ConceptToLabelModel m;
  m.architecture = arch;
  m.input_dim = input_dim;
  m.label_count = label_count;
  if (arch == Architecture::Linear) {
    m.hidden_dim = 0;
    m.w1.assign(label_count * input_dim, 0.0);
    m.b1.assign(label_count, 0.0);
  } else {
    if (hidden_dim == 0) fail(ErrorCode::Config, "mlp needs a hidden width");
    m.hidden_dim = hidden_dim;
    m.w1.assign(hidden_dim * input_dim, 0.0);
    m.b1.assign(hidden_dim, 0.0);
    m.w2.assign(label_count * hidden_dim, 0.0);
    m.b2.assign(label_count, 0.0);
  }
  return m;
}

std::vector<double> ConceptToLabelModel::logits(std::span<const double> features) const {
  if (features.size() != input_dim) {
    fail(ErrorCode::Dimension, "feature dimension " + std::to_string(features.size()) + " != model input " +
                                   std::to_string(input_dim));
  }
  std::vector<double> out(label_count);
  if (architecture == Architecture::Linear) {
    affine(w1, b1, features, out);
    return out;
  }
  std::vector<double> hidden(hidden_dim);
  affine(w1, b1, features, hidden);
  for (double& h : hidden) h = std::max(h, 0.0);
  affine(w2, b2, hidden, out);
  return out;
}

std::vector<double> ConceptToLabelModel::predict(std::span<const double> features) const {
  auto z = logits(features);
  softmax_in_place(z);
  return z;
}

Json to_json(const ConceptToLabelModel& m) {
  Json j{{"architecture", architecture_name(m.architecture)},
         {"input_dim", m.input_dim},
         {"hidden_dim", m.hidden_dim},
         {"label_count", m.label_count},
         {"w1", m.w1},
         {"b1", m.b1},
         {"trained_on", m.trained_on},
         {"metadata", m.metadata}};
  if (m.architecture == Architecture::Mlp) {
    j["w2"] = m.w2;
    j["b2"] = m.b2;
  }
  return j;
}

ConceptToLabelModel model_from_json(const Json& j) {
  ConceptToLabelModel m;
  try {
    m.architecture = architecture_from_name(j.at("architecture").get<std::string>());
    m.input_dim = j.at("input_dim").get<std::size_t>();
    m.hidden_dim = j.value("hidden_dim", std::size_t{0});
    m.label_count = j.at("label_count").get<std::size_t>();
    m.w1 = j.at("w1").get<std::vector<double>>();
    m.b1 = j.at("b1").get<std::vector<double>>();
    if (m.architecture == Architecture::Mlp) {
      m.w2 = j.at("w2").get<std::vector<double>>();
      m.b2 = j.at("b2").get<std::vector<double>>();
    }
    m.trained_on = j.value("trained_on", std::string{});
    m.metadata = j.value("metadata", Json::object());
  } catch (const Json::exception& e) {
    fail(ErrorCode::Parse, std::string("model: ") + e.what());
  }
  const std::size_t first_out = m.architecture == Architecture::Linear ? m.label_count : m.hidden_dim;
  bool ok = m.w1.size() == first_out * m.input_dim && m.b1.size() == first_out;
  if (m.architecture == Architecture::Mlp) {
    ok = ok && m.w2.size() == m.label_count * m.hidden_dim && m.b2.size() == m.label_count;
  }
  if (!ok || m.label_count < 2) fail(ErrorCode::Dimension, "model weight shapes are inconsistent");
  return m;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) fail(ErrorCode::Config, "learning_rate must be > 0");
  if (epochs == 0) fail(ErrorCode::Config, "epochs must be > 0");
  if (batch_size == 0) fail(ErrorCode::Config, "batch_size must be > 0");
  if (!(weight_decay >= 0.0)) fail(ErrorCode::Config, "weight_decay must be >= 0");
  if (architecture == Architecture::Mlp && hidden_dim == 0) fail(ErrorCode::Config, "hidden_dim must be > 0");
}

Json to_json(const TrainConfig& c) {
  return Json{{"learning_rate", c.learning_rate}, {"epochs", c.epochs},
              {"batch_size", c.batch_size},       {"weight_decay", c.weight_decay},
              {"seed", c.seed},                   {"architecture", architecture_name(c.architecture)},
              {"hidden_dim", c.hidden_dim}};
}

TrainConfig train_config_from_json(const Json& j) {
  TrainConfig c;
  try {
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.seed = j.value("seed", c.seed);
    c.architecture = architecture_from_name(j.value("architecture", std::string("linear")));
    c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
  } catch (const Json::exception& e) {
    fail(ErrorCode::Config, std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

double training_objective(const ConceptToLabelModel& model, std::span<const TrainingExample> batch,
                          double weight_decay, ConceptToLabelModel* gradient) {
  if (batch.empty()) fail(ErrorCode::EmptyInput, "empty batch");
  const bool mlp = model.architecture == Architecture::Mlp;
  if (gradient) {
    *gradient = ConceptToLabelModel::zeros(model.architecture, model.input_dim, model.label_count, model.hidden_dim);
  }
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  const std::size_t d = model.input_dim;
  const std::size_t k = model.label_count;
  const std::size_t h = model.hidden_dim;

  double loss = 0.0;
  std::vector<double> pre(h), hidden(h), z(k), dz(k), dh(h);
  for (const auto& ex : batch) {
    if (ex.features.size() != d) fail(ErrorCode::Dimension, "training example dimension mismatch");
    std::span<const double> x(ex.features);
    if (mlp) {
      affine(model.w1, model.b1, x, pre);
      for (std::size_t u = 0; u < h; ++u) hidden[u] = std::max(pre[u], 0.0);
      affine(model.w2, model.b2, hidden, z);
    } else {
      affine(model.w1, model.b1, x, z);
    }
    const double top = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - top);
    const double log_z = top + std::log(sum);
    loss += log_z - z[static_cast<std::size_t>(ex.label)];
    if (!gradient) continue;

    for (std::size_t c = 0; c < k; ++c) {
      dz[c] = (std::exp(z[c] - log_z) - (static_cast<int>(c) == ex.label ? 1.0 : 0.0)) * inv_n;
    }
    if (mlp) {
      for (std::size_t c = 0; c < k; ++c) {
        gradient->b2[c] += dz[c];
        double* row = gradient->w2.data() + c * h;
        for (std::size_t u = 0; u < h; ++u) row[u] += dz[c] * hidden[u];
      }
      std::fill(dh.begin(), dh.end(), 0.0);
      for (std::size_t c = 0; c < k; ++c) {
        const double* row = model.w2.data() + c * h;
        for (std::size_t u = 0; u < h; ++u) dh[u] += row[u] * dz[c];
      }
      for (std::size_t u = 0; u < h; ++u) {
        if (pre[u] <= 0.0) continue;
        gradient->b1[u] += dh[u];
        double* row = gradient->w1.data() + u * d;
        for (std::size_t i = 0; i < d; ++i) row[i] += dh[u] * x[i];
      }
    } else {
      for (std::size_t c = 0; c < k; ++c) {
        gradient->b1[c] += dz[c];
        double* row = gradient->w1.data() + c * d;
        for (std::size_t i = 0; i < d; ++i) row[i] += dz[c] * x[i];
      }
    }
  }
  loss *= inv_n;

  loss += 0.5 * weight_decay * sum_of_squares(model.w1);
  if (mlp) loss += 0.5 * weight_decay * sum_of_squares(model.w2);
  if (gradient) {
    for (std::size_t i = 0; i < model.w1.size(); ++i) gradient->w1[i] += weight_decay * model.w1[i];
    if (mlp) {
      for (std::size_t i = 0; i < model.w2.size(); ++i) gradient->w2[i] += weight_decay * model.w2[i];
    }
  }
  return loss;
}

FeatureVector one_hot_features(const ConceptSpace& space, std::span<const int> values) {
  FeatureVector x(space.feature_dim(), 0.0);
  std::size_t at = 0;
  for (std::size_t i = 0; i < space.concept_count(); ++i) {
    x[at + static_cast<std::size_t>(values[i])] = 1.0;
    at += static_cast<std::size_t>(space.arities[i]);
  }
  return x;
}

TrainResult train_concept_to_label(const Dataset& train, const TrainConfig& config) {
  config.validate();
  if (train.empty()) fail(ErrorCode::EmptyInput, "training split is empty");
  const ConceptSpace& space = train.space;
  const std::size_t d = space.feature_dim();
  const std::size_t k = space.label_count();

  std::vector<TrainingExample> examples;
  examples.reserve(train.size());
  for (const auto& inst : train.instances) examples.push_back({one_hot_features(space, inst.concept_true), inst.label});

  TrainResult result;
  const int first_label = train.instances.front().label;
  result.degenerate = std::all_of(train.instances.begin(), train.instances.end(),
                                  [&](const Instance& inst) { return inst.label == first_label; });

  Rng rng = make_rng(config.seed, 0x7a1);
  ConceptToLabelModel model = ConceptToLabelModel::zeros(config.architecture, d, k, config.hidden_dim);
  if (config.architecture == Architecture::Mlp) {
    const double s1 = std::sqrt(2.0 / static_cast<double>(d));
    const double s2 = std::sqrt(1.0 / static_cast<double>(config.hidden_dim));
    for (double& w : model.w1) w = s1 * standard_normal(rng);
    for (double& w : model.w2) w = s2 * standard_normal(rng);
  } else {
    for (double& w : model.w1) w = 0.01 * standard_normal(rng);
  }

  ConceptToLabelModel grad;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    // Fisher-Yates with the portable integer distribution.
    for (std::size_t i = examples.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(i) - 1));
      std::swap(examples[i - 1], examples[j]);
    }
    for (std::size_t start = 0; start < examples.size(); start += config.batch_size) {
      const std::size_t len = std::min(config.batch_size, examples.size() - start);
      training_objective(model, std::span<const TrainingExample>(examples).subspan(start, len),
                         config.weight_decay, &grad);
      auto step = [&](std::vector<double>& w, const std::vector<double>& g) {
        for (std::size_t i = 0; i < w.size(); ++i) w[i] -= config.learning_rate * g[i];
      };
      step(model.w1, grad.w1);
      step(model.b1, grad.b1);
      if (config.architecture == Architecture::Mlp) {
        step(model.w2, grad.w2);
        step(model.b2, grad.b2);
      }
    }
  }

  model.trained_on = std::string(split_name(train.split));
  model.metadata = Json{{"config", to_json(config)},
                        {"seed", config.seed},
                        {"data_hash", sha256_hex(serialize_dataset(train))},
                        {"degenerate", result.degenerate}};
  result.model = std::move(model);
  return result;
}

// ---------------------------------------------------------------------------
// Calibration

double CalibrationMap::operator()(double p) const { return apply_calibration(*this, p); }

Json to_json(const CalibrationMap& map) {
  Json pts = Json::array();
  for (std::size_t i = 0; i < map.inputs.size(); ++i) pts.push_back({map.inputs[i], map.outputs[i]});
  return Json{{"breakpoints", pts}};
}

CalibrationMap calibration_from_json(const Json& j) {
  CalibrationMap map;
  try {
    for (const auto& pt : j.at("breakpoints")) {
      map.inputs.push_back(pt.at(0).get<double>());
      map.outputs.push_back(pt.at(1).get<double>());
    }
  } catch (const Json::exception& e) {
    fail(ErrorCode::Parse, std::string("calibration map: ") + e.what());
  }
  if (map.inputs.empty()) fail(ErrorCode::Schema, "calibration map has no breakpoints");
  for (std::size_t i = 0; i < map.inputs.size(); ++i) {
    const bool in_range = map.inputs[i] >= 0.0 && map.inputs[i] <= 1.0 && map.outputs[i] >= 0.0 && map.outputs[i] <= 1.0;
    const bool ordered = i == 0 || (map.inputs[i] > map.inputs[i - 1] && map.outputs[i] >= map.outputs[i - 1]);
    if (!in_range || !ordered) fail(ErrorCode::Schema, "calibration breakpoints are not a monotone map on [0,1]");
  }
  return map;
}

IsotonicFit isotonic_regression(std::span<const CalibrationPair> pairs) {
  if (pairs.size() < 2) fail(ErrorCode::EmptyInput, "isotonic regression needs at least two pairs");
  std::vector<CalibrationPair> sorted(pairs.begin(), pairs.end());
  for (const auto& p : sorted) {
    if (!(p.probability >= 0.0 && p.probability <= 1.0) || !(p.outcome >= 0.0 && p.outcome <= 1.0)) {
      fail(ErrorCode::Schema, "calibration pairs must lie in [0,1]");
    }
  }
  std::sort(sorted.begin(), sorted.end(),
            [](const CalibrationPair& a, const CalibrationPair& b) { return a.probability < b.probability; });

  // Pool ties, keeping exact sums so block means are a single division.
  struct Block {
    double sum;
    double weight;
    std::size_t first;  // index into distinct inputs
  };
  IsotonicFit fit;
  std::vector<Block> points;
  for (const auto& p : sorted) {
    if (!fit.inputs.empty() && fit.inputs.back() == p.probability) {
      points.back().sum += p.outcome;
      points.back().weight += 1.0;
    } else {
      fit.inputs.push_back(p.probability);
      points.push_back({p.outcome, 1.0, fit.inputs.size() - 1});
    }
  }

  std::vector<Block> stack;
  for (const Block& b : points) {
    stack.push_back(b);
    while (stack.size() > 1) {
      const Block& cur = stack.back();
      const Block& prev = stack[stack.size() - 2];
      if (prev.sum * cur.weight <= cur.sum * prev.weight) break;
      Block merged{prev.sum + cur.sum, prev.weight + cur.weight, prev.first};
      stack.pop_back();
      stack.back() = merged;
    }
  }

  fit.fitted.resize(fit.inputs.size());
  for (std::size_t b = 0; b < stack.size(); ++b) {
    const std::size_t end = b + 1 < stack.size() ? stack[b + 1].first : fit.inputs.size();
    const double value = stack[b].sum / stack[b].weight;
    for (std::size_t i = stack[b].first; i < end; ++i) fit.fitted[i] = value;
  }
  return fit;
}

CalibrationMap fit_isotonic(std::span<const CalibrationPair> pairs) {
  const IsotonicFit fit = isotonic_regression(pairs);
  CalibrationMap map;
  // Interior points of a constant run do not change the interpolation.
  for (std::size_t i = 0; i < fit.inputs.size(); ++i) {
    const bool same_as_prev = i > 0 && fit.fitted[i - 1] == fit.fitted[i];
    const bool same_as_next = i + 1 < fit.inputs.size() && fit.fitted[i + 1] == fit.fitted[i];
    if (same_as_prev && same_as_next) continue;
    map.inputs.push_back(fit.inputs[i]);
    map.outputs.push_back(fit.fitted[i]);
  }
  return map;
}

double apply_calibration(const CalibrationMap& map, double p) {
  const auto& xs = map.inputs;
  const auto& ys = map.outputs;
  if (xs.empty()) return p;
  if (p <= xs.front()) return ys.front();
  if (p >= xs.back()) return ys.back();
  const auto hi = static_cast<std::size_t>(std::upper_bound(xs.begin(), xs.end(), p) - xs.begin());
  const std::size_t lo = hi - 1;
  if (xs[lo] == p) return ys[lo];
  const double t = (p - xs[lo]) / (xs[hi] - xs[lo]);
  return std::clamp(ys[lo] + t * (ys[hi] - ys[lo]), 0.0, 1.0);
}

std::vector<double> calibrate_distribution(const CalibrationMap& map, std::span<const double> dist) {
  std::vector<double> out(dist.size());
  double sum = 0.0;
  for (std::size_t v = 0; v < dist.size(); ++v) {
    out[v] = apply_calibration(map, dist[v]);
    sum += out[v];
  }
  if (!(sum > 0.0)) return {dist.begin(), dist.end()};
  for (double& p : out) p /= sum;
  return out;
}

std::vector<CalibrationPair> concept_calibration_pairs(const Dataset& dataset, const CalibrationMap* calibration) {
  std::vector<CalibrationPair> pairs;
  pairs.reserve(dataset.size() * dataset.space.feature_dim());
  for (const auto& inst : dataset.instances) {
    const auto dists = effective_distributions(inst, calibration);
    for (std::size_t i = 0; i < dists.size(); ++i) {
      for (std::size_t v = 0; v < dists[i].size(); ++v) {
        pairs.push_back({dists[i][v], inst.concept_true[i] == static_cast<int>(v) ? 1.0 : 0.0});
      }
    }
  }
  return pairs;
}

CalibrationMap fit_concept_calibration(const Dataset& dataset) {
  const auto pairs = concept_calibration_pairs(dataset, nullptr);
  return fit_isotonic(pairs);
}

double expected_calibration_error(std::span<const CalibrationPair> pairs, std::size_t bins) {
  if (pairs.empty()) fail(ErrorCode::EmptyInput, "no pairs for calibration error");
  std::vector<double> conf(bins, 0.0), hits(bins, 0.0), count(bins, 0.0);
  for (const auto& p : pairs) {
    auto b = static_cast<std::size_t>(p.probability * static_cast<double>(bins));
    b = std::min(b, bins - 1);
    conf[b] += p.probability;
    hits[b] += p.outcome;
    count[b] += 1.0;
  }
  double ece = 0.0;
  for (std::size_t b = 0; b < bins; ++b) {
    if (count[b] == 0.0) continue;
    ece += std::abs(conf[b] - hits[b]);
  }
  return ece / static_cast<double>(pairs.size());
}

// ---------------------------------------------------------------------------
// Intervention inputs

std::vector<std::vector<double>> effective_distributions(const Instance& instance, const CalibrationMap* calibration) {
  if (!calibration) return instance.concept_probs;
  std::vector<std::vector<double>> out;
  out.reserve(instance.concept_probs.size());
  for (const auto& dist : instance.concept_probs) out.push_back(calibrate_distribution(*calibration, dist));
  return out;
}

FeatureVector assemble_features(const ConceptSpace& space, const std::vector<std::vector<double>>& dists,
                                const Revealed& revealed) {
  const std::size_t m = space.concept_count();
  if (revealed.size() != m || dists.size() != m) fail(ErrorCode::Arity, "revealed map does not cover the concept space");
  FeatureVector x;
  x.reserve(space.feature_dim());
  for (std::size_t i = 0; i < m; ++i) {
    const auto n = static_cast<std::size_t>(space.arities[i]);
    if (revealed[i]) {
      const int v = *revealed[i];
      if (v < 0 || v >= space.arities[i]) fail(ErrorCode::Arity, "revealed value out of range for concept " + space.concept_names[i]);
      for (std::size_t c = 0; c < n; ++c) x.push_back(static_cast<int>(c) == v ? 1.0 : 0.0);
    } else {
      x.insert(x.end(), dists[i].begin(), dists[i].end());
    }
  }
  return x;
}

FeatureVector assemble_input(const ConceptSpace& space, const Instance& instance, const Revealed& revealed,
                             const CalibrationMap* calibration) {
  return assemble_features(space, effective_distributions(instance, calibration), revealed);
}

// ---------------------------------------------------------------------------
// Metrics

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

double accuracy(std::span<const std::vector<double>> label_dists, std::span<const int> labels) {
  if (label_dists.empty() || label_dists.size() != labels.size()) fail(ErrorCode::EmptyInput, "accuracy needs matching, nonempty inputs");
  std::size_t hits = 0;
  for (std::size_t n = 0; n < labels.size(); ++n) {
    if (static_cast<int>(argmax(label_dists[n])) == labels[n]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

double accuracy(const ConceptToLabelModel& model, const Dataset& dataset,
                const std::function<Revealed(const Instance&)>& plan, const CalibrationMap* calibration) {
  std::vector<std::vector<double>> dists;
  std::vector<int> labels;
  for (const auto& inst : dataset.instances) {
    dists.push_back(model.predict(assemble_input(dataset.space, inst, plan(inst), calibration)));
    labels.push_back(inst.label);
  }
  return accuracy(dists, labels);
}

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) fail(ErrorCode::Dimension, "scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Sum of midranks of the positives.
  double positives = 0.0;
  double rank_sum = 0.0;
  for (std::size_t start = 0; start < order.size();) {
    std::size_t end = start;
    while (end < order.size() && scores[order[end]] == scores[order[start]]) ++end;
    const double midrank = 0.5 * static_cast<double>(start + 1 + end);
    for (std::size_t t = start; t < end; ++t) {
      if (labels[order[t]] == 1) {
        positives += 1.0;
        rank_sum += midrank;
      }
    }
    start = end;
  }
  const double negatives = static_cast<double>(scores.size()) - positives;
  if (positives == 0.0 || negatives == 0.0) fail(ErrorCode::AucUndefined, "AUC needs both positive and negative labels");
  return (rank_sum - positives * (positives + 1.0) / 2.0) / (positives * negatives);
}

}  // namespace coop
