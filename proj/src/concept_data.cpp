#include "coop/concept_data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "coop/errors.hpp"
#include "coop/util.hpp"

namespace coop {

namespace {

constexpr double kRenormTolerance = 1e-6;
constexpr int kProbDigits = 9;

std::string line_prefix(std::size_t line) { return "line " + std::to_string(line) + ": "; }

// Checks a distribution against its arity and renormalizes in place.
void normalize_distribution(std::vector<double>& dist, int arity, const std::string& where) {
  if (dist.size() != static_cast<std::size_t>(arity)) {
    fail(ErrorCode::Schema, where + "distribution has " + std::to_string(dist.size()) +
                                " entries, arity is " + std::to_string(arity));
  }
  double sum = 0.0;
  for (double p : dist) {
    if (!std::isfinite(p) || p < 0.0) fail(ErrorCode::Schema, where + "negative or non-finite probability");
    sum += p;
  }
  if (std::abs(sum - 1.0) > kRenormTolerance) {
    fail(ErrorCode::Schema, where + "distribution sums to " + std::to_string(sum));
  }
  for (double& p : dist) p /= sum;
}

}  // namespace

std::size_t ConceptSpace::feature_dim() const noexcept {
  return std::accumulate(arities.begin(), arities.end(), std::size_t{0},
                         [](std::size_t acc, int n) { return acc + static_cast<std::size_t>(n); });
}

std::vector<std::size_t> ConceptSpace::block_offsets() const {
  std::vector<std::size_t> offsets(arities.size());
  std::size_t at = 0;
  for (std::size_t i = 0; i < arities.size(); ++i) {
    offsets[i] = at;
    at += static_cast<std::size_t>(arities[i]);
  }
  return offsets;
}

std::size_t ConceptSpace::concept_index(const std::string& name) const {
  auto it = std::find(concept_names.begin(), concept_names.end(), name);
  if (it == concept_names.end()) fail(ErrorCode::Schema, "unknown concept '" + name + "'");
  return static_cast<std::size_t>(it - concept_names.begin());
}

void ConceptSpace::validate() const {
  if (arities.empty()) fail(ErrorCode::Schema, "concept space needs at least one concept");
  if (concept_names.size() != arities.size()) {
    fail(ErrorCode::Schema, "concept_names and arities differ in length");
  }
  if (label_names.size() < 2) fail(ErrorCode::Schema, "label space needs at least two labels");
  for (int n : arities) {
    if (n < 2) fail(ErrorCode::Schema, "concept arity must be at least 2");
  }
  if (std::set<std::string>(concept_names.begin(), concept_names.end()).size() != concept_names.size()) {
    fail(ErrorCode::Schema, "duplicate concept name");
  }
  if (std::set<std::string>(label_names.begin(), label_names.end()).size() != label_names.size()) {
    fail(ErrorCode::Schema, "duplicate label name");
  }
}

ConceptSpace ConceptSpace::make(std::vector<int> arities, std::size_t label_count) {
  ConceptSpace space;
  for (std::size_t i = 0; i < arities.size(); ++i) space.concept_names.push_back("c" + std::to_string(i + 1));
  for (std::size_t k = 0; k < label_count; ++k) space.label_names.push_back("y" + std::to_string(k + 1));
  space.arities = std::move(arities);
  space.validate();
  return space;
}

Json to_json(const ConceptSpace& space) {
  return Json{{"concept_names", space.concept_names},
              {"arities", space.arities},
              {"label_names", space.label_names}};
}

ConceptSpace concept_space_from_json(const Json& j) {
  ConceptSpace space;
  try {
    space.concept_names = j.at("concept_names").get<std::vector<std::string>>();
    space.arities = j.at("arities").get<std::vector<int>>();
    space.label_names = j.at("label_names").get<std::vector<std::string>>();
  } catch (const Json::exception& e) {
    fail(ErrorCode::Parse, std::string("concept space: ") + e.what());
  }
  space.validate();
  return space;
}

void validate_instance(const Instance& instance, const ConceptSpace& space) {
  const std::size_t m = space.concept_count();
  if (instance.concept_probs.size() != m || instance.concept_true.size() != m) {
    fail(ErrorCode::Schema, "instance '" + instance.id + "' does not have " + std::to_string(m) + " concepts");
  }
  for (std::size_t i = 0; i < m; ++i) {
    const auto& dist = instance.concept_probs[i];
    if (dist.size() != static_cast<std::size_t>(space.arities[i])) {
      fail(ErrorCode::Schema, "instance '" + instance.id + "' concept " + std::to_string(i + 1) + " arity mismatch");
    }
    double sum = 0.0;
    for (double p : dist) {
      if (!(p >= 0.0)) fail(ErrorCode::Schema, "instance '" + instance.id + "' has a negative probability");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      fail(ErrorCode::Schema, "instance '" + instance.id + "' distribution is not normalized");
    }
    if (instance.concept_true[i] < 0 || instance.concept_true[i] >= space.arities[i]) {
      fail(ErrorCode::Schema, "instance '" + instance.id + "' concept value out of range");
    }
  }
  if (instance.label < 0 || static_cast<std::size_t>(instance.label) >= space.label_count()) {
    fail(ErrorCode::Schema, "instance '" + instance.id + "' label out of range");
  }
}

std::string_view split_name(Split split) noexcept {
  switch (split) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "test";
}

Split split_from_name(std::string_view name) {
  if (name == "train") return Split::Train;
  if (name == "val") return Split::Val;
  if (name == "test") return Split::Test;
  fail(ErrorCode::Config, "unknown split '" + std::string(name) + "'");
}

Dataset parse_dataset(std::istream& in, const ConceptSpace& space, Split split) {
  space.validate();
  Dataset dataset{space, {}, split};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = line_prefix(line_no);
    Instance inst;
    try {
      const Json row = Json::parse(line);
      inst.id = row.at("id").get<std::string>();
      inst.concept_probs = row.at("concept_probs").get<std::vector<std::vector<double>>>();
      inst.concept_true = row.at("concept_true").get<std::vector<int>>();
      inst.label = row.at("label").get<int>();
    } catch (const Json::exception& e) {
      fail(ErrorCode::Parse, where + e.what());
    }
    const std::size_t m = space.concept_count();
    if (inst.concept_probs.size() != m || inst.concept_true.size() != m) {
      fail(ErrorCode::Schema, where + "expected " + std::to_string(m) + " concepts");
    }
    for (std::size_t i = 0; i < m; ++i) {
      normalize_distribution(inst.concept_probs[i], space.arities[i], where);
      if (inst.concept_true[i] < 1 || inst.concept_true[i] > space.arities[i]) {
        fail(ErrorCode::Schema, where + "concept_true out of range for concept " + std::to_string(i + 1));
      }
      inst.concept_true[i] -= 1;
    }
    if (inst.label < 1 || static_cast<std::size_t>(inst.label) > space.label_count()) {
      fail(ErrorCode::Schema, where + "label out of range");
    }
    inst.label -= 1;
    dataset.instances.push_back(std::move(inst));
  }
  return dataset;
}

Dataset load_dataset(const std::filesystem::path& path, const ConceptSpace& space, Split split) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::ArtifactMissing, "cannot open dataset " + path.string());
  return parse_dataset(in, space, split);
}

std::string serialize_dataset(const Dataset& dataset) {
  std::string out;
  for (const auto& inst : dataset.instances) {
    Json probs = Json::array();
    for (const auto& dist : inst.concept_probs) {
      Json row = Json::array();
      for (double p : dist) row.push_back(round_significant(p, kProbDigits));
      probs.push_back(std::move(row));
    }
    std::vector<int> truth(inst.concept_true);
    for (int& v : truth) v += 1;
    Json obj;
    obj["id"] = inst.id;
    obj["concept_probs"] = std::move(probs);
    obj["concept_true"] = truth;
    obj["label"] = inst.label + 1;
    out += obj.dump();
    out += '\n';
  }
  return out;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  write_text_file(path, serialize_dataset(dataset));
}

ConceptSpace load_space(const std::filesystem::path& path) {
  return concept_space_from_json(read_json_file(path));
}

void save_space(const ConceptSpace& space, const std::filesystem::path& path) {
  write_json_file(path, to_json(space));
}

// ---------------------------------------------------------------------------
// Synthetic tasks

void SyntheticTaskConfig::validate() const {
  auto bad = [](const std::string& what) { fail(ErrorCode::Config, "synthetic config: " + what); };
  if (concept_count < 1) bad("concept_count must be >= 1");
  if (label_count < 2) bad("label_count must be >= 2");
  if (!arities.empty() && arities.size() != concept_count) bad("arities length must equal concept_count");
  for (int n : arities) {
    if (n < 2) bad("every arity must be >= 2");
  }
  if (!(flip_rate >= 0.0 && flip_rate < 0.5)) bad("flip_rate must lie in [0, 0.5)");
  if (!(probe_sharpness > 0.0)) bad("probe_sharpness must be > 0");
  if (!(probe_noise >= 0.0)) bad("probe_noise must be >= 0");
  if (!(miscalibration_exponent > 0.0)) bad("miscalibration_exponent must be > 0");
}

std::vector<int> SyntheticTaskConfig::resolved_arities() const {
  return arities.empty() ? std::vector<int>(concept_count, 2) : arities;
}

Json to_json(const SyntheticTaskConfig& c) {
  return Json{{"concept_count", c.concept_count},
              {"label_count", c.label_count},
              {"arities", c.resolved_arities()},
              {"flip_rate", c.flip_rate},
              {"probe_sharpness", c.probe_sharpness},
              {"probe_noise", c.probe_noise},
              {"miscalibration_exponent", c.miscalibration_exponent},
              {"train_size", c.train_size},
              {"val_size", c.val_size},
              {"test_size", c.test_size},
              {"seed", c.seed}};
}

SyntheticTaskConfig synthetic_config_from_json(const Json& j) {
  SyntheticTaskConfig c;
  try {
    c.concept_count = j.value("concept_count", c.concept_count);
    c.label_count = j.value("label_count", c.label_count);
    c.arities = j.value("arities", c.arities);
    c.flip_rate = j.value("flip_rate", c.flip_rate);
    c.probe_sharpness = j.value("probe_sharpness", c.probe_sharpness);
    c.probe_noise = j.value("probe_noise", c.probe_noise);
    c.miscalibration_exponent = j.value("miscalibration_exponent", c.miscalibration_exponent);
    c.train_size = j.value("train_size", c.train_size);
    c.val_size = j.value("val_size", c.val_size);
    c.test_size = j.value("test_size", c.test_size);
    c.seed = j.value("seed", c.seed);
  } catch (const Json::exception& e) {
    fail(ErrorCode::Config, std::string("synthetic config: ") + e.what());
  }
  c.validate();
  return c;
}

SyntheticTaskConfig reference_task_config() { return SyntheticTaskConfig{}; }

double distort_probability(double p, double exponent) {
  if (p <= 0.0) return 0.0;
  if (p >= 1.0) return 1.0;
  const double a = std::pow(p, exponent);
  const double b = std::pow(1.0 - p, exponent);
  return a / (a + b);
}

namespace {

std::vector<double> probe_distribution(Rng& rng, int arity, int truth, const SyntheticTaskConfig& c) {
  std::vector<double> logits(static_cast<std::size_t>(arity), 0.0);
  logits[static_cast<std::size_t>(truth)] = c.probe_sharpness;
  for (double& l : logits) l += c.probe_noise * standard_normal(rng);
  const double top = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double& l : logits) {
    l = std::exp(l - top);
    z += l;
  }
  for (double& l : logits) l /= z;
  if (arity == 2 && c.miscalibration_exponent != 1.0) {
    logits[1] = distort_probability(logits[1], c.miscalibration_exponent);
    logits[0] = 1.0 - logits[1];
  }
  return logits;
}

Dataset draw_split(Rng& rng, const ConceptSpace& space, const std::vector<std::vector<int>>& prototypes,
                   const SyntheticTaskConfig& c, std::size_t count, Split split) {
  Dataset ds{space, {}, split};
  ds.instances.reserve(count);
  const std::size_t m = space.concept_count();
  for (std::size_t n = 0; n < count; ++n) {
    Instance inst;
    inst.id = std::string(split_name(split)) + "-" + std::to_string(n);
    inst.label = static_cast<int>(uniform_int(rng, 0, static_cast<std::int64_t>(space.label_count()) - 1));
    inst.concept_true.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
      int v = prototypes[static_cast<std::size_t>(inst.label)][i];
      if (bernoulli(rng, c.flip_rate)) {
        // Uniform over the other categories.
        int shifted = static_cast<int>(uniform_int(rng, 0, space.arities[i] - 2));
        v = shifted >= v ? shifted + 1 : shifted;
      }
      inst.concept_true[i] = v;
    }
    inst.concept_probs.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
      inst.concept_probs[i] = probe_distribution(rng, space.arities[i], inst.concept_true[i], c);
    }
    ds.instances.push_back(std::move(inst));
  }
  return ds;
}

}  // namespace

SyntheticTask generate_synthetic(const SyntheticTaskConfig& config) {
  config.validate();
  const auto arities = config.resolved_arities();
  const ConceptSpace space = ConceptSpace::make(arities, config.label_count);
  Rng rng = make_rng(config.seed);

  double tuple_count = 1.0;
  for (int n : arities) tuple_count *= n;
  const bool can_be_distinct = tuple_count >= static_cast<double>(config.label_count);

  SyntheticTask task;
  std::set<std::vector<int>> seen;
  while (task.prototypes.size() < config.label_count) {
    std::vector<int> proto(arities.size());
    for (std::size_t i = 0; i < arities.size(); ++i) proto[i] = static_cast<int>(uniform_int(rng, 0, arities[i] - 1));
    if (can_be_distinct && !seen.insert(proto).second) continue;
    task.prototypes.push_back(std::move(proto));
  }
  task.train = draw_split(rng, space, task.prototypes, config, config.train_size, Split::Train);
  task.val = draw_split(rng, space, task.prototypes, config, config.val_size, Split::Val);
  task.test = draw_split(rng, space, task.prototypes, config, config.test_size, Split::Test);
  return task;
}

// ---------------------------------------------------------------------------
// Costs

std::string_view cost_kind_name(CostKind kind) noexcept {
  switch (kind) {
    case CostKind::Unit: return "unit";
    case CostKind::Random: return "random";
    case CostKind::Systematic: return "systematic";
  }
  return "unit";
}

double CostModel::total() const noexcept { return std::accumulate(costs.begin(), costs.end(), 0.0); }

Json to_json(const CostModel& costs, const ConceptSpace& space) {
  Json per = Json::object();
  for (std::size_t i = 0; i < costs.size(); ++i) per[space.concept_names[i]] = costs.costs[i];
  return Json{{"kind", cost_kind_name(costs.kind)}, {"costs", per}};
}

Difficulty difficulty_from_name(std::string_view name) {
  if (name == "very easy") return Difficulty::VeryEasy;
  if (name == "moderately difficult") return Difficulty::Moderate;
  if (name == "very difficult") return Difficulty::VeryDifficult;
  fail(ErrorCode::Schema, "unknown difficulty '" + std::string(name) + "'");
}

double raw_cost(Difficulty difficulty) noexcept {
  switch (difficulty) {
    case Difficulty::VeryEasy: return 1.0;
    case Difficulty::Moderate: return 3.0;
    case Difficulty::VeryDifficult: return 10.0;
  }
  return 1.0;
}

CostModel unit_costs(const ConceptSpace& space) {
  return CostModel{std::vector<double>(space.concept_count(), 1.0), CostKind::Unit};
}

CostModel scaled_costs(const ConceptSpace& space, const std::vector<double>& raw, CostKind kind) {
  if (raw.size() != space.concept_count()) fail(ErrorCode::Schema, "one raw cost per concept required");
  double sum = 0.0;
  for (double q : raw) {
    if (!(q > 0.0) || !std::isfinite(q)) fail(ErrorCode::Schema, "costs must be positive");
    sum += q;
  }
  CostModel model{raw, kind};
  for (double& q : model.costs) q = q * 100.0 / sum;
  return model;
}

CostModel random_costs(const ConceptSpace& space, std::uint64_t seed) {
  Rng rng = make_rng(seed, 0xc057);
  std::vector<double> raw(space.concept_count());
  for (double& q : raw) q = uniform_real(rng, 1.0, 7.0);
  return scaled_costs(space, raw, CostKind::Random);
}

CostModel systematic_costs(const ConceptSpace& space, const std::map<std::string, Difficulty>& difficulty) {
  std::vector<double> raw(space.concept_count());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    auto it = difficulty.find(space.concept_names[i]);
    if (it == difficulty.end()) {
      fail(ErrorCode::MissingDifficulty, "no difficulty for concept '" + space.concept_names[i] + "'");
    }
    raw[i] = raw_cost(it->second);
  }
  return scaled_costs(space, raw, CostKind::Systematic);
}

CostModel load_cost_file(const std::filesystem::path& path, const ConceptSpace& space) {
  const Json j = read_json_file(path);
  if (!j.is_object()) fail(ErrorCode::Parse, path.string() + ": cost file must be a JSON object");
  bool any_string = false;
  bool any_number = false;
  for (const auto& [name, value] : j.items()) {
    any_string |= value.is_string();
    any_number |= value.is_number();
  }
  if (any_string && any_number) fail(ErrorCode::Schema, path.string() + ": mixes difficulties and raw costs");
  if (any_string) {
    std::map<std::string, Difficulty> difficulty;
    for (const auto& [name, value] : j.items()) difficulty[name] = difficulty_from_name(value.get<std::string>());
    return systematic_costs(space, difficulty);
  }
  std::vector<double> raw(space.concept_count(), 0.0);
  std::vector<bool> set(space.concept_count(), false);
  for (const auto& [name, value] : j.items()) {
    if (!value.is_number()) fail(ErrorCode::Schema, path.string() + ": cost for '" + name + "' is not a number");
    const std::size_t i = space.concept_index(name);
    raw[i] = value.get<double>();
    set[i] = true;
  }
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (!set[i]) fail(ErrorCode::Schema, path.string() + ": no cost for '" + space.concept_names[i] + "'");
  }
  return scaled_costs(space, raw, CostKind::Random);
}

CostModel make_cost_model(std::string_view spec, const ConceptSpace& space) {
  if (spec == "unit") return unit_costs(space);
  const auto colon = spec.find(':');
  if (colon == std::string_view::npos) fail(ErrorCode::UnknownCostModel, "unknown cost model '" + std::string(spec) + "'");
  const std::string kind(spec.substr(0, colon));
  const std::string arg(spec.substr(colon + 1));
  if (kind == "random") {
    try {
      std::size_t used = 0;
      const auto seed = std::stoull(arg, &used);
      if (used != arg.size()) throw std::invalid_argument(arg);
      return random_costs(space, seed);
    } catch (const std::logic_error&) {
      fail(ErrorCode::UnknownCostModel, "bad random cost seed '" + arg + "'");
    }
  }
  if (kind == "systematic") {
    if (!std::filesystem::exists(arg)) fail(ErrorCode::MissingDifficulty, "difficulty file '" + arg + "' not found");
    CostModel model = load_cost_file(arg, space);
    if (model.kind != CostKind::Systematic) fail(ErrorCode::MissingDifficulty, "'" + arg + "' holds raw costs, not difficulties");
    return model;
  }
  if (kind == "file") return load_cost_file(arg, space);
  fail(ErrorCode::UnknownCostModel, "unknown cost model '" + std::string(spec) + "'");
}

}  // namespace coop
