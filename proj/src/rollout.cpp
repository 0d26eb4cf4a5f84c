#include "coop/rollout.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

#include "coop/errors.hpp"

namespace coop {

std::string_view termination_name(Termination t) noexcept {
  switch (t) {
    case Termination::BudgetExhausted: return "budget_exhausted";
    case Termination::AllRevealed: return "all_revealed";
    case Termination::UnaffordableSelection: return "unaffordable_selection";
  }
  return "all_revealed";
}

Termination termination_from_name(std::string_view name) {
  if (name == "budget_exhausted") return Termination::BudgetExhausted;
  if (name == "all_revealed") return Termination::AllRevealed;
  if (name == "unaffordable_selection") return Termination::UnaffordableSelection;
  fail(ErrorCode::Parse, "unknown termination reason '" + std::string(name) + "'");
}

Json to_json(const TrajectoryStep& step, const ConceptSpace& space) {
  return Json{{"concept", space.concept_names[step.index]},
              {"cost", step.cost},
              {"value", step.value + 1},
              {"label_dist", step.label_dist},
              {"top_label", space.label_names[step.top_label]},
              {"spent", step.spent}};
}

Json to_json(const Trajectory& t, const ConceptSpace& space) {
  Json steps = Json::array();
  for (const auto& s : t.steps) steps.push_back(to_json(s, space));
  Json j{{"instance_id", t.instance_id},
         {"initial_dist", t.initial_dist},
         {"steps", steps},
         {"final_dist", t.final_dist},
         {"prediction", space.label_names[t.prediction]},
         {"spent", t.spent},
         {"terminated_reason", termination_name(t.termination)}};
  if (!t.policy_error.empty()) j["policy_error"] = t.policy_error;
  return j;
}

LoopDecision decide_next(const Policy& policy, const InterventionState& state, double budget, Rng& rng) {
  LoopDecision d;
  if (state.all_revealed()) {
    d.termination = Termination::AllRevealed;
    return d;
  }
  // Every cost is positive, so nothing fits once the budget is used up.
  if (budget - state.spent() <= kBudgetTolerance) {
    d.termination = Termination::BudgetExhausted;
    return d;
  }
  std::size_t pick = 0;
  try {
    pick = policy.select(state, rng);
  } catch (const Error& e) {
    d.termination = Termination::UnaffordableSelection;
    d.policy_error = std::string(error_name(e.code())) + ": " + e.what();
    return d;
  }
  if (state.spent() <= budget - state.costs().costs.at(pick) + kBudgetTolerance) {
    d.acquire = pick;
  } else {
    d.termination = Termination::UnaffordableSelection;
  }
  return d;
}

Trajectory rollout(const Policy& policy, const ConceptSpace& space, const Instance& instance, double budget,
                   const CostModel& costs, const ConceptToLabelModel& model, const CalibrationMap* calibration,
                   Rng& rng) {
  if (!(budget >= 0.0)) fail(ErrorCode::BadBudget, "budget must be >= 0");
  InterventionState state(space, instance, model, costs, calibration);
  Trajectory t;
  t.instance_id = instance.id;
  t.initial_dist = state.label_dist();
  for (;;) {
    const LoopDecision d = decide_next(policy, state, budget, rng);
    if (!d.acquire) {
      t.termination = d.termination;
      t.policy_error = d.policy_error;
      break;
    }
    const std::size_t i = *d.acquire;
    state.reveal(i, instance.concept_true[i]);
    t.steps.push_back({i, costs.costs[i], instance.concept_true[i], state.label_dist(), state.top_label(), state.spent()});
  }
  t.final_dist = state.label_dist();
  t.prediction = state.top_label();
  t.spent = state.spent();
  return t;
}

const std::vector<double>& prediction_at_budget(const Trajectory& full, double budget) {
  const std::vector<double>* dist = &full.initial_dist;
  double spent = 0.0;
  for (const auto& step : full.steps) {
    if (budget - spent <= kBudgetTolerance) break;
    if (!(spent <= budget - step.cost + kBudgetTolerance)) break;
    spent = step.spent;
    dist = &step.label_dist;
  }
  return *dist;
}

std::string_view axis_name(Axis axis) noexcept { return axis == Axis::Steps ? "steps" : "cost"; }

Axis axis_from_name(std::string_view name) {
  if (name == "steps") return Axis::Steps;
  if (name == "cost") return Axis::Cost;
  fail(ErrorCode::Config, "unknown axis '" + std::string(name) + "'");
}

double area_under_curve(std::span<const double> grid, std::span<const double> values) {
  if (grid.empty() || grid.size() != values.size()) fail(ErrorCode::EmptyGrid, "curve needs matching nonempty grid and values");
  if (grid.size() == 1) return values[0];
  double area = 0.0;
  for (std::size_t i = 1; i < grid.size(); ++i) area += 0.5 * (values[i] + values[i - 1]) * (grid[i] - grid[i - 1]);
  return area / (grid.back() - grid.front());
}

double area_under_curve(const EvaluationCurve& curve) { return area_under_curve(curve.grid, curve.values); }

std::vector<double> step_grid(std::size_t concept_count) {
  std::vector<double> grid(concept_count + 1);
  for (std::size_t i = 0; i <= concept_count; ++i) grid[i] = static_cast<double>(i);
  return grid;
}

std::vector<double> cost_grid(const CostModel& costs, std::size_t points) {
  const double total = costs.total();
  std::vector<double> grid(points + 1);
  for (std::size_t i = 0; i <= points; ++i) grid[i] = total * static_cast<double>(i) / static_cast<double>(points);
  grid.back() = total;
  return grid;
}

namespace {

void validate_grid(std::span<const double> grid, Axis axis, std::size_t concept_count) {
  if (grid.empty()) fail(ErrorCode::EmptyGrid, "budget grid is empty");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] >= 0.0)) fail(ErrorCode::Config, "budget grid points must be >= 0");
    if (i > 0 && !(grid[i] > grid[i - 1])) fail(ErrorCode::Config, "budget grid must be strictly increasing");
    if (axis == Axis::Steps &&
        (grid[i] != std::floor(grid[i]) || grid[i] > static_cast<double>(concept_count))) {
      fail(ErrorCode::Config, "steps grid points must be integers in 0..m");
    }
  }
}

}  // namespace

EvaluationCurve evaluate_curve(const Policy& policy, const Dataset& dataset, std::span<const double> grid, Axis axis,
                               const CostModel& costs, const ConceptToLabelModel& model,
                               const CalibrationMap* calibration, std::span<const std::uint64_t> seeds,
                               Metric metric) {
  if (dataset.empty()) fail(ErrorCode::EmptyInput, "cannot evaluate on an empty dataset");
  if (metric == Metric::Auc && dataset.space.label_count() != 2) fail(ErrorCode::MetricMismatch, "AUC needs a two-class task");
  validate_grid(grid, axis, dataset.space.concept_count());
  if (seeds.empty()) fail(ErrorCode::Config, "at least one seed is required");

  const CostModel effective_costs = axis == Axis::Steps ? unit_costs(dataset.space) : costs;
  const double full_budget = effective_costs.total() + 1.0;

  EvaluationCurve curve;
  curve.policy = policy.name();
  curve.axis = axis;
  curve.metric = metric;
  curve.grid.assign(grid.begin(), grid.end());
  const std::size_t seed_count = policy.stochastic() ? seeds.size() : 1;
  curve.seeds.assign(seeds.begin(), seeds.begin() + static_cast<std::ptrdiff_t>(seed_count));

  std::vector<int> labels;
  labels.reserve(dataset.size());
  for (const auto& inst : dataset.instances) labels.push_back(inst.label);

  // per_seed[s][g]
  std::vector<std::vector<double>> per_seed(seed_count, std::vector<double>(grid.size()));
  std::vector<Trajectory> trajectories(dataset.size());
  for (std::size_t s = 0; s < seed_count; ++s) {
    parallel_for(dataset.size(), [&](std::size_t n) {
      Rng rng = make_rng(curve.seeds[s], n);
      trajectories[n] = rollout(policy, dataset.space, dataset.instances[n], full_budget, effective_costs, model,
                                calibration, rng);
    });
    std::vector<std::vector<double>> dists(dataset.size());
    for (std::size_t g = 0; g < grid.size(); ++g) {
      for (std::size_t n = 0; n < dataset.size(); ++n) dists[n] = prediction_at_budget(trajectories[n], grid[g]);
      per_seed[s][g] = score_metric(metric, dists, labels);
    }
  }

  curve.values.assign(grid.size(), 0.0);
  curve.stderrs.assign(grid.size(), 0.0);
  const auto k = static_cast<double>(seed_count);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double mean = 0.0;
    for (std::size_t s = 0; s < seed_count; ++s) mean += per_seed[s][g];
    mean /= k;
    curve.values[g] = mean;
    if (seed_count > 1) {
      double var = 0.0;
      for (std::size_t s = 0; s < seed_count; ++s) var += (per_seed[s][g] - mean) * (per_seed[s][g] - mean);
      var /= (k - 1.0);
      curve.stderrs[g] = std::sqrt(var / k);
    }
  }
  return curve;
}

namespace {

std::string shortest(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace

std::string curves_to_csv(std::span<const EvaluationCurve> curves) {
  std::ostringstream out;
  out << "policy,axis_kind,grid_point,metric,stderr,n_seeds\n";
  for (const auto& c : curves) {
    for (std::size_t g = 0; g < c.grid.size(); ++g) {
      out << c.policy << ',' << axis_name(c.axis) << ',' << shortest(c.grid[g]) << ',' << shortest(c.values[g]) << ','
          << shortest(c.stderrs[g]) << ',' << c.seeds.size() << '\n';
    }
  }
  return out.str();
}

Json to_json(const EvaluationCurve& c) {
  return Json{{"policy", c.policy},       {"axis", axis_name(c.axis)}, {"metric", metric_name(c.metric)},
              {"grid", c.grid},           {"values", c.values},        {"stderrs", c.stderrs},
              {"seeds", c.seeds},         {"area", area_under_curve(c)}};
}

EvaluationCurve curve_from_json(const Json& j) {
  EvaluationCurve c;
  try {
    c.policy = j.at("policy").get<std::string>();
    c.axis = axis_from_name(j.at("axis").get<std::string>());
    c.metric = metric_from_name(j.at("metric").get<std::string>());
    c.grid = j.at("grid").get<std::vector<double>>();
    c.values = j.at("values").get<std::vector<double>>();
    c.stderrs = j.at("stderrs").get<std::vector<double>>();
    c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  } catch (const Json::exception& e) {
    fail(ErrorCode::Schema, std::string("curve: ") + e.what());
  }
  if (c.values.size() != c.grid.size() || c.stderrs.size() != c.grid.size()) {
    fail(ErrorCode::Schema, "curve: grid, values and stderrs differ in length");
  }
  return c;
}

Json to_json(const TuneResult& r) {
  Json rows = Json::array();
  for (const auto& row : r.table) {
    rows.push_back({{"alpha", row.alpha}, {"beta", row.beta}, {"gamma", row.gamma}, {"target", row.target}});
  }
  return Json{{"rows", rows}, {"best_row", r.best_row}, {"config", to_json(r.config)}};
}

Json to_json(const EfficiencyRow& row) {
  return Json{{"fraction", row.fraction},
              {"val_size", row.val_size},
              {"coop_area", row.coop_area},
              {"greedy_area", row.greedy_area},
              {"coop_config", to_json(row.coop_config)}};
}

Json to_json(const TuneOptions& o) {
  Json j{{"alpha_grid", o.alpha_grid},
         {"beta_grid", o.beta_grid},
         {"gamma_grid", o.gamma_grid},
         {"two_parameter", o.two_parameter},
         {"budget_grid", o.budget_grid},
         {"metric", metric_name(o.metric)}};
  j["fixed_budget"] = o.fixed_budget ? Json(*o.fixed_budget) : Json(nullptr);
  return j;
}

TuneOptions tune_options_from_json(const Json& j) {
  TuneOptions o;
  try {
    o.alpha_grid = j.value("alpha_grid", o.alpha_grid);
    o.beta_grid = j.value("beta_grid", o.beta_grid);
    o.gamma_grid = j.value("gamma_grid", o.gamma_grid);
    o.two_parameter = j.value("two_parameter", o.two_parameter);
    o.budget_grid = j.value("budget_grid", o.budget_grid);
    o.metric = metric_from_name(j.value("metric", std::string("accuracy")));
    if (j.contains("fixed_budget") && !j.at("fixed_budget").is_null()) o.fixed_budget = j.at("fixed_budget").get<double>();
  } catch (const Json::exception& e) {
    fail(ErrorCode::Config, std::string("tune options: ") + e.what());
  }
  return o;
}

TuneResult tune_coop(const Dataset& valset, const ConceptToLabelModel& model, const CostModel& costs,
                     const CalibrationMap* calibration, const TuneOptions& options) {
  if (valset.empty()) fail(ErrorCode::EmptyInput, "tuning needs a nonempty validation set");
  const std::vector<double> alphas = options.two_parameter ? std::vector<double>{1.0} : options.alpha_grid;
  const std::vector<double> gammas = costs.kind == CostKind::Unit ? std::vector<double>{0.0} : options.gamma_grid;
  if (alphas.empty() || options.beta_grid.empty() || gammas.empty()) fail(ErrorCode::EmptyGrid, "tuning grids must be nonempty");
  auto sorted_unique = [](std::vector<double> v) {
    for (double x : v) {
      if (!(x >= 0.0)) fail(ErrorCode::Config, "tuning weights must be >= 0");
    }
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
  };
  const auto alpha_grid = sorted_unique(alphas);
  const auto beta_grid = sorted_unique(options.beta_grid);
  const auto gamma_grid = sorted_unique(gammas);

  const Axis axis = options.axis_for(costs);
  std::vector<double> grid = options.budget_grid;
  if (options.fixed_budget) {
    grid = {*options.fixed_budget};
  } else if (grid.empty()) {
    grid = axis == Axis::Steps ? step_grid(valset.space.concept_count()) : cost_grid(costs);
  }

  const auto [cpu_norm, cis_norm] = fit_score_norm(valset, model, calibration);
  const std::uint64_t seed = 0;

  TuneResult result;
  double best = -std::numeric_limits<double>::infinity();
  for (double a : alpha_grid) {
    for (double b : beta_grid) {
      for (double g : gamma_grid) {
        PolicyConfig config{a, b, g, cpu_norm, cis_norm, {}};
        const CoopPolicy policy(config);
        const auto curve = evaluate_curve(policy, valset, grid, axis, costs, model, calibration,
                                          std::span<const std::uint64_t>(&seed, 1), options.metric);
        const double target = options.fixed_budget ? curve.values.front() : area_under_curve(curve);
        result.table.push_back({a, b, g, target});
        // Strict improvement keeps the lexicographically smallest winner.
        if (target > best) {
          best = target;
          result.best_row = result.table.size() - 1;
          result.config = config;
        }
      }
    }
  }
  return result;
}

Dataset subsample(const Dataset& valset, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) fail(ErrorCode::Fraction, "fractions must lie in (0, 1]");
  if (fraction == 1.0) return valset;
  std::vector<std::size_t> idx(valset.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng = make_rng(seed, 0x5a3);
  for (std::size_t i = idx.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(i) - 1));
    std::swap(idx[i - 1], idx[j]);
  }
  const auto keep = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(valset.size()))));
  idx.resize(std::min(keep, idx.size()));
  std::sort(idx.begin(), idx.end());
  Dataset out{valset.space, {}, valset.split};
  for (std::size_t i : idx) out.instances.push_back(valset.instances[i]);
  return out;
}

std::vector<EfficiencyRow> data_efficiency_sweep(std::span<const double> fractions, const Dataset& valset,
                                                 const Dataset& test, const ConceptToLabelModel& model,
                                                 const CalibrationMap* calibration, const TuneOptions& options,
                                                 std::uint64_t seed) {
  if (fractions.empty()) fail(ErrorCode::Fraction, "no fractions given");
  for (double f : fractions) {
    if (!(f > 0.0 && f <= 1.0)) fail(ErrorCode::Fraction, "fractions must lie in (0, 1]");
  }
  const CostModel costs = unit_costs(valset.space);
  const auto grid = step_grid(valset.space.concept_count());
  const std::uint64_t eval_seed = 0;
  std::vector<EfficiencyRow> rows;
  for (double f : fractions) {
    const Dataset sub = subsample(valset, f, seed);
    const TuneResult tuned = tune_coop(sub, model, costs, calibration, options);
    const GreedyOrder order = greedy_fit(sub, model, calibration, options.metric);
    const CoopPolicy coop(tuned.config);
    const GreedyPolicy greedy(order);
    const auto seeds = std::span<const std::uint64_t>(&eval_seed, 1);
    EfficiencyRow row;
    row.fraction = f;
    row.val_size = sub.size();
    row.coop_area = area_under_curve(evaluate_curve(coop, test, grid, Axis::Steps, costs, model, calibration, seeds, options.metric));
    row.greedy_area = area_under_curve(evaluate_curve(greedy, test, grid, Axis::Steps, costs, model, calibration, seeds, options.metric));
    row.coop_config = tuned.config;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace coop
