#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "coop/cbm.hpp"
#include "coop/concept_data.hpp"
#include "coop/policies.hpp"

namespace coop {

/// Slack on budget comparisons so that a budget equal to a sum of costs
/// affords all of them regardless of summation order.
inline constexpr double kBudgetTolerance = 1e-9;

enum class Termination {
  /// No budget left at all.
  BudgetExhausted,
  AllRevealed,
  /// The policy's pick did not fit in the remaining budget.
  UnaffordableSelection,
};

std::string_view termination_name(Termination t) noexcept;
Termination termination_from_name(std::string_view name);

struct TrajectoryStep {
  std::size_t index = 0;
  double cost = 0.0;
  int value = 0;
  std::vector<double> label_dist;
  std::size_t top_label = 0;
  /// Cumulative cost after this step.
  double spent = 0.0;
};

struct Trajectory {
  std::string instance_id;
  std::vector<double> initial_dist;
  std::vector<TrajectoryStep> steps;
  std::vector<double> final_dist;
  std::size_t prediction = 0;
  double spent = 0.0;
  Termination termination = Termination::AllRevealed;
  /// Set when the policy raised instead of selecting.
  std::string policy_error;
};

Json to_json(const TrajectoryStep& step, const ConceptSpace& space);
Json to_json(const Trajectory& trajectory, const ConceptSpace& space);

/// One iteration of the budget loop: either a concept to acquire or the
/// reason the loop ends.
struct LoopDecision {
  std::optional<std::size_t> acquire;
  Termination termination = Termination::AllRevealed;
  std::string policy_error;
};

LoopDecision decide_next(const Policy& policy, const InterventionState& state, double budget, Rng& rng);

/// Runs the budgeted query loop, revealing ground-truth values. A selection
/// that does not fit ends the rollout even if a cheaper concept would.
Trajectory rollout(const Policy& policy, const ConceptSpace& space, const Instance& instance, double budget,
                   const CostModel& costs, const ConceptToLabelModel& model, const CalibrationMap* calibration,
                   Rng& rng);

/// Final label distribution the same rollout would have produced under a
/// smaller budget. Valid because no policy conditions on the budget.
const std::vector<double>& prediction_at_budget(const Trajectory& full, double budget);

enum class Axis { Steps, Cost };

std::string_view axis_name(Axis axis) noexcept;
Axis axis_from_name(std::string_view name);

struct EvaluationCurve {
  std::string policy;
  Axis axis = Axis::Steps;
  Metric metric = Metric::Accuracy;
  std::vector<double> grid;
  std::vector<double> values;
  std::vector<double> stderrs;
  std::vector<std::uint64_t> seeds;
};

/// Mean height of the piecewise-linear curve over its grid span.
double area_under_curve(std::span<const double> grid, std::span<const double> values);
double area_under_curve(const EvaluationCurve& curve);

/// Integer grid 0..m.
std::vector<double> step_grid(std::size_t concept_count);
/// `points` equal increments from 0 to the total cost.
std::vector<double> cost_grid(const CostModel& costs, std::size_t points = 20);

/// Metric per budget on `dataset`. The steps axis forces unit costs. Only
/// stochastic policies use more than the first seed.
EvaluationCurve evaluate_curve(const Policy& policy, const Dataset& dataset, std::span<const double> grid, Axis axis,
                               const CostModel& costs, const ConceptToLabelModel& model,
                               const CalibrationMap* calibration, std::span<const std::uint64_t> seeds,
                               Metric metric = Metric::Accuracy);

/// CSV rows: policy,axis_kind,grid_point,metric,stderr,n_seeds
std::string curves_to_csv(std::span<const EvaluationCurve> curves);

/// Includes the derived "area" field, which curve_from_json ignores.
Json to_json(const EvaluationCurve& curve);
EvaluationCurve curve_from_json(const Json& j);

struct TuneOptions {
  std::vector<double> alpha_grid{0.0, 0.25, 0.5, 1.0};
  std::vector<double> beta_grid{0.0, 0.25, 0.5, 1.0};
  /// Ignored (treated as {0}) under unit costs.
  std::vector<double> gamma_grid{0.0, 0.01, 0.1, 1.0};
  /// Fix alpha = 1 and search beta, gamma only.
  bool two_parameter = false;
  /// Empty: area under the curve. Otherwise the metric at this budget.
  std::optional<double> fixed_budget;
  /// Empty: steps 0..m for unit costs, cost_grid otherwise.
  std::vector<double> budget_grid;
  Metric metric = Metric::Accuracy;

  [[nodiscard]] Axis axis_for(const CostModel& costs) const noexcept {
    return costs.kind == CostKind::Unit ? Axis::Steps : Axis::Cost;
  }
};

Json to_json(const TuneOptions& options);
TuneOptions tune_options_from_json(const Json& j);

struct TuneRow {
  double alpha = 0.0;
  double beta = 0.0;
  double gamma = 0.0;
  double target = 0.0;
};

struct TuneResult {
  PolicyConfig config;
  std::vector<TuneRow> table;
  std::size_t best_row = 0;
};

/// Exhaustive grid search on `valset`; ties go to the lexicographically
/// smallest (alpha, beta, gamma).
TuneResult tune_coop(const Dataset& valset, const ConceptToLabelModel& model, const CostModel& costs,
                     const CalibrationMap* calibration, const TuneOptions& options);

Json to_json(const TuneResult& result);

struct EfficiencyRow {
  double fraction = 0.0;
  std::size_t val_size = 0;
  double coop_area = 0.0;
  double greedy_area = 0.0;
  PolicyConfig coop_config;
};

Json to_json(const EfficiencyRow& row);

/// Seeded subsample of `valset` keeping ceil(fraction * n) instances;
/// fraction 1 returns the set unchanged.
Dataset subsample(const Dataset& valset, double fraction, std::uint64_t seed);

/// Refits Greedy and CooP on each validation fraction and reports the area
/// under the test accuracy-vs-steps curve.
std::vector<EfficiencyRow> data_efficiency_sweep(std::span<const double> fractions, const Dataset& valset,
                                                 const Dataset& test, const ConceptToLabelModel& model,
                                                 const CalibrationMap* calibration, const TuneOptions& options,
                                                 std::uint64_t seed);

}  // namespace coop
