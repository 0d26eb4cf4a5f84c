#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "coop/cbm.hpp"
#include "coop/concept_data.hpp"
#include "coop/util.hpp"

namespace coop {

/// Revealed concepts, cumulative cost and the current label distribution of
/// one instance under intervention. The referenced space, model and costs
/// must outlive the state.
class InterventionState {
 public:
  InterventionState(const ConceptSpace& space, const Instance& instance, const ConceptToLabelModel& model,
                    const CostModel& costs, const CalibrationMap* calibration = nullptr);

  /// Acquires concept `index` at `value`. Throws AlreadyRevealedError or ArityError.
  void reveal(std::size_t index, int value);

  [[nodiscard]] const ConceptSpace& space() const noexcept { return *space_; }
  [[nodiscard]] const Instance& instance() const noexcept { return *instance_; }
  [[nodiscard]] const ConceptToLabelModel& model() const noexcept { return *model_; }
  [[nodiscard]] const CostModel& costs() const noexcept { return *costs_; }

  [[nodiscard]] const Revealed& revealed() const noexcept { return revealed_; }
  [[nodiscard]] bool is_revealed(std::size_t index) const { return revealed_.at(index).has_value(); }
  [[nodiscard]] std::vector<std::size_t> unrevealed() const;
  [[nodiscard]] std::size_t revealed_count() const noexcept { return revealed_count_; }
  [[nodiscard]] bool all_revealed() const noexcept { return revealed_count_ == revealed_.size(); }

  [[nodiscard]] double spent() const noexcept { return spent_; }
  [[nodiscard]] const std::vector<double>& label_dist() const noexcept { return label_dist_; }
  [[nodiscard]] std::size_t top_label() const noexcept { return top_label_; }

  /// Concept distributions after optional calibration.
  [[nodiscard]] const std::vector<std::vector<double>>& distributions() const noexcept { return dists_; }
  [[nodiscard]] const FeatureVector& features() const noexcept { return features_; }

  /// Label distribution if `index` were additionally revealed at `value`.
  [[nodiscard]] std::vector<double> predict_with(std::size_t index, int value) const;

 private:
  const ConceptSpace* space_;
  const Instance* instance_;
  const ConceptToLabelModel* model_;
  const CostModel* costs_;
  std::vector<std::vector<double>> dists_;
  std::vector<std::size_t> offsets_;
  Revealed revealed_;
  std::size_t revealed_count_ = 0;
  double spent_ = 0.0;
  FeatureVector features_;
  std::vector<double> label_dist_;
  std::size_t top_label_ = 0;
};

/// Entropy in nats, with 0 ln 0 = 0.
double cpu_score(std::span<const double> dist);

/// |E_v[p(y=k | c_i = v, rest)] - p(y=k | current)| with k the current top
/// label, enumerating every value of concept i.
double cis_score(const InterventionState& state, std::size_t index);

/// Min/max of a raw score over the policy-learning set.
struct ScoreNorm {
  double min = 0.0;
  double max = 0.0;

  /// A zero-width range makes the term a constant 0.
  [[nodiscard]] bool degenerate() const noexcept { return !(max > min); }
  [[nodiscard]] double normalize(double raw) const noexcept;
};

struct PolicyConfig {
  double alpha = 1.0;
  double beta = 1.0;
  double gamma = 0.0;
  ScoreNorm cpu_norm;
  ScoreNorm cis_norm;
  std::string calibration_ref;

  void validate() const;
};

Json to_json(const PolicyConfig& config);
PolicyConfig policy_config_from_json(const Json& j);

/// Fits both normalizers over every (instance, concept) pair of `valset` with
/// nothing revealed.
std::pair<ScoreNorm, ScoreNorm> fit_score_norm(const Dataset& valset, const ConceptToLabelModel& model,
                                               const CalibrationMap* calibration);

struct ConceptScore {
  std::size_t index = 0;
  double raw_cpu = 0.0;
  double raw_cis = 0.0;
  double cost = 0.0;
  double norm_cpu = 0.0;
  double norm_cis = 0.0;
  double combined = 0.0;
};

using ScoreBreakdown = std::vector<ConceptScore>;

Json to_json(const ScoreBreakdown& breakdown, const ConceptSpace& space);

/// Scores every unrevealed concept as alpha*cpu + beta*cis - gamma*cost over
/// normalized cpu/cis and returns the argmax (lowest index on ties).
std::pair<std::size_t, ScoreBreakdown> coop_select(const InterventionState& state, const PolicyConfig& config);

std::size_t random_select(const InterventionState& state, Rng& rng);

struct GreedyOrder {
  std::vector<std::size_t> ordering;
  std::string fitted_on;
  std::string metric;
  /// Validation metric after each position is revealed.
  std::vector<double> step_metrics;
};

Json to_json(const GreedyOrder& order);
GreedyOrder greedy_order_from_json(const Json& j, std::size_t concept_count);

enum class Metric { Accuracy, Auc, TrueLabelProb };

std::string_view metric_name(Metric metric) noexcept;
Metric metric_from_name(std::string_view name);

/// Metric of a set of label distributions against true labels. AUC scores
/// the probability of class index 1 and requires K = 2.
double score_metric(Metric metric, std::span<const std::vector<double>> label_dists, std::span<const int> labels);

/// Static ordering: each position is the concept whose ground-truth reveal,
/// on top of all earlier positions, maximizes the validation metric.
GreedyOrder greedy_fit(const Dataset& valset, const ConceptToLabelModel& model, const CalibrationMap* calibration,
                       Metric metric = Metric::Accuracy);

std::size_t greedy_select(const GreedyOrder& order, const InterventionState& state);

/// Probability of the true label after revealing each unrevealed concept to
/// its true value, as (concept, probability) pairs.
std::vector<std::pair<std::size_t, double>> skyline_gains(const InterventionState& state);

std::size_t skyline_select(const InterventionState& state);

/// Uniform selection interface used by rollouts and sessions.
class Policy {
 public:
  virtual ~Policy() = default;
  [[nodiscard]] virtual std::string name() const = 0;
  /// Must return an unrevealed concept; throws NothingToSelectError if none.
  [[nodiscard]] virtual std::size_t select(const InterventionState& state, Rng& rng) const = 0;
  [[nodiscard]] virtual bool stochastic() const { return false; }
  /// Requires ground truth on the instance.
  [[nodiscard]] virtual bool oracle() const { return false; }
};

class CoopPolicy final : public Policy {
 public:
  CoopPolicy(PolicyConfig config, std::string name = "coop") : config_(std::move(config)), name_(std::move(name)) {}
  [[nodiscard]] std::string name() const override { return name_; }
  [[nodiscard]] std::size_t select(const InterventionState& state, Rng& rng) const override;
  [[nodiscard]] const PolicyConfig& config() const noexcept { return config_; }

 private:
  PolicyConfig config_;
  std::string name_;
};

class RandomPolicy final : public Policy {
 public:
  [[nodiscard]] std::string name() const override { return "random"; }
  [[nodiscard]] std::size_t select(const InterventionState& state, Rng& rng) const override;
  [[nodiscard]] bool stochastic() const override { return true; }
};

class GreedyPolicy final : public Policy {
 public:
  explicit GreedyPolicy(GreedyOrder order) : order_(std::move(order)) {}
  [[nodiscard]] std::string name() const override { return "greedy"; }
  [[nodiscard]] std::size_t select(const InterventionState& state, Rng& rng) const override;

 private:
  GreedyOrder order_;
};

class SkylinePolicy final : public Policy {
 public:
  [[nodiscard]] std::string name() const override { return "skyline"; }
  [[nodiscard]] std::size_t select(const InterventionState& state, Rng& rng) const override;
  [[nodiscard]] bool oracle() const override { return true; }
};

/// CooP restricted to one score term, reusing the fitted normalizers.
PolicyConfig cpu_only(const PolicyConfig& base);
PolicyConfig cis_only(const PolicyConfig& base);

/// Builds a policy by id: coop, greedy, random, skyline, cpu-only, cis-only.
/// `config` is required for the CooP family and `order` for greedy.
std::unique_ptr<Policy> make_policy(std::string_view id, const PolicyConfig* config, const GreedyOrder* order);

}  // namespace coop
