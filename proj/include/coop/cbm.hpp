#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "coop/concept_data.hpp"

namespace coop {

/// Concatenated per-concept blocks: one-hot for revealed concepts, the
/// predicted distribution for the rest.
using FeatureVector = std::vector<double>;

/// Per-concept revealed value (0-based category), indexed by concept.
using Revealed = std::vector<std::optional<int>>;

enum class Architecture { Linear, Mlp };

std::string_view architecture_name(Architecture arch) noexcept;

/// p(y | c). Linear: logits = W1 x + b1. Mlp: logits = W2 relu(W1 x + b1) + b2.
/// Matrices are row-major with one row per output unit.
struct ConceptToLabelModel {
  Architecture architecture = Architecture::Linear;
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  std::size_t label_count = 0;
  std::vector<double> w1, b1, w2, b2;
  std::string trained_on;
  Json metadata = Json::object();

  /// Zero-initialized parameters of the right shape.
  static ConceptToLabelModel zeros(Architecture arch, std::size_t input_dim, std::size_t label_count,
                                   std::size_t hidden_dim = 0);

  [[nodiscard]] std::vector<double> logits(std::span<const double> features) const;
  /// Softmax over the logits; throws DimensionError on a size mismatch.
  [[nodiscard]] std::vector<double> predict(std::span<const double> features) const;

  /// Visits every parameter array as (name, values).
  template <typename F>
  void for_each_parameter(F&& f) {
    f("w1", w1);
    f("b1", b1);
    if (architecture == Architecture::Mlp) {
      f("w2", w2);
      f("b2", b2);
    }
  }
};

Json to_json(const ConceptToLabelModel& model);
ConceptToLabelModel model_from_json(const Json& j);

struct TrainConfig {
  double learning_rate = 0.05;
  std::size_t epochs = 200;
  std::size_t batch_size = 32;
  double weight_decay = 5e-5;
  std::uint64_t seed = 0;
  Architecture architecture = Architecture::Linear;
  std::size_t hidden_dim = 128;

  void validate() const;
};

Json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const Json& j);

struct TrainingExample {
  FeatureVector features;
  int label = 0;
};

/// Mean cross-entropy plus (weight_decay / 2) * ||weights||^2 over the batch.
/// Biases are not decayed. Writes d(objective)/d(parameter) into `gradient`
/// when given; it is reshaped to match `model`.
double training_objective(const ConceptToLabelModel& model, std::span<const TrainingExample> batch,
                          double weight_decay, ConceptToLabelModel* gradient = nullptr);

struct TrainResult {
  ConceptToLabelModel model;
  /// Set when every training instance shares one label.
  bool degenerate = false;
};

/// Fits p(y | one_hot(c_true)) by shuffled mini-batch gradient descent.
TrainResult train_concept_to_label(const Dataset& train, const TrainConfig& config);

FeatureVector one_hot_features(const ConceptSpace& space, std::span<const int> values);

// ---------------------------------------------------------------------------
// Calibration

/// Nondecreasing piecewise-linear map on [0, 1].
struct CalibrationMap {
  std::vector<double> inputs;
  std::vector<double> outputs;

  [[nodiscard]] double operator()(double p) const;
};

Json to_json(const CalibrationMap& map);
CalibrationMap calibration_from_json(const Json& j);

struct CalibrationPair {
  double probability = 0.0;
  double outcome = 0.0;
};

/// Pool-adjacent-violators fit. Returns one fitted value per distinct input
/// (ties are pooled first), in ascending input order.
struct IsotonicFit {
  std::vector<double> inputs;
  std::vector<double> fitted;
};

IsotonicFit isotonic_regression(std::span<const CalibrationPair> pairs);
CalibrationMap fit_isotonic(std::span<const CalibrationPair> pairs);

/// Clamped linear interpolation between breakpoints.
double apply_calibration(const CalibrationMap& map, double p);

/// Calibrates each entry and renormalizes the block. Falls back to the input
/// if every calibrated entry is zero.
std::vector<double> calibrate_distribution(const CalibrationMap& map, std::span<const double> dist);

/// One (probability, indicator) pair per instance, concept and category.
std::vector<CalibrationPair> concept_calibration_pairs(const Dataset& dataset,
                                                       const CalibrationMap* calibration = nullptr);

/// Pooled isotonic map over every concept of every instance.
CalibrationMap fit_concept_calibration(const Dataset& dataset);

/// Equal-width binned ECE.
double expected_calibration_error(std::span<const CalibrationPair> pairs, std::size_t bins = 10);

// ---------------------------------------------------------------------------
// Intervention inputs

/// The concept distributions a policy sees: calibrated when a map is given.
std::vector<std::vector<double>> effective_distributions(const Instance& instance,
                                                         const CalibrationMap* calibration);

FeatureVector assemble_input(const ConceptSpace& space, const Instance& instance, const Revealed& revealed,
                             const CalibrationMap* calibration = nullptr);

/// Same, from precomputed effective distributions.
FeatureVector assemble_features(const ConceptSpace& space, const std::vector<std::vector<double>>& dists,
                                const Revealed& revealed);

// ---------------------------------------------------------------------------
// Metrics

/// Index of the largest entry; ties go to the lowest index.
std::size_t argmax(std::span<const double> values);

double accuracy(std::span<const std::vector<double>> label_dists, std::span<const int> labels);

/// Accuracy of `model` on `dataset` when each instance's reveals come from `plan`.
double accuracy(const ConceptToLabelModel& model, const Dataset& dataset,
                const std::function<Revealed(const Instance&)>& plan,
                const CalibrationMap* calibration = nullptr);

/// Mann-Whitney AUC with ties counted as one half.
double auc(std::span<const double> scores, std::span<const int> labels);

}  // namespace coop
