#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

namespace coop {

using Json = nlohmann::json;

/// Names and arities of the m concepts plus the K task labels.
///
/// Category values and label indices are 0-based everywhere in memory; the
/// file formats are 1-based and convert at the I/O boundary.
struct ConceptSpace {
  std::vector<std::string> concept_names;
  std::vector<int> arities;
  std::vector<std::string> label_names;

  [[nodiscard]] std::size_t concept_count() const noexcept { return arities.size(); }
  [[nodiscard]] std::size_t label_count() const noexcept { return label_names.size(); }

  /// Width of the concatenated per-concept blocks, i.e. the sum of arities.
  [[nodiscard]] std::size_t feature_dim() const noexcept;

  /// Start offset of each concept's block inside a feature vector.
  [[nodiscard]] std::vector<std::size_t> block_offsets() const;

  /// Index of a concept by name, or throws SchemaError.
  [[nodiscard]] std::size_t concept_index(const std::string& name) const;

  /// Throws SchemaError when any invariant is violated.
  void validate() const;

  /// m concepts named c1..cm with the given arities and K labels y1..yK.
  static ConceptSpace make(std::vector<int> arities, std::size_t label_count);

  bool operator==(const ConceptSpace&) const = default;
};

Json to_json(const ConceptSpace& space);
ConceptSpace concept_space_from_json(const Json& j);

/// One prediction case: precomputed concept distributions plus ground truth.
struct Instance {
  std::string id;
  std::vector<std::vector<double>> concept_probs;
  std::vector<int> concept_true;
  int label = 0;

  bool operator==(const Instance&) const = default;
};

/// Throws SchemaError if the instance does not conform to the space.
void validate_instance(const Instance& instance, const ConceptSpace& space);

enum class Split { Train, Val, Test };

std::string_view split_name(Split split) noexcept;
Split split_from_name(std::string_view name);

struct Dataset {
  ConceptSpace space;
  std::vector<Instance> instances;
  Split split = Split::Test;

  [[nodiscard]] std::size_t size() const noexcept { return instances.size(); }
  [[nodiscard]] bool empty() const noexcept { return instances.empty(); }
};

/// Parses a JSON-lines dataset file against `space`. Distributions off by at
/// most 1e-6 are renormalized; anything further off is a SchemaError.
Dataset load_dataset(const std::filesystem::path& path, const ConceptSpace& space,
                     Split split = Split::Test);
Dataset parse_dataset(std::istream& in, const ConceptSpace& space, Split split = Split::Test);

/// Writes the dataset as JSON lines. Probabilities are rounded to 9
/// significant digits and printed in shortest round-trip form.
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
std::string serialize_dataset(const Dataset& dataset);

ConceptSpace load_space(const std::filesystem::path& path);
void save_space(const ConceptSpace& space, const std::filesystem::path& path);

struct SyntheticTaskConfig {
  std::size_t concept_count = 12;
  std::size_t label_count = 6;
  /// Empty means all concepts are binary.
  std::vector<int> arities;
  double flip_rate = 0.2;
  double probe_sharpness = 1.0;
  double probe_noise = 1.0;
  double miscalibration_exponent = 2.0;
  std::size_t train_size = 4000;
  std::size_t val_size = 1000;
  std::size_t test_size = 2000;
  std::uint64_t seed = 7;

  /// Throws ConfigError on out-of-range fields.
  void validate() const;
  [[nodiscard]] std::vector<int> resolved_arities() const;
};

Json to_json(const SyntheticTaskConfig& config);
SyntheticTaskConfig synthetic_config_from_json(const Json& j);

/// The fixed reference task the acceptance suite is calibrated on.
SyntheticTaskConfig reference_task_config();

struct SyntheticTask {
  Dataset train;
  Dataset val;
  Dataset test;
  /// One category tuple per class.
  std::vector<std::vector<int>> prototypes;
};

/// Deterministic given config.seed. Prototypes are drawn per class and
/// redrawn on collision whenever enough distinct tuples exist.
SyntheticTask generate_synthetic(const SyntheticTaskConfig& config);

/// p -> p^t / (p^t + (1-p)^t).
double distort_probability(double p, double exponent);

enum class CostKind { Unit, Random, Systematic };

std::string_view cost_kind_name(CostKind kind) noexcept;

struct CostModel {
  std::vector<double> costs;
  CostKind kind = CostKind::Unit;

  [[nodiscard]] double total() const noexcept;
  [[nodiscard]] double operator[](std::size_t i) const { return costs.at(i); }
  [[nodiscard]] std::size_t size() const noexcept { return costs.size(); }
};

Json to_json(const CostModel& costs, const ConceptSpace& space);

enum class Difficulty { VeryEasy, Moderate, VeryDifficult };

Difficulty difficulty_from_name(std::string_view name);
double raw_cost(Difficulty difficulty) noexcept;

CostModel unit_costs(const ConceptSpace& space);
/// Raw costs uniform on the reals in [1, 7], scaled to total 100.
CostModel random_costs(const ConceptSpace& space, std::uint64_t seed);
/// Difficulties mapped to 1/3/10 and scaled to total 100.
CostModel systematic_costs(const ConceptSpace& space,
                           const std::map<std::string, Difficulty>& difficulty);
/// Raw positive costs scaled to total 100.
CostModel scaled_costs(const ConceptSpace& space, const std::vector<double>& raw,
                       CostKind kind);

/// Reads a cost file: concept name -> raw positive cost, or concept name ->
/// difficulty string (systematic kind).
CostModel load_cost_file(const std::filesystem::path& path, const ConceptSpace& space);

/// "unit" | "random:SEED" | "systematic:FILE" | "file:FILE".
CostModel make_cost_model(std::string_view spec, const ConceptSpace& space);

}  // namespace coop
