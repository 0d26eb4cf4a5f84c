#include "coop/coop.h"

#include <cstring>
#include <memory>
#include <new>
#include <string>

#include "coop/cbm.hpp"
#include "coop/concept_data.hpp"
#include "coop/errors.hpp"
#include "coop/policies.hpp"
#include "coop/rollout.hpp"
#include "coop/session.hpp"
#include "coop/util.hpp"
#include "httplib.h"

#ifndef COOP_VERSION
#define COOP_VERSION "0.0.0"
#endif

struct coop_space {
  coop::ConceptSpace value;
};
struct coop_dataset {
  coop::Dataset value;
};
struct coop_model {
  coop::ConceptToLabelModel value;
};
struct coop_calibration {
  coop::CalibrationMap value;
};
struct coop_costs {
  coop::CostModel value;
};
struct coop_greedy {
  coop::GreedyOrder value;
};
struct coop_policy_config {
  coop::PolicyConfig value;
};
struct coop_server {
  std::shared_ptr<const coop::SessionArtifacts> artifacts;
  std::unique_ptr<coop::SessionManager> manager;
  httplib::Server http;
};

namespace {

thread_local std::string last_error;

coop_status status_of(coop::ErrorCode code) { return static_cast<coop_status>(static_cast<int>(code) + 1); }

template <typename F>
coop_status guarded(F&& body) {
  last_error.clear();
  try {
    body();
    return COOP_OK;
  } catch (const coop::Error& e) {
    last_error = e.what();
    return status_of(e.code());
  } catch (const nlohmann::json::exception& e) {
    last_error = e.what();
    return COOP_PARSE_ERROR;
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return COOP_INTERNAL_ERROR;
  } catch (const std::exception& e) {
    last_error = e.what();
    return COOP_INTERNAL_ERROR;
  }
}

struct NullArgument {};

template <typename... Ts>
void require(const Ts*... ptrs) {
  if (((ptrs == nullptr) || ...)) throw NullArgument{};
}

template <typename F>
coop_status run(F&& body) {
  try {
    return guarded(std::forward<F>(body));
  } catch (const NullArgument&) {
    last_error = "required argument is NULL";
    return COOP_NULL_ARGUMENT;
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

coop::Json parse_optional(const char* text) {
  if (!text || !*text) return coop::Json::object();
  try {
    return coop::Json::parse(text);
  } catch (const coop::Json::exception& e) {
    coop::fail(coop::ErrorCode::Parse, std::string("JSON argument: ") + e.what());
  }
}

const coop::CalibrationMap* calib(const coop_calibration* c) { return c ? &c->value : nullptr; }

}  // namespace

extern "C" {

const char* coop_version(void) { return COOP_VERSION; }

const char* coop_last_error(void) { return last_error.c_str(); }

const char* coop_status_name(coop_status status) {
  if (status == COOP_OK) return "Ok";
  if (status == COOP_NULL_ARGUMENT) return "NullArgument";
  if (status < COOP_OK || status > COOP_NULL_ARGUMENT) return "Unknown";
  return coop::error_name(static_cast<coop::ErrorCode>(status - 1)).data();
}

void coop_string_free(char* s) { std::free(s); }

coop_status coop_sha256_file(const char* path, char** hex) {
  return run([&] {
    require(path, hex);
    *hex = dup_string(coop::sha256_file(path));
  });
}

// ---- concept space

coop_status coop_space_load(const char* path, coop_space** out) {
  return run([&] {
    require(path, out);
    *out = new coop_space{coop::load_space(path)};
  });
}

coop_status coop_space_save(const coop_space* space, const char* path) {
  return run([&] {
    require(space, path);
    coop::save_space(space->value, path);
  });
}

coop_status coop_space_concept_count(const coop_space* space, size_t* out) {
  return run([&] {
    require(space, out);
    *out = space->value.concept_count();
  });
}

coop_status coop_space_label_count(const coop_space* space, size_t* out) {
  return run([&] {
    require(space, out);
    *out = space->value.label_count();
  });
}

void coop_space_free(coop_space* space) { delete space; }

// ---- datasets

coop_status coop_generate(const char* config_json, coop_space** space, coop_dataset** train, coop_dataset** val,
                          coop_dataset** test) {
  return run([&] {
    const coop::SyntheticTaskConfig config = coop::synthetic_config_from_json(parse_optional(config_json));
    coop::SyntheticTask task = coop::generate_synthetic(config);
    auto s = std::make_unique<coop_space>(coop_space{task.train.space});
    auto tr = std::make_unique<coop_dataset>(coop_dataset{std::move(task.train)});
    auto va = std::make_unique<coop_dataset>(coop_dataset{std::move(task.val)});
    auto te = std::make_unique<coop_dataset>(coop_dataset{std::move(task.test)});
    if (space) *space = s.release();
    if (train) *train = tr.release();
    if (val) *val = va.release();
    if (test) *test = te.release();
  });
}

coop_status coop_synthetic_config(const char* config_json, char** resolved_json) {
  return run([&] {
    require(resolved_json);
    *resolved_json = dup_string(coop::to_json(coop::synthetic_config_from_json(parse_optional(config_json))).dump());
  });
}

coop_status coop_dataset_load(const char* path, const coop_space* space, const char* split, coop_dataset** out) {
  return run([&] {
    require(path, space, out);
    const coop::Split s = split ? coop::split_from_name(split) : coop::Split::Test;
    *out = new coop_dataset{coop::load_dataset(path, space->value, s)};
  });
}

coop_status coop_dataset_save(const coop_dataset* dataset, const char* path) {
  return run([&] {
    require(dataset, path);
    coop::save_dataset(dataset->value, path);
  });
}

coop_status coop_dataset_size(const coop_dataset* dataset, size_t* out) {
  return run([&] {
    require(dataset, out);
    *out = dataset->value.size();
  });
}

coop_status coop_dataset_subsample(const coop_dataset* dataset, double fraction, uint64_t seed, coop_dataset** out) {
  return run([&] {
    require(dataset, out);
    *out = new coop_dataset{coop::subsample(dataset->value, fraction, seed)};
  });
}

void coop_dataset_free(coop_dataset* dataset) { delete dataset; }

// ---- model

coop_status coop_model_train(const coop_dataset* train, const char* config_json, coop_model** out, int* degenerate) {
  return run([&] {
    require(train, out);
    const coop::TrainConfig config = coop::train_config_from_json(parse_optional(config_json));
    coop::TrainResult result = coop::train_concept_to_label(train->value, config);
    if (degenerate) *degenerate = result.degenerate ? 1 : 0;
    *out = new coop_model{std::move(result.model)};
  });
}

coop_status coop_train_config(const char* config_json, char** resolved_json) {
  return run([&] {
    require(resolved_json);
    const coop::TrainConfig config = coop::train_config_from_json(parse_optional(config_json));
    config.validate();
    *resolved_json = dup_string(coop::to_json(config).dump());
  });
}

coop_status coop_model_load(const char* path, coop_model** out) {
  return run([&] {
    require(path, out);
    *out = new coop_model{coop::model_from_json(coop::read_json_file(path))};
  });
}

coop_status coop_model_save(const coop_model* model, const char* path) {
  return run([&] {
    require(model, path);
    coop::write_json_file(path, coop::to_json(model->value));
  });
}

coop_status coop_model_predict(const coop_model* model, const double* features, size_t n_features, double* out,
                               size_t n_labels) {
  return run([&] {
    require(model, features, out);
    if (n_labels != model->value.label_count) {
      coop::fail(coop::ErrorCode::Dimension, "output buffer holds " + std::to_string(n_labels) + " labels, model has " +
                                                 std::to_string(model->value.label_count));
    }
    const auto dist = model->value.predict(std::span<const double>(features, n_features));
    std::copy(dist.begin(), dist.end(), out);
  });
}

coop_status coop_model_accuracy(const coop_model* model, const coop_dataset* dataset,
                                const coop_calibration* calibration, double* out) {
  return run([&] {
    require(model, dataset, out);
    const std::size_t m = dataset->value.space.concept_count();
    *out = coop::accuracy(
        model->value, dataset->value, [m](const coop::Instance&) { return coop::Revealed(m); }, calib(calibration));
  });
}

void coop_model_free(coop_model* model) { delete model; }

// ---- calibration

coop_status coop_calibration_fit(const coop_dataset* dataset, coop_calibration** out) {
  return run([&] {
    require(dataset, out);
    *out = new coop_calibration{coop::fit_concept_calibration(dataset->value)};
  });
}

coop_status coop_calibration_load(const char* path, coop_calibration** out) {
  return run([&] {
    require(path, out);
    *out = new coop_calibration{coop::calibration_from_json(coop::read_json_file(path))};
  });
}

coop_status coop_calibration_save(const coop_calibration* calibration, const char* path) {
  return run([&] {
    require(calibration, path);
    coop::write_json_file(path, coop::to_json(calibration->value));
  });
}

coop_status coop_calibration_apply(const coop_calibration* calibration, double p, double* out) {
  return run([&] {
    require(calibration, out);
    *out = coop::apply_calibration(calibration->value, p);
  });
}

coop_status coop_ece(const coop_dataset* dataset, const coop_calibration* calibration, size_t bins, double* out) {
  return run([&] {
    require(dataset, out);
    const auto pairs = coop::concept_calibration_pairs(dataset->value, calib(calibration));
    *out = coop::expected_calibration_error(pairs, bins);
  });
}

void coop_calibration_free(coop_calibration* calibration) { delete calibration; }

// ---- costs

coop_status coop_costs_make(const char* spec, const coop_space* space, coop_costs** out) {
  return run([&] {
    require(spec, space, out);
    *out = new coop_costs{coop::make_cost_model(spec, space->value)};
  });
}

coop_status coop_costs_total(const coop_costs* costs, double* out) {
  return run([&] {
    require(costs, out);
    *out = costs->value.total();
  });
}

coop_status coop_costs_json(const coop_costs* costs, const coop_space* space, char** out) {
  return run([&] {
    require(costs, space, out);
    *out = dup_string(coop::to_json(costs->value, space->value).dump());
  });
}

void coop_costs_free(coop_costs* costs) { delete costs; }

// ---- baselines and tuning

coop_status coop_greedy_fit(const coop_dataset* val, const coop_model* model, const coop_calibration* calibration,
                            const char* metric, coop_greedy** out) {
  return run([&] {
    require(val, model, out);
    const coop::Metric m = metric ? coop::metric_from_name(metric) : coop::Metric::Accuracy;
    *out = new coop_greedy{coop::greedy_fit(val->value, model->value, calib(calibration), m)};
  });
}

coop_status coop_greedy_load(const char* path, const coop_space* space, coop_greedy** out) {
  return run([&] {
    require(path, space, out);
    *out = new coop_greedy{coop::greedy_order_from_json(coop::read_json_file(path), space->value.concept_count())};
  });
}

coop_status coop_greedy_save(const coop_greedy* order, const char* path) {
  return run([&] {
    require(order, path);
    coop::write_json_file(path, coop::to_json(order->value));
  });
}

void coop_greedy_free(coop_greedy* order) { delete order; }

coop_status coop_tune(const coop_dataset* val, const coop_model* model, const coop_calibration* calibration,
                      const coop_costs* costs, const char* options_json, coop_policy_config** out,
                      char** table_json) {
  return run([&] {
    require(val, model, costs, out);
    const coop::TuneOptions options = coop::tune_options_from_json(parse_optional(options_json));
    coop::TuneResult result = coop::tune_coop(val->value, model->value, costs->value, calib(calibration), options);
    char* table = table_json ? dup_string(coop::to_json(result).dump()) : nullptr;
    *out = new coop_policy_config{std::move(result.config)};
    if (table_json) *table_json = table;
  });
}

coop_status coop_policy_config_load(const char* path, coop_policy_config** out) {
  return run([&] {
    require(path, out);
    *out = new coop_policy_config{coop::policy_config_from_json(coop::read_json_file(path))};
  });
}

coop_status coop_policy_config_save(const coop_policy_config* config, const char* path) {
  return run([&] {
    require(config, path);
    coop::write_json_file(path, coop::to_json(config->value));
  });
}

coop_status coop_policy_config_json(const coop_policy_config* config, char** out) {
  return run([&] {
    require(config, out);
    *out = dup_string(coop::to_json(config->value).dump());
  });
}

void coop_policy_config_free(coop_policy_config* config) { delete config; }

// ---- evaluation

coop_status coop_evaluate(const char* policy, const coop_policy_config* config, const coop_greedy* order,
                          const coop_dataset* dataset, const coop_model* model, const coop_calibration* calibration,
                          const coop_costs* costs, const char* axis, const double* grid, size_t n_grid,
                          const uint64_t* seeds, size_t n_seeds, const char* metric, char** curve_json) {
  return run([&] {
    require(policy, dataset, model, costs, axis, curve_json);
    if (n_grid > 0) require(grid);
    if (n_seeds > 0) require(seeds);
    const auto p = coop::make_policy(policy, config ? &config->value : nullptr, order ? &order->value : nullptr);
    const coop::Axis ax = coop::axis_from_name(axis);
    std::vector<double> g(grid, grid + n_grid);
    if (g.empty()) {
      g = ax == coop::Axis::Steps ? coop::step_grid(dataset->value.space.concept_count())
                                  : coop::cost_grid(costs->value);
    }
    std::vector<std::uint64_t> s(seeds, seeds + n_seeds);
    if (s.empty()) s.push_back(0);
    const coop::Metric m = metric ? coop::metric_from_name(metric) : coop::Metric::Accuracy;
    const auto curve =
        coop::evaluate_curve(*p, dataset->value, g, ax, costs->value, model->value, calib(calibration), s, m);
    *curve_json = dup_string(coop::to_json(curve).dump());
  });
}

coop_status coop_curves_csv(const char* curves_json, char** csv) {
  return run([&] {
    require(curves_json, csv);
    const coop::Json j = parse_optional(curves_json);
    if (!j.is_array()) coop::fail(coop::ErrorCode::Schema, "expected a JSON array of curves");
    std::vector<coop::EvaluationCurve> curves;
    for (const auto& c : j) curves.push_back(coop::curve_from_json(c));
    *csv = dup_string(coop::curves_to_csv(curves));
  });
}

coop_status coop_area_under_curve(const double* grid, const double* values, size_t n, double* out) {
  return run([&] {
    require(grid, values, out);
    *out = coop::area_under_curve(std::span<const double>(grid, n), std::span<const double>(values, n));
  });
}

coop_status coop_data_efficiency(const double* fractions, size_t n_fractions, const coop_dataset* val,
                                 const coop_dataset* test, const coop_model* model,
                                 const coop_calibration* calibration, const char* options_json, uint64_t seed,
                                 char** table_json) {
  return run([&] {
    require(fractions, val, test, model, table_json);
    const coop::TuneOptions options = coop::tune_options_from_json(parse_optional(options_json));
    const auto rows = coop::data_efficiency_sweep(std::span<const double>(fractions, n_fractions), val->value,
                                                  test->value, model->value, calib(calibration), options, seed);
    coop::Json out = coop::Json::array();
    for (const auto& row : rows) out.push_back(coop::to_json(row));
    *table_json = dup_string(out.dump());
  });
}

// ---- session service

coop_status coop_server_create(const char* artifact_dir, const char* log_dir, const char* static_dir,
                               coop_server** out) {
  return run([&] {
    require(artifact_dir, out);
    auto server = std::make_unique<coop_server>();
    server->artifacts = std::make_shared<const coop::SessionArtifacts>(coop::SessionArtifacts::load(artifact_dir));
    std::optional<std::filesystem::path> logs;
    if (log_dir && *log_dir) logs = std::filesystem::path(log_dir);
    server->manager = std::make_unique<coop::SessionManager>(server->artifacts, logs);
    coop::register_routes(server->http, *server->manager);
    if (static_dir && *static_dir && !server->http.set_mount_point("/", static_dir)) {
      coop::fail(coop::ErrorCode::ArtifactMissing, std::string("static directory ") + static_dir + " not found");
    }
    *out = server.release();
  });
}

coop_status coop_server_bind(coop_server* server, const char* host, int port, int* bound_port) {
  return run([&] {
    require(server, host);
    int bound = port;
    if (port == 0) {
      bound = server->http.bind_to_any_port(host);
    } else if (!server->http.bind_to_port(host, port)) {
      bound = -1;
    }
    if (bound < 0) coop::fail(coop::ErrorCode::Io, std::string("cannot bind ") + host + ":" + std::to_string(port));
    if (bound_port) *bound_port = bound;
  });
}

coop_status coop_server_listen(coop_server* server) {
  return run([&] {
    require(server);
    if (!server->http.listen_after_bind()) coop::fail(coop::ErrorCode::Io, "server stopped with an error");
  });
}

coop_status coop_server_stop(coop_server* server) {
  return run([&] {
    require(server);
    server->http.stop();
  });
}

void coop_server_free(coop_server* server) { delete server; }

}  // extern "C"
