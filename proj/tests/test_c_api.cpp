// Exercises the shared library through its C header only.
#include "coop/coop.h"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <thread>
#include <vector>

#include "doctest.h"
#include "httplib.h"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string take(char* s) {
  std::string out(s ? s : "");
  coop_string_free(s);
  return out;
}

fs::path fresh_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("coop-capi-" + name + "-" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

const char* kSmallTask =
    R"({"concept_count": 5, "label_count": 3, "train_size": 200, "val_size": 60, "test_size": 80, "seed": 2})";

struct Pipeline {
  coop_space* space = nullptr;
  coop_dataset* train = nullptr;
  coop_dataset* val = nullptr;
  coop_dataset* test = nullptr;
  coop_model* model = nullptr;
  coop_calibration* calibration = nullptr;
  coop_costs* costs = nullptr;

  Pipeline() {
    REQUIRE(coop_generate(kSmallTask, &space, &train, &val, &test) == COOP_OK);
    REQUIRE(coop_model_train(train, R"({"epochs": 30})", &model, nullptr) == COOP_OK);
    REQUIRE(coop_calibration_fit(train, &calibration) == COOP_OK);
    REQUIRE(coop_costs_make("unit", space, &costs) == COOP_OK);
  }
  ~Pipeline() {
    coop_costs_free(costs);
    coop_calibration_free(calibration);
    coop_model_free(model);
    coop_dataset_free(test);
    coop_dataset_free(val);
    coop_dataset_free(train);
    coop_space_free(space);
  }
};

}  // namespace

TEST_CASE("status names and version") {
  CHECK(std::string(coop_version()) == "0.1.0");
  CHECK(std::string(coop_status_name(COOP_OK)) == "Ok");
  CHECK(std::string(coop_status_name(COOP_SCHEMA_ERROR)) == "SchemaError");
  CHECK(std::string(coop_status_name(COOP_HASH_MISMATCH_ERROR)) == "HashMismatchError");
  CHECK(std::string(coop_status_name(COOP_NULL_ARGUMENT)) == "NullArgument");
}

TEST_CASE("null arguments and bad json") {
  coop_space* space = nullptr;
  CHECK(coop_space_load(nullptr, &space) == COOP_NULL_ARGUMENT);
  CHECK(coop_space_load("x", nullptr) == COOP_NULL_ARGUMENT);
  CHECK(std::string(coop_last_error()).size() > 0);
  CHECK(coop_space_load("/nonexistent/space.json", &space) == COOP_ARTIFACT_MISSING_ERROR);
  CHECK(space == nullptr);

  char* resolved = nullptr;
  CHECK(coop_synthetic_config("{not json", &resolved) == COOP_PARSE_ERROR);
  CHECK(coop_synthetic_config(R"({"flip_rate": 2.0})", &resolved) == COOP_CONFIG_ERROR);
  REQUIRE(coop_synthetic_config(nullptr, &resolved) == COOP_OK);
  const json reference = json::parse(take(resolved));
  CHECK(reference.at("concept_count") == 12);
  CHECK(reference.at("label_count") == 6);

  coop_space_free(nullptr);
  coop_dataset_free(nullptr);
  coop_model_free(nullptr);
  coop_server_free(nullptr);
}

TEST_CASE("round trips through files") {
  Pipeline p;
  const auto dir = fresh_dir("files");
  const std::string space_path = (dir / "space.json").string();
  const std::string test_path = (dir / "test.jsonl").string();
  const std::string model_path = (dir / "model.json").string();
  const std::string calib_path = (dir / "calibration.json").string();

  REQUIRE(coop_space_save(p.space, space_path.c_str()) == COOP_OK);
  REQUIRE(coop_dataset_save(p.test, test_path.c_str()) == COOP_OK);
  REQUIRE(coop_model_save(p.model, model_path.c_str()) == COOP_OK);
  REQUIRE(coop_calibration_save(p.calibration, calib_path.c_str()) == COOP_OK);

  coop_space* space = nullptr;
  coop_dataset* test = nullptr;
  coop_model* model = nullptr;
  coop_calibration* calib = nullptr;
  REQUIRE(coop_space_load(space_path.c_str(), &space) == COOP_OK);
  REQUIRE(coop_dataset_load(test_path.c_str(), space, "test", &test) == COOP_OK);
  REQUIRE(coop_model_load(model_path.c_str(), &model) == COOP_OK);
  REQUIRE(coop_calibration_load(calib_path.c_str(), &calib) == COOP_OK);

  size_t m = 0, k = 0, n = 0;
  CHECK(coop_space_concept_count(space, &m) == COOP_OK);
  CHECK(coop_space_label_count(space, &k) == COOP_OK);
  CHECK(coop_dataset_size(test, &n) == COOP_OK);
  CHECK(m == 5);
  CHECK(k == 3);
  CHECK(n == 80);

  double a1 = 0, a2 = 0;
  CHECK(coop_model_accuracy(p.model, p.test, p.calibration, &a1) == COOP_OK);
  CHECK(coop_model_accuracy(model, test, calib, &a2) == COOP_OK);
  CHECK(a1 == doctest::Approx(a2).epsilon(1e-6));

  std::vector<double> x(10, 0.5), out(3);
  CHECK(coop_model_predict(model, x.data(), x.size(), out.data(), out.size()) == COOP_OK);
  CHECK(std::abs(out[0] + out[1] + out[2] - 1.0) <= 1e-9);
  CHECK(coop_model_predict(model, x.data(), 9, out.data(), out.size()) == COOP_DIMENSION_ERROR);
  CHECK(coop_model_predict(model, x.data(), x.size(), out.data(), 2) == COOP_DIMENSION_ERROR);

  char* hex = nullptr;
  REQUIRE(coop_sha256_file(model_path.c_str(), &hex) == COOP_OK);
  CHECK(take(hex).size() == 64);

  coop_dataset* wrong_split = nullptr;
  CHECK(coop_dataset_load(test_path.c_str(), space, "holdout", &wrong_split) != COOP_OK);

  coop_calibration_free(calib);
  coop_model_free(model);
  coop_dataset_free(test);
  coop_space_free(space);
}

TEST_CASE("calibration, costs and subsampling") {
  Pipeline p;
  double before = 0, after = 0;
  CHECK(coop_ece(p.test, nullptr, 10, &before) == COOP_OK);
  CHECK(coop_ece(p.test, p.calibration, 10, &after) == COOP_OK);
  CHECK(after <= before);
  double c0 = 0, c1 = 0;
  CHECK(coop_calibration_apply(p.calibration, 0.1, &c0) == COOP_OK);
  CHECK(coop_calibration_apply(p.calibration, 0.9, &c1) == COOP_OK);
  CHECK(c0 <= c1);

  coop_costs* random = nullptr;
  REQUIRE(coop_costs_make("random:4", p.space, &random) == COOP_OK);
  double total = 0;
  CHECK(coop_costs_total(random, &total) == COOP_OK);
  CHECK(total == doctest::Approx(100.0));
  char* text = nullptr;
  REQUIRE(coop_costs_json(random, p.space, &text) == COOP_OK);
  const json cj = json::parse(take(text));
  CHECK(cj.at("kind") == "random");
  CHECK(cj.at("costs").size() == 5);
  coop_costs_free(random);
  coop_costs* bogus = nullptr;
  CHECK(coop_costs_make("bogus", p.space, &bogus) == COOP_UNKNOWN_COST_MODEL_ERROR);

  coop_dataset* sub = nullptr;
  REQUIRE(coop_dataset_subsample(p.val, 0.5, 1, &sub) == COOP_OK);
  size_t n = 0;
  coop_dataset_size(sub, &n);
  CHECK(n == 30);
  coop_dataset_free(sub);
  CHECK(coop_dataset_subsample(p.val, 0.0, 1, &sub) == COOP_FRACTION_ERROR);
}

TEST_CASE("baselines, tuning and evaluation") {
  Pipeline p;
  coop_greedy* order = nullptr;
  REQUIRE(coop_greedy_fit(p.val, p.model, p.calibration, "accuracy", &order) == COOP_OK);
  coop_greedy* bad = nullptr;
  CHECK(coop_greedy_fit(p.val, p.model, p.calibration, "auc", &bad) == COOP_METRIC_MISMATCH_ERROR);
  CHECK(coop_greedy_fit(p.val, p.model, p.calibration, "f1", &bad) != COOP_OK);

  coop_policy_config* config = nullptr;
  char* table = nullptr;
  REQUIRE(coop_tune(p.val, p.model, p.calibration, p.costs, R"({"alpha_grid": [0, 1], "beta_grid": [0, 1]})", &config,
                    &table) == COOP_OK);
  const json t = json::parse(take(table));
  CHECK(t.at("rows").size() == 4);
  CHECK(coop_tune(p.val, p.model, p.calibration, p.costs, R"({"beta_grid": []})", &config, nullptr) ==
        COOP_EMPTY_GRID_ERROR);

  const char* policies[] = {"coop", "cpu-only", "cis-only", "greedy", "random", "skyline"};
  json curves = json::array();
  const uint64_t seeds[] = {0, 1, 2};
  for (const char* id : policies) {
    char* curve = nullptr;
    REQUIRE(coop_evaluate(id, config, order, p.test, p.model, p.calibration, p.costs, "steps", nullptr, 0, seeds, 3,
                          nullptr, &curve) == COOP_OK);
    curves.push_back(json::parse(take(curve)));
  }
  for (const auto& c : curves) {
    CHECK(c.at("grid").size() == 6);
    CHECK(c.at("values").front() == curves[0].at("values").front());
    CHECK(c.at("values").back() == curves[0].at("values").back());
  }
  const auto grid = curves[0].at("grid").get<std::vector<double>>();
  const auto values = curves[0].at("values").get<std::vector<double>>();
  double area = 0;
  CHECK(coop_area_under_curve(grid.data(), values.data(), grid.size(), &area) == COOP_OK);
  CHECK(area == doctest::Approx(curves[0].at("area").get<double>()));

  char* csv = nullptr;
  REQUIRE(coop_curves_csv(curves.dump().c_str(), &csv) == COOP_OK);
  const std::string text = take(csv);
  CHECK(text.rfind("policy,axis_kind,grid_point,metric,stderr,n_seeds\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 1 + 6 * 6);

  char* curve = nullptr;
  CHECK(coop_evaluate("coop", nullptr, nullptr, p.test, p.model, nullptr, p.costs, "steps", nullptr, 0, nullptr, 0,
                      nullptr, &curve) == COOP_UNKNOWN_POLICY_ERROR);
  CHECK(coop_evaluate("random", nullptr, nullptr, p.test, p.model, nullptr, p.costs, "sideways", nullptr, 0, nullptr,
                      0, nullptr, &curve) != COOP_OK);
  CHECK(coop_evaluate("random", nullptr, nullptr, p.test, p.model, nullptr, p.costs, "steps", nullptr, 0, nullptr, 0,
                      "auc", &curve) == COOP_METRIC_MISMATCH_ERROR);

  const double fractions[] = {0.5, 1.0};
  char* eff = nullptr;
  REQUIRE(coop_data_efficiency(fractions, 2, p.val, p.test, p.model, p.calibration,
                               R"({"alpha_grid": [0, 1], "beta_grid": [0, 1]})", 3, &eff) == COOP_OK);
  CHECK(json::parse(take(eff)).size() == 2);

  const auto dir = fresh_dir("policy");
  const std::string cfg_path = (dir / "coop.json").string();
  const std::string order_path = (dir / "greedy.json").string();
  REQUIRE(coop_policy_config_save(config, cfg_path.c_str()) == COOP_OK);
  REQUIRE(coop_greedy_save(order, order_path.c_str()) == COOP_OK);
  coop_policy_config* loaded = nullptr;
  coop_greedy* loaded_order = nullptr;
  REQUIRE(coop_policy_config_load(cfg_path.c_str(), &loaded) == COOP_OK);
  REQUIRE(coop_greedy_load(order_path.c_str(), p.space, &loaded_order) == COOP_OK);
  char* a = nullptr;
  char* b = nullptr;
  coop_policy_config_json(config, &a);
  coop_policy_config_json(loaded, &b);
  CHECK(take(a) == take(b));

  coop_greedy_free(loaded_order);
  coop_policy_config_free(loaded);
  coop_policy_config_free(config);
  coop_greedy_free(order);
}

TEST_CASE("server lifecycle") {
  Pipeline p;
  const auto dir = fresh_dir("server");
  coop_space_save(p.space, (dir / "space.json").string().c_str());
  coop_dataset_save(p.test, (dir / "test.jsonl").string().c_str());
  coop_model_save(p.model, (dir / "model.json").string().c_str());

  coop_server* server = nullptr;
  CHECK(coop_server_create((dir / "absent").string().c_str(), nullptr, nullptr, &server) ==
        COOP_ARTIFACT_MISSING_ERROR);
  REQUIRE(coop_server_create(dir.string().c_str(), (dir / "logs").string().c_str(), nullptr, &server) == COOP_OK);
  int port = 0;
  REQUIRE(coop_server_bind(server, "127.0.0.1", 0, &port) == COOP_OK);
  REQUIRE(port > 0);
  std::thread listener([&] { coop_server_listen(server); });

  httplib::Client client("127.0.0.1", port);
  httplib::Result health;
  for (int attempt = 0; attempt < 100 && !health; ++attempt) {
    health = client.Get("/v1/health");
    if (!health) std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  REQUIRE(health);
  CHECK(json::parse(health->body).at("status") == "ok");
  const json catalog = json::parse(client.Get("/v1/catalog")->body);
  // No tuned config or greedy order in this root.
  CHECK(catalog.at("policies") == json::array({"random", "skyline"}));
  auto created = client.Post("/v1/sessions",
                             json{{"dataset", "test"}, {"instance_id", "test-0"}, {"policy", "random"}, {"budget", 2}}
                                 .dump(),
                             "application/json");
  CHECK(created->status == 201);

  CHECK(coop_server_stop(server) == COOP_OK);
  listener.join();
  coop_server_free(server);
  CHECK(fs::exists(dir / "logs" / "s000001.jsonl"));
}
