// Command-line driver for the pipeline: gen -> train -> calibrate ->
// fit-greedy -> tune-coop -> simulate -> report, plus serve.
//
// All artifacts live under one root directory (--root, or $COOP_ARTIFACTS).
// Every command records a manifest under <root>/manifests/ naming its config,
// seeds and the SHA-256 of every file it read or wrote.

#include <csignal>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "coop/coop.h"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CliError {
  std::string code;
  std::string message;
};

void check(coop_status s) {
  if (s != COOP_OK) throw CliError{coop_status_name(s), coop_last_error()};
}

template <typename T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};
template <typename T, void (*Free)(T*)>
using Handle = std::unique_ptr<T, Deleter<T, Free>>;

using Space = Handle<coop_space, coop_space_free>;
using Data = Handle<coop_dataset, coop_dataset_free>;
using Model = Handle<coop_model, coop_model_free>;
using Calib = Handle<coop_calibration, coop_calibration_free>;
using Costs = Handle<coop_costs, coop_costs_free>;
using Greedy = Handle<coop_greedy, coop_greedy_free>;
using Config = Handle<coop_policy_config, coop_policy_config_free>;
using Server = Handle<coop_server, coop_server_free>;

std::string take(char* s) {
  std::string out(s ? s : "");
  coop_string_free(s);
  return out;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw CliError{"ArtifactMissingError", "cannot open " + p.string()};
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& content) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << content;
  if (!out) throw CliError{"IoError", "cannot write " + p.string()};
}

json read_json(const fs::path& p) {
  try {
    return json::parse(read_file(p));
  } catch (const json::exception& e) {
    throw CliError{"ParseError", p.string() + ": " + e.what()};
  }
}

std::string sha256(const fs::path& p) {
  char* hex = nullptr;
  check(coop_sha256_file(p.string().c_str(), &hex));
  return take(hex);
}

/// Tracks one command's inputs and outputs and writes its manifest.
class Run {
 public:
  Run(fs::path root, std::string command, bool strict)
      : root_(std::move(root)), command_(std::move(command)), strict_(strict) {}

  fs::path path(const std::string& rel) const { return root_ / rel; }

  /// Registers an input; under --strict its hash must match the manifest
  /// that produced it.
  fs::path input(const std::string& rel) {
    const fs::path p = path(rel);
    if (!fs::exists(p)) throw CliError{"ArtifactMissingError", p.string() + " not found"};
    const std::string hash = sha256(p);
    if (strict_) verify(rel, hash);
    inputs_[rel] = hash;
    return p;
  }

  std::optional<fs::path> optional_input(const std::string& rel) {
    if (!fs::exists(path(rel))) return std::nullopt;
    return input(rel);
  }

  /// Registers an output after it has been written.
  void output(const std::string& rel) { outputs_[rel] = sha256(path(rel)); }

  json config = json::object();
  std::vector<std::uint64_t> seeds;

  void finish(const std::string& manifest_name) {
    json m{{"subcommand", command_},
           {"tool_version", coop_version()},
           {"config", config},
           {"seeds", seeds},
           {"inputs", inputs_},
           {"outputs", outputs_}};
    write_file(path("manifests/" + manifest_name + ".json"), m.dump(2) + "\n");
    std::cout << json{{"status", "ok"}, {"subcommand", command_}, {"outputs", outputs_}}.dump() << "\n";
  }

 private:
  void verify(const std::string& rel, const std::string& hash) const {
    const fs::path dir = root_ / "manifests";
    if (fs::is_directory(dir)) {
      std::vector<fs::path> manifests;
      for (const auto& e : fs::directory_iterator(dir)) {
        if (e.path().extension() == ".json") manifests.push_back(e.path());
      }
      std::sort(manifests.begin(), manifests.end());
      for (const auto& m : manifests) {
        const json j = read_json(m);
        if (!j.contains("outputs") || !j["outputs"].contains(rel)) continue;
        if (j["outputs"][rel] != hash) {
          throw CliError{"HashMismatchError", rel + " does not match the hash recorded in " + m.filename().string()};
        }
        return;
      }
    }
    throw CliError{"ArtifactMissingError", "no manifest records " + rel};
  }

  fs::path root_;
  std::string command_;
  bool strict_;
  std::map<std::string, std::string> inputs_;
  std::map<std::string, std::string> outputs_;
};

struct Common {
  std::string root;
  bool strict = false;
  bool uncalibrated = false;
};

Space load_space(Run& run) {
  coop_space* s = nullptr;
  check(coop_space_load(run.input("space.json").string().c_str(), &s));
  return Space(s);
}

Data load_split(Run& run, const coop_space* space, const std::string& split) {
  coop_dataset* d = nullptr;
  check(coop_dataset_load(run.input(split + ".jsonl").string().c_str(), space, split.c_str(), &d));
  return Data(d);
}

Model load_model(Run& run) {
  coop_model* m = nullptr;
  check(coop_model_load(run.input("model.json").string().c_str(), &m));
  return Model(m);
}

Calib load_calibration(Run& run, const Common& common) {
  run.config["calibrated"] = false;
  if (common.uncalibrated) return Calib(nullptr);
  auto p = run.optional_input("calibration.json");
  if (!p) return Calib(nullptr);
  coop_calibration* c = nullptr;
  check(coop_calibration_load(p->string().c_str(), &c));
  run.config["calibrated"] = true;
  return Calib(c);
}

/// Cost specs naming a file are resolved relative to the root and hashed.
Costs make_costs(Run& run, const coop_space* space, const std::string& spec) {
  std::string resolved = spec;
  for (const std::string prefix : {"systematic:", "file:"}) {
    if (spec.rfind(prefix, 0) == 0) {
      const std::string rel = spec.substr(prefix.size());
      const fs::path p = fs::path(rel).is_absolute() ? fs::path(rel) : run.input(rel);
      resolved = prefix + p.string();
    }
  }
  coop_costs* c = nullptr;
  check(coop_costs_make(resolved.c_str(), space, &c));
  return Costs(c);
}

std::string tag_for(const std::string& spec) {
  std::string tag;
  for (char ch : spec) tag.push_back(std::isalnum(static_cast<unsigned char>(ch)) ? ch : '_');
  return tag;
}

json load_json_option(const std::string& file) {
  if (file.empty()) return json::object();
  return read_json(file);
}

// ---------------------------------------------------------------------------

void cmd_gen(const Common& common, const std::string& config_file, std::optional<std::uint64_t> seed) {
  Run run(common.root, "gen", common.strict);
  json overrides = load_json_option(config_file);
  if (seed) overrides["seed"] = *seed;
  char* resolved = nullptr;
  check(coop_synthetic_config(overrides.dump().c_str(), &resolved));
  const json config = json::parse(take(resolved));
  coop_space* s = nullptr;
  coop_dataset *train = nullptr, *val = nullptr, *test = nullptr;
  check(coop_generate(config.dump().c_str(), &s, &train, &val, &test));
  Space space(s);
  Data tr(train), va(val), te(test);
  check(coop_space_save(space.get(), run.path("space.json").string().c_str()));
  check(coop_dataset_save(tr.get(), run.path("train.jsonl").string().c_str()));
  check(coop_dataset_save(va.get(), run.path("val.jsonl").string().c_str()));
  check(coop_dataset_save(te.get(), run.path("test.jsonl").string().c_str()));
  for (const char* f : {"space.json", "train.jsonl", "val.jsonl", "test.jsonl"}) run.output(f);
  run.config = config;
  run.seeds.push_back(config["seed"].get<std::uint64_t>());
  run.finish("gen");
}

void cmd_train(const Common& common, const std::string& config_file, std::optional<std::uint64_t> seed,
               const std::string& architecture) {
  Run run(common.root, "train", common.strict);
  json overrides = load_json_option(config_file);
  if (seed) overrides["seed"] = *seed;
  if (!architecture.empty()) overrides["architecture"] = architecture;
  char* resolved = nullptr;
  check(coop_train_config(overrides.dump().c_str(), &resolved));
  const json config = json::parse(take(resolved));
  Space space = load_space(run);
  Data train = load_split(run, space.get(), "train");
  coop_model* m = nullptr;
  int degenerate = 0;
  check(coop_model_train(train.get(), config.dump().c_str(), &m, &degenerate));
  Model model(m);
  check(coop_model_save(model.get(), run.path("model.json").string().c_str()));
  run.output("model.json");
  run.config = config;
  run.config["degenerate"] = degenerate != 0;
  run.seeds.push_back(config["seed"].get<std::uint64_t>());
  if (degenerate) std::cerr << "warning: every training instance has the same label\n";
  run.finish("train");
}

void cmd_calibrate(const Common& common, const std::string& fit_split, const std::string& eval_split,
                   std::size_t bins) {
  Run run(common.root, "calibrate", common.strict);
  Space space = load_space(run);
  Data fit = load_split(run, space.get(), fit_split);
  Data eval = load_split(run, space.get(), eval_split);
  coop_calibration* c = nullptr;
  check(coop_calibration_fit(fit.get(), &c));
  Calib calibration(c);
  double before = 0.0, after = 0.0;
  check(coop_ece(eval.get(), nullptr, bins, &before));
  check(coop_ece(eval.get(), calibration.get(), bins, &after));
  check(coop_calibration_save(calibration.get(), run.path("calibration.json").string().c_str()));
  const json report{{"split", eval_split}, {"bins", bins}, {"ece_before", before}, {"ece_after", after}};
  write_file(run.path("calibration_report.json"), report.dump(2) + "\n");
  run.output("calibration.json");
  run.output("calibration_report.json");
  run.config = {{"fit_split", fit_split}, {"eval_split", eval_split}, {"bins", bins}};
  run.finish("calibrate");
}

void cmd_fit_greedy(const Common& common, const std::string& metric) {
  Run run(common.root, "fit-greedy", common.strict);
  Space space = load_space(run);
  Data val = load_split(run, space.get(), "val");
  Model model = load_model(run);
  Calib calibration = load_calibration(run, common);
  coop_greedy* g = nullptr;
  check(coop_greedy_fit(val.get(), model.get(), calibration.get(), metric.c_str(), &g));
  Greedy order(g);
  check(coop_greedy_save(order.get(), run.path("greedy.json").string().c_str()));
  run.output("greedy.json");
  run.config["metric"] = metric;
  run.finish("fit-greedy");
}

struct TuneFlags {
  std::string cost_model = "unit";
  std::vector<double> alpha_grid, beta_grid, gamma_grid, budget_grid;
  bool two_parameter = false;
  std::optional<double> fixed_budget;
  std::string metric = "accuracy";
  std::string out = "coop.json";
};

json tune_options(const TuneFlags& f) {
  json o{{"two_parameter", f.two_parameter}, {"metric", f.metric}};
  if (!f.alpha_grid.empty()) o["alpha_grid"] = f.alpha_grid;
  if (!f.beta_grid.empty()) o["beta_grid"] = f.beta_grid;
  if (!f.gamma_grid.empty()) o["gamma_grid"] = f.gamma_grid;
  if (!f.budget_grid.empty()) o["budget_grid"] = f.budget_grid;
  if (f.fixed_budget) o["fixed_budget"] = *f.fixed_budget;
  return o;
}

void cmd_tune_coop(const Common& common, const TuneFlags& flags) {
  Run run(common.root, "tune-coop", common.strict);
  Space space = load_space(run);
  Data val = load_split(run, space.get(), "val");
  Model model = load_model(run);
  Calib calibration = load_calibration(run, common);
  Costs costs = make_costs(run, space.get(), flags.cost_model);
  const json options = tune_options(flags);
  coop_policy_config* c = nullptr;
  char* table = nullptr;
  check(coop_tune(val.get(), model.get(), calibration.get(), costs.get(), options.dump().c_str(), &c, &table));
  Config config(c);
  const std::string table_json = take(table);
  const fs::path out = fs::path(flags.out);
  const std::string table_rel = (out.parent_path() / (out.stem().string() + "_table.json")).string();
  check(coop_policy_config_save(config.get(), run.path(flags.out).string().c_str()));
  write_file(run.path(table_rel), json::parse(table_json).dump(2) + "\n");
  run.output(flags.out);
  run.output(table_rel);
  run.config["options"] = options;
  run.config["cost_model"] = flags.cost_model;
  run.finish("tune-coop-" + tag_for(out.stem().string()));
}

struct SimulateFlags {
  std::vector<std::string> policies;
  std::string axis = "steps";
  std::vector<double> budget_grid;
  std::string cost_model = "unit";
  std::size_t seeds = 1;
  std::uint64_t seed_base = 0;
  std::string split = "test";
  std::string metric = "accuracy";
  std::string coop_config = "coop.json";
  std::string tag;
};

void cmd_simulate(const Common& common, const SimulateFlags& flags) {
  Run run(common.root, "simulate", common.strict);
  Space space = load_space(run);
  Data data = load_split(run, space.get(), flags.split);
  Model model = load_model(run);
  Calib calibration = load_calibration(run, common);
  Costs costs = make_costs(run, space.get(), flags.cost_model);
  std::vector<std::uint64_t> seeds;
  for (std::size_t s = 0; s < flags.seeds; ++s) seeds.push_back(flags.seed_base + s);

  Config config(nullptr);
  Greedy order(nullptr);
  const std::set<std::string> coop_family{"coop", "cpu-only", "cis-only"};
  for (const auto& p : flags.policies) {
    if (coop_family.count(p) && !config) {
      coop_policy_config* c = nullptr;
      check(coop_policy_config_load(run.input(flags.coop_config).string().c_str(), &c));
      config.reset(c);
    }
    if (p == "greedy" && !order) {
      coop_greedy* g = nullptr;
      check(coop_greedy_load(run.input("greedy.json").string().c_str(), space.get(), &g));
      order.reset(g);
    }
  }

  const std::string tag = flags.tag.empty() ? tag_for(flags.cost_model) : flags.tag;
  json curves = json::array();
  for (const auto& p : flags.policies) {
    char* curve = nullptr;
    check(coop_evaluate(p.c_str(), config.get(), order.get(), data.get(), model.get(), calibration.get(),
                        costs.get(), flags.axis.c_str(), flags.budget_grid.data(), flags.budget_grid.size(),
                        seeds.data(), seeds.size(), flags.metric.c_str(), &curve));
    json c = json::parse(take(curve));
    c["split"] = flags.split;
    c["cost_model"] = flags.cost_model;
    const std::string rel = "curves/" + p + "-" + flags.axis + "-" + tag + ".json";
    write_file(run.path(rel), c.dump(2) + "\n");
    run.output(rel);
    curves.push_back(std::move(c));
  }
  char* csv = nullptr;
  check(coop_curves_csv(curves.dump().c_str(), &csv));
  const std::string csv_rel = "curves/simulate-" + flags.axis + "-" + tag + ".csv";
  write_file(run.path(csv_rel), take(csv));
  run.output(csv_rel);

  run.config = {{"policies", flags.policies}, {"axis", flags.axis}, {"budget_grid", flags.budget_grid},
                {"cost_model", flags.cost_model}, {"split", flags.split}, {"metric", flags.metric},
                {"calibrated", static_cast<bool>(calibration)}};
  run.seeds = seeds;
  run.finish("simulate-" + flags.axis + "-" + tag);
}

void cmd_report(const Common& common, const std::vector<double>& fractions, std::uint64_t seed) {
  Run run(common.root, "report", common.strict);
  const fs::path dir = run.path("curves");
  std::vector<std::string> rels;
  if (fs::is_directory(dir)) {
    for (const auto& e : fs::directory_iterator(dir)) {
      if (e.path().extension() == ".json") rels.push_back("curves/" + e.path().filename().string());
    }
  }
  std::sort(rels.begin(), rels.end());
  if (rels.empty() && fractions.empty()) throw CliError{"ArtifactMissingError", "no curves under " + dir.string()};

  json curves = json::array();
  std::ostringstream summary;
  summary << "policy,axis_kind,cost_model,split,metric,area,n_seeds\n";
  for (const auto& rel : rels) {
    json c = read_json(run.input(rel));
    summary << c["policy"].get<std::string>() << ',' << c["axis"].get<std::string>() << ','
            << c.value("cost_model", "unit") << ',' << c.value("split", "test") << ','
            << c["metric"].get<std::string>() << ',' << json(c["area"]).dump() << ',' << c["seeds"].size() << '\n';
    curves.push_back(std::move(c));
  }
  if (!rels.empty()) {
    char* csv = nullptr;
    check(coop_curves_csv(curves.dump().c_str(), &csv));
    write_file(run.path("report/curves.csv"), take(csv));
    write_file(run.path("report/summary.csv"), summary.str());
    run.output("report/curves.csv");
    run.output("report/summary.csv");
  }

  if (!fractions.empty()) {
    Space space = load_space(run);
    Data val = load_split(run, space.get(), "val");
    Data test = load_split(run, space.get(), "test");
    Model model = load_model(run);
    Calib calibration = load_calibration(run, common);
    char* table = nullptr;
    check(coop_data_efficiency(fractions.data(), fractions.size(), val.get(), test.get(), model.get(),
                               calibration.get(), nullptr, seed, &table));
    const json rows = json::parse(take(table));
    std::ostringstream eff;
    eff << "fraction,val_size,coop_area,greedy_area\n";
    for (const auto& r : rows) {
      eff << json(r["fraction"]).dump() << ',' << r["val_size"].dump() << ',' << json(r["coop_area"]).dump() << ','
          << json(r["greedy_area"]).dump() << '\n';
    }
    write_file(run.path("report/efficiency.csv"), eff.str());
    run.output("report/efficiency.csv");
    run.config["fractions"] = fractions;
    run.seeds.push_back(seed);
  }
  run.finish("report");
}

coop_server* active_server = nullptr;

extern "C" void on_signal(int) {
  if (active_server) coop_server_stop(active_server);
}

void cmd_serve(const Common& common, const std::string& listen, const std::string& log_dir,
               const std::string& static_dir) {
  const auto colon = listen.rfind(':');
  if (colon == std::string::npos) throw CliError{"FlagError", "--listen must be HOST:PORT"};
  const std::string host = listen.substr(0, colon);
  int port = 0;
  try {
    port = std::stoi(listen.substr(colon + 1));
  } catch (const std::exception&) {
    throw CliError{"FlagError", "bad port in --listen '" + listen + "'"};
  }
  coop_server* s = nullptr;
  check(coop_server_create(common.root.c_str(), log_dir.empty() ? nullptr : log_dir.c_str(),
                           static_dir.empty() ? nullptr : static_dir.c_str(), &s));
  Server server(s);
  int bound = 0;
  check(coop_server_bind(server.get(), host.c_str(), port, &bound));
  active_server = server.get();
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cout << json{{"status", "listening"}, {"host", host}, {"port", bound}}.dump() << std::endl;
  check(coop_server_listen(server.get()));
  active_server = nullptr;
}

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : fallback;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cost-aware concept intervention pipeline"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(coop_version()));

  Common common;
  common.root = env_or("COOP_ARTIFACTS", ".");
  app.add_option("--root", common.root, "Artifact directory (default $COOP_ARTIFACTS or .)");
  app.add_flag("--strict", common.strict, "Check input hashes against their manifests");
  app.add_flag("--uncalibrated", common.uncalibrated, "Ignore calibration.json");

  std::string config_file;
  std::optional<std::uint64_t> seed;

  auto* gen = app.add_subcommand("gen", "Generate the synthetic task");
  gen->add_option("--config", config_file, "Synthetic task config JSON (default: reference task)");
  gen->add_option("--seed", seed, "Override the generator seed");

  std::string architecture;
  auto* train = app.add_subcommand("train", "Train the concept-to-label model");
  train->add_option("--config", config_file, "Training config JSON");
  train->add_option("--seed", seed, "Override the training seed");
  train->add_option("--architecture", architecture)->check(CLI::IsMember({"linear", "mlp"}));

  std::string fit_split = "train", eval_split = "test";
  std::size_t bins = 10;
  auto* calibrate = app.add_subcommand("calibrate", "Fit isotonic concept calibration");
  calibrate->add_option("--fit-split", fit_split)->check(CLI::IsMember({"train", "val", "test"}));
  calibrate->add_option("--eval-split", eval_split)->check(CLI::IsMember({"train", "val", "test"}));
  calibrate->add_option("--bins", bins)->check(CLI::PositiveNumber);

  std::string greedy_metric = "accuracy";
  auto* fit_greedy = app.add_subcommand("fit-greedy", "Fit the static Greedy ordering");
  fit_greedy->add_option("--metric", greedy_metric)->check(CLI::IsMember({"accuracy", "auc", "true_label_prob"}));

  TuneFlags tune;
  auto* tune_cmd = app.add_subcommand("tune-coop", "Grid-search CooP weights on validation");
  tune_cmd->add_option("--cost-model", tune.cost_model, "unit | random:SEED | systematic:FILE | file:FILE");
  tune_cmd->add_option("--alpha-grid", tune.alpha_grid)->delimiter(',');
  tune_cmd->add_option("--beta-grid", tune.beta_grid)->delimiter(',');
  tune_cmd->add_option("--gamma-grid", tune.gamma_grid)->delimiter(',');
  tune_cmd->add_option("--budget-grid", tune.budget_grid)->delimiter(',');
  tune_cmd->add_option("--fixed-budget", tune.fixed_budget, "Tune the metric at one budget instead of the area");
  tune_cmd->add_flag("--two-parameter", tune.two_parameter, "Fix alpha = 1");
  tune_cmd->add_option("--metric", tune.metric)->check(CLI::IsMember({"accuracy", "auc"}));
  tune_cmd->add_option("--out", tune.out, "Output path under the root");

  SimulateFlags sim;
  auto* simulate = app.add_subcommand("simulate", "Evaluate policies along a budget curve");
  simulate->add_option("--policy", sim.policies)
      ->delimiter(',')
      ->required()
      ->check(CLI::IsMember({"coop", "greedy", "random", "skyline", "cpu-only", "cis-only"}));
  simulate->add_option("--axis", sim.axis)->check(CLI::IsMember({"steps", "cost"}));
  simulate->add_option("--budget-grid", sim.budget_grid)->delimiter(',');
  simulate->add_option("--cost-model", sim.cost_model, "unit | random:SEED | systematic:FILE | file:FILE");
  simulate->add_option("--seeds", sim.seeds, "Number of seeds for stochastic policies")->check(CLI::PositiveNumber);
  simulate->add_option("--seed-base", sim.seed_base, "First seed");
  simulate->add_option("--split", sim.split)->check(CLI::IsMember({"train", "val", "test"}));
  simulate->add_option("--metric", sim.metric)->check(CLI::IsMember({"accuracy", "auc"}));
  simulate->add_option("--coop-config", sim.coop_config, "Tuned CooP config under the root");
  simulate->add_option("--tag", sim.tag, "Output name suffix (default: derived from --cost-model)");

  std::vector<double> fractions;
  std::uint64_t efficiency_seed = 0;
  auto* report = app.add_subcommand("report", "Collect curves into plot-ready CSV");
  report->add_option("--efficiency", fractions, "Also run the data-efficiency sweep over these fractions")
      ->delimiter(',');
  report->add_option("--efficiency-seed", efficiency_seed);

  std::string listen = env_or("COOP_LISTEN", "127.0.0.1:8080");
  std::string log_dir = env_or("COOP_LOG_DIR", "");
  std::string static_dir = env_or("COOP_STATIC_DIR", "");
  auto* serve = app.add_subcommand("serve", "Serve interactive sessions over HTTP");
  serve->add_option("--listen", listen, "HOST:PORT (default $COOP_LISTEN or 127.0.0.1:8080)");
  serve->add_option("--artifacts", common.root, "Artifact directory (default $COOP_ARTIFACTS)");
  serve->add_option("--log-dir", log_dir, "Session event logs (default $COOP_LOG_DIR)");
  serve->add_option("--static", static_dir, "Static files to serve at / (default $COOP_STATIC_DIR)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << json{{"code", "FlagError"}, {"message", e.what()}}.dump() << "\n";
    return 2;
  }

  try {
    if (*gen) cmd_gen(common, config_file, seed);
    if (*train) cmd_train(common, config_file, seed, architecture);
    if (*calibrate) cmd_calibrate(common, fit_split, eval_split, bins);
    if (*fit_greedy) cmd_fit_greedy(common, greedy_metric);
    if (*tune_cmd) cmd_tune_coop(common, tune);
    if (*simulate) cmd_simulate(common, sim);
    if (*report) cmd_report(common, fractions, efficiency_seed);
    if (*serve) cmd_serve(common, listen, log_dir, static_dir);
  } catch (const CliError& e) {
    std::cerr << json{{"code", e.code}, {"message", e.message}}.dump() << "\n";
    return e.code == "FlagError" ? 2 : 1;
  }
  return 0;
}
