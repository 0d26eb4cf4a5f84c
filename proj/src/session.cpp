#include "coop/session.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "coop/errors.hpp"
#include "coop/util.hpp"
#include "httplib.h"

namespace coop {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Artifacts

SessionArtifacts SessionArtifacts::load(const fs::path& dir) {
  if (!fs::is_directory(dir)) fail(ErrorCode::ArtifactMissing, "artifact directory " + dir.string() + " not found");
  SessionArtifacts a;
  a.space = load_space(dir / "space.json");
  a.model = model_from_json(read_json_file(dir / "model.json"));
  if (a.model.input_dim != a.space.feature_dim() || a.model.label_count != a.space.label_count()) {
    fail(ErrorCode::Dimension, "model.json does not match space.json");
  }
  if (fs::exists(dir / "calibration.json")) a.calibration = calibration_from_json(read_json_file(dir / "calibration.json"));
  if (fs::exists(dir / "coop.json")) a.coop = policy_config_from_json(read_json_file(dir / "coop.json"));
  if (fs::exists(dir / "greedy.json")) {
    a.greedy = greedy_order_from_json(read_json_file(dir / "greedy.json"), a.space.concept_count());
  }
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& p : files) {
    if (p.extension() != ".jsonl") continue;
    const std::string name = p.stem().string();
    Split split = Split::Test;
    if (name == "train" || name == "val" || name == "test") split = split_from_name(name);
    a.datasets.emplace(name, load_dataset(p, a.space, split));
  }
  a.cost_models.emplace("unit", unit_costs(a.space));
  if (fs::is_directory(dir / "costs")) {
    for (const auto& e : fs::directory_iterator(dir / "costs")) {
      if (e.path().extension() == ".json") a.cost_models.emplace(e.path().stem().string(), load_cost_file(e.path(), a.space));
    }
  }
  return a;
}

std::vector<std::string> SessionArtifacts::policy_ids() const {
  std::vector<std::string> ids;
  if (coop) ids.insert(ids.end(), {"coop", "cpu-only", "cis-only"});
  if (greedy) ids.push_back("greedy");
  ids.insert(ids.end(), {"random", "skyline"});
  return ids;
}

CostModel SessionArtifacts::resolve_cost_model(const std::string& id) const {
  if (auto it = cost_models.find(id); it != cost_models.end()) return it->second;
  if (id.rfind("random:", 0) == 0) return make_cost_model(id, space);
  fail(ErrorCode::UnknownCostModel, "unknown cost model '" + id + "'");
}

// ---------------------------------------------------------------------------
// Requests

Json to_json(const CreateRequest& r) {
  Json j{{"policy", r.policy}, {"budget", r.budget}, {"cost_model", r.cost_model}, {"seed", r.seed}};
  if (r.dataset) j["dataset"] = *r.dataset;
  if (r.instance_id) j["instance_id"] = *r.instance_id;
  if (r.concept_probs) j["concept_probs"] = *r.concept_probs;
  return j;
}

CreateRequest create_request_from_json(const Json& j) {
  if (!j.is_object()) fail(ErrorCode::BadRequest, "request body must be a JSON object");
  CreateRequest r;
  try {
    r.policy = j.at("policy").get<std::string>();
    if (!j.contains("budget") || !j.at("budget").is_number()) fail(ErrorCode::BadBudget, "budget must be a number");
    r.budget = j.at("budget").get<double>();
    r.cost_model = j.value("cost_model", r.cost_model);
    r.seed = j.value("seed", r.seed);
    if (j.contains("dataset")) r.dataset = j.at("dataset").get<std::string>();
    if (j.contains("instance_id")) r.instance_id = j.at("instance_id").get<std::string>();
    if (j.contains("concept_probs")) r.concept_probs = j.at("concept_probs").get<std::vector<std::vector<double>>>();
  } catch (const Json::exception& e) {
    fail(ErrorCode::BadRequest, std::string("malformed session request: ") + e.what());
  }
  if (!std::isfinite(r.budget) || r.budget < 0.0) fail(ErrorCode::BadBudget, "budget must be a finite number >= 0");
  return r;
}

Json top_labels(const std::vector<double>& dist, const ConceptSpace& space, std::size_t limit) {
  std::vector<std::size_t> order(dist.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dist[a] > dist[b]; });
  Json out = Json::array();
  for (std::size_t r = 0; r < std::min(limit, order.size()); ++r) {
    out.push_back({{"label", space.label_names[order[r]]}, {"probability", dist[order[r]]}});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Session

namespace {

Instance resolve_instance(const SessionArtifacts& a, const CreateRequest& r) {
  if (r.concept_probs) {
    if (r.dataset || r.instance_id) fail(ErrorCode::BadRequest, "give either inline concept_probs or a dataset instance");
    Dataset wrapper{a.space, {}, Split::Test};
    Json row{{"id", "inline"},
             {"concept_probs", *r.concept_probs},
             {"concept_true", std::vector<int>(a.space.concept_count(), 1)},
             {"label", 1}};
    std::istringstream in(row.dump());
    try {
      return parse_dataset(in, a.space).instances.at(0);
    } catch (const Error& e) {
      fail(ErrorCode::BadRequest, std::string("inline concept_probs: ") + e.what());
    }
  }
  if (!r.dataset || !r.instance_id) fail(ErrorCode::UnknownInstance, "a dataset and instance_id are required");
  auto ds = a.datasets.find(*r.dataset);
  if (ds == a.datasets.end()) fail(ErrorCode::UnknownInstance, "unknown dataset '" + *r.dataset + "'");
  for (const auto& inst : ds->second.instances) {
    if (inst.id == *r.instance_id) return inst;
  }
  fail(ErrorCode::UnknownInstance, "no instance '" + *r.instance_id + "' in dataset '" + *r.dataset + "'");
}

}  // namespace

Session::Session(std::string id, std::shared_ptr<const SessionArtifacts> artifacts, const CreateRequest& request)
    : id_(std::move(id)), artifacts_(std::move(artifacts)), request_(request) {
  const auto ids = artifacts_->policy_ids();
  if (std::find(ids.begin(), ids.end(), request_.policy) == ids.end()) {
    fail(ErrorCode::UnknownPolicy, "unknown or unavailable policy '" + request_.policy + "'");
  }
  if (!std::isfinite(request_.budget) || request_.budget < 0.0) fail(ErrorCode::BadBudget, "budget must be >= 0");
  instance_ = resolve_instance(*artifacts_, request_);
  costs_ = artifacts_->resolve_cost_model(request_.cost_model);
  policy_ = make_policy(request_.policy, artifacts_->coop ? &*artifacts_->coop : nullptr,
                        artifacts_->greedy ? &*artifacts_->greedy : nullptr);
  if (policy_->oracle() && request_.concept_probs) {
    fail(ErrorCode::UnknownPolicy, "policy '" + request_.policy + "' needs a dataset instance with ground truth");
  }
  state_ = std::make_unique<InterventionState>(artifacts_->space, instance_, artifacts_->model, costs_,
                                               artifacts_->calibration_ptr());
  rng_ = make_rng(request_.seed, 0);
  initial_dist_ = state_->label_dist();
  append(Json{{"type", "created"}, {"session_id", id_}, {"request", to_json(request_)}});
  advance();
}

void Session::append(Json event) {
  event["seq"] = events_.size();
  events_.push_back(std::move(event));
}

void Session::advance() {
  pending_.reset();
  if (finished_) return;
  const LoopDecision d = decide_next(*policy_, *state_, request_.budget, rng_);
  if (!d.acquire) {
    termination_ = d.termination;
    finished_ = true;
    return;
  }
  PendingQuery q;
  q.index = *d.acquire;
  q.cost = costs_.costs[q.index];
  if (const auto* coop = dynamic_cast<const CoopPolicy*>(policy_.get())) {
    q.breakdown = coop_select(*state_, coop->config()).second;
  }
  pending_ = std::move(q);
}

TrajectoryStep Session::answer(const std::string& concept_name, int value) {
  if (finished_) fail(ErrorCode::SessionFinished, "session " + id_ + " is finished");
  const auto& space = artifacts_->space;
  const auto it = std::find(space.concept_names.begin(), space.concept_names.end(), concept_name);
  if (it == space.concept_names.end()) fail(ErrorCode::WrongConcept, "unknown concept '" + concept_name + "'");
  const auto index = static_cast<std::size_t>(it - space.concept_names.begin());
  if (!pending_ || pending_->index != index) {
    fail(ErrorCode::WrongConcept, "concept '" + concept_name + "' is not the pending query");
  }
  if (value < 1 || value > space.arities[index]) {
    fail(ErrorCode::Arity, "value " + std::to_string(value) + " out of range 1.." + std::to_string(space.arities[index]));
  }
  state_->reveal(index, value - 1);
  TrajectoryStep step{index, costs_.costs[index], value - 1, state_->label_dist(), state_->top_label(), state_->spent()};
  steps_.push_back(step);
  append(Json{{"type", "answered"}, {"concept", concept_name}, {"value", value}});
  advance();
  return step;
}

void Session::finish() {
  if (finished_) return;
  finished_ = true;
  finished_by_client_ = true;
  pending_.reset();
  append(Json{{"type", "finished"}});
}

Trajectory Session::trajectory() const {
  Trajectory t;
  t.instance_id = instance_.id;
  t.initial_dist = initial_dist_;
  t.steps = steps_;
  t.final_dist = state_->label_dist();
  t.prediction = state_->top_label();
  t.spent = state_->spent();
  if (termination_) t.termination = *termination_;
  return t;
}

namespace {

Json status_fields(const Session& s) {
  Json j{{"session_id", s.id()}, {"status", s.finished() ? "finished" : "active"}};
  j["terminated_reason"] = s.termination() ? Json(termination_name(*s.termination())) : Json(nullptr);
  j["remaining_budget"] = s.remaining_budget();
  return j;
}

}  // namespace

Json Session::summary() const {
  Json j = status_fields(*this);
  j["policy"] = request_.policy;
  j["cost_model"] = request_.cost_model;
  j["budget"] = request_.budget;
  j["instance_id"] = instance_.id;
  j["top5"] = top_labels(state_->label_dist(), artifacts_->space);
  return j;
}

Json Session::next_query_view() const {
  Json j = status_fields(*this);
  if (!pending_) {
    j["finished"] = true;
    return j;
  }
  const auto& space = artifacts_->space;
  Json q{{"concept", space.concept_names[pending_->index]},
         {"arity", space.arities[pending_->index]},
         {"cost", pending_->cost}};
  q["score_breakdown"] = pending_->breakdown ? to_json(*pending_->breakdown, space) : Json(nullptr);
  j["finished"] = false;
  j["query"] = std::move(q);
  return j;
}

Json Session::full_view() const {
  Json j = summary();
  j["trajectory"] = to_json(trajectory(), artifacts_->space);
  j["trajectory"]["terminated_reason"] = termination_ ? Json(termination_name(*termination_)) : Json(nullptr);
  j["label_dist"] = state_->label_dist();
  j["finished_by_client"] = finished_by_client_;
  j["pending"] = next_query_view().value("query", Json(nullptr));
  j["event_count"] = events_.size();
  return j;
}

Json Session::final_view() const {
  Json j = status_fields(*this);
  j["prediction"] = artifacts_->space.label_names[state_->top_label()];
  j["label_dist"] = state_->label_dist();
  j["top5"] = top_labels(state_->label_dist(), artifacts_->space);
  j["spent"] = state_->spent();
  j["steps"] = steps_.size();
  j["finished_by_client"] = finished_by_client_;
  return j;
}

std::unique_ptr<Session> Session::replay(std::shared_ptr<const SessionArtifacts> artifacts,
                                         const std::vector<Json>& events) {
  if (events.empty() || events.front().value("type", "") != "created") {
    fail(ErrorCode::Parse, "event log must start with a created event");
  }
  const Json& created = events.front();
  auto session = std::make_unique<Session>(created.at("session_id").get<std::string>(), std::move(artifacts),
                                           create_request_from_json(created.at("request")));
  for (std::size_t n = 1; n < events.size(); ++n) {
    const Json& e = events[n];
    const std::string type = e.value("type", "");
    if (type == "answered") {
      session->answer(e.at("concept").get<std::string>(), e.at("value").get<int>());
    } else if (type == "finished") {
      session->finish();
    } else {
      fail(ErrorCode::Parse, "unknown event type '" + type + "'");
    }
  }
  return session;
}

// ---------------------------------------------------------------------------
// Manager

namespace {

std::vector<Json> read_events(const fs::path& log) {
  std::ifstream in(log);
  if (!in) fail(ErrorCode::ArtifactMissing, "cannot open " + log.string());
  std::vector<Json> events;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      events.push_back(Json::parse(line));
    } catch (const Json::exception& e) {
      fail(ErrorCode::Parse, log.string() + " line " + std::to_string(n) + ": " + e.what());
    }
  }
  return events;
}

}  // namespace

SessionManager::SessionManager(std::shared_ptr<const SessionArtifacts> artifacts, std::optional<fs::path> log_dir)
    : artifacts_(std::move(artifacts)), log_dir_(std::move(log_dir)) {
  if (!log_dir_) return;
  fs::create_directories(*log_dir_);
  std::vector<fs::path> logs;
  for (const auto& e : fs::directory_iterator(*log_dir_)) {
    if (e.path().extension() == ".jsonl") logs.push_back(e.path());
  }
  std::sort(logs.begin(), logs.end());
  for (const auto& log : logs) {
    auto entry = std::make_shared<Entry>();
    entry->session = replay_log(log);
    entry->logged = entry->session->events().size();
    const std::string& id = entry->session->id();
    if (id.size() > 1 && id[0] == 's') {
      try {
        next_id_ = std::max<std::uint64_t>(next_id_, std::stoull(id.substr(1)) + 1);
      } catch (const std::logic_error&) {
      }
    }
    sessions_.emplace(id, std::move(entry));
  }
}

std::unique_ptr<Session> SessionManager::replay_log(const fs::path& log) const {
  return Session::replay(artifacts_, read_events(log));
}

std::shared_ptr<SessionManager::Entry> SessionManager::find(const std::string& id) const {
  std::shared_lock lock(map_mutex_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) fail(ErrorCode::UnknownSession, "unknown session '" + id + "'");
  return it->second;
}

void SessionManager::flush_events(const std::string& id, Entry& entry) {
  const auto& events = entry.session->events();
  if (log_dir_ && entry.logged < events.size()) {
    std::ofstream out(*log_dir_ / (id + ".jsonl"), std::ios::app);
    if (!out) fail(ErrorCode::Io, "cannot append to the event log of " + id);
    for (std::size_t n = entry.logged; n < events.size(); ++n) out << events[n].dump() << '\n';
    out.flush();
    if (!out) fail(ErrorCode::Io, "event log write failed for " + id);
  }
  entry.logged = events.size();
}

Json SessionManager::create(const Json& request) {
  const CreateRequest r = create_request_from_json(request);
  std::string id;
  {
    std::unique_lock lock(map_mutex_);
    char buf[32];
    std::snprintf(buf, sizeof buf, "s%06llu", static_cast<unsigned long long>(next_id_++));
    id = buf;
  }
  auto entry = std::make_shared<Entry>();
  std::lock_guard entry_lock(entry->mutex);
  entry->session = std::make_unique<Session>(id, artifacts_, r);
  flush_events(id, *entry);
  {
    std::unique_lock lock(map_mutex_);
    sessions_.emplace(id, entry);
  }
  return entry->session->summary();
}

Json SessionManager::next_query(const std::string& id) {
  auto entry = find(id);
  std::lock_guard lock(entry->mutex);
  return entry->session->next_query_view();
}

Json SessionManager::answer(const std::string& id, const Json& body) {
  auto entry = find(id);
  if (!body.is_object() || !body.contains("concept") || !body.at("concept").is_string() || !body.contains("value") ||
      !body.at("value").is_number_integer()) {
    fail(ErrorCode::BadRequest, "answer needs {concept: string, value: integer}");
  }
  std::lock_guard lock(entry->mutex);
  Session& s = *entry->session;
  const TrajectoryStep step = s.answer(body.at("concept").get<std::string>(), body.at("value").get<int>());
  flush_events(id, *entry);
  Json j = s.summary();
  j["step"] = to_json(step, artifacts_->space);
  j["next"] = s.next_query_view();
  return j;
}

Json SessionManager::get(const std::string& id) {
  auto entry = find(id);
  std::lock_guard lock(entry->mutex);
  return entry->session->full_view();
}

Json SessionManager::finish(const std::string& id) {
  auto entry = find(id);
  std::lock_guard lock(entry->mutex);
  entry->session->finish();
  flush_events(id, *entry);
  return entry->session->final_view();
}

Json SessionManager::catalog() const {
  Json datasets = Json::array();
  for (const auto& [name, ds] : artifacts_->datasets) {
    Json ids = Json::array();
    for (const auto& inst : ds.instances) ids.push_back(inst.id);
    datasets.push_back({{"name", name}, {"size", ds.size()}, {"instance_ids", ids}});
  }
  Json costs = Json::array();
  for (const auto& [name, model] : artifacts_->cost_models) {
    costs.push_back({{"id", name}, {"kind", cost_kind_name(model.kind)}, {"total", model.total()}});
  }
  return Json{{"datasets", datasets},
              {"policies", artifacts_->policy_ids()},
              {"cost_models", costs},
              {"concept_space", to_json(artifacts_->space)},
              {"model", {{"architecture", architecture_name(artifacts_->model.architecture)},
                         {"input_dim", artifacts_->model.input_dim},
                         {"label_count", artifacts_->model.label_count}}},
              {"calibrated", artifacts_->calibration.has_value()}};
}

Json SessionManager::health() const {
  std::shared_lock lock(map_mutex_);
  return Json{{"status", "ok"}, {"sessions", sessions_.size()}};
}

// ---------------------------------------------------------------------------
// HTTP

int http_status(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::UnknownSession:
    case ErrorCode::UnknownInstance:
      return 404;
    case ErrorCode::WrongConcept:
    case ErrorCode::SessionFinished:
      return 409;
    case ErrorCode::Internal:
    case ErrorCode::Io:
      return 500;
    default:
      return 400;
  }
}

namespace {

template <typename F>
void respond(httplib::Response& res, int ok_status, F&& body) {
  Json out;
  try {
    out = body();
    res.status = ok_status;
  } catch (const Error& e) {
    out = Json{{"code", error_name(e.code())}, {"message", e.what()}};
    res.status = http_status(e.code());
  } catch (const Json::exception& e) {
    out = Json{{"code", error_name(ErrorCode::BadRequest)}, {"message", e.what()}};
    res.status = 400;
  } catch (const std::exception& e) {
    out = Json{{"code", error_name(ErrorCode::Internal)}, {"message", e.what()}};
    res.status = 500;
  }
  res.set_content(out.dump(), "application/json");
}

Json parse_body(const httplib::Request& req) {
  try {
    return Json::parse(req.body);
  } catch (const Json::exception& e) {
    fail(ErrorCode::BadRequest, std::string("request body is not JSON: ") + e.what());
  }
}

}  // namespace

void register_routes(httplib::Server& server, SessionManager& manager) {
  server.Post("/v1/sessions", [&manager](const httplib::Request& req, httplib::Response& res) {
    respond(res, 201, [&] { return manager.create(parse_body(req)); });
  });
  server.Get(R"(/v1/sessions/([^/]+)/next)", [&manager](const httplib::Request& req, httplib::Response& res) {
    respond(res, 200, [&] { return manager.next_query(req.matches[1]); });
  });
  server.Post(R"(/v1/sessions/([^/]+)/answer)", [&manager](const httplib::Request& req, httplib::Response& res) {
    respond(res, 200, [&] { return manager.answer(req.matches[1], parse_body(req)); });
  });
  server.Post(R"(/v1/sessions/([^/]+)/finish)", [&manager](const httplib::Request& req, httplib::Response& res) {
    respond(res, 200, [&] { return manager.finish(req.matches[1]); });
  });
  server.Get(R"(/v1/sessions/([^/]+))", [&manager](const httplib::Request& req, httplib::Response& res) {
    respond(res, 200, [&] { return manager.get(req.matches[1]); });
  });
  server.Get("/v1/catalog", [&manager](const httplib::Request&, httplib::Response& res) {
    respond(res, 200, [&] { return manager.catalog(); });
  });
  server.Get("/v1/health", [&manager](const httplib::Request&, httplib::Response& res) {
    respond(res, 200, [&] { return manager.health(); });
  });
}

}  // namespace coop
