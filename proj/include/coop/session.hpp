#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "coop/cbm.hpp"
#include "coop/concept_data.hpp"
#include "coop/errors.hpp"
#include "coop/policies.hpp"
#include "coop/rollout.hpp"

namespace httplib {
class Server;
}

namespace coop {

/// Everything a service instance serves from, loaded once at startup and
/// shared read-only by all sessions.
struct SessionArtifacts {
  ConceptSpace space;
  ConceptToLabelModel model;
  std::optional<CalibrationMap> calibration;
  std::optional<PolicyConfig> coop;
  std::optional<GreedyOrder> greedy;
  std::map<std::string, Dataset> datasets;
  std::map<std::string, CostModel> cost_models;

  /// Reads space.json, model.json and optional calibration.json, coop.json,
  /// greedy.json, *.jsonl datasets and costs/*.json from `dir`.
  static SessionArtifacts load(const std::filesystem::path& dir);

  [[nodiscard]] const CalibrationMap* calibration_ptr() const noexcept {
    return calibration ? &*calibration : nullptr;
  }
  [[nodiscard]] std::vector<std::string> policy_ids() const;
  /// Named cost model, or "random:SEED"; throws UnknownCostModelError.
  [[nodiscard]] CostModel resolve_cost_model(const std::string& id) const;
};

struct CreateRequest {
  std::optional<std::string> dataset;
  std::optional<std::string> instance_id;
  /// Inline distributions; the session then has no ground truth.
  std::optional<std::vector<std::vector<double>>> concept_probs;
  std::string policy;
  double budget = 0.0;
  std::string cost_model = "unit";
  std::uint64_t seed = 0;
};

Json to_json(const CreateRequest& request);
CreateRequest create_request_from_json(const Json& j);

/// One human-in-the-loop rollout. Every transition appends an event; replaying
/// the events through a fresh session reproduces the state exactly.
class Session {
 public:
  struct PendingQuery {
    std::size_t index = 0;
    double cost = 0.0;
    std::optional<ScoreBreakdown> breakdown;
  };

  Session(std::string id, std::shared_ptr<const SessionArtifacts> artifacts, const CreateRequest& request);
  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  [[nodiscard]] const std::string& id() const noexcept { return id_; }
  [[nodiscard]] bool finished() const noexcept { return finished_; }
  [[nodiscard]] const std::optional<PendingQuery>& pending() const noexcept { return pending_; }
  [[nodiscard]] std::optional<Termination> termination() const noexcept { return termination_; }
  [[nodiscard]] double remaining_budget() const noexcept { return request_.budget - state_->spent(); }
  [[nodiscard]] const InterventionState& state() const noexcept { return *state_; }
  [[nodiscard]] const std::vector<Json>& events() const noexcept { return events_; }
  [[nodiscard]] Trajectory trajectory() const;

  /// Applies the human's value for the pending concept. `value` is 1-based.
  /// Throws WrongConceptError, ArityError or SessionFinishedError; the state
  /// is unchanged on error.
  TrajectoryStep answer(const std::string& concept_name, int value);

  /// Ends the session; idempotent.
  void finish();

  [[nodiscard]] Json summary() const;
  [[nodiscard]] Json next_query_view() const;
  [[nodiscard]] Json full_view() const;
  [[nodiscard]] Json final_view() const;

  /// Rebuilds a session from its event log.
  static std::unique_ptr<Session> replay(std::shared_ptr<const SessionArtifacts> artifacts,
                                         const std::vector<Json>& events);

 private:
  void advance();
  void append(Json event);

  std::string id_;
  std::shared_ptr<const SessionArtifacts> artifacts_;
  CreateRequest request_;
  Instance instance_;
  CostModel costs_;
  std::unique_ptr<Policy> policy_;
  std::unique_ptr<InterventionState> state_;
  Rng rng_;
  std::vector<double> initial_dist_;
  std::vector<TrajectoryStep> steps_;
  std::optional<PendingQuery> pending_;
  std::optional<Termination> termination_;
  bool finished_ = false;
  bool finished_by_client_ = false;
  std::vector<Json> events_;
};

/// Top entries of a label distribution as [{label, probability}], ties to
/// the lower index.
Json top_labels(const std::vector<double>& dist, const ConceptSpace& space, std::size_t limit = 5);

/// Thread-safe registry of sessions with per-session serialization and
/// optional JSON-lines event logs.
class SessionManager {
 public:
  SessionManager(std::shared_ptr<const SessionArtifacts> artifacts, std::optional<std::filesystem::path> log_dir);

  Json create(const Json& request);
  Json next_query(const std::string& id);
  Json answer(const std::string& id, const Json& body);
  Json get(const std::string& id);
  Json finish(const std::string& id);
  [[nodiscard]] Json catalog() const;
  [[nodiscard]] Json health() const;

  /// Rebuilds one session from a log file.
  [[nodiscard]] std::unique_ptr<Session> replay_log(const std::filesystem::path& log) const;

 private:
  struct Entry {
    std::mutex mutex;
    std::unique_ptr<Session> session;
    std::size_t logged = 0;
  };

  std::shared_ptr<Entry> find(const std::string& id) const;
  void flush_events(const std::string& id, Entry& entry);

  std::shared_ptr<const SessionArtifacts> artifacts_;
  std::optional<std::filesystem::path> log_dir_;
  mutable std::shared_mutex map_mutex_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
  std::uint64_t next_id_ = 1;
};

/// HTTP status for an error category.
int http_status(ErrorCode code) noexcept;

/// Registers the /v1 routes on `server`.
void register_routes(httplib::Server& server, SessionManager& manager);

}  // namespace coop
