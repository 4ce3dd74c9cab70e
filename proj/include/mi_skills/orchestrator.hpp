#pragma once

#include "mi_skills/checkpoint.hpp"
#include "mi_skills/config.hpp"
#include "mi_skills/dads.hpp"
#include "mi_skills/envs.hpp"
#include "mi_skills/replay.hpp"
#include "mi_skills/sac.hpp"
#include "mi_skills/transition.hpp"

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace mi_skills::orchestrator {

struct PolicySnapshot {
  std::shared_ptr<const sac::Actor> actor;
  std::int64_t version = 0;
};

struct EpisodeMessage {
  std::vector<Transition> transitions;
  SkillVector z;
  std::size_t collector_id = 0;
  std::int64_t version = 0;
  bool fault = false;
  std::string fault_reason;
};

// Runs one episode with a fresh prior skill and the snapshot's stochastic policy.
// Environment exceptions are caught and reported through the fault flag.
EpisodeMessage collect_episode(const envs::Environment& env, const PolicySnapshot& snapshot, std::size_t skill_dim,
                               Rng& rng, std::size_t collector_id = 0, std::int64_t episode_id = 0);

struct RoundState {
  std::int64_t s = 0;  // samples received when the last round started
  std::int64_t n = 0;  // samples received in total
  std::int64_t newsteps = 500;
  std::int64_t min_new_episodes = 0;
  std::int64_t episodes_since_round = 0;

  bool ready() const { return n >= s + newsteps && episodes_since_round >= min_new_episodes; }
};

struct RoundMetrics {
  std::int64_t round = 0;
  std::int64_t samples = 0;
  double mean_intrinsic_reward = 0.0;    // over every relabeled row of the round's policy batches
  double dynamics_log_likelihood = 0.0;  // mean log q over the round's dynamics batches, before each step
  double mean_is_weight = 0.0;
  double max_is_weight = 0.0;
  std::int64_t snapshot_version = 0;
  std::int64_t max_staleness = 0;  // largest version gap among episodes consumed this round
};

inline constexpr const char* kMetricsHeader =
    "round,samples,mean_intrinsic_reward,dynamics_log_likelihood,mean_is_weight,max_is_weight,snapshot_version,"
    "max_staleness";
std::string format_metrics_row(const RoundMetrics& m);

// Sole owner of all learnable state and the replay buffer.
class Trainer {
 public:
  explicit Trainer(const RunConfig& cfg);

  const RunConfig& config() const { return cfg_; }
  const envs::Environment& env() const { return *env_; }
  const sac::Actor& actor() const { return *actor_; }
  const sac::CriticPair& critics() const { return critics_; }
  const dads::DynamicsModel& dynamics() const { return dynamics_; }
  const replay::ReplayBuffer& buffer() const { return buffer_; }
  const RoundState& round_state() const { return round_; }
  std::int64_t version() const { return version_; }
  std::int64_t rounds() const { return rounds_; }
  std::int64_t dropped_episodes() const { return dropped_; }

  // Adds a message's transitions to replay. Faulty messages are dropped and counted.
  // Throws if the message claims a version newer than the trainer's.
  void ingest(const EpisodeMessage& msg);
  bool ready() const { return round_.ready(); }

  // One gated round: T_q dynamics steps, then T_pi SAC steps, then s <- n and a new snapshot.
  // On any exception the learnable state is restored to the round start before rethrowing.
  RoundMetrics train_round();

  PolicySnapshot snapshot() const { return snapshot_; }

  io::Checkpoint to_checkpoint() const;
  void save_checkpoint(const std::filesystem::path& path) const;

 private:
  Trainer(const RunConfig& cfg, Rng init);
  struct Learnables;
  Learnables capture() const;
  void restore(Learnables&& saved);
  void publish();

  RunConfig cfg_;
  std::unique_ptr<envs::Environment> env_;
  std::shared_ptr<sac::Actor> actor_;
  nn::AdamState actor_opt_;
  sac::CriticPair critics_;
  dads::DynamicsModel dynamics_;
  nn::AdamState dynamics_opt_;
  replay::ReplayBuffer buffer_;
  Rng rng_;
  RoundState round_;
  std::int64_t version_ = 0;
  std::int64_t rounds_ = 0;
  std::int64_t dropped_ = 0;
  std::int64_t max_staleness_ = 0;
  PolicySnapshot snapshot_;
};

// Models recovered from a checkpoint for evaluation and planning.
struct LoadedModels {
  RunConfig config;
  std::unique_ptr<envs::Environment> env;
  std::unique_ptr<sac::Actor> actor;
  std::unique_ptr<dads::DynamicsModel> dynamics;
  std::int64_t version = 0;
};

LoadedModels load_models(const std::filesystem::path& path);

// Bounded multi-producer queue; push blocks while full, pop blocks while empty and open.
class EpisodeQueue {
 public:
  explicit EpisodeQueue(std::size_t capacity);
  bool push(EpisodeMessage msg);  // false once closed
  std::optional<EpisodeMessage> pop();  // empty once closed and drained
  void close();
  std::size_t size() const;

 private:
  std::size_t capacity_;
  mutable std::mutex mu_;
  std::condition_variable not_full_, not_empty_;
  std::deque<EpisodeMessage> items_;
  bool closed_ = false;
};

// Latest-wins holder of the published snapshot.
class SnapshotMailbox {
 public:
  void publish(PolicySnapshot s);
  PolicySnapshot latest() const;

 private:
  mutable std::mutex mu_;
  PolicySnapshot snap_;
};

struct RunResult {
  std::filesystem::path metrics_path;
  std::filesystem::path dump_path;
  std::vector<std::filesystem::path> checkpoints;
  std::int64_t rounds = 0;
  std::int64_t samples = 0;
  std::int64_t dropped_episodes = 0;
  std::int64_t crashed_collectors = 0;
  std::int64_t max_staleness = 0;
};

// Trains until the sample budget is met, writing metrics.csv, timing.csv, checkpoints and a
// final replay dump into out_dir.
RunResult run(const RunConfig& cfg, const std::filesystem::path& out_dir);

}  // namespace mi_skills::orchestrator
