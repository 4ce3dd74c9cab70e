#include "mi_skills/orchestrator.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <thread>

namespace mi_skills::orchestrator {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string fmt_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string rng_text(const Rng& rng) {
  std::ostringstream out;
  out << rng;
  return out.str();
}

void add_adam(io::Checkpoint& ck, const std::string& name, const nn::AdamState& opt) {
  ck.add_floats(name + "/adam_m", opt.m);
  ck.add_floats(name + "/adam_v", opt.v);
  ck.add_floats(name + "/adam_t", {static_cast<double>(opt.t)});
}

}  // namespace

EpisodeMessage collect_episode(const envs::Environment& env, const PolicySnapshot& snapshot, std::size_t skill_dim,
                               Rng& rng, std::size_t collector_id, std::int64_t episode_id) {
  if (!snapshot.actor) throw ConfigError("collector has no policy snapshot");
  const sac::Actor& actor = *snapshot.actor;
  EpisodeMessage msg;
  msg.collector_id = collector_id;
  msg.version = snapshot.version;
  try {
    msg.z = dads::sample_prior(skill_dim, rng);
    envs::State s = env.reset(rng);
    msg.transitions.reserve(static_cast<std::size_t>(env.spec().horizon));
    for (;;) {
      const nn::SquashedSample draw = actor.sample(s.x, msg.z.values(), rng);
      const double logp = actor.log_prob(s.x, msg.z.values(), draw.action);
      const envs::StepResult step =
          env.step(s, std::span<const double>(draw.action.data(), static_cast<std::size_t>(draw.action.size())));
      Transition t;
      t.s = s;
      t.z = msg.z;
      t.a = draw.action;
      t.s_next = step.next_state;
      t.logp_behavior = logp;
      t.done = step.done;
      t.terminal = step.terminated;
      t.policy_version = snapshot.version;
      t.episode_id = episode_id;
      msg.transitions.push_back(std::move(t));
      if (step.done) break;
      s = step.next_state;
    }
  } catch (const std::exception& e) {
    msg.fault = true;
    msg.fault_reason = e.what();
  }
  return msg;
}

std::string format_metrics_row(const RoundMetrics& m) {
  return std::to_string(m.round) + "," + std::to_string(m.samples) + "," + fmt_double(m.mean_intrinsic_reward) + "," +
         fmt_double(m.dynamics_log_likelihood) + "," + fmt_double(m.mean_is_weight) + "," +
         fmt_double(m.max_is_weight) + "," + std::to_string(m.snapshot_version) + "," +
         std::to_string(m.max_staleness);
}

struct Trainer::Learnables {
  nn::ParamVector actor;
  nn::AdamState actor_opt;
  sac::CriticPair critics;
  nn::ParamVector dynamics;
  nn::AdamState dynamics_opt;
  Rng rng;
};

Trainer::Trainer(const RunConfig& cfg) : Trainer(cfg, make_rng(cfg.seed, 0)) {}

Trainer::Trainer(const RunConfig& cfg, Rng init)
    : cfg_((cfg.validate(), cfg)),
      env_(envs::make_environment(cfg.env)),
      actor_(std::make_shared<sac::Actor>(env_->spec().state_dim, cfg.skill_dim, env_->spec().action_dim, cfg.hidden,
                                          init)),
      actor_opt_(nn::AdamState::for_size(actor_->params().size(), cfg.learner.lr_actor)),
      critics_(sac::CriticPair::create(env_->spec().state_dim, env_->spec().action_dim, cfg.skill_dim, cfg.hidden,
                                       cfg.learner.lr_critic, init)),
      dynamics_(env_->spec().reduced_dim, cfg.skill_dim, cfg.dynamics_hidden, init),
      dynamics_opt_(nn::AdamState::for_size(dynamics_.params().size(), cfg.lr_dynamics)),
      buffer_(cfg.replay_capacity),
      rng_(make_rng(cfg.seed, 1)) {
  round_.newsteps = cfg.newsteps;
  round_.min_new_episodes = cfg.min_new_episodes;
  publish();
}

void Trainer::publish() { snapshot_ = PolicySnapshot{std::make_shared<const sac::Actor>(*actor_), version_}; }

void Trainer::ingest(const EpisodeMessage& msg) {
  if (msg.fault || msg.transitions.empty()) {
    ++dropped_;
    return;
  }
  if (msg.version > version_) {
    throw std::logic_error("episode claims policy version " + std::to_string(msg.version) + " ahead of trainer version " +
                           std::to_string(version_));
  }
  for (const auto& t : msg.transitions) {
    if (t.policy_version != msg.version) throw std::logic_error("transition version differs from its message");
  }
  buffer_.add_episode(msg.transitions);
  max_staleness_ = std::max(max_staleness_, version_ - msg.version);
  round_.n += static_cast<std::int64_t>(msg.transitions.size());
  ++round_.episodes_since_round;
}

Trainer::Learnables Trainer::capture() const {
  return {actor_->params(), actor_opt_, critics_, dynamics_.params(), dynamics_opt_, rng_};
}

void Trainer::restore(Learnables&& saved) {
  actor_->params() = std::move(saved.actor);
  actor_opt_ = std::move(saved.actor_opt);
  critics_ = std::move(saved.critics);
  dynamics_.params() = std::move(saved.dynamics);
  dynamics_opt_ = std::move(saved.dynamics_opt);
  rng_ = saved.rng;
}

RoundMetrics Trainer::train_round() {
  if (!ready()) throw std::logic_error("train_round called before the gating condition holds");
  Learnables saved = capture();
  try {
    RoundMetrics m;
    const std::size_t size = buffer_.size();
    const auto fresh = static_cast<std::size_t>(std::min<std::int64_t>(round_.n - round_.s, static_cast<std::int64_t>(size)));

    double ll_sum = 0.0;
    double w_sum = 0.0;
    double w_max = kNaN;
    std::size_t w_count = 0;
    std::vector<Transition> rows;
    for (std::size_t i = 0; i < cfg_.dynamics_steps; ++i) {
      rows.clear();
      Vec w;
      if (cfg_.onpolicy_dynamics) {
        std::uniform_int_distribution<std::size_t> pick(size - fresh, size - 1);
        for (std::size_t k = 0; k < cfg_.dynamics_batch; ++k) rows.push_back(buffer_.at(pick(rng_)));
        w = Vec::Ones(static_cast<Eigen::Index>(rows.size()));
      } else {
        for (std::size_t k : buffer_.sample_indices(cfg_.dynamics_batch, rng_)) rows.push_back(buffer_.at(k));
        w = replay::weight_batch(rows, *actor_, cfg_.is_clip);
      }
      const std::vector<double> wv(w.data(), w.data() + w.size());
      dads::DynamicsStats stats;
      try {
        stats = dads::dynamics_update(dynamics_, dynamics_opt_, dads::make_dynamics_batch(*env_, rows, wv));
      } catch (const NumericError& e) {
        throw NumericError("dynamics batch " + std::to_string(i) + ": " + e.what());
      }
      ll_sum += stats.mean_log_prob;
      w_sum += w.sum();
      w_max = w_count == 0 ? w.maxCoeff() : std::max(w_max, w.maxCoeff());
      w_count += rows.size();
    }
    if (!dynamics_.params().all_finite()) throw NumericError("dynamics parameters became non-finite");

    double r_sum = 0.0;
    std::size_t r_count = 0;
    if (cfg_.learner.steps_per_round > 0) {
      const dads::RewardContext ctx(dynamics_, *env_, dads::sample_priors(cfg_.prior_samples, cfg_.skill_dim, rng_));
      // Per-row reward memo, valid for this round's model and priors.
      std::vector<double> memo(size, kNaN);
      for (std::size_t i = 0; i < cfg_.learner.steps_per_round; ++i) {
        rows.clear();
        Vec rewards(static_cast<Eigen::Index>(cfg_.learner.batch_size));
        Eigen::Index j = 0;
        for (std::size_t k : buffer_.sample_indices(cfg_.learner.batch_size, rng_)) {
          const Transition& t = buffer_.at(k);
          if (std::isnan(memo[k])) memo[k] = dads::intrinsic_reward(ctx, t.s, t.z, t.s_next);
          rewards[j++] = memo[k];
          rows.push_back(t);
        }
        const sac::SacBatch batch = replay::to_sac_batch(rows, rewards);
        const Vec y = sac::critic_targets(batch, *actor_, critics_, cfg_.learner, rng_);
        sac::critic_update(critics_, batch, y);
        sac::actor_update(*actor_, actor_opt_, critics_, batch, cfg_.learner, rng_);
        sac::target_update(critics_, cfg_.learner.tau);
        r_sum += rewards.sum();
        r_count += rows.size();
      }
      if (!actor_->params().all_finite() || !critics_.q1.all_finite() || !critics_.q2.all_finite()) {
        throw NumericError("policy or critic parameters became non-finite");
      }
    }

    round_.s = round_.n;
    round_.episodes_since_round = 0;
    ++rounds_;
    ++version_;
    publish();

    m.round = rounds_;
    m.samples = round_.n;
    m.mean_intrinsic_reward = r_count ? r_sum / static_cast<double>(r_count) : kNaN;
    m.dynamics_log_likelihood = cfg_.dynamics_steps ? ll_sum / static_cast<double>(cfg_.dynamics_steps) : kNaN;
    m.mean_is_weight = w_count ? w_sum / static_cast<double>(w_count) : kNaN;
    m.max_is_weight = w_max;
    m.snapshot_version = version_;
    m.max_staleness = max_staleness_;
    max_staleness_ = 0;
    return m;
  } catch (...) {
    restore(std::move(saved));
    throw;
  }
}

io::Checkpoint Trainer::to_checkpoint() const {
  io::Checkpoint ck;
  ck.add_text("config", format_config(cfg_));
  ck.add_text("config_hash", config_hash(cfg_));
  ck.add_params("actor", actor_->params());
  add_adam(ck, "actor", actor_opt_);
  ck.add_params("critic/q1", critics_.q1);
  ck.add_params("critic/q2", critics_.q2);
  ck.add_params("critic/target1", critics_.target1);
  ck.add_params("critic/target2", critics_.target2);
  add_adam(ck, "critic/q1", critics_.opt1);
  add_adam(ck, "critic/q2", critics_.opt2);
  ck.add_params("dynamics", dynamics_.params());
  add_adam(ck, "dynamics", dynamics_opt_);
  std::ostringstream rs;
  rs << "s " << round_.s << "\nn " << round_.n << "\nnewsteps " << round_.newsteps << "\nmin_new_episodes "
     << round_.min_new_episodes << "\nepisodes_since_round " << round_.episodes_since_round << "\nversion " << version_
     << "\nrounds " << rounds_ << "\ndropped " << dropped_ << "\n";
  ck.add_text("round_state", rs.str());
  ck.add_text("rng/trainer", rng_text(rng_));
  return ck;
}

void Trainer::save_checkpoint(const std::filesystem::path& path) const { to_checkpoint().save(path); }

LoadedModels load_models(const std::filesystem::path& path) {
  const io::Checkpoint ck = io::Checkpoint::load(path);
  LoadedModels out;
  out.config = parse_config(ck.text("config"));
  if (config_hash(out.config) != ck.text("config_hash")) {
    throw ConfigError(path.string() + ": config hash does not match the stored config");
  }
  out.env = envs::make_environment(out.config.env);
  const auto& spec = out.env->spec();
  out.actor = std::make_unique<sac::Actor>(spec.state_dim, out.config.skill_dim, spec.action_dim, ck.params("actor"));
  out.dynamics = std::make_unique<dads::DynamicsModel>(spec.reduced_dim, out.config.skill_dim, ck.params("dynamics"));
  std::istringstream rs(ck.text("round_state"));
  std::string key;
  std::int64_t value = 0;
  while (rs >> key >> value) {
    if (key == "version") out.version = value;
  }
  return out;
}

EpisodeQueue::EpisodeQueue(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ConfigError("queue capacity must be >= 1");
}

bool EpisodeQueue::push(EpisodeMessage msg) {
  std::unique_lock lock(mu_);
  not_full_.wait(lock, [&] { return closed_ || items_.size() < capacity_; });
  if (closed_) return false;
  items_.push_back(std::move(msg));
  not_empty_.notify_one();
  return true;
}

std::optional<EpisodeMessage> EpisodeQueue::pop() {
  std::unique_lock lock(mu_);
  not_empty_.wait(lock, [&] { return closed_ || !items_.empty(); });
  if (items_.empty()) return std::nullopt;
  EpisodeMessage msg = std::move(items_.front());
  items_.pop_front();
  not_full_.notify_one();
  return msg;
}

void EpisodeQueue::close() {
  std::lock_guard lock(mu_);
  closed_ = true;
  not_full_.notify_all();
  not_empty_.notify_all();
}

std::size_t EpisodeQueue::size() const {
  std::lock_guard lock(mu_);
  return items_.size();
}

void SnapshotMailbox::publish(PolicySnapshot s) {
  std::lock_guard lock(mu_);
  if (snap_.actor && s.version <= snap_.version) throw std::logic_error("snapshot versions must strictly increase");
  snap_ = std::move(s);
}

PolicySnapshot SnapshotMailbox::latest() const {
  std::lock_guard lock(mu_);
  return snap_;
}

namespace {

class RunWriter {
 public:
  RunWriter(const RunConfig& cfg, const std::filesystem::path& dir) : cfg_(cfg), dir_(dir) {
    std::filesystem::create_directories(dir);
    metrics_.open(dir / "metrics.csv", std::ios::trunc);
    timing_.open(dir / "timing.csv", std::ios::trunc);
    if (!metrics_ || !timing_) throw std::runtime_error("cannot create metrics files in " + dir.string());
    metrics_ << kMetricsHeader << "\n" << std::flush;
    timing_ << "round,samples,wall_seconds\n" << std::flush;
    start_ = std::chrono::steady_clock::now();
    result.metrics_path = dir / "metrics.csv";
  }

  void row(const RoundMetrics& m) {
    metrics_ << format_metrics_row(m) << "\n" << std::flush;
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    timing_ << m.round << "," << m.samples << "," << fmt_double(secs) << "\n" << std::flush;
    result.max_staleness = std::max(result.max_staleness, m.max_staleness);
  }

  void checkpoint(const Trainer& trainer, const std::string& name, const std::vector<Rng>& collector_rngs) {
    io::Checkpoint ck = trainer.to_checkpoint();
    for (std::size_t i = 0; i < collector_rngs.size(); ++i) {
      ck.add_text("rng/collector" + std::to_string(i), rng_text(collector_rngs[i]));
    }
    const auto path = dir_ / name;
    ck.save(path);
    result.checkpoints.push_back(path);
  }

  void after_round(const Trainer& trainer, const RoundMetrics& m, const std::vector<Rng>& collector_rngs) {
    row(m);
    if (cfg_.checkpoint_every > 0 && m.round % cfg_.checkpoint_every == 0) {
      char name[32];
      std::snprintf(name, sizeof name, "ckpt_r%06lld.bin", static_cast<long long>(m.round));
      checkpoint(trainer, name, collector_rngs);
    }
  }

  RunResult result;

 private:
  const RunConfig& cfg_;
  std::filesystem::path dir_;
  std::ofstream metrics_, timing_;
  std::chrono::steady_clock::time_point start_;
};

constexpr int kMaxConsecutiveFaults = 100;

void run_sync(const RunConfig& cfg, Trainer& trainer, RunWriter& out) {
  const auto env = trainer.env().clone();
  std::vector<Rng> rngs{make_rng(cfg.seed, 1000)};
  std::int64_t episode = 0;
  int faults = 0;
  while (trainer.round_state().n < cfg.sample_budget) {
    const EpisodeMessage msg = collect_episode(*env, trainer.snapshot(), cfg.skill_dim, rngs[0], 0, episode++);
    faults = msg.fault ? faults + 1 : 0;
    if (faults >= kMaxConsecutiveFaults) throw std::runtime_error("collector keeps failing: " + msg.fault_reason);
    trainer.ingest(msg);
    if (trainer.ready()) out.after_round(trainer, trainer.train_round(), rngs);
  }
}

void run_async(const RunConfig& cfg, Trainer& trainer, RunWriter& out) {
  const std::size_t n_collectors = cfg.collectors;
  EpisodeQueue queue(cfg.queue_capacity);
  SnapshotMailbox mailbox;
  mailbox.publish(trainer.snapshot());
  std::vector<Rng> rngs;
  for (std::size_t c = 0; c < n_collectors; ++c) rngs.push_back(make_rng(cfg.seed, 1000 + c));

  std::atomic<std::size_t> alive{n_collectors};
  std::atomic<std::int64_t> crashed{0};
  std::atomic<bool> stop{false};
  std::mutex ack_mu;
  std::condition_variable ack_cv;
  std::vector<std::int64_t> processed(n_collectors, 0);

  auto collector = [&](std::size_t c) {
    try {
      const auto env = trainer.env().clone();
      for (std::int64_t k = 0; !stop; ++k) {
        EpisodeMessage msg = collect_episode(*env, mailbox.latest(), cfg.skill_dim, rngs[c], c,
                                             k * static_cast<std::int64_t>(n_collectors) + static_cast<std::int64_t>(c));
        if (!queue.push(std::move(msg))) break;
        if (cfg.lockstep) {
          std::unique_lock lock(ack_mu);
          ack_cv.wait(lock, [&] { return stop || processed[c] > k; });
        }
      }
    } catch (...) {
      ++crashed;
    }
    if (--alive == 0) queue.close();
  };

  std::vector<std::thread> threads;
  auto shutdown = [&] {
    stop = true;
    queue.close();
    ack_cv.notify_all();
    for (auto& t : threads) t.join();
    threads.clear();
  };
  try {
    for (std::size_t c = 0; c < n_collectors; ++c) threads.emplace_back(collector, c);
    while (trainer.round_state().n < cfg.sample_budget) {
      std::optional<EpisodeMessage> msg = queue.pop();
      if (!msg) throw std::runtime_error("all collectors stopped before the sample budget was reached");
      const std::size_t c = msg->collector_id;
      trainer.ingest(*msg);
      if (trainer.ready()) {
        const RoundMetrics m = trainer.train_round();
        mailbox.publish(trainer.snapshot());
        out.after_round(trainer, m, {});
      }
      if (cfg.lockstep) {
        std::lock_guard lock(ack_mu);
        ++processed[c];
        ack_cv.notify_all();
      }
    }
  } catch (...) {
    shutdown();
    throw;
  }
  shutdown();
  out.result.crashed_collectors = crashed;
}

}  // namespace

RunResult run(const RunConfig& cfg, const std::filesystem::path& out_dir) {
  cfg.validate();
  Trainer trainer(cfg);
  RunWriter out(cfg, out_dir);
  out.checkpoint(trainer, "ckpt_initial.bin", {});
  if (cfg.sync) {
    run_sync(cfg, trainer, out);
  } else {
    run_async(cfg, trainer, out);
  }
  if (trainer.rounds() > 0) out.checkpoint(trainer, "final.bin", {});
  out.result.dump_path = out_dir / "replay.bin";
  replay::save_dump(out.result.dump_path, trainer.buffer());
  out.result.rounds = trainer.rounds();
  out.result.samples = trainer.round_state().n;
  out.result.dropped_episodes = trainer.dropped_episodes();
  return out.result;
}

}  // namespace mi_skills::orchestrator
