#include "mi_skills/cli.hpp"

#include "mi_skills/orchestrator.hpp"
#include "mi_skills/replay.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

namespace mi_skills::cli {

namespace {

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<double> to_std(const Vec& v) { return {v.data(), v.data() + v.size()}; }

double angle_deg(const Vec& a, const Vec& b) {
  const double c = a.dot(b) / (a.norm() * b.norm());
  return std::acos(std::clamp(c, -1.0, 1.0)) * 180.0 / std::numbers::pi;
}

std::string env_signature(const RunConfig& c) {
  return c.env.kind + "/" + std::to_string(c.env.horizon) + "/" + fmt(c.env.step_size) + "/" +
         fmt(c.env.arena_half_width) + "/" + fmt(c.env.reset_half_width) + "/" + fmt(c.env.terminate_radius) + "/" +
         std::to_string(c.skill_dim);
}

}  // namespace

std::filesystem::path output_root() {
  if (const char* v = std::getenv("MI_SKILLS_OUT"); v && *v) return v;
  return std::filesystem::current_path();
}

RunConfig resolve_train_config(const TrainOptions& opts) {
  RunConfig cfg = load_config(opts.config_path, opts.preset);
  if (opts.seed) cfg.seed = *opts.seed;
  if (opts.sync) {
    cfg.sync = true;
    cfg.collectors = 1;
    cfg.lockstep = false;
  }
  cfg.validate();
  return cfg;
}

std::filesystem::path run_directory(const RunConfig& cfg) {
  std::filesystem::path base(cfg.output_dir);
  if (base.is_relative()) base = output_root() / base;
  return base / (cfg.preset + "-seed" + std::to_string(cfg.seed));
}

std::filesystem::path train_config(const RunConfig& cfg) {
  const auto dir = run_directory(cfg);
  std::filesystem::create_directories(dir);
  write_file(dir / "config.resolved", format_config(cfg));
  nlohmann::json manifest;
  manifest["format_version"] = kManifestFormatVersion;
  manifest["config_hash"] = config_hash(cfg);
  manifest["config"] = "config.resolved";
  manifest["seed"] = cfg.seed;
  manifest["preset"] = cfg.preset;
  manifest["started"] = utc_now();
  const auto result = orchestrator::run(cfg, dir);
  manifest["finished"] = utc_now();
  manifest["metrics"] = result.metrics_path.filename().string();
  manifest["timing"] = "timing.csv";
  manifest["replay_dump"] = result.dump_path.filename().string();
  std::vector<std::string> ckpts;
  for (const auto& p : result.checkpoints) ckpts.push_back(p.filename().string());
  manifest["checkpoints"] = ckpts;
  manifest["rounds"] = result.rounds;
  manifest["samples"] = result.samples;
  manifest["dropped_episodes"] = result.dropped_episodes;
  manifest["crashed_collectors"] = result.crashed_collectors;
  manifest["max_staleness"] = result.max_staleness;
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
  return dir;
}

std::filesystem::path cmd_train(const TrainOptions& opts) { return train_config(resolve_train_config(opts)); }

std::vector<std::size_t> max_separated_subset(const std::vector<Vec>& directions, double min_deg) {
  const std::size_t n = directions.size();
  auto ok = [&](std::size_t i, std::size_t j) { return angle_deg(directions[i], directions[j]) >= min_deg; };
  std::vector<std::size_t> best;
  if (n <= 20) {
    std::vector<std::uint32_t> compat(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j || ok(i, j)) compat[i] |= 1u << j;
      }
    }
    std::uint32_t best_mask = 0;
    for (std::uint32_t mask = 1; mask < (1u << n); ++mask) {
      if (std::popcount(mask) <= std::popcount(best_mask)) continue;
      bool valid = true;
      for (std::size_t i = 0; i < n && valid; ++i) {
        if ((mask >> i & 1u) && (mask & ~compat[i])) valid = false;
      }
      if (valid) best_mask = mask;
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (best_mask >> i & 1u) best.push_back(i);
    }
    return best;
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (std::all_of(best.begin(), best.end(), [&](std::size_t j) { return ok(i, j); })) best.push_back(i);
  }
  return best;
}

nlohmann::json cmd_eval_skills(const EvalOptions& opts) {
  if (opts.count < 1) throw ConfigError("--count must be >= 1");
  if (opts.horizon < 1) throw ConfigError("--horizon must be >= 1");
  const auto models = orchestrator::load_models(opts.ckpt);
  const envs::Environment& env = *models.env;
  Rng rng = make_rng(opts.seed, 7);
  nlohmann::json skills = nlohmann::json::array();
  std::vector<Vec> displacements;
  std::vector<double> mags;
  for (std::size_t k = 0; k < opts.count; ++k) {
    const SkillVector z = dads::sample_prior(models.config.skill_dim, rng);
    envs::State s = env.reset(rng);
    Vec disp = Vec::Zero(static_cast<Eigen::Index>(env.spec().reduced_dim));
    for (int t = 0; t < opts.horizon; ++t) {
      const Vec a = models.actor->mean_action(s.x, z.values());
      const auto step = env.step(s, std::span<const double>(a.data(), static_cast<std::size_t>(a.size())));
      disp += env.reduced_delta(s, step.next_state);
      s = step.next_state;
      if (step.terminated) break;
    }
    displacements.push_back(disp);
    mags.push_back(disp.norm());
    skills.push_back({{"skill", to_std(z.values())}, {"displacement", to_std(disp)}, {"magnitude", disp.norm()}});
  }
  double mean = 0.0;
  for (double m : mags) mean += m / static_cast<double>(mags.size());
  double var = 0.0;
  for (double m : mags) var += (m - mean) * (m - mean) / static_cast<double>(mags.size());

  constexpr int kBins = 12;
  std::vector<int> hist(kBins, 0);
  for (std::size_t i = 0; i < displacements.size(); ++i) {
    for (std::size_t j = i + 1; j < displacements.size(); ++j) {
      if (mags[i] == 0.0 || mags[j] == 0.0) continue;
      const double deg = angle_deg(displacements[i], displacements[j]);
      hist[std::min(kBins - 1, static_cast<int>(deg / (180.0 / kBins)))] += 1;
    }
  }
  std::vector<std::size_t> moving;
  std::vector<Vec> dirs;
  for (std::size_t i = 0; i < displacements.size(); ++i) {
    if (mags[i] >= opts.min_displacement) {
      moving.push_back(i);
      dirs.push_back(displacements[i]);
    }
  }
  std::vector<std::size_t> subset;
  for (std::size_t i : max_separated_subset(dirs, opts.min_separation_deg)) subset.push_back(moving[i]);

  nlohmann::json report;
  report["checkpoint"] = opts.ckpt;
  report["count"] = opts.count;
  report["horizon"] = opts.horizon;
  report["skills"] = skills;
  report["mean_magnitude"] = mean;
  report["std_magnitude"] = std::sqrt(var);
  std::vector<double> edges;
  for (int b = 0; b <= kBins; ++b) edges.push_back(180.0 / kBins * b);
  report["angle_histogram"] = {{"edges_deg", edges}, {"counts", hist}};
  report["min_separation_deg"] = opts.min_separation_deg;
  report["min_displacement"] = opts.min_displacement;
  report["separated_skills"] = subset;
  report["separated_count"] = subset.size();
  return report;
}

std::string trajectory_csv(const planner::MpcResult& result, std::size_t reduced_dim, std::size_t skill_dim) {
  std::string out = "step";
  for (std::size_t i = 0; i < reduced_dim; ++i) out += ",r" + std::to_string(i);
  for (std::size_t i = 0; i < skill_dim; ++i) out += ",z" + std::to_string(i);
  out += ",distance\n";
  for (const auto& row : result.trajectory) {
    out += std::to_string(row.step);
    for (Eigen::Index i = 0; i < row.reduced.size(); ++i) out += "," + fmt(row.reduced[i]);
    for (std::size_t i = 0; i < skill_dim; ++i) {
      out += row.skill.size() ? "," + fmt(row.skill[static_cast<Eigen::Index>(i)]) : ",";
    }
    out += "," + fmt(row.distance) + "\n";
  }
  return out;
}

PlanReport cmd_plan(const PlanOptions& opts) {
  opts.plan.validate();
  const auto models = orchestrator::load_models(opts.ckpt);
  const envs::Environment& env = *models.env;
  if (static_cast<std::size_t>(opts.goal.size()) != env.spec().reduced_dim) {
    throw ConfigError("goal has " + std::to_string(opts.goal.size()) + " coordinates, environment expects " +
                      std::to_string(env.spec().reduced_dim));
  }
  Rng start_rng = make_rng(opts.seed, 11);
  Rng plan_rng = make_rng(opts.seed, 12);
  const envs::State start = env.reset(start_rng);
  const planner::Goal goal{opts.goal, env.spec().wraps};
  PlanReport report;
  report.result = planner::mpc_execute(env, *models.actor, planner::model_predictor(*models.dynamics), start, goal,
                                       opts.plan, plan_rng);
  report.csv = trajectory_csv(report.result, env.spec().reduced_dim, models.config.skill_dim);
  return report;
}

nlohmann::json cmd_diag(const DiagOptions& opts) {
  const auto models = orchestrator::load_models(opts.ckpt);
  replay::DumpHeader header;
  const std::vector<Transition> rows = replay::load_dump(opts.dump, &header);
  if (!rows.empty() && (header.state_dim != models.actor->state_dim() || header.skill_dim != models.actor->skill_dim() ||
                        header.action_dim != models.actor->action_dim())) {
    throw ConfigError("replay dump dimensions do not match the checkpoint");
  }
  std::vector<double> logp_cur(rows.size());
  std::vector<double> logp_beh(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    logp_cur[i] = models.actor->log_prob(rows[i].s.x, rows[i].z.values(), rows[i].a);
    logp_beh[i] = rows[i].logp_behavior;
  }

  nlohmann::json report;
  report["checkpoint"] = opts.ckpt;
  report["dump"] = opts.dump;
  report["transitions"] = rows.size();
  nlohmann::json clipped = nlohmann::json::array();
  for (double alpha : {1.0, 10.0}) {
    std::vector<double> w(rows.size());
    std::size_t at_boundary = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      w[i] = dads::is_weight(logp_cur[i], rows[i].logp_behavior, alpha);
      if (w[i] == alpha || w[i] == 1.0 / alpha) ++at_boundary;
    }
    nlohmann::json entry;
    entry["alpha"] = alpha;
    if (!w.empty()) {
      std::vector<double> sorted = w;
      std::sort(sorted.begin(), sorted.end());
      double sum = 0.0;
      for (double v : w) sum += v;
      entry["mean"] = sum / static_cast<double>(w.size());
      entry["min"] = sorted.front();
      entry["max"] = sorted.back();
      entry["median"] = sorted[sorted.size() / 2];
      entry["boundary_fraction"] = static_cast<double>(at_boundary) / static_cast<double>(w.size());
      constexpr int kBins = 10;
      const double lo = std::log(1.0 / alpha);
      const double hi = std::log(alpha);
      std::vector<int> counts(kBins, 0);
      for (double v : w) {
        const int b = hi > lo ? static_cast<int>((std::log(v) - lo) / (hi - lo) * kBins) : 0;
        counts[std::clamp(b, 0, kBins - 1)] += 1;
      }
      entry["log_weight_histogram"] = {{"lo", lo}, {"hi", hi}, {"counts", counts}};
    }
    clipped.push_back(entry);
  }
  report["clipped"] = clipped;

  nlohmann::json episodes = nlohmann::json::array();
  std::size_t overflow_episodes = 0;
  for (std::size_t begin = 0; begin < rows.size();) {
    std::size_t end = begin;
    while (end < rows.size() && rows[end].episode_id == rows[begin].episode_id) ++end;
    const auto cum = dads::cumulative_ratio_weights(std::span<const double>(logp_cur.data() + begin, end - begin),
                                                    std::span<const double>(logp_beh.data() + begin, end - begin));
    std::vector<double> ws;
    bool overflow = false;
    for (const auto& c : cum) {
      ws.push_back(c.weight);
      overflow = overflow || c.overflow;
    }
    overflow_episodes += overflow ? 1 : 0;
    episodes.push_back({{"episode_id", rows[begin].episode_id},
                        {"length", end - begin},
                        {"partial", rows[begin].s.t != 0},
                        {"weights", ws},
                        {"overflow", overflow}});
    begin = end;
  }
  report["cumulative"] = episodes;
  report["episodes"] = episodes.size();
  report["overflow_episodes"] = overflow_episodes;
  return report;
}

Curve read_reward_curve(const std::filesystem::path& metrics_csv) {
  std::istringstream in(read_file(metrics_csv));
  std::string line;
  if (!std::getline(in, line) || line != orchestrator::kMetricsHeader) {
    throw std::runtime_error(metrics_csv.string() + ": unexpected metrics header");
  }
  Curve c;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cols.push_back(cell);
    if (cols.size() < 3) throw std::runtime_error(metrics_csv.string() + ": malformed row");
    if (cols[2] == "nan") continue;
    c.samples.push_back(std::stod(cols[1]));
    c.values.push_back(std::stod(cols[2]));
  }
  return c;
}

double interpolate(const Curve& c, double x) {
  if (c.samples.empty()) throw std::runtime_error("empty curve");
  if (x < c.samples.front() || x > c.samples.back()) throw std::out_of_range("interpolation outside curve range");
  const auto it = std::lower_bound(c.samples.begin(), c.samples.end(), x);
  const auto k = static_cast<std::size_t>(it - c.samples.begin());
  if (c.samples[k] == x || k == 0) return c.values[k];
  const double x0 = c.samples[k - 1], x1 = c.samples[k];
  const double t = (x - x0) / (x1 - x0);
  return c.values[k - 1] + t * (c.values[k] - c.values[k - 1]);
}

PlotData cmd_plot_data(const std::vector<std::string>& run_dirs) {
  if (run_dirs.empty()) throw ConfigError("plot-data needs at least one run directory");
  struct Run {
    std::string dir;
    std::string variant;
    Curve curve;
  };
  std::vector<Run> runs;
  std::string signature;
  for (const auto& d : run_dirs) {
    const std::filesystem::path dir(d);
    const RunConfig cfg = parse_config(read_file(dir / "config.resolved"));
    const std::string sig = env_signature(cfg);
    if (runs.empty()) {
      signature = sig;
    } else if (sig != signature) {
      throw ConfigError("run " + d + " uses a different environment than " + runs.front().dir);
    }
    Run r{d, cfg.preset, read_reward_curve(dir / "metrics.csv")};
    if (r.curve.samples.empty()) throw std::runtime_error("run " + d + " has an empty metrics body");
    runs.push_back(std::move(r));
  }
  double lo = runs.front().curve.samples.front();
  double hi = runs.front().curve.samples.back();
  for (const auto& r : runs) {
    lo = std::max(lo, r.curve.samples.front());
    hi = std::min(hi, r.curve.samples.back());
  }
  if (lo > hi) throw std::runtime_error("runs have no overlapping sample range");
  std::vector<double> grid;
  for (const auto& r : runs) {
    for (double x : r.curve.samples) {
      if (x >= lo && x <= hi) grid.push_back(x);
    }
  }
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  PlotData out;
  out.curves_csv = "variant,run,samples,mean_intrinsic_reward\n";
  std::map<std::string, std::vector<std::vector<double>>> by_variant;
  for (const auto& r : runs) {
    std::vector<double> ys;
    for (double x : grid) {
      const double y = interpolate(r.curve, x);
      ys.push_back(y);
      out.curves_csv += r.variant + "," + r.dir + "," + fmt(x) + "," + fmt(y) + "\n";
    }
    by_variant[r.variant].push_back(std::move(ys));
  }
  out.aggregate_csv = "variant,samples,median,min,max\n";
  for (const auto& [variant, curves] : by_variant) {
    for (std::size_t g = 0; g < grid.size(); ++g) {
      std::vector<double> v;
      for (const auto& c : curves) v.push_back(c[g]);
      std::sort(v.begin(), v.end());
      const std::size_t m = v.size();
      const double median = m % 2 ? v[m / 2] : 0.5 * (v[m / 2 - 1] + v[m / 2]);
      out.aggregate_csv += variant + "," + fmt(grid[g]) + "," + fmt(median) + "," + fmt(v.front()) + "," +
                           fmt(v.back()) + "\n";
    }
  }
  return out;
}

}  // namespace mi_skills::cli
