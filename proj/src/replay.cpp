#include "mi_skills/replay.hpp"

#include "mi_skills/checkpoint.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

namespace mi_skills::replay {

namespace {

constexpr char kMagic[8] = {'M', 'I', 'S', 'K', 'R', 'P', 'L', '1'};

void write_vec(std::ostream& out, const Vec& v, std::uint32_t dim, const char* what) {
  if (v.size() != static_cast<Eigen::Index>(dim)) throw ConfigError(std::string("dump row has wrong ") + what + " width");
  for (Eigen::Index i = 0; i < v.size(); ++i) io::write_f64(out, v[i]);
}

Vec read_vec(std::istream& in, std::uint32_t dim) {
  Vec v(static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = io::read_f64(in);
  return v;
}

}  // namespace

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ConfigError("replay capacity must be >= 1");
}

void ReplayBuffer::add_episode(std::span<const Transition> episode) {
  if (episode.empty()) throw ConfigError("cannot add an episode with zero transitions");
  for (const auto& t : episode) {
    if (!(t.z == episode.front().z) || t.policy_version != episode.front().policy_version) {
      throw ConfigError("episode rows disagree on skill or policy version");
    }
    if (!std::isfinite(t.logp_behavior)) throw NumericError("behavior log-probability is not finite");
  }
  for (const auto& t : episode) {
    if (data_.size() < capacity_) {
      data_.push_back(t);
    } else {
      data_[cursor_] = t;
      cursor_ = (cursor_ + 1) % capacity_;
    }
    ++total_;
  }
}

std::size_t ReplayBuffer::physical(std::size_t i) const {
  if (i >= data_.size()) throw std::out_of_range("replay index " + std::to_string(i) + " out of range");
  return data_.size() < capacity_ ? i : (cursor_ + i) % capacity_;
}

const Transition& ReplayBuffer::at(std::size_t i) const { return data_[physical(i)]; }

std::uint64_t ReplayBuffer::sequence(std::size_t i) const {
  if (i >= data_.size()) throw std::out_of_range("replay index " + std::to_string(i) + " out of range");
  return total_ - data_.size() + i;
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t count, Rng& rng) const {
  if (data_.empty()) throw ConfigError("cannot sample from an empty replay buffer");
  std::uniform_int_distribution<std::size_t> pick(0, data_.size() - 1);
  std::vector<std::size_t> idx(count);
  for (auto& i : idx) i = pick(rng);
  return idx;
}

std::vector<Transition> ReplayBuffer::sample_uniform(std::size_t count, Rng& rng) const {
  std::vector<Transition> out;
  out.reserve(count);
  for (std::size_t i : sample_indices(count, rng)) out.push_back(at(i));
  return out;
}

void ReplayBuffer::clear() {
  data_.clear();
  cursor_ = 0;
}

Vec relabel(std::span<const Transition> batch, const dads::RewardContext& ctx) {
  Vec r(static_cast<Eigen::Index>(batch.size()));
  for (std::size_t j = 0; j < batch.size(); ++j) {
    r[static_cast<Eigen::Index>(j)] = dads::intrinsic_reward(ctx, batch[j].s, batch[j].z, batch[j].s_next);
  }
  return r;
}

Vec weight_batch(std::span<const Transition> batch, const sac::Actor& current, double alpha) {
  Vec w(static_cast<Eigen::Index>(batch.size()));
  for (std::size_t j = 0; j < batch.size(); ++j) {
    const Transition& t = batch[j];
    w[static_cast<Eigen::Index>(j)] =
        dads::is_weight(current.log_prob(t.s.x, t.z.values(), t.a), t.logp_behavior, alpha);
  }
  return w;
}

sac::SacBatch to_sac_batch(std::span<const Transition> batch, const Vec& rewards) {
  if (batch.empty()) throw ConfigError("empty SAC batch");
  if (rewards.size() != static_cast<Eigen::Index>(batch.size())) throw ConfigError("reward count does not match batch");
  const auto n = static_cast<Eigen::Index>(batch.size());
  const Eigen::Index ds = batch[0].s.x.size();
  const Eigen::Index dz = batch[0].z.values().size();
  const Eigen::Index da = batch[0].a.size();
  sac::SacBatch b{Mat(n, ds), Mat(n, dz), Mat(n, da), Mat(n, ds), rewards, Vec(n)};
  for (Eigen::Index r = 0; r < n; ++r) {
    const Transition& t = batch[static_cast<std::size_t>(r)];
    b.states.row(r) = t.s.x.transpose();
    b.skills.row(r) = t.z.values().transpose();
    b.actions.row(r) = t.a.transpose();
    b.next_states.row(r) = t.s_next.x.transpose();
    b.terminal[r] = t.terminal ? 1.0 : 0.0;
  }
  return b;
}

// Record: s (f64 x state_dim), s.t (u32), z, a, s' (f64 x state_dim), s'.t (u32),
// logp_behavior (f64), flags (u32: bit 0 done, bit 1 terminal), policy_version (u64), episode_id (u64).
void write_dump(std::ostream& out, const DumpHeader& h, std::span<const Transition> rows) {
  out.write(kMagic, sizeof kMagic);
  io::write_u32(out, kDumpFormatVersion);
  io::write_u32(out, h.state_dim);
  io::write_u32(out, h.skill_dim);
  io::write_u32(out, h.action_dim);
  io::write_u64(out, rows.size());
  for (const auto& t : rows) {
    write_vec(out, t.s.x, h.state_dim, "state");
    io::write_u32(out, static_cast<std::uint32_t>(t.s.t));
    write_vec(out, t.z.values(), h.skill_dim, "skill");
    write_vec(out, t.a, h.action_dim, "action");
    write_vec(out, t.s_next.x, h.state_dim, "state");
    io::write_u32(out, static_cast<std::uint32_t>(t.s_next.t));
    io::write_f64(out, t.logp_behavior);
    io::write_u32(out, (t.done ? 1u : 0u) | (t.terminal ? 2u : 0u));
    io::write_u64(out, static_cast<std::uint64_t>(t.policy_version));
    io::write_u64(out, static_cast<std::uint64_t>(t.episode_id));
  }
  if (!out) throw std::runtime_error("failed writing replay dump");
}

std::vector<Transition> read_dump(std::istream& in, DumpHeader* header) {
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || !std::equal(magic, magic + 8, kMagic)) throw std::runtime_error("not a replay dump");
  const std::uint32_t version = io::read_u32(in);
  if (version != kDumpFormatVersion) {
    throw std::runtime_error("unsupported replay dump version " + std::to_string(version));
  }
  DumpHeader h;
  h.state_dim = io::read_u32(in);
  h.skill_dim = io::read_u32(in);
  h.action_dim = io::read_u32(in);
  const std::uint64_t count = io::read_u64(in);
  std::vector<Transition> rows;
  for (std::uint64_t k = 0; k < count; ++k) {
    Transition t;
    t.s.x = read_vec(in, h.state_dim);
    t.s.t = static_cast<int>(io::read_u32(in));
    t.z = SkillVector(read_vec(in, h.skill_dim));
    t.a = read_vec(in, h.action_dim);
    t.s_next.x = read_vec(in, h.state_dim);
    t.s_next.t = static_cast<int>(io::read_u32(in));
    t.logp_behavior = io::read_f64(in);
    if (!std::isfinite(t.logp_behavior)) {
      throw std::runtime_error("replay dump row " + std::to_string(k) + " is missing its behavior log-probability");
    }
    const std::uint32_t flags = io::read_u32(in);
    t.done = flags & 1u;
    t.terminal = flags & 2u;
    t.policy_version = static_cast<std::int64_t>(io::read_u64(in));
    t.episode_id = static_cast<std::int64_t>(io::read_u64(in));
    rows.push_back(std::move(t));
  }
  if (header) *header = h;
  return rows;
}

void save_dump(const std::filesystem::path& path, const ReplayBuffer& buffer) {
  std::vector<Transition> rows;
  rows.reserve(buffer.size());
  for (std::size_t i = 0; i < buffer.size(); ++i) rows.push_back(buffer.at(i));
  DumpHeader h;
  if (!rows.empty()) {
    h.state_dim = static_cast<std::uint32_t>(rows[0].s.x.size());
    h.skill_dim = static_cast<std::uint32_t>(rows[0].z.dim());
    h.action_dim = static_cast<std::uint32_t>(rows[0].a.size());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_dump(out, h, rows);
}

std::vector<Transition> load_dump(const std::filesystem::path& path, DumpHeader* header) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open replay dump " + path.string());
  return read_dump(in, header);
}

}  // namespace mi_skills::replay
