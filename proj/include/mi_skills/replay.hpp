#pragma once

#include "mi_skills/dads.hpp"
#include "mi_skills/sac.hpp"
#include "mi_skills/transition.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

namespace mi_skills::replay {

// Fixed-capacity FIFO store. Index 0 is the oldest retained transition.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return data_.size(); }
  std::uint64_t total_inserted() const { return total_; }
  bool empty() const { return data_.empty(); }

  // Appends in step order, evicting the oldest when full. Throws on an empty episode
  // or one whose rows disagree on skill or policy version.
  void add_episode(std::span<const Transition> episode);

  const Transition& at(std::size_t i) const;
  // Insertion sequence number of the transition at logical index i (0 for the first ever inserted).
  std::uint64_t sequence(std::size_t i) const;

  // i.i.d. uniform logical indices, with replacement.
  std::vector<std::size_t> sample_indices(std::size_t count, Rng& rng) const;
  std::vector<Transition> sample_uniform(std::size_t count, Rng& rng) const;

  void clear();

 private:
  std::size_t physical(std::size_t i) const;
  std::size_t capacity_;
  std::vector<Transition> data_;
  std::size_t cursor_ = 0;  // next physical slot to overwrite once full
  std::uint64_t total_ = 0;
};

// Rewards for a batch under the given context; one intrinsic_reward call per row.
Vec relabel(std::span<const Transition> batch, const dads::RewardContext& ctx);

// Clipped importance weights of the current actor against each row's behavior log-probability.
Vec weight_batch(std::span<const Transition> batch, const sac::Actor& current, double alpha);

// Assembles the SAC view of a batch with the given rewards.
sac::SacBatch to_sac_batch(std::span<const Transition> batch, const Vec& rewards);

// Binary transition log: "MISKRPL1", u32 version, u32 state/skill/action dims, u64 count,
// then fixed-width records (see replay.cpp). Behavior log-probabilities must be finite.
inline constexpr std::uint32_t kDumpFormatVersion = 1;

struct DumpHeader {
  std::uint32_t state_dim = 0;
  std::uint32_t skill_dim = 0;
  std::uint32_t action_dim = 0;
};

void write_dump(std::ostream& out, const DumpHeader& header, std::span<const Transition> rows);
std::vector<Transition> read_dump(std::istream& in, DumpHeader* header = nullptr);
void save_dump(const std::filesystem::path& path, const ReplayBuffer& buffer);
std::vector<Transition> load_dump(const std::filesystem::path& path, DumpHeader* header = nullptr);

}  // namespace mi_skills::replay
