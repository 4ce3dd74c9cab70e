#pragma once

#include "mi_skills/envs.hpp"

#include <cstdint>
#include <string>

namespace mi_skills {

// A latent skill in [-1, 1]^d, fixed for a whole episode.
class SkillVector {
 public:
  SkillVector() = default;
  explicit SkillVector(Vec z);

  const Vec& values() const { return z_; }
  std::size_t dim() const { return static_cast<std::size_t>(z_.size()); }
  double operator[](std::size_t i) const { return z_[static_cast<Eigen::Index>(i)]; }
  bool operator==(const SkillVector& o) const { return z_ == o.z_; }

 private:
  Vec z_;
};

// One environment step as stored in replay. No reward field; rewards are recomputed from the current model.
struct Transition {
  envs::State s;
  SkillVector z;
  Vec a;
  envs::State s_next;
  double logp_behavior = 0.0;  // log pi_c(a | s, z) at collection time
  bool done = false;           // last step of its episode
  bool terminal = false;       // premature, absorbing termination
  std::int64_t policy_version = 0;
  std::int64_t episode_id = 0;
};

}  // namespace mi_skills
