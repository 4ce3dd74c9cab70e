#include "mi_skills/transition.hpp"

#include <cmath>

namespace mi_skills {

SkillVector::SkillVector(Vec z) : z_(std::move(z)) {
  for (Eigen::Index i = 0; i < z_.size(); ++i) {
    if (!std::isfinite(z_[i]) || z_[i] < -1.0 || z_[i] > 1.0) {
      throw ConfigError("skill coordinate " + std::to_string(i) + " is outside [-1, 1]");
    }
  }
}

}  // namespace mi_skills
