#include "gopo/rewards.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace gopo {

void RewardConfig::validate() const {
  double sum = 0.0;
  for (double a : dim_weights) {
    if (!(a >= 0.0)) throw ConfigError("reward.dim_weights must be non-negative");
    sum += a;
  }
  if (std::abs(sum - 1.0) > 1e-12) throw ConfigError("reward.dim_weights must sum to 1");
  if (!(w_expert_min > 0.0 && w_expert_min <= w_expert_max && w_expert_max < 1.0)) {
    throw ConfigError("reward weights need 0 < w_expert_min <= w_expert_max < 1");
  }
  if (!(w_csa_floor > 0.0)) throw ConfigError("reward.w_csa_floor must be positive");
}

int relevance(SkillId skill, const SkillSequence& teacher) {
  const auto& ids = teacher.ids();
  auto it = std::find(ids.begin(), ids.end(), skill);
  if (it == ids.end()) return 0;
  const int n = static_cast<int>(ids.size());
  const int index = static_cast<int>(it - ids.begin()) + 1;
  return n - index + 1;
}

namespace {

double gain(int rel, std::size_t position) {
  return (std::exp2(rel) - 1.0) / std::log2(static_cast<double>(position) + 2.0);
}

}  // namespace

double dcg(const SkillSequence& pred, const SkillSequence& teacher, bool dedupe) {
  double total = 0.0;
  const auto& ids = pred.ids();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const bool repeat = dedupe && std::find(ids.begin(), ids.begin() + static_cast<long>(i), ids[i]) !=
                                      ids.begin() + static_cast<long>(i);
    total += gain(repeat ? 0 : relevance(ids[i], teacher), i);
  }
  return total;
}

double ideal_dcg(const SkillSequence& teacher) { return dcg(teacher, teacher, false); }

double esndcg(const SkillSequence& pred, const SkillSequence& teacher, bool dedupe) {
  if (teacher.empty()) return pred.empty() ? 1.0 : 0.0;
  return dcg(pred, teacher, dedupe) / ideal_dcg(teacher);
}

double csa_reward(const DimScores& dim_scores, const RewardConfig& cfg) {
  double r = 0.0;
  for (std::size_t i = 0; i < kNumDimensions; ++i) {
    if (!(dim_scores[i] >= 0.0 && dim_scores[i] <= 1.0)) {
      throw InputError("dimension score S" + std::to_string(i + 1) + " outside [0, 1]");
    }
    r += cfg.dim_weights[i] * dim_scores[i];
  }
  // The weights sum to 1 only up to rounding.
  return std::clamp(r, 0.0, 1.0);
}

JointWeights joint_weights(int turn, int horizon, const RewardConfig& cfg) {
  if (horizon < 1 || turn < 1 || turn > horizon) {
    throw InputError("turn " + std::to_string(turn) + " outside [1, " + std::to_string(horizon) + "]");
  }
  double w_expert = cfg.w_expert_min;
  if (horizon > 1) {
    w_expert += (cfg.w_expert_max - cfg.w_expert_min) * static_cast<double>(turn - 1) /
                static_cast<double>(horizon - 1);
  }
  return {w_expert, std::max(1.0 - w_expert, cfg.w_csa_floor)};
}

double joint_reward(double r_expert, double r_csa, JointWeights w) {
  return w.expert * r_expert + w.csa * r_csa;
}

}  // namespace gopo
