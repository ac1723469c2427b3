#pragma once

#include <array>
#include <utility>

#include "gopo/core.hpp"

namespace gopo {

struct RewardConfig {
  std::array<double, kNumDimensions> dim_weights{0.2, 0.4, 0.2, 0.2};
  double w_expert_min = 0.2;
  double w_expert_max = 0.8;
  double w_csa_floor = 0.05;
  // Zero the relevance of repeated predicted skills. Off reproduces the raw
  // DCG sum, which rewards repetition.
  bool dedupe_predictions = true;

  void validate() const;  // throws ConfigError
  bool operator==(const RewardConfig&) const = default;
};

struct JointWeights {
  double expert = 0.0;
  double csa = 0.0;
};

/// Graded relevance of `skill` against the teacher sequence: n - pos + 1 for
/// the first (1-based) occurrence, 0 when absent.
int relevance(SkillId skill, const SkillSequence& teacher);

/// Discounted cumulative gain of `pred`, log base 2 position discount.
double dcg(const SkillSequence& pred, const SkillSequence& teacher, bool dedupe);

/// DCG of the teacher sequence against itself.
double ideal_dcg(const SkillSequence& teacher);

/// Normalized DCG of a predicted skill sequence; the expert's per-turn reward.
/// An empty teacher yields 1 for an empty prediction and 0 otherwise.
double esndcg(const SkillSequence& pred, const SkillSequence& teacher, bool dedupe);

/// Weighted sum of the judge's dimension scores. Throws InputError when a
/// score lies outside [0, 1].
double csa_reward(const DimScores& dim_scores, const RewardConfig& cfg);

/// Turn-dependent weights: the expert weight rises linearly from w_expert_min
/// at turn 1 to w_expert_max at the horizon; the agent weight is
/// max(1 - w_expert, floor) and therefore never reaches zero.
JointWeights joint_weights(int turn, int horizon, const RewardConfig& cfg);

double joint_reward(double r_expert, double r_csa, JointWeights w);

}  // namespace gopo
