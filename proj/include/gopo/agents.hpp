#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "gopo/core.hpp"
#include "gopo/neural.hpp"
#include "gopo/simenv.hpp"

namespace gopo {

/// Sizes of the dialogue spaces the agents featurize, taken from an EnvConfig.
struct DialogueSpace {
  std::size_t pool_size = 0;
  std::size_t num_intents = 0;
  std::size_t num_emotions = 0;
  std::size_t num_markers = 0;
  std::size_t num_order_statuses = 0;
  std::size_t vocab_size = 0;
  std::size_t history_window = 1;
  std::size_t max_response_length = 1;
  int horizon = 1;
  std::vector<MarkerId> token_markers;
  std::vector<std::vector<MarkerId>> skill_markers;

  static DialogueSpace from(const EnvConfig& cfg);
  bool operator==(const DialogueSpace&) const = default;
};

/// Expert state encoding: one-hot intent, one-hot emotion, multi-hot previous
/// skills, marker histogram over the history window, one-hot phase and the
/// turn index divided by the horizon.
std::vector<double> expert_features(const DialogueSpace& space, const ExpertState& state);

struct ExpertAction {
  SkillSequence skills;
  double log_prob = 0.0;
  double entropy = 0.0;  // sum of the per-slot entropies along the chosen path
};

struct LossResult {
  double loss = 0.0;
  ParameterVector grad;
};

/// Skill planner. The actor picks skills slot by slot from the pool plus a
/// STOP symbol; after five skills the sequence closes without a STOP decision.
/// The critic is a separate scalar network over the same state encoding.
class ExpertPolicy {
 public:
  ExpertPolicy(DialogueSpace space, std::size_t hidden, double entropy_coeff, std::mt19937_64& rng);
  // Every parameter zero: uniform slot distributions and a zero critic.
  ExpertPolicy(DialogueSpace space, std::size_t hidden, double entropy_coeff);

  std::size_t stop_symbol() const noexcept { return space_.pool_size; }

  ExpertAction act(const ExpertState& state, std::mt19937_64& rng, bool greedy) const;

  /// Distribution over pool + STOP for the slot following `prefix`.
  std::vector<double> slot_distribution(const ExpertState& state, const SkillSequence& prefix) const;
  double log_prob(const ExpertState& state, const SkillSequence& action) const;

  /// -advantage * log pi(a|s) - entropy_coeff * H, with H the summed per-slot
  /// entropy along `action`. The gradient is with respect to the actor.
  LossResult loss(const ExpertState& state, const SkillSequence& action, double advantage) const;

  double value(const ExpertState& state) const;
  /// (V(s) - target)^2; the target is treated as a constant.
  LossResult critic_loss(const ExpertState& state, double target) const;

  Mlp& actor() noexcept { return actor_; }
  const Mlp& actor() const noexcept { return actor_; }
  Mlp& critic() noexcept { return critic_; }
  const Mlp& critic() const noexcept { return critic_; }
  double entropy_coeff() const noexcept { return entropy_coeff_; }
  const DialogueSpace& space() const noexcept { return space_; }

 private:
  std::vector<double> actor_input(const std::vector<double>& state_features, const SkillSequence& prefix,
                                  std::size_t slot) const;

  DialogueSpace space_;
  double entropy_coeff_;
  Mlp actor_;
  Mlp critic_;
};

struct CsaLossWeights {
  double policy = 1.0;      // lambda_p
  double compliance = 0.5;  // lambda_s
  double diversity = 0.01;  // lambda_d
};

struct CsaAction {
  Response response;
  double log_prob = 0.0;
  std::vector<double> token_entropies;
};

struct CsaLossComponents {
  double policy = 0.0;      // -r * log pi(a|s)
  double compliance = 0.0;  // 1 - expected marker coverage
  double diversity = 0.0;   // summed negative entropy of the step distributions
};

struct CsaLossResult {
  double loss = 0.0;
  ParameterVector grad;
  CsaLossComponents components;
};

/// Autoregressive response generator over the vocabulary plus END. END is
/// unavailable at the first step so every response has at least one token.
/// The skill constraint only reaches the policy through its features.
class CsaPolicy {
 public:
  CsaPolicy(DialogueSpace space, std::size_t hidden, CsaLossWeights weights, std::mt19937_64& rng);
  CsaPolicy(DialogueSpace space, std::size_t hidden, CsaLossWeights weights);

  std::size_t end_symbol() const noexcept { return space_.vocab_size; }

  CsaAction act(const CsaState& state, std::mt19937_64& rng, bool greedy) const;

  /// Distribution over vocabulary + END after `prefix` tokens were emitted.
  std::vector<double> step_distribution(const CsaState& state, const std::vector<TokenId>& prefix) const;
  double log_prob(const CsaState& state, const Response& response) const;

  CsaLossResult loss(const CsaState& state, const Response& response, double reward) const;

  Mlp& generator() noexcept { return generator_; }
  const Mlp& generator() const noexcept { return generator_; }
  const CsaLossWeights& weights() const noexcept { return weights_; }
  const DialogueSpace& space() const noexcept { return space_; }

  std::vector<MarkerId> required_markers(const SkillSequence& constraint) const;
  std::vector<double> features(const CsaState& state, const std::vector<TokenId>& prefix,
                               const std::vector<MarkerId>& required) const;

 private:
  Eigen::VectorXd masked_softmax(const Eigen::VectorXd& logits, std::size_t step) const;

  DialogueSpace space_;
  CsaLossWeights weights_;
  Mlp generator_;
};

}  // namespace gopo
