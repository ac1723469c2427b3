#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "gopo/core.hpp"

namespace gopo {

inline constexpr int kNumPhases = static_cast<int>(kNumMilestones);

/// Milestone i fires while the dialogue is in phase i when the response carries
/// every marker of the key skill for the current intent and, unless the agent
/// acted without a constraint, that skill was part of the selected sequence.
struct MilestoneRule {
  std::string name;
  std::vector<SkillId> key_skill_by_intent;

  bool operator==(const MilestoneRule&) const = default;
};

/// Layout of the simulated user's utterance: one token each for intent,
/// emotion and phase, followed by `noise_count` tokens drawn uniformly from
/// [noise_first, noise_last].
struct UtteranceSpec {
  TokenId intent_token_base = 24;
  TokenId emotion_token_base = 30;
  TokenId phase_token_base = 34;
  TokenId noise_first = 37;
  TokenId noise_last = 63;
  int noise_count = 2;

  bool operator==(const UtteranceSpec&) const = default;
};

struct EnvConfig {
  std::vector<Skill> skill_pool;
  std::vector<std::string> intents;
  std::vector<std::string> emotions;
  std::size_t vocab_size = 64;
  std::size_t num_markers = 24;
  std::vector<MarkerId> token_markers;  // per token, -1 for none
  MarkerId politeness_marker = 0;
  std::size_t max_response_length = 16;
  int horizon = 12;
  std::size_t history_window = 4;
  std::vector<double> initial_intent;
  std::vector<double> initial_emotion;
  std::vector<std::vector<double>> intent_transition;
  std::vector<std::vector<double>> emotion_compliant;
  std::vector<std::vector<double>> emotion_noncompliant;
  double compliance_threshold = 0.5;
  std::array<std::vector<MarkerId>, kNumMilestones> phase_markers;
  std::array<MilestoneRule, kNumMilestones> milestone_rules;
  // Indexed by scenario_index(); every entry is a non-empty distinct sequence.
  std::vector<SkillSequence> scenario_table;
  UtteranceSpec utterance;
  std::vector<std::string> order_statuses;
  std::vector<double> order_status_probs;
  double in_stock_prob = 0.7;
  std::uint64_t seed = 0;

  std::size_t scenario_index(int intent, int emotion, int phase) const;
  void validate() const;  // throws ConfigError naming the offending field

  bool operator==(const EnvConfig&) const = default;
};

struct EnvObservation {
  ExpertState expert_state;
  std::vector<TokenId> csa_utterance;
  BusinessContext business_ctx;

  CsaState csa_state(SkillSequence constraint) const {
    return {csa_utterance, std::move(constraint), business_ctx};
  }
};

struct StepResult {
  EnvObservation next;
  DimScores dim_scores{};
  std::array<bool, kNumMilestones> milestone_delta{};
  bool done = false;
  std::string terminal_reason;
};

/// Scripted goal-oriented dialogue. One instance runs one episode at a time;
/// all randomness comes from the generator seeded in reset().
class Environment {
 public:
  explicit Environment(EnvConfig cfg);

  EnvObservation reset(std::uint64_t seed);
  EnvObservation reset() { return reset(cfg_.seed); }

  /// Advances one turn. Throws StateError when no episode is active.
  StepResult step(const SkillSequence& skills, const Response& response);

  SkillSequence teacher_sequence(const ExpertState& state) const;

  /// Rule-based judge: S1 politeness marker present, S2 share of the
  /// constraint's required markers present (0 without a constraint), S3 share
  /// of the phase's relevant markers present, S4 distinct-token ratio.
  DimScores judge(const CsaState& state, const Response& response) const;

  /// Canonical response for a state: a politeness token followed by one token
  /// per required marker of each teacher skill.
  std::vector<TokenId> reference_response(const ExpertState& state) const;

  Response make_response(std::vector<TokenId> tokens) const;
  std::vector<MarkerId> required_markers(const SkillSequence& skills) const;

  const EnvConfig& config() const noexcept { return cfg_; }
  const MilestoneRecord& milestones() const noexcept { return milestones_; }
  const EnvObservation& observation() const noexcept { return observation_; }
  bool active() const noexcept { return active_; }
  int turn() const noexcept { return turn_; }

 private:
  void refresh_observation();

  EnvConfig cfg_;
  std::vector<TokenId> marker_token_;  // first token carrying each marker, -1 if none
  std::mt19937_64 rng_;
  bool active_ = false;
  int turn_ = 1;
  int phase_ = 0;
  int intent_ = 0;
  int emotion_ = 0;
  BusinessContext business_;
  std::vector<DialogueTurn> history_;
  std::optional<SkillSequence> prev_skills_;
  MilestoneRecord milestones_;
  EnvObservation observation_;
};

/// Uniform double in [0, 1) from the top 53 bits of one engine draw.
double unit_uniform(std::mt19937_64& rng);

/// Index drawn from a probability vector by inverse CDF.
std::size_t sample_categorical(const std::vector<double>& probs, std::mt19937_64& rng);

/// Stream seed for `stream` derived from `base` (splitmix64 mixing).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace gopo
