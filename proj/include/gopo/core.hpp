#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace gopo {

// Error categories used across the library. Callers that need to map failures
// onto exit codes (the CLI) switch on these types.
struct InputError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct StateError : std::logic_error {
  using std::logic_error::logic_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using SkillId = int;
using TokenId = int;
using MarkerId = int;

inline constexpr std::size_t kNumMilestones = 3;
inline constexpr std::size_t kNumDimensions = 4;

/// A strategy primitive from the skill pool. A response executes the skill
/// when it carries every marker in `required_markers`.
struct Skill {
  SkillId id = 0;
  std::string name;
  std::vector<MarkerId> required_markers;  // sorted, unique

  bool operator==(const Skill&) const = default;
};

/// Ordered macro-action chosen by the expert. At most five skills; the empty
/// sequence stands for "no constraint" (the no-expert setting, or an expert
/// that stopped before choosing anything).
class SkillSequence {
 public:
  static constexpr std::size_t kMaxLength = 5;

  SkillSequence() = default;
  explicit SkillSequence(std::vector<SkillId> ids);

  const std::vector<SkillId>& ids() const noexcept { return ids_; }
  std::size_t size() const noexcept { return ids_.size(); }
  bool empty() const noexcept { return ids_.empty(); }
  SkillId operator[](std::size_t i) const { return ids_.at(i); }
  bool contains(SkillId id) const noexcept;
  bool distinct() const noexcept;
  bool valid_for(std::size_t pool_size) const noexcept;

  bool operator==(const SkillSequence&) const = default;

 private:
  std::vector<SkillId> ids_;
};

/// Compressed record of one past turn, as seen by the expert.
struct DialogueTurn {
  int intent = 0;
  int emotion = 0;
  SkillSequence skills;
  std::vector<MarkerId> markers;  // markers present in the agent's response

  bool operator==(const DialogueTurn&) const = default;
};

struct ExpertState {
  std::vector<DialogueTurn> history;  // most recent last, at most k entries
  int intent = 0;
  int emotion = 0;
  std::optional<SkillSequence> prev_skills;
  int phase = 0;  // 0-based index of the milestone currently pursued
  int turn = 1;   // 1-based dialogue turn

  bool operator==(const ExpertState&) const = default;
};

struct BusinessContext {
  int phase = 0;
  int order_status = 0;
  bool in_stock = true;

  bool operator==(const BusinessContext&) const = default;
};

struct CsaState {
  std::vector<TokenId> utterance;
  SkillSequence constraint;
  BusinessContext business;

  bool operator==(const CsaState&) const = default;
};

/// Token sequence produced by the customer service agent plus the set of
/// markers those tokens carry.
class Response {
 public:
  Response() = default;
  // `token_markers[t]` is the marker of token t or -1. Throws InputError when
  // the length is outside [1, max_length] or a token is outside the vocabulary.
  Response(std::vector<TokenId> tokens, const std::vector<MarkerId>& token_markers,
           std::size_t max_length);
  // Tokens without marker annotation, as recovered from a persisted log.
  explicit Response(std::vector<TokenId> tokens);

  const std::vector<TokenId>& tokens() const noexcept { return tokens_; }
  const std::vector<MarkerId>& markers() const noexcept { return markers_; }
  std::size_t size() const noexcept { return tokens_.size(); }
  bool has_marker(MarkerId m) const noexcept;

  bool operator==(const Response&) const = default;

 private:
  std::vector<TokenId> tokens_;
  std::vector<MarkerId> markers_;  // sorted, unique
};

using DimScores = std::array<double, kNumDimensions>;

struct RewardBreakdown {
  double r_expert = 0.0;
  double r_csa = 0.0;
  DimScores dim_scores{};
  double w_expert = 0.0;
  double w_csa = 0.0;
  double joint = 0.0;

  bool operator==(const RewardBreakdown&) const = default;
};

struct MilestoneRecord {
  std::array<bool, kNumMilestones> completed{};
  std::array<std::optional<int>, kNumMilestones> turns{};

  bool operator==(const MilestoneRecord&) const = default;
};

struct TrajectoryTurn {
  int turn = 1;
  ExpertState expert_state;
  SkillSequence skills;
  CsaState csa_state;
  Response response;
  RewardBreakdown reward;
  std::vector<TokenId> reference;  // canonical response used for BLEU; not persisted

  bool operator==(const TrajectoryTurn&) const = default;
};

struct Trajectory {
  std::uint64_t episode_id = 0;
  std::uint64_t seed = 0;
  std::vector<TrajectoryTurn> turns;
  MilestoneRecord milestones;
  std::string terminal_reason;

  bool operator==(const Trajectory&) const = default;
};

struct ValidationResult {
  bool ok = true;
  std::string violation;

  explicit operator bool() const noexcept { return ok; }
};

/// Checks the structural invariants of a trajectory and reports the first
/// violated one by name ("milestone order", "skill id range", ...).
ValidationResult validate_trajectory(const Trajectory& t, std::size_t pool_size, int horizon);

}  // namespace gopo
