#include "gopo/core.hpp"

#include <algorithm>

namespace gopo {

SkillSequence::SkillSequence(std::vector<SkillId> ids) : ids_(std::move(ids)) {
  if (ids_.size() > kMaxLength) {
    throw InputError("skill sequence longer than " + std::to_string(kMaxLength));
  }
  for (SkillId id : ids_) {
    if (id < 0) throw InputError("negative skill id");
  }
}

bool SkillSequence::contains(SkillId id) const noexcept {
  return std::find(ids_.begin(), ids_.end(), id) != ids_.end();
}

bool SkillSequence::distinct() const noexcept {
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    for (std::size_t j = i + 1; j < ids_.size(); ++j) {
      if (ids_[i] == ids_[j]) return false;
    }
  }
  return true;
}

bool SkillSequence::valid_for(std::size_t pool_size) const noexcept {
  return std::all_of(ids_.begin(), ids_.end(), [pool_size](SkillId id) {
    return id >= 0 && static_cast<std::size_t>(id) < pool_size;
  });
}

Response::Response(std::vector<TokenId> tokens, const std::vector<MarkerId>& token_markers,
                   std::size_t max_length)
    : tokens_(std::move(tokens)) {
  if (tokens_.empty() || tokens_.size() > max_length) {
    throw InputError("response length " + std::to_string(tokens_.size()) + " outside [1, " +
                     std::to_string(max_length) + "]");
  }
  for (TokenId t : tokens_) {
    if (t < 0 || static_cast<std::size_t>(t) >= token_markers.size()) {
      throw InputError("token " + std::to_string(t) + " outside vocabulary");
    }
    if (MarkerId m = token_markers[static_cast<std::size_t>(t)]; m >= 0) markers_.push_back(m);
  }
  std::sort(markers_.begin(), markers_.end());
  markers_.erase(std::unique(markers_.begin(), markers_.end()), markers_.end());
}

Response::Response(std::vector<TokenId> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.empty()) throw InputError("empty response");
  for (TokenId t : tokens_) {
    if (t < 0) throw InputError("negative token id");
  }
}

bool Response::has_marker(MarkerId m) const noexcept {
  return std::binary_search(markers_.begin(), markers_.end(), m);
}

namespace {

ValidationResult violation(std::string what) { return {false, std::move(what)}; }

bool unit_interval(double x) { return x >= 0.0 && x <= 1.0; }

}  // namespace

ValidationResult validate_trajectory(const Trajectory& t, std::size_t pool_size, int horizon) {
  if (static_cast<long>(t.turns.size()) > horizon) return violation("episode horizon");

  for (std::size_t i = 0; i < t.turns.size(); ++i) {
    const TrajectoryTurn& turn = t.turns[i];
    if (turn.turn != static_cast<int>(i) + 1) return violation("turn index");
    if (turn.skills.size() > SkillSequence::kMaxLength) return violation("skill sequence length");
    if (!turn.skills.valid_for(pool_size)) return violation("skill id range");
    if (turn.response.size() == 0) return violation("response length");

    const RewardBreakdown& r = turn.reward;
    if (!unit_interval(r.r_expert) || !unit_interval(r.r_csa)) return violation("reward range");
    if (!std::all_of(r.dim_scores.begin(), r.dim_scores.end(), unit_interval)) {
      return violation("dimension score range");
    }
    if (!(r.w_csa > 0.0)) return violation("csa weight");
    if (r.joint != r.w_expert * r.r_expert + r.w_csa * r.r_csa) return violation("joint reward");
  }

  const MilestoneRecord& m = t.milestones;
  int last = 0;
  for (std::size_t i = 0; i < kNumMilestones; ++i) {
    if (m.completed[i] != m.turns[i].has_value()) return violation("milestone definition");
    if (!m.turns[i]) continue;
    if (*m.turns[i] < 1) return violation("milestone turn");
    if (*m.turns[i] <= last) return violation("milestone order");
    last = *m.turns[i];
  }
  return {};
}

}  // namespace gopo
