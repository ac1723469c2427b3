#include "gopo/simenv.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace gopo {

double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::size_t sample_categorical(const std::vector<double>& probs, std::mt19937_64& rng) {
  const double u = unit_uniform(rng);
  double cumulative = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    cumulative += probs[i];
    last_positive = i;
    if (u < cumulative) return i;
  }
  return last_positive;  // rounding left u above the final cumulative sum
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(base ^ mix(stream));
}

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError("env." + what);
}

void check_distribution(const std::vector<double>& p, std::size_t size, const std::string& name) {
  require(p.size() == size, name + " must have " + std::to_string(size) + " entries");
  double sum = 0.0;
  for (double x : p) {
    require(x >= 0.0, name + " has a negative probability");
    sum += x;
  }
  require(std::abs(sum - 1.0) <= 1e-9, name + " must sum to 1");
}

void check_matrix(const std::vector<std::vector<double>>& m, std::size_t size, const std::string& name) {
  require(m.size() == size, name + " must have " + std::to_string(size) + " rows");
  for (std::size_t i = 0; i < size; ++i) check_distribution(m[i], size, name + " row " + std::to_string(i));
}

}  // namespace

std::size_t EnvConfig::scenario_index(int intent, int emotion, int phase) const {
  return (static_cast<std::size_t>(phase) * intents.size() + static_cast<std::size_t>(intent)) *
             emotions.size() +
         static_cast<std::size_t>(emotion);
}

void EnvConfig::validate() const {
  require(!skill_pool.empty(), "skill_pool must not be empty");
  require(!intents.empty(), "intents must not be empty");
  require(!emotions.empty(), "emotions must not be empty");
  require(vocab_size > 0, "vocab_size must be positive");
  require(token_markers.size() == vocab_size, "token_markers must have vocab_size entries");
  require(max_response_length >= 1, "max_response_length must be positive");
  require(horizon >= 1, "horizon must be positive");
  require(history_window >= 1, "history_window must be positive");
  require(politeness_marker >= 0 && static_cast<std::size_t>(politeness_marker) < num_markers,
          "politeness_marker outside the marker alphabet");

  for (MarkerId m : token_markers) {
    require(m >= -1 && m < static_cast<MarkerId>(num_markers), "token_markers outside the marker alphabet");
  }
  std::set<std::string> names;
  for (std::size_t i = 0; i < skill_pool.size(); ++i) {
    const Skill& s = skill_pool[i];
    require(s.id == static_cast<SkillId>(i), "skill ids must match pool positions");
    require(names.insert(s.name).second, "duplicate skill name '" + s.name + "'");
    require(!s.required_markers.empty(), "skill '" + s.name + "' has no required markers");
    for (MarkerId m : s.required_markers) {
      require(m >= 0 && static_cast<std::size_t>(m) < num_markers,
              "skill '" + s.name + "' marker outside the marker alphabet");
    }
  }

  check_distribution(initial_intent, intents.size(), "initial_intent");
  check_distribution(initial_emotion, emotions.size(), "initial_emotion");
  check_matrix(intent_transition, intents.size(), "intent_transition");
  check_matrix(emotion_compliant, emotions.size(), "emotion_transition.compliant");
  check_matrix(emotion_noncompliant, emotions.size(), "emotion_transition.noncompliant");
  require(compliance_threshold >= 0.0 && compliance_threshold <= 1.0,
          "compliance_threshold must lie in [0, 1]");
  check_distribution(order_status_probs, order_statuses.size(), "order_status_probs");
  require(in_stock_prob >= 0.0 && in_stock_prob <= 1.0, "in_stock_prob must lie in [0, 1]");

  for (std::size_t p = 0; p < kNumMilestones; ++p) {
    for (MarkerId m : phase_markers[p]) {
      require(m >= 0 && static_cast<std::size_t>(m) < num_markers, "phase_markers outside the marker alphabet");
    }
    const auto& keys = milestone_rules[p].key_skill_by_intent;
    require(keys.size() == intents.size(), "milestone_rules need one key skill per intent");
    for (SkillId k : keys) {
      require(k >= 0 && static_cast<std::size_t>(k) < skill_pool.size(), "milestone key skill unknown");
    }
  }

  require(scenario_table.size() == kNumMilestones * intents.size() * emotions.size(),
          "scenario_table must cover every (intent, emotion, phase)");
  for (const SkillSequence& seq : scenario_table) {
    require(!seq.empty(), "scenario_table entries must not be empty");
    require(seq.distinct(), "scenario_table entries must have distinct skills");
    require(seq.valid_for(skill_pool.size()), "scenario_table references an unknown skill");
  }

  const UtteranceSpec& u = utterance;
  const auto in_vocab = [this](long t) { return t >= 0 && t < static_cast<long>(vocab_size); };
  require(in_vocab(u.intent_token_base) && in_vocab(u.intent_token_base + static_cast<long>(intents.size()) - 1),
          "utterance intent tokens outside the vocabulary");
  require(in_vocab(u.emotion_token_base) &&
              in_vocab(u.emotion_token_base + static_cast<long>(emotions.size()) - 1),
          "utterance emotion tokens outside the vocabulary");
  require(in_vocab(u.phase_token_base) && in_vocab(u.phase_token_base + kNumPhases - 1),
          "utterance phase tokens outside the vocabulary");
  require(in_vocab(u.noise_first) && in_vocab(u.noise_last) && u.noise_first <= u.noise_last,
          "utterance noise range invalid");
  require(u.noise_count >= 0, "utterance noise_count must be non-negative");
}

Environment::Environment(EnvConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  marker_token_.assign(cfg_.num_markers, -1);
  for (std::size_t t = 0; t < cfg_.token_markers.size(); ++t) {
    const MarkerId m = cfg_.token_markers[t];
    if (m >= 0 && marker_token_[static_cast<std::size_t>(m)] < 0) {
      marker_token_[static_cast<std::size_t>(m)] = static_cast<TokenId>(t);
    }
  }
}

EnvObservation Environment::reset(std::uint64_t seed) {
  rng_.seed(seed);
  active_ = true;
  turn_ = 1;
  phase_ = 0;
  intent_ = static_cast<int>(sample_categorical(cfg_.initial_intent, rng_));
  emotion_ = static_cast<int>(sample_categorical(cfg_.initial_emotion, rng_));
  business_ = BusinessContext{0, static_cast<int>(sample_categorical(cfg_.order_status_probs, rng_)),
                              unit_uniform(rng_) < cfg_.in_stock_prob};
  history_.clear();
  prev_skills_.reset();
  milestones_ = MilestoneRecord{};
  refresh_observation();
  return observation_;
}

void Environment::refresh_observation() {
  business_.phase = phase_;
  ExpertState& s = observation_.expert_state;
  s.history = history_;
  s.intent = intent_;
  s.emotion = emotion_;
  s.prev_skills = prev_skills_;
  s.phase = phase_;
  s.turn = turn_;

  const UtteranceSpec& u = cfg_.utterance;
  std::vector<TokenId>& utt = observation_.csa_utterance;
  utt = {u.intent_token_base + intent_, u.emotion_token_base + emotion_,
         u.phase_token_base + std::min(phase_, kNumPhases - 1)};
  // Bounded draws without std distributions so streams match across stdlibs.
  for (int i = 0; i < u.noise_count; ++i) {
    const auto span = static_cast<std::uint64_t>(u.noise_last - u.noise_first + 1);
    utt.push_back(u.noise_first + static_cast<TokenId>(rng_() % span));
  }
  observation_.business_ctx = business_;
}

StepResult Environment::step(const SkillSequence& skills, const Response& response) {
  if (!active_) throw StateError("step() called without an active episode");
  if (!skills.valid_for(cfg_.skill_pool.size())) throw InputError("skill id outside the pool");

  StepResult result;
  const CsaState csa = observation_.csa_state(skills);
  result.dim_scores = judge(csa, response);

  if (phase_ < kNumPhases) {
    const auto p = static_cast<std::size_t>(phase_);
    const SkillId key = cfg_.milestone_rules[p].key_skill_by_intent[static_cast<std::size_t>(intent_)];
    const auto& needed = cfg_.skill_pool[static_cast<std::size_t>(key)].required_markers;
    const bool said = std::all_of(needed.begin(), needed.end(),
                                  [&](MarkerId m) { return response.has_marker(m); });
    const bool selected = skills.empty() || skills.contains(key);
    if (said && selected) {
      milestones_.completed[p] = true;
      milestones_.turns[p] = turn_;
      result.milestone_delta[p] = true;
      ++phase_;
    }
  }

  history_.push_back(DialogueTurn{intent_, emotion_, skills, response.markers()});
  if (history_.size() > cfg_.history_window) history_.erase(history_.begin());
  prev_skills_ = skills;

  const bool compliant = result.dim_scores[1] >= cfg_.compliance_threshold;
  const auto& rows = compliant ? cfg_.emotion_compliant : cfg_.emotion_noncompliant;
  emotion_ = static_cast<int>(sample_categorical(rows[static_cast<std::size_t>(emotion_)], rng_));
  intent_ = static_cast<int>(
      sample_categorical(cfg_.intent_transition[static_cast<std::size_t>(intent_)], rng_));

  if (phase_ >= kNumPhases) {
    result.done = true;
    result.terminal_reason = "goal_complete";
  } else if (turn_ >= cfg_.horizon) {
    result.done = true;
    result.terminal_reason = "horizon";
  } else {
    ++turn_;
  }
  active_ = !result.done;

  refresh_observation();
  result.next = observation_;
  return result;
}

SkillSequence Environment::teacher_sequence(const ExpertState& state) const {
  const int phase = std::min(state.phase, kNumPhases - 1);
  if (state.intent < 0 || static_cast<std::size_t>(state.intent) >= cfg_.intents.size() ||
      state.emotion < 0 || static_cast<std::size_t>(state.emotion) >= cfg_.emotions.size() ||
      phase < 0) {
    throw InputError("state labels outside the configured sets");
  }
  return cfg_.scenario_table[cfg_.scenario_index(state.intent, state.emotion, phase)];
}

std::vector<MarkerId> Environment::required_markers(const SkillSequence& skills) const {
  std::vector<MarkerId> out;
  for (SkillId id : skills.ids()) {
    const auto& ms = cfg_.skill_pool.at(static_cast<std::size_t>(id)).required_markers;
    out.insert(out.end(), ms.begin(), ms.end());
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

namespace {

double coverage(const std::vector<MarkerId>& wanted, const Response& response) {
  if (wanted.empty()) return 0.0;
  const auto hits = std::count_if(wanted.begin(), wanted.end(),
                                  [&](MarkerId m) { return response.has_marker(m); });
  return static_cast<double>(hits) / static_cast<double>(wanted.size());
}

}  // namespace

DimScores Environment::judge(const CsaState& state, const Response& response) const {
  DimScores s{};
  s[0] = response.has_marker(cfg_.politeness_marker) ? 1.0 : 0.0;
  s[1] = coverage(required_markers(state.constraint), response);
  const int phase = std::clamp(state.business.phase, 0, kNumPhases - 1);
  s[2] = coverage(cfg_.phase_markers[static_cast<std::size_t>(phase)], response);
  if (response.size() > 0) {
    std::vector<TokenId> tokens = response.tokens();
    std::sort(tokens.begin(), tokens.end());
    const auto distinct = std::unique(tokens.begin(), tokens.end()) - tokens.begin();
    s[3] = static_cast<double>(distinct) / static_cast<double>(response.size());
  }
  return s;
}

std::vector<TokenId> Environment::reference_response(const ExpertState& state) const {
  std::vector<TokenId> out;
  if (TokenId t = marker_token_[static_cast<std::size_t>(cfg_.politeness_marker)]; t >= 0) out.push_back(t);
  const SkillSequence teacher = teacher_sequence(state);
  for (SkillId id : teacher.ids()) {
    for (MarkerId m : cfg_.skill_pool[static_cast<std::size_t>(id)].required_markers) {
      const TokenId t = marker_token_[static_cast<std::size_t>(m)];
      if (t >= 0 && std::find(out.begin(), out.end(), t) == out.end()) out.push_back(t);
    }
  }
  if (out.size() > cfg_.max_response_length) out.resize(cfg_.max_response_length);
  return out;
}

Response Environment::make_response(std::vector<TokenId> tokens) const {
  return Response(std::move(tokens), cfg_.token_markers, cfg_.max_response_length);
}

}  // namespace gopo
