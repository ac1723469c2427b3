#include "gopo/agents.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace gopo {

DialogueSpace DialogueSpace::from(const EnvConfig& cfg) {
  DialogueSpace s;
  s.pool_size = cfg.skill_pool.size();
  s.num_intents = cfg.intents.size();
  s.num_emotions = cfg.emotions.size();
  s.num_markers = cfg.num_markers;
  s.num_order_statuses = cfg.order_statuses.size();
  s.vocab_size = cfg.vocab_size;
  s.history_window = cfg.history_window;
  s.max_response_length = cfg.max_response_length;
  s.horizon = cfg.horizon;
  s.token_markers = cfg.token_markers;
  for (const Skill& skill : cfg.skill_pool) s.skill_markers.push_back(skill.required_markers);
  return s;
}

namespace {

std::size_t expert_feature_size(const DialogueSpace& s) {
  return s.num_intents + s.num_emotions + s.pool_size + s.num_markers + kNumPhases + 1;
}

std::size_t csa_feature_size(const DialogueSpace& s) {
  return 2 * s.vocab_size + s.pool_size + 2 * s.num_markers + kNumPhases + s.num_order_statuses + 2;
}

void set_index(std::vector<double>& v, std::size_t offset, long index, std::size_t bound) {
  if (index >= 0 && static_cast<std::size_t>(index) < bound) v[offset + static_cast<std::size_t>(index)] = 1.0;
}

// log-softmax of the logits; entries masked to -inf stay -inf.
Eigen::VectorXd log_probs(const Eigen::VectorXd& logits) {
  const double mx = logits.maxCoeff();
  const double lse = mx + std::log((logits.array() - mx).exp().sum());
  return logits.array() - lse;
}

double entropy_of(const Eigen::VectorXd& p, const Eigen::VectorXd& logp) {
  double h = 0.0;
  for (long k = 0; k < p.size(); ++k) {
    if (p[k] > 0.0) h -= p[k] * logp[k];
  }
  return h;
}

// d(-H)/dz_k = p_k (log p_k + H); zero where p_k = 0.
Eigen::VectorXd neg_entropy_logit_grad(const Eigen::VectorXd& p, const Eigen::VectorXd& logp, double h) {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(p.size());
  for (long k = 0; k < p.size(); ++k) {
    if (p[k] > 0.0) g[k] = p[k] * (logp[k] + h);
  }
  return g;
}

void require_finite(const Eigen::VectorXd& p) {
  if (!p.allFinite()) throw NumericError("non-finite policy output");
}

std::size_t argmax(const Eigen::VectorXd& p) {
  require_finite(p);
  Eigen::Index best = 0;
  p.maxCoeff(&best);
  return static_cast<std::size_t>(best);
}

std::size_t draw(const Eigen::VectorXd& p, std::mt19937_64& rng) {
  require_finite(p);
  return sample_categorical(std::vector<double>(p.data(), p.data() + p.size()), rng);
}

std::span<const double> as_span(const Eigen::VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

}  // namespace

std::vector<double> expert_features(const DialogueSpace& space, const ExpertState& state) {
  std::vector<double> f(expert_feature_size(space), 0.0);
  std::size_t off = 0;
  set_index(f, off, state.intent, space.num_intents);
  off += space.num_intents;
  set_index(f, off, state.emotion, space.num_emotions);
  off += space.num_emotions;
  if (state.prev_skills) {
    for (SkillId id : state.prev_skills->ids()) set_index(f, off, id, space.pool_size);
  }
  off += space.pool_size;
  const double scale = 1.0 / static_cast<double>(space.history_window);
  for (const DialogueTurn& turn : state.history) {
    for (MarkerId m : turn.markers) {
      if (m >= 0 && static_cast<std::size_t>(m) < space.num_markers) f[off + static_cast<std::size_t>(m)] += scale;
    }
  }
  off += space.num_markers;
  set_index(f, off, std::min(state.phase, kNumPhases - 1), kNumPhases);
  off += kNumPhases;
  f[off] = static_cast<double>(state.turn) / static_cast<double>(space.horizon);
  return f;
}

// ---------------------------------------------------------------------------
// Expert

ExpertPolicy::ExpertPolicy(DialogueSpace space, std::size_t hidden, double entropy_coeff, std::mt19937_64& rng)
    : space_(std::move(space)), entropy_coeff_(entropy_coeff) {
  const std::size_t in = expert_feature_size(space_);
  actor_ = Mlp::random({in + space_.pool_size + SkillSequence::kMaxLength, hidden, space_.pool_size + 1},
                       Head::kSoftmax, rng);
  critic_ = Mlp::random({in, hidden, 1}, Head::kLinear, rng);
}

ExpertPolicy::ExpertPolicy(DialogueSpace space, std::size_t hidden, double entropy_coeff)
    : space_(std::move(space)), entropy_coeff_(entropy_coeff) {
  const std::size_t in = expert_feature_size(space_);
  actor_ = Mlp({in + space_.pool_size + SkillSequence::kMaxLength, hidden, space_.pool_size + 1}, Head::kSoftmax);
  critic_ = Mlp({in, hidden, 1}, Head::kLinear);
}

std::vector<double> ExpertPolicy::actor_input(const std::vector<double>& state_features,
                                              const SkillSequence& prefix, std::size_t slot) const {
  std::vector<double> x = state_features;
  const std::size_t off = x.size();
  x.resize(off + space_.pool_size + SkillSequence::kMaxLength, 0.0);
  for (SkillId id : prefix.ids()) set_index(x, off, id, space_.pool_size);
  x[off + space_.pool_size + slot] = 1.0;
  return x;
}

ExpertAction ExpertPolicy::act(const ExpertState& state, std::mt19937_64& rng, bool greedy) const {
  const std::vector<double> feats = expert_features(space_, state);
  std::vector<SkillId> chosen;
  ExpertAction out;
  for (std::size_t slot = 0; slot < SkillSequence::kMaxLength; ++slot) {
    const Mlp::Tape tape = actor_.record(actor_input(feats, SkillSequence(chosen), slot));
    const Eigen::VectorXd logp = log_probs(tape.logits);
    const Eigen::VectorXd p = logp.array().exp();
    out.entropy += entropy_of(p, logp);
    const std::size_t k = greedy ? argmax(p) : draw(p, rng);
    out.log_prob += logp[static_cast<long>(k)];
    if (k == stop_symbol()) break;
    chosen.push_back(static_cast<SkillId>(k));
  }
  out.skills = SkillSequence(std::move(chosen));
  return out;
}

std::vector<double> ExpertPolicy::slot_distribution(const ExpertState& state, const SkillSequence& prefix) const {
  if (prefix.size() >= SkillSequence::kMaxLength) throw InputError("no slot follows a full skill sequence");
  return actor_.forward(actor_input(expert_features(space_, state), prefix, prefix.size()));
}

double ExpertPolicy::log_prob(const ExpertState& state, const SkillSequence& action) const {
  const std::vector<double> feats = expert_features(space_, state);
  const std::size_t n = action.size();
  const std::size_t decisions = n < SkillSequence::kMaxLength ? n + 1 : n;
  std::vector<SkillId> prefix;
  double total = 0.0;
  for (std::size_t slot = 0; slot < decisions; ++slot) {
    const Eigen::VectorXd logp = log_probs(actor_.record(actor_input(feats, SkillSequence(prefix), slot)).logits);
    total += logp[slot < n ? action[slot] : static_cast<long>(stop_symbol())];
    if (slot < n) prefix.push_back(action[slot]);
  }
  return total;
}

LossResult ExpertPolicy::loss(const ExpertState& state, const SkillSequence& action, double advantage) const {
  if (!action.valid_for(space_.pool_size)) throw InputError("action references an unknown skill");
  const std::vector<double> feats = expert_features(space_, state);
  LossResult out{0.0, ParameterVector::zeros(actor_.sizes())};

  const std::size_t n = action.size();
  const std::size_t decisions = n < SkillSequence::kMaxLength ? n + 1 : n;
  std::vector<SkillId> prefix;
  for (std::size_t slot = 0; slot < decisions; ++slot) {
    const Mlp::Tape tape = actor_.record(actor_input(feats, SkillSequence(prefix), slot));
    const Eigen::VectorXd logp = log_probs(tape.logits);
    const Eigen::VectorXd p = logp.array().exp();
    const double h = entropy_of(p, logp);
    const std::size_t target = slot < n ? static_cast<std::size_t>(action[slot]) : stop_symbol();

    out.loss += -advantage * logp[static_cast<long>(target)] - entropy_coeff_ * h;
    // d(-A log p_target)/dz = -A (e_target - p); d(-alpha H)/dz = alpha p (log p + H).
    Eigen::VectorXd dz = advantage * p + entropy_coeff_ * neg_entropy_logit_grad(p, logp, h);
    dz[static_cast<long>(target)] -= advantage;
    actor_.accumulate_logit_gradient(tape, as_span(dz), out.grad);
    if (slot < n) prefix.push_back(action[slot]);
  }
  return out;
}

double ExpertPolicy::value(const ExpertState& state) const {
  return critic_.forward(expert_features(space_, state))[0];
}

LossResult ExpertPolicy::critic_loss(const ExpertState& state, double target) const {
  const Mlp::Tape tape = critic_.record(expert_features(space_, state));
  const double err = tape.logits[0] - target;
  LossResult out{err * err, ParameterVector::zeros(critic_.sizes())};
  const double d = 2.0 * err;
  critic_.accumulate_logit_gradient(tape, {&d, 1}, out.grad);
  return out;
}

// ---------------------------------------------------------------------------
// Customer service agent

CsaPolicy::CsaPolicy(DialogueSpace space, std::size_t hidden, CsaLossWeights weights, std::mt19937_64& rng)
    : space_(std::move(space)), weights_(weights) {
  generator_ = Mlp::random({csa_feature_size(space_), hidden, space_.vocab_size + 1}, Head::kSoftmax, rng);
}

CsaPolicy::CsaPolicy(DialogueSpace space, std::size_t hidden, CsaLossWeights weights)
    : space_(std::move(space)), weights_(weights) {
  generator_ = Mlp({csa_feature_size(space_), hidden, space_.vocab_size + 1}, Head::kSoftmax);
}

std::vector<MarkerId> CsaPolicy::required_markers(const SkillSequence& constraint) const {
  std::vector<MarkerId> out;
  for (SkillId id : constraint.ids()) {
    const auto& ms = space_.skill_markers.at(static_cast<std::size_t>(id));
    out.insert(out.end(), ms.begin(), ms.end());
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<double> CsaPolicy::features(const CsaState& state, const std::vector<TokenId>& prefix,
                                        const std::vector<MarkerId>& required) const {
  const DialogueSpace& s = space_;
  std::vector<double> f(csa_feature_size(s), 0.0);
  std::size_t off = 0;
  for (TokenId t : state.utterance) set_index(f, off, t, s.vocab_size);
  off += s.vocab_size;
  for (SkillId id : state.constraint.ids()) set_index(f, off, id, s.pool_size);
  off += s.pool_size;

  std::vector<bool> covered(s.num_markers, false);
  for (TokenId t : prefix) {
    if (t >= 0 && static_cast<std::size_t>(t) < s.vocab_size) {
      if (MarkerId m = s.token_markers[static_cast<std::size_t>(t)]; m >= 0) covered[static_cast<std::size_t>(m)] = true;
    }
  }
  for (MarkerId m : required) set_index(f, off, m, s.num_markers);
  off += s.num_markers;
  for (MarkerId m : required) {
    if (!covered[static_cast<std::size_t>(m)]) set_index(f, off, m, s.num_markers);
  }
  off += s.num_markers;

  set_index(f, off, std::min(state.business.phase, kNumPhases - 1), kNumPhases);
  off += kNumPhases;
  set_index(f, off, state.business.order_status, s.num_order_statuses);
  off += s.num_order_statuses;
  f[off++] = state.business.in_stock ? 1.0 : 0.0;
  for (TokenId t : prefix) set_index(f, off, t, s.vocab_size);
  off += s.vocab_size;
  f[off] = static_cast<double>(prefix.size()) / static_cast<double>(s.max_response_length);
  return f;
}

Eigen::VectorXd CsaPolicy::masked_softmax(const Eigen::VectorXd& logits, std::size_t step) const {
  if (step > 0) return softmax(logits);
  Eigen::VectorXd z = logits;
  z[static_cast<long>(end_symbol())] = -std::numeric_limits<double>::infinity();
  return softmax(z);
}

CsaAction CsaPolicy::act(const CsaState& state, std::mt19937_64& rng, bool greedy) const {
  const std::vector<MarkerId> required = required_markers(state.constraint);
  std::vector<TokenId> tokens;
  CsaAction out;
  for (std::size_t step = 0; step < space_.max_response_length; ++step) {
    const Mlp::Tape tape = generator_.record(features(state, tokens, required));
    const Eigen::VectorXd p = masked_softmax(tape.logits, step);
    const Eigen::VectorXd logp = p.array().log();
    out.token_entropies.push_back(entropy_of(p, logp));
    const std::size_t k = greedy ? argmax(p) : draw(p, rng);
    out.log_prob += logp[static_cast<long>(k)];
    if (k == end_symbol()) break;
    tokens.push_back(static_cast<TokenId>(k));
  }
  out.response = Response(std::move(tokens), space_.token_markers, space_.max_response_length);
  return out;
}

std::vector<double> CsaPolicy::step_distribution(const CsaState& state, const std::vector<TokenId>& prefix) const {
  const Mlp::Tape tape = generator_.record(features(state, prefix, required_markers(state.constraint)));
  const Eigen::VectorXd p = masked_softmax(tape.logits, prefix.size());
  return {p.data(), p.data() + p.size()};
}

double CsaPolicy::log_prob(const CsaState& state, const Response& response) const {
  const std::vector<TokenId>& tokens = response.tokens();
  const std::vector<MarkerId> required = required_markers(state.constraint);
  const std::size_t steps = tokens.size() < space_.max_response_length ? tokens.size() + 1 : tokens.size();
  std::vector<TokenId> prefix;
  double total = 0.0;
  for (std::size_t t = 0; t < steps; ++t) {
    const Eigen::VectorXd p = masked_softmax(generator_.record(features(state, prefix, required)).logits, t);
    const std::size_t target = t < tokens.size() ? static_cast<std::size_t>(tokens[t]) : end_symbol();
    total += std::log(p[static_cast<long>(target)]);
    if (t < tokens.size()) prefix.push_back(tokens[t]);
  }
  return total;
}

CsaLossResult CsaPolicy::loss(const CsaState& state, const Response& response, double reward) const {
  const std::vector<TokenId>& tokens = response.tokens();
  if (tokens.empty() || tokens.size() > space_.max_response_length) throw InputError("response length out of range");
  const std::vector<MarkerId> required = required_markers(state.constraint);

  // Symbols scored: every token, plus END when the response stopped early.
  const std::size_t steps = tokens.size() < space_.max_response_length ? tokens.size() + 1 : tokens.size();
  std::vector<Mlp::Tape> tapes;
  std::vector<Eigen::VectorXd> probs;
  std::vector<Eigen::VectorXd> logps;
  tapes.reserve(steps);
  std::vector<TokenId> prefix;
  for (std::size_t t = 0; t < steps; ++t) {
    tapes.push_back(generator_.record(features(state, prefix, required)));
    probs.push_back(masked_softmax(tapes.back().logits, t));
    logps.push_back(probs.back().array().log());
    if (t < tokens.size()) prefix.push_back(tokens[t]);
  }

  // q[t][j]: probability mass step t puts on tokens carrying required[j].
  const std::size_t n_req = required.size();
  std::vector<std::vector<double>> q(steps, std::vector<double>(n_req, 0.0));
  std::vector<long> marker_slot(space_.num_markers, -1);
  for (std::size_t j = 0; j < n_req; ++j) marker_slot[static_cast<std::size_t>(required[j])] = static_cast<long>(j);
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t k = 0; k < space_.vocab_size; ++k) {
      const MarkerId m = space_.token_markers[k];
      if (m >= 0 && marker_slot[static_cast<std::size_t>(m)] >= 0) {
        q[t][static_cast<std::size_t>(marker_slot[static_cast<std::size_t>(m)])] += probs[t][static_cast<long>(k)];
      }
    }
  }

  CsaLossResult out{0.0, ParameterVector::zeros(generator_.sizes()), {}};

  // Steps at which each required marker is still uncovered by the prefix.
  std::vector<std::size_t> open_until(n_req, steps);
  for (std::size_t t = tokens.size(); t-- > 0;) {
    const MarkerId m = space_.token_markers[static_cast<std::size_t>(tokens[t])];
    if (m >= 0 && marker_slot[static_cast<std::size_t>(m)] >= 0) {
      open_until[static_cast<std::size_t>(marker_slot[static_cast<std::size_t>(m)])] = t + 1;
    }
  }

  // Compliance: mean over required markers of the probability that no step
  // emits it, each step drawn from its distribution given the realized prefix.
  std::vector<std::vector<double>> dq(steps, std::vector<double>(n_req, 0.0));
  if (n_req > 0) {
    const double inv = 1.0 / static_cast<double>(n_req);
    for (std::size_t j = 0; j < n_req; ++j) {
      const std::size_t open = open_until[j];
      std::vector<double> before(open + 1, 1.0);
      std::vector<double> after(open + 1, 1.0);
      for (std::size_t t = 0; t < open; ++t) before[t + 1] = before[t] * (1.0 - q[t][j]);
      for (std::size_t t = open; t-- > 0;) after[t] = after[t + 1] * (1.0 - q[t][j]);
      out.components.compliance += inv * before[open];
      for (std::size_t t = 0; t < open; ++t) dq[t][j] = -inv * before[t] * after[t + 1];
    }
  }

  const CsaLossWeights& w = weights_;
  for (std::size_t t = 0; t < steps; ++t) {
    const Eigen::VectorXd& p = probs[t];
    const Eigen::VectorXd& logp = logps[t];
    const std::size_t target = t < tokens.size() ? static_cast<std::size_t>(tokens[t]) : end_symbol();
    if (target > space_.vocab_size) throw InputError("token outside the vocabulary");
    const double h = entropy_of(p, logp);

    out.components.policy -= reward * logp[static_cast<long>(target)];
    out.components.diversity -= h;

    Eigen::VectorXd dz = (w.policy * reward) * p + w.diversity * neg_entropy_logit_grad(p, logp, h);
    dz[static_cast<long>(target)] -= w.policy * reward;

    if (n_req > 0 && w.compliance != 0.0) {
      double mean_term = 0.0;
      for (std::size_t j = 0; j < n_req; ++j) mean_term += dq[t][j] * q[t][j];
      for (std::size_t k = 0; k < space_.vocab_size; ++k) {
        const MarkerId m = space_.token_markers[k];
        const long slot = m >= 0 ? marker_slot[static_cast<std::size_t>(m)] : -1;
        const double own = slot >= 0 ? dq[t][static_cast<std::size_t>(slot)] : 0.0;
        dz[static_cast<long>(k)] += w.compliance * p[static_cast<long>(k)] * (own - mean_term);
      }
      const long end = static_cast<long>(end_symbol());
      dz[end] += w.compliance * p[end] * (-mean_term);
    }
    generator_.accumulate_logit_gradient(tapes[t], as_span(dz), out.grad);
  }

  out.loss = w.policy * out.components.policy + w.compliance * out.components.compliance +
             w.diversity * out.components.diversity;
  return out;
}

}  // namespace gopo
