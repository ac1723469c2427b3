#pragma once

// Reference implementations written independently of the library, used as
// test oracles. They favour directness over speed.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <random>
#include <vector>

#include "gopo/agents.hpp"
#include "gopo/core.hpp"
#include "gopo/neural.hpp"

namespace oracle {

// Discounted gain written term by term from the ranking definition.
inline double esndcg(const std::vector<int>& pred, const std::vector<int>& teacher, bool dedupe) {
  const int n = static_cast<int>(teacher.size());
  auto rel = [&](int s) {
    for (int i = 0; i < n; ++i) {
      if (teacher[static_cast<std::size_t>(i)] == s) return n - (i + 1) + 1;
    }
    return 0;
  };
  auto gain = [&](const std::vector<int>& seq, bool skip_repeats) {
    double total = 0.0;
    for (std::size_t i = 0; i < seq.size(); ++i) {
      const bool repeat = std::find(seq.begin(), seq.begin() + static_cast<long>(i), seq[i]) != seq.begin() + static_cast<long>(i);
      const int r = (skip_repeats && repeat) ? 0 : rel(seq[i]);
      total += (std::pow(2.0, r) - 1.0) / (std::log(static_cast<double>(i) + 2.0) / std::log(2.0));
    }
    return total;
  };
  if (teacher.empty()) return pred.empty() ? 1.0 : 0.0;
  return gain(pred, dedupe) / gain(teacher, false);
}

using Gram = std::vector<int>;

inline std::map<Gram, int> ngram_counts(const std::vector<int>& tokens, std::size_t n) {
  std::map<Gram, int> counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) ++counts[Gram(tokens.begin() + static_cast<long>(i), tokens.begin() + static_cast<long>(i + n))];
  return counts;
}

// Corpus BLEU: clipped n-gram precisions pooled over the corpus, add-one
// smoothing for n >= 2, geometric mean, brevity penalty.
inline double bleu(const std::vector<std::vector<int>>& cands, const std::vector<std::vector<int>>& refs, int max_n) {
  std::vector<double> matched(static_cast<std::size_t>(max_n), 0.0), total(static_cast<std::size_t>(max_n), 0.0);
  double c_len = 0.0, r_len = 0.0;
  for (std::size_t k = 0; k < cands.size(); ++k) {
    c_len += static_cast<double>(cands[k].size());
    r_len += static_cast<double>(refs[k].size());
    for (int n = 1; n <= max_n; ++n) {
      const auto c = ngram_counts(cands[k], static_cast<std::size_t>(n));
      const auto r = ngram_counts(refs[k], static_cast<std::size_t>(n));
      for (const auto& [gram, count] : c) {
        const auto it = r.find(gram);
        matched[static_cast<std::size_t>(n - 1)] += std::min(count, it == r.end() ? 0 : it->second);
        total[static_cast<std::size_t>(n - 1)] += count;
      }
    }
  }
  if (matched[0] == 0.0) return 0.0;
  double log_sum = std::log(matched[0] / total[0]);
  for (int n = 2; n <= max_n; ++n) {
    log_sum += std::log((matched[static_cast<std::size_t>(n - 1)] + 1.0) / (total[static_cast<std::size_t>(n - 1)] + 1.0));
  }
  const double bp = c_len >= r_len ? 1.0 : std::exp(1.0 - r_len / c_len);
  return bp * std::exp(log_sum / max_n);
}

// Largest relative disagreement between an analytic gradient and central
// finite differences of `loss` over every coordinate of `params`.
inline double max_gradient_error(gopo::ParameterVector& params, const gopo::ParameterVector& analytic,
                                 const std::function<double()>& loss, double h = 1e-5) {
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + h;
    const double up = loss();
    params[i] = saved - h;
    const double down = loss();
    params[i] = saved;
    const double fd = (up - down) / (2.0 * h);
    const double scale = std::max({std::abs(fd), std::abs(analytic[i]), 1e-5});
    worst = std::max(worst, std::abs(fd - analytic[i]) / scale);
  }
  return worst;
}

// A small dialogue space with identity token markers on the first tokens.
inline gopo::DialogueSpace small_space(std::mt19937_64& rng) {
  gopo::DialogueSpace s;
  s.pool_size = 3 + rng() % 3;
  s.num_intents = 2 + rng() % 2;
  s.num_emotions = 2;
  s.num_markers = 6;
  s.num_order_statuses = 2;
  s.vocab_size = 10;
  s.history_window = 2;
  s.max_response_length = 2 + rng() % 4;
  s.horizon = 4;
  s.token_markers.assign(s.vocab_size, -1);
  for (std::size_t t = 0; t < s.num_markers; ++t) s.token_markers[t] = static_cast<int>(t);
  for (std::size_t k = 0; k < s.pool_size; ++k) {
    const int a = static_cast<int>(rng() % s.num_markers);
    const int b = static_cast<int>(rng() % s.num_markers);
    std::vector<int> m{a, b};
    std::sort(m.begin(), m.end());
    m.erase(std::unique(m.begin(), m.end()), m.end());
    s.skill_markers.push_back(m);
  }
  return s;
}

inline gopo::SkillSequence random_sequence(std::mt19937_64& rng, std::size_t pool, std::size_t min_len = 0) {
  const std::size_t len = min_len + rng() % (gopo::SkillSequence::kMaxLength - min_len + 1);
  std::vector<int> ids;
  for (std::size_t i = 0; i < len; ++i) ids.push_back(static_cast<int>(rng() % pool));
  return gopo::SkillSequence(ids);
}

inline gopo::ExpertState random_expert_state(std::mt19937_64& rng, const gopo::DialogueSpace& s) {
  gopo::ExpertState st;
  st.intent = static_cast<int>(rng() % s.num_intents);
  st.emotion = static_cast<int>(rng() % s.num_emotions);
  st.phase = static_cast<int>(rng() % 3);
  st.turn = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(s.horizon));
  const std::size_t h = rng() % (s.history_window + 1);
  for (std::size_t i = 0; i < h; ++i) {
    gopo::DialogueTurn d;
    d.intent = static_cast<int>(rng() % s.num_intents);
    d.emotion = static_cast<int>(rng() % s.num_emotions);
    d.skills = random_sequence(rng, s.pool_size);
    d.markers = {static_cast<int>(rng() % s.num_markers)};
    st.history.push_back(d);
  }
  if (rng() % 2) st.prev_skills = random_sequence(rng, s.pool_size);
  return st;
}

inline gopo::CsaState random_csa_state(std::mt19937_64& rng, const gopo::DialogueSpace& s, bool with_constraint) {
  gopo::CsaState st;
  for (int i = 0; i < 3; ++i) st.utterance.push_back(static_cast<int>(rng() % s.vocab_size));
  st.constraint = with_constraint ? random_sequence(rng, s.pool_size, 1) : gopo::SkillSequence{};
  st.business.phase = static_cast<int>(rng() % 3);
  st.business.order_status = static_cast<int>(rng() % s.num_order_statuses);
  st.business.in_stock = rng() % 2 == 0;
  return st;
}

}  // namespace oracle
