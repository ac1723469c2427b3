#include "gopo/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

namespace gopo {

void TseConfig::validate() const {
  double sum = 0.0;
  for (double w : task_weights) {
    if (!(w >= 0.0)) throw ConfigError("tse.task_weights must be non-negative");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-12) throw ConfigError("tse.task_weights must sum to 1");
  if (!(decay > 0.0 && decay <= 1.0)) throw ConfigError("tse.decay must lie in (0, 1]");
}

double tse(const MilestoneRecord& m, const TseConfig& cfg) {
  double score = 0.0;
  int previous = 0;  // turn of the most recent completed milestone
  for (std::size_t i = 0; i < kNumMilestones; ++i) {
    if (!m.completed[i] || !m.turns[i]) continue;
    const int exponent = std::max(*m.turns[i] - previous - 1, 0);
    score += cfg.task_weights[i] * std::pow(cfg.decay, exponent);
    previous = *m.turns[i];
  }
  return score;
}

double gre(const Trajectory& trajectory) {
  if (trajectory.turns.empty()) throw InputError("gre of an empty trajectory");
  double total = 0.0;
  for (const TrajectoryTurn& turn : trajectory.turns) {
    const DimScores& s = turn.reward.dim_scores;
    total += 10.0 * (s[0] + s[1] + s[2]) / 3.0;
  }
  return total / static_cast<double>(trajectory.turns.size());
}

namespace {

using Ngram = std::vector<TokenId>;

std::map<Ngram, int> count_ngrams(const std::vector<TokenId>& tokens, std::size_t n) {
  std::map<Ngram, int> counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++counts[Ngram(tokens.begin() + static_cast<long>(i), tokens.begin() + static_cast<long>(i + n))];
  }
  return counts;
}

}  // namespace

double bleu(const std::vector<std::vector<TokenId>>& candidates,
            const std::vector<std::vector<TokenId>>& references, int max_n) {
  if (candidates.size() != references.size()) {
    throw InputError("bleu: " + std::to_string(candidates.size()) + " candidates vs " +
                     std::to_string(references.size()) + " references");
  }
  if (candidates.empty()) throw InputError("bleu: empty corpus");
  if (max_n < 1) throw InputError("bleu: max_n must be positive");

  std::vector<long> matches(static_cast<std::size_t>(max_n), 0);
  std::vector<long> totals(static_cast<std::size_t>(max_n), 0);
  long cand_len = 0;
  long ref_len = 0;
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    const auto& cand = candidates[k];
    const auto& ref = references[k];
    if (cand.empty() || ref.empty()) throw InputError("bleu: empty response in corpus");
    cand_len += static_cast<long>(cand.size());
    ref_len += static_cast<long>(ref.size());
    for (std::size_t n = 1; n <= static_cast<std::size_t>(max_n); ++n) {
      const auto ref_counts = count_ngrams(ref, n);
      for (const auto& [gram, count] : count_ngrams(cand, n)) {
        auto it = ref_counts.find(gram);
        if (it != ref_counts.end()) matches[n - 1] += std::min(count, it->second);
        totals[n - 1] += count;
      }
    }
  }

  if (matches[0] == 0) return 0.0;
  double log_sum = std::log(static_cast<double>(matches[0]) / static_cast<double>(totals[0]));
  for (std::size_t n = 1; n < matches.size(); ++n) {
    log_sum += std::log(static_cast<double>(matches[n] + 1) / static_cast<double>(totals[n] + 1));
  }
  const double brevity =
      cand_len >= ref_len ? 1.0 : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(cand_len));
  return brevity * std::exp(log_sum / static_cast<double>(max_n));
}

double bleu(const std::vector<Response>& candidates, const std::vector<Response>& references,
            int max_n) {
  std::vector<std::vector<TokenId>> c;
  std::vector<std::vector<TokenId>> r;
  c.reserve(candidates.size());
  r.reserve(references.size());
  for (const auto& x : candidates) c.push_back(x.tokens());
  for (const auto& x : references) r.push_back(x.tokens());
  return bleu(c, r, max_n);
}

namespace {

std::pair<double, double> mean_std(const std::vector<double>& xs) {
  const double n = static_cast<double>(xs.size());
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / (n - 1.0))};
}

}  // namespace

MetricReport aggregate(const std::vector<Trajectory>& trajectories, const TseConfig& cfg,
                       std::string variant) {
  if (trajectories.empty()) throw InputError("aggregate: no trajectories");

  std::vector<double> tses;
  std::vector<double> gres;
  std::vector<double> joints;
  std::vector<std::vector<TokenId>> candidates;
  std::vector<std::vector<TokenId>> references;
  for (const Trajectory& t : trajectories) {
    tses.push_back(tse(t.milestones, cfg));
    gres.push_back(gre(t));
    double joint = 0.0;
    for (const TrajectoryTurn& turn : t.turns) {
      joint += turn.reward.joint;
      candidates.push_back(turn.response.tokens());
      references.push_back(turn.reference);
    }
    joints.push_back(joint / static_cast<double>(t.turns.size()));
  }

  MetricReport r;
  r.variant = std::move(variant);
  r.episodes = trajectories.size();
  std::tie(r.tse_mean, r.tse_std) = mean_std(tses);
  std::tie(r.gre_mean, r.gre_std) = mean_std(gres);
  r.bleu = bleu(candidates, references);
  r.joint_mean = mean_std(joints).first;
  return r;
}

namespace {

std::string format_double(double x) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, end);
}

double parse_double(const std::string& s) {
  double x = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw InputError("bad number '" + s + "'");
  return x;
}

}  // namespace

std::string to_csv_row(const MetricReport& r) {
  std::ostringstream os;
  os << r.variant << ',' << r.episodes << ',' << format_double(r.tse_mean) << ','
     << format_double(r.tse_std) << ',' << format_double(r.gre_mean) << ','
     << format_double(r.gre_std) << ',' << format_double(r.bleu) << ','
     << format_double(r.joint_mean);
  return os.str();
}

MetricReport from_csv_row(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (fields.size() != 8) throw InputError("metric row needs 8 fields: '" + line + "'");
  MetricReport r;
  r.variant = fields[0];
  r.episodes = static_cast<std::size_t>(parse_double(fields[1]));
  r.tse_mean = parse_double(fields[2]);
  r.tse_std = parse_double(fields[3]);
  r.gre_mean = parse_double(fields[4]);
  r.gre_std = parse_double(fields[5]);
  r.bleu = parse_double(fields[6]);
  r.joint_mean = parse_double(fields[7]);
  return r;
}

void write_metric_csv(std::ostream& out, const std::vector<MetricReport>& rows) {
  out << kMetricCsvHeader << '\n';
  for (const auto& r : rows) out << to_csv_row(r) << '\n';
}

std::vector<MetricReport> read_metric_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kMetricCsvHeader) {
    throw InputError("metric csv header mismatch");
  }
  std::vector<MetricReport> rows;
  while (std::getline(in, line)) {
    if (!line.empty()) rows.push_back(from_csv_row(line));
  }
  return rows;
}

}  // namespace gopo
