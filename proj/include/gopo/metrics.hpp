#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "gopo/core.hpp"

namespace gopo {

struct TseConfig {
  std::array<double, kNumMilestones> task_weights{0.5, 0.3, 0.2};
  double decay = 0.9;

  void validate() const;  // throws ConfigError
  bool operator==(const TseConfig&) const = default;
};

/// Task-focused sequential engagement of one dialogue. Each completed
/// milestone contributes its weight decayed by the number of turns it took
/// beyond the previous completed milestone.
double tse(const MilestoneRecord& m, const TseConfig& cfg);

/// Mean turn score on the politeness, appropriateness and guidance
/// dimensions, scaled to [0, 10].
double gre(const Trajectory& trajectory);

/// Corpus BLEU with uniform weights over 1..max_n grams, brevity penalty and
/// add-one smoothing of the n >= 2 precisions.
double bleu(const std::vector<std::vector<TokenId>>& candidates,
            const std::vector<std::vector<TokenId>>& references, int max_n = 4);
double bleu(const std::vector<Response>& candidates, const std::vector<Response>& references,
            int max_n = 4);

struct MetricReport {
  std::string variant;
  std::size_t episodes = 0;
  double tse_mean = 0.0;
  double tse_std = 0.0;
  double gre_mean = 0.0;
  double gre_std = 0.0;
  double bleu = 0.0;
  double joint_mean = 0.0;

  bool operator==(const MetricReport&) const = default;
};

// BLEU is computed over every turn of every trajectory, scored against the
// per-turn reference response; joint_mean averages each episode's mean joint
// reward.
MetricReport aggregate(const std::vector<Trajectory>& trajectories, const TseConfig& cfg,
                       std::string variant = "");

inline constexpr const char* kMetricCsvHeader =
    "variant,episodes,tse_mean,tse_std,gre_mean,gre_std,bleu,joint_mean";

std::string to_csv_row(const MetricReport& r);
MetricReport from_csv_row(const std::string& line);
void write_metric_csv(std::ostream& out, const std::vector<MetricReport>& rows);
std::vector<MetricReport> read_metric_csv(std::istream& in);

}  // namespace gopo
