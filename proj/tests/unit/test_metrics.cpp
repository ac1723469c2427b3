#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "gopo/metrics.hpp"
#include "oracles.hpp"

using namespace gopo;

namespace {

MilestoneRecord completed_at(std::optional<int> n1, std::optional<int> n2, std::optional<int> n3) {
  MilestoneRecord m;
  m.turns = {n1, n2, n3};
  for (std::size_t i = 0; i < kNumMilestones; ++i) m.completed[i] = m.turns[i].has_value();
  return m;
}

TrajectoryTurn judged_turn(int index, DimScores s, double joint, std::vector<TokenId> tokens,
                           std::vector<TokenId> reference) {
  TrajectoryTurn t;
  t.turn = index;
  t.reward.dim_scores = s;
  t.reward.joint = joint;
  t.response = Response(std::move(tokens));
  t.reference = std::move(reference);
  return t;
}

Trajectory with_tse_turn(std::optional<int> n1, double joint) {
  Trajectory t;
  t.turns.push_back(judged_turn(1, {1, 1, 1, 1}, joint, {1, 2, 3}, {1, 2, 3}));
  t.milestones = completed_at(n1, std::nullopt, std::nullopt);
  return t;
}

}  // namespace

TEST_CASE("tse hand cases") {
  const TseConfig cfg;
  CHECK(tse(MilestoneRecord{}, cfg) == 0.0);
  CHECK(tse(completed_at(1, 2, 3), cfg) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(tse(completed_at(2, 4, 6), cfg) - 0.90) < 1e-9);
}

TEST_CASE("tse skips missing milestones back to the last completed one") {
  TseConfig cfg;
  // Milestone 2 missing: the third term counts from N_1.
  CHECK(tse(completed_at(2, std::nullopt, 5), cfg) == doctest::Approx(0.5 * 0.9 + 0.2 * std::pow(0.9, 2)));
  // Nothing before: counts from turn 0.
  CHECK(tse(completed_at(std::nullopt, 3, std::nullopt), cfg) == doctest::Approx(0.3 * std::pow(0.9, 2)));
  cfg.decay = 1.0;
  CHECK(tse(completed_at(5, 9, 12), cfg) == doctest::Approx(1.0));
}

TEST_CASE("property: tse is bounded and never rewards later completion") {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 3000; ++trial) {
    TseConfig cfg;
    double a = unit(rng), b = unit(rng), c = unit(rng);
    const double s = a + b + c;
    cfg.task_weights = {a / s, b / s, 1.0 - a / s - b / s};
    cfg.decay = 0.05 + 0.94 * unit(rng);
    MilestoneRecord m;
    int last = 0;
    for (std::size_t i = 0; i < kNumMilestones; ++i) {
      if (rng() % 4 == 0) continue;
      last += 1 + static_cast<int>(rng() % 4);
      m.completed[i] = true;
      m.turns[i] = last;
    }
    const double v = tse(m, cfg);
    CHECK(v >= 0.0);
    CHECK(v <= 1.0 + 1e-12);
    // Delaying milestone i together with everything after it by one turn.
    for (std::size_t i = 0; i < kNumMilestones; ++i) {
      if (!m.turns[i]) continue;
      MilestoneRecord later = m;
      for (std::size_t j = i; j < kNumMilestones; ++j) {
        if (later.turns[j]) later.turns[j] = *later.turns[j] + 1;
      }
      CHECK(tse(later, cfg) <= v + 1e-12);
    }
  }
}

TEST_CASE("gre averages the three judged dimensions on a 0-10 scale") {
  Trajectory t;
  t.turns.push_back(judged_turn(1, {1, 1, 1, 0}, 0, {1}, {1}));
  CHECK(gre(t) == doctest::Approx(10.0));
  t.turns.push_back(judged_turn(2, {0.5, 0.5, 0.5, 1}, 0, {1}, {1}));
  CHECK(gre(t) == doctest::Approx(7.5));
  Trajectory zero;
  zero.turns.push_back(judged_turn(1, {0, 0, 0, 1}, 0, {1}, {1}));
  CHECK(gre(zero) == 0.0);
  CHECK_THROWS_AS(gre(Trajectory{}), InputError);
}

TEST_CASE("property: gre does not depend on turn order") {
  std::mt19937_64 rng(43);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    Trajectory t;
    for (int i = 1; i <= 6; ++i) t.turns.push_back(judged_turn(i, {unit(rng), unit(rng), unit(rng), 0}, 0, {1}, {1}));
    Trajectory r = t;
    std::reverse(r.turns.begin(), r.turns.end());
    CHECK(gre(r) == doctest::Approx(gre(t)).epsilon(1e-12));
  }
}

TEST_CASE("bleu hand-counted example") {
  // p1 = 3/4, p2 = (2 + 1) / (3 + 1), equal lengths.
  const double v = bleu({{0, 1, 2, 3}}, {{0, 1, 2, 4}}, 2);
  CHECK(std::abs(v - 0.75) < 1e-9);
  CHECK(std::abs(v - oracle::bleu({{0, 1, 2, 3}}, {{0, 1, 2, 4}}, 2)) < 1e-9);
}

TEST_CASE("bleu identity and disjoint corpora") {
  std::mt19937_64 rng(47);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::vector<TokenId>> corpus(1 + rng() % 5);
    for (auto& s : corpus) {
      s.resize(1 + rng() % 12);
      for (auto& tok : s) tok = static_cast<TokenId>(rng() % 10);
    }
    CHECK(bleu(corpus, corpus) == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK(bleu({{1, 2}, {3}}, {{4, 5}, {6}}) == 0.0);
  CHECK_THROWS_AS(bleu({{1}}, {{1}, {2}}), InputError);
  CHECK_THROWS_AS(bleu(std::vector<std::vector<TokenId>>{}, {}), InputError);
}

TEST_CASE("bleu matches the n-gram oracle on random corpora") {
  std::mt19937_64 rng(53);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + rng() % 4;
    std::vector<std::vector<int>> c(n), r(n);
    for (std::size_t k = 0; k < n; ++k) {
      c[k].resize(1 + rng() % 10);
      r[k].resize(1 + rng() % 10);
      for (auto& t : c[k]) t = static_cast<int>(rng() % 5);
      for (auto& t : r[k]) t = static_cast<int>(rng() % 5);
    }
    const int max_n = 1 + static_cast<int>(rng() % 4);
    CHECK(std::abs(bleu(c, r, max_n) - oracle::bleu(c, r, max_n)) < 1e-9);
  }
}

TEST_CASE("bleu brevity penalty") {
  const double v = bleu({{1, 2}}, {{1, 2, 3, 4}}, 1);
  CHECK(v == doctest::Approx(std::exp(1.0 - 4.0 / 2.0)));
}

TEST_CASE("aggregate") {
  const TseConfig cfg;
  SUBCASE("singleton has zero spread") {
    const auto r = aggregate({with_tse_turn(1, 0.4)}, cfg, "full");
    CHECK(r.variant == "full");
    CHECK(r.episodes == 1);
    CHECK(r.tse_mean == doctest::Approx(0.5));
    CHECK(r.tse_std == 0.0);
    CHECK(r.gre_std == 0.0);
    CHECK(r.joint_mean == doctest::Approx(0.4));
    CHECK(r.bleu == doctest::Approx(1.0));
  }
  SUBCASE("duplicated list keeps the mean") {
    const auto one = aggregate({with_tse_turn(3, 0.2)}, cfg);
    const auto two = aggregate({with_tse_turn(3, 0.2), with_tse_turn(3, 0.2)}, cfg);
    CHECK(two.tse_mean == doctest::Approx(one.tse_mean));
    CHECK(two.tse_std == 0.0);
  }
  SUBCASE("two trajectories with tse 0.4 and 0.6") {
    TseConfig custom;
    custom.task_weights = {0.4, 0.0, 0.6};
    Trajectory a = with_tse_turn(1, 0.0);
    Trajectory b;
    b.turns = a.turns;
    b.milestones = completed_at(std::nullopt, std::nullopt, 1);
    const auto r = aggregate({a, b}, custom);
    CHECK(r.tse_mean == doctest::Approx(0.5));
    CHECK(r.tse_std == doctest::Approx(std::sqrt(0.02)));
  }
  CHECK_THROWS_AS(aggregate({}, cfg), InputError);
}

TEST_CASE("metric csv round trip and header") {
  MetricReport r{"no-expert", 200, 0.125, 0.5, 7.25, 1.0 / 3.0, 0.1, 0.7};
  std::stringstream buf;
  write_metric_csv(buf, {r, r});
  std::string header;
  std::getline(std::stringstream(buf.str()), header);
  CHECK(header == "variant,episodes,tse_mean,tse_std,gre_mean,gre_std,bleu,joint_mean");
  const auto back = read_metric_csv(buf);
  REQUIRE(back.size() == 2);
  CHECK(back[0] == r);
  CHECK(from_csv_row(to_csv_row(r)) == r);
  std::stringstream bad("a,b\n");
  CHECK_THROWS_AS(read_metric_csv(bad), InputError);
}

TEST_CASE("tse config validation") {
  TseConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.decay = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = TseConfig{};
  cfg.task_weights = {0.5, 0.5, 0.5};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
