#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "gopo/config.hpp"
#include "gopo/trainer.hpp"
#include "gopo/trajectory_io.hpp"

using namespace gopo;

namespace fs = std::filesystem;

namespace {

GlobalConfig small_config() {
  GlobalConfig cfg = default_config();
  cfg.train.episodes = 24;
  cfg.train.batch_size = 4;
  cfg.train.eval_every = 12;
  cfg.train.eval_episodes = 6;
  cfg.train.checkpoint_every = 12;
  cfg.train.hidden_units = 8;
  cfg.train.ablation_seeds = {1, 2};
  return cfg;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::current_path() / "trainer-test-runs" / name;
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::vector<Trajectory> read_log(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return read_jsonl(in);
}

Trajectory hand_trajectory(const std::vector<double>& joints) {
  Trajectory t;
  for (std::size_t i = 0; i < joints.size(); ++i) {
    TrajectoryTurn turn;
    turn.turn = static_cast<int>(i) + 1;
    turn.expert_state.turn = turn.turn;
    turn.expert_state.intent = static_cast<int>(i % 3);
    turn.expert_state.phase = static_cast<int>(i % 2);
    turn.reward.joint = joints[i];
    t.turns.push_back(turn);
  }
  return t;
}

}  // namespace

TEST_CASE("episode seeds") {
  CHECK(episode_seed(1, 5) == episode_seed(1, 5));
  CHECK(episode_seed(1, 5) != episode_seed(1, 6));
  CHECK(episode_seed(1, 5) != episode_seed(2, 5));
  CHECK(episode_seed(1, 5) != eval_episode_seed(1, 5));
}

TEST_CASE("rollout records a fully scored, consistent trajectory") {
  const GlobalConfig cfg = small_config();
  const AgentSet agents = AgentSet::initial(cfg);
  Environment env(cfg.env);
  for (std::uint64_t id = 0; id < 20; ++id) {
    const Trajectory t = rollout(env, &agents.expert, agents.csa, cfg.reward, id, episode_seed(1, id), false);
    CHECK(t.episode_id == id);
    CHECK(validate_trajectory(t, cfg.env.skill_pool.size(), cfg.env.horizon).ok);
    CHECK(!t.turns.empty());
    double prev_w = 0.0;
    for (const auto& turn : t.turns) {
      const auto& r = turn.reward;
      // The logged joint is recomputable from the logged parts.
      CHECK(r.joint == r.w_expert * r.r_expert + r.w_csa * r.r_csa);
      CHECK(r.r_expert >= 0.0);
      CHECK(r.r_expert <= 1.0);
      CHECK(r.r_csa >= 0.0);
      CHECK(r.r_csa <= 1.0);
      CHECK(r.w_expert >= prev_w);
      CHECK(r.w_csa >= cfg.reward.w_csa_floor);
      prev_w = r.w_expert;
      Environment probe(cfg.env);
      CHECK(r.r_expert == esndcg(turn.skills, probe.teacher_sequence(turn.expert_state), true));
    }
  }
}

TEST_CASE("rollout is reproducible and greedy rollouts ignore sampling noise") {
  const GlobalConfig cfg = small_config();
  const AgentSet agents = AgentSet::initial(cfg);
  Environment a(cfg.env), b(cfg.env);
  const Trajectory x = rollout(a, &agents.expert, agents.csa, cfg.reward, 3, 42, false);
  const Trajectory y = rollout(b, &agents.expert, agents.csa, cfg.reward, 3, 42, false);
  CHECK(encode_trajectory(x) == encode_trajectory(y));
}

TEST_CASE("rollout without an expert uses a null constraint and no expert reward") {
  const GlobalConfig cfg = small_config();
  const AgentSet agents = AgentSet::initial(cfg);
  Environment env(cfg.env);
  const Trajectory t = rollout(env, nullptr, agents.csa, cfg.reward, 0, 9, false);
  for (const auto& turn : t.turns) {
    CHECK(turn.skills.empty());
    CHECK(turn.reward.r_expert == 0.0);
    CHECK(turn.reward.dim_scores[1] == 0.0);
  }
}

TEST_CASE("rollout rejects agents built for another environment") {
  GlobalConfig cfg = small_config();
  const AgentSet agents = AgentSet::initial(cfg);
  cfg.env.max_response_length = 8;
  Environment env(cfg.env);
  CHECK_THROWS_AS(rollout(env, &agents.expert, agents.csa, cfg.reward, 0, 1, false), ConfigError);
}

TEST_CASE("TD(0) advantages") {
  const DialogueSpace space = DialogueSpace::from(default_config().env);
  const std::size_t in = expert_features(space, ExpertState{}).size();

  SUBCASE("zero critic, single turn") {
    const Mlp critic({in, 4, 1}, Head::kLinear);
    const auto adv = compute_advantages(hand_trajectory({0.37}), critic, space, 0.99);
    REQUIRE(adv.size() == 1);
    CHECK(adv[0] == 0.37);
  }
  SUBCASE("constant critic that is exact for its reward stream") {
    Mlp critic({in, 4, 1}, Head::kLinear);
    const double c = 0.8, g = 0.9;
    critic.parameters().values().back() = c;  // output bias
    const auto adv = compute_advantages(hand_trajectory({c * (1 - g), c * (1 - g), c}), critic, space, g);
    for (double a : adv) CHECK(std::abs(a) < 1e-12);
  }
  SUBCASE("three-turn hand computation") {
    std::mt19937_64 rng(1);
    const Mlp critic = Mlp::random({in, 6, 1}, Head::kLinear, rng);
    const Trajectory t = hand_trajectory({0.2, 0.5, 0.9});
    const double g = 0.95;
    double v[4] = {0, 0, 0, 0};
    for (int i = 0; i < 3; ++i) v[i] = critic.forward(expert_features(space, t.turns[i].expert_state))[0];
    const auto adv = compute_advantages(t, critic, space, g);
    CHECK(adv[0] == doctest::Approx(0.2 + g * v[1] - v[0]).epsilon(1e-14));
    CHECK(adv[1] == doctest::Approx(0.5 + g * v[2] - v[1]).epsilon(1e-14));
    CHECK(adv[2] == doctest::Approx(0.9 - v[2]).epsilon(1e-14));
  }
}

TEST_CASE("updates do not depend on the worker count") {
  const GlobalConfig cfg = small_config();
  AgentSet one = AgentSet::initial(cfg);
  AgentSet many = one;
  Environment env(cfg.env);
  std::vector<Trajectory> batch;
  for (std::uint64_t id = 0; id < 6; ++id) {
    batch.push_back(rollout(env, &one.expert, one.csa, cfg.reward, id, episode_seed(1, id), false));
  }
  const UpdateStats a = update(one, batch, cfg.train, 1);
  const UpdateStats b = update(many, batch, cfg.train, 3);
  CHECK(a.csa_loss == b.csa_loss);
  CHECK(one.expert.actor() == many.expert.actor());
  CHECK(one.expert.critic() == many.expert.critic());
  CHECK(one.csa.generator() == many.csa.generator());
}

TEST_CASE("variants decide which networks are trained") {
  GlobalConfig cfg = small_config();
  cfg.train.variant = Variant::kNoExpert;
  AgentSet agents = AgentSet::initial(cfg);
  const Mlp actor_before = agents.expert.actor();
  const Mlp critic_before = agents.expert.critic();
  Environment env(cfg.env);
  std::vector<Trajectory> batch{rollout(env, agents.acting_expert(), agents.csa, cfg.reward, 0, 3, false)};
  update(agents, batch, cfg.train);
  CHECK(agents.expert.actor() == actor_before);
  CHECK_FALSE(agents.expert.critic() == critic_before);
  CHECK(agents.acting_expert() == nullptr);

  cfg.train.variant = Variant::kUntrained;
  CHECK(AgentSet::initial(cfg).acting_expert() != nullptr);
}

TEST_CASE("training populates the run directory") {
  const GlobalConfig cfg = small_config();
  const fs::path dir = fresh_dir("layout");
  const TrainResult r = train(cfg, dir);
  for (const char* name : {"config.copy", "trajectories.jsonl", "metrics.csv", "curve.csv", "report.csv", "eval.jsonl"}) {
    CHECK_MESSAGE(fs::exists(dir / name), name);
  }
  for (const char* name : {"expert-0.ckpt", "critic-0.ckpt", "csa-0.ckpt", "expert-12.ckpt", "csa-24.ckpt"}) {
    CHECK_MESSAGE(fs::exists(dir / "checkpoints" / name), name);
  }
  CHECK(parse_config(slurp(dir / "config.copy")) == cfg);
  CHECK(r.evaluations.size() == 3);
  CHECK(r.curve.size() == 6);
  CHECK(r.curve.back().step == 24);
  CHECK(read_log(dir / "trajectories.jsonl").size() == 24);
  CHECK(read_log(dir / "eval.jsonl").size() == 6);

  std::ifstream metrics(dir / "metrics.csv");
  CHECK(read_metric_csv(metrics) == r.evaluations);

  SUBCASE("logged weights follow the schedule") {
    for (const Trajectory& t : read_log(dir / "trajectories.jsonl")) {
      double prev = 0.0;
      for (const auto& turn : t.turns) {
        CHECK(turn.reward.w_expert >= prev);
        CHECK(turn.reward.w_csa >= cfg.reward.w_csa_floor);
        prev = turn.reward.w_expert;
      }
    }
  }
  SUBCASE("latest checkpoints reload") {
    const AgentSet loaded = load_latest_agents(dir / "checkpoints", cfg);
    CHECK(loaded.variant == Variant::kFull);
    CHECK(loaded.expert.actor() == r.agents.expert.actor());
    CHECK(loaded.csa.generator() == r.agents.csa.generator());
    CHECK(loaded.csa_opt == r.agents.csa_opt);
    GlobalConfig other = cfg;
    other.train.hidden_units = 16;
    CHECK_THROWS_AS(load_latest_agents(dir / "checkpoints", other), ConfigError);
    CHECK_THROWS_AS(load_latest_agents(dir / "missing", cfg), ConfigError);
  }
}

TEST_CASE("zero episodes emits only the initial evaluation") {
  GlobalConfig cfg = small_config();
  cfg.train.episodes = 0;
  const fs::path dir = fresh_dir("empty");
  const TrainResult r = train(cfg, dir);
  CHECK(r.evaluations.size() == 1);
  CHECK(r.curve.empty());
  CHECK(slurp(dir / "trajectories.jsonl").empty());
}

TEST_CASE("identical configurations give identical files") {
  const GlobalConfig cfg = small_config();
  const fs::path a = fresh_dir("det-a"), b = fresh_dir("det-b"), c = fresh_dir("det-c");
  train(cfg, a);
  train(cfg, b, TrainOptions{3});
  for (const char* name : {"trajectories.jsonl", "metrics.csv", "curve.csv", "eval.jsonl"}) {
    CHECK_MESSAGE(slurp(a / name) == slurp(b / name), name);
  }
  GlobalConfig reseeded = cfg;
  reseeded.train.seed = 2;
  train(reseeded, c);
  CHECK(slurp(a / "trajectories.jsonl") != slurp(c / "trajectories.jsonl"));
}

TEST_CASE("non-finite updates abort with a diagnostic dump") {
  GlobalConfig cfg = small_config();
  cfg.train.lr_csa = std::numeric_limits<double>::max();
  cfg.train.grad_clip = std::numeric_limits<double>::max();
  const fs::path dir = fresh_dir("nan");
  CHECK_THROWS_AS(train(cfg, dir), NumericError);
  CHECK(fs::exists(dir / "nan_dump.txt"));
  CHECK(fs::exists(dir / "nan_checkpoints"));
}

TEST_CASE("ablation writes one pooled row per variant") {
  GlobalConfig cfg = small_config();
  cfg.train.episodes = 8;
  const fs::path a = fresh_dir("ablate-a"), b = fresh_dir("ablate-b");
  const auto rows = ablate(cfg, a);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].variant == "full");
  CHECK(rows[1].variant == "no-expert");
  CHECK(rows[2].variant == "untrained");
  for (const auto& r : rows) CHECK(r.episodes == 2 * 6);
  std::ifstream csv(a / "ablation.csv");
  CHECK(read_metric_csv(csv) == rows);
  CHECK(fs::exists(a / "no-expert-seed2" / "metrics.csv"));
  CHECK_FALSE(fs::exists(a / "no-expert-seed2" / "checkpoints" / "expert-0.ckpt"));

  const auto again = ablate(cfg, b);
  CHECK(again[2] == rows[2]);
  CHECK(slurp(a / "untrained-seed1" / "metrics.csv") == slurp(b / "untrained-seed1" / "metrics.csv"));
}

TEST_CASE("curve rows round trip") {
  const CurvePoint p{40, 0.125, -0.5, 1.0 / 3.0};
  CHECK(curve_point_from_csv_row(to_csv_row(p)) == p);
  CHECK(std::string(kCurveCsvHeader) == "step,mean_joint_reward,expert_loss,csa_loss");
}
