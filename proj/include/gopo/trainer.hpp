#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "gopo/agents.hpp"
#include "gopo/config.hpp"
#include "gopo/metrics.hpp"
#include "gopo/neural.hpp"
#include "gopo/rewards.hpp"
#include "gopo/simenv.hpp"

namespace gopo {

/// Seed of the environment and agent streams of one episode.
std::uint64_t episode_seed(std::uint64_t train_seed, std::uint64_t episode_id);
/// Seed of the i-th evaluation episode; the evaluation set is the same at every
/// evaluation point of a run.
std::uint64_t eval_episode_seed(std::uint64_t train_seed, std::uint64_t index);

/// Plays one episode. Without an expert the agent is given a null constraint
/// and the expert reward is zero. Throws ConfigError when the agents were
/// built for a different environment.
Trajectory rollout(Environment& env, const ExpertPolicy* expert, const CsaPolicy& csa, const RewardConfig& reward,
                   std::uint64_t episode_id, std::uint64_t seed, bool greedy);

/// TD(0) advantages of the joint reward: R_t + discount * V(s_{t+1}) - V(s_t),
/// with the value after the last turn taken as zero.
std::vector<double> compute_advantages(const Trajectory& trajectory, const Mlp& critic, const DialogueSpace& space,
                                       double discount);

/// Networks and optimizer state of one run.
struct AgentSet {
  Variant variant = Variant::kFull;
  // Always present; its actor acts only in the full variant, its critic
  // supplies the baseline in every trained variant.
  ExpertPolicy expert;
  CsaPolicy csa;
  AdamState actor_opt;
  AdamState critic_opt;
  AdamState csa_opt;

  static AgentSet initial(const GlobalConfig& cfg);
  // The untrained variant keeps the full hierarchy at its initial weights.
  const ExpertPolicy* acting_expert() const { return variant == Variant::kNoExpert ? nullptr : &expert; }
};

struct UpdateStats {
  double mean_joint_reward = 0.0;  // mean over the batch of per-episode mean joint reward
  double expert_loss = 0.0;        // per-turn means
  double critic_loss = 0.0;
  double csa_loss = 0.0;
};

/// One synchronous update from a batch of completed episodes. Gradients are
/// averaged over every turn of the batch and clipped per network.
UpdateStats update(AgentSet& agents, const std::vector<Trajectory>& batch, const TrainConfig& cfg, int workers = 1);

/// Greedy evaluation over the fixed evaluation set.
std::vector<Trajectory> evaluate_episodes(const EnvConfig& env, const AgentSet& agents, const RewardConfig& reward,
                                          std::uint64_t train_seed, int episodes, int workers = 1);

inline constexpr const char* kCurveCsvHeader = "step,mean_joint_reward,expert_loss,csa_loss";

struct CurvePoint {
  long step = 0;  // training episodes completed
  double mean_joint_reward = 0.0;
  double expert_loss = 0.0;
  double csa_loss = 0.0;
  bool operator==(const CurvePoint&) const = default;
};

std::string to_csv_row(const CurvePoint& p);
CurvePoint curve_point_from_csv_row(const std::string& line);

struct TrainOptions {
  int workers = 1;
};

struct TrainResult {
  std::vector<MetricReport> evaluations;  // chronological, first row at step 0
  std::vector<CurvePoint> curve;
  MetricReport final_report;
  std::vector<Trajectory> final_eval;
  AgentSet agents;
};

/// Runs training and populates `run_dir` with config.copy, trajectories.jsonl,
/// metrics.csv, curve.csv, report.csv, eval.jsonl and checkpoints/.
TrainResult train(const GlobalConfig& cfg, const std::filesystem::path& run_dir, const TrainOptions& options = {});

/// Trains every variant for every ablation seed under `out_dir` and writes
/// ablation.csv with one row per variant (full, no-expert, untrained), each
/// pooling the final evaluation episodes over seeds.
std::vector<MetricReport> ablate(const GlobalConfig& cfg, const std::filesystem::path& out_dir,
                                 const TrainOptions& options = {});

void save_agents(const std::filesystem::path& dir, long step, const AgentSet& agents);
/// Loads the checkpoints with the highest step in `dir`. The variant is full
/// when an expert checkpoint exists and no-expert otherwise. Throws
/// ConfigError on a missing directory or a shape mismatch with `cfg`.
AgentSet load_latest_agents(const std::filesystem::path& dir, const GlobalConfig& cfg);

}  // namespace gopo
