#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "gopo/metrics.hpp"
#include "gopo/rewards.hpp"
#include "gopo/simenv.hpp"

namespace gopo {

enum class Variant { kFull, kNoExpert, kUntrained };

std::string to_string(Variant v);
Variant parse_variant(std::string_view name);  // "full" | "no-expert" | "untrained"

struct TrainConfig {
  int episodes = 15000;
  double discount = 0.99;
  int batch_size = 4;
  double lr_actor = 3e-3;
  double lr_critic = 3e-3;
  double lr_csa = 6e-3;
  double entropy_coeff = 0.001;  // weight of the expert's entropy bonus
  double lambda_p = 1.0;
  double lambda_s = 1.0;
  double lambda_d = 0.01;
  int eval_every = 1000;
  int eval_episodes = 200;
  std::uint64_t seed = 1;
  Variant variant = Variant::kFull;
  int hidden_units = 64;
  double grad_clip = 5.0;
  int checkpoint_every = 5000;
  std::vector<std::uint64_t> ablation_seeds{1, 2, 3};

  void validate() const;  // throws ConfigError
  bool operator==(const TrainConfig&) const = default;
};

struct GlobalConfig {
  EnvConfig env;
  RewardConfig reward;
  TseConfig tse;
  TrainConfig train;
  std::string output_dir = "runs/default";

  void validate() const;
  bool operator==(const GlobalConfig&) const = default;
};

/// Strict parse: every key must be present and no unknown key is accepted.
/// Errors name the offending key ("env.horizon"). A string-valued
/// env.scenario_table is read as a JSON file relative to `base_dir`.
GlobalConfig parse_config(std::string_view json_text, const std::filesystem::path& base_dir = {});
GlobalConfig load_config(const std::filesystem::path& path);

/// The configuration shipped in configs/default.json, compiled in.
GlobalConfig default_config();
std::string_view default_config_text();

/// Serializes with the scenario table inline; parse_config(to_json(c)) == c.
std::string to_json(const GlobalConfig& cfg);

}  // namespace gopo
