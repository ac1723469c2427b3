#include "gopo/trajectory_io.hpp"

#include <istream>
#include <ostream>

#include <json.hpp>

namespace gopo {

using nlohmann::json;

std::string encode_trajectory(const Trajectory& t) {
  json turns = json::array();
  for (const TrajectoryTurn& turn : t.turns) {
    const RewardBreakdown& r = turn.reward;
    turns.push_back({
        {"turn", turn.turn},
        {"intent", turn.expert_state.intent},
        {"emotion", turn.expert_state.emotion},
        {"skills", turn.skills.ids()},
        {"response_tokens", turn.response.tokens()},
        {"r_expert", r.r_expert},
        {"r_csa", r.r_csa},
        {"dim_scores", r.dim_scores},
        {"w_expert", r.w_expert},
        {"w_csa", r.w_csa},
        {"joint", r.joint},
    });
  }

  json milestone_turns = json::array();
  for (const auto& n : t.milestones.turns) {
    milestone_turns.push_back(n ? json(*n) : json(nullptr));
  }

  json record = {
      {"episode_id", t.episode_id},
      {"seed", t.seed},
      {"turns", std::move(turns)},
      {"milestones", {{"completed", t.milestones.completed}, {"turns", std::move(milestone_turns)}}},
      {"terminal_reason", t.terminal_reason},
  };
  return record.dump();
}

Trajectory decode_trajectory(std::string_view line) {
  json record;
  try {
    record = json::parse(line);
  } catch (const json::parse_error& e) {
    throw InputError(std::string("malformed trajectory record: ") + e.what());
  }

  try {
    Trajectory t;
    t.episode_id = record.at("episode_id").get<std::uint64_t>();
    t.seed = record.at("seed").get<std::uint64_t>();
    t.terminal_reason = record.at("terminal_reason").get<std::string>();

    for (const json& j : record.at("turns")) {
      TrajectoryTurn turn;
      turn.turn = j.at("turn").get<int>();
      turn.expert_state.turn = turn.turn;
      turn.expert_state.intent = j.at("intent").get<int>();
      turn.expert_state.emotion = j.at("emotion").get<int>();
      turn.skills = SkillSequence(j.at("skills").get<std::vector<SkillId>>());
      turn.csa_state.constraint = turn.skills;
      turn.response = Response(j.at("response_tokens").get<std::vector<TokenId>>());
      RewardBreakdown& r = turn.reward;
      r.r_expert = j.at("r_expert").get<double>();
      r.r_csa = j.at("r_csa").get<double>();
      r.dim_scores = j.at("dim_scores").get<DimScores>();
      r.w_expert = j.at("w_expert").get<double>();
      r.w_csa = j.at("w_csa").get<double>();
      r.joint = j.at("joint").get<double>();
      t.turns.push_back(std::move(turn));
    }

    const json& m = record.at("milestones");
    t.milestones.completed = m.at("completed").get<std::array<bool, kNumMilestones>>();
    const json& turns = m.at("turns");
    if (turns.size() != kNumMilestones) throw InputError("milestones.turns must have 3 entries");
    for (std::size_t i = 0; i < kNumMilestones; ++i) {
      if (!turns[i].is_null()) t.milestones.turns[i] = turns[i].get<int>();
    }
    return t;
  } catch (const json::exception& e) {
    throw InputError(std::string("invalid trajectory record: ") + e.what());
  }
}

void write_jsonl(std::ostream& out, const std::vector<Trajectory>& trajectories) {
  for (const Trajectory& t : trajectories) out << encode_trajectory(t) << '\n';
}

std::vector<Trajectory> read_jsonl(std::istream& in) {
  std::vector<Trajectory> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(decode_trajectory(line));
  }
  return out;
}

}  // namespace gopo
