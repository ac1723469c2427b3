#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "gopo/core.hpp"

namespace gopo {

// One-line JSON record per episode. Only the persisted subset of a Trajectory
// survives decoding: per-turn intent/emotion/turn, the chosen skills, response
// tokens and the reward breakdown. encode(decode(line)) == line byte-wise.
std::string encode_trajectory(const Trajectory& t);
Trajectory decode_trajectory(std::string_view line);

void write_jsonl(std::ostream& out, const std::vector<Trajectory>& trajectories);
std::vector<Trajectory> read_jsonl(std::istream& in);

}  // namespace gopo
