#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "gopo/config.hpp"
#include "gopo/metrics.hpp"
#include "gopo/rewards.hpp"
#include "gopo/trainer.hpp"

namespace py = pybind11;
using namespace gopo;

namespace {

GlobalConfig config_from(const std::optional<std::string>& text) {
  return text ? parse_config(*text) : default_config();
}

py::dict to_dict(const MetricReport& r) {
  py::dict d;
  d["variant"] = r.variant;
  d["episodes"] = r.episodes;
  d["tse_mean"] = r.tse_mean;
  d["tse_std"] = r.tse_std;
  d["gre_mean"] = r.gre_mean;
  d["gre_std"] = r.gre_std;
  d["bleu"] = r.bleu;
  d["joint_mean"] = r.joint_mean;
  return d;
}

py::list to_list(const std::vector<MetricReport>& rows) {
  py::list out;
  for (const auto& r : rows) out.append(to_dict(r));
  return out;
}

}  // namespace

PYBIND11_MODULE(_gopo, m) {
  m.doc() = "Hierarchical dialogue policy training: rewards, metrics and training runs";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
  py::register_exception<StateError>(m, "StateError", PyExc_RuntimeError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_FloatingPointError);

  m.def("default_config_json", [] { return std::string(default_config_text()); });
  m.def("normalize_config", [](const std::string& text) { return to_json(parse_config(text)); }, py::arg("text"),
        "Validate a configuration and return its canonical JSON.");

  m.def("relevance", [](SkillId skill, const std::vector<SkillId>& teacher) {
    return relevance(skill, SkillSequence(teacher));
  }, py::arg("skill"), py::arg("teacher"));
  m.def("esndcg", [](const std::vector<SkillId>& pred, const std::vector<SkillId>& teacher, bool dedupe) {
    return esndcg(SkillSequence(pred), SkillSequence(teacher), dedupe);
  }, py::arg("pred"), py::arg("teacher"), py::arg("dedupe") = true);
  m.def("csa_reward", [](const DimScores& scores, const std::optional<std::string>& config) {
    return csa_reward(scores, config_from(config).reward);
  }, py::arg("dim_scores"), py::arg("config") = py::none());
  m.def("joint_weights", [](int turn, int horizon, const std::optional<std::string>& config) {
    const JointWeights w = joint_weights(turn, horizon, config_from(config).reward);
    return std::make_pair(w.expert, w.csa);
  }, py::arg("turn"), py::arg("horizon"), py::arg("config") = py::none());
  m.def("tse", [](const std::array<std::optional<int>, kNumMilestones>& turns, const std::optional<std::string>& config) {
    MilestoneRecord rec;
    for (int k = 0; k < kNumMilestones; ++k) {
      rec.completed[k] = turns[k].has_value();
      rec.turns[k] = turns[k];
    }
    return tse(rec, config_from(config).tse);
  }, py::arg("turns"), py::arg("config") = py::none(),
        "TSE of one dialogue given the completion turn of each milestone (None when missed).");
  m.def("bleu", py::overload_cast<const std::vector<std::vector<TokenId>>&, const std::vector<std::vector<TokenId>>&,
                                  int>(&bleu),
        py::arg("candidates"), py::arg("references"), py::arg("max_n") = 4);

  m.def("train", [](const std::string& config, const std::filesystem::path& run_dir, int workers) {
    const GlobalConfig cfg = parse_config(config);
    std::vector<MetricReport> evaluations;
    {
      py::gil_scoped_release release;
      evaluations = train(cfg, run_dir, TrainOptions{workers}).evaluations;
    }
    return to_list(evaluations);
  }, py::arg("config"), py::arg("run_dir"), py::arg("workers") = 1,
        "Train one run and return its evaluation rows, the first at step 0.");
  m.def("ablate", [](const std::string& config, const std::filesystem::path& out_dir, int workers) {
    const GlobalConfig cfg = parse_config(config);
    std::vector<MetricReport> rows;
    {
      py::gil_scoped_release release;
      rows = ablate(cfg, out_dir, TrainOptions{workers});
    }
    return to_list(rows);
  }, py::arg("config"), py::arg("out_dir"), py::arg("workers") = 1);
  m.def("evaluate", [](const std::string& config, const std::filesystem::path& checkpoint_dir, int episodes,
                       std::optional<std::uint64_t> seed, int workers) {
    const GlobalConfig cfg = parse_config(config);
    if (episodes < 1) throw InputError("episodes must be positive");
    MetricReport report;
    {
      py::gil_scoped_release release;
      const AgentSet agents = load_latest_agents(checkpoint_dir, cfg);
      const auto trajectories =
          evaluate_episodes(cfg.env, agents, cfg.reward, seed.value_or(cfg.train.seed), episodes, workers);
      report = aggregate(trajectories, cfg.tse, to_string(agents.variant));
    }
    return to_dict(report);
  }, py::arg("config"), py::arg("checkpoint_dir"), py::arg("episodes"), py::arg("seed") = py::none(),
        py::arg("workers") = 1);
}
