#include "cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "gopo/config.hpp"
#include "gopo/trainer.hpp"

namespace gopo::cli {

namespace fs = std::filesystem;

namespace {

// Missing inputs, invalid flags or mismatched checkpoints; maps to exit 1.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

GlobalConfig read_config(const std::string& path) {
  if (!fs::exists(path)) throw UsageError("config file '" + path + "' does not exist");
  return load_config(path);
}

std::vector<MetricReport> read_metrics(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read '" + path.string() + "'");
  return read_metric_csv(in);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out || !(out << text)) throw std::runtime_error("cannot write '" + path.string() + "'");
}

std::string metric_csv(const std::vector<MetricReport>& rows) {
  std::ostringstream os;
  write_metric_csv(os, rows);
  return os.str();
}

struct TrainArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  int workers = 1;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  GlobalConfig cfg = read_config(a.config);
  if (a.seed) cfg.train.seed = *a.seed;
  const fs::path run_dir = a.out.empty() ? fs::path(cfg.output_dir) : fs::path(a.out);
  TrainResult r = train(cfg, run_dir, TrainOptions{a.workers});
  out << "run directory: " << run_dir.string() << '\n';
  out << kMetricCsvHeader << '\n' << to_csv_row(r.final_report) << '\n';
  return kOk;
}

struct EvalArgs {
  std::string checkpoint_dir;
  int episodes = 0;
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  int workers = 1;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  GlobalConfig cfg = read_config(a.config);
  if (a.episodes < 1) throw UsageError("--episodes must be positive");
  const AgentSet agents = load_latest_agents(a.checkpoint_dir, cfg);
  const std::uint64_t seed = a.seed.value_or(cfg.train.seed);
  const auto trajectories = evaluate_episodes(cfg.env, agents, cfg.reward, seed, a.episodes, a.workers);
  const MetricReport report = aggregate(trajectories, cfg.tse, to_string(agents.variant));
  const std::string csv = metric_csv({report});
  if (!a.out.empty()) write_text(a.out, csv);
  out << csv;
  return kOk;
}

struct AblateArgs {
  std::string config;
  std::string out;
  int workers = 1;
};

int cmd_ablate(const AblateArgs& a, std::ostream& out) {
  const GlobalConfig cfg = read_config(a.config);
  const auto rows = ablate(cfg, a.out, TrainOptions{a.workers});
  out << metric_csv(rows);
  return kOk;
}

struct ReportArgs {
  std::string runs;
  std::string format = "csv";
  std::string out;
};

// Every directory holding a metrics.csv, in path order.
std::vector<fs::path> find_runs(const fs::path& root) {
  std::vector<fs::path> runs;
  if (fs::exists(root / "metrics.csv")) runs.push_back(root);
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (entry.is_directory() && fs::exists(entry.path() / "metrics.csv")) runs.push_back(entry.path());
  }
  std::sort(runs.begin(), runs.end());
  return runs;
}

int cmd_report(const ReportArgs& a, std::ostream& out) {
  if (a.format != "csv") throw UsageError("unsupported report format '" + a.format + "'");
  const fs::path root(a.runs);
  if (!fs::is_directory(root)) throw UsageError("runs directory '" + a.runs + "' does not exist");
  const auto runs = find_runs(root);
  if (runs.empty()) throw UsageError("no runs under '" + a.runs + "'");

  const fs::path out_dir = a.out.empty() ? root : fs::path(a.out);
  std::vector<MetricReport> merged;
  for (const fs::path& run : runs) {
    const auto rows = read_metrics(run / "metrics.csv");
    if (rows.empty()) throw UsageError("'" + (run / "metrics.csv").string() + "' has no rows");
    merged.push_back(rows.back());

    std::string name = fs::relative(run, root).generic_string();
    if (name == ".") name = run.filename().string();
    std::replace(name.begin(), name.end(), '/', '_');
    std::ostringstream series;
    series << kCurveCsvHeader << '\n';
    if (std::ifstream curve(run / "curve.csv", std::ios::binary); curve) {
      std::string line;
      std::getline(curve, line);
      while (std::getline(curve, line)) {
        if (!line.empty()) series << to_csv_row(curve_point_from_csv_row(line)) << '\n';
      }
    }
    write_text(out_dir / "series" / (name + ".csv"), series.str());
  }
  const std::string csv = metric_csv(merged);
  write_text(out_dir / "merged.csv", csv);
  out << csv;
  return kOk;
}

}  // namespace

void configure_logging(std::ostream& err) {
  const char* raw = std::getenv("GOPO_LOG_LEVEL");
  const std::string level = raw != nullptr ? raw : "info";
  if (level == "error") {
    spdlog::set_level(spdlog::level::err);
  } else if (level == "info") {
    spdlog::set_level(spdlog::level::info);
  } else if (level == "debug") {
    spdlog::set_level(spdlog::level::debug);
  } else {
    spdlog::set_level(spdlog::level::info);
    err << "warning: GOPO_LOG_LEVEL must be error, info or debug; using info\n";
  }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hierarchical dialogue policy optimization lab", "gopo"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train agents and populate a run directory");
  train_cmd->add_option("config", train_args.config, "Configuration file")->required();
  train_cmd->add_option("--seed", train_args.seed, "Override train.seed");
  train_cmd->add_option("--out", train_args.out, "Run directory (default: output_dir from the config)");
  train_cmd->add_option("--workers", train_args.workers, "Parallel rollout workers")->check(CLI::PositiveNumber);

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "Greedy evaluation of the latest checkpoints");
  eval_cmd->add_option("--checkpoint-dir", eval_args.checkpoint_dir, "Directory of .ckpt files")->required();
  eval_cmd->add_option("--episodes", eval_args.episodes, "Evaluation episodes")->required();
  eval_cmd->add_option("--config", eval_args.config, "Configuration file")->required();
  eval_cmd->add_option("--seed", eval_args.seed, "Evaluation seed (default: train.seed)");
  eval_cmd->add_option("--out", eval_args.out, "Also write the report to this CSV file");
  eval_cmd->add_option("--workers", eval_args.workers, "Parallel rollout workers")->check(CLI::PositiveNumber);

  AblateArgs ablate_args;
  auto* ablate_cmd = app.add_subcommand("ablate", "Train full, no-expert and untrained variants over shared seeds");
  ablate_cmd->add_option("--config", ablate_args.config, "Configuration file")->required();
  ablate_cmd->add_option("--out", ablate_args.out, "Output directory")->required();
  ablate_cmd->add_option("--workers", ablate_args.workers, "Parallel rollout workers")->check(CLI::PositiveNumber);

  ReportArgs report_args;
  auto* report_cmd = app.add_subcommand("report", "Merge run metrics and emit plot series");
  report_cmd->add_option("--runs", report_args.runs, "Directory containing run directories")->required();
  report_cmd->add_option("--format", report_args.format, "Output format (csv)");
  report_cmd->add_option("--out", report_args.out, "Output directory (default: the runs directory)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kInvalidInput;
  }

  try {
    if (*train_cmd) return cmd_train(train_args, out);
    if (*eval_cmd) return cmd_eval(eval_args, out);
    if (*ablate_cmd) return cmd_ablate(ablate_args, out);
    if (*report_cmd) return cmd_report(report_args, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kInvalidInput;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kInvalidInput;
  } catch (const InputError& e) {
    err << "error: " << e.what() << '\n';
    return kInvalidInput;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntimeFailure;
  }
  return kInvalidInput;
}

}  // namespace gopo::cli
