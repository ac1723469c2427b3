#include "gopo/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <regex>
#include <sstream>
#include <thread>

#include <spdlog/spdlog.h>

#include "gopo/trajectory_io.hpp"

namespace gopo {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kTrainStream = 1;
constexpr std::uint64_t kEvalStream = 2;
constexpr std::uint64_t kExpertInitStream = 3;
constexpr std::uint64_t kCsaInitStream = 4;

std::string format_double(double x) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, end);
}

double parse_double(const std::string& s) {
  double x = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw InputError("malformed number '" + s + "'");
  return x;
}

// Runs f(0..n-1) on up to `workers` threads. Results must be written to
// per-index slots so the schedule never affects outputs.
template <typename F>
void parallel_for(std::size_t n, int workers, F&& f) {
  const std::size_t threads = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(workers, 1)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = next++; i < n; i = next++) f(i);
      } catch (...) {
        errors[w] = std::current_exception();
        next = n;
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

void check_finite(double loss, const ParameterVector& grad, const char* what) {
  if (!std::isfinite(loss) || !grad.all_finite()) throw NumericError(std::string("non-finite ") + what);
}

double mean_joint(const Trajectory& t) {
  if (t.turns.empty()) return 0.0;
  double s = 0.0;
  for (const auto& turn : t.turns) s += turn.reward.joint;
  return s / static_cast<double>(t.turns.size());
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  return out;
}

void write_file(const fs::path& path, const std::string& text) {
  auto out = open_output(path);
  out << text;
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

}  // namespace

std::uint64_t episode_seed(std::uint64_t train_seed, std::uint64_t episode_id) {
  return derive_seed(derive_seed(train_seed, kTrainStream), episode_id);
}

std::uint64_t eval_episode_seed(std::uint64_t train_seed, std::uint64_t index) {
  return derive_seed(derive_seed(train_seed, kEvalStream), index);
}

Trajectory rollout(Environment& env, const ExpertPolicy* expert, const CsaPolicy& csa, const RewardConfig& reward,
                   std::uint64_t episode_id, std::uint64_t seed, bool greedy) {
  const DialogueSpace space = DialogueSpace::from(env.config());
  if (csa.space() != space || (expert != nullptr && expert->space() != space)) {
    throw ConfigError("agents were built for a different environment");
  }
  std::mt19937_64 agent_rng(derive_seed(seed, 1));
  EnvObservation obs = env.reset(derive_seed(seed, 0));
  const int horizon = env.config().horizon;

  Trajectory traj;
  traj.episode_id = episode_id;
  traj.seed = seed;
  while (true) {
    TrajectoryTurn turn;
    turn.turn = obs.expert_state.turn;
    turn.expert_state = obs.expert_state;
    const SkillSequence teacher = env.teacher_sequence(obs.expert_state);
    turn.skills = expert != nullptr ? expert->act(obs.expert_state, agent_rng, greedy).skills : SkillSequence{};
    turn.csa_state = obs.csa_state(turn.skills);
    turn.response = csa.act(turn.csa_state, agent_rng, greedy).response;
    turn.reference = env.reference_response(obs.expert_state);

    StepResult step = env.step(turn.skills, turn.response);
    const double r_e = expert != nullptr ? esndcg(turn.skills, teacher, reward.dedupe_predictions) : 0.0;
    const double r_a = csa_reward(step.dim_scores, reward);
    const JointWeights w = joint_weights(turn.turn, horizon, reward);
    turn.reward = RewardBreakdown{r_e, r_a, step.dim_scores, w.expert, w.csa, joint_reward(r_e, r_a, w)};
    traj.turns.push_back(std::move(turn));
    if (step.done) {
      traj.terminal_reason = step.terminal_reason;
      break;
    }
    obs = std::move(step.next);
  }
  traj.milestones = env.milestones();
  return traj;
}

std::vector<double> compute_advantages(const Trajectory& trajectory, const Mlp& critic, const DialogueSpace& space,
                                       double discount) {
  const std::size_t n = trajectory.turns.size();
  std::vector<double> values(n + 1, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    values[t] = critic.forward(expert_features(space, trajectory.turns[t].expert_state))[0];
  }
  std::vector<double> adv(n);
  for (std::size_t t = 0; t < n; ++t) {
    adv[t] = trajectory.turns[t].reward.joint + discount * values[t + 1] - values[t];
  }
  return adv;
}

AgentSet AgentSet::initial(const GlobalConfig& cfg) {
  const DialogueSpace space = DialogueSpace::from(cfg.env);
  const auto hidden = static_cast<std::size_t>(cfg.train.hidden_units);
  std::mt19937_64 expert_rng(derive_seed(cfg.train.seed, kExpertInitStream));
  std::mt19937_64 csa_rng(derive_seed(cfg.train.seed, kCsaInitStream));
  ExpertPolicy expert(space, hidden, cfg.train.entropy_coeff, expert_rng);
  CsaPolicy csa(space, hidden, CsaLossWeights{cfg.train.lambda_p, cfg.train.lambda_s, cfg.train.lambda_d}, csa_rng);
  AdamState actor_opt = AdamState::for_parameters(expert.actor().parameters());
  AdamState critic_opt = AdamState::for_parameters(expert.critic().parameters());
  AdamState csa_opt = AdamState::for_parameters(csa.generator().parameters());
  return AgentSet{cfg.train.variant,   std::move(expert),     std::move(csa), std::move(actor_opt),
                  std::move(critic_opt), std::move(csa_opt)};
}

UpdateStats update(AgentSet& agents, const std::vector<Trajectory>& batch, const TrainConfig& cfg, int workers) {
  struct EpisodeGrads {
    ParameterVector actor, critic, csa;
    double expert_loss = 0.0, critic_loss = 0.0, csa_loss = 0.0;
    std::size_t turns = 0;
  };
  const bool train_expert = agents.variant == Variant::kFull;
  const ExpertPolicy& expert = agents.expert;
  const CsaPolicy& csa = agents.csa;
  const DialogueSpace& space = expert.space();

  std::vector<EpisodeGrads> per(batch.size());
  parallel_for(batch.size(), workers, [&](std::size_t i) {
    const Trajectory& traj = batch[i];
    EpisodeGrads g;
    g.actor = ParameterVector::zeros(expert.actor().parameters().layout());
    g.critic = ParameterVector::zeros(expert.critic().parameters().layout());
    g.csa = ParameterVector::zeros(csa.generator().parameters().layout());
    const std::vector<double> adv = compute_advantages(traj, expert.critic(), space, cfg.discount);
    for (std::size_t t = 0; t < traj.turns.size(); ++t) {
      const TrajectoryTurn& turn = traj.turns[t];
      if (train_expert) {
        LossResult l = expert.loss(turn.expert_state, turn.skills, adv[t]);
        check_finite(l.loss, l.grad, "expert loss");
        g.actor += l.grad;
        g.expert_loss += l.loss;
      }
      const double target = adv[t] + expert.value(turn.expert_state);
      LossResult c = expert.critic_loss(turn.expert_state, target);
      check_finite(c.loss, c.grad, "critic loss");
      g.critic += c.grad;
      g.critic_loss += c.loss;

      CsaLossResult a = csa.loss(turn.csa_state, turn.response, adv[t]);
      check_finite(a.loss, a.grad, "csa loss");
      g.csa += a.grad;
      g.csa_loss += a.loss;
    }
    g.turns = traj.turns.size();
    per[i] = std::move(g);
  });

  UpdateStats stats;
  std::size_t turns = 0;
  ParameterVector actor = ParameterVector::zeros(expert.actor().parameters().layout());
  ParameterVector critic = ParameterVector::zeros(expert.critic().parameters().layout());
  ParameterVector gen = ParameterVector::zeros(csa.generator().parameters().layout());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    actor += per[i].actor;
    critic += per[i].critic;
    gen += per[i].csa;
    stats.expert_loss += per[i].expert_loss;
    stats.critic_loss += per[i].critic_loss;
    stats.csa_loss += per[i].csa_loss;
    stats.mean_joint_reward += mean_joint(batch[i]);
    turns += per[i].turns;
  }
  if (turns == 0) return stats;
  const double inv = 1.0 / static_cast<double>(turns);
  stats.expert_loss *= inv;
  stats.critic_loss *= inv;
  stats.csa_loss *= inv;
  stats.mean_joint_reward /= static_cast<double>(batch.size());

  if (train_expert) {
    actor *= inv;
    clip_global_norm(actor, cfg.grad_clip);
    adam_step(agents.expert.actor().parameters(), actor, agents.actor_opt, cfg.lr_actor);
  }
  critic *= inv;
  clip_global_norm(critic, cfg.grad_clip);
  adam_step(agents.expert.critic().parameters(), critic, agents.critic_opt, cfg.lr_critic);
  gen *= inv;
  clip_global_norm(gen, cfg.grad_clip);
  adam_step(agents.csa.generator().parameters(), gen, agents.csa_opt, cfg.lr_csa);
  return stats;
}

std::vector<Trajectory> evaluate_episodes(const EnvConfig& env, const AgentSet& agents, const RewardConfig& reward,
                                          std::uint64_t train_seed, int episodes, int workers) {
  std::vector<Trajectory> out(static_cast<std::size_t>(std::max(episodes, 0)));
  parallel_for(out.size(), workers, [&](std::size_t i) {
    Environment e(env);
    out[i] = rollout(e, agents.acting_expert(), agents.csa, reward, i, eval_episode_seed(train_seed, i), true);
  });
  return out;
}

std::string to_csv_row(const CurvePoint& p) {
  return std::to_string(p.step) + ',' + format_double(p.mean_joint_reward) + ',' + format_double(p.expert_loss) +
         ',' + format_double(p.csa_loss);
}

CurvePoint curve_point_from_csv_row(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (cells.size() != 4) throw InputError("curve row needs 4 columns: '" + line + "'");
  CurvePoint p;
  p.step = static_cast<long>(parse_double(cells[0]));
  p.mean_joint_reward = parse_double(cells[1]);
  p.expert_loss = parse_double(cells[2]);
  p.csa_loss = parse_double(cells[3]);
  return p;
}

void save_agents(const fs::path& dir, long step, const AgentSet& agents) {
  fs::create_directories(dir);
  const std::string suffix = "-" + std::to_string(step) + ".ckpt";
  auto save = [&](const std::string& name, const Mlp& net, const AdamState& opt) {
    auto out = open_output(dir / (name + suffix));
    save_checkpoint(out, net, opt);
    if (!out) throw std::runtime_error("write failed for checkpoint '" + name + suffix + "'");
  };
  if (agents.variant != Variant::kNoExpert) save("expert", agents.expert.actor(), agents.actor_opt);
  save("critic", agents.expert.critic(), agents.critic_opt);
  save("csa", agents.csa.generator(), agents.csa_opt);
}

AgentSet load_latest_agents(const fs::path& dir, const GlobalConfig& cfg) {
  if (!fs::is_directory(dir)) throw ConfigError("checkpoint directory '" + dir.string() + "' does not exist");
  const std::regex pattern(R"(csa-(\d+)\.ckpt)");
  long best = -1;
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (std::regex_match(name, m, pattern)) best = std::max(best, std::stol(m[1].str()));
  }
  if (best < 0) throw ConfigError("no checkpoints in '" + dir.string() + "'");

  AgentSet agents = AgentSet::initial(cfg);
  const std::string suffix = "-" + std::to_string(best) + ".ckpt";
  auto load = [&](const std::string& name, Mlp& net, AdamState& opt) {
    const fs::path path = dir / (name + suffix);
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read checkpoint '" + path.string() + "'");
    Mlp loaded;
    AdamState state;
    try {
      load_checkpoint(in, loaded, state);
    } catch (const InputError& e) {
      throw ConfigError("checkpoint '" + path.string() + "': " + e.what());
    }
    if (loaded.sizes() != net.sizes() || loaded.head() != net.head()) {
      throw ConfigError("checkpoint '" + path.string() + "' does not match the configured network shape");
    }
    net = std::move(loaded);
    opt = std::move(state);
  };
  const bool has_expert = fs::exists(dir / ("expert" + suffix));
  if (has_expert) load("expert", agents.expert.actor(), agents.actor_opt);
  load("critic", agents.expert.critic(), agents.critic_opt);
  load("csa", agents.csa.generator(), agents.csa_opt);
  agents.variant = has_expert ? Variant::kFull : Variant::kNoExpert;
  return agents;
}

TrainResult train(const GlobalConfig& cfg, const fs::path& run_dir, const TrainOptions& options) {
  cfg.validate();
  const TrainConfig& tc = cfg.train;
  const fs::path ckpt_dir = run_dir / "checkpoints";
  try {
    fs::create_directories(ckpt_dir);
  } catch (const fs::filesystem_error& e) {
    throw std::runtime_error("cannot create run directory '" + run_dir.string() + "': " + e.what());
  }
  write_file(run_dir / "config.copy", to_json(cfg));

  AgentSet agents = AgentSet::initial(cfg);
  const std::string variant = to_string(tc.variant);
  const long total = tc.variant == Variant::kUntrained ? 0 : tc.episodes;

  std::vector<MetricReport> evaluations;
  std::vector<CurvePoint> curve;
  std::vector<Trajectory> final_eval;
  auto run_eval = [&](long step) {
    final_eval = evaluate_episodes(cfg.env, agents, cfg.reward, tc.seed, tc.eval_episodes, options.workers);
    evaluations.push_back(aggregate(final_eval, cfg.tse, variant));
    const MetricReport& r = evaluations.back();
    spdlog::info("[{} seed {}] step {}: tse {:.4f} gre {:.3f} bleu {:.4f} joint {:.4f}", variant, tc.seed, step,
                 r.tse_mean, r.gre_mean, r.bleu, r.joint_mean);
  };

  run_eval(0);
  save_agents(ckpt_dir, 0, agents);

  auto traj_out = open_output(run_dir / "trajectories.jsonl");
  Environment proto(cfg.env);
  long done = 0;
  try {
    while (done < total) {
      const long n = std::min<long>(tc.batch_size, total - done);
      std::vector<Trajectory> batch(static_cast<std::size_t>(n));
      parallel_for(batch.size(), options.workers, [&](std::size_t i) {
        Environment env = proto;
        const auto id = static_cast<std::uint64_t>(done) + i;
        batch[i] = rollout(env, agents.acting_expert(), agents.csa, cfg.reward, id, episode_seed(tc.seed, id), false);
      });
      write_jsonl(traj_out, batch);

      const UpdateStats stats = update(agents, batch, tc, options.workers);
      const long before = done;
      done += n;
      curve.push_back(CurvePoint{done, stats.mean_joint_reward, stats.expert_loss, stats.csa_loss});
      spdlog::debug("[{} seed {}] step {}: joint {:.4f} expert {:.4f} critic {:.4f} csa {:.4f}", variant, tc.seed,
                    done, stats.mean_joint_reward, stats.expert_loss, stats.critic_loss, stats.csa_loss);
      if (done / tc.eval_every != before / tc.eval_every || done == total) run_eval(done);
      if (done / tc.checkpoint_every != before / tc.checkpoint_every || done == total) {
        save_agents(ckpt_dir, done, agents);
      }
    }
  } catch (const NumericError& e) {
    std::ostringstream dump;
    dump << "error: " << e.what() << "\nstep: " << done << "\nbatch_size: " << tc.batch_size << "\n";
    write_file(run_dir / "nan_dump.txt", dump.str());
    save_agents(run_dir / "nan_checkpoints", done, agents);
    spdlog::error("aborting run: {} (diagnostics in {})", e.what(), (run_dir / "nan_dump.txt").string());
    throw;
  }
  traj_out.close();
  if (!traj_out) throw std::runtime_error("write failed for trajectories.jsonl");

  {
    auto out = open_output(run_dir / "metrics.csv");
    write_metric_csv(out, evaluations);
  }
  {
    auto out = open_output(run_dir / "curve.csv");
    out << kCurveCsvHeader << '\n';
    for (const CurvePoint& p : curve) out << to_csv_row(p) << '\n';
  }
  {
    auto out = open_output(run_dir / "report.csv");
    write_metric_csv(out, {evaluations.back()});
  }
  {
    auto out = open_output(run_dir / "eval.jsonl");
    write_jsonl(out, final_eval);
  }
  MetricReport final_report = evaluations.back();
  return TrainResult{std::move(evaluations), std::move(curve), std::move(final_report), std::move(final_eval),
                     std::move(agents)};
}

std::vector<MetricReport> ablate(const GlobalConfig& cfg, const fs::path& out_dir, const TrainOptions& options) {
  cfg.validate();
  std::vector<MetricReport> rows;
  for (Variant v : {Variant::kFull, Variant::kNoExpert, Variant::kUntrained}) {
    std::vector<Trajectory> pooled;
    for (std::uint64_t seed : cfg.train.ablation_seeds) {
      GlobalConfig run = cfg;
      run.train.variant = v;
      run.train.seed = seed;
      const fs::path dir = out_dir / (to_string(v) + "-seed" + std::to_string(seed));
      TrainResult r = train(run, dir, options);
      pooled.insert(pooled.end(), std::make_move_iterator(r.final_eval.begin()),
                    std::make_move_iterator(r.final_eval.end()));
    }
    rows.push_back(aggregate(pooled, cfg.tse, to_string(v)));
  }
  auto out = open_output(out_dir / "ablation.csv");
  write_metric_csv(out, rows);
  return rows;
}

}  // namespace gopo
