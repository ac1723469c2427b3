#include "gopo/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace gopo {

using nlohmann::json;

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kFull:
      return "full";
    case Variant::kNoExpert:
      return "no-expert";
    case Variant::kUntrained:
      return "untrained";
  }
  return "full";
}

Variant parse_variant(std::string_view name) {
  if (name == "full") return Variant::kFull;
  if (name == "no-expert") return Variant::kNoExpert;
  if (name == "untrained") return Variant::kUntrained;
  throw ConfigError("unknown variant '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(std::string("train.") + what);
  };
  require(episodes >= 0, "episodes must be non-negative");
  require(discount > 0.0 && discount <= 1.0, "discount must lie in (0, 1]");
  require(batch_size >= 1, "batch_size must be positive");
  require(lr_actor > 0.0, "lr_actor must be positive");
  require(lr_critic > 0.0, "lr_critic must be positive");
  require(lr_csa > 0.0, "lr_csa must be positive");
  require(entropy_coeff >= 0.0, "entropy_coeff must be non-negative");
  require(lambda_p >= 0.0 && lambda_s >= 0.0 && lambda_d >= 0.0, "loss weights must be non-negative");
  require(eval_every >= 1, "eval_every must be positive");
  require(eval_episodes >= 1, "eval_episodes must be positive");
  require(hidden_units >= 1, "hidden_units must be positive");
  require(grad_clip > 0.0, "grad_clip must be positive");
  require(checkpoint_every >= 1, "checkpoint_every must be positive");
  require(!ablation_seeds.empty(), "ablation_seeds must not be empty");
}

void GlobalConfig::validate() const {
  env.validate();
  reward.validate();
  tse.validate();
  train.validate();
}

namespace {

// Tracks which keys of a JSON object were consumed so leftovers can be
// reported as unknown.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("'" + name() + "' must be an object");
  }

  const json& at(const std::string& key) {
    if (!j_.contains(key)) throw ConfigError("missing key '" + qualified(key) + "'");
    seen_.insert(key);
    return j_.at(key);
  }

  template <typename T>
  T get(const std::string& key) {
    const json& v = at(key);
    try {
      return v.get<T>();
    } catch (const json::exception&) {
      throw ConfigError("invalid value for '" + qualified(key) + "'");
    }
  }

  Section sub(const std::string& key) { return Section(at(key), qualified(key)); }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) throw ConfigError("unknown key '" + qualified(item.key()) + "'");
    }
  }

  std::string qualified(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  std::string name() const { return path_.empty() ? "<root>" : path_; }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

int index_of(const std::vector<std::string>& names, const std::string& name, const std::string& where) {
  auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw ConfigError("unknown name '" + name + "' in '" + where + "'");
  return static_cast<int>(it - names.begin());
}

std::vector<std::string> skill_names(const EnvConfig& env) {
  std::vector<std::string> names;
  for (const Skill& s : env.skill_pool) names.push_back(s.name);
  return names;
}

void parse_scenario_table(const json& table, EnvConfig& env, const std::string& where) {
  if (!table.is_array()) throw ConfigError("'" + where + "' must be an array or a file name");
  const auto names = skill_names(env);
  const std::size_t size = kNumMilestones * env.intents.size() * env.emotions.size();
  env.scenario_table.assign(size, SkillSequence{});
  std::vector<bool> filled(size, false);
  for (std::size_t i = 0; i < table.size(); ++i) {
    const std::string entry_path = where + "[" + std::to_string(i) + "]";
    Section e(table[i], entry_path);
    const int intent = index_of(env.intents, e.get<std::string>("intent"), entry_path + ".intent");
    const int emotion = index_of(env.emotions, e.get<std::string>("emotion"), entry_path + ".emotion");
    const int phase = e.get<int>("phase");
    if (phase < 1 || phase > kNumPhases) throw ConfigError("'" + entry_path + ".phase' must lie in [1, 3]");
    std::vector<SkillId> ids;
    for (const auto& n : e.get<std::vector<std::string>>("skills")) {
      ids.push_back(index_of(names, n, entry_path + ".skills"));
    }
    e.finish();
    if (ids.empty() || ids.size() > SkillSequence::kMaxLength) {
      throw ConfigError("'" + entry_path + ".skills' must hold 1 to 5 skills");
    }
    const std::size_t k = env.scenario_index(intent, emotion, phase - 1);
    if (filled[k]) throw ConfigError("duplicate scenario entry at '" + entry_path + "'");
    filled[k] = true;
    env.scenario_table[k] = SkillSequence(std::move(ids));
  }
  if (std::find(filled.begin(), filled.end(), false) != filled.end()) {
    throw ConfigError("'" + where + "' does not cover every (intent, emotion, phase)");
  }
}

EnvConfig parse_env(Section s, const std::filesystem::path& base_dir) {
  EnvConfig env;
  const json& pool = s.at("skill_pool");
  if (!pool.is_array()) throw ConfigError("'env.skill_pool' must be an array");
  for (std::size_t i = 0; i < pool.size(); ++i) {
    Section k(pool[i], "env.skill_pool[" + std::to_string(i) + "]");
    Skill skill;
    skill.id = static_cast<SkillId>(i);
    skill.name = k.get<std::string>("name");
    skill.required_markers = k.get<std::vector<MarkerId>>("required_markers");
    std::sort(skill.required_markers.begin(), skill.required_markers.end());
    skill.required_markers.erase(std::unique(skill.required_markers.begin(), skill.required_markers.end()),
                                 skill.required_markers.end());
    k.finish();
    env.skill_pool.push_back(std::move(skill));
  }
  env.intents = s.get<std::vector<std::string>>("intents");
  env.emotions = s.get<std::vector<std::string>>("emotions");
  env.vocab_size = s.get<std::size_t>("vocab_size");
  env.num_markers = s.get<std::size_t>("num_markers");
  env.token_markers = s.get<std::vector<MarkerId>>("token_markers");
  env.politeness_marker = s.get<MarkerId>("politeness_marker");
  env.max_response_length = s.get<std::size_t>("max_response_length");
  env.horizon = s.get<int>("horizon");
  env.history_window = s.get<std::size_t>("history_window");
  env.initial_intent = s.get<std::vector<double>>("initial_intent");
  env.initial_emotion = s.get<std::vector<double>>("initial_emotion");
  env.intent_transition = s.get<std::vector<std::vector<double>>>("intent_transition");
  {
    Section e = s.sub("emotion_transition");
    env.emotion_compliant = e.get<std::vector<std::vector<double>>>("compliant");
    env.emotion_noncompliant = e.get<std::vector<std::vector<double>>>("noncompliant");
    e.finish();
  }
  env.compliance_threshold = s.get<double>("compliance_threshold");
  const auto phase_markers = s.get<std::vector<std::vector<MarkerId>>>("phase_markers");
  if (phase_markers.size() != kNumMilestones) throw ConfigError("'env.phase_markers' needs 3 entries");
  std::copy(phase_markers.begin(), phase_markers.end(), env.phase_markers.begin());

  const auto names = skill_names(env);
  const json& rules = s.at("milestone_rules");
  if (!rules.is_array() || rules.size() != kNumMilestones) throw ConfigError("'env.milestone_rules' needs 3 entries");
  for (std::size_t i = 0; i < kNumMilestones; ++i) {
    const std::string path = "env.milestone_rules[" + std::to_string(i) + "]";
    Section r(rules[i], path);
    env.milestone_rules[i].name = r.get<std::string>("name");
    Section keys = r.sub("key_skill_by_intent");
    for (const std::string& intent : env.intents) {
      env.milestone_rules[i].key_skill_by_intent.push_back(
          index_of(names, keys.get<std::string>(intent), keys.qualified(intent)));
    }
    keys.finish();
    r.finish();
  }

  const json& table = s.at("scenario_table");
  if (table.is_string()) {
    const std::filesystem::path file = base_dir / table.get<std::string>();
    std::ifstream in(file);
    if (!in) throw ConfigError("cannot read scenario table '" + file.string() + "'");
    json loaded;
    try {
      loaded = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError("malformed scenario table '" + file.string() + "': " + e.what());
    }
    parse_scenario_table(loaded, env, "env.scenario_table");
  } else {
    parse_scenario_table(table, env, "env.scenario_table");
  }

  {
    Section u = s.sub("utterance");
    env.utterance.intent_token_base = u.get<TokenId>("intent_token_base");
    env.utterance.emotion_token_base = u.get<TokenId>("emotion_token_base");
    env.utterance.phase_token_base = u.get<TokenId>("phase_token_base");
    env.utterance.noise_first = u.get<TokenId>("noise_first");
    env.utterance.noise_last = u.get<TokenId>("noise_last");
    env.utterance.noise_count = u.get<int>("noise_count");
    u.finish();
  }
  env.order_statuses = s.get<std::vector<std::string>>("order_statuses");
  env.order_status_probs = s.get<std::vector<double>>("order_status_probs");
  env.in_stock_prob = s.get<double>("in_stock_prob");
  env.seed = s.get<std::uint64_t>("seed");
  s.finish();
  return env;
}

RewardConfig parse_reward(Section s) {
  RewardConfig r;
  r.dim_weights = s.get<std::array<double, kNumDimensions>>("dim_weights");
  r.w_expert_min = s.get<double>("w_expert_min");
  r.w_expert_max = s.get<double>("w_expert_max");
  r.w_csa_floor = s.get<double>("w_csa_floor");
  r.dedupe_predictions = s.get<bool>("dedupe_predictions");
  s.finish();
  return r;
}

TseConfig parse_tse(Section s) {
  TseConfig t;
  t.task_weights = s.get<std::array<double, kNumMilestones>>("task_weights");
  t.decay = s.get<double>("decay");
  s.finish();
  return t;
}

TrainConfig parse_train(Section s) {
  TrainConfig t;
  t.episodes = s.get<int>("episodes");
  t.discount = s.get<double>("discount");
  t.batch_size = s.get<int>("batch_size");
  t.lr_actor = s.get<double>("lr_actor");
  t.lr_critic = s.get<double>("lr_critic");
  t.lr_csa = s.get<double>("lr_csa");
  t.entropy_coeff = s.get<double>("entropy_coeff");
  t.lambda_p = s.get<double>("lambda_p");
  t.lambda_s = s.get<double>("lambda_s");
  t.lambda_d = s.get<double>("lambda_d");
  t.eval_every = s.get<int>("eval_every");
  t.eval_episodes = s.get<int>("eval_episodes");
  t.seed = s.get<std::uint64_t>("seed");
  t.variant = parse_variant(s.get<std::string>("variant"));
  t.hidden_units = s.get<int>("hidden_units");
  t.grad_clip = s.get<double>("grad_clip");
  t.checkpoint_every = s.get<int>("checkpoint_every");
  t.ablation_seeds = s.get<std::vector<std::uint64_t>>("ablation_seeds");
  s.finish();
  return t;
}

}  // namespace

GlobalConfig parse_config(std::string_view json_text, const std::filesystem::path& base_dir) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  Section s(root, "");
  GlobalConfig cfg;
  cfg.env = parse_env(s.sub("env"), base_dir);
  cfg.reward = parse_reward(s.sub("reward"));
  cfg.tse = parse_tse(s.sub("tse"));
  cfg.train = parse_train(s.sub("train"));
  cfg.output_dir = s.get<std::string>("output_dir");
  s.finish();
  cfg.validate();
  return cfg;
}

GlobalConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.parent_path());
}

GlobalConfig default_config() { return parse_config(default_config_text()); }

std::string to_json(const GlobalConfig& cfg) {
  const EnvConfig& env = cfg.env;
  const auto names = skill_names(env);

  json pool = json::array();
  for (const Skill& s : env.skill_pool) pool.push_back({{"name", s.name}, {"required_markers", s.required_markers}});

  json rules = json::array();
  for (const MilestoneRule& r : env.milestone_rules) {
    json keys = json::object();
    for (std::size_t i = 0; i < env.intents.size(); ++i) {
      keys[env.intents[i]] = names[static_cast<std::size_t>(r.key_skill_by_intent[i])];
    }
    rules.push_back({{"name", r.name}, {"key_skill_by_intent", keys}});
  }

  json table = json::array();
  for (int phase = 0; phase < kNumPhases; ++phase) {
    for (std::size_t i = 0; i < env.intents.size(); ++i) {
      for (std::size_t e = 0; e < env.emotions.size(); ++e) {
        std::vector<std::string> skills;
        for (SkillId id : env.scenario_table[env.scenario_index(static_cast<int>(i), static_cast<int>(e), phase)].ids()) {
          skills.push_back(names[static_cast<std::size_t>(id)]);
        }
        table.push_back({{"intent", env.intents[i]}, {"emotion", env.emotions[e]}, {"phase", phase + 1}, {"skills", skills}});
      }
    }
  }

  json phase_markers = json::array();
  for (const auto& pm : env.phase_markers) phase_markers.push_back(pm);

  const UtteranceSpec& u = env.utterance;
  json root = {
      {"output_dir", cfg.output_dir},
      {"env",
       {{"skill_pool", pool},
        {"intents", env.intents},
        {"emotions", env.emotions},
        {"vocab_size", env.vocab_size},
        {"num_markers", env.num_markers},
        {"token_markers", env.token_markers},
        {"politeness_marker", env.politeness_marker},
        {"max_response_length", env.max_response_length},
        {"horizon", env.horizon},
        {"history_window", env.history_window},
        {"initial_intent", env.initial_intent},
        {"initial_emotion", env.initial_emotion},
        {"intent_transition", env.intent_transition},
        {"emotion_transition", {{"compliant", env.emotion_compliant}, {"noncompliant", env.emotion_noncompliant}}},
        {"compliance_threshold", env.compliance_threshold},
        {"phase_markers", phase_markers},
        {"milestone_rules", rules},
        {"scenario_table", table},
        {"utterance",
         {{"intent_token_base", u.intent_token_base},
          {"emotion_token_base", u.emotion_token_base},
          {"phase_token_base", u.phase_token_base},
          {"noise_first", u.noise_first},
          {"noise_last", u.noise_last},
          {"noise_count", u.noise_count}}},
        {"order_statuses", env.order_statuses},
        {"order_status_probs", env.order_status_probs},
        {"in_stock_prob", env.in_stock_prob},
        {"seed", env.seed}}},
      {"reward",
       {{"dim_weights", cfg.reward.dim_weights},
        {"w_expert_min", cfg.reward.w_expert_min},
        {"w_expert_max", cfg.reward.w_expert_max},
        {"w_csa_floor", cfg.reward.w_csa_floor},
        {"dedupe_predictions", cfg.reward.dedupe_predictions}}},
      {"tse", {{"task_weights", cfg.tse.task_weights}, {"decay", cfg.tse.decay}}},
      {"train",
       {{"episodes", cfg.train.episodes},
        {"discount", cfg.train.discount},
        {"batch_size", cfg.train.batch_size},
        {"lr_actor", cfg.train.lr_actor},
        {"lr_critic", cfg.train.lr_critic},
        {"lr_csa", cfg.train.lr_csa},
        {"entropy_coeff", cfg.train.entropy_coeff},
        {"lambda_p", cfg.train.lambda_p},
        {"lambda_s", cfg.train.lambda_s},
        {"lambda_d", cfg.train.lambda_d},
        {"eval_every", cfg.train.eval_every},
        {"eval_episodes", cfg.train.eval_episodes},
        {"seed", cfg.train.seed},
        {"variant", to_string(cfg.train.variant)},
        {"hidden_units", cfg.train.hidden_units},
        {"grad_clip", cfg.train.grad_clip},
        {"checkpoint_every", cfg.train.checkpoint_every},
        {"ablation_seeds", cfg.train.ablation_seeds}}},
  };
  return root.dump(2) + "\n";
}

}  // namespace gopo
