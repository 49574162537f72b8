#include "railab/run_config.hpp"

#include <fstream>
#include <initializer_list>
#include <stdexcept>
#include <string>

#include "railab/env_io.hpp"

namespace railab {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument("config: " + msg); }

void expect_object(const json& j, const std::string& ctx) {
  if (!j.is_object()) fail(ctx + " must be an object");
}

void reject_unknown(const json& j, const std::string& ctx,
                    std::initializer_list<const char*> allowed) {
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* key : allowed)
      if (item.key() == key) {
        known = true;
        break;
      }
    if (!known) fail("unknown key '" + item.key() + "' in " + ctx);
  }
}

// The readers leave `out` untouched when the key is absent, so defaults are
// simply the struct initializers.
void read_int(const json& j, const char* key, int& out, const std::string& ctx) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (!v.is_number_integer() && !v.is_number_unsigned())
    fail(std::string("'") + key + "' in " + ctx + " must be an integer");
  out = v.get<int>();
}

void read_long(const json& j, const char* key, long long& out, const std::string& ctx) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (!v.is_number_integer() && !v.is_number_unsigned())
    fail(std::string("'") + key + "' in " + ctx + " must be an integer");
  out = v.get<long long>();
}

void read_u64(const json& j, const char* key, std::uint64_t& out, const std::string& ctx) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (!(v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0)))
    fail(std::string("'") + key + "' in " + ctx + " must be a non-negative integer");
  out = v.get<std::uint64_t>();
}

void read_double(const json& j, const char* key, double& out, const std::string& ctx) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (!v.is_number()) fail(std::string("'") + key + "' in " + ctx + " must be a number");
  out = v.get<double>();
}

void read_bool(const json& j, const char* key, bool& out, const std::string& ctx) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (!v.is_boolean()) fail(std::string("'") + key + "' in " + ctx + " must be a boolean");
  out = v.get<bool>();
}

void check(bool ok, const std::string& msg) {
  if (!ok) fail(msg);
}

NetworkConfig parse_net(const json& j) {
  expect_object(j, "net");
  reject_unknown(j, "net",
                 {"fc1", "fc2", "lstm", "fc3", "gamma", "value_coef", "entropy_coef", "use_lstm"});
  NetworkConfig net;
  read_int(j, "fc1", net.fc1, "net");
  read_int(j, "fc2", net.fc2, "net");
  read_int(j, "lstm", net.lstm, "net");
  read_int(j, "fc3", net.fc3, "net");
  read_double(j, "gamma", net.gamma, "net");
  read_double(j, "value_coef", net.value_coef, "net");
  read_double(j, "entropy_coef", net.entropy_coef, "net");
  read_bool(j, "use_lstm", net.use_lstm, "net");
  check(net.fc1 >= 1 && net.fc2 >= 1 && net.lstm >= 1 && net.fc3 >= 1,
        "net layer sizes must be positive");
  check(net.gamma > 0.0 && net.gamma <= 1.0, "'gamma' must be in (0, 1]");
  check(net.value_coef >= 0.0 && net.entropy_coef >= 0.0,
        "loss coefficients must be non-negative");
  return net;
}

GeneratorParams parse_generator(const json& j) {
  expect_object(j, "generator");
  reject_unknown(j, "generator",
                 {"width", "height", "agents", "mixed_speeds", "min_target_distance",
                  "malfunction"});
  GeneratorParams gen;
  read_int(j, "width", gen.width, "generator");
  read_int(j, "height", gen.height, "generator");
  read_int(j, "agents", gen.n_agents, "generator");
  read_bool(j, "mixed_speeds", gen.mixed_speeds, "generator");
  read_int(j, "min_target_distance", gen.min_target_distance, "generator");
  if (j.contains("malfunction")) {
    const json& m = j.at("malfunction");
    expect_object(m, "generator.malfunction");
    reject_unknown(m, "generator.malfunction", {"rate", "min_duration", "max_duration"});
    read_double(m, "rate", gen.malfunction.rate, "generator.malfunction");
    read_int(m, "min_duration", gen.malfunction.min_duration, "generator.malfunction");
    read_int(m, "max_duration", gen.malfunction.max_duration, "generator.malfunction");
  }
  check(gen.width >= 2 && gen.height >= 2, "generator dimensions must be at least 2");
  check(gen.n_agents >= 1, "'agents' must be positive");
  check(gen.min_target_distance >= 0, "'min_target_distance' must be non-negative");
  check(gen.malfunction.rate >= 0.0 && gen.malfunction.rate <= 1.0,
        "malfunction 'rate' must be in [0, 1]");
  check(gen.malfunction.min_duration >= 0 &&
            gen.malfunction.max_duration >= gen.malfunction.min_duration,
        "malfunction durations must satisfy 0 <= min <= max");
  return gen;
}

void parse_trainer(const json& j, const std::filesystem::path& base_dir, TrainerConfig& cfg) {
  expect_object(j, "trainer");
  reject_unknown(j, "trainer",
                 {"workers", "decision_steps", "t_max", "lr", "clip_norm", "rms_decay", "rms_eps",
                  "masking", "eval_every", "eval_episodes", "seed", "eval_seed", "curriculum",
                  "curriculum_window", "curriculum_threshold", "fixed_envs"});
  read_int(j, "workers", cfg.n_workers, "trainer");
  read_long(j, "decision_steps", cfg.total_decision_steps, "trainer");
  read_int(j, "t_max", cfg.t_max, "trainer");
  read_double(j, "lr", cfg.lr, "trainer");
  read_double(j, "clip_norm", cfg.clip_norm, "trainer");
  read_double(j, "rms_decay", cfg.rms_decay, "trainer");
  read_double(j, "rms_eps", cfg.rms_eps, "trainer");
  read_bool(j, "masking", cfg.masking_enabled, "trainer");
  read_long(j, "eval_every", cfg.eval_every, "trainer");
  read_int(j, "eval_episodes", cfg.eval_episodes, "trainer");
  read_u64(j, "seed", cfg.seed, "trainer");
  read_u64(j, "eval_seed", cfg.eval_seed, "trainer");
  read_int(j, "curriculum_window", cfg.curriculum_window, "trainer");
  read_double(j, "curriculum_threshold", cfg.curriculum_threshold, "trainer");

  if (j.contains("curriculum")) {
    const json& stages = j.at("curriculum");
    if (!stages.is_array()) fail("'curriculum' must be an array of stage objects");
    for (const json& s : stages) {
      expect_object(s, "curriculum stage");
      reject_unknown(s, "curriculum stage", {"width", "height", "agents"});
      CurriculumStage stage;
      read_int(s, "width", stage.width, "curriculum stage");
      read_int(s, "height", stage.height, "curriculum stage");
      read_int(s, "agents", stage.n_agents, "curriculum stage");
      check(stage.width >= 2 && stage.height >= 2 && stage.n_agents >= 1,
            "curriculum stage needs width, height and agents");
      cfg.curriculum.push_back(stage);
    }
  }
  if (j.contains("fixed_envs")) {
    const json& envs = j.at("fixed_envs");
    if (!envs.is_array()) fail("'fixed_envs' must be an array of paths or environment objects");
    for (const json& e : envs) {
      if (e.is_string()) {
        const std::filesystem::path p =
            base_dir / std::filesystem::path(e.get<std::string>());
        try {
          cfg.fixed_envs.push_back(load_env(p));
        } catch (const std::exception& ex) {
          fail("fixed env '" + p.string() + "': " + ex.what());
        }
      } else if (e.is_object()) {
        try {
          cfg.fixed_envs.push_back(env_from_json(e));
        } catch (const std::exception& ex) {
          fail(std::string("inline fixed env: ") + ex.what());
        }
      } else {
        fail("'fixed_envs' entries must be strings or objects");
      }
    }
  }

  check(cfg.n_workers >= 1, "'workers' must be positive");
  check(cfg.total_decision_steps >= 0, "'decision_steps' must be non-negative");
  check(cfg.t_max >= 1, "'t_max' must be positive");
  check(cfg.lr > 0.0, "'lr' must be positive");
  check(cfg.clip_norm > 0.0, "'clip_norm' must be positive");
  check(cfg.rms_decay > 0.0 && cfg.rms_decay < 1.0, "'rms_decay' must be in (0, 1)");
  check(cfg.rms_eps > 0.0, "'rms_eps' must be positive");
  check(cfg.eval_every >= 0, "'eval_every' must be non-negative");
  check(cfg.eval_episodes >= 1, "'eval_episodes' must be positive");
  check(cfg.curriculum_window >= 1, "'curriculum_window' must be positive");
  check(cfg.curriculum_threshold > 0.0 && cfg.curriculum_threshold <= 1.0,
        "'curriculum_threshold' must be in (0, 1]");
  check(cfg.curriculum.empty() || cfg.fixed_envs.empty(),
        "'curriculum' and 'fixed_envs' are mutually exclusive");
}

void parse_comm(const json& j, const NetworkConfig& base_net, CommTrainConfig& comm) {
  expect_object(j, "comm");
  reject_unknown(j, "comm",
                 {"episodes", "lr", "clip_norm", "rms_decay", "rms_eps", "t_max", "enabled",
                  "seed", "log_every", "gamma", "entropy_coef"});
  comm.net = base_net;
  comm.net.input_dim = CommEnv::kObsDim;
  comm.net.n_actions = kCommActionCount;
  read_long(j, "episodes", comm.episodes, "comm");
  read_double(j, "lr", comm.lr, "comm");
  read_double(j, "clip_norm", comm.clip_norm, "comm");
  read_double(j, "rms_decay", comm.rms_decay, "comm");
  read_double(j, "rms_eps", comm.rms_eps, "comm");
  read_int(j, "t_max", comm.t_max, "comm");
  read_bool(j, "enabled", comm.comm_enabled, "comm");
  read_u64(j, "seed", comm.seed, "comm");
  read_int(j, "log_every", comm.log_every, "comm");
  read_double(j, "gamma", comm.net.gamma, "comm");
  read_double(j, "entropy_coef", comm.net.entropy_coef, "comm");
  check(comm.episodes >= 0, "'episodes' must be non-negative");
  check(comm.lr > 0.0, "comm 'lr' must be positive");
  check(comm.clip_norm > 0.0, "comm 'clip_norm' must be positive");
  check(comm.rms_decay > 0.0 && comm.rms_decay < 1.0, "comm 'rms_decay' must be in (0, 1)");
  check(comm.rms_eps > 0.0, "comm 'rms_eps' must be positive");
  check(comm.t_max >= 1, "comm 't_max' must be positive");
  check(comm.log_every >= 1, "'log_every' must be positive");
  check(comm.net.gamma > 0.0 && comm.net.gamma <= 1.0, "comm 'gamma' must be in (0, 1]");
  check(comm.net.entropy_coef >= 0.0, "comm 'entropy_coef' must be non-negative");
}

}  // namespace

RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  expect_object(j, "top level");
  reject_unknown(j, "top level", {"out_dir", "net", "generator", "trainer", "comm"});

  RunConfig cfg;
  if (j.contains("out_dir")) {
    const json& v = j.at("out_dir");
    if (!v.is_string() || v.get<std::string>().empty())
      fail("'out_dir' must be a non-empty string");
    cfg.out_dir = v.get<std::string>();
  }
  cfg.trainer.net = j.contains("net") ? parse_net(j.at("net")) : NetworkConfig{};
  if (j.contains("generator")) cfg.trainer.gen = parse_generator(j.at("generator"));
  if (j.contains("trainer")) parse_trainer(j.at("trainer"), base_dir, cfg.trainer);
  // The comm net always mirrors the main net apart from its input size
  // (buffer block appended) and action head; gamma and entropy may be tuned
  // separately for the negotiation task.
  cfg.comm.net = cfg.trainer.net;
  cfg.comm.net.input_dim = CommEnv::kObsDim;
  cfg.comm.net.n_actions = kCommActionCount;
  if (j.contains("comm")) parse_comm(j.at("comm"), cfg.trainer.net, cfg.comm);
  return cfg;
}

nlohmann::json run_config_to_json(const RunConfig& cfg) {
  const TrainerConfig& t = cfg.trainer;
  json net{{"fc1", t.net.fc1},
           {"fc2", t.net.fc2},
           {"lstm", t.net.lstm},
           {"fc3", t.net.fc3},
           {"gamma", t.net.gamma},
           {"value_coef", t.net.value_coef},
           {"entropy_coef", t.net.entropy_coef},
           {"use_lstm", t.net.use_lstm}};
  json gen{{"width", t.gen.width},
           {"height", t.gen.height},
           {"agents", t.gen.n_agents},
           {"mixed_speeds", t.gen.mixed_speeds},
           {"min_target_distance", t.gen.min_target_distance},
           {"malfunction",
            {{"rate", t.gen.malfunction.rate},
             {"min_duration", t.gen.malfunction.min_duration},
             {"max_duration", t.gen.malfunction.max_duration}}}};
  json stages = json::array();
  for (const CurriculumStage& s : t.curriculum)
    stages.push_back({{"width", s.width}, {"height", s.height}, {"agents", s.n_agents}});
  json envs = json::array();
  for (const EnvSpec& spec : t.fixed_envs) envs.push_back(env_to_json(spec));
  json trainer{{"workers", t.n_workers},
               {"decision_steps", t.total_decision_steps},
               {"t_max", t.t_max},
               {"lr", t.lr},
               {"clip_norm", t.clip_norm},
               {"rms_decay", t.rms_decay},
               {"rms_eps", t.rms_eps},
               {"masking", t.masking_enabled},
               {"eval_every", t.eval_every},
               {"eval_episodes", t.eval_episodes},
               {"seed", t.seed},
               {"eval_seed", t.eval_seed},
               {"curriculum", std::move(stages)},
               {"curriculum_window", t.curriculum_window},
               {"curriculum_threshold", t.curriculum_threshold},
               {"fixed_envs", std::move(envs)}};
  json comm{{"episodes", cfg.comm.episodes},
            {"lr", cfg.comm.lr},
            {"clip_norm", cfg.comm.clip_norm},
            {"rms_decay", cfg.comm.rms_decay},
            {"rms_eps", cfg.comm.rms_eps},
            {"t_max", cfg.comm.t_max},
            {"enabled", cfg.comm.comm_enabled},
            {"seed", cfg.comm.seed},
            {"log_every", cfg.comm.log_every},
            {"gamma", cfg.comm.net.gamma},
            {"entropy_coef", cfg.comm.net.entropy_coef}};
  return json{{"out_dir", cfg.out_dir.string()},
              {"net", std::move(net)},
              {"generator", std::move(gen)},
              {"trainer", std::move(trainer)},
              {"comm", std::move(comm)}};
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("config: " + path.string() + ": " + e.what());
  }
  const std::filesystem::path base =
      path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  return run_config_from_json(j, base);
}

void save_run_config(const RunConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("config: cannot write " + path.string());
  out << run_config_to_json(cfg).dump(2) << '\n';
}

}  // namespace railab
