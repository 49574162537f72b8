#include "railab/eval_metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace railab {

double arrival_rate(const std::vector<EpisodeStats>& episodes) {
  if (episodes.empty()) throw std::invalid_argument("arrival_rate: no episodes");
  long long total = 0;
  long long arrived = 0;
  for (const EpisodeStats& e : episodes) {
    total += e.n_agents;
    arrived += e.arrived;
  }
  if (total == 0) throw std::invalid_argument("arrival_rate: no agents");
  return static_cast<double>(arrived) / static_cast<double>(total);
}

namespace {

AblationReport run_variant(const TrainerConfig& cfg, const std::string& label,
                           const std::vector<EvalCase>& cases) {
  const TrainResult res = train(cfg);
  const EvalResult ev = evaluate(res.params, cases, cfg.masking_enabled, EvalMode::Argmax,
                                 Rng::derive(cfg.eval_seed, 0xA7).next_u64());
  AblationReport rep;
  rep.label = label;
  rep.arrival_rate = ev.arrival_rate;
  rep.mean_return = ev.mean_return;
  rep.episodes = res.episodes;
  rep.decisions = res.decisions;
  rep.config_hash = trainer_config_hash(cfg);
  rep.eval_hash = eval_set_hash(cases);
  return rep;
}

}  // namespace

AblationPair run_ablation(const TrainerConfig& base, AblationAxis axis) {
  TrainerConfig on = base;
  TrainerConfig off = base;
  std::string on_label;
  std::string off_label;
  switch (axis) {
    case AblationAxis::Masking:
      on.masking_enabled = true;
      off.masking_enabled = false;
      on_label = "masked";
      off_label = "unmasked";
      break;
    case AblationAxis::Lstm:
      on.net.use_lstm = true;
      off.net.use_lstm = false;
      on_label = "lstm";
      off_label = "no-lstm";
      break;
  }

  std::vector<EvalCase> cases;
  if (!base.fixed_envs.empty()) {
    Rng rng = Rng::derive(base.eval_seed, 0x46495845);
    for (const EnvSpec& spec : base.fixed_envs) cases.push_back({spec, rng.next_u64()});
  } else {
    cases = make_eval_set(base.gen, base.eval_episodes, base.eval_seed);
  }

  AblationPair pair;
  pair.on = run_variant(on, on_label, cases);
  pair.off = run_variant(off, off_label, cases);
  if (pair.on.eval_hash != pair.off.eval_hash)
    throw std::logic_error("run_ablation: variants diverged on the held-out set");
  pair.delta_abs = pair.on.arrival_rate - pair.off.arrival_rate;
  pair.delta_rel = pair.off.arrival_rate > 0.0
                       ? pair.delta_abs / pair.off.arrival_rate
                       : std::numeric_limits<double>::quiet_NaN();
  return pair;
}

void write_ablation_csv(const AblationPair& pair, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_ablation_csv: cannot open " + path.string());
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  auto hex = [&](std::uint64_t v) {
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return std::string(buf);
  };
  out << "label,arrival_rate,mean_return,episodes,decisions,config_hash,eval_hash\n";
  for (const AblationReport* r : {&pair.on, &pair.off}) {
    out << r->label << ',' << num(r->arrival_rate) << ',' << num(r->mean_return) << ','
        << r->episodes << ',' << r->decisions << ',' << hex(r->config_hash) << ','
        << hex(r->eval_hash) << '\n';
  }
  out << "delta_abs," << num(pair.delta_abs) << ",,,,,\n";
  out << "delta_rel," << num(pair.delta_rel) << ",,,,,\n";
}

Replay record_replay(const EnvSpec& spec, std::uint64_t run_seed, bool masked,
                     RolloutPolicy& policy) {
  Replay r;
  r.spec = spec;
  r.run_seed = run_seed;
  r.masked = masked;
  RailRolloutEnv env(spec, run_seed, masked);
  env.set_recorder([&](const std::vector<ActionKind>& acts, const EnvState& st) {
    r.steps.push_back(acts);
    r.hashes.push_back(st.state_hash());
  });
  run_episode(env, policy, /*record=*/false);
  return r;
}

namespace {

std::string hash_hex(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t parse_hash(const std::string& s) {
  if (s.size() != 16 || s.find_first_not_of("0123456789abcdef") != std::string::npos)
    throw std::invalid_argument("replay_from_json: malformed hash '" + s + "'");
  return std::stoull(s, nullptr, 16);
}

}  // namespace

nlohmann::json replay_to_json(const Replay& r) {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& row : r.steps) {
    nlohmann::json jrow = nlohmann::json::array();
    for (ActionKind a : row) jrow.push_back(static_cast<int>(a));
    steps.push_back(std::move(jrow));
  }
  nlohmann::json hashes = nlohmann::json::array();
  for (std::uint64_t h : r.hashes) hashes.push_back(hash_hex(h));
  return {{"format", "railab-replay"},
          {"version", 1},
          {"env", env_to_json(r.spec)},
          {"env_fingerprint", hash_hex(env_fingerprint(r.spec))},
          {"run_seed", r.run_seed},
          {"masked", r.masked},
          {"steps", std::move(steps)},
          {"hashes", std::move(hashes)}};
}

Replay replay_from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.value("format", "") != "railab-replay" || j.value("version", 0) != 1)
    throw std::invalid_argument("replay_from_json: not a railab-replay document");
  for (const char* key : {"env", "env_fingerprint", "run_seed", "masked", "steps", "hashes"})
    if (!j.contains(key))
      throw std::invalid_argument(std::string("replay_from_json: missing key '") + key + "'");

  Replay r;
  r.spec = env_from_json(j.at("env"));
  if (hash_hex(env_fingerprint(r.spec)) != j.at("env_fingerprint").get<std::string>())
    throw std::invalid_argument("replay_from_json: environment fingerprint mismatch");
  r.run_seed = j.at("run_seed").get<std::uint64_t>();
  r.masked = j.at("masked").get<bool>();

  const auto& steps = j.at("steps");
  const auto& hashes = j.at("hashes");
  if (!steps.is_array() || !hashes.is_array() || steps.size() != hashes.size())
    throw std::invalid_argument("replay_from_json: steps/hashes shape mismatch");
  const std::size_t n_agents = r.spec.roster.size();
  for (const auto& jrow : steps) {
    if (!jrow.is_array() || jrow.size() != n_agents)
      throw std::invalid_argument("replay_from_json: bad action row width");
    std::vector<ActionKind> row;
    for (const auto& ja : jrow) {
      const int a = ja.get<int>();
      if (a < 0 || a >= kMoveActionCount)
        throw std::invalid_argument("replay_from_json: action out of range");
      row.push_back(static_cast<ActionKind>(a));
    }
    r.steps.push_back(std::move(row));
  }
  for (const auto& jh : hashes) r.hashes.push_back(parse_hash(jh.get<std::string>()));
  return r;
}

void save_replay(const Replay& r, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_replay: cannot open " + path.string());
  out << replay_to_json(r).dump(2) << '\n';
}

Replay load_replay(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_replay: cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(std::string("load_replay: ") + e.what());
  }
  return replay_from_json(j);
}

ReplayCheck verify_replay(const Replay& r) {
  EnvState env = make_env(r.spec, r.run_seed);
  ReplayCheck check;
  for (std::size_t t = 0; t < r.steps.size(); ++t) {
    env.step(std::span<const ActionKind>(r.steps[t]));
    ++check.steps;
    if (env.state_hash() != r.hashes[t]) {
      check.first_mismatch = static_cast<int>(t);
      check.ok = false;
      return check;
    }
  }
  check.ok = true;
  check.arrived = env.arrived_count();
  return check;
}

}  // namespace railab
