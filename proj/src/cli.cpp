#include "railab/cli.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "railab/eval_metrics.hpp"
#include "railab/render.hpp"
#include "railab/run_config.hpp"

namespace railab {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Output directory precedence: explicit --out flag, then the RAILAB_OUT
// environment variable, then the configured default.
fs::path resolve_out_dir(const std::string& flag_value, const fs::path& config_value) {
  if (!flag_value.empty()) return flag_value;
  if (const char* env = std::getenv("RAILAB_OUT"); env != nullptr && *env != '\0') return env;
  return config_value;
}

void write_json_file(const json& j, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

// Input loading is a validation concern: whatever goes wrong while reading
// a referenced file becomes invalid_argument so the caller exits 1.
template <typename Fn>
auto load_input(const char* what, const std::string& path, Fn&& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    throw std::invalid_argument(std::string(what) + " " + path + ": " + e.what());
  }
}

struct GenEnvArgs {
  int width = 25;
  int height = 25;
  int agents = 4;
  std::uint64_t seed = 1;
  bool mixed_speeds = false;
  double malf_rate = 0.0;
  int malf_min = 0;
  int malf_max = 0;
  int min_target_distance = 0;
  std::string out;
};

int cmd_gen_env(const GenEnvArgs& a) {
  GeneratorParams gen;
  gen.width = a.width;
  gen.height = a.height;
  gen.n_agents = a.agents;
  gen.mixed_speeds = a.mixed_speeds;
  gen.malfunction = {a.malf_rate, a.malf_min, a.malf_max};
  gen.min_target_distance = a.min_target_distance;
  const EnvSpec spec = generate_env(gen, a.seed);
  const std::string problems = spec.grid.validate();
  if (!problems.empty()) throw std::runtime_error("generated grid failed validation: " + problems);
  if (const fs::path parent = fs::path(a.out).parent_path(); !parent.empty())
    fs::create_directories(parent);
  save_env(spec, a.out);
  std::cout << "environment: " << spec.grid.width() << "x" << spec.grid.height() << ", "
            << spec.roster.size() << " agents, max_steps " << spec.max_steps << ", fingerprint "
            << hex64(env_fingerprint(spec)) << "\n"
            << "grid validation: ok\n"
            << "wrote " << a.out << "\n";
  return 0;
}

struct TrainArgs {
  std::string config;
  std::string out;
};

int cmd_train(const TrainArgs& a) {
  const RunConfig cfg = load_input("config", a.config, [&] { return load_run_config(a.config); });
  const fs::path out = resolve_out_dir(a.out, cfg.out_dir);
  fs::create_directories(out);
  save_run_config(cfg, out / "config.json");

  const auto t0 = std::chrono::steady_clock::now();
  const TrainResult res = train(cfg.trainer);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  write_metrics_csv(res.curve, out / "metrics.csv");
  save_params(res.params, (out / "checkpoint.json").string());
  const EvalPoint& last = res.curve.back();
  write_json_file(json{{"command", "train"},
                       {"config_hash", hex64(trainer_config_hash(cfg.trainer))},
                       {"episodes", res.episodes},
                       {"decisions", res.decisions},
                       {"env_steps", res.env_steps},
                       {"final_stage", res.final_stage},
                       {"final_arrival_rate", last.arrival_rate},
                       {"final_mean_return", last.mean_return},
                       {"wall_clock_seconds", secs}},
                  out / "summary.json");
  std::cout << "train: " << res.episodes << " episodes, " << res.decisions
            << " decision steps, final arrival rate " << last.arrival_rate << "\n"
            << "wrote " << (out / "metrics.csv").string() << ", checkpoint.json, summary.json\n";
  return 0;
}

struct EvalArgs {
  std::string checkpoint;
  std::vector<std::string> envs;
  std::string mode = "argmax";
  int episodes = 1;
  std::uint64_t eval_seed = 9000;
  bool unmasked = false;
  std::string out;
};

int cmd_eval(const EvalArgs& a) {
  const Params params =
      load_input("checkpoint", a.checkpoint, [&] { return load_params(a.checkpoint); });
  std::vector<EvalCase> cases;
  Rng rng = Rng::derive(a.eval_seed, 0x46495845ULL);
  for (const std::string& file : a.envs) {
    const EnvSpec spec = load_input("env", file, [&] { return load_env(file); });
    for (int k = 0; k < a.episodes; ++k) cases.push_back({spec, rng.next_u64()});
  }
  const EvalMode mode = a.mode == "sample" ? EvalMode::Sample : EvalMode::Argmax;
  const std::uint64_t sample_seed = Rng::derive(a.eval_seed, 0xA7).next_u64();
  const EvalResult res = evaluate(params, cases, !a.unmasked, mode, sample_seed);

  const fs::path out = resolve_out_dir(a.out, "out");
  fs::create_directories(out);
  {
    std::ofstream csv(out / "eval.csv");
    if (!csv) throw std::runtime_error("cannot write " + (out / "eval.csv").string());
    csv << "case,fingerprint,run_seed,agents,arrived,arrival_fraction\n";
    char buf[64];
    for (std::size_t i = 0; i < cases.size(); ++i) {
      const int agents = static_cast<int>(cases[i].spec.roster.size());
      const double frac = res.per_episode_arrival[i];
      csv << i << ',' << hex64(env_fingerprint(cases[i].spec)) << ',' << cases[i].run_seed << ','
          << agents << ',' << std::lround(frac * agents) << ',';
      std::snprintf(buf, sizeof(buf), "%.17g", frac);
      csv << buf << '\n';
    }
  }
  write_json_file(json{{"command", "eval"},
                       {"mode", a.mode},
                       {"masked", !a.unmasked},
                       {"eval_seed", a.eval_seed},
                       {"episodes", res.episodes},
                       {"agents_total", res.agents_total},
                       {"agents_arrived", res.agents_arrived},
                       {"arrival_rate", res.arrival_rate},
                       {"mean_return", res.mean_return}},
                  out / "eval.json");
  std::cout << "eval: " << res.episodes << " episodes, arrival rate " << res.arrival_rate
            << ", mean return " << res.mean_return << "\n"
            << "wrote " << (out / "eval.csv").string() << ", eval.json\n";
  return 0;
}

int cmd_comm_train(const TrainArgs& a) {
  const RunConfig cfg = load_input("config", a.config, [&] { return load_run_config(a.config); });
  const fs::path out = resolve_out_dir(a.out, cfg.out_dir);
  fs::create_directories(out);
  save_run_config(cfg, out / "config.json");

  const auto t0 = std::chrono::steady_clock::now();
  const CommTrainResult res = train_comm(cfg.comm);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  {
    std::ofstream csv(out / "comm_curve.csv");
    if (!csv) throw std::runtime_error("cannot write " + (out / "comm_curve.csv").string());
    csv << "episode,success_rate\n";
    char buf[64];
    for (const CommCurvePoint& p : res.curve) {
      std::snprintf(buf, sizeof(buf), "%.17g", p.success_rate);
      csv << p.episode << ',' << buf << '\n';
    }
  }
  write_transcript_log(res.transcripts, out / "transcripts.log");
  save_params(res.params, (out / "comm_checkpoint.json").string());

  json hist = json::object();
  long long forced = 0;
  for (const CommTranscript& t : res.transcripts) forced += t.forced ? 1 : 0;
  for (const auto& [rounds, count] : round_histogram(res.transcripts, 1000, true))
    hist[std::to_string(rounds)] = count;
  const bool any = !res.success.empty();
  write_json_file(json{{"command", "comm-train"},
                       {"enabled", cfg.comm.comm_enabled},
                       {"episodes", static_cast<long long>(res.success.size())},
                       {"trailing_success_1000", any ? trailing_success(res.success, 1000) : 0.0},
                       {"round_histogram_1000", hist},
                       {"transcript_variability_1000",
                        any ? transcript_variability(res.transcripts, 1000) : 0.0},
                       {"forced_end_episodes", forced},
                       {"checkpoint_fingerprint", hex64(res.params.fingerprint())},
                       {"wall_clock_seconds", secs}},
                  out / "comm_summary.json");
  std::cout << "comm-train: " << res.success.size() << " episodes, trailing success "
            << (any ? trailing_success(res.success, 1000) : 0.0) << "\n"
            << "wrote " << (out / "comm_curve.csv").string()
            << ", transcripts.log, comm_checkpoint.json, comm_summary.json\n";
  return 0;
}

int cmd_replay(const std::string& file) {
  const Replay r = load_input("replay", file, [&] { return load_replay(file); });
  const ReplayCheck check = verify_replay(r);
  if (!check.ok) {
    std::cerr << "replay diverges at step " << check.first_mismatch << " of " << check.steps
              << "\n";
    return 1;
  }
  std::cout << "replay ok: " << check.steps << " steps, " << check.arrived << "/"
            << r.spec.roster.size() << " arrived, fingerprint " << hex64(env_fingerprint(r.spec))
            << "\n";
  return 0;
}

int cmd_render(const std::string& file) {
  const EnvSpec spec = load_input("env", file, [&] { return load_env(file); });
  std::cout << render_scene(spec) << spec.grid.width() << "x" << spec.grid.height() << ", "
            << spec.roster.size() << " agents, max_steps " << spec.max_steps << "\n";
  // The frame shows one glyph per cell (agents win ties), so spell the
  // start -> target assignments out underneath.
  for (std::size_t i = 0; i < spec.roster.size(); ++i) {
    const AgentSpec& a = spec.roster[i];
    std::cout << "agent " << i << ": (" << a.start.row << "," << a.start.col << ") "
              << heading_name(a.heading) << " -> (" << a.target.row << "," << a.target.col
              << ") speed " << a.speed_twelfths << "/" << kProgressDenom << "\n";
  }
  return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"rail rescheduling lab: environments, training, evaluation"};
  app.require_subcommand(1);

  GenEnvArgs gen;
  CLI::App* cgen = app.add_subcommand("gen-env", "generate a random environment file");
  cgen->add_option("--width", gen.width, "grid width");
  cgen->add_option("--height", gen.height, "grid height");
  cgen->add_option("--agents", gen.agents, "number of agents");
  cgen->add_option("--seed", gen.seed, "generator seed");
  cgen->add_flag("--mixed-speeds", gen.mixed_speeds, "draw per-agent speed classes");
  cgen->add_option("--malf-rate", gen.malf_rate, "per agent-step malfunction probability");
  cgen->add_option("--malf-min", gen.malf_min, "minimum malfunction duration");
  cgen->add_option("--malf-max", gen.malf_max, "maximum malfunction duration");
  cgen->add_option("--min-target-distance", gen.min_target_distance,
                   "minimum start-to-target distance (0 = auto)");
  cgen->add_option("--out", gen.out, "output environment file")->required();

  TrainArgs train_args;
  CLI::App* ctrain = app.add_subcommand("train", "train the rescheduling policy");
  ctrain->add_option("--config", train_args.config, "run configuration file")->required();
  ctrain->add_option("--out", train_args.out, "output directory (overrides config)");

  EvalArgs eval_args;
  CLI::App* ceval = app.add_subcommand("eval", "evaluate a checkpoint on environment files");
  ceval->add_option("--checkpoint", eval_args.checkpoint, "checkpoint file")->required();
  ceval->add_option("--envs", eval_args.envs, "environment files")->required()->expected(-1);
  ceval->add_option("--mode", eval_args.mode, "action selection")
      ->check(CLI::IsMember({"sample", "argmax"}));
  ceval->add_option("--episodes", eval_args.episodes, "episodes per environment")
      ->check(CLI::PositiveNumber);
  ceval->add_option("--eval-seed", eval_args.eval_seed, "seed for run seeds and sampling");
  ceval->add_flag("--unmasked", eval_args.unmasked, "query the policy at every step");
  ceval->add_option("--out", eval_args.out, "output directory");

  TrainArgs comm_args;
  CLI::App* ccomm = app.add_subcommand("comm-train", "run the communication experiment");
  ccomm->add_option("--config", comm_args.config, "run configuration file")->required();
  ccomm->add_option("--out", comm_args.out, "output directory (overrides config)");

  std::string replay_file;
  CLI::App* creplay = app.add_subcommand("replay", "verify a recorded episode");
  creplay->add_option("--file", replay_file, "replay file")->required();

  std::string render_file;
  CLI::App* crender = app.add_subcommand("render", "print an environment as ASCII");
  crender->add_option("--file", render_file, "environment file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (cgen->parsed()) return cmd_gen_env(gen);
    if (ctrain->parsed()) return cmd_train(train_args);
    if (ceval->parsed()) return cmd_eval(eval_args);
    if (ccomm->parsed()) return cmd_comm_train(comm_args);
    if (creplay->parsed()) return cmd_replay(replay_file);
    if (crender->parsed()) return cmd_render(render_file);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "fault: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace railab
