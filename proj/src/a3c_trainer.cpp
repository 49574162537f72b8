#include "railab/a3c_trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "railab/hash.hpp"

namespace railab {

double chain_reaction_probability(double p_best, int n_agents) {
  if (p_best < 0.0 || p_best > 1.0)
    throw std::invalid_argument("chain_reaction_probability: p_best outside [0, 1]");
  if (n_agents < 1) throw std::invalid_argument("chain_reaction_probability: n_agents must be >= 1");
  return 1.0 - std::pow(p_best, n_agents);
}

std::uint64_t trainer_config_hash(const TrainerConfig& cfg) {
  Fnv1a h;
  h.i32(cfg.net.input_dim)
      .i32(cfg.net.fc1)
      .i32(cfg.net.fc2)
      .i32(cfg.net.lstm)
      .i32(cfg.net.fc3)
      .i32(cfg.net.n_actions)
      .f64(cfg.net.gamma)
      .f64(cfg.net.value_coef)
      .f64(cfg.net.entropy_coef)
      .u8(cfg.net.use_lstm ? 1 : 0);
  h.i32(cfg.gen.width)
      .i32(cfg.gen.height)
      .i32(cfg.gen.n_agents)
      .u8(cfg.gen.mixed_speeds ? 1 : 0)
      .f64(cfg.gen.malfunction.rate)
      .i32(cfg.gen.malfunction.min_duration)
      .i32(cfg.gen.malfunction.max_duration)
      .i32(cfg.gen.min_target_distance);
  h.u32(static_cast<std::uint32_t>(cfg.fixed_envs.size()));
  for (const EnvSpec& spec : cfg.fixed_envs) h.u64(env_fingerprint(spec));
  h.u32(static_cast<std::uint32_t>(cfg.curriculum.size()));
  for (const CurriculumStage& s : cfg.curriculum) h.i32(s.width).i32(s.height).i32(s.n_agents);
  h.i32(cfg.curriculum_window).f64(cfg.curriculum_threshold);
  h.i32(cfg.n_workers)
      .u64(static_cast<std::uint64_t>(cfg.total_decision_steps))
      .i32(cfg.t_max)
      .f64(cfg.lr)
      .f64(cfg.clip_norm)
      .f64(cfg.rms_decay)
      .f64(cfg.rms_eps)
      .u8(cfg.masking_enabled ? 1 : 0)
      .u64(static_cast<std::uint64_t>(cfg.eval_every))
      .i32(cfg.eval_episodes)
      .u64(cfg.seed)
      .u64(cfg.eval_seed);
  return h.value();
}

std::vector<EvalCase> make_eval_set(const GeneratorParams& gen, int episodes, std::uint64_t seed) {
  if (episodes < 1) throw std::invalid_argument("make_eval_set: episodes must be >= 1");
  std::vector<EvalCase> cases;
  cases.reserve(static_cast<std::size_t>(episodes));
  Rng rng = Rng::derive(seed, 0x4556414c);
  for (int i = 0; i < episodes; ++i) {
    const std::uint64_t gen_seed = rng.next_u64();
    const std::uint64_t run_seed = rng.next_u64();
    cases.push_back({generate_env(gen, gen_seed), run_seed});
  }
  return cases;
}

std::uint64_t eval_set_hash(const std::vector<EvalCase>& cases) {
  Fnv1a h;
  h.u32(static_cast<std::uint32_t>(cases.size()));
  for (const EvalCase& c : cases) h.u64(env_fingerprint(c.spec)).u64(c.run_seed);
  return h.value();
}

EvalResult evaluate(const Params& params, const std::vector<EvalCase>& cases, bool masked,
                    EvalMode mode, std::uint64_t sample_seed) {
  if (cases.empty()) throw std::invalid_argument("evaluate: no eval cases");
  EvalResult out;
  double return_sum = 0.0;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    RailRolloutEnv env(cases[i].spec, cases[i].run_seed, masked);
    NetPolicy pol(params, Rng::derive(sample_seed, 0xE0 + i), mode == EvalMode::Argmax);
    const EpisodeResult res = run_episode(env, pol, /*record=*/false);
    ++out.episodes;
    out.agents_total += res.stats.n_agents;
    out.agents_arrived += res.stats.arrived;
    out.per_episode_arrival.push_back(res.stats.arrival_fraction());
    return_sum += res.stats.mean_return;
  }
  out.arrival_rate =
      out.agents_total > 0 ? static_cast<double>(out.agents_arrived) / out.agents_total : 0.0;
  out.mean_return = return_sum / static_cast<double>(cases.size());
  return out;
}

namespace {

struct SharedState {
  Params params;
  Params rms;
  std::mutex param_mu;

  std::atomic<long long> decisions{0};
  std::atomic<long long> episodes{0};
  std::atomic<long long> env_steps{0};

  std::optional<Curriculum> curriculum;
  std::mutex curriculum_mu;

  std::vector<EvalPoint> curve;
  long long next_eval = 0;
  std::mutex curve_mu;

  std::atomic<bool> failed{false};
  std::string error;
  std::mutex error_mu;
};

void fail(SharedState& sh, const std::string& msg) {
  {
    std::lock_guard<std::mutex> lk(sh.error_mu);
    if (sh.error.empty()) sh.error = msg;
  }
  sh.failed.store(true);
}

void run_worker(const TrainerConfig& cfg, const std::vector<EvalCase>& eval_cases,
                SharedState& sh, int worker) {
  Rng env_rng = Rng::derive(cfg.seed, 0x454e5600u + static_cast<std::uint64_t>(worker));
  Rng act_rng = Rng::derive(cfg.seed, 0x41435400u + static_cast<std::uint64_t>(worker));
  long long local_episode = 0;

  while (!sh.failed.load() && sh.decisions.load() < cfg.total_decision_steps) {
    try {
      // Pick this episode's environment.
      EnvSpec spec;
      std::uint64_t run_seed = 0;
      if (!cfg.fixed_envs.empty()) {
        spec = cfg.fixed_envs[static_cast<std::size_t>(local_episode) % cfg.fixed_envs.size()];
        run_seed = env_rng.next_u64();
      } else {
        GeneratorParams gp = cfg.gen;
        if (sh.curriculum) {
          std::lock_guard<std::mutex> lk(sh.curriculum_mu);
          const CurriculumStage& st = sh.curriculum->stage();
          gp.width = st.width;
          gp.height = st.height;
          gp.n_agents = st.n_agents;
        }
        const std::uint64_t gen_seed = env_rng.next_u64();
        run_seed = env_rng.next_u64();
        spec = generate_env(gp, gen_seed);
      }

      Params local;
      {
        std::lock_guard<std::mutex> lk(sh.param_mu);
        local = sh.params;
      }
      RailRolloutEnv env(spec, run_seed, cfg.masking_enabled);
      NetPolicy pol(local, act_rng, /*greedy=*/false);

      RolloutOptions opts;
      opts.segment_len = cfg.t_max;
      opts.on_segment = [&](int, Trajectory&& seg) {
        GradResult gr = a3c_gradients(local, seg);
        const double norm = clip_global_norm(gr.grads, cfg.clip_norm);
        if (!std::isfinite(gr.total_loss) || !std::isfinite(norm))
          throw std::runtime_error("worker " + std::to_string(worker) +
                                   ": non-finite loss or gradient norm");
        std::lock_guard<std::mutex> lk(sh.param_mu);
        rmsprop_update(sh.params, gr.grads, sh.rms, cfg.lr, cfg.rms_decay, cfg.rms_eps);
      };

      const EpisodeResult res = run_episode(env, pol, opts);
      act_rng = pol.rng();  // keep the sampling stream moving across episodes
      ++local_episode;
      sh.episodes.fetch_add(1);
      sh.env_steps.fetch_add(res.stats.env_steps);
      // A masked episode can finish without a single policy query (layouts
      // with no usable switch on the route). Charge it one budget unit so
      // the loop always terminates.
      const long long charge = std::max<long long>(res.stats.decisions, 1);
      const long long done = sh.decisions.fetch_add(charge) + charge;

      if (sh.curriculum) {
        std::lock_guard<std::mutex> lk(sh.curriculum_mu);
        sh.curriculum->record_episode(res.stats.arrival_fraction());
      }

      if (cfg.eval_every > 0) {
        std::lock_guard<std::mutex> lk(sh.curve_mu);
        if (done >= sh.next_eval && done < cfg.total_decision_steps) {
          Params snap;
          {
            std::lock_guard<std::mutex> plk(sh.param_mu);
            snap = sh.params;
          }
          const EvalResult er = evaluate(snap, eval_cases, cfg.masking_enabled, EvalMode::Argmax,
                                         Rng::derive(cfg.eval_seed, 0xA7).next_u64());
          int cur_stage = -1;
          if (sh.curriculum) {
            std::lock_guard<std::mutex> clk(sh.curriculum_mu);
            cur_stage = sh.curriculum->stage_index();
          }
          sh.curve.push_back(
              {done, sh.episodes.load(), cur_stage, er.arrival_rate, er.mean_return});
          sh.next_eval = (done / cfg.eval_every + 1) * cfg.eval_every;
        }
      }
    } catch (const std::exception& e) {
      fail(sh, e.what());
      return;
    }
  }
}

}  // namespace

TrainResult train(const TrainerConfig& cfg) {
  if (cfg.n_workers < 1) throw std::invalid_argument("train: n_workers must be >= 1");
  if (cfg.total_decision_steps < 0)
    throw std::invalid_argument("train: total_decision_steps must be >= 0");
  if (cfg.t_max < 1) throw std::invalid_argument("train: t_max must be >= 1");
  if (cfg.lr <= 0.0) throw std::invalid_argument("train: lr must be positive");
  if (cfg.net.input_dim != ObservationBuilder::kObsDim ||
      cfg.net.n_actions != kMoveActionCount)
    throw std::invalid_argument("train: network dims do not match the rail task");
  if (!cfg.fixed_envs.empty() && !cfg.curriculum.empty())
    throw std::invalid_argument("train: fixed_envs and curriculum are mutually exclusive");

  std::vector<EvalCase> eval_cases;
  if (!cfg.fixed_envs.empty()) {
    Rng rng = Rng::derive(cfg.eval_seed, 0x46495845);
    for (const EnvSpec& spec : cfg.fixed_envs) eval_cases.push_back({spec, rng.next_u64()});
  } else {
    eval_cases = make_eval_set(cfg.gen, cfg.eval_episodes, cfg.eval_seed);
  }

  SharedState sh;
  sh.params = Params::init(cfg.net, cfg.seed);
  sh.rms = Params::zeros_like(cfg.net);
  if (!cfg.curriculum.empty())
    sh.curriculum.emplace(cfg.curriculum, cfg.curriculum_window, cfg.curriculum_threshold);
  sh.next_eval = cfg.eval_every;

  const std::uint64_t eval_sample_seed = Rng::derive(cfg.eval_seed, 0xA7).next_u64();
  const EvalResult baseline =
      evaluate(sh.params, eval_cases, cfg.masking_enabled, EvalMode::Argmax, eval_sample_seed);
  sh.curve.push_back({0, 0, sh.curriculum ? sh.curriculum->stage_index() : -1,
                      baseline.arrival_rate, baseline.mean_return});

  if (cfg.total_decision_steps > 0) {
    std::vector<std::thread> workers;
    workers.reserve(static_cast<std::size_t>(cfg.n_workers));
    for (int w = 0; w < cfg.n_workers; ++w)
      workers.emplace_back(run_worker, std::cref(cfg), std::cref(eval_cases), std::ref(sh), w);
    for (std::thread& t : workers) t.join();
    if (sh.failed.load()) throw std::runtime_error("train: aborted: " + sh.error);

    const EvalResult fin =
        evaluate(sh.params, eval_cases, cfg.masking_enabled, EvalMode::Argmax, eval_sample_seed);
    sh.curve.push_back({sh.decisions.load(), sh.episodes.load(),
                        sh.curriculum ? sh.curriculum->stage_index() : -1, fin.arrival_rate,
                        fin.mean_return});
  }

  TrainResult out;
  out.params = std::move(sh.params);
  out.curve = std::move(sh.curve);
  out.episodes = sh.episodes.load();
  out.decisions = sh.decisions.load();
  out.env_steps = sh.env_steps.load();
  out.final_stage = sh.curriculum ? sh.curriculum->stage_index() : -1;
  return out;
}

void write_metrics_csv(const std::vector<EvalPoint>& curve, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_metrics_csv: cannot open " + path.string());
  out << "decisions,episodes,stage,arrival_rate,mean_return\n";
  char buf[64];
  for (const EvalPoint& p : curve) {
    out << p.decisions << ',' << p.episodes << ',' << p.stage << ',';
    std::snprintf(buf, sizeof(buf), "%.17g", p.arrival_rate);
    out << buf << ',';
    std::snprintf(buf, sizeof(buf), "%.17g", p.mean_return);
    out << buf << '\n';
  }
}

}  // namespace railab
