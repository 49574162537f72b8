#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "railab/rng.hpp"

namespace railab {

// Action legality mask; empty means everything is allowed. Softmax
// renormalizes over the legal set and illegal actions get probability 0.
using ActionMask = std::vector<std::uint8_t>;

struct NetworkConfig {
  int input_dim = 112;
  int fc1 = 128;
  int fc2 = 64;
  int lstm = 64;
  int fc3 = 64;
  int n_actions = 5;
  double gamma = 0.99;
  double value_coef = 0.5;
  double entropy_coef = 0.01;
  // When false the recurrent cell is swapped for a stateless tanh layer of
  // the same width (weights: the input-gate rows of wx plus the matching
  // slice of bl; wh and the other gate rows sit unused). Parameter shapes
  // stay identical so checkpoints and ablation configs line up.
  bool use_lstm = true;

  bool operator==(const NetworkConfig&) const = default;
};

struct LstmState {
  Eigen::VectorXd h;
  Eigen::VectorXd c;

  static LstmState zero(int lstm) {
    return {Eigen::VectorXd::Zero(lstm), Eigen::VectorXd::Zero(lstm)};
  }
};

// All learnable tensors. The LSTM gate blocks are packed row-wise in the
// order [input, forget, output, candidate].
struct Params {
  NetworkConfig cfg;
  Eigen::MatrixXd w1, w2;  // fc1 x input, fc2 x fc1
  Eigen::MatrixXd wx, wh;  // 4*lstm x fc2, 4*lstm x lstm
  Eigen::MatrixXd w3;      // fc3 x lstm
  Eigen::MatrixXd wp, wv;  // n_actions x fc3, 1 x fc3
  Eigen::VectorXd b1, b2, bl, b3, bp, bv;

  // Weights uniform in +-1/sqrt(fan_in), biases zero except the forget
  // gate's +1 (keeps memory open early in training).
  static Params init(const NetworkConfig& cfg, std::uint64_t seed);

  static Params zeros_like(const NetworkConfig& cfg);

  template <class F>
  void visit(F&& f) {
    f(w1); f(b1); f(w2); f(b2); f(wx); f(wh); f(bl); f(w3); f(b3);
    f(wp); f(bp); f(wv); f(bv);
  }

  template <class F>
  void visit(F&& f) const {
    f(w1); f(b1); f(w2); f(b2); f(wx); f(wh); f(bl); f(w3); f(b3);
    f(wp); f(bp); f(wv); f(bv);
  }

  template <class F>
  static void visit2(Params& a, const Params& b, F&& f) {
    f(a.w1, b.w1); f(a.b1, b.b1); f(a.w2, b.w2); f(a.b2, b.b2);
    f(a.wx, b.wx); f(a.wh, b.wh); f(a.bl, b.bl);
    f(a.w3, b.w3); f(a.b3, b.b3);
    f(a.wp, b.wp); f(a.bp, b.bp); f(a.wv, b.wv); f(a.bv, b.bv);
  }

  void set_zero();
  double squared_norm() const;
  void add_scaled(const Params& other, double s);
  void scale(double s);
  std::size_t parameter_count() const;
  std::uint64_t fingerprint() const;
};

struct ForwardResult {
  Eigen::VectorXd policy;  // masked softmax over actions
  Eigen::VectorXd logits;
  double value = 0.0;
  LstmState state;  // recurrent state after this step
};

// One recurrent step. `mask` may be null (all actions legal).
ForwardResult forward(const Params& p, const Eigen::VectorXd& x, const LstmState& prev,
                      const ActionMask* mask = nullptr);

struct TrajStep {
  Eigen::VectorXd x;
  ActionMask mask;  // stored per step: legality at decision time
  int action = 0;
  double reward = 0.0;
};

// A truncated rollout segment. `bootstrap_value` is V(s_T) captured when the
// segment was cut (0 when the episode ended) and is treated as a constant.
struct Trajectory {
  LstmState start_state;
  std::vector<TrajStep> steps;
  double bootstrap_value = 0.0;
};

struct GradResult {
  Params grads;
  double policy_loss = 0.0;
  double value_loss = 0.0;  // unweighted sum of squared errors
  double entropy = 0.0;
  double total_loss = 0.0;
};

// Replays the trajectory through the network and backpropagates the A3C
// objective:
//   L = -sum_t [ log pi(a_t) * adv_t + entropy_coef * H(pi_t) ]
//       + value_coef * sum_t (R_t - V_t)^2
// with n-step returns R_t folded back from the stored bootstrap. Advantages
// are constants in the policy term; the value term differentiates V.
GradResult a3c_gradients(const Params& p, const Trajectory& traj);

// Scales gradients down to `max_norm` if their global L2 norm exceeds it.
// Returns the pre-clip norm.
double clip_global_norm(Params& grads, double max_norm);

// Shared RMSProp: acc = decay*acc + (1-decay)*g^2;
// param -= lr * g / sqrt(acc + eps).
void rmsprop_update(Params& params, const Params& grads, Params& rms, double lr,
                    double decay = 0.99, double eps = 1e-5);

int sample_action(const Eigen::VectorXd& policy, Rng& rng);
int argmax_action(const Eigen::VectorXd& policy);

nlohmann::json params_to_json(const Params& p);
Params params_from_json(const nlohmann::json& j);
void save_params(const Params& p, const std::string& path);
Params load_params(const std::string& path);

}  // namespace railab
