#include "railab/policy_net.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "railab/hash.hpp"

namespace railab {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

void fill_uniform(MatrixXd& m, double bound, Rng& rng) {
  for (Eigen::Index c = 0; c < m.cols(); ++c)
    for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = rng.next_range(-bound, bound);
}

// Softmax over the legal subset; illegal entries get exact zeros.
VectorXd masked_softmax(const VectorXd& logits, const ActionMask* mask) {
  const Eigen::Index n = logits.size();
  if (mask && !mask->empty() && static_cast<Eigen::Index>(mask->size()) != n)
    throw std::invalid_argument("masked_softmax: mask size mismatch");
  auto legal = [&](Eigen::Index a) {
    return !mask || mask->empty() || (*mask)[static_cast<std::size_t>(a)] != 0;
  };
  double max_logit = -std::numeric_limits<double>::infinity();
  for (Eigen::Index a = 0; a < n; ++a)
    if (legal(a)) max_logit = std::max(max_logit, logits(a));
  if (!std::isfinite(max_logit))
    throw std::invalid_argument("masked_softmax: mask allows no actions");
  VectorXd p = VectorXd::Zero(n);
  double sum = 0.0;
  for (Eigen::Index a = 0; a < n; ++a) {
    if (!legal(a)) continue;
    p(a) = std::exp(logits(a) - max_logit);
    sum += p(a);
  }
  p /= sum;
  return p;
}

struct StepCache {
  VectorXd x, h1, h2;
  VectorXd gi, gf, go, gg;  // post-activation gates
  VectorXd c, tanh_c, h, h3;
  VectorXd logits, policy;
  double value = 0.0;
};

StepCache run_forward(const Params& p, const VectorXd& x, const VectorXd& h_prev,
                      const VectorXd& c_prev, const ActionMask* mask) {
  const NetworkConfig& cfg = p.cfg;
  if (x.size() != cfg.input_dim) throw std::invalid_argument("forward: input size mismatch");
  StepCache s;
  s.x = x;
  s.h1 = (p.w1 * x + p.b1).array().tanh();
  s.h2 = (p.w2 * s.h1 + p.b2).array().tanh();
  const int L = cfg.lstm;
  if (cfg.use_lstm) {
    const VectorXd pre = p.wx * s.h2 + p.wh * h_prev + p.bl;
    auto sigmoid = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
    s.gi = pre.segment(0, L).unaryExpr(sigmoid);
    s.gf = pre.segment(L, L).unaryExpr(sigmoid);
    s.go = pre.segment(2 * L, L).unaryExpr(sigmoid);
    s.gg = pre.segment(3 * L, L).array().tanh();
    s.c = s.gf.cwiseProduct(c_prev) + s.gi.cwiseProduct(s.gg);
    s.tanh_c = s.c.array().tanh();
    s.h = s.go.cwiseProduct(s.tanh_c);
  } else {
    s.h = (p.wx.topRows(L) * s.h2 + p.bl.head(L)).array().tanh();
    s.c = c_prev;
  }
  s.h3 = (p.w3 * s.h + p.b3).array().tanh();
  s.logits = p.wp * s.h3 + p.bp;
  s.value = (p.wv * s.h3 + p.bv)(0);
  s.policy = masked_softmax(s.logits, mask);
  return s;
}

}  // namespace

Params Params::zeros_like(const NetworkConfig& cfg) {
  Params p;
  p.cfg = cfg;
  p.w1 = MatrixXd::Zero(cfg.fc1, cfg.input_dim);
  p.b1 = VectorXd::Zero(cfg.fc1);
  p.w2 = MatrixXd::Zero(cfg.fc2, cfg.fc1);
  p.b2 = VectorXd::Zero(cfg.fc2);
  p.wx = MatrixXd::Zero(4 * cfg.lstm, cfg.fc2);
  p.wh = MatrixXd::Zero(4 * cfg.lstm, cfg.lstm);
  p.bl = VectorXd::Zero(4 * cfg.lstm);
  p.w3 = MatrixXd::Zero(cfg.fc3, cfg.lstm);
  p.b3 = VectorXd::Zero(cfg.fc3);
  p.wp = MatrixXd::Zero(cfg.n_actions, cfg.fc3);
  p.bp = VectorXd::Zero(cfg.n_actions);
  p.wv = MatrixXd::Zero(1, cfg.fc3);
  p.bv = VectorXd::Zero(1);
  return p;
}

Params Params::init(const NetworkConfig& cfg, std::uint64_t seed) {
  if (cfg.input_dim < 1 || cfg.fc1 < 1 || cfg.fc2 < 1 || cfg.lstm < 1 || cfg.fc3 < 1 ||
      cfg.n_actions < 2)
    throw std::invalid_argument("Params::init: degenerate layer sizes");
  Params p = zeros_like(cfg);
  Rng rng = Rng::derive(seed, 0x4e4554ULL);
  fill_uniform(p.w1, 1.0 / std::sqrt(static_cast<double>(cfg.input_dim)), rng);
  fill_uniform(p.w2, 1.0 / std::sqrt(static_cast<double>(cfg.fc1)), rng);
  fill_uniform(p.wx, 1.0 / std::sqrt(static_cast<double>(cfg.fc2)), rng);
  fill_uniform(p.wh, 1.0 / std::sqrt(static_cast<double>(cfg.lstm)), rng);
  fill_uniform(p.w3, 1.0 / std::sqrt(static_cast<double>(cfg.lstm)), rng);
  fill_uniform(p.wp, 1.0 / std::sqrt(static_cast<double>(cfg.fc3)), rng);
  fill_uniform(p.wv, 1.0 / std::sqrt(static_cast<double>(cfg.fc3)), rng);
  p.bl.segment(cfg.lstm, cfg.lstm).setOnes();  // forget-gate bias +1
  return p;
}

void Params::set_zero() {
  visit([](auto& t) { t.setZero(); });
}

double Params::squared_norm() const {
  double s = 0.0;
  visit([&](const auto& t) { s += t.squaredNorm(); });
  return s;
}

void Params::add_scaled(const Params& other, double s) {
  visit2(*this, other, [s](auto& a, const auto& b) { a += s * b; });
}

void Params::scale(double s) {
  visit([s](auto& t) { t *= s; });
}

std::size_t Params::parameter_count() const {
  std::size_t n = 0;
  visit([&](const auto& t) { n += static_cast<std::size_t>(t.size()); });
  return n;
}

std::uint64_t Params::fingerprint() const {
  Fnv1a h;
  h.i32(cfg.input_dim).i32(cfg.fc1).i32(cfg.fc2).i32(cfg.lstm).i32(cfg.fc3).i32(cfg.n_actions);
  h.u8(cfg.use_lstm ? 1 : 0);
  visit([&](const auto& t) {
    h.i32(static_cast<std::int32_t>(t.rows())).i32(static_cast<std::int32_t>(t.cols()));
    h.bytes(t.data(), sizeof(double) * static_cast<std::size_t>(t.size()));
  });
  return h.value();
}

ForwardResult forward(const Params& p, const VectorXd& x, const LstmState& prev,
                      const ActionMask* mask) {
  if (prev.h.size() != p.cfg.lstm || prev.c.size() != p.cfg.lstm)
    throw std::invalid_argument("forward: LSTM state size mismatch");
  const StepCache s = run_forward(p, x, prev.h, prev.c, mask);
  return {s.policy, s.logits, s.value, {s.h, s.c}};
}

GradResult a3c_gradients(const Params& p, const Trajectory& traj) {
  const NetworkConfig& cfg = p.cfg;
  const std::size_t T = traj.steps.size();
  if (T == 0) throw std::invalid_argument("a3c_gradients: empty trajectory");
  if (traj.start_state.h.size() != cfg.lstm || traj.start_state.c.size() != cfg.lstm)
    throw std::invalid_argument("a3c_gradients: LSTM state size mismatch");

  // Forward replay with caches.
  std::vector<StepCache> cache(T);
  {
    VectorXd h = traj.start_state.h;
    VectorXd c = traj.start_state.c;
    for (std::size_t t = 0; t < T; ++t) {
      const TrajStep& st = traj.steps[t];
      if (st.action < 0 || st.action >= cfg.n_actions)
        throw std::invalid_argument("a3c_gradients: action out of range");
      cache[t] = run_forward(p, st.x, h, c, st.mask.empty() ? nullptr : &st.mask);
      if (!st.mask.empty() && st.mask[static_cast<std::size_t>(st.action)] == 0)
        throw std::invalid_argument("a3c_gradients: stored action is masked out");
      h = cache[t].h;
      c = cache[t].c;
    }
  }

  // n-step returns from the stored bootstrap.
  std::vector<double> returns(T);
  double r = traj.bootstrap_value;
  for (std::size_t t = T; t-- > 0;) {
    r = traj.steps[t].reward + cfg.gamma * r;
    returns[t] = r;
  }

  GradResult out;
  out.grads = Params::zeros_like(cfg);
  Params& g = out.grads;

  VectorXd dh_next = VectorXd::Zero(cfg.lstm);
  VectorXd dc_next = VectorXd::Zero(cfg.lstm);

  for (std::size_t t = T; t-- > 0;) {
    const StepCache& s = cache[t];
    const TrajStep& st = traj.steps[t];
    const double adv = returns[t] - s.value;

    // Per-step scalars.
    double entropy = 0.0;
    for (Eigen::Index a = 0; a < s.policy.size(); ++a)
      if (s.policy(a) > 0.0) entropy -= s.policy(a) * std::log(s.policy(a));
    const double logp = std::log(std::max(s.policy(st.action), 1e-300));
    out.policy_loss -= logp * adv;
    out.entropy += entropy;
    out.value_loss += (returns[t] - s.value) * (returns[t] - s.value);

    // d total_loss / d logits. Advantage is a constant here.
    VectorXd dlogits = VectorXd::Zero(s.policy.size());
    for (Eigen::Index a = 0; a < s.policy.size(); ++a) {
      if (s.policy(a) <= 0.0) continue;  // masked out: no gradient
      const double onehot = a == st.action ? 1.0 : 0.0;
      dlogits(a) = adv * (s.policy(a) - onehot) +
                   cfg.entropy_coef * s.policy(a) * (std::log(s.policy(a)) + entropy);
    }
    const double dvalue = -2.0 * cfg.value_coef * (returns[t] - s.value);

    // Output heads into fc3.
    g.wp += dlogits * s.h3.transpose();
    g.bp += dlogits;
    g.wv += dvalue * s.h3.transpose();
    g.bv(0) += dvalue;
    VectorXd dh3 = p.wp.transpose() * dlogits + p.wv.transpose() * dvalue;

    // fc3 (tanh).
    const VectorXd dpre3 =
        dh3.cwiseProduct((1.0 - s.h3.array().square()).matrix());
    g.w3 += dpre3 * s.h.transpose();
    g.b3 += dpre3;

    // LSTM cell (or its stateless stand-in).
    const int L = cfg.lstm;
    VectorXd dh2;
    if (cfg.use_lstm) {
      const VectorXd& h_prev = t == 0 ? traj.start_state.h : cache[t - 1].h;
      const VectorXd& c_prev = t == 0 ? traj.start_state.c : cache[t - 1].c;
      const VectorXd dh = p.w3.transpose() * dpre3 + dh_next;
      const VectorXd dgo = dh.cwiseProduct(s.tanh_c);
      const VectorXd dc =
          dc_next + dh.cwiseProduct(s.go).cwiseProduct((1.0 - s.tanh_c.array().square()).matrix());
      const VectorXd dgi = dc.cwiseProduct(s.gg);
      const VectorXd dgf = dc.cwiseProduct(c_prev);
      const VectorXd dgg = dc.cwiseProduct(s.gi);

      VectorXd dz(4 * L);
      dz.segment(0, L) = dgi.array() * s.gi.array() * (1.0 - s.gi.array());
      dz.segment(L, L) = dgf.array() * s.gf.array() * (1.0 - s.gf.array());
      dz.segment(2 * L, L) = dgo.array() * s.go.array() * (1.0 - s.go.array());
      dz.segment(3 * L, L) = dgg.array() * (1.0 - s.gg.array().square());

      g.wx += dz * s.h2.transpose();
      g.wh += dz * h_prev.transpose();
      g.bl += dz;
      dh_next = p.wh.transpose() * dz;
      dc_next = dc.cwiseProduct(s.gf);
      dh2 = p.wx.transpose() * dz;
    } else {
      const VectorXd dh = p.w3.transpose() * dpre3;
      const VectorXd dzl = dh.cwiseProduct((1.0 - s.h.array().square()).matrix());
      g.wx.topRows(L) += dzl * s.h2.transpose();
      g.bl.head(L) += dzl;
      dh2 = p.wx.topRows(L).transpose() * dzl;
    }

    // fc2 and fc1 (tanh).
    const VectorXd dpre2 = dh2.cwiseProduct((1.0 - s.h2.array().square()).matrix());
    g.w2 += dpre2 * s.h1.transpose();
    g.b2 += dpre2;
    const VectorXd dh1 = p.w2.transpose() * dpre2;
    const VectorXd dpre1 = dh1.cwiseProduct((1.0 - s.h1.array().square()).matrix());
    g.w1 += dpre1 * s.x.transpose();
    g.b1 += dpre1;
  }

  out.total_loss = out.policy_loss - cfg.entropy_coef * out.entropy +
                   cfg.value_coef * out.value_loss;
  return out;
}

double clip_global_norm(Params& grads, double max_norm) {
  const double norm = std::sqrt(grads.squared_norm());
  if (norm > max_norm && norm > 0.0) grads.scale(max_norm / norm);
  return norm;
}

void rmsprop_update(Params& params, const Params& grads, Params& rms, double lr, double decay,
                    double eps) {
  Params::visit2(rms, grads, [decay](auto& acc, const auto& g) {
    acc.array() = decay * acc.array() + (1.0 - decay) * g.array().square();
  });
  // The apply step needs all three tensors at once; walk them as flat spans.
  std::vector<double*> wp;
  std::vector<const double*> gp;
  std::vector<double*> ap;
  std::vector<std::size_t> sz;
  params.visit([&](auto& t) {
    wp.push_back(t.data());
    sz.push_back(static_cast<std::size_t>(t.size()));
  });
  grads.visit([&](const auto& t) { gp.push_back(t.data()); });
  rms.visit([&](auto& t) { ap.push_back(t.data()); });
  for (std::size_t i = 0; i < wp.size(); ++i)
    for (std::size_t k = 0; k < sz[i]; ++k)
      wp[i][k] -= lr * gp[i][k] / std::sqrt(ap[i][k] + eps);
}

int sample_action(const VectorXd& policy, Rng& rng) {
  const double u = rng.next_unit();
  double acc = 0.0;
  int last_positive = -1;
  for (Eigen::Index a = 0; a < policy.size(); ++a) {
    if (policy(a) <= 0.0) continue;
    last_positive = static_cast<int>(a);
    acc += policy(a);
    if (u < acc) return static_cast<int>(a);
  }
  if (last_positive < 0) throw std::invalid_argument("sample_action: degenerate policy");
  return last_positive;  // floating residue at the top of the CDF
}

int argmax_action(const VectorXd& policy) {
  Eigen::Index best = 0;
  policy.maxCoeff(&best);
  return static_cast<int>(best);
}

nlohmann::json params_to_json(const Params& p) {
  auto tensor = [](const MatrixXd& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      nlohmann::json row = nlohmann::json::array();
      for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
      rows.push_back(row);
    }
    return rows;
  };
  auto vec = [](const VectorXd& v) {
    nlohmann::json a = nlohmann::json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
  };
  return {{"format", "railab-net"},
          {"version", 1},
          {"config",
           {{"input_dim", p.cfg.input_dim},
            {"fc1", p.cfg.fc1},
            {"fc2", p.cfg.fc2},
            {"lstm", p.cfg.lstm},
            {"fc3", p.cfg.fc3},
            {"n_actions", p.cfg.n_actions},
            {"gamma", p.cfg.gamma},
            {"value_coef", p.cfg.value_coef},
            {"entropy_coef", p.cfg.entropy_coef},
            {"use_lstm", p.cfg.use_lstm}}},
          {"tensors",
           {{"w1", tensor(p.w1)}, {"b1", vec(p.b1)}, {"w2", tensor(p.w2)}, {"b2", vec(p.b2)},
            {"wx", tensor(p.wx)}, {"wh", tensor(p.wh)}, {"bl", vec(p.bl)},
            {"w3", tensor(p.w3)}, {"b3", vec(p.b3)},
            {"wp", tensor(p.wp)}, {"bp", vec(p.bp)}, {"wv", tensor(p.wv)}, {"bv", vec(p.bv)}}}};
}

Params params_from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.value("format", "") != "railab-net" || j.value("version", 0) != 1)
    throw std::invalid_argument("params_from_json: not a railab-net checkpoint");
  const auto& jc = j.at("config");
  NetworkConfig cfg;
  cfg.input_dim = jc.at("input_dim").get<int>();
  cfg.fc1 = jc.at("fc1").get<int>();
  cfg.fc2 = jc.at("fc2").get<int>();
  cfg.lstm = jc.at("lstm").get<int>();
  cfg.fc3 = jc.at("fc3").get<int>();
  cfg.n_actions = jc.at("n_actions").get<int>();
  cfg.gamma = jc.at("gamma").get<double>();
  cfg.value_coef = jc.at("value_coef").get<double>();
  cfg.entropy_coef = jc.at("entropy_coef").get<double>();
  cfg.use_lstm = jc.at("use_lstm").get<bool>();
  Params p = Params::zeros_like(cfg);
  const auto& jt = j.at("tensors");
  auto load_tensor = [&](const char* name, MatrixXd& m) {
    const auto& rows = jt.at(name);
    if (static_cast<Eigen::Index>(rows.size()) != m.rows())
      throw std::invalid_argument(std::string("params_from_json: shape mismatch in ") + name);
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      const auto& row = rows[static_cast<std::size_t>(r)];
      if (static_cast<Eigen::Index>(row.size()) != m.cols())
        throw std::invalid_argument(std::string("params_from_json: shape mismatch in ") + name);
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = row[static_cast<std::size_t>(c)];
    }
  };
  auto load_vec = [&](const char* name, VectorXd& v) {
    const auto& a = jt.at(name);
    if (static_cast<Eigen::Index>(a.size()) != v.size())
      throw std::invalid_argument(std::string("params_from_json: shape mismatch in ") + name);
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = a[static_cast<std::size_t>(i)];
  };
  load_tensor("w1", p.w1);
  load_vec("b1", p.b1);
  load_tensor("w2", p.w2);
  load_vec("b2", p.b2);
  load_tensor("wx", p.wx);
  load_tensor("wh", p.wh);
  load_vec("bl", p.bl);
  load_tensor("w3", p.w3);
  load_vec("b3", p.b3);
  load_tensor("wp", p.wp);
  load_vec("bp", p.bp);
  load_tensor("wv", p.wv);
  load_vec("bv", p.bv);
  return p;
}

void save_params(const Params& p, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_params: cannot open " + path);
  out << params_to_json(p).dump() << '\n';
}

Params load_params(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_params: cannot open " + path);
  nlohmann::json j;
  in >> j;
  return params_from_json(j);
}

}  // namespace railab
