#include "taskbank/rl.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <sstream>

#include "taskbank/seeding.hpp"

namespace taskbank::rl {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

// Row-major (rows x cols) matrix-vector product plus bias.
void affine(const double* w, const double* b, std::span<const double> x,
            int rows, int cols, double* y) {
  for (int r = 0; r < rows; ++r) {
    const double* row = w + static_cast<std::ptrdiff_t>(r) * cols;
    double acc = b[r];
    for (int c = 0; c < cols; ++c) acc += row[c] * x[c];
    y[r] = acc;
  }
}

// Accumulates the outer product into the weight gradient, the bias gradient,
// and (optionally) back-propagates into dx.
void affine_backward(const double* w, std::span<const double> x,
                     std::span<const double> dy, int rows, int cols, double* gw,
                     double* gb, double* dx) {
  if (dx) std::fill(dx, dx + cols, 0.0);
  for (int r = 0; r < rows; ++r) {
    const double g = dy[r];
    gb[r] += g;
    if (g == 0.0) continue;
    const double* row = w + static_cast<std::ptrdiff_t>(r) * cols;
    double* grow = gw + static_cast<std::ptrdiff_t>(r) * cols;
    for (int c = 0; c < cols; ++c) grow[c] += g * x[c];
    if (dx)
      for (int c = 0; c < cols; ++c) dx[c] += g * row[c];
  }
}

double clamped_log_std(double v) { return std::clamp(v, kLogStdMin, kLogStdMax); }

bool log_std_active(double v) { return v > kLogStdMin && v < kLogStdMax; }

}  // namespace

std::size_t Mlp3::size() const {
  const auto i = static_cast<std::size_t>(in), h = static_cast<std::size_t>(hidden),
             o = static_cast<std::size_t>(out);
  return h * i + h + h * h + h + o * h + o;
}

void Mlp3::forward(std::span<const double> params, std::span<const double> x,
                   Cache& cache, std::span<double> y) const {
  const double* p = params.data() + offset;
  const double* w1 = p;
  const double* b1 = w1 + hidden * in;
  const double* w2 = b1 + hidden;
  const double* b2 = w2 + hidden * hidden;
  const double* w3 = b2 + hidden;
  const double* b3 = w3 + out * hidden;
  cache.x.assign(x.begin(), x.end());
  cache.h1.resize(static_cast<std::size_t>(hidden));
  cache.h2.resize(static_cast<std::size_t>(hidden));
  affine(w1, b1, x, hidden, in, cache.h1.data());
  for (double& v : cache.h1) v = std::tanh(v);
  affine(w2, b2, cache.h1, hidden, hidden, cache.h2.data());
  for (double& v : cache.h2) v = std::tanh(v);
  affine(w3, b3, cache.h2, out, hidden, y.data());
}

void Mlp3::backward(std::span<const double> params, const Cache& cache,
                    std::span<const double> dy, std::span<double> grad) const {
  const double* p = params.data() + offset;
  const double* w1 = p;
  const double* w2 = w1 + hidden * in + hidden;
  const double* w3 = w2 + hidden * hidden + hidden;
  double* g = grad.data() + offset;
  double* gw1 = g;
  double* gb1 = gw1 + hidden * in;
  double* gw2 = gb1 + hidden;
  double* gb2 = gw2 + hidden * hidden;
  double* gw3 = gb2 + hidden;
  double* gb3 = gw3 + out * hidden;

  std::vector<double> d2(static_cast<std::size_t>(hidden));
  std::vector<double> d1(static_cast<std::size_t>(hidden));
  affine_backward(w3, cache.h2, dy, out, hidden, gw3, gb3, d2.data());
  for (int k = 0; k < hidden; ++k) d2[k] *= 1.0 - cache.h2[k] * cache.h2[k];
  affine_backward(w2, cache.h1, d2, hidden, hidden, gw2, gb2, d1.data());
  for (int k = 0; k < hidden; ++k) d1[k] *= 1.0 - cache.h1[k] * cache.h1[k];
  affine_backward(w1, cache.x, d1, hidden, in, gw1, gb1, nullptr);
}

NetLayout NetLayout::make(int obs_dim, int act_dim, int hidden) {
  NetLayout l;
  l.actor = {obs_dim, hidden, act_dim, 0};
  l.log_std_offset = l.actor.size();
  l.critic = {obs_dim, hidden, 1,
              l.log_std_offset + static_cast<std::size_t>(act_dim)};
  l.total = l.critic.offset + l.critic.size();
  return l;
}

ObsNormalizer ObsNormalizer::identity(int dim) {
  ObsNormalizer n;
  n.mean.assign(static_cast<std::size_t>(dim), 0.0);
  n.var.assign(static_cast<std::size_t>(dim), 1.0);
  n.count = 0.0;
  return n;
}

void ObsNormalizer::update(std::span<const double> x) {
  // Merge a single sample into the running moments.
  const double total = count + 1.0;
  for (std::size_t d = 0; d < mean.size(); ++d) {
    const double delta = x[d] - mean[d];
    const double m_a = var[d] * count;
    const double new_mean = mean[d] + delta / total;
    const double m2 = m_a + delta * delta * count / total;
    mean[d] = new_mean;
    var[d] = m2 / total;
  }
  count = total;
}

std::vector<double> ObsNormalizer::normalize(std::span<const double> x) const {
  std::vector<double> y(mean.size());
  for (std::size_t d = 0; d < mean.size(); ++d)
    y[d] = std::clamp((x[d] - mean[d]) / std::sqrt(var[d] + 1e-8), -clip, clip);
  return y;
}

std::string Experience::key() const {
  return task_id + "__" + policy_id + "__" + std::to_string(seed);
}

std::vector<double> Experience::column(std::size_t d) const {
  std::vector<double> c;
  c.reserve(states.size());
  for (const auto& row : states) c.push_back(row.at(d));
  return c;
}

void Experience::validate() const {
  if (states.empty()) throw std::invalid_argument("experience is empty");
  for (const auto& row : states)
    if (row.size() != states[0].size())
      throw std::invalid_argument("experience rows differ in dimension");
}

std::span<const double> Policy::log_std() const {
  return std::span<const double>(params).subspan(layout.log_std_offset,
                                                 static_cast<std::size_t>(act_dim()));
}

std::vector<double> Policy::mean(std::span<const double> raw_state) const {
  std::vector<double> mu(static_cast<std::size_t>(act_dim()));
  Mlp3::Cache cache;
  const auto x = obs_norm.normalize(raw_state);
  layout.actor.forward(params, x, cache, mu);
  return mu;
}

std::vector<double> Policy::squash(std::span<const double> u) const {
  std::vector<double> a(u.size());
  for (std::size_t d = 0; d < u.size(); ++d)
    a[d] = action_low[d] +
           0.5 * (std::tanh(u[d]) + 1.0) * (action_high[d] - action_low[d]);
  return a;
}

std::vector<double> Policy::deterministic_action(
    std::span<const double> raw_state) const {
  return squash(mean(raw_state));
}

double Policy::value(std::span<const double> raw_state) const {
  double v = 0.0;
  Mlp3::Cache cache;
  const auto x = obs_norm.normalize(raw_state);
  layout.critic.forward(params, x, cache, std::span<double>(&v, 1));
  return v;
}

Policy make_policy(std::string policy_id, const netsim::SimConfig& cfg,
                   std::uint64_t seed, int hidden, double init_log_std) {
  Policy p;
  p.policy_id = std::move(policy_id);
  p.layout = NetLayout::make(cfg.state_dim(), cfg.action_dim(), hidden);
  p.params.assign(p.layout.total, 0.0);
  p.obs_norm = ObsNormalizer::identity(cfg.state_dim());
  p.action_low = netsim::ActionParams::lower_bounds(cfg.n_cells);
  p.action_high = netsim::ActionParams::upper_bounds(cfg.n_cells);

  std::mt19937_64 rng(derive_seed(seed, "init"));
  std::normal_distribution<double> normal(0.0, 1.0);
  auto init_mlp = [&](const Mlp3& m, double out_gain) {
    double* w = p.params.data() + m.offset;
    auto fill = [&](double* dst, int rows, int cols, double gain) {
      const double sd = gain / std::sqrt(static_cast<double>(cols));
      for (int k = 0; k < rows * cols; ++k) dst[k] = sd * normal(rng);
    };
    fill(w, m.hidden, m.in, std::sqrt(2.0));
    w += m.hidden * m.in + m.hidden;
    fill(w, m.hidden, m.hidden, std::sqrt(2.0));
    w += m.hidden * m.hidden + m.hidden;
    fill(w, m.out, m.hidden, out_gain);
  };
  init_mlp(p.layout.actor, 0.01);
  init_mlp(p.layout.critic, 1.0);
  for (int d = 0; d < p.act_dim(); ++d)
    p.params[p.layout.log_std_offset + static_cast<std::size_t>(d)] = init_log_std;
  return p;
}

double gaussian_log_prob(std::span<const double> u, std::span<const double> mu,
                         std::span<const double> log_std) {
  double lp = 0.0;
  for (std::size_t d = 0; d < u.size(); ++d) {
    const double ls = clamped_log_std(log_std[d]);
    const double z = (u[d] - mu[d]) * std::exp(-ls);
    lp += -0.5 * z * z - ls - 0.5 * kLog2Pi;
  }
  return lp;
}

ActOutput act_detailed(const Policy& policy, std::span<const double> raw_state,
                       ActMode mode, std::mt19937_64& rng) {
  if (raw_state.size() != static_cast<std::size_t>(policy.obs_dim()))
    throw std::invalid_argument("act: state has wrong dimension");
  for (double v : raw_state)
    if (!std::isfinite(v)) throw std::invalid_argument("act: non-finite state");
  ActOutput out;
  const auto mu = policy.mean(raw_state);
  const auto ls = policy.log_std();
  out.pre_squash = mu;
  if (mode == ActMode::stochastic) {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t d = 0; d < mu.size(); ++d)
      out.pre_squash[d] = mu[d] + std::exp(clamped_log_std(ls[d])) * normal(rng);
  }
  out.log_prob = gaussian_log_prob(out.pre_squash, mu, ls);
  const int n_cells = (policy.obs_dim()) / 3;
  out.action =
      netsim::ActionParams::from_vector(n_cells, policy.squash(out.pre_squash));
  return out;
}

netsim::ActionParams act(const Policy& policy, const netsim::StateVector& s,
                         ActMode mode, std::mt19937_64& rng) {
  return act_detailed(policy, s.flatten(), mode, rng).action;
}

Batch Batch::subset(std::span<const std::size_t> idx) const {
  Batch b;
  for (std::size_t i : idx) {
    b.obs.push_back(obs[i]);
    b.pre_squash.push_back(pre_squash[i]);
    b.log_prob_old.push_back(log_prob_old[i]);
    b.advantages.push_back(advantages[i]);
    b.returns.push_back(returns[i]);
  }
  return b;
}

namespace {

// Shared body of the two policy-gradient losses. `surrogate` maps
// (log_prob, log_prob_old, advantage) to (loss contribution, dloss/dlogp).
template <typename Surrogate>
LossTerms pg_loss(const NetLayout& layout, std::span<const double> params,
                  const Batch& batch, double vf_coef, double ent_coef,
                  std::vector<double>* grad, Surrogate surrogate) {
  const std::size_t n = batch.size();
  if (n == 0) throw std::invalid_argument("loss: empty batch");
  const int a = layout.act_dim();
  const auto au = static_cast<std::size_t>(a);
  const double inv_n = 1.0 / static_cast<double>(n);
  if (grad) grad->assign(params.size(), 0.0);

  const auto log_std = params.subspan(layout.log_std_offset, au);
  std::vector<double> ls(au), inv_var(au);
  for (std::size_t d = 0; d < au; ++d) {
    ls[d] = clamped_log_std(log_std[d]);
    inv_var[d] = std::exp(-2.0 * ls[d]);
  }

  LossTerms terms;
  Mlp3::Cache actor_cache, critic_cache;
  std::vector<double> mu(au), dmu(au), dlog_std(au, 0.0);
  double value = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    layout.actor.forward(params, batch.obs[i], actor_cache, mu);
    const auto& u = batch.pre_squash[i];
    const double lp = gaussian_log_prob(u, mu, log_std);
    const auto [loss_i, dlp] =
        surrogate(lp, batch.log_prob_old[i], batch.advantages[i]);
    terms.policy += loss_i * inv_n;

    layout.critic.forward(params, batch.obs[i], critic_cache,
                          std::span<double>(&value, 1));
    const double err = value - batch.returns[i];
    terms.value += vf_coef * err * err * inv_n;

    if (!grad) continue;
    const double scale = dlp * inv_n;
    if (scale != 0.0) {
      for (std::size_t d = 0; d < au; ++d) {
        const double diff = u[d] - mu[d];
        dmu[d] = scale * diff * inv_var[d];
        dlog_std[d] += scale * (diff * diff * inv_var[d] - 1.0);
      }
      layout.actor.backward(params, actor_cache, dmu, *grad);
    }
    const double dv = 2.0 * vf_coef * err * inv_n;
    layout.critic.backward(params, critic_cache, std::span<const double>(&dv, 1),
                           *grad);
  }

  for (std::size_t d = 0; d < au; ++d)
    terms.entropy += ls[d] + 0.5 * (kLog2Pi + 1.0);
  if (grad) {
    for (std::size_t d = 0; d < au; ++d) {
      if (!log_std_active(log_std[d])) continue;
      (*grad)[layout.log_std_offset + d] += dlog_std[d] - ent_coef;
    }
  }
  terms.total = terms.policy + terms.value - ent_coef * terms.entropy;
  return terms;
}

}  // namespace

LossTerms ppo_loss(const NetLayout& layout, std::span<const double> params,
                   const Batch& batch, double clip_epsilon, double vf_coef,
                   double ent_coef, std::vector<double>* grad) {
  return pg_loss(layout, params, batch, vf_coef, ent_coef, grad,
                 [clip_epsilon](double lp, double lp_old, double adv) {
                   const double ratio = std::exp(lp - lp_old);
                   const double clipped =
                       std::clamp(ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon);
                   const double s1 = ratio * adv;
                   const double s2 = clipped * adv;
                   if (s1 <= s2) return std::pair{-s1, -s1};
                   return std::pair{-s2, 0.0};
                 });
}

LossTerms vanilla_pg_loss(const NetLayout& layout,
                          std::span<const double> params, const Batch& batch,
                          double vf_coef, double ent_coef,
                          std::vector<double>* grad) {
  return pg_loss(layout, params, batch, vf_coef, ent_coef, grad,
                 [](double lp, double, double adv) {
                   return std::pair{-lp * adv, -adv};
                 });
}

Adam::Adam(std::size_t n, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

void Adam::step(std::span<double> params, std::span<const double> grad) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
    params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
  }
}

double clip_grad_norm(std::span<double> grad, double max_norm) {
  double sq = 0.0;
  for (double g : grad) sq += g * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / (norm + 1e-12);
    for (double& g : grad) g *= s;
  }
  return norm;
}

GradCheck finite_difference_check(const LossFn& loss,
                                  std::span<const double> params, double step,
                                  double floor) {
  std::vector<double> analytic;
  loss(params, &analytic);
  std::vector<double> p(params.begin(), params.end());
  GradCheck out;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double orig = p[i];
    p[i] = orig + step;
    const double fp = loss(p, nullptr);
    p[i] = orig - step;
    const double fm = loss(p, nullptr);
    p[i] = orig;
    const double fd = (fp - fm) / (2.0 * step);
    const double a = analytic[i];
    const double rel =
        std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), floor});
    out.max_abs_analytic = std::max(out.max_abs_analytic, std::abs(a));
    if (rel > out.max_relative_error) {
      out.max_relative_error = rel;
      out.worst_index = i;
    }
  }
  return out;
}

double policy_gradient_check(const Policy& policy, const Batch& batch,
                             LossKind kind, double clip_epsilon, double step) {
  const NetLayout& layout = policy.layout;
  // Zero advantages leave only the value regression term.
  Batch value_batch = batch;
  std::fill(value_batch.advantages.begin(), value_batch.advantages.end(), 0.0);
  LossFn fn = [&](std::span<const double> p, std::vector<double>* g) {
    switch (kind) {
      case LossKind::ppo_policy:
        return ppo_loss(layout, p, batch, clip_epsilon, 0.0, 0.0, g).total;
      case LossKind::value:
        return ppo_loss(layout, p, value_batch, clip_epsilon, 1.0, 0.0, g).total;
      case LossKind::ppo_total:
        return ppo_loss(layout, p, batch, clip_epsilon, 0.5, 0.01, g).total;
    }
    return 0.0;
  };
  return finite_difference_check(fn, policy.params, step).max_relative_error;
}

namespace {

nlohmann::json mlp_to_json(const Mlp3& m, std::span<const double> params) {
  nlohmann::json layers = nlohmann::json::array();
  const double* p = params.data() + m.offset;
  const int dims[3][2] = {{m.hidden, m.in}, {m.hidden, m.hidden}, {m.out, m.hidden}};
  for (const auto& d : dims) {
    nlohmann::json w = nlohmann::json::array();
    for (int r = 0; r < d[0]; ++r) {
      w.push_back(std::vector<double>(p, p + d[1]));
      p += d[1];
    }
    std::vector<double> b(p, p + d[0]);
    p += d[0];
    layers.push_back({{"W", w}, {"b", b}});
  }
  return {{"in", m.in}, {"hidden", m.hidden}, {"out", m.out}, {"layers", layers}};
}

void mlp_from_json(const nlohmann::json& j, const Mlp3& m,
                   std::vector<double>& params) {
  double* p = params.data() + m.offset;
  const auto& layers = j.at("layers");
  if (layers.size() != 3) throw std::invalid_argument("policy: expected 3 layers");
  for (const auto& layer : layers) {
    for (const auto& row : layer.at("W"))
      for (const auto& v : row) *p++ = v.get<double>();
    for (const auto& v : layer.at("b")) *p++ = v.get<double>();
  }
  if (p != params.data() + m.offset + m.size())
    throw std::invalid_argument("policy: weight shape mismatch");
}

}  // namespace

nlohmann::json to_json(const Policy& p) {
  nlohmann::json experiences = nlohmann::json::array();
  for (const auto& e : p.training_experiences) experiences.push_back(e.key());
  const auto ls = p.log_std();
  return {{"schema", 1},
          {"policy_id", p.policy_id},
          {"obs_dim", p.obs_dim()},
          {"act_dim", p.act_dim()},
          {"actor", mlp_to_json(p.layout.actor, p.params)},
          {"log_std", std::vector<double>(ls.begin(), ls.end())},
          {"critic", mlp_to_json(p.layout.critic, p.params)},
          {"obs_norm",
           {{"mean", p.obs_norm.mean},
            {"var", p.obs_norm.var},
            {"count", p.obs_norm.count},
            {"clip", p.obs_norm.clip}}},
          {"action_low", p.action_low},
          {"action_high", p.action_high},
          {"provenance",
           {{"trained_task_ids", p.provenance.trained_task_ids},
            {"parent_ids", p.provenance.parent_ids}}},
          {"final_eval_reward", p.final_eval_reward},
          {"experiences", experiences}};
}

Policy policy_from_json(const nlohmann::json& j) {
  if (j.value("schema", 0) != 1)
    throw std::invalid_argument("policy: unsupported schema version");
  Policy p;
  p.policy_id = j.at("policy_id").get<std::string>();
  const int hidden = j.at("actor").at("hidden").get<int>();
  p.layout = NetLayout::make(j.at("obs_dim").get<int>(), j.at("act_dim").get<int>(),
                             hidden);
  p.params.assign(p.layout.total, 0.0);
  mlp_from_json(j.at("actor"), p.layout.actor, p.params);
  mlp_from_json(j.at("critic"), p.layout.critic, p.params);
  const auto ls = j.at("log_std").get<std::vector<double>>();
  if (ls.size() != static_cast<std::size_t>(p.act_dim()))
    throw std::invalid_argument("policy: log_std size mismatch");
  std::copy(ls.begin(), ls.end(),
            p.params.begin() + static_cast<std::ptrdiff_t>(p.layout.log_std_offset));
  const auto& norm = j.at("obs_norm");
  p.obs_norm.mean = norm.at("mean").get<std::vector<double>>();
  p.obs_norm.var = norm.at("var").get<std::vector<double>>();
  p.obs_norm.count = norm.at("count").get<double>();
  p.obs_norm.clip = norm.value("clip", 10.0);
  p.action_low = j.at("action_low").get<std::vector<double>>();
  p.action_high = j.at("action_high").get<std::vector<double>>();
  const auto& prov = j.at("provenance");
  p.provenance.trained_task_ids =
      prov.at("trained_task_ids").get<std::vector<std::string>>();
  p.provenance.parent_ids = prov.at("parent_ids").get<std::vector<std::string>>();
  p.final_eval_reward = j.value("final_eval_reward", 0.0);
  return p;
}

std::string experience_to_csv(const Experience& e) {
  std::ostringstream os;
  os << "t";
  for (std::size_t d = 0; d < e.dim(); ++d) os << ",dim_" << d;
  os << "\n";
  char buf[32];
  for (std::size_t t = 0; t < e.states.size(); ++t) {
    os << t;
    for (double v : e.states[t]) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      os << ',' << buf;
    }
    os << "\n";
  }
  return os.str();
}

Experience experience_from_csv(const std::string& csv, std::string task_id,
                               std::string policy_id, std::uint64_t seed) {
  Experience e;
  e.task_id = std::move(task_id);
  e.policy_id = std::move(policy_id);
  e.seed = seed;
  std::istringstream is(csv);
  std::string line;
  if (!std::getline(is, line) || line.rfind("t", 0) != 0)
    throw std::invalid_argument("experience csv: missing header");
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::istringstream ls(line);
    std::string cell;
    std::getline(ls, cell, ',');  // t
    while (std::getline(ls, cell, ',')) row.push_back(std::stod(cell));
    e.states.push_back(std::move(row));
  }
  e.validate();
  return e;
}

nlohmann::json experience_sidecar(const Experience& e) {
  return {{"schema", 1},
          {"task_id", e.task_id},
          {"policy_id", e.policy_id},
          {"seed", e.seed},
          {"length", e.length()},
          {"dim", e.dim()}};
}

}  // namespace taskbank::rl
