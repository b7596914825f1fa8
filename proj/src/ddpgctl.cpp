#include "dfgl/ddpgctl.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "dfgl/common.hpp"

namespace dfgl::ctl {

void AgentConfig::validate() const {
  if (gamma < 0 || gamma >= 1) throw ConfigError("agent: gamma must be in [0,1)");
  if (xi <= 0 || xi > 1) throw ConfigError("agent: xi must be in (0,1]");
  if (upsilon <= 0 || upsilon >= 1) throw ConfigError("agent: upsilon must be in (0,1)");
  if (beta < 0 || beta > 1) throw ConfigError("agent: beta must be in [0,1]");
  if (chi <= 0 || rho <= 0 || phi <= 0)
    throw ConfigError("agent: reward weights must be positive");
  if (r_min <= 0 || r_min > 1) throw ConfigError("agent: r_min must be in (0,1]");
  if (inner_updates < 0 || batch_size <= 0 || buffer_capacity <= 0 || hidden <= 0)
    throw ConfigError("agent: sizes must be positive");
  if (optimizer != "adam" && optimizer != "sgd")
    throw ConfigError("agent: optimizer must be adam or sgd");
}

double reward(double t, double t_bar_prev, double C, double c_max, double f_bar,
              const AgentConfig& cfg) {
  if (!(t_bar_prev > 0)) throw std::invalid_argument("reward: t_bar_prev must be positive");
  return -cfg.chi * (t / t_bar_prev - 1.0) + cfg.rho * (c_max - C) +
         std::pow(cfg.phi, cfg.loss_threshold - f_bar);
}

double moving_avg_time(double t, double t_bar_prev, double upsilon) {
  return upsilon * t + (1.0 - upsilon) * t_bar_prev;
}

// ---- MLP -------------------------------------------------------------------

Mlp make_mlp(const std::vector<int>& dims, OutAct out, std::mt19937_64& rng) {
  if (dims.size() < 2) throw std::invalid_argument("make_mlp: need at least one layer");
  Mlp net;
  net.dims = dims;
  net.out = out;
  for (size_t l = 0; l + 1 < dims.size(); ++l) {
    kern::Matrix W(dims[l], dims[l + 1]);
    bool last = (l + 2 == dims.size());
    // small final-layer init keeps initial actions near 0.5 and Q near 0
    double bound = last ? 3e-3 : std::sqrt(6.0 / (dims[l] + dims[l + 1]));
    std::uniform_real_distribution<double> unif(-bound, bound);
    for (double& x : W.a) x = unif(rng);
    net.W.push_back(std::move(W));
    net.b.emplace_back(dims[l + 1], 0.0);
  }
  return net;
}

kern::Matrix mlp_forward(const Mlp& net, const kern::Matrix& x, MlpTrace* trace) {
  int L = static_cast<int>(net.W.size());
  if (trace) {
    trace->in.assign(L, {});
    trace->pre.assign(L, {});
  }
  kern::Matrix h = x;
  for (int l = 0; l < L; ++l) {
    if (trace) trace->in[l] = h;
    kern::Matrix z(h.rows, net.W[l].cols);
    kern::matmul(h, net.W[l], z);
    kern::add_row_vector(z, net.b[l]);
    if (trace) trace->pre[l] = z;
    if (l + 1 < L) {
      kern::relu_inplace(z);
    } else if (net.out == OutAct::Sigmoid) {
      for (double& v : z.a) v = 1.0 / (1.0 + std::exp(-v));
    }
    h = std::move(z);
  }
  if (trace) trace->out = h;
  return h;
}

MlpGrads zeros_like(const Mlp& net) {
  MlpGrads g;
  for (size_t l = 0; l < net.W.size(); ++l) {
    g.W.emplace_back(net.W[l].rows, net.W[l].cols);
    g.b.emplace_back(net.b[l].size(), 0.0);
  }
  return g;
}

kern::Matrix mlp_backward(const Mlp& net, const MlpTrace& trace, const kern::Matrix& dout,
                          MlpGrads& grads) {
  int L = static_cast<int>(net.W.size());
  kern::Matrix dH = dout;
  for (int l = L - 1; l >= 0; --l) {
    kern::Matrix dZ;
    if (l + 1 < L) {
      dZ = kern::Matrix(dH.rows, dH.cols);
      kern::relu_backward(trace.pre[l], dH, dZ);
    } else if (net.out == OutAct::Sigmoid) {
      dZ = kern::Matrix(dH.rows, dH.cols);
      for (size_t k = 0; k < dH.size(); ++k) {
        double y = trace.out.a[k];
        dZ.a[k] = dH.a[k] * y * (1.0 - y);
      }
    } else {
      dZ = dH;
    }
    kern::Matrix dW(net.W[l].rows, net.W[l].cols);
    kern::matmul_at_b(trace.in[l], dZ, dW);
    for (size_t k = 0; k < dW.size(); ++k) grads.W[l].a[k] += dW.a[k];
    std::vector<double> db(net.b[l].size());
    kern::col_sum(dZ, db);
    for (size_t k = 0; k < db.size(); ++k) grads.b[l][k] += db[k];

    kern::Matrix dIn(dZ.rows, net.W[l].rows);
    kern::matmul_a_bt(dZ, net.W[l], dIn);
    dH = std::move(dIn);
  }
  return dH;
}

std::vector<double> mlp_flatten(const Mlp& net) {
  std::vector<double> flat;
  for (size_t l = 0; l < net.W.size(); ++l) {
    flat.insert(flat.end(), net.W[l].a.begin(), net.W[l].a.end());
    flat.insert(flat.end(), net.b[l].begin(), net.b[l].end());
  }
  return flat;
}

std::vector<double> grads_flatten(const Mlp& net, const MlpGrads& g) {
  std::vector<double> flat;
  for (size_t l = 0; l < net.W.size(); ++l) {
    flat.insert(flat.end(), g.W[l].a.begin(), g.W[l].a.end());
    flat.insert(flat.end(), g.b[l].begin(), g.b[l].end());
  }
  return flat;
}

void mlp_assign(Mlp& net, const std::vector<double>& flat) {
  size_t pos = 0;
  for (size_t l = 0; l < net.W.size(); ++l) {
    std::copy(flat.begin() + pos, flat.begin() + pos + net.W[l].size(), net.W[l].a.begin());
    pos += net.W[l].size();
    std::copy(flat.begin() + pos, flat.begin() + pos + net.b[l].size(), net.b[l].begin());
    pos += net.b[l].size();
  }
  if (pos != flat.size()) throw std::invalid_argument("mlp_assign: size mismatch");
}

void soft_update(const Mlp& online, Mlp& target, double xi) {
  for (size_t l = 0; l < online.W.size(); ++l) {
    for (size_t k = 0; k < online.W[l].size(); ++k)
      target.W[l].a[k] = xi * online.W[l].a[k] + (1.0 - xi) * target.W[l].a[k];
    for (size_t k = 0; k < online.b[l].size(); ++k)
      target.b[l][k] = xi * online.b[l][k] + (1.0 - xi) * target.b[l][k];
  }
}

// ---- state normalization ----------------------------------------------------

std::vector<std::pair<int, int>> StateLayout::groups() const {
  int mm = m * m;
  std::vector<std::pair<int, int>> g;
  int p = 0;
  g.emplace_back(p, p + 2 * m);  // bandwidth in+out
  p += 2 * m;
  g.emplace_back(p, p + m);  // per-worker round time
  p += m;
  g.emplace_back(p, p + mm);  // embedding bits
  p += mm;
  g.emplace_back(p, p + mm);  // pairwise distances
  p += mm;
  g.emplace_back(p, p + m);  // losses
  return g;
}

RunningNorm::RunningNorm(const StateLayout& layout) : layout_(layout) {
  groups_.resize(layout_.groups().size());
}

void RunningNorm::observe(const std::vector<double>& raw) {
  if (static_cast<int>(raw.size()) != layout_.dim())
    throw std::invalid_argument("RunningNorm: state size mismatch");
  auto gs = layout_.groups();
  for (size_t g = 0; g < gs.size(); ++g) {
    auto& st = groups_[g];
    for (int i = gs[g].first; i < gs[g].second; ++i) {
      st.n += 1;
      double delta = raw[i] - st.mean;
      st.mean += delta / static_cast<double>(st.n);
      st.m2 += delta * (raw[i] - st.mean);
    }
  }
}

std::vector<double> RunningNorm::normalize(const std::vector<double>& raw) const {
  if (static_cast<int>(raw.size()) != layout_.dim())
    throw std::invalid_argument("RunningNorm: state size mismatch");
  std::vector<double> out(raw.size());
  auto gs = layout_.groups();
  for (size_t g = 0; g < gs.size(); ++g) {
    const auto& st = groups_[g];
    double mean = st.n > 0 ? st.mean : 0.0;
    double var = st.n > 1 ? st.m2 / static_cast<double>(st.n - 1) : 0.0;
    double denom = var > 1e-12 ? std::sqrt(var) : 1.0;
    for (int i = gs[g].first; i < gs[g].second; ++i) out[i] = (raw[i] - mean) / denom;
  }
  return out;
}

nlohmann::json RunningNorm::to_json() const {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& g : groups_) j.push_back({{"mean", g.mean}, {"m2", g.m2}, {"n", g.n}});
  return j;
}

// ---- action decoding ---------------------------------------------------------

int action_dim(int m) { return m * (m - 1) / 2 + m; }

namespace {

int pair_index(int i, int j, int m) {  // i < j
  return i * m - i * (i + 1) / 2 + (j - i - 1);
}

struct Dsu {
  std::vector<int> p;
  explicit Dsu(int n) : p(n) { std::iota(p.begin(), p.end(), 0); }
  int find(int x) { return p[x] == x ? x : p[x] = find(p[x]); }
  bool unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    p[b] = a;
    return true;
  }
};

}  // namespace

Action decode_action(const std::vector<double>& raw, int m, double r_min) {
  if (static_cast<int>(raw.size()) != action_dim(m))
    throw std::invalid_argument("decode_action: raw size mismatch");
  Action act;
  act.raw = raw;
  act.topology = Topology(m);

  int ne = m * (m - 1) / 2;
  Dsu dsu(m);
  int comps = m;
  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j)
      if (raw[pair_index(i, j, m)] >= 0.5) {
        act.topology.add_edge(i, j);
        if (dsu.unite(i, j)) --comps;
      }

  if (comps > 1) {
    // absent edges by score desc, pair lex asc
    std::vector<std::pair<int, int>> absent;
    for (int i = 0; i < m; ++i)
      for (int j = i + 1; j < m; ++j)
        if (!act.topology.has_edge(i, j)) absent.emplace_back(i, j);
    std::stable_sort(absent.begin(), absent.end(),
                     [&](const std::pair<int, int>& a, const std::pair<int, int>& b) {
                       double sa = raw[pair_index(a.first, a.second, m)];
                       double sb = raw[pair_index(b.first, b.second, m)];
                       if (sa != sb) return sa > sb;
                       return a < b;
                     });
    for (auto [i, j] : absent) {
      if (comps == 1) break;
      if (dsu.unite(i, j)) {
        act.topology.add_edge(i, j);
        --comps;
      }
    }
  }

  act.ratios.resize(m);
  for (int i = 0; i < m; ++i) {
    double s = std::clamp(raw[ne + i], 0.0, 1.0);
    act.ratios[i] = r_min + s * (1.0 - r_min);
  }
  return act;
}

// ---- replay buffer ------------------------------------------------------------

ReplayBuffer::ReplayBuffer(int capacity) : capacity_(capacity) {
  if (capacity <= 0) throw std::invalid_argument("ReplayBuffer: capacity must be positive");
}

void ReplayBuffer::store(Transition t) {
  if (static_cast<int>(items_.size()) < capacity_) {
    items_.push_back(std::move(t));
  } else {
    items_[next_] = std::move(t);
  }
  next_ = (next_ + 1) % capacity_;
}

std::vector<const Transition*> ReplayBuffer::sample(int k, std::mt19937_64& rng) const {
  std::vector<const Transition*> out;
  int n = size();
  if (n == 0) return out;
  if (k >= n) {
    for (const auto& t : items_) out.push_back(&t);
    return out;
  }
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = 0; i < k; ++i) {
    std::uniform_int_distribution<int> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
    out.push_back(&items_[idx[i]]);
  }
  return out;
}

// ---- agent ---------------------------------------------------------------------

namespace {

kern::Matrix hstack(const kern::Matrix& a, const kern::Matrix& b) {
  kern::Matrix out(a.rows, a.cols + b.cols);
  for (int r = 0; r < a.rows; ++r) {
    std::copy(a.row(r), a.row(r) + a.cols, out.row(r));
    std::copy(b.row(r), b.row(r) + b.cols, out.row(r) + a.cols);
  }
  return out;
}

nlohmann::json mlp_to_json(const Mlp& net) {
  return {{"dims", net.dims},
          {"out", net.out == OutAct::Sigmoid ? "sigmoid" : "linear"},
          {"flat", mlp_flatten(net)}};
}

}  // namespace

Agent::Agent(int m, const AgentConfig& cfg, uint64_t seed)
    : m_(m),
      cfg_(cfg),
      layout_{m},
      buffer_(cfg.buffer_capacity),
      norm_(layout_),
      rng_(make_rng(seed, "agent")),
      sigma_(cfg.noise_sigma) {
  cfg_.validate();
  if (m < 1) throw ConfigError("agent: m must be >= 1");
  int sd = layout_.dim(), ad = action_dim(m);
  actor_ = make_mlp({sd, cfg.hidden, cfg.hidden, ad}, OutAct::Sigmoid, rng_);
  critic_ = make_mlp({sd + ad, cfg.hidden, cfg.hidden, 1}, OutAct::Linear, rng_);
  actor_t_ = actor_;
  critic_t_ = critic_;
  acc_actor_.assign(mlp_flatten(actor_).size(), 0.0);
  acc_critic_.assign(mlp_flatten(critic_).size(), 0.0);
  actor_opt_ = gcn::AdamState(static_cast<int>(acc_actor_.size()));
  critic_opt_ = gcn::AdamState(static_cast<int>(acc_critic_.size()));
}

void Agent::observe_state(const std::vector<double>& raw) { norm_.observe(raw); }

Action Agent::act(const std::vector<double>& raw_state, bool explore) {
  auto s = norm_.normalize(raw_state);
  kern::Matrix x(1, static_cast<int>(s.size()));
  std::copy(s.begin(), s.end(), x.a.begin());
  kern::Matrix y = mlp_forward(actor_, x, nullptr);
  std::vector<double> raw(y.a.begin(), y.a.end());
  if (explore) {
    std::normal_distribution<double> gauss(0.0, sigma_);
    for (double& v : raw) v = std::clamp(v + gauss(rng_), 0.0, 1.0);
  }
  return decode_action(raw, m_, cfg_.r_min);
}

void Agent::store_transition(std::vector<double> s, std::vector<double> a_raw, double u,
                             std::vector<double> s_next) {
  Transition t;
  t.s = std::move(s);
  t.a = std::move(a_raw);
  t.u = u;
  t.s_next = std::move(s_next);
  buffer_.store(std::move(t));
}

Agent::StepDiag Agent::train_step() {
  StepDiag diag;
  auto batch = buffer_.sample(cfg_.batch_size, rng_);
  int B = static_cast<int>(batch.size());
  if (B == 0) return diag;
  diag.batch = B;
  diag.short_batch = B < cfg_.batch_size;

  int sd = state_dim(), ad = act_dim();
  kern::Matrix S(B, sd), S2(B, sd), A(B, ad);
  std::vector<double> u(B);
  for (int r = 0; r < B; ++r) {
    auto sn = norm_.normalize(batch[r]->s);
    auto sn2 = norm_.normalize(batch[r]->s_next);
    std::copy(sn.begin(), sn.end(), S.row(r));
    std::copy(sn2.begin(), sn2.end(), S2.row(r));
    std::copy(batch[r]->a.begin(), batch[r]->a.end(), A.row(r));
    u[r] = batch[r]->u;
  }

  // y = u + gamma * Q'(s', pi'(s'))
  kern::Matrix a2 = mlp_forward(actor_t_, S2, nullptr);
  kern::Matrix q2 = mlp_forward(critic_t_, hstack(S2, a2), nullptr);
  std::vector<double> y(B);
  for (int r = 0; r < B; ++r) y[r] = u[r] + cfg_.gamma * q2.at(r, 0);

  // critic: descend mean 0.5*delta^2
  MlpTrace ctrace;
  kern::Matrix q = mlp_forward(critic_, hstack(S, A), &ctrace);
  kern::Matrix dq(B, 1);
  for (int r = 0; r < B; ++r) {
    double delta = y[r] - q.at(r, 0);
    dq.at(r, 0) = -delta / B;
    diag.mean_delta += delta / B;
    diag.mean_q += q.at(r, 0) / B;
    diag.mean_y += y[r] / B;
  }
  MlpGrads cgrads = zeros_like(critic_);
  mlp_backward(critic_, ctrace, dq, cgrads);
  auto cg = grads_flatten(critic_, cgrads);
  for (size_t k = 0; k < cg.size(); ++k) acc_critic_[k] += cg[k];

  // actor: ascend mean Q(s, pi(s)); critic weights only relay the gradient
  MlpTrace atrace;
  kern::Matrix a_pi = mlp_forward(actor_, S, &atrace);
  MlpTrace ctrace2;
  mlp_forward(critic_, hstack(S, a_pi), &ctrace2);
  kern::Matrix dq_pi(B, 1);
  for (int r = 0; r < B; ++r) dq_pi.at(r, 0) = -1.0 / B;
  MlpGrads scratch = zeros_like(critic_);
  kern::Matrix dX = mlp_backward(critic_, ctrace2, dq_pi, scratch);
  kern::Matrix dA(B, ad);
  for (int r = 0; r < B; ++r) std::copy(dX.row(r) + sd, dX.row(r) + sd + ad, dA.row(r));
  MlpGrads agrads = zeros_like(actor_);
  mlp_backward(actor_, atrace, dA, agrads);
  auto ag = grads_flatten(actor_, agrads);
  for (size_t k = 0; k < ag.size(); ++k) acc_actor_[k] += ag[k];

  acc_batches_ += 1;
  return diag;
}

void Agent::finish_round() {
  if (acc_batches_ > 0) {
    auto aflat = mlp_flatten(actor_);
    auto cflat = mlp_flatten(critic_);
    if (cfg_.optimizer == "adam") {
      gcn::AdamConfig ac{cfg_.actor_lr, 0.9, 0.999, 1e-8};
      gcn::AdamConfig cc{cfg_.critic_lr, 0.9, 0.999, 1e-8};
      gcn::adam_step(aflat, acc_actor_, actor_opt_, ac);
      gcn::adam_step(cflat, acc_critic_, critic_opt_, cc);
    } else {
      for (size_t k = 0; k < aflat.size(); ++k) aflat[k] -= cfg_.actor_lr * acc_actor_[k];
      for (size_t k = 0; k < cflat.size(); ++k) cflat[k] -= cfg_.critic_lr * acc_critic_[k];
    }
    mlp_assign(actor_, aflat);
    mlp_assign(critic_, cflat);
    std::fill(acc_actor_.begin(), acc_actor_.end(), 0.0);
    std::fill(acc_critic_.begin(), acc_critic_.end(), 0.0);
    acc_batches_ = 0;
  }
  soft_update(actor_, actor_t_, cfg_.xi);
  soft_update(critic_, critic_t_, cfg_.xi);
  sigma_ *= cfg_.noise_decay;
}

nlohmann::json Agent::checkpoint() const {
  nlohmann::json buf = nlohmann::json::array();
  for (int i = 0; i < buffer_.size(); ++i) {
    const auto& t = buffer_.at(i);
    buf.push_back({{"s", t.s}, {"a", t.a}, {"u", t.u}, {"s_next", t.s_next}});
  }
  return {{"version", 1},
          {"m", m_},
          {"noise_sigma", sigma_},
          {"actor", mlp_to_json(actor_)},
          {"critic", mlp_to_json(critic_)},
          {"actor_target", mlp_to_json(actor_t_)},
          {"critic_target", mlp_to_json(critic_t_)},
          {"norm", norm_.to_json()},
          {"buffer", std::move(buf)}};
}

}  // namespace dfgl::ctl
