#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "dfgl/gcnmodel.hpp"
#include "dfgl/kernels.hpp"
#include "dfgl/topology.hpp"

#include <nlohmann/json_fwd.hpp>

namespace dfgl::ctl {

struct AgentConfig {
  double gamma = 0.9;          // discount
  double xi = 0.01;            // target soft-update coefficient
  double chi = 2.0;            // time-penalty weight
  double rho = 1.0;            // consensus weight
  double phi = 10.0;           // loss-term base
  double upsilon = 0.3;        // round-time smoothing
  double beta = 0.3;           // gradient-norm EMA for C_max
  double loss_threshold = 1.0; // reference loss in the reward exponent
  double noise_sigma = 0.3;
  double noise_decay = 0.995;
  int inner_updates = 4;       // mini-batches accumulated per round
  int batch_size = 32;
  int buffer_capacity = 2048;
  int hidden = 128;            // width of both hidden layers
  double actor_lr = 1e-4;
  double critic_lr = 1e-3;
  double r_min = 0.05;
  std::string optimizer = "adam";  // or "sgd"
  bool reward_uses_estimate = true;

  void validate() const;  // throws ConfigError
};

/// u = -chi*(t/t_prev - 1) + rho*(C_max - C) + phi^(loss_threshold - f_bar)
double reward(double t, double t_bar_prev, double C, double c_max, double f_bar,
              const AgentConfig& cfg);

/// t_bar = upsilon*t + (1-upsilon)*t_bar_prev
double moving_avg_time(double t, double t_bar_prev, double upsilon);

// ---- small dense MLP with manual gradients -------------------------------

enum class OutAct { Linear, Sigmoid };

struct Mlp {
  std::vector<int> dims;  // input, hidden..., output
  OutAct out = OutAct::Linear;
  std::vector<kern::Matrix> W;
  std::vector<std::vector<double>> b;
};

Mlp make_mlp(const std::vector<int>& dims, OutAct out, std::mt19937_64& rng);

struct MlpTrace {
  std::vector<kern::Matrix> in;   // input of each affine layer
  std::vector<kern::Matrix> pre;  // pre-activation
  kern::Matrix out;
};

kern::Matrix mlp_forward(const Mlp& net, const kern::Matrix& x, MlpTrace* trace);

struct MlpGrads {
  std::vector<kern::Matrix> W;
  std::vector<std::vector<double>> b;
};

MlpGrads zeros_like(const Mlp& net);
/// Returns d(loss)/d(input); dout is d(loss)/d(output).
kern::Matrix mlp_backward(const Mlp& net, const MlpTrace& trace, const kern::Matrix& dout,
                          MlpGrads& grads);

std::vector<double> mlp_flatten(const Mlp& net);
std::vector<double> grads_flatten(const Mlp& net, const MlpGrads& g);
void mlp_assign(Mlp& net, const std::vector<double>& flat);
/// target = xi * online + (1 - xi) * target
void soft_update(const Mlp& online, Mlp& target, double xi);

// ---- state layout and running normalization ------------------------------

/// Raw state = [b_in(m), b_out(m), t_i(m), embed bits (m^2), pairwise
/// distances (m^2), losses (m)], length 4m + 2m^2.
struct StateLayout {
  int m = 0;
  int dim() const { return 4 * m + 2 * m * m; }
  // group boundaries: bandwidth, time, volume, distance, loss
  std::vector<std::pair<int, int>> groups() const;
};

/// Pooled mean/variance per group; components of one group share statistics
/// because they share units.
class RunningNorm {
 public:
  explicit RunningNorm(const StateLayout& layout);
  void observe(const std::vector<double>& raw);
  std::vector<double> normalize(const std::vector<double>& raw) const;

  const StateLayout& layout() const { return layout_; }
  nlohmann::json to_json() const;

 private:
  StateLayout layout_;
  struct Grp {
    double mean = 0.0, m2 = 0.0;
    int64_t n = 0;
  };
  std::vector<Grp> groups_;
};

// ---- action decoding ------------------------------------------------------

int action_dim(int m);  // m(m-1)/2 edge scores + m ratio scores

struct Action {
  std::vector<double> raw;
  Topology topology;
  std::vector<double> ratios;
};

/// Threshold edge scores at 0.5, then connect remaining components greedily
/// by (score desc, lexicographic pair asc); ratios = r_min + s*(1 - r_min).
Action decode_action(const std::vector<double>& raw, int m, double r_min);

// ---- replay buffer --------------------------------------------------------

struct Transition {
  std::vector<double> s, a, s_next;
  double u = 0.0;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(int capacity);
  void store(Transition t);  // ring eviction of the oldest
  /// Uniform without replacement; fewer than k stored returns everything.
  std::vector<const Transition*> sample(int k, std::mt19937_64& rng) const;
  int size() const { return static_cast<int>(items_.size()); }
  int capacity() const { return capacity_; }
  const Transition& at(int i) const { return items_[i]; }

 private:
  int capacity_;
  size_t next_ = 0;
  std::vector<Transition> items_;
};

// ---- the agent ------------------------------------------------------------

class Agent {
 public:
  Agent(int m, const AgentConfig& cfg, uint64_t seed);

  int state_dim() const { return layout_.dim(); }
  int act_dim() const { return action_dim(m_); }
  const AgentConfig& config() const { return cfg_; }
  double noise_scale() const { return sigma_; }

  /// Feed a freshly observed raw state into the normalization statistics.
  void observe_state(const std::vector<double>& raw);
  Action act(const std::vector<double>& raw_state, bool explore);
  void store_transition(std::vector<double> s, std::vector<double> a_raw, double u,
                        std::vector<double> s_next);

  struct StepDiag {
    double mean_delta = 0.0, mean_q = 0.0, mean_y = 0.0;
    int batch = 0;
    bool short_batch = false;
  };
  /// One sampled mini-batch; gradients accumulate until finish_round.
  StepDiag train_step();
  /// Applies the accumulated weight changes, soft-updates the targets and
  /// decays the exploration noise. One call per round.
  void finish_round();

  int buffer_size() const { return buffer_.size(); }
  nlohmann::json checkpoint() const;

  // exposed for gradient tests
  Mlp& actor() { return actor_; }
  Mlp& critic() { return critic_; }
  const Mlp& actor_target() const { return actor_t_; }
  const Mlp& critic_target() const { return critic_t_; }

 private:
  int m_;
  AgentConfig cfg_;
  StateLayout layout_;
  Mlp actor_, critic_, actor_t_, critic_t_;
  ReplayBuffer buffer_;
  RunningNorm norm_;
  std::mt19937_64 rng_;
  double sigma_;
  std::vector<double> acc_actor_, acc_critic_;
  int acc_batches_ = 0;
  gcn::AdamState actor_opt_, critic_opt_;
};

}  // namespace dfgl::ctl
