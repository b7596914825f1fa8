#include "dfgl/gcnmodel.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dfgl::gcn {

int param_count(const std::vector<int>& dims, int num_classes) {
  int n = 0;
  for (size_t l = 0; l + 1 < dims.size(); ++l)
    n += 2 * dims[l] * dims[l + 1] + dims[l + 1];
  n += dims.back() * num_classes + num_classes;
  return n;
}

namespace {

void glorot_fill(kern::Matrix& W, std::mt19937_64& rng) {
  double bound = std::sqrt(6.0 / (W.rows + W.cols));
  std::uniform_real_distribution<double> unif(-bound, bound);
  for (double& x : W.a) x = unif(rng);
}

}  // namespace

ModelParams init_params(const std::vector<int>& dims, int num_classes,
                        std::mt19937_64& rng) {
  if (dims.size() < 2) throw std::invalid_argument("init_params: need at least one layer");
  if (num_classes < 2) throw std::invalid_argument("init_params: need at least two classes");
  ModelParams p;
  p.dims = dims;
  p.num_classes = num_classes;
  for (size_t l = 0; l + 1 < dims.size(); ++l) {
    kern::Matrix W(2 * dims[l], dims[l + 1]);
    glorot_fill(W, rng);
    p.W.push_back(std::move(W));
    p.b.emplace_back(dims[l + 1], 0.0);
  }
  p.head_W = kern::Matrix(dims.back(), num_classes);
  glorot_fill(p.head_W, rng);
  p.head_b.assign(num_classes, 0.0);
  return p;
}

ModelParams zeros_like(const ModelParams& p) {
  ModelParams z;
  z.dims = p.dims;
  z.num_classes = p.num_classes;
  for (int l = 0; l < p.num_layers(); ++l) {
    z.W.emplace_back(p.W[l].rows, p.W[l].cols);
    z.b.emplace_back(p.b[l].size(), 0.0);
  }
  z.head_W = kern::Matrix(p.head_W.rows, p.head_W.cols);
  z.head_b.assign(p.head_b.size(), 0.0);
  return z;
}

std::vector<double> flatten(const ModelParams& p) {
  std::vector<double> flat;
  flat.reserve(param_count(p.dims, p.num_classes));
  for (int l = 0; l < p.num_layers(); ++l) {
    flat.insert(flat.end(), p.W[l].a.begin(), p.W[l].a.end());
    flat.insert(flat.end(), p.b[l].begin(), p.b[l].end());
  }
  flat.insert(flat.end(), p.head_W.a.begin(), p.head_W.a.end());
  flat.insert(flat.end(), p.head_b.begin(), p.head_b.end());
  return flat;
}

ModelParams unflatten(const std::vector<double>& flat, const std::vector<int>& dims,
                      int num_classes) {
  if (static_cast<int>(flat.size()) != param_count(dims, num_classes))
    throw std::invalid_argument("unflatten: size mismatch");
  ModelParams p;
  p.dims = dims;
  p.num_classes = num_classes;
  size_t pos = 0;
  auto take_matrix = [&](int r, int c) {
    kern::Matrix M(r, c);
    std::copy(flat.begin() + pos, flat.begin() + pos + M.size(), M.a.begin());
    pos += M.size();
    return M;
  };
  auto take_vector = [&](int n) {
    std::vector<double> v(flat.begin() + pos, flat.begin() + pos + n);
    pos += n;
    return v;
  };
  for (size_t l = 0; l + 1 < dims.size(); ++l) {
    p.W.push_back(take_matrix(2 * dims[l], dims[l + 1]));
    p.b.push_back(take_vector(dims[l + 1]));
  }
  p.head_W = take_matrix(dims.back(), num_classes);
  p.head_b = take_vector(num_classes);
  return p;
}

double param_l2_distance(const ModelParams& a, const ModelParams& b) {
  if (a.dims != b.dims || a.num_classes != b.num_classes)
    throw std::invalid_argument("param_l2_distance: shape mismatch");
  double s = 0.0;
  auto acc = [&](const std::vector<double>& x, const std::vector<double>& y) {
    for (size_t k = 0; k < x.size(); ++k) {
      double d = x[k] - y[k];
      s += d * d;
    }
  };
  for (int l = 0; l < a.num_layers(); ++l) {
    acc(a.W[l].a, b.W[l].a);
    acc(a.b[l], b.b[l]);
  }
  acc(a.head_W.a, b.head_W.a);
  acc(a.head_b, b.head_b);
  return std::sqrt(s);
}

int64_t param_size_bits(const ModelParams& p) {
  return static_cast<int64_t>(param_count(p.dims, p.num_classes)) * 32;
}

namespace {

// input = [computed local rows ; remote rows for this level]
kern::Matrix compose_input(const kern::Matrix& local, const kern::Matrix& remote,
                           int expect_remote) {
  if (remote.rows != expect_remote)
    throw std::invalid_argument("forward: remote row count mismatch");
  if (remote.rows == 0) return local;
  if (remote.cols != local.cols)
    throw std::invalid_argument("forward: remote column mismatch");
  kern::Matrix out(local.rows + remote.rows, local.cols);
  std::copy(local.a.begin(), local.a.end(), out.a.begin());
  std::copy(remote.a.begin(), remote.a.end(), out.a.begin() + local.size());
  return out;
}

}  // namespace

void forward(const ModelParams& p, const ForwardPlan& plan, const kern::Matrix& h0,
             ForwardTrace& trace) {
  int L = p.num_layers();
  if (static_cast<int>(plan.layers.size()) != L)
    throw std::invalid_argument("forward: plan depth != model depth");
  if (static_cast<int>(plan.remote_inputs.size()) != L)
    throw std::invalid_argument("forward: remote_inputs depth != model depth");
  if (plan.remote_inputs[0].rows != 0 && !plan.allow_raw_remote)
    throw std::invalid_argument("forward: level-0 remote rows are not allowed");

  trace.input.assign(L, {});
  trace.concat.assign(L, {});
  trace.pre.assign(L, {});
  trace.act.assign(L, {});

  const kern::Matrix* prev = &h0;
  for (int l = 0; l < L; ++l) {
    const LayerPlan& lp = plan.layers[l];
    if (prev->rows != lp.n_in)
      throw std::invalid_argument("forward: layer input row mismatch");
    trace.input[l] = compose_input(*prev, plan.remote_inputs[l], lp.n_remote_in);
    const kern::Matrix& in = trace.input[l];

    int d = p.dims[l];
    if (in.cols != d) throw std::invalid_argument("forward: layer input width mismatch");
    kern::Matrix agg(lp.n_out, d);
    kern::segment_mean(in, lp.nbr_offsets, lp.nbr_index, agg);

    kern::Matrix X(lp.n_out, 2 * d);
    for (int r = 0; r < lp.n_out; ++r) {
      int s = lp.self_index[r];
      if (s < 0 || s >= in.rows) throw std::invalid_argument("forward: self_index out of range");
      std::copy(in.row(s), in.row(s) + d, X.row(r));
      std::copy(agg.row(r), agg.row(r) + d, X.row(r) + d);
    }
    trace.concat[l] = std::move(X);

    kern::Matrix Z(lp.n_out, p.dims[l + 1]);
    kern::matmul(trace.concat[l], p.W[l], Z);
    kern::add_row_vector(Z, p.b[l]);
    trace.pre[l] = Z;
    kern::relu_inplace(Z);
    trace.act[l] = std::move(Z);
    prev = &trace.act[l];
  }

  trace.logits = kern::Matrix(prev->rows, p.num_classes);
  kern::matmul(*prev, p.head_W, trace.logits);
  kern::add_row_vector(trace.logits, p.head_b);
}

double softmax_xent(const kern::Matrix& logits, const std::vector<int>& labels,
                    kern::Matrix* dlogits) {
  int n = logits.rows, c = logits.cols;
  if (static_cast<int>(labels.size()) != n)
    throw std::invalid_argument("softmax_xent: label count mismatch");
  if (n == 0) throw std::invalid_argument("softmax_xent: empty batch");
  if (dlogits) *dlogits = kern::Matrix(n, c);
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    const double* z = logits.row(i);
    int y = labels[i];
    if (y < 0 || y >= c) throw std::invalid_argument("softmax_xent: label out of range");
    double zmax = *std::max_element(z, z + c);
    double denom = 0.0;
    for (int j = 0; j < c; ++j) denom += std::exp(z[j] - zmax);
    loss += std::log(denom) - (z[y] - zmax);
    if (dlogits) {
      double* g = dlogits->row(i);
      for (int j = 0; j < c; ++j) g[j] = std::exp(z[j] - zmax) / denom / n;
      g[y] -= 1.0 / n;
    }
  }
  return loss / n;
}

double accuracy(const kern::Matrix& logits, const std::vector<int>& labels) {
  int n = logits.rows, c = logits.cols;
  if (n == 0) return 0.0;
  int hit = 0;
  for (int i = 0; i < n; ++i) {
    const double* z = logits.row(i);
    int best = 0;
    for (int j = 1; j < c; ++j)
      if (z[j] > z[best]) best = j;
    if (best == labels[i]) ++hit;
  }
  return static_cast<double>(hit) / n;
}

ModelParams backward(const ModelParams& p, const ForwardPlan& plan,
                     const ForwardTrace& trace, const kern::Matrix& dlogits) {
  int L = p.num_layers();
  ModelParams grads = zeros_like(p);

  const kern::Matrix& hL = trace.act[L - 1];
  kern::matmul_at_b(hL, dlogits, grads.head_W);
  kern::col_sum(dlogits, grads.head_b);
  kern::Matrix dH(dlogits.rows, p.dims[L]);
  kern::matmul_a_bt(dlogits, p.head_W, dH);

  for (int l = L - 1; l >= 0; --l) {
    const LayerPlan& lp = plan.layers[l];
    int d = p.dims[l];

    kern::Matrix dZ(dH.rows, dH.cols);
    kern::relu_backward(trace.pre[l], dH, dZ);

    kern::matmul_at_b(trace.concat[l], dZ, grads.W[l]);
    kern::col_sum(dZ, grads.b[l]);

    kern::Matrix dX(lp.n_out, 2 * d);
    kern::matmul_a_bt(dZ, p.W[l], dX);

    // scatter self part, then mean-aggregate part; remote rows absorb nothing
    kern::Matrix dIn(trace.input[l].rows, d);
    dIn.set_zero();
    for (int r = 0; r < lp.n_out; ++r) {
      const double* src = dX.row(r);
      double* dst = dIn.row(lp.self_index[r]);
      for (int j = 0; j < d; ++j) dst[j] += src[j];
    }
    kern::Matrix dE(lp.n_out, d);
    for (int r = 0; r < lp.n_out; ++r)
      std::copy(dX.row(r) + d, dX.row(r) + 2 * d, dE.row(r));
    kern::segment_mean_backward(dE, lp.nbr_offsets, lp.nbr_index, dIn);

    if (l == 0) break;
    dH = kern::Matrix(lp.n_in, d);
    std::copy(dIn.a.begin(), dIn.a.begin() + dH.size(), dH.a.begin());
  }
  return grads;
}

void add_weight_decay(ModelParams& grads, const ModelParams& p, double wd) {
  if (wd == 0.0) return;
  for (int l = 0; l < p.num_layers(); ++l) {
    for (size_t k = 0; k < p.W[l].size(); ++k) grads.W[l].a[k] += wd * p.W[l].a[k];
    for (size_t k = 0; k < p.b[l].size(); ++k) grads.b[l][k] += wd * p.b[l][k];
  }
  for (size_t k = 0; k < p.head_W.size(); ++k) grads.head_W.a[k] += wd * p.head_W.a[k];
  for (size_t k = 0; k < p.head_b.size(); ++k) grads.head_b[k] += wd * p.head_b[k];
}

void adam_step(std::vector<double>& params, const std::vector<double>& grads,
               AdamState& state, const AdamConfig& cfg) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw std::invalid_argument("adam_step: size mismatch");
  state.t += 1;
  double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (size_t i = 0; i < params.size(); ++i) {
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grads[i];
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
    double mhat = state.m[i] / bc1;
    double vhat = state.v[i] / bc2;
    params[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

double l2_norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace dfgl::gcn
