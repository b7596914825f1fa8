#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "dfgl/kernels.hpp"

namespace dfgl::gcn {

/// L graph-convolution layers followed by a linear prediction head.
/// GC layer l maps [h_self || mean(h_neighbors)] through an affine map and
/// ReLU; W[l] has shape (2*dims[l]) x dims[l+1]. head_W is dims[L] x classes.
struct ModelParams {
  std::vector<int> dims;  // d_0 .. d_L
  int num_classes = 0;
  std::vector<kern::Matrix> W;         // L entries
  std::vector<std::vector<double>> b;  // L entries
  kern::Matrix head_W;
  std::vector<double> head_b;

  int num_layers() const { return static_cast<int>(W.size()); }
};

int param_count(const std::vector<int>& dims, int num_classes);

ModelParams init_params(const std::vector<int>& dims, int num_classes,
                        std::mt19937_64& rng);
ModelParams zeros_like(const ModelParams& p);

std::vector<double> flatten(const ModelParams& p);
ModelParams unflatten(const std::vector<double>& flat, const std::vector<int>& dims,
                      int num_classes);

double param_l2_distance(const ModelParams& a, const ModelParams& b);
int64_t param_size_bits(const ModelParams& p);  // 32 bits per entry

/// Wiring of one graph-convolution layer. Input rows are the previous
/// level's embeddings: computed local rows first, then any received remote
/// rows appended (constants for backprop).
struct LayerPlan {
  int n_in = 0;                  // local rows of previous level (excl. remote)
  int n_remote_in = 0;           // appended remote rows
  int n_out = 0;                 // nodes whose embedding this layer computes
  std::vector<int> self_index;   // n_out entries, row of the node itself in input
  std::vector<int> nbr_offsets;  // n_out+1
  std::vector<int> nbr_index;    // rows in input; empty segment -> zero aggregate
};

/// Full multi-layer wiring plus per-level received embeddings.
/// remote_inputs[l] is appended to the input of layer l+1 and must have
/// dims[l] columns; remote_inputs[0] stays empty (raw features never cross)
/// unless allow_raw_remote is set, which only the privacy-off test mode does.
struct ForwardPlan {
  std::vector<LayerPlan> layers;
  std::vector<kern::Matrix> remote_inputs;
  bool allow_raw_remote = false;
};

/// Intermediates kept for backprop; act[l] holds h^{l+1} rows, logits the
/// head output over the last layer's rows.
struct ForwardTrace {
  std::vector<kern::Matrix> input;   // composed input per GC layer
  std::vector<kern::Matrix> concat;  // [self || aggregate] per GC layer
  std::vector<kern::Matrix> pre;     // pre-activation per GC layer
  std::vector<kern::Matrix> act;     // post-ReLU per GC layer
  kern::Matrix logits;
};

void forward(const ModelParams& p, const ForwardPlan& plan, const kern::Matrix& h0,
             ForwardTrace& trace);

/// Mean softmax cross-entropy; optionally emits d(loss)/d(logits).
double softmax_xent(const kern::Matrix& logits, const std::vector<int>& labels,
                    kern::Matrix* dlogits);
double accuracy(const kern::Matrix& logits, const std::vector<int>& labels);

/// Reverse-mode gradients for head and all layers; remote input rows absorb
/// nothing (cross-worker embeddings are constants).
ModelParams backward(const ModelParams& p, const ForwardPlan& plan,
                     const ForwardTrace& trace, const kern::Matrix& dlogits);

/// grad += wd * param, applied to every parameter.
void add_weight_decay(ModelParams& grads, const ModelParams& p, double wd);

struct AdamState {
  std::vector<double> m, v;
  int64_t t = 0;

  explicit AdamState(int n = 0) : m(n, 0.0), v(n, 0.0) {}
};

struct AdamConfig {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

void adam_step(std::vector<double>& params, const std::vector<double>& grads,
               AdamState& state, const AdamConfig& cfg);

double l2_norm(const std::vector<double>& v);

}  // namespace dfgl::gcn
