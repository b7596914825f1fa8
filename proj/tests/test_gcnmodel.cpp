#include "doctest.h"

#include <cmath>
#include <random>
#include <vector>

#include "dfgl/common.hpp"
#include "dfgl/gcnmodel.hpp"

using namespace dfgl;

namespace {

// hand-wired 2-layer instance: 5 level-0 rows, 4 level-1 nodes (+ optional
// 2 remote level-1 rows), 3 batch nodes
struct Instance {
  gcn::ModelParams params;
  gcn::ForwardPlan plan;
  kern::Matrix h0;
  std::vector<int> labels;
};

Instance make_instance(uint64_t seed, bool with_remote) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  Instance inst;
  std::vector<int> dims{3, 4, 3};
  inst.params = gcn::init_params(dims, 3, rng);

  gcn::LayerPlan l0;
  l0.n_in = 5;
  l0.n_out = 4;
  l0.self_index = {0, 1, 3, 4};
  l0.nbr_offsets = {0, 2, 2, 5, 6};  // one empty neighborhood
  l0.nbr_index = {1, 2, 0, 2, 4, 3};

  gcn::LayerPlan l1;
  l1.n_in = 4;
  l1.n_remote_in = with_remote ? 2 : 0;
  l1.n_out = 3;
  l1.self_index = {0, 2, 3};
  if (with_remote) {
    l1.nbr_offsets = {0, 3, 4, 6};
    l1.nbr_index = {1, 4, 5, 2, 0, 5};  // rows 4,5 are the remote block
  } else {
    l1.nbr_offsets = {0, 2, 3, 4};
    l1.nbr_index = {1, 2, 0, 3};
  }

  inst.plan.layers = {l0, l1};
  inst.plan.remote_inputs.resize(2);
  if (with_remote) {
    inst.plan.remote_inputs[1] = kern::Matrix(2, 4);
    for (double& v : inst.plan.remote_inputs[1].a) v = n01(rng);
  }

  inst.h0 = kern::Matrix(5, 3);
  for (double& v : inst.h0.a) v = n01(rng);
  inst.labels = {0, 2, 1};
  return inst;
}

double loss_of(const Instance& inst, const std::vector<double>& flat) {
  auto p = gcn::unflatten(flat, inst.params.dims, inst.params.num_classes);
  gcn::ForwardTrace tr;
  gcn::forward(p, inst.plan, inst.h0, tr);
  return gcn::softmax_xent(tr.logits, inst.labels, nullptr);
}

}  // namespace

TEST_CASE("parameter bookkeeping") {
  std::vector<int> dims{3, 4, 2};
  // layer 1: 6*4+4, layer 2: 8*2+2, head: 2*5+5
  CHECK(gcn::param_count(dims, 5) == 28 + 18 + 15);

  std::mt19937_64 rng(1);
  auto p = gcn::init_params(dims, 5, rng);
  CHECK(p.num_layers() == 2);
  CHECK(gcn::param_size_bits(p) == 32 * gcn::param_count(dims, 5));

  auto flat = gcn::flatten(p);
  REQUIRE(static_cast<int>(flat.size()) == gcn::param_count(dims, 5));
  auto q = gcn::unflatten(flat, dims, 5);
  CHECK(gcn::param_l2_distance(p, q) == 0.0);

  auto z = gcn::zeros_like(p);
  CHECK(gcn::param_l2_distance(p, z) == doctest::Approx(gcn::l2_norm(flat)));

  // distance picks up a single-entry difference exactly
  auto flat2 = flat;
  flat2[7] += 3.0;
  auto r = gcn::unflatten(flat2, dims, 5);
  CHECK(gcn::param_l2_distance(p, r) == doctest::Approx(3.0));
}

TEST_CASE("uniform logits give ln(num_classes)") {
  auto inst = make_instance(3, false);
  auto p = gcn::zeros_like(inst.params);  // zero head -> zero logits
  gcn::ForwardTrace tr;
  gcn::forward(p, inst.plan, inst.h0, tr);
  for (double v : tr.logits.a) CHECK(v == 0.0);
  double loss = gcn::softmax_xent(tr.logits, inst.labels, nullptr);
  CHECK(loss == doctest::Approx(std::log(3.0)).epsilon(1e-12));
}

TEST_CASE("accuracy on hand logits") {
  kern::Matrix logits(3, 3);
  logits.at(0, 0) = 5;              // predicts 0, label 0: hit
  logits.at(1, 2) = 1;              // predicts 2, label 1: miss
  logits.at(2, 1) = 2;              // predicts 1, label 1: hit
  std::vector<int> labels{0, 1, 1};
  CHECK(gcn::accuracy(logits, labels) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("adam first step moves a unit-gradient parameter by -lr") {
  std::vector<double> params{0.0}, grads{1.0};
  gcn::AdamState st(1);
  gcn::AdamConfig cfg;  // lr = 0.01
  gcn::adam_step(params, grads, st, cfg);
  CHECK(params[0] == doctest::Approx(-0.01).epsilon(1e-7));
}

TEST_CASE("backward matches central finite differences") {
  for (auto [seed, with_remote] :
       std::vector<std::pair<uint64_t, bool>>{{11, true}, {12, true}, {13, false}}) {
    auto inst = make_instance(seed, with_remote);
    auto flat = gcn::flatten(inst.params);

    gcn::ForwardTrace tr;
    gcn::forward(inst.params, inst.plan, inst.h0, tr);
    kern::Matrix dlogits;
    gcn::softmax_xent(tr.logits, inst.labels, &dlogits);
    auto grads = gcn::flatten(gcn::backward(inst.params, inst.plan, tr, dlogits));

    const double eps = 1e-4;
    double max_rel = 0.0;
    for (size_t i = 0; i < flat.size(); ++i) {
      auto fp = flat, fm = flat;
      fp[i] += eps;
      fm[i] -= eps;
      double fd = (loss_of(inst, fp) - loss_of(inst, fm)) / (2 * eps);
      double denom = std::max({std::abs(fd), std::abs(grads[i]), 1e-6});
      max_rel = std::max(max_rel, std::abs(fd - grads[i]) / denom);
    }
    INFO("seed ", seed, " remote ", with_remote);
    CHECK(max_rel < 1e-4);
  }
}

TEST_CASE("backward is linear in the loss gradient") {
  auto inst = make_instance(21, true);
  gcn::ForwardTrace tr;
  gcn::forward(inst.params, inst.plan, inst.h0, tr);
  kern::Matrix dlogits;
  gcn::softmax_xent(tr.logits, inst.labels, &dlogits);
  auto g1 = gcn::flatten(gcn::backward(inst.params, inst.plan, tr, dlogits));
  for (double& v : dlogits.a) v *= 2.0;
  auto g2 = gcn::flatten(gcn::backward(inst.params, inst.plan, tr, dlogits));
  for (size_t i = 0; i < g1.size(); ++i)
    CHECK(g2[i] == doctest::Approx(2.0 * g1[i]).epsilon(1e-12));
}

TEST_CASE("raw remote feature rows are rejected unless explicitly allowed") {
  auto inst = make_instance(31, false);
  inst.plan.remote_inputs[0] = kern::Matrix(1, 3);
  inst.plan.layers[0].n_remote_in = 1;
  inst.plan.layers[0].nbr_index.push_back(5);  // reference the remote row
  inst.plan.layers[0].nbr_offsets.back() += 1;
  gcn::ForwardTrace tr;
  CHECK_THROWS_AS(gcn::forward(inst.params, inst.plan, inst.h0, tr),
                  std::invalid_argument);
  inst.plan.allow_raw_remote = true;
  CHECK_NOTHROW(gcn::forward(inst.params, inst.plan, inst.h0, tr));
}

TEST_CASE("weight decay touches every parameter") {
  std::mt19937_64 rng(41);
  auto p = gcn::init_params({3, 4, 3}, 3, rng);
  auto g = gcn::zeros_like(p);
  gcn::add_weight_decay(g, p, 0.5);
  auto gf = gcn::flatten(g), pf = gcn::flatten(p);
  for (size_t i = 0; i < gf.size(); ++i) CHECK(gf[i] == doctest::Approx(0.5 * pf[i]));
}
