#include "dfgl/fedworker.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

#include "dfgl/common.hpp"

namespace dfgl::worker {

std::vector<int> sample_without_replacement(std::vector<int> pool, int k,
                                            std::mt19937_64& rng) {
  int n = static_cast<int>(pool.size());
  if (k >= n) return pool;
  for (int i = 0; i < k; ++i) {
    std::uniform_int_distribution<int> pick(i, n - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(k);
  std::sort(pool.begin(), pool.end());
  return pool;
}

SamplingPlan graph_sampling(const std::vector<int>& batch, double r, int L,
                            const std::vector<int>& topo_neighbors,
                            const graph::Subgraph& sub, std::mt19937_64& rng,
                            bool privacy_off) {
  if (!(r > 0.0) || r > 1.0) throw std::invalid_argument("graph_sampling: r must be in (0,1]");
  if (L < 1) throw std::invalid_argument("graph_sampling: L must be >= 1");

  std::vector<int> topo = topo_neighbors;
  std::sort(topo.begin(), topo.end());
  auto allowed_owner = [&](int w) {
    return w == sub.worker_id || std::binary_search(topo.begin(), topo.end(), w);
  };

  SamplingPlan plan;
  plan.L = L;
  plan.carried.assign(L + 1, {});
  plan.level_local.assign(L + 1, {});
  plan.level_remote.assign(L + 1, {});
  plan.sampled.assign(L + 1, {});

  plan.carried[L] = batch;
  std::sort(plan.carried[L].begin(), plan.carried[L].end());

  for (int l = L; l >= 1; --l) {
    std::vector<int> locals, remotes_consumed;
    for (int v : plan.carried[l])
      if (sub.is_local(v)) locals.push_back(v);
    plan.level_local[l] = locals;
    plan.sampled[l].resize(locals.size());

    std::vector<int> next = plan.carried[l];
    for (size_t k = 0; k < locals.size(); ++k) {
      int v = locals[k];
      const auto& nbrs = sub.neighbors[sub.local_index.at(v)];
      std::vector<int> n_eff;
      for (int u : nbrs) {
        if (sub.is_local(u)) {
          n_eff.push_back(u);
          continue;
        }
        if (l == 1 && !privacy_off) continue;  // raw features never cross
        if (allowed_owner(sub.owner_of(u))) n_eff.push_back(u);
      }
      if (n_eff.empty()) continue;
      int want = std::max(1, static_cast<int>(std::lround(r * n_eff.size())));
      plan.ratio_sum += static_cast<double>(std::min<size_t>(want, n_eff.size())) /
                        static_cast<double>(n_eff.size());
      plan.ratio_count += 1;
      auto s = sample_without_replacement(std::move(n_eff), want, rng);
      plan.sampled_rows += static_cast<int64_t>(s.size());
      for (int u : s) {
        next.push_back(u);
        if (!sub.is_local(u)) remotes_consumed.push_back(u);
      }
      plan.sampled[l][k] = std::move(s);
    }
    std::sort(next.begin(), next.end());
    next.erase(std::unique(next.begin(), next.end()), next.end());
    plan.carried[l - 1] = std::move(next);

    std::sort(remotes_consumed.begin(), remotes_consumed.end());
    remotes_consumed.erase(std::unique(remotes_consumed.begin(), remotes_consumed.end()),
                           remotes_consumed.end());
    plan.level_remote[l - 1] = std::move(remotes_consumed);
  }

  for (int v : plan.carried[0])
    if (sub.is_local(v)) plan.level_local[0].push_back(v);
  return plan;
}

std::map<std::pair<int, int>, std::vector<int>> collect_requests(
    const SamplingPlan& plan, const graph::Subgraph& sub) {
  std::map<std::pair<int, int>, std::vector<int>> req;
  for (int l = 0; l <= plan.L; ++l)
    for (int u : plan.level_remote[l]) req[{sub.owner_of(u), l}].push_back(u);
  return req;
}

ServeTable build_serve_table(const graph::Subgraph& sub, const gcn::ModelParams& p) {
  ServeTable table;
  int n = static_cast<int>(sub.local_nodes.size());
  table.levels.push_back(sub.features);

  // full local-only neighborhoods, identical wiring at every level
  std::vector<int> offsets(n + 1, 0), index;
  for (int r = 0; r < n; ++r) {
    for (int u : sub.neighbors[r])
      if (sub.is_local(u)) index.push_back(sub.local_index.at(u));
    offsets[r + 1] = static_cast<int>(index.size());
  }

  int L = p.num_layers();
  for (int l = 0; l < L - 1; ++l) {
    const kern::Matrix& in = table.levels.back();
    int d = p.dims[l];
    kern::Matrix agg(n, d);
    kern::segment_mean(in, offsets, index, agg);
    kern::Matrix X(n, 2 * d);
    for (int r = 0; r < n; ++r) {
      std::copy(in.row(r), in.row(r) + d, X.row(r));
      std::copy(agg.row(r), agg.row(r) + d, X.row(r) + d);
    }
    kern::Matrix Z(n, p.dims[l + 1]);
    kern::matmul(X, p.W[l], Z);
    kern::add_row_vector(Z, p.b[l]);
    kern::relu_inplace(Z);
    table.levels.push_back(std::move(Z));
  }
  return table;
}

kern::Matrix serve_nodes(const graph::Subgraph& server_sub, const ServeTable& table,
                         int level, const std::vector<int>& nodes, int64_t* bits_out) {
  if (level < 0 || level >= static_cast<int>(table.levels.size()))
    throw ProtocolError("serve_nodes: level out of range");
  const kern::Matrix& src = table.levels[level];
  kern::Matrix out(static_cast<int>(nodes.size()), src.cols);
  for (size_t k = 0; k < nodes.size(); ++k) {
    auto it = server_sub.local_index.find(nodes[k]);
    if (it == server_sub.local_index.end())
      throw ProtocolError("serve_nodes: node " + std::to_string(nodes[k]) +
                          " not owned by worker " + std::to_string(server_sub.worker_id));
    std::copy(src.row(it->second), src.row(it->second) + src.cols, out.row(k));
  }
  if (bits_out) *bits_out = static_cast<int64_t>(nodes.size()) * src.cols * 32;
  return out;
}

gcn::ForwardPlan build_forward_plan(const SamplingPlan& plan, const graph::Subgraph& sub,
                                    const std::vector<int>& dims, const FetchFn& fetch,
                                    TransferMap* received, bool privacy_off) {
  int L = plan.L;
  if (static_cast<int>(dims.size()) != L + 1)
    throw std::invalid_argument("build_forward_plan: dims/L mismatch");

  gcn::ForwardPlan fp;
  fp.allow_raw_remote = privacy_off;
  fp.layers.resize(L);
  fp.remote_inputs.resize(L);

  // per level: global id -> input row (locals first, then consumed remotes)
  std::vector<std::unordered_map<int, int>> rowmap(L + 1);
  for (int l = 0; l <= L; ++l) {
    int r = 0;
    for (int v : plan.level_local[l]) rowmap[l][v] = r++;
    for (int v : plan.level_remote[l]) rowmap[l][v] = r++;
  }

  for (int l = 0; l < L; ++l) {
    // fetch this level's remote rows, batched per owner, scattered by id order
    const auto& remotes = plan.level_remote[l];
    if (!remotes.empty()) {
      kern::Matrix block(static_cast<int>(remotes.size()), dims[l]);
      std::map<int, std::vector<int>> by_owner;
      for (int u : remotes) by_owner[sub.owner_of(u)].push_back(u);
      for (const auto& [owner, nodes] : by_owner) {
        kern::Matrix rows = fetch(owner, l, nodes);
        if (rows.rows != static_cast<int>(nodes.size()) || rows.cols != dims[l])
          throw ProtocolError("build_forward_plan: fetch shape mismatch");
        for (size_t k = 0; k < nodes.size(); ++k) {
          int dst = rowmap[l].at(nodes[k]) - static_cast<int>(plan.level_local[l].size());
          std::copy(rows.row(static_cast<int>(k)), rows.row(static_cast<int>(k)) + dims[l],
                    block.row(dst));
        }
        if (received) {
          auto& st = (*received)[{owner, l}];
          st.count += static_cast<int64_t>(nodes.size());
          st.bits += static_cast<int64_t>(nodes.size()) * dims[l] * 32;
        }
      }
      fp.remote_inputs[l] = std::move(block);
    }

    gcn::LayerPlan& lp = fp.layers[l];
    lp.n_in = static_cast<int>(plan.level_local[l].size());
    lp.n_remote_in = static_cast<int>(plan.level_remote[l].size());
    lp.n_out = static_cast<int>(plan.level_local[l + 1].size());
    lp.self_index.resize(lp.n_out);
    lp.nbr_offsets.assign(lp.n_out + 1, 0);
    for (int k = 0; k < lp.n_out; ++k) {
      int v = plan.level_local[l + 1][k];
      lp.self_index[k] = rowmap[l].at(v);
      for (int u : plan.sampled[l + 1][k]) lp.nbr_index.push_back(rowmap[l].at(u));
      lp.nbr_offsets[k + 1] = static_cast<int>(lp.nbr_index.size());
    }
  }
  return fp;
}

kern::Matrix gather_h0(const SamplingPlan& plan, const graph::Subgraph& sub) {
  const auto& ids = plan.level_local[0];
  kern::Matrix h0(static_cast<int>(ids.size()), sub.features.cols);
  for (size_t k = 0; k < ids.size(); ++k) {
    int r = sub.local_index.at(ids[k]);
    std::copy(sub.features.row(r), sub.features.row(r) + sub.features.cols,
              h0.row(static_cast<int>(k)));
  }
  return h0;
}

std::vector<int> batch_labels(const SamplingPlan& plan, const graph::Subgraph& sub) {
  std::vector<int> labels;
  for (int v : plan.level_local[plan.L]) labels.push_back(sub.labels[sub.local_index.at(v)]);
  return labels;
}

RoundReport run_local_training(Worker& w, const TrainSettings& s, const FetchFn& fetch) {
  RoundReport rep;
  if (s.tau <= 0 || w.sub.train_nodes.empty()) return rep;

  int L = w.params.num_layers();
  double grad_norm_sum = 0.0;
  for (int it = 0; it < s.tau; ++it) {
    auto batch = sample_without_replacement(
        w.sub.train_nodes, std::min<int>(s.batch_size, w.sub.train_nodes.size()), w.rng);
    auto plan = graph_sampling(batch, w.ratio, L, w.topo_neighbors, w.sub, w.rng,
                               s.privacy_off);
    auto fplan =
        build_forward_plan(plan, w.sub, w.params.dims, fetch, &rep.received, s.privacy_off);
    kern::Matrix h0 = gather_h0(plan, w.sub);
    auto labels = batch_labels(plan, w.sub);

    gcn::ForwardTrace trace;
    gcn::forward(w.params, fplan, h0, trace);
    kern::Matrix dlogits;
    double loss = gcn::softmax_xent(trace.logits, labels, &dlogits);
    auto grads = gcn::backward(w.params, fplan, trace, dlogits);
    gcn::add_weight_decay(grads, w.params, s.weight_decay);

    auto flat = gcn::flatten(w.params);
    auto gflat = gcn::flatten(grads);
    grad_norm_sum += gcn::l2_norm(gflat);
    gcn::adam_step(flat, gflat, w.opt, s.adam);
    w.params = gcn::unflatten(flat, w.params.dims, w.params.num_classes);

    rep.iter_losses.push_back(loss);
    rep.aggregated_rows += static_cast<double>(plan.sampled_rows);
  }
  rep.final_loss = rep.iter_losses.back();
  rep.mean_grad_norm = grad_norm_sum / s.tau;
  rep.trained = true;
  w.last_loss = rep.final_loss;
  w.last_grad_norm = rep.mean_grad_norm;
  return rep;
}

EvalResult evaluate_worker(const Worker& w, const FetchFn& fetch) {
  EvalResult res;
  if (w.sub.test_nodes.empty()) return res;
  std::mt19937_64 scratch(0);  // r=1 consumes no draws
  int L = w.params.num_layers();
  auto plan = graph_sampling(w.sub.test_nodes, 1.0, L, w.topo_neighbors, w.sub, scratch);
  auto fplan = build_forward_plan(plan, w.sub, w.params.dims, fetch, nullptr);
  kern::Matrix h0 = gather_h0(plan, w.sub);
  auto labels = batch_labels(plan, w.sub);
  gcn::ForwardTrace trace;
  gcn::forward(w.params, fplan, h0, trace);
  res.accuracy = gcn::accuracy(trace.logits, labels);
  res.count = static_cast<int>(labels.size());
  res.defined = true;
  return res;
}

bool privacy_audit(const std::vector<TransferRecord>& log) {
  for (const auto& rec : log)
    if (rec.level == 0 && rec.count > 0) return false;
  return true;
}

}  // namespace dfgl::worker
