#pragma once

#include <string>
#include <vector>

#include "locnav/actions.hpp"
#include "locnav/autodiff.hpp"
#include "locnav/observation.hpp"

namespace locnav {

// Observations packed into batch tensors. Ranges and goal coordinates are
// scaled by the laser range so every input lives within a few units;
// angles and variances pass through unscaled.
struct ObsBatch {
  int size = 0;
  Tensor goal;   // N x (3 or 6)
  Tensor scans;  // N x frames x beams
  Tensor ped;    // N x 3 x 48 x 48, empty when the variant has no map
};

inline int variant_goal_dims(Variant v) { return variant_has_goal_variance(v) ? 6 : 3; }

inline ObsBatch batch_observations(Variant variant,
                                   const std::vector<const ObservationBundle*>& obs,
                                   double max_range = 12.0) {
  if (obs.empty()) throw ContractError("batch_observations: empty batch");
  int n = static_cast<int>(obs.size());
  int frames = variant_scan_frames(variant);
  int gd = variant_goal_dims(variant);

  ObsBatch batch;
  batch.size = n;
  batch.goal = Tensor({n, gd});
  int beams = static_cast<int>(obs[0]->scans.at(0).size());
  batch.scans = Tensor({n, frames, beams});
  if (variant_has_ped_map(variant))
    batch.ped = Tensor({n, 3, PedestrianMap::kCells, PedestrianMap::kCells});

  Real inv_range = static_cast<Real>(1.0 / max_range);
  for (int i = 0; i < n; ++i) {
    const ObservationBundle& o = *obs[i];
    if (o.variant != variant)
      throw ContractError("batch_observations: bundle variant mismatch");
    if (static_cast<int>(o.scans.size()) != frames)
      throw ContractError("batch_observations: bundle has wrong scan frame count");

    Real* g = &batch.goal.data[static_cast<size_t>(i) * gd];
    g[0] = static_cast<Real>(o.goal.x) * inv_range;
    g[1] = static_cast<Real>(o.goal.y) * inv_range;
    g[2] = static_cast<Real>(o.goal.alpha);
    if (gd == 6) {
      g[3] = static_cast<Real>(o.goal.var_x);
      g[4] = static_cast<Real>(o.goal.var_y);
      g[5] = static_cast<Real>(o.goal.var_alpha);
    }

    for (int fidx = 0; fidx < frames; ++fidx) {
      const ScanObservation& s = o.scans[static_cast<size_t>(fidx)];
      if (static_cast<int>(s.size()) != beams)
        throw ContractError("batch_observations: inconsistent beam counts");
      Real* dst = &batch.scans.data[(static_cast<size_t>(i) * frames + fidx) * beams];
      for (int bidx = 0; bidx < beams; ++bidx)
        dst[bidx] = static_cast<Real>(s.ranges[static_cast<size_t>(bidx)]) * inv_range;
    }

    if (!batch.ped.empty()) {
      if (!o.ped_map) throw ContractError("batch_observations: bundle missing pedestrian map");
      Real* dst = &batch.ped.data[static_cast<size_t>(i) * o.ped_map->data.size()];
      for (size_t jdx = 0; jdx < o.ped_map->data.size(); ++jdx)
        dst[jdx] = static_cast<Real>(o.ped_map->data[jdx]);
    }
  }
  return batch;
}

inline ObsBatch batch_observations(Variant variant, const std::vector<ObservationBundle>& obs,
                                   double max_range = 12.0) {
  std::vector<const ObservationBundle*> ptrs;
  ptrs.reserve(obs.size());
  for (const ObservationBundle& o : obs) ptrs.push_back(&o);
  return batch_observations(variant, ptrs, max_range);
}

// Policy and value networks for one input variant. Both share the same
// three-branch layout (pedestrian-map encoder, scan encoder, goal encoder,
// fused trunk) but own separate parameters; only the head width differs
// (28 action logits vs one linear value unit). ReLU follows every layer
// except the heads.
class PolicyValueNet {
 public:
  static constexpr int kScanLen1 = 239;  // (720 - 5) / 3 + 1
  static constexpr int kScanLen2 = 119;  // (239 - 3) / 2 + 1
  static constexpr int kPedPooled = 4;

  PolicyValueNet(Variant variant, ParamStore& store, Rng& rng)
      : variant_(variant), store_(&store) {
    int frames = variant_scan_frames(variant);
    int gd = variant_goal_dims(variant);
    for (const char* head : {"policy", "value"}) {
      std::string p(head);
      weight(p + ".scan.conv1.k", {32, frames, 5}, frames * 5, rng);
      bias(p + ".scan.conv1.b", {32});
      weight(p + ".scan.conv2.k", {32, 32, 3}, 32 * 3, rng);
      bias(p + ".scan.conv2.b", {32});
      weight(p + ".scan.fc.w", {512, 32 * kScanLen2}, 32 * kScanLen2, rng);
      bias(p + ".scan.fc.b", {512});
      weight(p + ".goal.fc.w", {64, gd}, gd, rng);
      bias(p + ".goal.fc.b", {64});
      int fused = 512 + 64;
      if (variant_has_ped_map(variant)) {
        weight(p + ".ped.conv1.k", {64, 3, 3, 3}, 3 * 9, rng);
        bias(p + ".ped.conv1.b", {64});
        weight(p + ".ped.conv2.k", {128, 64, 3, 3}, 64 * 9, rng);
        bias(p + ".ped.conv2.b", {128});
        weight(p + ".ped.conv3.k", {256, 128, 3, 3}, 128 * 9, rng);
        bias(p + ".ped.conv3.b", {256});
        int pooled = 256 * kPedPooled * kPedPooled;
        weight(p + ".ped.fc.w", {512, pooled}, pooled, rng);
        bias(p + ".ped.fc.b", {512});
        fused += 512;
      }
      weight(p + ".trunk.fc.w", {512, fused}, fused, rng);
      bias(p + ".trunk.fc.b", {512});
      int head_out = p == "policy" ? kNumActions : 1;
      weight(p + ".head.w", {head_out, 512}, 512, rng);
      bias(p + ".head.b", {head_out});
    }
  }

  Variant variant() const { return variant_; }
  ParamStore& store() { return *store_; }

  // N x 28 log-probabilities.
  int policy_logprobs(Graph& g, const ObsBatch& batch) const {
    int feat = trunk(g, batch, "policy");
    int logits = g.linear(feat, store_->require("policy.head.w"),
                          store_->require("policy.head.b"));
    return g.log_softmax(logits);
  }

  // N x 1 state values.
  int value(Graph& g, const ObsBatch& batch) const {
    int feat = trunk(g, batch, "value");
    return g.linear(feat, store_->require("value.head.w"), store_->require("value.head.b"));
  }

  // First scan-encoder convolution only, for the activation renderer.
  int scan_conv1(Graph& g, const ObsBatch& batch, const std::string& head = "policy") const {
    int scan = g.input(batch.scans);
    return g.conv1d(scan, store_->require(head + ".scan.conv1.k"),
                    store_->require(head + ".scan.conv1.b"), 3);
  }

 private:
  Param& weight(const std::string& name, std::vector<int> shape, int fan_in, Rng& rng) {
    if (Param* p = store_->find(name)) {
      if (p->value.shape != shape)
        throw ContractError("param '" + name + "' has shape " + p->value.shape_str() +
                            ", expected " + Tensor(shape).shape_str());
      return *p;
    }
    Param& p = store_->create(name, std::move(shape));
    init_he_uniform(p, fan_in, rng);
    return p;
  }

  Param& bias(const std::string& name, std::vector<int> shape) {
    if (Param* p = store_->find(name)) {
      if (p->value.shape != shape)
        throw ContractError("param '" + name + "' has shape " + p->value.shape_str() +
                            ", expected " + Tensor(shape).shape_str());
      return *p;
    }
    return store_->create(name, std::move(shape));  // zeros
  }

  int trunk(Graph& g, const ObsBatch& batch, const std::string& p) const {
    ParamStore& s = *store_;
    std::vector<int> branches;

    if (variant_has_ped_map(variant_)) {
      if (batch.ped.empty()) throw ContractError("network: batch lacks the pedestrian map");
      int x = g.input(batch.ped);
      x = g.relu(g.conv2d(x, s.require(p + ".ped.conv1.k"), s.require(p + ".ped.conv1.b"), 1));
      x = g.relu(g.conv2d(x, s.require(p + ".ped.conv2.k"), s.require(p + ".ped.conv2.b"), 1));
      x = g.relu(g.conv2d(x, s.require(p + ".ped.conv3.k"), s.require(p + ".ped.conv3.b"), 1));
      x = g.avg_pool2d(x, kPedPooled, kPedPooled);
      x = g.flatten2(x);
      x = g.relu(g.linear(x, s.require(p + ".ped.fc.w"), s.require(p + ".ped.fc.b")));
      branches.push_back(x);
    }

    int scan = g.input(batch.scans);
    scan = g.relu(g.conv1d(scan, s.require(p + ".scan.conv1.k"), s.require(p + ".scan.conv1.b"), 3));
    scan = g.relu(g.conv1d(scan, s.require(p + ".scan.conv2.k"), s.require(p + ".scan.conv2.b"), 2));
    scan = g.flatten2(scan);
    scan = g.relu(g.linear(scan, s.require(p + ".scan.fc.w"), s.require(p + ".scan.fc.b")));
    branches.push_back(scan);

    int goal = g.input(batch.goal);
    goal = g.relu(g.linear(goal, s.require(p + ".goal.fc.w"), s.require(p + ".goal.fc.b")));
    branches.push_back(goal);

    int fused = g.concat(branches);
    return g.relu(g.linear(fused, s.require(p + ".trunk.fc.w"), s.require(p + ".trunk.fc.b")));
  }

  Variant variant_;
  ParamStore* store_;
};

}  // namespace locnav
