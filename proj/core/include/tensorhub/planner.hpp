#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "tensorhub/digest.hpp"
#include "tensorhub/dtype.hpp"

namespace tensorhub {

// Two tensors are delta-comparable iff their keys are equal (equal n and p
// follow). Cross-key deltas (transposed or reshaped matches) are out of
// scope.
struct CompatKey {
    DType dtype = DType::F32;
    std::vector<std::int64_t> shape;

    bool operator==(const CompatKey&) const = default;
    bool operator<(const CompatKey& o) const {
        if (dtype != o.dtype) return dtype < o.dtype;
        return shape < o.shape;
    }
    std::string to_string() const;
};

struct CompatKeyHash {
    std::size_t operator()(const CompatKey& k) const;
};

struct PlannerParams {
    double theta_min = 0.05;          // min predicted ratio to store as delta
    double candidate_margin = 0.1;    // delta: split candidates sit this far below mean
    std::size_t min_split_size = 8;   // S_min
    double split_ratio_trigger = 0.6; // R_trigger
    std::size_t candidate_k = 8;      // bases fetched per assignment
};

// Base/delta group within one CompatKey. Base chain depth is exactly 1:
// bases reference nothing, deltas reference a base only.
struct Cluster {
    struct Assignment {
        Digest128 base;
        double ratio = 0;  // predicted R(t, base), in [0,1]
    };

    std::uint64_t id = 0;
    CompatKey key;
    std::set<Digest128> bases;
    std::map<Digest128, Assignment> deltas;  // non-base members
    std::unordered_map<Digest128, std::uint64_t, Digest128Hash> sizes;  // all members

    std::size_t member_count() const { return bases.size() + deltas.size(); }
    std::uint64_t total_raw_bytes() const;
};

// Size-weighted delta savings of non-base members over total raw size;
// bases are stored in full and contribute zero. Throws on empty clusters.
double cluster_reduction_ratio(const Cluster& c);

// Predicted stored bytes under the current assignment: bases in full,
// deltas at (1 - R) * s.
double cluster_predicted_cost(const Cluster& c);

struct PlanAction {
    enum class Kind { StoreBase, StoreDelta, PromoteToBase, Reassign };
    Kind kind = Kind::StoreBase;
    Digest128 tensor;
    Digest128 base;           // StoreDelta / Reassign only
    double predicted_ratio = 0;
    std::uint64_t cluster_id = 0;

    std::string to_json() const;
};

// Ordered action list; applying in order keeps every referenced base
// materialized before any delta that uses it.
struct PlanDelta {
    std::vector<PlanAction> actions;
    bool empty() const { return actions.empty(); }
    std::string to_json_lines() const;
};

// Candidate base produced by the sketch index for one query.
struct BaseCandidate {
    Digest128 digest;
    double est_hamming = 0;
    double predicted_ratio = 0;
};

// The planner's window onto sketches and the predictor. Implemented by the
// store over the sketch index; by explicit matrices in tests.
class RatioOracle {
  public:
    virtual ~RatioOracle() = default;

    // Up to k candidate bases in the partition for `tensor`, each with its
    // exact estimated Hamming and predicted ratio against the query.
    virtual std::vector<BaseCandidate> candidates(const CompatKey& key,
                                                  const Digest128& tensor,
                                                  std::size_t k) = 0;

    // Predicted R(target, base) for arbitrary known pairs (used by splits).
    virtual double predicted_ratio(const Digest128& target, const Digest128& base) = 0;
};

struct TensorInfo {
    Digest128 digest;
    CompatKey key;
    std::uint64_t bytes = 0;
};

// FlexSplit state: Phase I greedy incremental assignment on arrival,
// Phase II gain-gated multi-center splitting on refine. Single-writer:
// one actor mutates, readers snapshot.
class Planner {
  public:
    explicit Planner(PlannerParams params = {});
    Planner(PlannerParams params, std::vector<Cluster> restored);

    // Phase I. Exact-duplicate digests yield an empty plan. Otherwise the
    // best candidate base with R >= theta_min receives the tensor as a
    // delta; ties break on smaller estimated Hamming, then lexicographically
    // smaller base digest. With no qualifying candidate the tensor seeds a
    // new cluster as its base.
    PlanDelta assign(const TensorInfo& tensor, RatioOracle& oracle);

    // Phase II on one cluster: repeatedly promote the candidate with the
    // largest positive gain in cluster reduction ratio, reassigning members
    // that improve. All evaluations use predicted ratios only.
    PlanDelta split(std::uint64_t cluster_id, RatioOracle& oracle);

    // Split trigger: size >= S_min and ratio < R_trigger.
    bool should_split(const Cluster& c) const;

    // Phase II over all trigger-eligible clusters.
    PlanDelta refine(RatioOracle& oracle);

    bool contains(const Digest128& digest) const;
    bool is_base(const Digest128& digest) const;
    const Cluster* cluster_of(const Digest128& digest) const;
    const std::map<std::uint64_t, Cluster>& clusters() const { return clusters_; }
    const PlannerParams& params() const { return params_; }

    // Total predicted stored bytes across all clusters.
    double predicted_cost() const;

  private:
    PlanDelta split_impl(Cluster& c, RatioOracle& oracle);

    PlannerParams params_;
    std::map<std::uint64_t, Cluster> clusters_;
    std::unordered_map<Digest128, std::uint64_t, Digest128Hash> cluster_by_digest_;
    std::uint64_t next_cluster_id_ = 1;
};

// Exhaustive facility-location oracle for validation: enumerates all
// nonempty base subsets of at most 20 tensors in one CompatKey.
// cost(B) = sum_{b in B} s_b + sum_{t not in B} min_{b in B} (1-R(t,b))*s_t.
struct ExactPlanResult {
    std::uint32_t base_mask = 0;
    double cost = 0;
};

ExactPlanResult exact_plan(std::span<const std::uint64_t> sizes,
                           const std::vector<std::vector<double>>& ratios);

}  // namespace tensorhub
