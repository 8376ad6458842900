#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <vector>

#include "tensorhub/digest.hpp"
#include "tensorhub/sketch.hpp"

namespace tensorhub {

struct ScoredCandidate {
    Digest128 digest;
    double est_hamming = 0;  // exact sketch estimate, used for final ranking
};

// Nearest-neighbor index over flattened sketch vectors for one CompatKey
// partition. Below `graph_threshold` entries it linear-scans (exact top-k
// under the estimator); above it, a navigable small-world graph over
// squared Euclidean distance pre-filters candidates and the exact
// estimator re-scores them. For even depth the squared L2 over the
// concatenated rows is a fixed multiple of the row-median estimate, so the
// graph ordering is rank-equivalent to the estimator.
class SketchIndex {
  public:
    enum class Mode { AUTO, LINEAR, GRAPH };

    explicit SketchIndex(SketchParams params, Mode mode = Mode::AUTO,
                         std::size_t graph_threshold = 5000);
    ~SketchIndex();
    SketchIndex(SketchIndex&&) noexcept;
    SketchIndex& operator=(SketchIndex&&) noexcept;

    void add(const Digest128& digest, const Sketch& sketch);
    void add_flat(const Digest128& digest, std::vector<float> flat);
    void remove(const Digest128& digest);  // lazy: masked out of results

    // Up to k candidates ranked ascending by exact estimated Hamming.
    std::vector<ScoredCandidate> query(const Sketch& sketch, std::size_t k) const;
    std::vector<ScoredCandidate> query_flat(std::span<const float> flat,
                                            std::size_t k) const;

    // Exact linear-scan top-k, regardless of mode (the recall oracle).
    std::vector<ScoredCandidate> query_linear(std::span<const float> flat,
                                              std::size_t k) const;

    std::size_t size() const;
    const SketchParams& params() const { return params_; }

  private:
    struct Graph;

    bool use_graph() const;
    void build_graph_if_needed();

    SketchParams params_;
    Mode mode_;
    std::size_t graph_threshold_;
    std::vector<Digest128> digests_;
    std::vector<std::vector<float>> vectors_;
    std::vector<bool> removed_;
    std::unique_ptr<Graph> graph_;
};

}  // namespace tensorhub
