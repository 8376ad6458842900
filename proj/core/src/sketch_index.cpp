#include "tensorhub/sketch_index.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <unordered_map>
#include <unordered_set>

#include "tensorhub/errors.hpp"

namespace tensorhub {

namespace {

double l2sq(std::span<const float> a, std::span<const float> b) {
    double acc = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - b[i];
        acc += d * d;
    }
    return acc;
}

constexpr std::size_t kM = 16;            // links per node, levels > 0
constexpr std::size_t kM0 = 32;           // links at level 0
constexpr std::size_t kEfConstruction = 200;
constexpr std::size_t kEfSearch = 1024;

}  // namespace

// Navigable small-world graph (HNSW-style) over the stored vectors.
struct SketchIndex::Graph {
    struct Node {
        std::vector<std::vector<std::uint32_t>> links;  // per level
    };

    std::vector<Node> nodes;
    std::uint32_t entry = 0;
    int top_level = -1;
    std::mt19937_64 rng;
    double level_mult = 1.0 / std::log(static_cast<double>(kM));

    const std::vector<std::vector<float>>* vectors = nullptr;

    double dist(std::uint32_t a, std::span<const float> q) const {
        return l2sq((*vectors)[a], q);
    }

    // Beam search at one level; returns up to ef closest (id, dist) pairs.
    std::vector<std::pair<double, std::uint32_t>> search_level(
        std::span<const float> q, std::uint32_t start, int level, std::size_t ef) const {
        std::priority_queue<std::pair<double, std::uint32_t>> found;  // max-heap by dist
        std::priority_queue<std::pair<double, std::uint32_t>,
                            std::vector<std::pair<double, std::uint32_t>>,
                            std::greater<>> frontier;  // min-heap
        std::unordered_set<std::uint32_t> visited;

        const double d0 = dist(start, q);
        found.emplace(d0, start);
        frontier.emplace(d0, start);
        visited.insert(start);

        while (!frontier.empty()) {
            auto [d, u] = frontier.top();
            frontier.pop();
            if (d > found.top().first && found.size() >= ef) break;
            for (std::uint32_t v : nodes[u].links[level]) {
                if (!visited.insert(v).second) continue;
                const double dv = dist(v, q);
                if (found.size() < ef || dv < found.top().first) {
                    found.emplace(dv, v);
                    frontier.emplace(dv, v);
                    if (found.size() > ef) found.pop();
                }
            }
        }
        std::vector<std::pair<double, std::uint32_t>> out;
        out.reserve(found.size());
        while (!found.empty()) {
            out.push_back(found.top());
            found.pop();
        }
        std::reverse(out.begin(), out.end());  // ascending distance
        return out;
    }

    // Diversity-pruned neighbor choice: take a candidate only if it is
    // closer to the query than to anything already chosen, then backfill
    // the skipped closest ones. Plain "cap closest" clumps dense regions
    // together and starves the long-range links recall depends on.
    std::vector<std::uint32_t> select_neighbors(
        std::span<const float> q,
        const std::vector<std::pair<double, std::uint32_t>>& cand_ascending,
        std::size_t cap) const {
        std::vector<std::uint32_t> chosen;
        std::vector<std::uint32_t> skipped;
        for (const auto& [d, v] : cand_ascending) {
            if (chosen.size() >= cap) break;
            bool diverse = true;
            for (std::uint32_t u : chosen)
                if (l2sq((*vectors)[v], (*vectors)[u]) < d) {
                    diverse = false;
                    break;
                }
            if (diverse)
                chosen.push_back(v);
            else
                skipped.push_back(v);
        }
        for (std::uint32_t v : skipped) {
            if (chosen.size() >= cap) break;
            chosen.push_back(v);
        }
        return chosen;
    }

    void insert(std::uint32_t id) {
        const int level = static_cast<int>(-std::log(
                              std::uniform_real_distribution<double>(
                                  std::nextafter(0.0, 1.0), 1.0)(rng)) *
                          level_mult);
        if (nodes.size() <= id) nodes.resize(id + 1);
        nodes[id].links.assign(level + 1, {});

        if (top_level < 0) {
            entry = id;
            top_level = level;
            return;
        }

        std::span<const float> q = (*vectors)[id];
        std::uint32_t cur = entry;
        for (int l = top_level; l > level; --l) {
            // Greedy descent on upper levels.
            for (;;) {
                bool moved = false;
                double best = dist(cur, q);
                for (std::uint32_t v : nodes[cur].links[l]) {
                    const double dv = dist(v, q);
                    if (dv < best) {
                        best = dv;
                        cur = v;
                        moved = true;
                    }
                }
                if (!moved) break;
            }
        }

        for (int l = std::min(level, top_level); l >= 0; --l) {
            auto near = search_level(q, cur, l, kEfConstruction);
            const std::size_t cap = (l == 0) ? kM0 : kM;
            nodes[id].links[l] = select_neighbors(q, near, cap);
            for (std::uint32_t v : nodes[id].links[l]) {
                auto& back = nodes[v].links[l];
                back.push_back(id);
                if (back.size() > cap) {
                    std::span<const float> vq = (*vectors)[v];
                    std::vector<std::pair<double, std::uint32_t>> cand;
                    cand.reserve(back.size());
                    for (std::uint32_t x : back) cand.emplace_back(l2sq((*vectors)[x], vq), x);
                    std::sort(cand.begin(), cand.end());
                    back = select_neighbors(vq, cand, cap);
                }
            }
            if (!near.empty()) cur = near.front().second;
        }
        if (level > top_level) {
            top_level = level;
            entry = id;
        }
    }

    std::vector<std::pair<double, std::uint32_t>> search(std::span<const float> q,
                                                         std::size_t ef) const {
        if (top_level < 0) return {};
        std::uint32_t cur = entry;
        for (int l = top_level; l > 0; --l) {
            for (;;) {
                bool moved = false;
                double best = dist(cur, q);
                for (std::uint32_t v : nodes[cur].links[l]) {
                    const double dv = dist(v, q);
                    if (dv < best) {
                        best = dv;
                        cur = v;
                        moved = true;
                    }
                }
                if (!moved) break;
            }
        }
        return search_level(q, cur, 0, ef);
    }
};

SketchIndex::SketchIndex(SketchParams params, Mode mode, std::size_t graph_threshold)
    : params_(params), mode_(mode), graph_threshold_(graph_threshold) {
    params_.validate();
}

SketchIndex::~SketchIndex() = default;
SketchIndex::SketchIndex(SketchIndex&&) noexcept = default;
SketchIndex& SketchIndex::operator=(SketchIndex&&) noexcept = default;

std::size_t SketchIndex::size() const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < digests_.size(); ++i)
        if (!removed_[i]) ++n;
    return n;
}

bool SketchIndex::use_graph() const {
    if (mode_ == Mode::LINEAR) return false;
    if (mode_ == Mode::GRAPH) return true;
    return digests_.size() >= graph_threshold_;
}

void SketchIndex::build_graph_if_needed() {
    if (!use_graph()) return;
    if (!graph_) {
        graph_ = std::make_unique<Graph>();
        graph_->rng.seed(params_.seed ^ 0x736b696478ULL);
        graph_->vectors = &vectors_;
        for (std::uint32_t i = 0; i + 1 < vectors_.size(); ++i) graph_->insert(i);
    }
    graph_->insert(static_cast<std::uint32_t>(vectors_.size() - 1));
}

void SketchIndex::add(const Digest128& digest, const Sketch& sketch) {
    if (!(sketch.params == params_)) throw FormatError("sketch params do not match index");
    add_flat(digest, sketch_to_floats(sketch));
}

void SketchIndex::add_flat(const Digest128& digest, std::vector<float> flat) {
    const std::size_t cells = static_cast<std::size_t>(params_.depth) * params_.width;
    if (flat.size() != cells) throw FormatError("flattened sketch size mismatch");
    digests_.push_back(digest);
    vectors_.push_back(std::move(flat));
    removed_.push_back(false);
    build_graph_if_needed();
}

void SketchIndex::remove(const Digest128& digest) {
    for (std::size_t i = 0; i < digests_.size(); ++i)
        if (digests_[i] == digest) removed_[i] = true;
}

std::vector<ScoredCandidate> SketchIndex::query(const Sketch& sketch, std::size_t k) const {
    if (!(sketch.params == params_)) throw FormatError("sketch params do not match index");
    return query_flat(sketch_to_floats(sketch), k);
}

std::vector<ScoredCandidate> SketchIndex::query_flat(std::span<const float> flat,
                                                     std::size_t k) const {
    if (digests_.empty() || k == 0) return {};
    if (!use_graph() || !graph_) return query_linear(flat, k);

    const std::size_t ef = std::max(kEfSearch, k * 4);
    auto hits = graph_->search(flat, ef);
    std::vector<ScoredCandidate> out;
    out.reserve(hits.size());
    for (const auto& [d, id] : hits) {
        if (removed_[id]) continue;
        out.push_back({digests_[id], hamming_estimate(vectors_[id], flat, params_)});
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        if (a.est_hamming != b.est_hamming) return a.est_hamming < b.est_hamming;
        return a.digest < b.digest;
    });
    if (out.size() > k) out.resize(k);
    return out;
}

std::vector<ScoredCandidate> SketchIndex::query_linear(std::span<const float> flat,
                                                       std::size_t k) const {
    std::vector<ScoredCandidate> out;
    out.reserve(digests_.size());
    for (std::size_t i = 0; i < digests_.size(); ++i) {
        if (removed_[i]) continue;
        out.push_back({digests_[i], hamming_estimate(vectors_[i], flat, params_)});
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        if (a.est_hamming != b.est_hamming) return a.est_hamming < b.est_hamming;
        return a.digest < b.digest;
    });
    if (out.size() > k) out.resize(k);
    return out;
}

}  // namespace tensorhub
