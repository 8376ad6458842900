#include <doctest.h>

#include <random>

#include "helpers.hpp"
#include "tensorhub/errors.hpp"
#include "tensorhub/sketch_index.hpp"

using namespace tensorhub;
using namespace th_test;

namespace {

// Synthetic flattened sketch vectors with cluster structure, cheaper than
// sketching real tensors for index-only tests.
std::vector<float> synthetic_vec(std::size_t cells, std::mt19937_64& rng, float spread) {
    std::vector<float> v(cells);
    std::normal_distribution<float> g(0.0f, spread);
    for (auto& x : v) x = std::round(g(rng));
    return v;
}

Digest128 rand_digest(std::mt19937_64& rng) {
    Digest128 d;
    for (auto& b : d.bytes) b = static_cast<std::uint8_t>(rng());
    return d;
}

}  // namespace

TEST_SUITE("sketch_index") {

TEST_CASE("linear mode returns exact nearest neighbors") {
    SketchParams params;
    SketchIndex index(params, SketchIndex::Mode::LINEAR);
    std::mt19937_64 rng(1);
    const std::size_t cells = static_cast<std::size_t>(params.depth) * params.width;

    std::vector<std::pair<Digest128, std::vector<float>>> entries;
    for (int i = 0; i < 200; ++i) {
        entries.emplace_back(rand_digest(rng), synthetic_vec(cells, rng, 30.0f));
        index.add_flat(entries.back().first, entries.back().second);
    }
    CHECK(index.size() == 200);

    const auto query = synthetic_vec(cells, rng, 30.0f);
    const auto got = index.query_flat(query, 5);
    REQUIRE(got.size() == 5);

    // Brute-force oracle.
    std::vector<std::pair<double, Digest128>> exact;
    for (const auto& [d, v] : entries)
        exact.emplace_back(hamming_estimate(v, query, params), d);
    std::sort(exact.begin(), exact.end());
    for (std::size_t i = 0; i < got.size(); ++i) {
        CHECK(got[i].digest == exact[i].second);
        CHECK(got[i].est_hamming == doctest::Approx(exact[i].first));
    }
}

TEST_CASE("results arrive sorted ascending by estimate") {
    SketchParams params;
    SketchIndex index(params, SketchIndex::Mode::LINEAR);
    std::mt19937_64 rng(2);
    const std::size_t cells = static_cast<std::size_t>(params.depth) * params.width;
    for (int i = 0; i < 50; ++i)
        index.add_flat(rand_digest(rng), synthetic_vec(cells, rng, 10.0f));
    const auto got = index.query_flat(synthetic_vec(cells, rng, 10.0f), 50);
    for (std::size_t i = 1; i < got.size(); ++i)
        CHECK(got[i - 1].est_hamming <= got[i].est_hamming);
}

TEST_CASE("removed entries are masked out") {
    SketchParams params;
    SketchIndex index(params, SketchIndex::Mode::LINEAR);
    std::mt19937_64 rng(3);
    const std::size_t cells = static_cast<std::size_t>(params.depth) * params.width;
    const auto gone = rand_digest(rng);
    const auto vec = synthetic_vec(cells, rng, 5.0f);
    index.add_flat(gone, vec);
    index.add_flat(rand_digest(rng), synthetic_vec(cells, rng, 5.0f));
    index.remove(gone);
    CHECK(index.size() == 1);
    for (const auto& c : index.query_flat(vec, 10)) CHECK(c.digest != gone);
}

TEST_CASE("graph mode recall@1 against the linear oracle") {
    SketchParams params;
    SketchIndex graph(params, SketchIndex::Mode::GRAPH);
    SketchIndex linear(params, SketchIndex::Mode::LINEAR);
    std::mt19937_64 rng(4);
    const std::size_t cells = static_cast<std::size_t>(params.depth) * params.width;
    for (int i = 0; i < 2000; ++i) {
        const auto d = rand_digest(rng);
        auto v = synthetic_vec(cells, rng, 40.0f);
        graph.add_flat(d, v);
        linear.add_flat(d, std::move(v));
    }
    int hits = 0;
    const int queries = 200;
    for (int q = 0; q < queries; ++q) {
        const auto query = synthetic_vec(cells, rng, 40.0f);
        const auto a = graph.query_flat(query, 1);
        const auto b = linear.query_linear(query, 1);
        REQUIRE(!a.empty());
        if (a[0].digest == b[0].digest) ++hits;
    }
    CHECK(static_cast<double>(hits) / queries >= 0.99);
}

TEST_CASE("auto mode switches to the graph past the threshold") {
    SketchParams params;
    SketchIndex index(params, SketchIndex::Mode::AUTO, 64);
    std::mt19937_64 rng(5);
    const std::size_t cells = static_cast<std::size_t>(params.depth) * params.width;
    std::vector<std::pair<Digest128, std::vector<float>>> entries;
    for (int i = 0; i < 300; ++i) {
        entries.emplace_back(rand_digest(rng), synthetic_vec(cells, rng, 20.0f));
        index.add_flat(entries.back().first, entries.back().second);
    }
    // Stored entries stay findable across the switch.
    int hits = 0;
    for (int i = 0; i < 100; ++i) {
        const auto got = index.query_flat(entries[i].second, 1);
        REQUIRE(!got.empty());
        if (got[0].digest == entries[i].first) ++hits;
    }
    CHECK(hits >= 99);  // self-query: distance 0 must rank first
}

TEST_CASE("mismatched sketch params are rejected") {
    SketchIndex index(SketchParams{}, SketchIndex::Mode::LINEAR);
    CHECK_THROWS_AS(index.add_flat(Digest128{}, std::vector<float>(7)), Error);
}

}  // TEST_SUITE
