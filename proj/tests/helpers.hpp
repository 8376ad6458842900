#pragma once

// Shared test fixtures: deterministic tensor generators and a matrix-backed
// planner oracle.

#include <cstring>
#include <random>
#include <vector>

#include "tensorhub/digest.hpp"
#include "tensorhub/planner.hpp"
#include "tensorhub/safetensors.hpp"
#include "tensorhub/tensor_view.hpp"

namespace th_test {

using namespace tensorhub;

inline std::vector<std::uint8_t> random_bytes(std::size_t n, std::uint64_t seed) {
    std::vector<std::uint8_t> out(n);
    std::mt19937_64 rng(seed);
    for (auto& b : out) b = static_cast<std::uint8_t>(rng());
    return out;
}

// Float-shaped data: zero-mean gaussian values, like real weight matrices.
inline std::vector<std::uint8_t> gaussian_f32(std::size_t elements, std::uint64_t seed,
                                              float sigma = 0.02f) {
    std::vector<std::uint8_t> out(elements * 4);
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> g(0.0f, sigma);
    for (std::size_t i = 0; i < elements; ++i) {
        const float f = g(rng);
        std::memcpy(&out[i * 4], &f, 4);
    }
    return out;
}

// Flips `fraction` of all bits at uniformly random positions.
inline std::vector<std::uint8_t> flip_bits(std::vector<std::uint8_t> v, double fraction,
                                           std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const auto flips = static_cast<std::size_t>(fraction * static_cast<double>(v.size()) * 8.0);
    std::uniform_int_distribution<std::size_t> pos(0, v.size() * 8 - 1);
    for (std::size_t i = 0; i < flips; ++i) {
        const std::size_t b = pos(rng);
        v[b / 8] ^= static_cast<std::uint8_t>(1u << (b % 8));
    }
    return v;
}

// Additive gaussian noise on f32 data: the fine-tune-like perturbation.
// Low-significance mantissa bits diverge first, as in checkpoint families.
inline std::vector<std::uint8_t> add_noise_f32(std::vector<std::uint8_t> v, float sigma,
                                               std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> g(0.0f, sigma);
    for (std::size_t i = 0; i + 4 <= v.size(); i += 4) {
        float f;
        std::memcpy(&f, &v[i], 4);
        f += g(rng);
        std::memcpy(&v[i], &f, 4);
    }
    return v;
}

inline TensorView view_of(const std::string& name, DType dtype,
                          std::vector<std::int64_t> shape,
                          const std::vector<std::uint8_t>& bytes) {
    TensorView v;
    v.name = name;
    v.dtype = dtype;
    v.shape = std::move(shape);
    v.bytes = {bytes.data(), bytes.size()};
    return v;
}

// Exact bit-difference count; the independent oracle for the estimator.
inline std::uint64_t popcount_hamming(const std::vector<std::uint8_t>& a,
                                      const std::vector<std::uint8_t>& b) {
    std::uint64_t count = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        count += static_cast<unsigned>(__builtin_popcount(a[i] ^ b[i]));
    return count;
}

// RatioOracle backed by explicit pairwise ratios; candidates are every
// other known tensor, ranked by ratio (est_hamming = 1 - ratio so ranking
// matches the store's distance ordering).
class MatrixOracle : public RatioOracle {
  public:
    void set(const Digest128& a, const Digest128& b, double ratio) {
        ratios_[a][b] = ratio;
        ratios_[b][a] = ratio;
        known_.insert(a);
        known_.insert(b);
    }

    std::vector<BaseCandidate> candidates(const CompatKey&, const Digest128& tensor,
                                          std::size_t k) override {
        std::vector<BaseCandidate> out;
        auto it = ratios_.find(tensor);
        if (it == ratios_.end()) return out;
        for (const auto& [other, r] : it->second)
            if (bases_.contains(other)) out.push_back({other, 1.0 - r, r});
        std::sort(out.begin(), out.end(), [](const auto& x, const auto& y) {
            if (x.est_hamming != y.est_hamming) return x.est_hamming < y.est_hamming;
            return x.digest < y.digest;
        });
        if (out.size() > k) out.resize(k);
        return out;
    }

    double predicted_ratio(const Digest128& target, const Digest128& base) override {
        auto it = ratios_.find(target);
        if (it != ratios_.end())
            if (auto jt = it->second.find(base); jt != it->second.end()) return jt->second;
        return 0.0;
    }

    void mark_base(const Digest128& d) { bases_.insert(d); }

  private:
    std::map<Digest128, std::map<Digest128, double>> ratios_;
    std::set<Digest128> known_;
    std::set<Digest128> bases_;
};

inline Digest128 fake_digest(std::uint8_t tag) {
    Digest128 d;
    d.bytes[15] = tag;
    return d;
}

}  // namespace th_test
