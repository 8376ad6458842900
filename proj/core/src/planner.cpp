#include "tensorhub/planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tensorhub/errors.hpp"
#include "tensorhub/tensor_view.hpp"

namespace tensorhub {

std::string CompatKey::to_string() const {
    return std::string(dtype_name(dtype)) + ":" + shape_to_string(shape);
}

std::size_t CompatKeyHash::operator()(const CompatKey& k) const {
    std::size_t h = static_cast<std::size_t>(k.dtype) * 0x9e3779b97f4a7c15ULL;
    for (auto d : k.shape) h = h * 31 + static_cast<std::size_t>(d) + 0x9e3779b9;
    return h;
}

std::uint64_t Cluster::total_raw_bytes() const {
    std::uint64_t total = 0;
    for (const auto& [digest, s] : sizes) total += s;
    return total;
}

double cluster_reduction_ratio(const Cluster& c) {
    if (c.member_count() == 0) throw Error("empty cluster has no reduction ratio");
    const double total = static_cast<double>(c.total_raw_bytes());
    if (total == 0) return 0.0;
    double saved = 0;
    for (const auto& [digest, a] : c.deltas)
        saved += a.ratio * static_cast<double>(c.sizes.at(digest));
    return saved / total;
}

double cluster_predicted_cost(const Cluster& c) {
    double cost = 0;
    for (const auto& b : c.bases) cost += static_cast<double>(c.sizes.at(b));
    for (const auto& [digest, a] : c.deltas)
        cost += (1.0 - a.ratio) * static_cast<double>(c.sizes.at(digest));
    return cost;
}

namespace {

const char* action_name(PlanAction::Kind k) {
    switch (k) {
        case PlanAction::Kind::StoreBase: return "store_base";
        case PlanAction::Kind::StoreDelta: return "store_delta";
        case PlanAction::Kind::PromoteToBase: return "promote_to_base";
        case PlanAction::Kind::Reassign: return "reassign";
    }
    return "?";
}

}  // namespace

std::string PlanAction::to_json() const {
    std::string out = "{\"action\":\"";
    out += action_name(kind);
    out += "\",\"tensor\":\"" + tensor.hex() + "\"";
    if (kind == Kind::StoreDelta || kind == Kind::Reassign) {
        out += ",\"base\":\"" + base.hex() + "\"";
        out += ",\"predicted_ratio\":" + std::to_string(predicted_ratio);
    }
    out += ",\"cluster\":" + std::to_string(cluster_id) + "}";
    return out;
}

std::string PlanDelta::to_json_lines() const {
    std::string out;
    for (const auto& a : actions) {
        out += a.to_json();
        out += '\n';
    }
    return out;
}

Planner::Planner(PlannerParams params) : params_(params) {}

Planner::Planner(PlannerParams params, std::vector<Cluster> restored)
    : params_(params) {
    for (auto& c : restored) {
        const std::uint64_t id = c.id;
        next_cluster_id_ = std::max(next_cluster_id_, id + 1);
        for (const auto& b : c.bases) cluster_by_digest_[b] = id;
        for (const auto& [d, a] : c.deltas) cluster_by_digest_[d] = id;
        clusters_.emplace(id, std::move(c));
    }
}

bool Planner::contains(const Digest128& digest) const {
    return cluster_by_digest_.contains(digest);
}

bool Planner::is_base(const Digest128& digest) const {
    auto it = cluster_by_digest_.find(digest);
    if (it == cluster_by_digest_.end()) return false;
    return clusters_.at(it->second).bases.contains(digest);
}

const Cluster* Planner::cluster_of(const Digest128& digest) const {
    auto it = cluster_by_digest_.find(digest);
    if (it == cluster_by_digest_.end()) return nullptr;
    return &clusters_.at(it->second);
}

double Planner::predicted_cost() const {
    double cost = 0;
    for (const auto& [id, c] : clusters_) cost += cluster_predicted_cost(c);
    return cost;
}

PlanDelta Planner::assign(const TensorInfo& tensor, RatioOracle& oracle) {
    PlanDelta plan;
    if (contains(tensor.digest)) return plan;  // dedup short-circuit

    auto cands = oracle.candidates(tensor.key, tensor.digest, params_.candidate_k);
    const BaseCandidate* best = nullptr;
    for (const auto& c : cands) {
        if (!best) {
            best = &c;
            continue;
        }
        if (c.predicted_ratio > best->predicted_ratio ||
            (c.predicted_ratio == best->predicted_ratio &&
             (c.est_hamming < best->est_hamming ||
              (c.est_hamming == best->est_hamming && c.digest < best->digest))))
            best = &c;
    }

    if (best && best->predicted_ratio >= params_.theta_min) {
        auto it = cluster_by_digest_.find(best->digest);
        if (it == cluster_by_digest_.end() || !clusters_.at(it->second).bases.contains(best->digest))
            throw Error("candidate base " + best->digest.hex() + " is not a known base");
        Cluster& cluster = clusters_.at(it->second);
        cluster.deltas[tensor.digest] = {best->digest, best->predicted_ratio};
        cluster.sizes[tensor.digest] = tensor.bytes;
        cluster_by_digest_[tensor.digest] = cluster.id;
        plan.actions.push_back({PlanAction::Kind::StoreDelta, tensor.digest, best->digest,
                                best->predicted_ratio, cluster.id});
        return plan;
    }

    Cluster fresh;
    fresh.id = next_cluster_id_++;
    fresh.key = tensor.key;
    fresh.bases.insert(tensor.digest);
    fresh.sizes[tensor.digest] = tensor.bytes;
    cluster_by_digest_[tensor.digest] = fresh.id;
    plan.actions.push_back({PlanAction::Kind::StoreBase, tensor.digest, {}, 0, fresh.id});
    clusters_.emplace(fresh.id, std::move(fresh));
    return plan;
}

bool Planner::should_split(const Cluster& c) const {
    return c.member_count() >= params_.min_split_size &&
           cluster_reduction_ratio(c) < params_.split_ratio_trigger;
}

PlanDelta Planner::split(std::uint64_t cluster_id, RatioOracle& oracle) {
    auto it = clusters_.find(cluster_id);
    if (it == clusters_.end()) throw Error("unknown cluster " + std::to_string(cluster_id));
    return split_impl(it->second, oracle);
}

PlanDelta Planner::split_impl(Cluster& c, RatioOracle& oracle) {
    PlanDelta plan;
    for (;;) {
        if (c.deltas.empty()) break;

        double mean = 0;
        for (const auto& [d, a] : c.deltas) mean += a.ratio;
        mean /= static_cast<double>(c.deltas.size());

        std::vector<Digest128> candidates;
        for (const auto& [d, a] : c.deltas)
            if (a.ratio < mean - params_.candidate_margin) candidates.push_back(d);
        if (candidates.empty()) break;

        const double total = static_cast<double>(c.total_raw_bytes());
        const double current = cluster_reduction_ratio(c);

        // Assignments track the best base seen so far, so the ratio after
        // promoting candidate cand is max(current ratio, R(t, cand)) per
        // member, with cand itself dropping to zero reduction.
        double best_gain = 0;
        Digest128 best_cand;
        std::vector<std::pair<Digest128, double>> best_improved;
        for (const auto& cand : candidates) {
            double saved = 0;
            std::vector<std::pair<Digest128, double>> improved;
            for (const auto& [d, a] : c.deltas) {
                if (d == cand) continue;
                const double alt = oracle.predicted_ratio(d, cand);
                const double r = std::max(a.ratio, alt);
                if (alt > a.ratio) improved.emplace_back(d, alt);
                saved += r * static_cast<double>(c.sizes.at(d));
            }
            const double gain = (total == 0 ? 0.0 : saved / total) - current;
            if (gain > best_gain) {
                best_gain = gain;
                best_cand = cand;
                best_improved = std::move(improved);
            }
        }
        if (best_gain <= 0) break;

        c.deltas.erase(best_cand);
        c.bases.insert(best_cand);
        plan.actions.push_back({PlanAction::Kind::PromoteToBase, best_cand, {}, 0, c.id});
        for (const auto& [d, r] : best_improved) {
            c.deltas[d] = {best_cand, r};
            plan.actions.push_back({PlanAction::Kind::Reassign, d, best_cand, r, c.id});
        }
    }
    return plan;
}

PlanDelta Planner::refine(RatioOracle& oracle) {
    PlanDelta plan;

    // Alternate splitting with a global sweep until a fixed point. The
    // sweep mops up what greedy arrival order leaves behind: deltas bound
    // before their best base existed (it arrived later or was promoted by
    // a split), and bases that seeded a cluster only because nothing
    // matched at the time. Every step strictly lowers predicted cost, so
    // this terminates.
    for (int pass = 0; pass < 8; ++pass) {
        bool changed = false;

        for (auto& [id, c] : clusters_) {
            if (!should_split(c)) continue;
            PlanDelta sub = split_impl(c, oracle);
            if (!sub.empty()) changed = true;
            plan.actions.insert(plan.actions.end(), sub.actions.begin(), sub.actions.end());
        }

        std::map<CompatKey, std::vector<Digest128>> bases_by_key;
        for (const auto& [id, c] : clusters_)
            for (const auto& b : c.bases) bases_by_key[c.key].push_back(b);

        auto best_base = [&](const CompatKey& key, const Digest128& self) {
            std::pair<Digest128, double> best{{}, -1.0};
            for (const auto& b : bases_by_key[key]) {
                if (b == self || !is_base(b)) continue;  // may be demoted mid-pass
                const double r = oracle.predicted_ratio(self, b);
                if (r > best.second || (r == best.second && b < best.first)) best = {b, r};
            }
            return best;
        };

        // Rebind deltas to the best base anywhere in their partition.
        struct Move { Digest128 tensor, base; double ratio; };
        std::vector<Move> moves;
        for (const auto& [id, c] : clusters_)
            for (const auto& [d, a] : c.deltas) {
                const auto [b, r] = best_base(c.key, d);
                if (r > a.ratio + 1e-12) moves.push_back({d, b, r});
            }
        for (const auto& m : moves) {
            Cluster& from = clusters_.at(cluster_by_digest_.at(m.tensor));
            Cluster& to = clusters_.at(cluster_by_digest_.at(m.base));
            const std::uint64_t sz = from.sizes.at(m.tensor);
            from.deltas.erase(m.tensor);
            if (&from != &to) {
                from.sizes.erase(m.tensor);
                to.sizes[m.tensor] = sz;
                cluster_by_digest_[m.tensor] = to.id;
            }
            to.deltas[m.tensor] = {m.base, m.ratio};
            plan.actions.push_back({PlanAction::Kind::Reassign, m.tensor, m.base, m.ratio, to.id});
            changed = true;
        }

        // Open a new base outright when the gain spans the whole partition:
        // a family scattered as low-ratio deltas across several clusters
        // never looks profitable from any single cluster's point of view.
        for (;;) {
            struct DeltaRef { Digest128 d; CompatKey key; double ratio; std::uint64_t size; };
            std::vector<DeltaRef> all;
            for (const auto& [id, c] : clusters_)
                for (const auto& [d, a] : c.deltas) all.push_back({d, c.key, a.ratio, c.sizes.at(d)});
            double best_gain = 1e-9;
            const DeltaRef* cand = nullptr;
            for (const auto& p : all) {
                double gain = -p.ratio * static_cast<double>(p.size);
                for (const auto& t : all) {
                    if (t.d == p.d || !(t.key == p.key)) continue;
                    const double r = oracle.predicted_ratio(t.d, p.d);
                    if (r > t.ratio) gain += (r - t.ratio) * static_cast<double>(t.size);
                }
                if (gain > best_gain) { best_gain = gain; cand = &p; }
            }
            if (!cand) break;
            Cluster& home = clusters_.at(cluster_by_digest_.at(cand->d));
            home.deltas.erase(cand->d);
            home.bases.insert(cand->d);
            plan.actions.push_back({PlanAction::Kind::PromoteToBase, cand->d, {}, 0, home.id});
            for (const auto& t : all) {
                if (t.d == cand->d || !(t.key == cand->key)) continue;
                const double r = oracle.predicted_ratio(t.d, cand->d);
                if (r <= t.ratio + 1e-12) continue;
                Cluster& from = clusters_.at(cluster_by_digest_.at(t.d));
                from.deltas.erase(t.d);
                if (&from != &home) {
                    const std::uint64_t sz = from.sizes.at(t.d);
                    from.sizes.erase(t.d);
                    home.sizes[t.d] = sz;
                    cluster_by_digest_[t.d] = home.id;
                }
                home.deltas[t.d] = {cand->d, r};
                plan.actions.push_back({PlanAction::Kind::Reassign, t.d, cand->d, r, home.id});
            }
            changed = true;
        }

        // Swap a base for one of its members when the member is the better
        // center (1-swap local search). Arrival order fixes the first base
        // of each family; the true center usually shows up later.
        for (auto& [id, c] : clusters_) {
            if (c.deltas.empty()) continue;
            const double current = cluster_predicted_cost(c);
            double best_cost = current - 1e-9;
            Digest128 out_base, in_base;
            for (const auto& b : c.bases)
                for (const auto& [m, unused] : c.deltas) {
                    double cost = 0;
                    for (const auto& [t, sz] : c.sizes) {
                        if (t == m || (c.bases.contains(t) && !(t == b))) {
                            cost += static_cast<double>(sz);
                            continue;
                        }
                        double r = oracle.predicted_ratio(t, m);
                        for (const auto& v : c.bases)
                            if (!(v == b)) r = std::max(r, oracle.predicted_ratio(t, v));
                        cost += (1.0 - r) * static_cast<double>(sz);
                    }
                    if (cost < best_cost) {
                        best_cost = cost;
                        out_base = b;
                        in_base = m;
                    }
                }
            if (in_base.is_zero()) continue;

            c.deltas.erase(in_base);
            c.bases.insert(in_base);
            c.bases.erase(out_base);
            plan.actions.push_back({PlanAction::Kind::PromoteToBase, in_base, {}, 0, c.id});
            std::vector<std::pair<Digest128, Cluster::Assignment>> rebound;
            for (const auto& [t, sz] : c.sizes) {
                if (c.bases.contains(t)) continue;
                Cluster::Assignment a{{}, -1.0};
                for (const auto& v : c.bases) {
                    const double r = oracle.predicted_ratio(t, v);
                    if (r > a.ratio || (r == a.ratio && v < a.base)) a = {v, r};
                }
                a.ratio = std::max(a.ratio, 0.0);
                rebound.emplace_back(t, a);
            }
            for (const auto& [t, a] : rebound) {
                auto it = c.deltas.find(t);
                if (it != c.deltas.end() && it->second.base == a.base) continue;
                c.deltas[t] = a;
                plan.actions.push_back({PlanAction::Kind::Reassign, t, a.base, a.ratio, c.id});
            }
            changed = true;
        }

        // Close a base when the rest of the partition absorbs it for less:
        // the base becomes a delta on the best other base, and every delta
        // riding on it rebinds likewise. Done one closing at a time; each
        // strictly lowers predicted cost.
        for (;;) {
            std::map<CompatKey, std::vector<Digest128>> live;
            for (const auto& [id, c] : clusters_)
                for (const auto& b : c.bases) live[c.key].push_back(b);

            auto best_other = [&](const CompatKey& key, const Digest128& excl,
                                  const Digest128& self) {
                std::pair<Digest128, double> best{{}, -1.0};
                for (const auto& b : live[key]) {
                    if (b == excl || b == self) continue;
                    const double r = oracle.predicted_ratio(self, b);
                    if (r > best.second || (r == best.second && b < best.first)) best = {b, r};
                }
                return best;
            };

            double best_gain = 1e-9;
            Digest128 victim;
            CompatKey victim_key;
            for (const auto& [id, c] : clusters_)
                for (const auto& b : c.bases) {
                    const auto [b2, rb] = best_other(c.key, b, b);
                    if (rb < params_.theta_min) continue;
                    double gain = rb * static_cast<double>(c.sizes.at(b));
                    for (const auto& [t, a] : c.deltas) {
                        if (!(a.base == b)) continue;
                        const auto [t2, rt] = best_other(c.key, b, t);
                        if (rt < 0) { gain = -1; break; }  // rider would strand
                        gain -= (a.ratio - rt) * static_cast<double>(c.sizes.at(t));
                    }
                    if (gain > best_gain) {
                        best_gain = gain;
                        victim = b;
                        victim_key = c.key;
                    }
                }
            if (victim.is_zero()) break;

            Cluster& from = clusters_.at(cluster_by_digest_.at(victim));
            struct Out { Digest128 tensor, base; double ratio; };
            std::vector<Out> out;
            for (const auto& [t, a] : from.deltas)
                if (a.base == victim) {
                    const auto [t2, rt] = best_other(victim_key, victim, t);
                    out.push_back({t, t2, rt});
                }
            {
                const auto [b2, rb] = best_other(victim_key, victim, victim);
                out.push_back({victim, b2, rb});
                from.bases.erase(victim);
            }
            for (const auto& o : out) {
                Cluster& src = clusters_.at(cluster_by_digest_.at(o.tensor));
                Cluster& dst = clusters_.at(cluster_by_digest_.at(o.base));
                const std::uint64_t sz = src.sizes.at(o.tensor);
                src.deltas.erase(o.tensor);
                if (&src != &dst) {
                    src.sizes.erase(o.tensor);
                    dst.sizes[o.tensor] = sz;
                    cluster_by_digest_[o.tensor] = dst.id;
                }
                dst.deltas[o.tensor] = {o.base, o.ratio};
                plan.actions.push_back({PlanAction::Kind::Reassign, o.tensor, o.base, o.ratio, dst.id});
            }
            if (from.member_count() == 0) clusters_.erase(from.id);
            changed = true;
        }

        if (!changed) break;
    }
    return plan;
}

ExactPlanResult exact_plan(std::span<const std::uint64_t> sizes,
                           const std::vector<std::vector<double>>& ratios) {
    const std::size_t n = sizes.size();
    if (n == 0) throw Error("exact_plan on empty instance");
    if (n > 20) throw Error("exact_plan instance too large (> 20 tensors)");
    if (ratios.size() != n) throw Error("ratio matrix shape mismatch");

    ExactPlanResult best;
    best.cost = std::numeric_limits<double>::infinity();
    const std::uint32_t full = (n == 32 ? 0xffffffffu : (1u << n) - 1);
    for (std::uint32_t mask = 1; mask <= full; ++mask) {
        double cost = 0;
        for (std::size_t t = 0; t < n; ++t) {
            if (mask & (1u << t)) {
                cost += static_cast<double>(sizes[t]);
            } else {
                double cheapest = std::numeric_limits<double>::infinity();
                for (std::size_t b = 0; b < n; ++b) {
                    if (!(mask & (1u << b))) continue;
                    cheapest = std::min(cheapest,
                                        (1.0 - ratios[t][b]) * static_cast<double>(sizes[t]));
                }
                cost += cheapest;
            }
            if (cost > best.cost) break;
        }
        // on cost ties prefer more bases: a zero-gain delta is just a liability
        if (cost < best.cost ||
            (cost == best.cost && __builtin_popcount(mask) > __builtin_popcount(best.base_mask))) {
            best.cost = cost;
            best.base_mask = mask;
        }
    }
    return best;
}

}  // namespace tensorhub
