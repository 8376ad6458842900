// th — tensor store command line.
//
// Exit codes: 0 success, 2 usage, 3 not found, 4 integrity failure,
// 5 ingest/engine failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "tensorhub/codec.hpp"
#include "tensorhub/config.hpp"
#include "tensorhub/errors.hpp"
#include "tensorhub/mmap_file.hpp"
#include "tensorhub/predictor.hpp"
#include "tensorhub/safetensors.hpp"
#include "tensorhub/sketch.hpp"
#include "tensorhub/store.hpp"

using json = nlohmann::json;
using namespace tensorhub;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitNotFound = 3;
constexpr int kExitIntegrity = 4;
constexpr int kExitFailure = 5;

EngineConfig load_config(const std::string& cli_path) {
    std::string path = cli_path;
    if (path.empty())
        if (const char* env = std::getenv("TH_CONFIG"); env && *env) path = env;
    if (path.empty()) return {};
    return EngineConfig::load_file(path);
}

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFoundError("cannot read " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string& s = buf.str();
    return {s.begin(), s.end()};
}

void write_file(const std::string& path, std::span<const std::uint8_t> data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw StoreError("cannot write " + path);
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size()));
}

json ingest_report_json(const IngestReport& r) {
    json tensors = json::array();
    for (const auto& t : r.tensors) {
        json e{{"name", t.name},
               {"digest", t.digest.hex()},
               {"action", t.action},
               {"raw_bytes", t.raw_bytes},
               {"stored_bytes", t.stored_bytes}};
        if (!t.base.is_zero()) {
            e["base"] = t.base.hex();
            e["predicted_ratio"] = t.predicted_ratio;
        }
        if (t.action != "dedup") e["measured_ratio"] = t.measured_ratio;
        tensors.push_back(std::move(e));
    }
    return json{{"model_id", r.model_id},
                {"raw_bytes", r.raw_bytes},
                {"stored_bytes", r.stored_bytes},
                {"dedup_count", r.dedup_count},
                {"cumulative_reduction", r.cumulative_reduction},
                {"tensors", std::move(tensors)}};
}

json stats_json(const StoreStats& st) {
    json clusters = json::object();
    for (const auto& [id, ratio] : st.cluster_ratios)
        clusters[std::to_string(id)] = ratio;
    return json{{"raw_bytes", st.raw_bytes},
                {"stored_bytes", st.stored_bytes},
                {"reduction", st.reduction},
                {"models", st.model_count},
                {"tensors", st.tensor_count},
                {"unique_tensors", st.unique_tensors},
                {"dedup_count", st.dedup_count},
                {"metadata_bytes", st.metadata_bytes},
                {"metadata_overhead", st.metadata_overhead},
                {"cluster_ratios", std::move(clusters)}};
}

void print_stats_human(const StoreStats& st) {
    std::cout << "models:            " << st.model_count << '\n'
              << "tensors:           " << st.tensor_count << " (" << st.unique_tensors
              << " unique, " << st.dedup_count << " deduped)\n"
              << "raw bytes:         " << st.raw_bytes << '\n'
              << "stored bytes:      " << st.stored_bytes << '\n'
              << "reduction:         " << st.reduction * 100 << "%\n"
              << "metadata bytes:    " << st.metadata_bytes << " ("
              << st.metadata_overhead * 100 << "% of raw)\n";
    for (const auto& [id, ratio] : st.cluster_ratios)
        std::cout << "cluster " << id << " ratio: " << ratio << '\n';
}

// ---- fit ----

struct FitRow {
    double p_hat;
    double measured;
    std::uint64_t bytes;
};

std::vector<FitRow> read_pairs_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw NotFoundError("cannot read " + path);
    std::vector<FitRow> rows;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (first && line.find("p_hat") != std::string::npos) {
            first = false;
            continue;  // header row
        }
        first = false;
        FitRow r{};
        std::istringstream ls(line);
        std::string cell;
        if (!std::getline(ls, cell, ',')) throw FormatError("bad csv row: " + line);
        r.p_hat = std::stod(cell);
        if (!std::getline(ls, cell, ',')) throw FormatError("bad csv row: " + line);
        r.measured = std::stod(cell);
        if (std::getline(ls, cell, ',')) r.bytes = std::stoull(cell);
        rows.push_back(r);
    }
    return rows;
}

int cmd_fit(const std::string& csv_path, const std::string& store_path,
            const std::string& codec_name_arg, bool save, bool human) {
    auto rows = read_pairs_csv(csv_path);
    if (rows.size() < 8) throw FormatError("need at least 8 pairs to fit and hold out");

    // Deterministic 80/20 split: every 5th row is holdout.
    std::vector<TrainingPair> train;
    std::vector<FitRow> holdout;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (i % 5 == 4) holdout.push_back(rows[i]);
        else train.push_back({rows[i].p_hat, rows[i].measured});
    }
    const PredictorCoefficients c = fit(train);

    // Holdout Pearson r and absolute-error percentiles (percentage points).
    std::vector<double> errors;
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    for (const auto& r : holdout) {
        const double pred = predict_ratio(r.p_hat, c);
        errors.push_back(std::abs(pred - r.measured) * 100.0);
        sx += pred;
        sy += r.measured;
        sxx += pred * pred;
        syy += r.measured * r.measured;
        sxy += pred * r.measured;
    }
    const double n = static_cast<double>(holdout.size());
    const double cov = sxy - sx * sy / n;
    const double vx = sxx - sx * sx / n;
    const double vy = syy - sy * sy / n;
    const double r_corr = (vx > 0 && vy > 0) ? cov / std::sqrt(vx * vy) : 0.0;
    std::sort(errors.begin(), errors.end());
    auto pct = [&](double q) {
        if (errors.empty()) return 0.0;
        const auto idx = static_cast<std::size_t>(q * (errors.size() - 1));
        return errors[idx];
    };

    if (save) {
        const CodecId codec = codec_from_string(codec_name_arg);
        Store store = Store::open(store_path);
        // Corpus identity: digest of the csv bytes.
        const auto bytes = read_file(csv_path);
        store.save_coefficients(codec, c, tensor_digest(bytes).hex());
    }

    if (human) {
        std::cout << "alpha=" << c.alpha << " beta=" << c.beta << " gamma=" << c.gamma
                  << " epsilon=" << c.epsilon << '\n'
                  << "holdout r=" << r_corr << "  P50=" << pct(0.50) << "%  P90="
                  << pct(0.90) << "%  P99=" << pct(0.99) << "%\n";
    } else {
        json out{{"alpha", c.alpha},        {"beta", c.beta},
                 {"gamma", c.gamma},        {"epsilon", c.epsilon},
                 {"holdout_r", r_corr},     {"p50_error_pct", pct(0.50)},
                 {"p90_error_pct", pct(0.90)}, {"p99_error_pct", pct(0.99)},
                 {"train_pairs", train.size()}, {"holdout_pairs", holdout.size()}};
        std::cout << out.dump() << '\n';
    }
    return 0;
}

// ---- bench ----

std::vector<std::uint8_t> synth_tensor(std::size_t bytes, std::uint64_t seed) {
    std::vector<std::uint8_t> out(bytes);
    std::mt19937_64 rng(seed);
    // Float-shaped data: small-magnitude values so planes are compressible.
    for (std::size_t i = 0; i + 4 <= bytes; i += 4) {
        const float f = static_cast<float>(std::normal_distribution<>(0.0, 0.02)(rng));
        std::memcpy(&out[i], &f, 4);
    }
    return out;
}

std::vector<std::uint8_t> perturb(std::vector<std::uint8_t> v, double flip_fraction,
                                  std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const auto flips = static_cast<std::size_t>(flip_fraction * v.size() * 8);
    std::uniform_int_distribution<std::size_t> pos(0, v.size() * 8 - 1);
    for (std::size_t i = 0; i < flips; ++i) {
        const std::size_t b = pos(rng);
        v[b / 8] ^= static_cast<std::uint8_t>(1u << (b % 8));
    }
    return v;
}

int cmd_bench(const std::string& suite, std::size_t bytes,
              const std::vector<unsigned>& workers_list) {
    using clock = std::chrono::steady_clock;
    auto mbps = [](std::size_t n, double sec) {
        return sec > 0 ? static_cast<double>(n) / 1e6 / sec : 0.0;
    };
    std::cout << "operation,bytes,seconds,MB/s,workers\n";

    if (suite == "codec") {
        const auto base = synth_tensor(bytes, 1);
        const auto target = perturb(base, 1e-3, 2);
        for (unsigned w : workers_list) {
            auto t0 = clock::now();
            DeltaBlob blob = fmpp_encode(target, base, DType::F32, kDefaultChunkElements, w);
            double enc = std::chrono::duration<double>(clock::now() - t0).count();
            t0 = clock::now();
            auto back = fmpp_decode(blob, base, w);
            double dec = std::chrono::duration<double>(clock::now() - t0).count();
            if (back != target) throw CodecError("bench round-trip mismatch");
            std::cout << "fmpp_encode," << bytes << ',' << enc << ',' << mbps(bytes, enc)
                      << ',' << w << '\n';
            std::cout << "fmpp_decode," << bytes << ',' << dec << ',' << mbps(bytes, dec)
                      << ',' << w << '\n';
        }
    } else if (suite == "sketch") {
        const auto data = synth_tensor(bytes, 3);
        TensorView v;
        v.name = "bench";
        v.dtype = DType::F32;
        v.shape = {static_cast<std::int64_t>(bytes / 4)};
        v.bytes = {data.data(), data.size()};
        for (unsigned w : workers_list) {
            const auto t0 = clock::now();
            Sketch s = compute_sketch(v, SketchParams{}, w);
            const double sec = std::chrono::duration<double>(clock::now() - t0).count();
            (void)s;
            std::cout << "sketch," << bytes << ',' << sec << ',' << mbps(bytes, sec) << ','
                      << w << '\n';
        }
    } else if (suite == "planner") {
        // Per-tensor assignment latency at growing partition sizes.
        struct FlatOracle : RatioOracle {
            std::vector<std::pair<Digest128, std::vector<float>>>* entries;
            SketchParams params;
            std::vector<BaseCandidate> candidates(const CompatKey&, const Digest128& t,
                                                  std::size_t k) override {
                const std::vector<float>* q = nullptr;
                for (auto& [d, f] : *entries)
                    if (d == t) q = &f;
                std::vector<BaseCandidate> out;
                if (!q) return out;
                for (auto& [d, f] : *entries) {
                    if (d == t) continue;
                    const double est = hamming_estimate(f, *q, params);
                    out.push_back({d, est, 0.5});
                }
                std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
                    return a.est_hamming < b.est_hamming;
                });
                if (out.size() > k) out.resize(k);
                return out;
            }
            double predicted_ratio(const Digest128&, const Digest128&) override { return 0.5; }
        };
        const std::size_t elem_bytes = 4096;
        for (std::size_t n : {100u, 200u, 400u, 800u}) {
            std::vector<std::pair<Digest128, std::vector<float>>> entries;
            Planner planner;
            FlatOracle oracle;
            oracle.entries = &entries;
            CompatKey key{DType::F32, {static_cast<std::int64_t>(elem_bytes / 4)}};
            const auto t0 = clock::now();
            for (std::size_t i = 0; i < n; ++i) {
                const auto data = synth_tensor(elem_bytes, 100 + i);
                TensorView v;
                v.name = "t";
                v.dtype = key.dtype;
                v.shape = key.shape;
                v.bytes = {data.data(), data.size()};
                const Digest128 id = tensor_digest(data);
                entries.emplace_back(id, sketch_to_floats(compute_sketch(v, oracle.params)));
                planner.assign({id, key, elem_bytes}, oracle);
            }
            const double sec = std::chrono::duration<double>(clock::now() - t0).count();
            std::cout << "planner_assign," << n * elem_bytes << ',' << sec << ','
                      << mbps(n * elem_bytes, sec) << ",1\n";
        }
    } else {
        throw CLI::ValidationError("--suite must be codec, sketch, or planner");
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"tensor-centric model weight store"};
    app.require_subcommand(1);

    std::string store_arg, config_arg;
    bool human = false;
    app.add_option("--store", store_arg, "store directory (default: TH_STORE or ./th-store)");
    app.add_option("--config", config_arg, "engine config file (default: TH_CONFIG)");
    app.add_flag("--human", human, "human-readable output instead of JSON/CSV");

    // init
    auto* init = app.add_subcommand("init", "create a new store");
    std::string init_codec;
    init->add_option("--codec", init_codec, "delta codec: fmpp or tensorx");

    // ingest
    auto* ingest = app.add_subcommand("ingest", "ingest a model file");
    std::string ingest_file, ingest_id;
    bool no_refine = false;
    ingest->add_option("file", ingest_file, "safetensors model file")->required();
    ingest->add_option("--id", ingest_id, "model id (default: file path)");
    ingest->add_flag("--no-refine", no_refine, "skip cadence-driven refinement");

    // get
    auto* get = app.add_subcommand("get", "reconstruct a model file");
    std::string get_id, get_out;
    bool get_verify = false;
    get->add_option("model_id", get_id)->required();
    get->add_option("-o,--output", get_out, "output path")->required();
    get->add_flag("--verify", get_verify, "digest-check every tensor after decode");

    // plan
    auto* plan = app.add_subcommand("plan", "dry-run placement for a model file");
    std::string plan_file;
    bool dry_run = true;
    plan->add_option("file", plan_file)->required();
    plan->add_flag("--dry-run", dry_run, "no writes (always on; flag kept for scripts)");

    // refine
    auto* refine = app.add_subcommand("refine", "run cluster refinement");

    // fit
    auto* fitc = app.add_subcommand("fit", "fit predictor coefficients from a pairs CSV");
    std::string fit_csv, fit_codec = "fmpp";
    bool fit_save = false;
    fitc->add_option("pairs", fit_csv, "CSV: p_hat,measured_ratio,bytes")->required();
    fitc->add_option("--codec", fit_codec, "codec the pairs were measured with");
    fitc->add_flag("--save", fit_save, "persist coefficients into the store");

    // verify
    auto* verify = app.add_subcommand("verify", "decode and digest-check a model");
    std::string verify_id;
    verify->add_option("model_id", verify_id)->required();

    // stats
    auto* stats = app.add_subcommand("stats", "store-wide statistics");

    // bench
    auto* bench = app.add_subcommand("bench", "micro-benchmarks (CSV output)");
    std::string bench_suite;
    std::size_t bench_bytes = 64u << 20;
    std::vector<unsigned> bench_workers{1, 8};
    bench->add_option("--suite", bench_suite, "codec | sketch | planner")->required();
    bench->add_option("--bytes", bench_bytes, "tensor size in bytes");
    bench->add_option("--workers", bench_workers, "worker counts to sweep");

    for (auto* sub : app.get_subcommands({})) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitUsage;
    }

    const std::string store_path = resolve_store_path(store_arg);
    bool ingesting = false;
    // Any decode-path failure during read commands is an integrity failure
    // from the operator's point of view, whichever layer detected it.
    const bool reading = get->parsed() || verify->parsed();
    try {
        if (init->parsed()) {
            EngineConfig cfg;
            try {
                cfg = load_config(config_arg);
                if (!init_codec.empty()) cfg.codec = codec_from_string(init_codec);
            } catch (const Error& e) {
                std::cerr << "error: " << e.what() << '\n';
                return kExitUsage;
            }
            Store::create(store_path, cfg);
            if (human) std::cout << "initialized " << store_path << '\n';
            else std::cout << json{{"store", store_path}}.dump() << '\n';
            return 0;
        }

        if (ingest->parsed()) {
            ingesting = true;
            Store store = Store::open(store_path);
            MappedFile file(ingest_file);
            const std::string id = ingest_id.empty() ? ingest_file : ingest_id;
            IngestReport report = store.ingest_model(id, file.data());
            const auto& cfg = store.config();
            if (!no_refine && cfg.refine_cadence > 0 &&
                store.list_models().size() % cfg.refine_cadence == 0)
                store.refine();
            if (human) {
                std::cout << "ingested " << id << ": " << report.raw_bytes << " raw -> "
                          << report.stored_bytes << " stored, " << report.dedup_count
                          << " deduped, store reduction "
                          << report.cumulative_reduction * 100 << "%\n";
            } else {
                std::cout << ingest_report_json(report).dump() << '\n';
            }
            return 0;
        }

        if (get->parsed()) {
            Store store = Store::open(store_path);
            auto bytes = store.retrieve_model(get_id);
            if (get_verify) store.verify_model(get_id);
            write_file(get_out, bytes);
            if (human) std::cout << "wrote " << bytes.size() << " bytes to " << get_out << '\n';
            else std::cout << json{{"model_id", get_id}, {"bytes", bytes.size()},
                                   {"output", get_out}}.dump() << '\n';
            return 0;
        }

        if (plan->parsed()) {
            Store store = Store::open(store_path);
            MappedFile file(plan_file);
            PlanDelta pd = store.plan_model(file.data());
            std::cout << pd.to_json_lines();  // newline-delimited action records
            return 0;
        }

        if (refine->parsed()) {
            Store store = Store::open(store_path);
            RefineReport r = store.refine();
            if (human) {
                std::cout << "stored bytes " << r.stored_bytes_before << " -> "
                          << r.stored_bytes_after << '\n';
                for (const auto& c : r.clusters)
                    std::cout << "cluster " << c.cluster_id << ": ratio " << c.ratio_before
                              << " -> " << c.ratio_after << " (" << c.promotions
                              << " promotions)\n";
            } else {
                json clusters = json::array();
                for (const auto& c : r.clusters)
                    clusters.push_back(json{{"cluster_id", c.cluster_id},
                                            {"ratio_before", c.ratio_before},
                                            {"ratio_after", c.ratio_after},
                                            {"promotions", c.promotions}});
                std::cout << json{{"stored_bytes_before", r.stored_bytes_before},
                                  {"stored_bytes_after", r.stored_bytes_after},
                                  {"clusters", std::move(clusters)}}.dump() << '\n';
            }
            return 0;
        }

        if (fitc->parsed()) return cmd_fit(fit_csv, store_path, fit_codec, fit_save, human);

        if (verify->parsed()) {
            Store store = Store::open(store_path);
            store.verify_model(verify_id);
            if (human) std::cout << "ok\n";
            else std::cout << json{{"model_id", verify_id}, {"ok", true}}.dump() << '\n';
            return 0;
        }

        if (stats->parsed()) {
            Store store = Store::open(store_path);
            StoreStats st = store.stats();
            if (human) print_stats_human(st);
            else std::cout << stats_json(st).dump() << '\n';
            return 0;
        }

        if (bench->parsed()) return cmd_bench(bench_suite, bench_bytes, bench_workers);
    } catch (const CLI::ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const NotFoundError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return ingesting ? kExitFailure : kExitNotFound;
    } catch (const IntegrityError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitIntegrity;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return reading ? kExitIntegrity : kExitFailure;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitFailure;
    }
    return kExitUsage;
}
