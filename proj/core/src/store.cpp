#include "tensorhub/store.hpp"

#include <sqlite3.h>

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <list>
#include <unordered_map>
#include <unordered_set>

#include "tensorhub/codec.hpp"
#include "tensorhub/errors.hpp"
#include "tensorhub/mmap_file.hpp"
#include "tensorhub/safetensors.hpp"

namespace fs = std::filesystem;

namespace tensorhub {

namespace {

// ---- minimal sqlite RAII ----

struct Db {
    sqlite3* handle = nullptr;

    explicit Db(const std::string& path) {
        if (sqlite3_open(path.c_str(), &handle) != SQLITE_OK)
            throw StoreError("cannot open " + path + ": " + sqlite3_errmsg(handle));
        exec("PRAGMA journal_mode=WAL");
        exec("PRAGMA synchronous=NORMAL");
        exec("PRAGMA foreign_keys=ON");
    }
    ~Db() {
        if (handle) sqlite3_close(handle);
    }
    Db(const Db&) = delete;
    Db& operator=(const Db&) = delete;

    void exec(const std::string& sql) {
        char* err = nullptr;
        if (sqlite3_exec(handle, sql.c_str(), nullptr, nullptr, &err) != SQLITE_OK) {
            std::string msg = err ? err : "unknown sqlite error";
            sqlite3_free(err);
            throw StoreError("sql error: " + msg + " in: " + sql);
        }
    }
};

struct Stmt {
    sqlite3_stmt* stmt = nullptr;

    Stmt(Db& db, const std::string& sql) {
        if (sqlite3_prepare_v2(db.handle, sql.c_str(), -1, &stmt, nullptr) != SQLITE_OK)
            throw StoreError("prepare failed: " + std::string(sqlite3_errmsg(db.handle)) +
                             " in: " + sql);
    }
    ~Stmt() {
        if (stmt) sqlite3_finalize(stmt);
    }
    Stmt(const Stmt&) = delete;
    Stmt& operator=(const Stmt&) = delete;

    Stmt& bind(int idx, const std::string& v) {
        sqlite3_bind_text(stmt, idx, v.c_str(), -1, SQLITE_TRANSIENT);
        return *this;
    }
    Stmt& bind(int idx, std::int64_t v) {
        sqlite3_bind_int64(stmt, idx, v);
        return *this;
    }
    Stmt& bind(int idx, double v) {
        sqlite3_bind_double(stmt, idx, v);
        return *this;
    }
    Stmt& bind(int idx, const Digest128& d) {
        sqlite3_bind_blob(stmt, idx, d.bytes.data(), 16, SQLITE_TRANSIENT);
        return *this;
    }
    Stmt& bind_null(int idx) {
        sqlite3_bind_null(stmt, idx);
        return *this;
    }

    bool step() {
        const int rc = sqlite3_step(stmt);
        if (rc == SQLITE_ROW) return true;
        if (rc == SQLITE_DONE) return false;
        throw StoreError("step failed: " + std::string(sqlite3_errstr(rc)));
    }
    void run() {
        while (step()) {}
        sqlite3_reset(stmt);
        sqlite3_clear_bindings(stmt);
    }

    std::int64_t col_i64(int i) { return sqlite3_column_int64(stmt, i); }
    double col_f64(int i) { return sqlite3_column_double(stmt, i); }
    bool col_null(int i) { return sqlite3_column_type(stmt, i) == SQLITE_NULL; }
    std::string col_text(int i) {
        const unsigned char* p = sqlite3_column_text(stmt, i);
        return p ? reinterpret_cast<const char*>(p) : "";
    }
    Digest128 col_digest(int i) {
        Digest128 d;
        if (sqlite3_column_bytes(stmt, i) == 16)
            std::memcpy(d.bytes.data(), sqlite3_column_blob(stmt, i), 16);
        return d;
    }
};

struct Transaction {
    Db& db;
    bool done = false;
    explicit Transaction(Db& db) : db(db) { db.exec("BEGIN IMMEDIATE"); }
    void commit() {
        db.exec("COMMIT");
        done = true;
    }
    ~Transaction() {
        if (!done) {
            try {
                db.exec("ROLLBACK");
            } catch (...) {}
        }
    }
};

const char* kSchema = R"sql(
CREATE TABLE IF NOT EXISTS config(key TEXT PRIMARY KEY, value TEXT);
CREATE TABLE IF NOT EXISTS models(model_id TEXT PRIMARY KEY, raw_bytes INTEGER);
CREATE TABLE IF NOT EXISTS manifest(
  model_id TEXT NOT NULL, ord INTEGER NOT NULL, tensor_name TEXT NOT NULL,
  tensor_id BLOB NOT NULL, PRIMARY KEY(model_id, tensor_name));
CREATE TABLE IF NOT EXISTS tensors(
  tensor_id BLOB PRIMARY KEY, dtype INTEGER NOT NULL, shape TEXT NOT NULL,
  raw_bytes INTEGER NOT NULL, codec INTEGER NOT NULL, base_id BLOB,
  blob_path TEXT NOT NULL, blob_bytes INTEGER NOT NULL,
  cluster_id INTEGER, is_base INTEGER NOT NULL DEFAULT 0,
  predicted_ratio REAL NOT NULL DEFAULT 0, measured_ratio REAL NOT NULL DEFAULT 0);
CREATE TABLE IF NOT EXISTS coeffs(
  codec INTEGER PRIMARY KEY, alpha REAL, beta REAL, gamma REAL, epsilon REAL,
  corpus_digest TEXT);
)sql";

std::string blob_rel_path(const Digest128& digest, std::uint64_t generation) {
    const std::string hex = digest.hex();
    std::string p = "blobs/" + hex.substr(0, 2) + "/" + hex.substr(2, 2) + "/" + hex;
    if (generation) p += "-g" + std::to_string(generation);
    return p + ".thdx";
}

std::string sketch_rel_path(const Digest128& digest) {
    return "sketches/" + digest.hex() + ".thsk";
}

void write_file_atomic(const fs::path& path, std::span<const std::uint8_t> data) {
    fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw StoreError("cannot write " + tmp.string());
        out.write(reinterpret_cast<const char*>(data.data()),
                  static_cast<std::streamsize>(data.size()));
        if (!out) throw StoreError("short write to " + tmp.string());
    }
    fs::rename(tmp, path);
}

}  // namespace

// ---- store impl ----

struct Store::Impl {
    fs::path dir;
    EngineConfig cfg;
    std::unique_ptr<Db> db;
    Planner plan{PlannerParams{}};
    std::uint64_t generation = 0;  // blob rewrite counter (refine)

    // One index per CompatKey partition, over base sketches only.
    std::map<CompatKey, SketchIndex> indexes;

    // Flattened sketch cache, keyed by digest (bases and recent tensors).
    std::unordered_map<Digest128, std::vector<float>, Digest128Hash> sketch_cache;

    // Decoded raw tensor bytes, FIFO-bounded.
    std::unordered_map<Digest128, std::shared_ptr<std::vector<std::uint8_t>>, Digest128Hash>
        raw_cache;
    std::list<Digest128> raw_order;
    std::size_t raw_cache_bytes = 0;
    static constexpr std::size_t kRawCacheCap = std::size_t(2) << 30;

    PredictorCoefficients coeffs_tx;
    PredictorCoefficients coeffs_fmpp;

    SketchIndex::Mode index_mode() const {
        if (cfg.index_mode == "linear") return SketchIndex::Mode::LINEAR;
        if (cfg.index_mode == "graph") return SketchIndex::Mode::GRAPH;
        return SketchIndex::Mode::AUTO;
    }

    SketchIndex& index_for(const CompatKey& key) {
        auto it = indexes.find(key);
        if (it == indexes.end())
            it = indexes.emplace(key, SketchIndex(cfg.sketch, index_mode())).first;
        return it->second;
    }

    PredictorCoefficients active_coeffs() const {
        return cfg.codec == CodecId::TENSORX ? coeffs_tx : coeffs_fmpp;
    }

    // -- sketches --

    const std::vector<float>& sketch_floats(const Digest128& digest) {
        auto it = sketch_cache.find(digest);
        if (it != sketch_cache.end()) return it->second;
        MappedFile f((dir / sketch_rel_path(digest)).string());
        Sketch s = deserialize_sketch(f.data());
        return sketch_cache.emplace(digest, sketch_to_floats(s)).first->second;
    }

    double pair_p_hat(const Digest128& a, const Digest128& b, const CompatKey& key) {
        const double est = hamming_estimate(sketch_floats(a), sketch_floats(b), cfg.sketch);
        std::uint64_t n = 1;
        for (auto d : key.shape) n *= static_cast<std::uint64_t>(d);
        const double total =
            static_cast<double>(n) * static_cast<double>(bits_per_element(key.dtype));
        if (total == 0) return 0.0;
        return std::clamp(est / total, 0.0, 1.0);
    }

    // -- raw bytes --

    std::shared_ptr<std::vector<std::uint8_t>> load_raw(const Digest128& digest) {
        if (auto it = raw_cache.find(digest); it != raw_cache.end()) return it->second;

        Stmt q(*db, "SELECT codec, base_id, blob_path FROM tensors WHERE tensor_id=?");
        q.bind(1, digest);
        if (!q.step()) throw NotFoundError("tensor " + digest.hex() + " not in store");
        const CodecId codec = codec_from_code(static_cast<std::uint8_t>(q.col_i64(0)));
        const Digest128 base_id = q.col_null(1) ? Digest128{} : q.col_digest(1);
        const std::string path = q.col_text(2);

        MappedFile f((dir / path).string());
        BlobContents contents = read_blob(f.data());
        std::vector<std::uint8_t> raw;
        if (contents.flags.codec == CodecId::RAW) {
            raw.assign(contents.payload.begin(), contents.payload.end());
        } else {
            DeltaBlob blob = DeltaBlob::parse(contents.payload);
            if (is_delta_codec(blob.codec)) {
                if (base_id.is_zero())
                    throw IntegrityError("delta blob without base reference: " + digest.hex());
                auto base_raw = load_raw(base_id);  // depth-1 chain
                raw = decode_blob(blob, *base_raw, cfg.effective_workers());
            } else {
                raw = decode_blob(blob, {}, cfg.effective_workers());
            }
        }
        (void)codec;
        if (tensor_digest(raw) != digest)
            throw IntegrityError("decoded bytes do not match digest " + digest.hex());

        auto out = std::make_shared<std::vector<std::uint8_t>>(std::move(raw));
        raw_cache_bytes += out->size();
        raw_cache.emplace(digest, out);
        raw_order.push_back(digest);
        while (raw_cache_bytes > kRawCacheCap && raw_order.size() > 1) {
            const Digest128 victim = raw_order.front();
            raw_order.pop_front();
            auto it = raw_cache.find(victim);
            if (it != raw_cache.end()) {
                raw_cache_bytes -= it->second->size();
                raw_cache.erase(it);
            }
        }
        return out;
    }

    // -- blob encode helpers --

    DeltaBlob encode_base(std::span<const std::uint8_t> bytes, DType dtype) {
        if (!cfg.compress_bases) return raw_encode(bytes, dtype);
        DeltaBlob blob =
            standalone_encode(bytes, dtype, cfg.chunk_elements, cfg.effective_workers());
        return apply_raw_fallback(std::move(blob), bytes);
    }

    DeltaBlob encode_delta(std::span<const std::uint8_t> target,
                           std::span<const std::uint8_t> base, DType dtype) {
        DeltaBlob blob = cfg.codec == CodecId::TENSORX
                             ? tensorx_encode(target, base, dtype, cfg.chunk_elements,
                                              cfg.effective_workers())
                             : fmpp_encode(target, base, dtype, cfg.chunk_elements,
                                           cfg.effective_workers());
        return apply_raw_fallback(std::move(blob), target);
    }

    // Writes the safetensors-wrapped blob container; returns (path, bytes).
    std::pair<std::string, std::uint64_t> write_blob_file(const Digest128& digest,
                                                          const DeltaBlob& blob,
                                                          const std::vector<std::int64_t>& shape,
                                                          std::uint64_t raw_len) {
        BlobFlags flags;
        flags.codec = blob.codec;
        if (is_delta_codec(blob.codec)) flags.base = blob.base_digest;
        flags.dtype = blob.dtype;
        flags.shape = shape;
        flags.raw_len = raw_len;
        std::vector<std::uint8_t> container;
        if (blob.codec == CodecId::RAW) {
            container = write_blob(digest.hex(), blob.payload, flags);
        } else {
            container = write_blob(digest.hex(), blob.serialize(), flags);
        }
        const std::string rel = blob_rel_path(digest, generation);
        write_file_atomic(dir / rel, container);
        return {rel, container.size()};
    }

    // -- state (re)load --

    void load_state() {
        {
            Stmt q(*db, "SELECT value FROM config WHERE key='engine'");
            if (!q.step()) throw StoreError("store has no engine config; not initialized?");
            cfg = EngineConfig::from_text(q.col_text(0));
        }
        {
            Stmt q(*db, "SELECT value FROM config WHERE key='generation'");
            if (q.step()) generation = static_cast<std::uint64_t>(q.col_i64(0));
        }
        {
            Stmt q(*db,
                   "SELECT codec, alpha, beta, gamma, epsilon FROM coeffs");
            while (q.step()) {
                PredictorCoefficients c{q.col_f64(1), q.col_f64(2), q.col_f64(3), q.col_f64(4)};
                if (codec_from_code(static_cast<std::uint8_t>(q.col_i64(0))) == CodecId::TENSORX)
                    coeffs_tx = c;
                else
                    coeffs_fmpp = c;
            }
        }

        // Rebuild planner state and base indexes from committed rows.
        std::map<std::uint64_t, Cluster> clusters;
        Stmt q(*db,
               "SELECT tensor_id, dtype, shape, raw_bytes, cluster_id, is_base, base_id, "
               "predicted_ratio FROM tensors WHERE cluster_id IS NOT NULL");
        while (q.step()) {
            const Digest128 id = q.col_digest(0);
            const DType dtype = dtype_from_code(static_cast<std::uint8_t>(q.col_i64(1)));
            const auto shape = shape_from_string(q.col_text(2));
            const auto cluster_id = static_cast<std::uint64_t>(q.col_i64(4));
            Cluster& c = clusters[cluster_id];
            c.id = cluster_id;
            c.key = {dtype, shape};
            c.sizes[id] = static_cast<std::uint64_t>(q.col_i64(3));
            if (q.col_i64(5)) {
                c.bases.insert(id);
            } else {
                c.deltas[id] = {q.col_digest(6), q.col_f64(7)};
            }
        }
        std::vector<Cluster> list;
        list.reserve(clusters.size());
        for (auto& [id, c] : clusters) list.push_back(std::move(c));

        plan = Planner(cfg.planner, std::move(list));
        indexes.clear();
        sketch_cache.clear();
        for (const auto& [id, c] : plan.clusters())
            for (const auto& b : c.bases) index_for(c.key).add_flat(b, sketch_floats(b));
    }

    void persist_generation(Transaction&) {
        Stmt s(*db, "INSERT INTO config(key,value) VALUES('generation',?) "
                    "ON CONFLICT(key) DO UPDATE SET value=excluded.value");
        s.bind(1, static_cast<std::int64_t>(generation));
        s.run();
    }
};

// Oracle over the store's index, predictor, and sketch cache, with an
// in-memory overlay for tensors of the batch being planned.
namespace {

class StoreOracle : public RatioOracle {
  public:
    StoreOracle(Store::Impl& impl, bool use_overlay)
        : impl_(impl), use_overlay_(use_overlay) {}

    void add_pending(const Digest128& digest, std::vector<float> flat) {
        impl_.sketch_cache[digest] = std::move(flat);
    }

    void add_overlay_base(const CompatKey& key, const Digest128& digest) {
        overlay_[key].push_back(digest);
    }

    std::vector<BaseCandidate> candidates(const CompatKey& key, const Digest128& tensor,
                                          std::size_t k) override {
        std::vector<ScoredCandidate> scored;
        auto it = impl_.indexes.find(key);
        if (it != impl_.indexes.end())
            scored = it->second.query_flat(impl_.sketch_floats(tensor), k);
        if (use_overlay_) {
            if (auto ov = overlay_.find(key); ov != overlay_.end()) {
                const auto& flat = impl_.sketch_floats(tensor);
                for (const auto& b : ov->second)
                    scored.push_back(
                        {b, hamming_estimate(impl_.sketch_floats(b), flat, impl_.cfg.sketch)});
                std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
                    if (a.est_hamming != b.est_hamming) return a.est_hamming < b.est_hamming;
                    return a.digest < b.digest;
                });
                if (scored.size() > k) scored.resize(k);
            }
        }
        std::vector<BaseCandidate> out;
        out.reserve(scored.size());
        std::uint64_t n = 1;
        for (auto d : key.shape) n *= static_cast<std::uint64_t>(d);
        const double total =
            static_cast<double>(n) * static_cast<double>(bits_per_element(key.dtype));
        for (const auto& s : scored) {
            const double p_hat =
                total == 0 ? 0.0 : std::clamp(s.est_hamming / total, 0.0, 1.0);
            out.push_back({s.digest, s.est_hamming,
                           predict_ratio(p_hat, impl_.active_coeffs())});
        }
        return out;
    }

    double predicted_ratio(const Digest128& target, const Digest128& base) override {
        const Cluster* c = impl_.plan.cluster_of(base);
        if (!c) throw StoreError("predicted_ratio on unknown base " + base.hex());
        return predict_ratio(impl_.pair_p_hat(target, base, c->key), impl_.active_coeffs());
    }

  private:
    Store::Impl& impl_;
    bool use_overlay_;
    std::map<CompatKey, std::vector<Digest128>> overlay_;
};

}  // namespace

// ---- store public api ----

Store::Store() : impl_(std::make_unique<Impl>()) {}
Store::~Store() = default;
Store::Store(Store&&) noexcept = default;
Store& Store::operator=(Store&&) noexcept = default;

Store Store::create(const std::string& dirname, const EngineConfig& config) {
    fs::path dir(dirname);
    if (fs::exists(dir / "meta.db")) throw StoreError("store already exists at " + dirname);
    fs::create_directories(dir / "sketches");
    fs::create_directories(dir / "blobs");

    Store s;
    s.impl_->dir = dir;
    s.impl_->db = std::make_unique<Db>((dir / "meta.db").string());
    s.impl_->db->exec(kSchema);
    {
        Transaction tx(*s.impl_->db);
        Stmt put(*s.impl_->db, "INSERT INTO config(key,value) VALUES('engine',?)");
        put.bind(1, config.to_text());
        put.run();
        Stmt coeffs(*s.impl_->db,
                    "INSERT INTO coeffs(codec,alpha,beta,gamma,epsilon,corpus_digest) "
                    "VALUES(?,?,?,?,?,?)");
        const auto tx_c = default_coefficients_tensorx();
        coeffs.bind(1, std::int64_t(static_cast<std::uint8_t>(CodecId::TENSORX)))
            .bind(2, tx_c.alpha).bind(3, tx_c.beta).bind(4, tx_c.gamma)
            .bind(5, tx_c.epsilon).bind(6, std::string("builtin"));
        coeffs.run();
        const auto fm_c = default_coefficients_fmpp();
        coeffs.bind(1, std::int64_t(static_cast<std::uint8_t>(CodecId::FMPP)))
            .bind(2, fm_c.alpha).bind(3, fm_c.beta).bind(4, fm_c.gamma)
            .bind(5, fm_c.epsilon).bind(6, std::string("builtin"));
        coeffs.run();
        tx.commit();
    }
    s.impl_->load_state();
    return s;
}

Store Store::open(const std::string& dirname) {
    fs::path dir(dirname);
    if (!fs::exists(dir / "meta.db")) throw NotFoundError("no store at " + dirname);
    Store s;
    s.impl_->dir = dir;
    s.impl_->db = std::make_unique<Db>((dir / "meta.db").string());
    s.impl_->db->exec(kSchema);
    s.impl_->load_state();
    return s;
}

const EngineConfig& Store::config() const { return impl_->cfg; }
const Planner& Store::planner() const { return impl_->plan; }

IngestReport Store::ingest_model(const std::string& model_id,
                                 std::span<const std::uint8_t> file_bytes) {
    Impl& im = *impl_;
    {
        Stmt q(*im.db, "SELECT 1 FROM models WHERE model_id=?");
        q.bind(1, model_id);
        if (q.step()) throw StoreError("model \"" + model_id + "\" already ingested");
    }

    IngestReport report;
    report.model_id = model_id;

    try {
        const auto views = parse_model(file_bytes);

        struct NewRow {
            Digest128 digest;
            DType dtype;
            std::vector<std::int64_t> shape;
            std::uint64_t raw_bytes;
            CodecId codec;
            Digest128 base;
            std::string blob_path;
            std::uint64_t blob_bytes;
            std::int64_t cluster_id;  // -1 = none (standalone mode)
            bool is_base;
            double predicted;
            double measured;
            bool has_sketch;
        };
        std::vector<NewRow> rows;
        std::unordered_set<Digest128, Digest128Hash> seen_now;
        // Bases can come from this very batch (not yet committed); their
        // bytes live in `views` for the whole ingest.
        std::unordered_map<Digest128, std::span<const std::uint8_t>, Digest128Hash> batch_bytes;
        StoreOracle oracle(im, false);

        for (const auto& v : views) {
            const Digest128 digest = tensor_digest(v.bytes);
            report.raw_bytes += v.bytes.size();

            IngestTensorReport tr;
            tr.name = v.name;
            tr.digest = digest;
            tr.raw_bytes = v.bytes.size();

            bool exists = seen_now.contains(digest);
            if (!exists) {
                Stmt q(*im.db, "SELECT 1 FROM tensors WHERE tensor_id=?");
                q.bind(1, digest);
                exists = q.step();
            }
            if (exists) {
                tr.action = "dedup";
                ++report.dedup_count;
                report.tensors.push_back(std::move(tr));
                continue;
            }
            seen_now.insert(digest);

            NewRow row;
            row.digest = digest;
            row.dtype = v.dtype;
            row.shape = v.shape;
            row.raw_bytes = v.bytes.size();
            row.cluster_id = -1;
            row.is_base = false;
            row.predicted = 0;
            row.measured = 0;
            row.has_sketch = false;

            DeltaBlob blob;
            if (im.cfg.standalone_only) {
                blob = im.encode_base(v.bytes, v.dtype);
                tr.action = blob.codec == CodecId::RAW ? "store_raw" : "store_base";
            } else {
                Sketch sk = compute_sketch(v, im.cfg.sketch, im.cfg.effective_workers());
                oracle.add_pending(digest, sketch_to_floats(sk));
                write_file_atomic(im.dir / sketch_rel_path(digest), serialize_sketch(sk));
                row.has_sketch = true;

                const CompatKey key{v.dtype, v.shape};
                PlanDelta pd = im.plan.assign({digest, key, v.bytes.size()}, oracle);
                if (pd.actions.empty())
                    throw StoreError("planner produced no action for new tensor");
                const PlanAction& act = pd.actions.front();
                row.cluster_id = static_cast<std::int64_t>(act.cluster_id);

                if (act.kind == PlanAction::Kind::StoreBase) {
                    blob = im.encode_base(v.bytes, v.dtype);
                    row.is_base = true;
                    im.index_for(key).add_flat(digest, im.sketch_floats(digest));
                    tr.action = "store_base";
                } else {
                    std::span<const std::uint8_t> base_bytes;
                    std::shared_ptr<std::vector<std::uint8_t>> keep;
                    if (auto it = batch_bytes.find(act.base); it != batch_bytes.end()) {
                        base_bytes = it->second;
                    } else {
                        keep = im.load_raw(act.base);
                        base_bytes = *keep;
                    }
                    blob = im.encode_delta(v.bytes, base_bytes, v.dtype);
                    row.predicted = act.predicted_ratio;
                    tr.action = blob.codec == CodecId::RAW ? "store_raw" : "store_delta";
                    tr.base = act.base;
                    tr.predicted_ratio = act.predicted_ratio;
                }
            }

            row.codec = blob.codec;
            row.base = is_delta_codec(blob.codec) ? blob.base_digest : Digest128{};
            auto [path, bytes] = im.write_blob_file(digest, blob, v.shape, v.bytes.size());
            row.blob_path = path;
            row.blob_bytes = bytes;
            row.measured =
                v.bytes.empty() ? 0.0
                                : std::max(0.0, 1.0 - static_cast<double>(bytes) /
                                                     static_cast<double>(v.bytes.size()));
            tr.stored_bytes = bytes;
            tr.measured_ratio = row.measured;
            report.stored_bytes += bytes;
            report.tensors.push_back(std::move(tr));
            rows.push_back(std::move(row));
            batch_bytes.emplace(digest, v.bytes);
        }

        // Metadata commit: all-or-nothing per model.
        Transaction tx(*im.db);
        {
            Stmt ins(*im.db, "INSERT INTO models(model_id, raw_bytes) VALUES(?,?)");
            ins.bind(1, model_id).bind(2, static_cast<std::int64_t>(report.raw_bytes));
            ins.run();
        }
        {
            Stmt ins(*im.db,
                     "INSERT INTO manifest(model_id, ord, tensor_name, tensor_id) "
                     "VALUES(?,?,?,?)");
            for (std::size_t i = 0; i < views.size(); ++i) {
                ins.bind(1, model_id)
                    .bind(2, static_cast<std::int64_t>(i))
                    .bind(3, views[i].name)
                    .bind(4, report.tensors[i].digest);
                ins.run();
            }
        }
        {
            Stmt ins(*im.db,
                     "INSERT INTO tensors(tensor_id, dtype, shape, raw_bytes, codec, base_id, "
                     "blob_path, blob_bytes, cluster_id, is_base, predicted_ratio, "
                     "measured_ratio) VALUES(?,?,?,?,?,?,?,?,?,?,?,?)");
            for (const auto& r : rows) {
                ins.bind(1, r.digest)
                    .bind(2, std::int64_t(static_cast<std::uint8_t>(r.dtype)))
                    .bind(3, shape_to_string(r.shape))
                    .bind(4, static_cast<std::int64_t>(r.raw_bytes))
                    .bind(5, std::int64_t(static_cast<std::uint8_t>(r.codec)));
                if (r.base.is_zero()) ins.bind_null(6); else ins.bind(6, r.base);
                ins.bind(7, r.blob_path).bind(8, static_cast<std::int64_t>(r.blob_bytes));
                if (r.cluster_id < 0) ins.bind_null(9); else ins.bind(9, r.cluster_id);
                ins.bind(10, std::int64_t(r.is_base ? 1 : 0))
                    .bind(11, r.predicted)
                    .bind(12, r.measured);
                ins.run();
            }
        }
        tx.commit();
    } catch (...) {
        // Planner / index state may be ahead of the (rolled back) metadata;
        // rebuild from the committed rows. Orphan blob files are harmless.
        im.load_state();
        throw;
    }

    const StoreStats st = stats();
    report.cumulative_reduction = st.reduction;
    return report;
}

PlanDelta Store::plan_model(std::span<const std::uint8_t> file_bytes) {
    Impl& im = *impl_;
    const auto views = parse_model(file_bytes);

    Planner saved = im.plan;  // restore after the dry run
    PlanDelta total;
    StoreOracle oracle(im, true);
    try {
        std::unordered_set<Digest128, Digest128Hash> seen_now;
        for (const auto& v : views) {
            const Digest128 digest = tensor_digest(v.bytes);
            if (seen_now.contains(digest) || im.plan.contains(digest)) continue;
            {
                Stmt q(*im.db, "SELECT 1 FROM tensors WHERE tensor_id=?");
                q.bind(1, digest);
                if (q.step()) continue;
            }
            seen_now.insert(digest);
            Sketch sk = compute_sketch(v, im.cfg.sketch, im.cfg.effective_workers());
            oracle.add_pending(digest, sketch_to_floats(sk));
            const CompatKey key{v.dtype, v.shape};
            PlanDelta pd = im.plan.assign({digest, key, v.bytes.size()}, oracle);
            for (const auto& a : pd.actions)
                if (a.kind == PlanAction::Kind::StoreBase) oracle.add_overlay_base(key, a.tensor);
            total.actions.insert(total.actions.end(), pd.actions.begin(), pd.actions.end());
        }
    } catch (...) {
        im.plan = std::move(saved);
        throw;
    }
    im.plan = std::move(saved);
    return total;
}

std::vector<std::uint8_t> Store::retrieve_model(const std::string& model_id) {
    Impl& im = *impl_;
    {
        Stmt q(*im.db, "SELECT 1 FROM models WHERE model_id=?");
        q.bind(1, model_id);
        if (!q.step()) throw NotFoundError("unknown model \"" + model_id + "\"");
    }

    struct Entry {
        std::string name;
        Digest128 digest;
    };
    std::vector<Entry> entries;
    {
        // Canonical order: sorted tensor names.
        Stmt q(*im.db,
               "SELECT tensor_name, tensor_id FROM manifest WHERE model_id=? "
               "ORDER BY tensor_name");
        q.bind(1, model_id);
        while (q.step()) entries.push_back({q.col_text(0), q.col_digest(1)});
    }

    std::vector<std::shared_ptr<std::vector<std::uint8_t>>> buffers;
    std::vector<TensorView> views;
    for (const auto& e : entries) {
        Stmt q(*im.db, "SELECT dtype, shape FROM tensors WHERE tensor_id=?");
        q.bind(1, e.digest);
        if (!q.step()) throw IntegrityError("manifest references missing tensor " + e.digest.hex());
        const DType dtype = dtype_from_code(static_cast<std::uint8_t>(q.col_i64(0)));
        const auto shape = shape_from_string(q.col_text(1));
        auto raw = im.load_raw(e.digest);
        buffers.push_back(raw);
        TensorView v;
        v.name = e.name;
        v.dtype = dtype;
        v.shape = shape;
        v.bytes = {raw->data(), raw->size()};
        views.push_back(std::move(v));
    }
    return write_model(views);
}

void Store::verify_model(const std::string& model_id) {
    Impl& im = *impl_;
    {
        Stmt q(*im.db, "SELECT 1 FROM models WHERE model_id=?");
        q.bind(1, model_id);
        if (!q.step()) throw NotFoundError("unknown model \"" + model_id + "\"");
    }
    Stmt q(*im.db, "SELECT tensor_id FROM manifest WHERE model_id=?");
    q.bind(1, model_id);
    while (q.step()) im.load_raw(q.col_digest(0));  // digest-checked inside
}

std::vector<std::string> Store::list_models() const {
    std::vector<std::string> out;
    Stmt q(*impl_->db, "SELECT model_id FROM models ORDER BY model_id");
    while (q.step()) out.push_back(q.col_text(0));
    return out;
}

std::vector<ScoredCandidate> Store::query_candidates(const Sketch& sketch,
                                                     const CompatKey& key,
                                                     std::size_t k) const {
    auto it = impl_->indexes.find(key);
    if (it == impl_->indexes.end()) return {};
    return it->second.query(sketch, k);
}

RefineReport Store::refine() {
    Impl& im = *impl_;
    RefineReport report;
    {
        Stmt q(*im.db, "SELECT COALESCE(SUM(blob_bytes),0) FROM tensors");
        q.step();
        report.stored_bytes_before = static_cast<std::uint64_t>(q.col_i64(0));
    }

    std::map<std::uint64_t, double> before;
    for (const auto& [id, c] : im.plan.clusters())
        if (im.plan.should_split(c)) before[id] = cluster_reduction_ratio(c);

    try {
        StoreOracle oracle(im, false);
        ++im.generation;
        PlanDelta pd = im.plan.refine(oracle);

        struct Update {
            Digest128 digest;
            CodecId codec;
            Digest128 base;
            std::string blob_path;
            std::uint64_t blob_bytes;
            bool is_base;
            double predicted;
            double measured;
        };
        std::vector<Update> updates;
        std::map<std::uint64_t, std::size_t> promotions;

        for (const auto& act : pd.actions) {
            const Cluster* cl = im.plan.cluster_of(act.tensor);
            if (!cl) throw StoreError("refine action on unknown tensor");
            Stmt q(*im.db, "SELECT dtype, shape, raw_bytes FROM tensors WHERE tensor_id=?");
            q.bind(1, act.tensor);
            if (!q.step()) throw StoreError("refine action on uncommitted tensor");
            const DType dtype = dtype_from_code(static_cast<std::uint8_t>(q.col_i64(0)));
            const auto shape = shape_from_string(q.col_text(1));
            const auto raw_len = static_cast<std::uint64_t>(q.col_i64(2));

            auto raw = im.load_raw(act.tensor);
            Update u;
            u.digest = act.tensor;
            if (act.kind == PlanAction::Kind::PromoteToBase) {
                // Rematerialize the member as a full (standalone) base.
                DeltaBlob blob = im.encode_base(*raw, dtype);
                auto [path, bytes] = im.write_blob_file(act.tensor, blob, shape, raw_len);
                u.codec = blob.codec;
                u.base = {};
                u.blob_path = path;
                u.blob_bytes = bytes;
                u.is_base = true;
                u.predicted = 0;
                u.measured = raw_len == 0 ? 0.0
                                          : std::max(0.0, 1.0 - double(bytes) / double(raw_len));
                im.index_for(cl->key).add_flat(act.tensor, im.sketch_floats(act.tensor));
                ++promotions[act.cluster_id];
            } else if (act.kind == PlanAction::Kind::Reassign) {
                auto base_raw = im.load_raw(act.base);
                DeltaBlob blob = im.encode_delta(*raw, *base_raw, dtype);
                auto [path, bytes] = im.write_blob_file(act.tensor, blob, shape, raw_len);
                u.codec = blob.codec;
                u.base = is_delta_codec(blob.codec) ? act.base : Digest128{};
                u.blob_path = path;
                u.blob_bytes = bytes;
                u.is_base = false;
                u.predicted = act.predicted_ratio;
                u.measured = raw_len == 0 ? 0.0
                                          : std::max(0.0, 1.0 - double(bytes) / double(raw_len));
            } else {
                throw StoreError("unexpected action kind in refine plan");
            }
            updates.push_back(std::move(u));
        }

        Transaction tx(*im.db);
        {
            Stmt upd(*im.db,
                     "UPDATE tensors SET codec=?, base_id=?, blob_path=?, blob_bytes=?, "
                     "is_base=?, predicted_ratio=?, measured_ratio=? WHERE tensor_id=?");
            for (const auto& u : updates) {
                upd.bind(1, std::int64_t(static_cast<std::uint8_t>(u.codec)));
                if (u.base.is_zero()) upd.bind_null(2); else upd.bind(2, u.base);
                upd.bind(3, u.blob_path)
                    .bind(4, static_cast<std::int64_t>(u.blob_bytes))
                    .bind(5, std::int64_t(u.is_base ? 1 : 0))
                    .bind(6, u.predicted)
                    .bind(7, u.measured)
                    .bind(8, u.digest);
                upd.run();
            }
        }
        im.persist_generation(tx);
        tx.commit();

        for (const auto& [id, ratio_before] : before) {
            const Cluster& c = im.plan.clusters().at(id);
            RefineClusterReport r;
            r.cluster_id = id;
            r.ratio_before = ratio_before;
            r.ratio_after = cluster_reduction_ratio(c);
            r.promotions = promotions.contains(id) ? promotions[id] : 0;
            report.clusters.push_back(r);
        }
    } catch (...) {
        im.load_state();
        throw;
    }

    {
        Stmt q(*im.db, "SELECT COALESCE(SUM(blob_bytes),0) FROM tensors");
        q.step();
        report.stored_bytes_after = static_cast<std::uint64_t>(q.col_i64(0));
    }
    return report;
}

StoreStats Store::stats() const {
    Impl& im = *impl_;
    StoreStats st;
    {
        Stmt q(*im.db, "SELECT COALESCE(SUM(raw_bytes),0), COUNT(*) FROM models");
        q.step();
        st.raw_bytes = static_cast<std::uint64_t>(q.col_i64(0));
        st.model_count = static_cast<std::size_t>(q.col_i64(1));
    }
    {
        Stmt q(*im.db, "SELECT COUNT(*) FROM manifest");
        q.step();
        st.tensor_count = static_cast<std::size_t>(q.col_i64(0));
    }
    {
        Stmt q(*im.db, "SELECT COALESCE(SUM(blob_bytes),0), COUNT(*) FROM tensors");
        q.step();
        st.stored_bytes = static_cast<std::uint64_t>(q.col_i64(0));
        st.unique_tensors = static_cast<std::size_t>(q.col_i64(1));
    }
    st.dedup_count = st.tensor_count - st.unique_tensors;
    st.reduction = st.raw_bytes == 0
                       ? 0.0
                       : 1.0 - static_cast<double>(st.stored_bytes) /
                                   static_cast<double>(st.raw_bytes);

    // Sketch files plus one 16-byte digest per unique tensor.
    std::uint64_t sketch_bytes = 0;
    const fs::path sdir = im.dir / "sketches";
    if (fs::exists(sdir))
        for (const auto& e : fs::directory_iterator(sdir))
            if (e.is_regular_file()) sketch_bytes += e.file_size();
    st.metadata_bytes = sketch_bytes + 16ull * st.unique_tensors;
    st.metadata_overhead = st.raw_bytes == 0
                               ? 0.0
                               : static_cast<double>(st.metadata_bytes) /
                                     static_cast<double>(st.raw_bytes);

    for (const auto& [id, c] : im.plan.clusters())
        st.cluster_ratios[id] = cluster_reduction_ratio(c);
    return st;
}

void Store::save_coefficients(CodecId codec, const PredictorCoefficients& c,
                              const std::string& corpus_digest) {
    if (!is_delta_codec(codec)) throw StoreError("coefficients are per delta codec");
    Transaction tx(*impl_->db);
    Stmt upd(*impl_->db,
             "INSERT INTO coeffs(codec,alpha,beta,gamma,epsilon,corpus_digest) "
             "VALUES(?,?,?,?,?,?) ON CONFLICT(codec) DO UPDATE SET alpha=excluded.alpha, "
             "beta=excluded.beta, gamma=excluded.gamma, epsilon=excluded.epsilon, "
             "corpus_digest=excluded.corpus_digest");
    upd.bind(1, std::int64_t(static_cast<std::uint8_t>(codec)))
        .bind(2, c.alpha).bind(3, c.beta).bind(4, c.gamma).bind(5, c.epsilon)
        .bind(6, corpus_digest);
    upd.run();
    tx.commit();
    if (codec == CodecId::TENSORX) impl_->coeffs_tx = c; else impl_->coeffs_fmpp = c;
}

PredictorCoefficients Store::coefficients(CodecId codec) const {
    return codec == CodecId::TENSORX ? impl_->coeffs_tx : impl_->coeffs_fmpp;
}

std::string resolve_store_path(const std::string& cli_arg) {
    if (!cli_arg.empty()) return cli_arg;
    if (const char* env = std::getenv("TH_STORE"); env && *env) return env;
    return "./th-store";
}

}  // namespace tensorhub
