#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "tensorhub/config.hpp"
#include "tensorhub/digest.hpp"
#include "tensorhub/planner.hpp"
#include "tensorhub/predictor.hpp"
#include "tensorhub/sketch_index.hpp"

namespace tensorhub {

struct IngestTensorReport {
    std::string name;
    Digest128 digest;
    std::string action;  // dedup | store_base | store_delta | store_raw
    Digest128 base;      // zero unless a delta
    std::uint64_t raw_bytes = 0;
    std::uint64_t stored_bytes = 0;  // 0 for dedup
    double predicted_ratio = 0;
    double measured_ratio = 0;
};

struct IngestReport {
    std::string model_id;
    std::uint64_t raw_bytes = 0;
    std::uint64_t stored_bytes = 0;
    std::size_t dedup_count = 0;
    std::vector<IngestTensorReport> tensors;
    double cumulative_reduction = 0;  // store-wide, after this model
};

struct RefineClusterReport {
    std::uint64_t cluster_id = 0;
    double ratio_before = 0;
    double ratio_after = 0;
    std::size_t promotions = 0;
};

struct RefineReport {
    std::vector<RefineClusterReport> clusters;
    std::uint64_t stored_bytes_before = 0;
    std::uint64_t stored_bytes_after = 0;
};

struct StoreStats {
    std::uint64_t raw_bytes = 0;
    std::uint64_t stored_bytes = 0;
    double reduction = 0;  // 1 - stored/raw
    std::size_t model_count = 0;
    std::size_t tensor_count = 0;    // manifest rows
    std::size_t unique_tensors = 0;  // distinct digests
    std::size_t dedup_count = 0;     // tensor_count - unique_tensors
    std::uint64_t metadata_bytes = 0;  // sketches + digests
    double metadata_overhead = 0;      // metadata_bytes / raw_bytes
    std::map<std::uint64_t, double> cluster_ratios;
};

// Persistent tensor store. Layout under the store directory:
//   meta.db      embedded transactional metadata store
//   sketches/    THSK files named by tensor digest
//   blobs/aa/bb/<digest>.thdx   safetensors-wrapped blob containers
//
// Concurrency contract: one writer (ingest/refine); chunk-level codec work
// fans out to a worker pool internally. Model ingest is all-or-nothing:
// blob files are written first, metadata commits atomically per model.
class Store {
  public:
    static Store create(const std::string& dir, const EngineConfig& config);
    static Store open(const std::string& dir);
    ~Store();
    Store(Store&&) noexcept;
    Store& operator=(Store&&) noexcept;

    IngestReport ingest_model(const std::string& model_id,
                              std::span<const std::uint8_t> file_bytes);

    // Phase I plan for a model without any writes (dry run).
    PlanDelta plan_model(std::span<const std::uint8_t> file_bytes);

    // Byte-exact reconstruction of the ingested payloads; headers are
    // re-emitted canonically (sorted tensor names, minimal JSON).
    std::vector<std::uint8_t> retrieve_model(const std::string& model_id);

    // Decodes every tensor of the model and checks digests.
    void verify_model(const std::string& model_id);

    std::vector<std::string> list_models() const;

    std::vector<ScoredCandidate> query_candidates(const Sketch& sketch,
                                                  const CompatKey& key,
                                                  std::size_t k) const;

    RefineReport refine();

    StoreStats stats() const;

    void save_coefficients(CodecId codec, const PredictorCoefficients& c,
                           const std::string& corpus_digest);
    PredictorCoefficients coefficients(CodecId codec) const;

    const EngineConfig& config() const;
    const Planner& planner() const;

    struct Impl;  // opaque; public so impl-side helpers can name it

  private:
    Store();
    std::unique_ptr<Impl> impl_;
};

// Resolves the store directory: explicit argument, else TH_STORE, else
// "./th-store".
std::string resolve_store_path(const std::string& cli_arg);

}  // namespace tensorhub
