#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "helpers.hpp"
#include "tensorhub/errors.hpp"
#include "tensorhub/store.hpp"

using namespace tensorhub;
using namespace th_test;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("th-test-" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    std::string store() const { return (path / "store").string(); }
};

// A small two-tensor model; name order is canonical (sorted) so retrieval
// reproduces the file byte-exactly.
std::vector<std::uint8_t> small_model(std::uint64_t seed, float noise = 0.0f) {
    auto w = gaussian_f32(4096, seed);
    if (noise > 0) w = add_noise_f32(std::move(w), noise, seed + 1000);
    const auto b = gaussian_f32(64, seed + 1);
    return write_model({view_of("layer.bias", DType::F32, {64}, b),
                        view_of("layer.weight", DType::F32, {64, 64}, w)});
}

std::uint64_t blob_bytes_on_disk(const std::string& store_dir) {
    std::uint64_t total = 0;
    const fs::path blobs = fs::path(store_dir) / "blobs";
    if (!fs::exists(blobs)) return 0;
    for (const auto& e : fs::recursive_directory_iterator(blobs))
        if (e.is_regular_file()) total += e.file_size();
    return total;
}

}  // namespace

TEST_SUITE("store") {

TEST_CASE("create, open, and double-create") {
    TempDir tmp;
    { Store::create(tmp.store(), {}); }
    CHECK_THROWS_AS(Store::create(tmp.store(), {}), StoreError);
    Store s = Store::open(tmp.store());
    CHECK(s.config().codec == CodecId::FMPP);
    CHECK_THROWS_AS(Store::open((tmp.path / "missing").string()), NotFoundError);
}

TEST_CASE("ingest then retrieve is byte-exact") {
    TempDir tmp;
    Store s = Store::create(tmp.store(), {});
    const auto model = small_model(1);
    const IngestReport r = s.ingest_model("m1", model);
    CHECK(r.raw_bytes == 4096 * 4 + 64 * 4);
    CHECK(r.tensors.size() == 2);
    CHECK(s.retrieve_model("m1") == model);
    CHECK(s.list_models() == std::vector<std::string>{"m1"});

    CHECK_THROWS_AS(s.ingest_model("m1", model), StoreError);  // duplicate id
    CHECK_THROWS_AS(s.retrieve_model("nope"), NotFoundError);
}

TEST_CASE("identical corpus re-ingest adds zero blob bytes") {
    TempDir tmp;
    Store s = Store::create(tmp.store(), {});
    s.ingest_model("m1", small_model(2));
    const auto before = blob_bytes_on_disk(tmp.store());
    const IngestReport r = s.ingest_model("m2", small_model(2));
    CHECK(r.dedup_count == 2);
    CHECK(r.stored_bytes == 0);
    CHECK(blob_bytes_on_disk(tmp.store()) == before);
    CHECK(s.retrieve_model("m2") == s.retrieve_model("m1"));
}

TEST_CASE("near-duplicate lands as a delta and reconstructs exactly") {
    TempDir tmp;
    Store s = Store::create(tmp.store(), {});
    s.ingest_model("base", small_model(3));
    const auto variant = small_model(3, 1e-6f);
    const IngestReport r = s.ingest_model("variant", variant);

    bool saw_delta = false;
    for (const auto& t : r.tensors)
        if (t.action == "store_delta") {
            saw_delta = true;
            CHECK(t.stored_bytes < t.raw_bytes / 2);
            CHECK(t.predicted_ratio > 0.3);
        }
    CHECK(saw_delta);
    CHECK(s.retrieve_model("variant") == variant);
    s.verify_model("variant");
}

TEST_CASE("tampered blob fails verification") {
    TempDir tmp;
    Store s = Store::create(tmp.store(), {});
    s.ingest_model("m1", small_model(4));
    s.verify_model("m1");

    // Flip one byte in the largest blob payload.
    fs::path victim;
    std::uintmax_t best = 0;
    for (const auto& e : fs::recursive_directory_iterator(fs::path(tmp.store()) / "blobs"))
        if (e.is_regular_file() && e.file_size() > best) {
            best = e.file_size();
            victim = e.path();
        }
    REQUIRE(!victim.empty());
    {
        std::fstream f(victim, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(-1, std::ios::end);
        char c;
        f.seekg(-1, std::ios::end);
        f.get(c);
        f.seekp(-1, std::ios::end);
        f.put(static_cast<char>(c ^ 1));
    }
    Store fresh = Store::open(tmp.store());
    CHECK_THROWS_AS(fresh.verify_model("m1"), Error);
}

TEST_CASE("stats agree with the filesystem") {
    TempDir tmp;
    Store s = Store::create(tmp.store(), {});
    s.ingest_model("m1", small_model(5));
    s.ingest_model("m2", small_model(5, 1e-6f));
    s.ingest_model("m3", small_model(6));

    const StoreStats st = s.stats();
    CHECK(st.model_count == 3);
    CHECK(st.tensor_count == 6);
    CHECK(st.stored_bytes == blob_bytes_on_disk(tmp.store()));
    CHECK(st.reduction ==
          doctest::Approx(1.0 - double(st.stored_bytes) / double(st.raw_bytes)));

    // metadata = sketch files + one 16-byte digest per unique tensor.
    std::uint64_t sketch_bytes = 0;
    for (const auto& e : fs::directory_iterator(fs::path(tmp.store()) / "sketches"))
        if (e.is_regular_file()) sketch_bytes += e.file_size();
    CHECK(st.metadata_bytes == sketch_bytes + 16 * st.unique_tensors);
}

TEST_CASE("plan is a dry run") {
    TempDir tmp;
    Store s = Store::create(tmp.store(), {});
    s.ingest_model("m1", small_model(7));
    const auto disk_before = blob_bytes_on_disk(tmp.store());
    const auto models_before = s.list_models();

    const auto next = small_model(7, 1e-6f);
    const PlanDelta pd = s.plan_model(next);
    CHECK_FALSE(pd.empty());
    bool planned_delta = false;
    for (const auto& a : pd.actions)
        if (a.kind == PlanAction::Kind::StoreDelta) planned_delta = true;
    CHECK(planned_delta);

    CHECK(blob_bytes_on_disk(tmp.store()) == disk_before);
    CHECK(s.list_models() == models_before);

    // The real ingest then matches the dry run's shape.
    const IngestReport r = s.ingest_model("m2", next);
    bool stored_delta = false;
    for (const auto& t : r.tensors)
        if (t.action == "store_delta") stored_delta = true;
    CHECK(stored_delta == planned_delta);
}

TEST_CASE("refine splits a heterogeneous cluster and keeps losslessness") {
    TempDir tmp;
    EngineConfig cfg;
    cfg.planner.min_split_size = 6;
    cfg.planner.theta_min = 0.01;  // force both families into one cluster
    Store s = Store::create(tmp.store(), cfg);

    // Two divergent families sharing one CompatKey.
    const auto fam_a = gaussian_f32(8192, 100);
    const auto fam_b = gaussian_f32(8192, 200);
    std::vector<std::vector<std::uint8_t>> files;
    for (int i = 0; i < 4; ++i) {
        auto va = add_noise_f32(fam_a, 1e-6f, 300 + i);
        files.push_back(write_model({view_of("w", DType::F32, {8192}, va)}));
        s.ingest_model("a" + std::to_string(i), files.back());
    }
    for (int i = 0; i < 4; ++i) {
        auto vb = add_noise_f32(fam_b, 1e-6f, 400 + i);
        files.push_back(write_model({view_of("w", DType::F32, {8192}, vb)}));
        s.ingest_model("b" + std::to_string(i), files.back());
    }

    const RefineReport rr = s.refine();
    for (const auto& c : rr.clusters)
        if (c.promotions > 0) CHECK(c.ratio_after > c.ratio_before);

    // Everything still reconstructs after the rewrite.
    for (int i = 0; i < 4; ++i) {
        CHECK(s.retrieve_model("a" + std::to_string(i)) == files[i]);
        CHECK(s.retrieve_model("b" + std::to_string(i)) == files[4 + i]);
    }
    Store reopened = Store::open(tmp.store());
    for (int i = 0; i < 4; ++i)
        CHECK(reopened.retrieve_model("b" + std::to_string(i)) == files[4 + i]);
}

TEST_CASE("standalone-only mode never links deltas") {
    TempDir tmp;
    EngineConfig cfg;
    cfg.standalone_only = true;
    Store s = Store::create(tmp.store(), cfg);
    s.ingest_model("m1", small_model(8));
    const IngestReport r = s.ingest_model("m2", small_model(8, 1e-6f));
    for (const auto& t : r.tensors) CHECK(t.action != "store_delta");
    CHECK(s.retrieve_model("m2") == small_model(8, 1e-6f));
}

TEST_CASE("failed ingest leaves committed state untouched") {
    TempDir tmp;
    Store s = Store::create(tmp.store(), {});
    s.ingest_model("m1", small_model(9));
    const StoreStats before = s.stats();

    std::vector<std::uint8_t> garbage = {0xde, 0xad, 0xbe, 0xef};
    CHECK_THROWS_AS(s.ingest_model("bad", garbage), FormatError);

    const StoreStats after = s.stats();
    CHECK(after.model_count == before.model_count);
    CHECK(after.stored_bytes == before.stored_bytes);
    CHECK(s.list_models() == std::vector<std::string>{"m1"});

    // The writer still works afterwards.
    s.ingest_model("m2", small_model(10));
    CHECK(s.list_models().size() == 2);
}

TEST_CASE("coefficients persist across reopen") {
    TempDir tmp;
    {
        Store s = Store::create(tmp.store(), {});
        s.save_coefficients(CodecId::FMPP, {-0.5, -0.1, 0.2, 0.9}, "corpus-123");
    }
    Store s = Store::open(tmp.store());
    const auto c = s.coefficients(CodecId::FMPP);
    CHECK(c.alpha == doctest::Approx(-0.5));
    CHECK(c.epsilon == doctest::Approx(0.9));
    // The other codec keeps its defaults.
    CHECK(s.coefficients(CodecId::TENSORX).epsilon ==
          doctest::Approx(default_coefficients_tensorx().epsilon));
}

TEST_CASE("store path resolution order") {
    CHECK(resolve_store_path("/explicit") == "/explicit");
    setenv("TH_STORE", "/from-env", 1);
    CHECK(resolve_store_path("") == "/from-env");
    CHECK(resolve_store_path("/explicit") == "/explicit");
    unsetenv("TH_STORE");
    CHECK(resolve_store_path("") == "./th-store");
}

}  // TEST_SUITE
