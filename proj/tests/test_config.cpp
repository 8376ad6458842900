#include <doctest.h>

#include "tensorhub/config.hpp"
#include "tensorhub/errors.hpp"

using namespace tensorhub;

TEST_SUITE("config") {

TEST_CASE("defaults") {
    EngineConfig cfg;
    CHECK(cfg.codec == CodecId::FMPP);
    CHECK(cfg.sketch.depth == 2);
    CHECK(cfg.sketch.width == 1024);
    CHECK(cfg.planner.theta_min == doctest::Approx(0.05));
    CHECK(cfg.planner.candidate_margin == doctest::Approx(0.1));
    CHECK(cfg.planner.min_split_size == 8);
    CHECK(cfg.planner.split_ratio_trigger == doctest::Approx(0.6));
    CHECK(cfg.effective_workers() >= 1);
}

TEST_CASE("text round trip") {
    EngineConfig cfg;
    cfg.codec = CodecId::TENSORX;
    cfg.sketch.width = 2048;
    cfg.planner.min_split_size = 12;
    cfg.workers = 3;
    cfg.standalone_only = true;
    cfg.index_mode = "graph";

    const EngineConfig back = EngineConfig::from_text(cfg.to_text());
    CHECK(back.codec == CodecId::TENSORX);
    CHECK(back.sketch.width == 2048);
    CHECK(back.planner.min_split_size == 12);
    CHECK(back.workers == 3);
    CHECK(back.standalone_only);
    CHECK(back.index_mode == "graph");
}

TEST_CASE("comments and blank lines are skipped") {
    const EngineConfig cfg = EngineConfig::from_text(
        "# delta codec\n"
        "codec=tensorx   # inline comment\n"
        "\n"
        "  theta_min=0.2\n");
    CHECK(cfg.codec == CodecId::TENSORX);
    CHECK(cfg.planner.theta_min == doctest::Approx(0.2));
}

TEST_CASE("malformed input is rejected") {
    CHECK_THROWS_AS(EngineConfig::from_text("no_such_key=1\n"), FormatError);
    CHECK_THROWS_AS(EngineConfig::from_text("just a line\n"), FormatError);
    CHECK_THROWS_AS(EngineConfig::from_text("workers=many\n"), FormatError);
    CHECK_THROWS_AS(EngineConfig::from_text("compress_bases=maybe\n"), FormatError);
    CHECK_THROWS_AS(EngineConfig::from_text("index_mode=fancy\n"), FormatError);
    CHECK_THROWS_AS(EngineConfig::from_text("sketch_width=1000\n"), Error);  // not 2^k
    CHECK_THROWS_AS(EngineConfig::load_file("/nonexistent/config"), Error);
}

}  // TEST_SUITE
