#pragma once

#include <cstdint>
#include <string>

#include "tensorhub/codec.hpp"
#include "tensorhub/planner.hpp"
#include "tensorhub/sketch.hpp"

namespace tensorhub {

// Engine configuration. Persisted into the store at creation; sketch
// params are immutable thereafter (all stored sketches must stay
// comparable).
struct EngineConfig {
    CodecId codec = CodecId::FMPP;  // active delta codec
    SketchParams sketch;
    PlannerParams planner;
    unsigned workers = 0;  // 0 = available parallelism
    std::uint32_t chunk_elements = kDefaultChunkElements;
    std::size_t refine_cadence = 1;  // refine after every N ingested models
    bool compress_bases = true;      // byte-plane compress bases (vs RAW)
    bool standalone_only = false;    // disable delta pairing entirely
    std::string index_mode = "auto"; // auto | linear | graph

    unsigned effective_workers() const;

    // key=value text form (one pair per line, '#' comments).
    std::string to_text() const;
    static EngineConfig from_text(const std::string& text);
    static EngineConfig load_file(const std::string& path);
};

}  // namespace tensorhub
