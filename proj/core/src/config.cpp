#include "tensorhub/config.hpp"

#include <fstream>
#include <sstream>

#include "tensorhub/errors.hpp"
#include "tensorhub/parallel.hpp"

namespace tensorhub {

unsigned EngineConfig::effective_workers() const {
    return workers ? workers : default_workers();
}

std::string EngineConfig::to_text() const {
    std::ostringstream out;
    out << "codec=" << codec_name(codec) << '\n'
        << "sketch_depth=" << unsigned(sketch.depth) << '\n'
        << "sketch_width=" << sketch.width << '\n'
        << "sketch_seed=" << sketch.seed << '\n'
        << "theta_min=" << planner.theta_min << '\n'
        << "candidate_margin=" << planner.candidate_margin << '\n'
        << "min_split_size=" << planner.min_split_size << '\n'
        << "split_ratio_trigger=" << planner.split_ratio_trigger << '\n'
        << "candidate_k=" << planner.candidate_k << '\n'
        << "workers=" << workers << '\n'
        << "chunk_elements=" << chunk_elements << '\n'
        << "refine_cadence=" << refine_cadence << '\n'
        << "compress_bases=" << (compress_bases ? "true" : "false") << '\n'
        << "standalone_only=" << (standalone_only ? "true" : "false") << '\n'
        << "index_mode=" << index_mode << '\n';
    return out.str();
}

EngineConfig EngineConfig::from_text(const std::string& text) {
    EngineConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        // Trim.
        while (!line.empty() && (line.back() == ' ' || line.back() == '\r' || line.back() == '\t'))
            line.pop_back();
        std::size_t start = line.find_first_not_of(" \t");
        if (start == std::string::npos) continue;
        line = line.substr(start);

        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw FormatError("config line " + std::to_string(lineno) + ": expected key=value");
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        auto as_bool = [&] {
            if (value == "true" || value == "1") return true;
            if (value == "false" || value == "0") return false;
            throw FormatError("config key " + key + ": expected boolean, got \"" + value + "\"");
        };
        try {
            if (key == "codec") cfg.codec = codec_from_string(value);
            else if (key == "sketch_depth") cfg.sketch.depth = static_cast<std::uint8_t>(std::stoul(value));
            else if (key == "sketch_width") cfg.sketch.width = static_cast<std::uint32_t>(std::stoul(value));
            else if (key == "sketch_seed") cfg.sketch.seed = std::stoull(value);
            else if (key == "theta_min") cfg.planner.theta_min = std::stod(value);
            else if (key == "candidate_margin") cfg.planner.candidate_margin = std::stod(value);
            else if (key == "min_split_size") cfg.planner.min_split_size = std::stoul(value);
            else if (key == "split_ratio_trigger") cfg.planner.split_ratio_trigger = std::stod(value);
            else if (key == "candidate_k") cfg.planner.candidate_k = std::stoul(value);
            else if (key == "workers") cfg.workers = static_cast<unsigned>(std::stoul(value));
            else if (key == "chunk_elements") cfg.chunk_elements = static_cast<std::uint32_t>(std::stoul(value));
            else if (key == "refine_cadence") cfg.refine_cadence = std::stoul(value);
            else if (key == "compress_bases") cfg.compress_bases = as_bool();
            else if (key == "standalone_only") cfg.standalone_only = as_bool();
            else if (key == "index_mode") {
                if (value != "auto" && value != "linear" && value != "graph")
                    throw FormatError("index_mode must be auto, linear, or graph");
                cfg.index_mode = value;
            } else {
                throw FormatError("unknown config key \"" + key + "\"");
            }
        } catch (const std::invalid_argument&) {
            throw FormatError("config key " + key + ": bad value \"" + value + "\"");
        }
    }
    cfg.sketch.validate();
    return cfg;
}

EngineConfig EngineConfig::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw StoreError("cannot read config file " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return from_text(buf.str());
}

}  // namespace tensorhub
