#include "qact/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <sstream>
#include <string>
#include <vector>

namespace qact::io {

namespace {

std::vector<std::string> tokenize(const std::string& line) {
    std::vector<std::string> tokens;
    std::istringstream is(line);
    std::string t;
    while (is >> t) {
        if (t.front() == '#') break;
        tokens.push_back(t);
    }
    return tokens;
}

[[noreturn]] void fail(int line_no, const std::string& msg) {
    throw ConfigError("line " + std::to_string(line_no) + ": " + msg);
}

std::int64_t parse_int(const std::string& tok, int line_no, const char* what,
                       std::int64_t lo, std::int64_t hi) {
    std::int64_t v = 0;
    const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc{} || ptr != tok.data() + tok.size()) {
        fail(line_no, std::string(what) + " expects an integer, got '" + tok + "'");
    }
    if (v < lo || v > hi) {
        fail(line_no, std::string(what) + " value " + std::to_string(v) + " outside [" +
                          std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
    return v;
}

double parse_real(const std::string& tok, int line_no, const char* what) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(tok, &pos);
        if (pos != tok.size() || !std::isfinite(v)) {
            fail(line_no, std::string(what) + " expects a finite number, got '" + tok + "'");
        }
        return v;
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception&) {
        fail(line_no, std::string(what) + " expects a number, got '" + tok + "'");
    }
}

void expect_argc(const std::vector<std::string>& toks, std::size_t n, int line_no) {
    if (toks.size() != n) {
        fail(line_no, "'" + toks[0] + "' expects " + std::to_string(n - 1) + " arguments, got " +
                          std::to_string(toks.size() - 1));
    }
}

} // namespace

net::NetworkConfig read_config(std::istream& in) {
    net::NetworkConfig cfg;
    std::vector<net::LayerSpec>* stream = nullptr;
    bool saw_input = false, saw_flow = false, saw_classes = false, saw_fusion = false;

    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto toks = tokenize(line);
        if (toks.empty()) continue;
        const std::string& kw = toks[0];

        if (kw == "input") {
            expect_argc(toks, 3, line_no);
            cfg.input_height = static_cast<int>(parse_int(toks[1], line_no, "input H", 1, 65535));
            cfg.input_width = static_cast<int>(parse_int(toks[2], line_no, "input W", 1, 65535));
            saw_input = true;
        } else if (kw == "flow") {
            expect_argc(toks, 3, line_no);
            cfg.flow_l = static_cast<int>(parse_int(toks[1], line_no, "flow L", 1, 1024));
            cfg.flow_bound = parse_real(toks[2], line_no, "flow bound");
            if (!(cfg.flow_bound > 0.0)) fail(line_no, "flow bound must be positive");
            saw_flow = true;
        } else if (kw == "classes") {
            expect_argc(toks, 2, line_no);
            cfg.class_count = parse_int(toks[1], line_no, "classes", 1, 1 << 20);
            saw_classes = true;
        } else if (kw == "stream") {
            expect_argc(toks, 2, line_no);
            if (toks[1] == "spatial") {
                stream = &cfg.spatial_layers;
            } else if (toks[1] == "temporal") {
                stream = &cfg.temporal_layers;
            } else {
                fail(line_no, "stream must be 'spatial' or 'temporal', got '" + toks[1] + "'");
            }
        } else if (kw == "conv" || kw == "pool" || kw == "fc") {
            if (stream == nullptr) {
                fail(line_no, "'" + kw + "' must appear after a 'stream' directive");
            }
            net::LayerSpec l;
            if (kw == "conv") {
                expect_argc(toks, 7, line_no);
                l.kind = net::LayerKind::fused_conv;
                l.in_ch = parse_int(toks[1], line_no, "conv IN", 1, 1 << 20);
                l.out_ch = parse_int(toks[2], line_no, "conv OUT", 1, 1 << 20);
                l.k = static_cast<int>(parse_int(toks[3], line_no, "conv K", 1, 4096));
                l.stride = static_cast<int>(parse_int(toks[4], line_no, "conv S", 1, 4096));
                l.padding = static_cast<int>(parse_int(toks[5], line_no, "conv P", 0, 4096));
                try {
                    l.activation = activation_from_string(toks[6]);
                } catch (const ConfigError& e) {
                    fail(line_no, e.what());
                }
            } else if (kw == "pool") {
                expect_argc(toks, 3, line_no);
                l.kind = net::LayerKind::maxpool;
                l.k = static_cast<int>(parse_int(toks[1], line_no, "pool K", 1, 4096));
                l.stride = static_cast<int>(parse_int(toks[2], line_no, "pool S", 1, 4096));
            } else {
                expect_argc(toks, 3, line_no);
                l.kind = net::LayerKind::fully_connected;
                l.in_ch = parse_int(toks[1], line_no, "fc IN", 1, 1 << 28);
                l.out_ch = parse_int(toks[2], line_no, "fc OUT", 1, 1 << 20);
            }
            stream->push_back(l);
        } else if (kw == "fusion") {
            if (toks.size() < 2) fail(line_no, "'fusion' expects a mode");
            if (toks[1] == "linear_concat") {
                expect_argc(toks, 2, line_no);
                cfg.fusion.mode = net::FusionMode::linear_concat;
            } else if (toks[1] == "weighted_sum") {
                expect_argc(toks, 4, line_no);
                cfg.fusion.mode = net::FusionMode::weighted_sum;
                cfg.fusion.alpha_spatial = parse_real(toks[2], line_no, "alpha_spatial");
                cfg.fusion.alpha_temporal = parse_real(toks[3], line_no, "alpha_temporal");
            } else {
                fail(line_no, "fusion mode must be 'linear_concat' or 'weighted_sum'");
            }
            saw_fusion = true;
        } else {
            fail(line_no, "unknown directive '" + kw + "'");
        }
    }

    if (!saw_input) throw ConfigError("config missing 'input H W'");
    if (!saw_flow) throw ConfigError("config missing 'flow L BOUND'");
    if (!saw_classes) throw ConfigError("config missing 'classes N'");
    if (!saw_fusion) throw ConfigError("config missing 'fusion' directive");

    net::validate_config(cfg);
    return cfg;
}

net::NetworkConfig read_config(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw Error("cannot open config file " + path.string());
    try {
        return read_config(f);
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

} // namespace qact::io
