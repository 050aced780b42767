#include <doctest.h>

#include <random>
#include <sstream>

#include "qact/config.hpp"
#include "qact/metrics.hpp"
#include "qact/netpbm.hpp"
#include "qact/weights.hpp"

using namespace qact;
using namespace qact::io;

namespace {

WeightSet random_weightset(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> byte(0, 255);
    std::uniform_int_distribution<std::int32_t> i32(-1000000, 1000000);
    std::uniform_real_distribution<double> scale(0.001f, 0.5f);

    WeightSet ws;
    const std::vector<std::vector<std::uint32_t>> shapes = {{4, 3, 3, 3}, {8, 4, 1, 1}, {5, 16}};
    const std::vector<RecordKind> kinds = {RecordKind::conv, RecordKind::conv,
                                           RecordKind::fully_connected};
    for (std::size_t i = 0; i < shapes.size(); ++i) {
        WeightRecord rec;
        rec.name = "layer." + std::to_string(i);
        rec.kind = kinds[i];
        rec.dims = shapes[i];
        rec.w_scale = static_cast<float>(scale(rng));
        rec.w_zero_point = byte(rng);
        rec.out_scale = static_cast<float>(scale(rng));
        rec.out_zero_point = byte(rng);
        rec.weights.resize(rec.weight_count());
        for (auto& w : rec.weights) w = static_cast<std::uint8_t>(byte(rng));
        rec.bias.resize(rec.dims[0]);
        for (auto& b : rec.bias) b = i32(rng);
        ws.records.push_back(std::move(rec));
    }
    return ws;
}

std::string serialize(const WeightSet& ws) {
    std::ostringstream os(std::ios::binary);
    write_weights(ws, os);
    return os.str();
}

const char* kValidConfig = R"(# comment line
input 8 8
flow 1 20
classes 5

stream spatial
conv 3 4 3 1 1 relu
pool 2 2
conv 4 6 3 1 1 leaky_relu_0p1
fc 96 8

stream temporal
conv 2 4 3 1 1 relu
pool 2 2
conv 4 6 3 1 1 relu
fc 96 8

fusion linear_concat
)";

} // namespace

TEST_CASE("weight file round trip") {
    std::mt19937_64 rng(71);
    const WeightSet ws = random_weightset(rng);
    const std::string bytes = serialize(ws);

    std::istringstream is(bytes, std::ios::binary);
    const WeightSet back = read_weights(is);
    REQUIRE(back.records.size() == ws.records.size());
    for (std::size_t i = 0; i < ws.records.size(); ++i) {
        const auto& a = ws.records[i];
        const auto& b = back.records[i];
        CHECK(a.name == b.name);
        CHECK(a.kind == b.kind);
        CHECK(a.dims == b.dims);
        CHECK(a.w_scale == b.w_scale);
        CHECK(a.w_zero_point == b.w_zero_point);
        CHECK(a.out_scale == b.out_scale);
        CHECK(a.out_zero_point == b.out_zero_point);
        CHECK(a.weights == b.weights);
        CHECK(a.bias == b.bias);
    }

    // write . read . write is byte-identical.
    CHECK(serialize(back) == bytes);
}

TEST_CASE("weight file error taxonomy") {
    std::mt19937_64 rng(73);
    const WeightSet ws = random_weightset(rng);
    const std::string bytes = serialize(ws);

    SUBCASE("bad magic") {
        std::string bad = bytes;
        bad[0] = 'X';
        std::istringstream is(bad, std::ios::binary);
        CHECK_THROWS_AS(read_weights(is), BadMagicError);
    }
    SUBCASE("version mismatch") {
        std::string bad = bytes;
        bad[4] = 9;
        std::istringstream is(bad, std::ios::binary);
        CHECK_THROWS_AS(read_weights(is), VersionMismatchError);
    }
    SUBCASE("truncation names the record") {
        // Cut inside the payload of the second record.
        const std::string cut = bytes.substr(0, bytes.size() / 2);
        std::istringstream is(cut, std::ios::binary);
        CHECK_THROWS_WITH_AS(read_weights(is), doctest::Contains("layer."), TruncatedFileError);
    }
    SUBCASE("every prefix either parses or raises a library error") {
        for (std::size_t len = 0; len < bytes.size(); len += 7) {
            std::istringstream is(bytes.substr(0, len), std::ios::binary);
            CHECK_THROWS_AS(read_weights(is), Error);
        }
    }
    SUBCASE("zero dimension is rejected by the reader") {
        WeightSet bad = ws;
        bad.records[0].dims[1] = 0;
        bad.records[0].weights.clear();   // still consistent, so it serializes
        std::istringstream is(serialize(bad), std::ios::binary);
        CHECK_THROWS_WITH_AS(read_weights(is), doctest::Contains("zero dimension"), FormatError);
    }
    SUBCASE("writer refuses payloads inconsistent with dims") {
        WeightSet bad = ws;
        bad.records[0].bias.pop_back();
        CHECK_THROWS_AS(serialize(bad), Error);
    }
}

TEST_CASE("config parsing") {
    SUBCASE("valid config maps directives to layer specs") {
        std::istringstream is(kValidConfig);
        const net::NetworkConfig cfg = read_config(is);
        CHECK(cfg.input_height == 8);
        CHECK(cfg.flow_l == 1);
        CHECK(cfg.flow_bound == 20.0);
        CHECK(cfg.class_count == 5);
        REQUIRE(cfg.spatial_layers.size() == 4);
        const auto& conv = cfg.spatial_layers[0];
        CHECK(conv.kind == net::LayerKind::fused_conv);
        CHECK(conv.in_ch == 3);
        CHECK(conv.out_ch == 4);
        CHECK(conv.k == 3);
        CHECK(conv.stride == 1);
        CHECK(conv.padding == 1);
        CHECK(conv.activation == Activation::relu);
        CHECK(cfg.spatial_layers[2].activation == Activation::leaky_relu_0p1);
        CHECK(cfg.fusion.mode == net::FusionMode::linear_concat);
    }
    SUBCASE("errors carry line numbers") {
        std::istringstream is("input 8 8\nflow 1 20\nconv 3 4 3 1 1 relu\n");
        CHECK_THROWS_WITH_AS(read_config(is), doctest::Contains("line 3"), ConfigError);
    }
    SUBCASE("unknown directive") {
        std::istringstream is("input 8 8\nbogus 1\n");
        CHECK_THROWS_WITH_AS(read_config(is), doctest::Contains("line 2"), ConfigError);
    }
    SUBCASE("weighted_sum alphas must sum to 1") {
        std::string text = kValidConfig;
        const auto pos = text.find("fusion linear_concat");
        text = text.substr(0, pos) + "fusion weighted_sum 0.5 0.4\n";
        // feature_len (8) != classes (5) would also fail; fix classes first.
        const auto cpos = text.find("classes 5");
        text.replace(cpos, 9, "classes 8");
        std::istringstream is(text);
        CHECK_THROWS_WITH_AS(read_config(is), doctest::Contains("sum to 1"), ConfigError);
    }
    SUBCASE("bad integers are parse errors, not crashes") {
        std::istringstream is("input 8 zebra\n");
        CHECK_THROWS_WITH_AS(read_config(is), doctest::Contains("line 1"), ConfigError);
    }
    SUBCASE("missing sections are reported") {
        std::istringstream is("input 8 8\nflow 1 20\nclasses 5\n");
        CHECK_THROWS_WITH_AS(read_config(is), doctest::Contains("fusion"), ConfigError);
    }
}

TEST_CASE("netpbm decoding") {
    SUBCASE("P5 round trip through write_pgm semantics") {
        std::istringstream is(std::string("P5\n2 2\n255\n") + std::string("\x00\x40\x80\xff", 4),
                              std::ios::binary);
        const Image img = read_frame(is);
        CHECK(img.channels == 1);
        CHECK(img.width == 2);
        CHECK(img.height == 2);
        CHECK(img.pixels == std::vector<std::uint8_t>{0, 0x40, 0x80, 0xff});
    }
    SUBCASE("header comments are honored") {
        std::istringstream is(std::string("P5 # magic\n# a comment\n2 1 # dims\n255\n") +
                                  std::string("\x01\x02", 2),
                              std::ios::binary);
        const Image img = read_frame(is);
        CHECK(img.width == 2);
        CHECK(img.height == 1);
        CHECK(img.pixels == std::vector<std::uint8_t>{1, 2});
    }
    SUBCASE("P6 interleaved decode and gray conversion") {
        std::istringstream is(std::string("P6\n1 1\n255\n") + std::string("\x10\x20\x30", 3),
                              std::ios::binary);
        const Image img = read_frame(is);
        CHECK(img.channels == 3);
        const flow::FrameGray g = img.to_gray();
        // round_half_even(0.299*16 + 0.587*32 + 0.114*48) = 29
        CHECK(static_cast<int>(g.pixels[0]) == 29);
        const QuantTensor t = to_rgb_tensor(img);
        CHECK(t.shape == Shape{1, 3, 1, 1});
        CHECK(t.data == std::vector<std::uint8_t>{0x10, 0x20, 0x30});
    }
    SUBCASE("unsupported magic and maxval") {
        std::istringstream p4(std::string("P4\n2 2\n"), std::ios::binary);
        CHECK_THROWS_WITH_AS(read_frame(p4), doctest::Contains("magic"), FormatError);
        std::istringstream big(std::string("P6\n1 1\n65535\n") + std::string(6, '\0'),
                               std::ios::binary);
        CHECK_THROWS_WITH_AS(read_frame(big), doctest::Contains("maxval"), FormatError);
    }
    SUBCASE("payload shorter than the header promises") {
        std::istringstream is(std::string("P5\n4 4\n255\n") + std::string(8, 'x'),
                              std::ios::binary);
        CHECK_THROWS_AS(read_frame(is), TruncatedFileError);
    }
    SUBCASE("gray replication in the RGB tensor") {
        Image img;
        img.width = 2;
        img.height = 1;
        img.channels = 1;
        img.pixels = {10, 20};
        const QuantTensor t = to_rgb_tensor(img);
        CHECK(t.data == std::vector<std::uint8_t>{10, 20, 10, 20, 10, 20});
    }
}

TEST_CASE("metrics") {
    SUBCASE("fps and gops formulas") {
        const Metrics m = compute_metrics(240, 10.0, 0);
        CHECK(m.fps == 24.0);
        const Metrics g = compute_metrics(1, 0.01, 1'200'000'000);
        CHECK(g.gops == doctest::Approx(120.0).epsilon(1e-12));
    }
    SUBCASE("zero frames is a valid measurement") {
        const Metrics m = compute_metrics(0, 5.0, 0);
        CHECK(m.fps == 0.0);
        CHECK(m.gops == 0.0);
    }
    SUBCASE("non-positive wall time is an error") {
        CHECK_THROWS_AS(compute_metrics(1, 0.0, 1), Error);
        CHECK_THROWS_AS(compute_metrics(1, -1.0, 1), Error);
    }
    SUBCASE("synthetic clock drives the equations exactly") {
        double fake_now = 100.0;
        const ClockFn clock = [&fake_now] { return fake_now; };
        const double t0 = clock();
        fake_now += 2.5;   // pretend 60 frames ran for 2.5 s
        const double wall = clock() - t0;
        const Metrics m = compute_metrics(60, wall, 3'000'000'000LL);
        CHECK(m.fps == 24.0);
        CHECK(m.gops == 1.2);
    }
    SUBCASE("steady clock is monotone") {
        const ClockFn clock = steady_clock_fn();
        const double a = clock();
        const double b = clock();
        CHECK(b >= a);
    }
    SUBCASE("median over repeats") {
        CHECK(median({3.0, 1.0, 2.0}) == 2.0);
        CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
        CHECK(median({7.5}) == 7.5);
        CHECK_THROWS_AS(median({}), Error);
    }
}

TEST_CASE("parsers survive fuzzed input") {
    std::mt19937_64 rng(79);
    std::uniform_int_distribution<int> len_dist(0, 200);
    std::uniform_int_distribution<int> byte(0, 255);
    std::uniform_int_distribution<int> mode(0, 2);

    const std::string valid_cfg = kValidConfig;
    std::mt19937_64 ws_rng(81);
    const std::string valid_weights = serialize(random_weightset(ws_rng));
    const std::string valid_pgm = "P5\n3 2\n255\nabcdef";

    for (int i = 0; i < 1000; ++i) {
        std::string input;
        const int m = mode(rng);
        if (m == 0) {
            input.resize(static_cast<std::size_t>(len_dist(rng)));
            for (auto& c : input) c = static_cast<char>(byte(rng));
        } else {
            input = (m == 1) ? valid_cfg : ((i % 2) ? valid_weights : valid_pgm);
            if (!input.empty()) {
                input[static_cast<std::size_t>(byte(rng)) % input.size()] =
                    static_cast<char>(byte(rng));
                input = input.substr(0, static_cast<std::size_t>(len_dist(rng)) % (input.size() + 1));
            }
        }
        std::istringstream s1(input);
        try {
            (void)read_config(s1);
        } catch (const Error&) {
        }
        std::istringstream s2(input, std::ios::binary);
        try {
            (void)read_frame(s2);
        } catch (const Error&) {
        }
        std::istringstream s3(input, std::ios::binary);
        try {
            (void)read_weights(s3);
        } catch (const Error&) {
        }
    }
}
