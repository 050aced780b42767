#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "oracles.hpp"
#include "qact/optflow.hpp"

using namespace qact;
using namespace qact::flow;

namespace {

FrameGray make_frame(int w, int h, const std::function<double(int, int)>& f) {
    FrameGray fr;
    fr.width = w;
    fr.height = h;
    fr.pixels.resize(static_cast<std::size_t>(w) * h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            fr.pixels[static_cast<std::size_t>(y) * w + x] =
                clamp_u8(round_half_even(std::clamp(f(x, y), 0.0, 255.0)));
        }
    }
    return fr;
}

FrameGray random_frame(std::mt19937_64& rng, int w, int h) {
    std::uniform_int_distribution<int> dist(0, 255);
    FrameGray fr;
    fr.width = w;
    fr.height = h;
    fr.pixels.resize(static_cast<std::size_t>(w) * h);
    for (auto& p : fr.pixels) p = static_cast<std::uint8_t>(dist(rng));
    return fr;
}

double sinusoid(int x, int y) {
    return 127.5 + 50.0 * std::sin(2.0 * M_PI * x / 16.0) + 40.0 * std::sin(2.0 * M_PI * y / 14.0);
}

} // namespace

TEST_CASE("gradients") {
    SUBCASE("identical frames have zero temporal derivative") {
        std::mt19937_64 rng(3);
        const FrameGray f = random_frame(rng, 12, 9);
        const GradientPlanes g = gradients(f, f);
        for (double v : g.it) CHECK(v == 0.0);
    }
    SUBCASE("horizontal ramp has unit Ix in the interior") {
        const FrameGray f = make_frame(32, 8, [](int x, int) { return double(x); });
        const GradientPlanes g = gradients(f, f);
        for (int y = 0; y < 8; ++y) {
            for (int x = 1; x < 31; ++x) {
                CHECK(g.ix[static_cast<std::size_t>(y) * 32 + x] == 1.0);
                CHECK(g.iy[static_cast<std::size_t>(y) * 32 + x] == 0.0);
            }
        }
    }
    SUBCASE("random pair matches the per-pixel finite-difference oracle") {
        std::mt19937_64 rng(5);
        const FrameGray a = random_frame(rng, 11, 7);
        const FrameGray b = random_frame(rng, 11, 7);
        const GradientPlanes g = gradients(a, b);
        auto cx = [&](int v) { return std::clamp(v, 0, 10); };
        auto cy = [&](int v) { return std::clamp(v, 0, 6); };
        for (int y = 0; y < 7; ++y) {
            for (int x = 0; x < 11; ++x) {
                const std::size_t i = static_cast<std::size_t>(y) * 11 + x;
                CHECK(g.ix[i] == (a.at(cx(x + 1), y) - a.at(cx(x - 1), y)) / 2.0);
                CHECK(g.iy[i] == (a.at(x, cy(y + 1)) - a.at(x, cy(y - 1))) / 2.0);
                CHECK(g.it[i] == double(b.at(x, y)) - double(a.at(x, y)));
            }
        }
    }
    SUBCASE("dimension mismatch is an error") {
        std::mt19937_64 rng(7);
        const FrameGray a = random_frame(rng, 8, 8);
        const FrameGray b = random_frame(rng, 9, 8);
        CHECK_THROWS_AS(gradients(a, b), Error);
    }
}

TEST_CASE("lk_flow basics") {
    SUBCASE("window validation") {
        std::mt19937_64 rng(9);
        const FrameGray f = random_frame(rng, 20, 20);
        CHECK_THROWS_AS(lk_flow(f, f, 4, 1e-3), Error);
        CHECK_THROWS_AS(lk_flow(f, f, 1, 1e-3), Error);
    }
    SUBCASE("identical frames give exactly zero flow") {
        std::mt19937_64 rng(11);
        const FrameGray f = random_frame(rng, 24, 18);
        const FlowField v = lk_flow(f, f, 5, 1e-3);
        for (double x : v.vx) CHECK(x == 0.0);
        for (double y : v.vy) CHECK(y == 0.0);
    }
    SUBCASE("textureless frames fail the tau gate everywhere") {
        const FrameGray a = make_frame(16, 16, [](int, int) { return 90.0; });
        const FrameGray b = make_frame(16, 16, [](int, int) { return 110.0; });
        const FlowField v = lk_flow(a, b, 7, 1e-3);
        for (double x : v.vx) CHECK(x == 0.0);
        for (double y : v.vy) CHECK(y == 0.0);
    }
}

TEST_CASE("lk_flow recovers a one-pixel horizontal shift") {
    const int w = 64, h = 48;
    const FrameGray prev = make_frame(w, h, [](int x, int y) { return sinusoid(x, y); });
    const FrameGray next = make_frame(w, h, [](int x, int y) { return sinusoid(x - 1, y); });
    const FlowField v = lk_flow(prev, next, kDefaultWindow, kDefaultTau);

    const int margin = kDefaultWindow / 2 + 2;
    std::vector<double> vxs, vys;
    for (int y = margin; y < h - margin; ++y) {
        for (int x = margin; x < w - margin; ++x) {
            vxs.push_back(v.vx[static_cast<std::size_t>(y) * w + x]);
            vys.push_back(std::abs(v.vy[static_cast<std::size_t>(y) * w + x]));
        }
    }
    std::sort(vxs.begin(), vxs.end());
    std::sort(vys.begin(), vys.end());
    const double median_vx = vxs[vxs.size() / 2];
    const double median_vy = vys[vys.size() / 2];
    CHECK(median_vx > 0.75);
    CHECK(median_vx < 1.25);
    CHECK(median_vy <= 0.1);
}

TEST_CASE("lk_flow per-pixel solve matches the stacked least-squares oracle") {
    std::mt19937_64 rng(13);
    const FrameGray a = random_frame(rng, 40, 30);
    FrameGray b = random_frame(rng, 40, 30);
    // Correlate b with a so the system is not pure noise.
    for (std::size_t i = 0; i < b.pixels.size(); ++i) {
        b.pixels[i] = static_cast<std::uint8_t>((a.pixels[i] * 3 + b.pixels[i]) / 4);
    }
    const int n = 9;
    const double tau = 1e-3;
    const FlowField v = lk_flow(a, b, n, tau);

    std::uniform_int_distribution<int> xd(0, 39), yd(0, 29);
    for (int trial = 0; trial < 50; ++trial) {
        const int x = xd(rng);
        const int y = yd(rng);
        double ox = 0.0, oy = 0.0;
        const bool gated = oracle::ref_lk_pixel(a, b, x, y, n, tau, ox, oy);
        const std::size_t i = static_cast<std::size_t>(y) * 40 + x;
        if (!gated) {
            CHECK(v.vx[i] == 0.0);
            CHECK(v.vy[i] == 0.0);
        } else {
            const double norm = std::max({1.0, std::abs(ox), std::abs(oy)});
            CHECK(std::abs(v.vx[i] - ox) / norm <= 1e-9);
            CHECK(std::abs(v.vy[i] - oy) / norm <= 1e-9);
        }
    }
}

TEST_CASE("gated solves satisfy the normal equations") {
    std::mt19937_64 rng(29);
    const FrameGray a = random_frame(rng, 32, 24);
    FrameGray b = a;
    for (std::size_t i = 0; i < b.pixels.size(); ++i) {
        b.pixels[i] = static_cast<std::uint8_t>((b.pixels[i] * 7 + a.pixels[(i + 1) % 768]) / 8);
    }
    const int n = 7;
    const FlowField v = lk_flow(a, b, n, 1e-3);
    const GradientPlanes g = gradients(a, b);

    int checked = 0;
    for (int y = 0; y < 24; ++y) {
        for (int x = 0; x < 32; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * 32 + x;
            if (v.vx[i] == 0.0 && v.vy[i] == 0.0) continue;
            double sxx = 0, sxy = 0, syy = 0, bx = 0, by = 0;
            for (int dy = -n / 2; dy <= n / 2; ++dy)
                for (int dx = -n / 2; dx <= n / 2; ++dx) {
                    const int xx = std::clamp(x + dx, 0, 31);
                    const int yy = std::clamp(y + dy, 0, 23);
                    const std::size_t j = static_cast<std::size_t>(yy) * 32 + xx;
                    sxx += g.ix[j] * g.ix[j];
                    sxy += g.ix[j] * g.iy[j];
                    syy += g.iy[j] * g.iy[j];
                    bx -= g.ix[j] * g.it[j];
                    by -= g.iy[j] * g.it[j];
                }
            const double r1 = sxx * v.vx[i] + sxy * v.vy[i] - bx;
            const double r2 = sxy * v.vx[i] + syy * v.vy[i] - by;
            const double norm = std::max({1.0, std::abs(bx), std::abs(by)});
            CHECK(std::abs(r1) / norm <= 1e-9);
            CHECK(std::abs(r2) / norm <= 1e-9);
            ++checked;
        }
    }
    CHECK(checked > 100);   // the gate passed somewhere meaningful
}

TEST_CASE("swapping prev/next negates It and the flow for identical-texture frames") {
    std::mt19937_64 rng(17);
    FrameGray a = random_frame(rng, 26, 22);
    for (auto& p : a.pixels) p = static_cast<std::uint8_t>(20 + (p % 200));   // room for +10
    FrameGray b = a;
    for (auto& p : b.pixels) p = static_cast<std::uint8_t>(p + 10);

    const GradientPlanes gab = gradients(a, b);
    const GradientPlanes gba = gradients(b, a);
    for (std::size_t i = 0; i < gab.it.size(); ++i) {
        CHECK(gab.it[i] == -gba.it[i]);
        CHECK(gab.ix[i] == gba.ix[i]);   // same texture, same spatial gradients
    }

    const FlowField fab = lk_flow(a, b, 7, 1e-3);
    const FlowField fba = lk_flow(b, a, 7, 1e-3);
    for (std::size_t i = 0; i < fab.vx.size(); ++i) {
        CHECK(std::abs(fab.vx[i] + fba.vx[i]) <= 1e-9);
        CHECK(std::abs(fab.vy[i] + fba.vy[i]) <= 1e-9);
    }
}

TEST_CASE("flow quantization") {
    SUBCASE("zero maps to 128, +-bound to the range ends") {
        CHECK(quantize_flow_component(0.0, 20.0) == 128);
        CHECK(quantize_flow_component(20.0, 20.0) == 255);
        CHECK(quantize_flow_component(-20.0, 20.0) == 1);
        CHECK(quantize_flow_component(1e9, 20.0) == 255);
        CHECK(quantize_flow_component(-1e9, 20.0) == 0);
    }
    SUBCASE("round trip within a half step") {
        std::mt19937_64 rng(19);
        std::uniform_real_distribution<double> dist(-20.0, 20.0);
        const double bound = 20.0;
        const double scale = bound / 127.0;
        for (int i = 0; i < 2000; ++i) {
            const double v = dist(rng);
            const int q = quantize_flow_component(v, bound);
            const double back = (q - 128) * scale;
            CHECK(std::abs(back - v) <= scale / 2 + 1e-12);
        }
    }
}

TEST_CASE("stack_flows") {
    std::mt19937_64 rng(23);
    std::vector<FrameGray> frames;
    for (int i = 0; i < 4; ++i) frames.push_back(random_frame(rng, 16, 12));

    SUBCASE("L=1 yields exactly two channels") {
        const FlowStack s = stack_flows(frames, 1, 5, 1e-3, 20.0);
        CHECK(s.l == 1);
        CHECK(s.channels.size() == 2);
    }
    SUBCASE("channel ordering and tensor view") {
        const FlowStack s = stack_flows(frames, 3, 5, 1e-3, 20.0);
        CHECK(s.channels.size() == 6);
        const QuantTensor t = s.to_tensor();
        CHECK(t.shape == Shape{1, 6, 12, 16});
        CHECK(t.qparams.zero_point == 128);
        CHECK(t.qparams.scale == doctest::Approx(20.0 / 127.0).epsilon(1e-12));
    }
    SUBCASE("identical frames quantize to constant 128 planes") {
        const std::vector<FrameGray> same(3, frames[0]);
        const FlowStack s = stack_flows(same, 2, 5, 1e-3, 20.0);
        for (const auto& plane : s.channels) {
            for (auto q : plane) CHECK(static_cast<int>(q) == 128);
        }
    }
    SUBCASE("too few frames is an error") {
        CHECK_THROWS_WITH_AS(stack_flows(frames, 4, 5, 1e-3, 20.0), doctest::Contains("5 frames"),
                             Error);
    }
}
