#include "qact/optflow.hpp"

#include <algorithm>
#include <cmath>

namespace qact::flow {

namespace {

int clamp_coord(int v, int hi) {
    return std::clamp(v, 0, hi - 1);
}

void check_same_dims(const FrameGray& prev, const FrameGray& next) {
    if (prev.width != next.width || prev.height != next.height) {
        throw Error("frame dimensions differ: " + std::to_string(prev.width) + "x" +
                    std::to_string(prev.height) + " vs " + std::to_string(next.width) + "x" +
                    std::to_string(next.height));
    }
    if (prev.pixels.size() != static_cast<std::size_t>(prev.width) * prev.height ||
        next.pixels.size() != static_cast<std::size_t>(next.width) * next.height) {
        throw Error("frame pixel buffer does not match declared dimensions");
    }
}

} // namespace

QuantTensor FlowStack::to_tensor() const {
    QuantTensor t;
    t.shape = Shape{1, 2 * l, height, width};
    t.qparams = qparams;
    t.data.reserve(static_cast<std::size_t>(t.shape.numel()));
    for (const auto& plane : channels) {
        t.data.insert(t.data.end(), plane.begin(), plane.end());
    }
    return t;
}

GradientPlanes gradients(const FrameGray& prev, const FrameGray& next) {
    check_same_dims(prev, next);
    const int w = prev.width;
    const int h = prev.height;
    GradientPlanes g;
    g.width = w;
    g.height = h;
    g.ix.resize(static_cast<std::size_t>(w) * h);
    g.iy.resize(static_cast<std::size_t>(w) * h);
    g.it.resize(static_cast<std::size_t>(w) * h);

    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            g.ix[i] = (prev.at(clamp_coord(x + 1, w), y) - prev.at(clamp_coord(x - 1, w), y)) / 2.0;
            g.iy[i] = (prev.at(x, clamp_coord(y + 1, h)) - prev.at(x, clamp_coord(y - 1, h))) / 2.0;
            g.it[i] = static_cast<double>(next.at(x, y)) - static_cast<double>(prev.at(x, y));
        }
    }
    return g;
}

FlowField lk_flow(const FrameGray& prev, const FrameGray& next, int window_n, double tau) {
    if (window_n < 3 || window_n % 2 == 0) {
        throw Error("lk_flow: window must be odd and >= 3, got " + std::to_string(window_n));
    }
    check_same_dims(prev, next);
    const GradientPlanes g = gradients(prev, next);
    const int w = prev.width;
    const int h = prev.height;
    const int r = window_n / 2;

    FlowField field;
    field.width = w;
    field.height = h;
    field.vx.assign(static_cast<std::size_t>(w) * h, 0.0);
    field.vy.assign(static_cast<std::size_t>(w) * h, 0.0);

    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double sxx = 0.0, sxy = 0.0, syy = 0.0, bx = 0.0, by = 0.0;
            for (int dy = -r; dy <= r; ++dy) {
                const int yy = clamp_coord(y + dy, h);
                const std::size_t row = static_cast<std::size_t>(yy) * w;
                for (int dx = -r; dx <= r; ++dx) {
                    const std::size_t i = row + clamp_coord(x + dx, w);
                    const double ix = g.ix[i];
                    const double iy = g.iy[i];
                    const double it = g.it[i];
                    sxx += ix * ix;
                    sxy += ix * iy;
                    syy += iy * iy;
                    bx -= ix * it;
                    by -= iy * it;
                }
            }
            // Minimum eigenvalue of the symmetric 2x2 structure matrix.
            const double tr = sxx + syy;
            const double disc = std::sqrt((sxx - syy) * (sxx - syy) + 4.0 * sxy * sxy);
            const double min_eig = 0.5 * (tr - disc);
            if (min_eig > tau) {
                const double det = sxx * syy - sxy * sxy;
                const std::size_t i = static_cast<std::size_t>(y) * w + x;
                field.vx[i] = (syy * bx - sxy * by) / det;
                field.vy[i] = (sxx * by - sxy * bx) / det;
            }
        }
    }
    return field;
}

std::uint8_t quantize_flow_component(double v, double flow_bound) {
    return clamp_u8(round_half_even(v / flow_bound * 127.0) + 128.0);
}

FlowStack stack_flows(std::span<const FrameGray> frames, int l, int window_n, double tau,
                      double flow_bound) {
    if (l < 1) throw Error("stack_flows: L must be >= 1");
    if (!(flow_bound > 0.0)) throw Error("stack_flows: flow_bound must be positive");
    if (frames.size() < static_cast<std::size_t>(l) + 1) {
        throw Error("stack_flows: need " + std::to_string(l + 1) + " frames, got " +
                    std::to_string(frames.size()));
    }
    FlowStack stack;
    stack.l = l;
    stack.width = frames[0].width;
    stack.height = frames[0].height;
    stack.qparams = QuantParams{flow_bound / 127.0, 128};
    stack.channels.reserve(static_cast<std::size_t>(2 * l));

    for (int t = 1; t <= l; ++t) {
        const FlowField f = lk_flow(frames[t - 1], frames[t], window_n, tau);
        std::vector<std::uint8_t> dx(f.vx.size());
        std::vector<std::uint8_t> dy(f.vy.size());
        for (std::size_t i = 0; i < f.vx.size(); ++i) {
            dx[i] = quantize_flow_component(f.vx[i], flow_bound);
            dy[i] = quantize_flow_component(f.vy[i], flow_bound);
        }
        stack.channels.push_back(std::move(dx));
        stack.channels.push_back(std::move(dy));
    }
    return stack;
}

std::uint8_t luma(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    return clamp_u8(round_half_even(0.299 * r + 0.587 * g + 0.114 * b));
}

} // namespace qact::flow
