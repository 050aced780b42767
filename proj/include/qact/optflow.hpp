#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "qact/qtensor.hpp"

namespace qact::flow {

inline constexpr int kDefaultWindow = 15;
inline constexpr double kDefaultTau = 1e-3;        // on 0..255 intensities
inline constexpr double kDefaultFlowBound = 20.0;  // pixels/frame

struct FrameGray {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;   // row-major, length width*height

    std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

// Intensity derivatives of a frame pair, all width*height planes:
// ix/iy are central differences on the first frame with replicate borders,
// it is the plain temporal difference next - prev.
struct GradientPlanes {
    int width = 0;
    int height = 0;
    std::vector<double> ix, iy, it;
};

// Per-pixel motion vectors in pixels/frame.
struct FlowField {
    int width = 0;
    int height = 0;
    std::vector<double> vx, vy;
};

// L flow fields quantized into 2L u8 planes ordered (dx_1, dy_1, ..., dx_L, dy_L).
struct FlowStack {
    int l = 0;
    int width = 0;
    int height = 0;
    std::vector<std::vector<std::uint8_t>> channels;
    QuantParams qparams;   // scale = flow_bound / 127, zero_point = 128

    // (1, 2L, H, W) tensor view for the temporal stream.
    QuantTensor to_tensor() const;
};

GradientPlanes gradients(const FrameGray& prev, const FrameGray& next);

// Dense least-squares flow: per pixel, over the window_n x window_n window
// (replicate border) form S = [sum Ix^2, sum IxIy; ., sum Iy^2] and
// rhs = [-sum IxIt; -sum IyIt]; where min-eigenvalue(S) > tau the solve is
// v = S^-1 rhs, elsewhere the flow is (0, 0).
FlowField lk_flow(const FrameGray& prev, const FrameGray& next, int window_n, double tau);

// q = clamp(round_half_even(v / flow_bound * 127) + 128, 0, 255):
// +-flow_bound maps to the full range and 0 maps exactly to 128.
std::uint8_t quantize_flow_component(double v, double flow_bound);

// Computes lk_flow over consecutive pairs of the first l+1 frames and stacks
// the quantized components. Throws when fewer than l+1 frames are supplied.
FlowStack stack_flows(std::span<const FrameGray> frames, int l, int window_n, double tau,
                      double flow_bound);

// round_half_even(0.299 R + 0.587 G + 0.114 B)
std::uint8_t luma(std::uint8_t r, std::uint8_t g, std::uint8_t b);

} // namespace qact::flow
