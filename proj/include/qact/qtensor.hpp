#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qact/error.hpp"

namespace qact {

// NCHW extents. All tensors in the runtime are 4-D; vectors and matrices use
// trailing singleton dims.
struct Shape {
    std::int64_t n = 0;
    std::int64_t c = 0;
    std::int64_t h = 0;
    std::int64_t w = 0;

    std::int64_t numel() const { return n * c * h * w; }
    std::int64_t index(std::int64_t b, std::int64_t ch, std::int64_t y, std::int64_t x) const {
        return ((b * c + ch) * h + y) * w + x;
    }
    bool operator==(const Shape&) const = default;
};

std::string to_string(const Shape& s);

// Affine quantization: real = (q - zero_point) * scale, q stored as u8.
struct QuantParams {
    double scale = 1.0;   // real units per quantum, > 0 and finite
    int zero_point = 0;   // in [0, 255]

    void validate() const;
    bool operator==(const QuantParams&) const = default;
};

struct QuantTensor {
    Shape shape;
    std::vector<std::uint8_t> data;   // row-major NCHW, length == shape.numel()
    QuantParams qparams;
};

// 32-bit accumulator domain produced by the integer kernels before
// requantization. Values are exact sums; overflow is excluded by the
// build-time bound check, never by saturation.
struct AccTensor {
    Shape shape;
    std::vector<std::int32_t> data;
};

struct FloatTensor {
    Shape shape;
    std::vector<double> data;
};

// Round to nearest, ties to even. Used for every float->integer rounding in
// the runtime so results are deterministic and bias-free.
double round_half_even(double x);

std::uint8_t clamp_u8(double rounded);

// q = clamp(round_half_even(x / scale) + zero_point, 0, 255).
// Throws Error naming the element index on non-finite input.
QuantTensor quantize(const FloatTensor& x, const QuantParams& qp);

// x = (q - zero_point) * scale.
FloatTensor dequantize(const QuantTensor& q);

// Affine params covering [min(0, min_val), max(0, max_val)] at 256 levels.
// scale = (hi - lo) / 255 with a 1e-8 floor for degenerate ranges;
// zero_point = clamp(round_half_even(-lo / scale), 0, 255). Zero is always
// exactly representable.
QuantParams compute_qparams(double min_val, double max_val);

// Scalar requantization core shared by the elementwise op and the fused
// kernels: q = clamp(round_half_even(acc * multiplier) + out_zp, 0, 255).
inline std::uint8_t requantize_one(std::int32_t acc, double multiplier, int out_zp) {
    const double scaled = round_half_even(static_cast<double>(acc) * multiplier) + out_zp;
    return clamp_u8(scaled);
}

// Combined multiplier in_scale * w_scale / out_scale, evaluated in double.
double requant_multiplier(const QuantParams& in_qp, const QuantParams& w_qp,
                          const QuantParams& out_qp);

// Maps an accumulator tensor back to the 8-bit domain.
QuantTensor requantize(const AccTensor& acc, const QuantParams& in_qp,
                       const QuantParams& w_qp, const QuantParams& out_qp);

} // namespace qact
