#include "qact/qtensor.hpp"

#include <cmath>
#include <sstream>

namespace qact {

std::string to_string(const Shape& s) {
    std::ostringstream os;
    os << s.n << "x" << s.c << "x" << s.h << "x" << s.w;
    return os.str();
}

void QuantParams::validate() const {
    if (!(scale > 0.0) || !std::isfinite(scale)) {
        throw ConfigError("quantization scale must be positive and finite");
    }
    if (zero_point < 0 || zero_point > 255) {
        throw ConfigError("zero_point " + std::to_string(zero_point) + " outside [0, 255]");
    }
}

double round_half_even(double x) {
    // remainder(x, 1) = x - n where n is the nearest integer, ties to even,
    // computed exactly. The subtraction is therefore also exact.
    return x - std::remainder(x, 1.0);
}

std::uint8_t clamp_u8(double rounded) {
    if (rounded <= 0.0) return 0;
    if (rounded >= 255.0) return 255;
    return static_cast<std::uint8_t>(rounded);
}

QuantTensor quantize(const FloatTensor& x, const QuantParams& qp) {
    qp.validate();
    QuantTensor out;
    out.shape = x.shape;
    out.qparams = qp;
    out.data.resize(x.data.size());
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        const double v = x.data[i];
        if (!std::isfinite(v)) {
            throw Error("quantize: non-finite input at element " + std::to_string(i));
        }
        out.data[i] = clamp_u8(round_half_even(v / qp.scale) + qp.zero_point);
    }
    return out;
}

FloatTensor dequantize(const QuantTensor& q) {
    FloatTensor out;
    out.shape = q.shape;
    out.data.resize(q.data.size());
    for (std::size_t i = 0; i < q.data.size(); ++i) {
        out.data[i] = (static_cast<int>(q.data[i]) - q.qparams.zero_point) * q.qparams.scale;
    }
    return out;
}

QuantParams compute_qparams(double min_val, double max_val) {
    if (!std::isfinite(min_val) || !std::isfinite(max_val)) {
        throw Error("compute_qparams: bounds must be finite");
    }
    if (min_val > max_val) {
        throw Error("compute_qparams: min_val exceeds max_val");
    }
    // Extend the range to include zero so that zero_point lands on a level.
    const double lo = std::min(0.0, min_val);
    const double hi = std::max(0.0, max_val);
    QuantParams qp;
    qp.scale = std::max((hi - lo) / 255.0, 1e-8);
    // -lo/scale, written so exact-real ties stay exact (symmetric ranges give
    // precisely 127.5 rather than 127.5 +- 1ulp).
    const double zp = hi > lo ? round_half_even(-lo / (hi - lo) * 255.0) : 0.0;
    qp.zero_point = static_cast<int>(std::min(255.0, std::max(0.0, zp)));
    return qp;
}

double requant_multiplier(const QuantParams& in_qp, const QuantParams& w_qp,
                          const QuantParams& out_qp) {
    in_qp.validate();
    w_qp.validate();
    out_qp.validate();
    return in_qp.scale * w_qp.scale / out_qp.scale;
}

QuantTensor requantize(const AccTensor& acc, const QuantParams& in_qp,
                       const QuantParams& w_qp, const QuantParams& out_qp) {
    const double mult = requant_multiplier(in_qp, w_qp, out_qp);
    QuantTensor out;
    out.shape = acc.shape;
    out.qparams = out_qp;
    out.data.resize(acc.data.size());
    for (std::size_t i = 0; i < acc.data.size(); ++i) {
        out.data[i] = requantize_one(acc.data[i], mult, out_qp.zero_point);
    }
    return out;
}

} // namespace qact
