#include "qact/fused_ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace qact {

std::string to_string(Activation a) {
    switch (a) {
        case Activation::none: return "none";
        case Activation::relu: return "relu";
        case Activation::leaky_relu_0p1: return "leaky_relu_0p1";
    }
    return "unknown";
}

Activation activation_from_string(const std::string& s) {
    if (s == "none") return Activation::none;
    if (s == "relu") return Activation::relu;
    if (s == "leaky_relu_0p1") return Activation::leaky_relu_0p1;
    throw ConfigError("unknown activation '" + s + "'");
}

void BNParams::validate(std::int64_t out_channels) const {
    const auto m = static_cast<std::size_t>(out_channels);
    if (gamma.size() != m || beta.size() != m || mu.size() != m || sigma2.size() != m) {
        throw ConfigError("batch-norm parameter arrays must have length " +
                          std::to_string(out_channels));
    }
    if (!(epsilon > 0.0)) {
        throw ConfigError("batch-norm epsilon must be positive");
    }
    for (double v : sigma2) {
        if (v < 0.0) throw ConfigError("batch-norm variance must be nonnegative");
    }
}

void FusedLayerParams::validate() const {
    const Shape& ws = weights.shape;
    if (ws.h != ws.w || ws.h < 1) {
        throw ConfigError("conv weights must be (out_ch, in_ch, K, K) with K >= 1, got " +
                          to_string(ws));
    }
    if (bias.size() != static_cast<std::size_t>(ws.n)) {
        throw ConfigError("conv bias length " + std::to_string(bias.size()) +
                          " != out_ch " + std::to_string(ws.n));
    }
    if (stride < 1) throw ConfigError("conv stride must be >= 1");
    if (padding < 0) throw ConfigError("conv padding must be >= 0");
    weights.qparams.validate();
    out_qp.validate();
}

void check_accumulator_bounds(std::int64_t in_ch, std::int64_t k,
                              std::span<const std::int32_t> bias,
                              const std::string& context) {
    std::int64_t max_bias = 0;
    for (std::int32_t b : bias) {
        max_bias = std::max<std::int64_t>(max_bias, std::abs(static_cast<std::int64_t>(b)));
    }
    const std::int64_t worst = in_ch * k * k * 255 * 255 + max_bias;
    if (worst >= (std::int64_t{1} << 31)) {
        throw ConfigError(context + ": worst-case accumulation " + std::to_string(worst) +
                          " exceeds the signed 32-bit accumulator range");
    }
}

std::pair<FloatTensor, std::vector<double>> fold_bn(const FloatTensor& conv_w,
                                                    const std::vector<double>& conv_b,
                                                    const BNParams& bn) {
    const std::int64_t out_ch = conv_w.shape.n;
    if (conv_b.size() != static_cast<std::size_t>(out_ch)) {
        throw ConfigError("fold_bn: bias length " + std::to_string(conv_b.size()) +
                          " != out_ch " + std::to_string(out_ch));
    }
    bn.validate(out_ch);

    FloatTensor folded;
    folded.shape = conv_w.shape;
    folded.data.resize(conv_w.data.size());
    std::vector<double> folded_bias(static_cast<std::size_t>(out_ch));

    const std::int64_t per_ch = conv_w.shape.c * conv_w.shape.h * conv_w.shape.w;
    for (std::int64_t m = 0; m < out_ch; ++m) {
        const double s = bn.gamma[m] / std::sqrt(bn.sigma2[m] + bn.epsilon);
        for (std::int64_t i = 0; i < per_ch; ++i) {
            folded.data[m * per_ch + i] = s * conv_w.data[m * per_ch + i];
        }
        folded_bias[m] = bn.beta[m] + s * (conv_b[m] - bn.mu[m]);
    }
    return {std::move(folded), std::move(folded_bias)};
}

Shape conv_output_shape(const Shape& in, const FusedLayerParams& p) {
    const std::int64_t k = p.kernel();
    const std::int64_t h_out = (in.h + 2 * p.padding - k) / p.stride + 1;
    const std::int64_t w_out = (in.w + 2 * p.padding - k) / p.stride + 1;
    if (in.h + 2 * p.padding < k || in.w + 2 * p.padding < k) {
        throw ConfigError("conv kernel " + std::to_string(k) + " larger than padded input " +
                          to_string(in));
    }
    return Shape{in.n, p.out_ch(), h_out, w_out};
}

void conv2d_accumulate_region(const QuantTensor& ifm, const FusedLayerParams& p,
                              std::int64_t b,
                              std::int64_t m0, std::int64_t m1,
                              std::int64_t r0, std::int64_t r1,
                              std::int64_t c0, std::int64_t c1,
                              std::int64_t n0, std::int64_t n1,
                              std::span<std::int32_t> tile_acc) {
    const Shape& is = ifm.shape;
    const Shape& ws = p.weights.shape;
    const int in_zp = ifm.qparams.zero_point;
    const int w_zp = p.weights.qparams.zero_point;
    const std::int64_t k = ws.h;
    const std::int64_t rows = r1 - r0;
    const std::int64_t cols = c1 - c0;

    for (std::int64_t m = m0; m < m1; ++m) {
        std::int32_t* acc_plane = tile_acc.data() + (m - m0) * rows * cols;
        for (std::int64_t r = r0; r < r1; ++r) {
            std::int32_t* acc_row = acc_plane + (r - r0) * cols;
            for (std::int64_t n = n0; n < n1; ++n) {
                for (std::int64_t ki = 0; ki < k; ++ki) {
                    const std::int64_t iy = r * p.stride - p.padding + ki;
                    if (iy < 0 || iy >= is.h) continue;   // zero padding
                    const std::uint8_t* in_row = ifm.data.data() + is.index(b, n, iy, 0);
                    const std::uint8_t* w_row = p.weights.data.data() + ws.index(m, n, ki, 0);
                    for (std::int64_t c = c0; c < c1; ++c) {
                        const std::int64_t ix0 = c * p.stride - p.padding;
                        std::int32_t sum = 0;
                        for (std::int64_t kj = 0; kj < k; ++kj) {
                            const std::int64_t ix = ix0 + kj;
                            if (ix < 0 || ix >= is.w) continue;
                            sum += (static_cast<std::int32_t>(in_row[ix]) - in_zp) *
                                   (static_cast<std::int32_t>(w_row[kj]) - w_zp);
                        }
                        acc_row[c - c0] += sum;
                    }
                }
            }
        }
    }
}

AccTensor conv2d_acc(const QuantTensor& ifm, const FusedLayerParams& p) {
    if (ifm.shape.c != p.in_ch()) {
        throw ConfigError("conv2d_acc: input has " + std::to_string(ifm.shape.c) +
                          " channels, layer expects " + std::to_string(p.in_ch()));
    }
    const Shape out_shape = conv_output_shape(ifm.shape, p);
    AccTensor acc;
    acc.shape = out_shape;
    acc.data.resize(static_cast<std::size_t>(out_shape.numel()));

    for (std::int64_t b = 0; b < out_shape.n; ++b) {
        for (std::int64_t m = 0; m < out_shape.c; ++m) {
            std::int32_t* plane = acc.data.data() + out_shape.index(b, m, 0, 0);
            std::fill(plane, plane + out_shape.h * out_shape.w, p.bias[m]);
        }
        std::span<std::int32_t> batch_span{acc.data.data() + out_shape.index(b, 0, 0, 0),
                                           static_cast<std::size_t>(out_shape.c * out_shape.h *
                                                                    out_shape.w)};
        conv2d_accumulate_region(ifm, p, b, 0, out_shape.c, 0, out_shape.h, 0, out_shape.w,
                                 0, p.in_ch(), batch_span);
    }
    return acc;
}

std::int32_t activate_one(std::int32_t a, Activation kind) {
    switch (kind) {
        case Activation::none:
            return a;
        case Activation::relu:
            return a > 0 ? a : 0;
        case Activation::leaky_relu_0p1:
            if (a >= 0) return a;
            return static_cast<std::int32_t>(round_half_even(0.1 * a));
    }
    return a;
}

AccTensor apply_activation(AccTensor acc, Activation kind) {
    if (kind == Activation::none) return acc;
    for (auto& v : acc.data) v = activate_one(v, kind);
    return acc;
}

QuantTensor fused_layer(const QuantTensor& ifm, const FusedLayerParams& p) {
    AccTensor acc = apply_activation(conv2d_acc(ifm, p), p.activation);
    return requantize(acc, ifm.qparams, p.weights.qparams, p.out_qp);
}

QuantTensor maxpool(const QuantTensor& x, int k, int stride) {
    if (k < 1 || stride < 1) {
        throw ConfigError("maxpool: kernel and stride must be >= 1");
    }
    if (x.shape.h < k || x.shape.w < k) {
        throw ConfigError("maxpool: window " + std::to_string(k) + " larger than input " +
                          to_string(x.shape));
    }
    const Shape& is = x.shape;
    const Shape os{is.n, is.c, (is.h - k) / stride + 1, (is.w - k) / stride + 1};
    QuantTensor out;
    out.shape = os;
    out.qparams = x.qparams;
    out.data.resize(static_cast<std::size_t>(os.numel()));

    for (std::int64_t b = 0; b < os.n; ++b) {
        for (std::int64_t ch = 0; ch < os.c; ++ch) {
            for (std::int64_t r = 0; r < os.h; ++r) {
                for (std::int64_t c = 0; c < os.w; ++c) {
                    std::uint8_t best = 0;
                    for (std::int64_t ki = 0; ki < k; ++ki) {
                        const std::uint8_t* row = x.data.data() + is.index(b, ch, r * stride + ki,
                                                                           c * stride);
                        for (std::int64_t kj = 0; kj < k; ++kj) {
                            best = std::max(best, row[kj]);
                        }
                    }
                    out.data[os.index(b, ch, r, c)] = best;
                }
            }
        }
    }
    return out;
}

AccTensor fully_connected(const QuantTensor& x, const QuantTensor& w,
                          std::span<const std::int32_t> bias) {
    const std::int64_t in_features = x.shape.c * x.shape.h * x.shape.w;
    const std::int64_t out_features = w.shape.n;
    const std::int64_t w_in = w.shape.c * w.shape.h * w.shape.w;
    if (w_in != in_features) {
        throw ConfigError("fully_connected: weight expects " + std::to_string(w_in) +
                          " inputs, tensor provides " + std::to_string(in_features));
    }
    if (bias.size() != static_cast<std::size_t>(out_features)) {
        throw ConfigError("fully_connected: bias length " + std::to_string(bias.size()) +
                          " != out_features " + std::to_string(out_features));
    }
    const int x_zp = x.qparams.zero_point;
    const int w_zp = w.qparams.zero_point;

    AccTensor acc;
    acc.shape = Shape{x.shape.n, out_features, 1, 1};
    acc.data.resize(static_cast<std::size_t>(acc.shape.numel()));
    for (std::int64_t b = 0; b < x.shape.n; ++b) {
        const std::uint8_t* xrow = x.data.data() + b * in_features;
        for (std::int64_t o = 0; o < out_features; ++o) {
            const std::uint8_t* wrow = w.data.data() + o * in_features;
            std::int32_t sum = bias[o];
            for (std::int64_t i = 0; i < in_features; ++i) {
                sum += (static_cast<std::int32_t>(xrow[i]) - x_zp) *
                       (static_cast<std::int32_t>(wrow[i]) - w_zp);
            }
            acc.data[b * out_features + o] = sum;
        }
    }
    return acc;
}

std::vector<double> softmax(std::span<const double> z) {
    if (z.empty()) throw Error("softmax: empty input");
    double zmax = -std::numeric_limits<double>::infinity();
    for (double v : z) {
        if (!std::isfinite(v)) throw Error("softmax: non-finite input");
        zmax = std::max(zmax, v);
    }
    std::vector<double> p(z.size());
    double denom = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        p[i] = std::exp(z[i] - zmax);
        denom += p[i];
    }
    for (auto& v : p) v /= denom;
    return p;
}

} // namespace qact
