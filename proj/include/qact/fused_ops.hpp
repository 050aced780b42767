#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qact/qtensor.hpp"

namespace qact {

enum class Activation : std::uint8_t {
    none = 0,
    relu = 1,
    leaky_relu_0p1 = 2,   // slope 0.1 on the negative side
};

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);   // throws ConfigError

// Per-channel batch-norm statistics and affine coefficients.
struct BNParams {
    std::vector<double> gamma;    // scale
    std::vector<double> beta;     // offset
    std::vector<double> mu;       // running mean
    std::vector<double> sigma2;   // running variance, >= 0
    double epsilon = 1e-5;

    void validate(std::int64_t out_channels) const;
};

// One homogeneous layer: convolution with batch-norm already folded into the
// quantized weights and accumulator-domain bias, activation choice, and the
// output quantization the result is mapped into.
struct FusedLayerParams {
    QuantTensor weights;              // (out_ch, in_ch, K, K)
    std::vector<std::int32_t> bias;   // accumulator domain, length out_ch
    Activation activation = Activation::relu;
    QuantParams out_qp;
    int stride = 1;
    int padding = 0;

    std::int64_t out_ch() const { return weights.shape.n; }
    std::int64_t in_ch() const { return weights.shape.c; }
    std::int64_t kernel() const { return weights.shape.h; }

    void validate() const;
};

// Worst-case |acc| = in_ch * K^2 * 255 * 255 + max|bias| must stay below
// 2^31. Checked when a network is built, never on the hot path.
void check_accumulator_bounds(std::int64_t in_ch, std::int64_t k,
                              std::span<const std::int32_t> bias,
                              const std::string& context);

// Folds batch-norm into convolution weights and bias:
//   W'[m] = gamma[m] * W[m] / sqrt(sigma2[m] + eps)
//   b'[m] = beta[m] + gamma[m] * (b[m] - mu[m]) / sqrt(sigma2[m] + eps)
// Convolving with (W', b') equals convolving with (W, b) followed by BN.
std::pair<FloatTensor, std::vector<double>> fold_bn(const FloatTensor& conv_w,
                                                    const std::vector<double>& conv_b,
                                                    const BNParams& bn);

Shape conv_output_shape(const Shape& in, const FusedLayerParams& p);

// Integer convolution into the accumulator domain:
//   acc[m][r][c] = sum_n sum_kxk (ifm_q - ifm_zp) * (w_q - w_zp) + bias[m]
// Padding contributes zero in the (q - zp) domain, i.e. real-valued zero.
AccTensor conv2d_acc(const QuantTensor& ifm, const FusedLayerParams& p);

// Accumulates the contribution of input channels [n0, n1) into tile_acc for
// output rows [r0, r1), cols [c0, c1), out channels [m0, m1) of batch b.
// tile_acc is (m1-m0) x (r1-r0) x (c1-c0) row-major and must be pre-loaded
// with bias (first channel tile) or earlier partial sums. Shared by the
// untiled kernel and the tiled executor so they accumulate identically.
void conv2d_accumulate_region(const QuantTensor& ifm, const FusedLayerParams& p,
                              std::int64_t b,
                              std::int64_t m0, std::int64_t m1,
                              std::int64_t r0, std::int64_t r1,
                              std::int64_t c0, std::int64_t c1,
                              std::int64_t n0, std::int64_t n1,
                              std::span<std::int32_t> tile_acc);

std::int32_t activate_one(std::int32_t a, Activation kind);

// Applies the activation in the accumulator domain, before requantization.
// leaky_relu_0p1 rounds 0.1*a half-to-even.
AccTensor apply_activation(AccTensor acc, Activation kind);

// conv2d_acc -> apply_activation -> requantize as one operation. Observable
// result is identical to composing the three ops.
QuantTensor fused_layer(const QuantTensor& ifm, const FusedLayerParams& p);

// k x k max pooling. Trailing partial windows are dropped; quantization
// params pass through unchanged (max commutes with the affine map).
QuantTensor maxpool(const QuantTensor& x, int k, int stride);

// acc[b][o] = sum_i (x_q[b][i] - x_zp) * (w_q[o][i] - w_zp) + bias[o]
// over the flattened trailing dims of x. w is (out_features, in_features).
AccTensor fully_connected(const QuantTensor& x, const QuantTensor& w,
                          std::span<const std::int32_t> bias);

// p_i = exp(z_i - max z) / sum exp(z_j - max z); the shift guards against
// overflow without changing the value.
std::vector<double> softmax(std::span<const double> z);

} // namespace qact
