#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qact/fused_ops.hpp"
#include "qact/optflow.hpp"
#include "qact/qtensor.hpp"
#include "qact/tiling.hpp"
#include "qact/weights.hpp"

namespace qact::net {

enum class LayerKind : std::uint8_t {
    fused_conv = 0,
    maxpool = 1,
    fully_connected = 2,
};

struct LayerSpec {
    LayerKind kind = LayerKind::fused_conv;
    std::int64_t in_ch = 0;    // conv: channels, fc: flattened input features
    std::int64_t out_ch = 0;
    int k = 1;
    int stride = 1;
    int padding = 0;
    Activation activation = Activation::none;
};

enum class FusionMode : std::uint8_t {
    linear_concat = 0,
    weighted_sum = 1,
};

struct FusionSpec {
    FusionMode mode = FusionMode::linear_concat;
    double alpha_spatial = 0.5;    // weighted_sum only; must sum to 1
    double alpha_temporal = 0.5;
};

struct NetworkConfig {
    int input_height = 0;
    int input_width = 0;
    int flow_l = 0;
    double flow_bound = flow::kDefaultFlowBound;
    std::int64_t class_count = 0;
    std::vector<LayerSpec> spatial_layers;    // input: 3 RGB channels
    std::vector<LayerSpec> temporal_layers;   // input: 2L flow channels
    FusionSpec fusion;
};

// Per-layer input shapes for one stream; back() is the stream output shape,
// so the vector has layers.size() + 1 entries.
std::vector<Shape> resolve_stream(const NetworkConfig& cfg, const std::vector<LayerSpec>& layers,
                                  std::int64_t input_channels);

// Checks every structural invariant: positive dims, channel chaining, first
// in_ch of 3 / 2L, both streams ending in equal-length fully-connected
// features, and fusion-mode consistency. Throws ConfigError with an
// explanation.
void validate_config(const NetworkConfig& cfg);

struct RuntimeLayer {
    LayerSpec spec;
    Shape in_shape;    // batch dim stored as 1
    Shape out_shape;
    FusedLayerParams conv;          // kind == fused_conv
    QuantTensor fc_weights;         // kind == fully_connected
    std::vector<std::int32_t> fc_bias;
    QuantParams fc_out_qp;          // requantization for mid-stream fc
    bool final_fc = false;          // stream tail: dequantize to features
};

struct FusionHead {
    FusionSpec spec;
    QuantTensor weights;              // (class_count, 2*feature_len, 1, 1)
    std::vector<std::int32_t> bias;
    double bias_scale = 1.0;          // real bias = bias * bias_scale
};

// Immutable after build; safe to share across threads.
struct Network {
    NetworkConfig config;
    std::vector<RuntimeLayer> spatial;
    std::vector<RuntimeLayer> temporal;
    FusionHead fusion;
    std::int64_t feature_len = 0;
};

enum class StreamId : std::uint8_t { spatial = 0, temporal = 1 };

// Weight records are matched by name: "spatial.<i>" / "temporal.<i>" for the
// i-th layer of a stream (pools carry no record) and "fusion" for the
// linear_concat head. Every record must be consumed; accumulator bounds are
// checked here, not on the hot path.
Network build(const NetworkConfig& cfg, const io::WeightSet& ws);

// How conv layers execute: a fixed plan, per-layer auto selection against a
// budget, or untiled when neither is set. Output bytes are identical in all
// cases and for any worker count.
struct ExecOptions {
    int workers = 1;
    std::optional<tile::TilingPlan> plan;
    std::optional<std::int64_t> auto_budget;
};

// Runs one stream and returns the final fully-connected accumulator
// dequantized to reals. Input batch must be 1.
std::vector<double> forward_stream(const Network& net, StreamId stream, const QuantTensor& input,
                                   const ExecOptions& opts = {});

// linear_concat: logits = W_f * concat(spatial, temporal) + b_f in double
// precision on dequantized weights. weighted_sum: alpha_s*spatial +
// alpha_t*temporal (feature_len must equal class_count, enforced at build).
std::vector<double> fuse(const FusionHead& head, std::span<const double> spatial_feats,
                         std::span<const double> temporal_feats);

struct Prediction {
    std::int64_t class_id = 0;    // argmax, lowest index on ties
    std::vector<double> probs;
};

Prediction predict(const Network& net, const QuantTensor& rgb_frame,
                   const flow::FlowStack& flow_stack, const ExecOptions& opts = {});

// 2*K^2*in*out*H_out*W_out per conv, 2*in*out per fc, 0 for pooling and
// activations.
std::int64_t count_layer_ops(const LayerSpec& spec, std::int64_t h_out, std::int64_t w_out);

// Total multiply-add operations of one full two-stream prediction, including
// the fusion linear layer when present.
std::int64_t count_ops(const NetworkConfig& cfg);

std::int64_t count_parameters(const NetworkConfig& cfg);

// Input quantization conventions shared by the CLI, exporters, and tests:
// RGB pixels are real values in [0, 1] (scale 1/255, zero point 0); flow
// components live in [-bound, bound] (scale bound/127, zero point 128).
QuantParams rgb_input_qparams();
QuantParams temporal_input_qparams(double flow_bound);

} // namespace qact::net
