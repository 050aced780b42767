#include "qact/graph.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace qact::net {

namespace {

std::string stream_name(StreamId s) {
    return s == StreamId::spatial ? "spatial" : "temporal";
}

std::string layer_name(const std::string& stream, std::size_t idx) {
    return stream + "." + std::to_string(idx);
}

void check_positive(std::int64_t v, const std::string& what) {
    if (v < 1) throw ConfigError(what + " must be >= 1, got " + std::to_string(v));
}

Shape conv_chain_step(const Shape& cur, const LayerSpec& l, const std::string& who) {
    if (l.in_ch != cur.c) {
        throw ConfigError(who + ": declares in_ch " + std::to_string(l.in_ch) +
                          " but receives " + std::to_string(cur.c) + " channels");
    }
    check_positive(l.out_ch, who + " out_ch");
    check_positive(l.k, who + " kernel");
    check_positive(l.stride, who + " stride");
    if (l.padding < 0) throw ConfigError(who + " padding must be >= 0");
    const std::int64_t h = (cur.h + 2 * l.padding - l.k) / l.stride + 1;
    const std::int64_t w = (cur.w + 2 * l.padding - l.k) / l.stride + 1;
    if (cur.h + 2 * l.padding < l.k || cur.w + 2 * l.padding < l.k || h < 1 || w < 1) {
        throw ConfigError(who + ": kernel " + std::to_string(l.k) +
                          " does not fit the incoming " + std::to_string(cur.h) + "x" +
                          std::to_string(cur.w) + " feature map");
    }
    return Shape{1, l.out_ch, h, w};
}

} // namespace

std::vector<Shape> resolve_stream(const NetworkConfig& cfg, const std::vector<LayerSpec>& layers,
                                  std::int64_t input_channels) {
    std::vector<Shape> shapes;
    shapes.reserve(layers.size() + 1);
    Shape cur{1, input_channels, cfg.input_height, cfg.input_width};
    shapes.push_back(cur);
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const LayerSpec& l = layers[i];
        const std::string who = "layer " + std::to_string(i);
        switch (l.kind) {
            case LayerKind::fused_conv:
                cur = conv_chain_step(cur, l, who);
                break;
            case LayerKind::maxpool:
                check_positive(l.k, who + " pool kernel");
                check_positive(l.stride, who + " pool stride");
                if (cur.h < l.k || cur.w < l.k) {
                    throw ConfigError(who + ": pool window " + std::to_string(l.k) +
                                      " larger than the incoming " + std::to_string(cur.h) + "x" +
                                      std::to_string(cur.w) + " feature map");
                }
                cur = Shape{1, cur.c, (cur.h - l.k) / l.stride + 1, (cur.w - l.k) / l.stride + 1};
                break;
            case LayerKind::fully_connected: {
                const std::int64_t flat = cur.c * cur.h * cur.w;
                if (l.in_ch != flat) {
                    throw ConfigError(who + ": fc declares " + std::to_string(l.in_ch) +
                                      " inputs but receives " + std::to_string(flat) +
                                      " (= " + std::to_string(cur.c) + "*" +
                                      std::to_string(cur.h) + "*" + std::to_string(cur.w) + ")");
                }
                check_positive(l.out_ch, who + " fc out");
                cur = Shape{1, l.out_ch, 1, 1};
                break;
            }
        }
        shapes.push_back(cur);
    }
    return shapes;
}

void validate_config(const NetworkConfig& cfg) {
    check_positive(cfg.input_height, "input height");
    check_positive(cfg.input_width, "input width");
    check_positive(cfg.flow_l, "flow L");
    if (!(cfg.flow_bound > 0.0) || !std::isfinite(cfg.flow_bound)) {
        throw ConfigError("flow bound must be positive and finite");
    }
    check_positive(cfg.class_count, "class count");
    if (cfg.spatial_layers.empty() || cfg.temporal_layers.empty()) {
        throw ConfigError("both streams must declare at least one layer");
    }

    std::vector<Shape> feats;
    for (StreamId s : {StreamId::spatial, StreamId::temporal}) {
        const bool spatial = s == StreamId::spatial;
        const auto& layers = spatial ? cfg.spatial_layers : cfg.temporal_layers;
        const std::int64_t in_ch = spatial ? 3 : 2 * static_cast<std::int64_t>(cfg.flow_l);
        std::vector<Shape> shapes;
        try {
            shapes = resolve_stream(cfg, layers, in_ch);
        } catch (const ConfigError& e) {
            throw ConfigError(stream_name(s) + " " + e.what());
        }
        if (layers.back().kind != LayerKind::fully_connected) {
            throw ConfigError(stream_name(s) + " stream must end in a fully-connected layer");
        }
        feats.push_back(shapes.back());
    }
    if (feats[0].c != feats[1].c) {
        throw ConfigError("stream feature lengths differ: spatial " + std::to_string(feats[0].c) +
                          " vs temporal " + std::to_string(feats[1].c));
    }
    if (cfg.fusion.mode == FusionMode::weighted_sum) {
        if (std::abs(cfg.fusion.alpha_spatial + cfg.fusion.alpha_temporal - 1.0) > 1e-9) {
            throw ConfigError("weighted_sum alphas must sum to 1");
        }
        if (feats[0].c != cfg.class_count) {
            throw ConfigError("weighted_sum fusion needs feature length == class count, got " +
                              std::to_string(feats[0].c) + " vs " +
                              std::to_string(cfg.class_count));
        }
    }
}

namespace {

void check_record_dims(const io::WeightRecord& rec, std::span<const std::int64_t> expect,
                       const std::string& who) {
    bool ok = rec.dims.size() == expect.size();
    for (std::size_t i = 0; ok && i < expect.size(); ++i) {
        ok = static_cast<std::int64_t>(rec.dims[i]) == expect[i];
    }
    if (!ok) {
        std::string got;
        for (std::size_t i = 0; i < rec.dims.size(); ++i) {
            got += (i ? "x" : "") + std::to_string(rec.dims[i]);
        }
        std::string want;
        for (std::size_t i = 0; i < expect.size(); ++i) {
            want += (i ? "x" : "") + std::to_string(expect[i]);
        }
        throw ConfigError(who + ": weight record dims " + got + " do not match expected " + want);
    }
}

const io::WeightRecord& take_record(const io::WeightSet& ws, std::set<std::string>& used,
                                    const std::string& name, io::RecordKind kind) {
    const io::WeightRecord* rec = ws.find(name);
    if (rec == nullptr) throw ConfigError("missing weight record '" + name + "'");
    if (rec->kind != kind) {
        throw ConfigError("weight record '" + name + "' has kind " +
                          std::to_string(static_cast<int>(rec->kind)) + ", expected " +
                          std::to_string(static_cast<int>(kind)));
    }
    used.insert(name);
    return *rec;
}

std::vector<RuntimeLayer> build_stream(const NetworkConfig& cfg, StreamId s,
                                       const io::WeightSet& ws, std::set<std::string>& used) {
    const bool spatial = s == StreamId::spatial;
    const auto& layers = spatial ? cfg.spatial_layers : cfg.temporal_layers;
    const std::int64_t in_ch = spatial ? 3 : 2 * static_cast<std::int64_t>(cfg.flow_l);
    const std::vector<Shape> shapes = resolve_stream(cfg, layers, in_ch);

    std::vector<RuntimeLayer> out;
    out.reserve(layers.size());
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const LayerSpec& spec = layers[i];
        const std::string who = layer_name(stream_name(s), i);
        RuntimeLayer rl;
        rl.spec = spec;
        rl.in_shape = shapes[i];
        rl.out_shape = shapes[i + 1];
        switch (spec.kind) {
            case LayerKind::fused_conv: {
                const auto& rec = take_record(ws, used, who, io::RecordKind::conv);
                const std::int64_t expect[] = {spec.out_ch, spec.in_ch, spec.k, spec.k};
                check_record_dims(rec, expect, who);
                rl.conv.weights.shape = Shape{spec.out_ch, spec.in_ch, spec.k, spec.k};
                rl.conv.weights.data = rec.weights;
                rl.conv.weights.qparams = QuantParams{rec.w_scale, rec.w_zero_point};
                rl.conv.bias = rec.bias;
                rl.conv.activation = spec.activation;
                rl.conv.out_qp = QuantParams{rec.out_scale, rec.out_zero_point};
                rl.conv.stride = spec.stride;
                rl.conv.padding = spec.padding;
                rl.conv.validate();
                check_accumulator_bounds(spec.in_ch, spec.k, rl.conv.bias, who);
                break;
            }
            case LayerKind::fully_connected: {
                const auto& rec = take_record(ws, used, who, io::RecordKind::fully_connected);
                const std::int64_t expect[] = {spec.out_ch, spec.in_ch};
                check_record_dims(rec, expect, who);
                rl.fc_weights.shape = Shape{spec.out_ch, spec.in_ch, 1, 1};
                rl.fc_weights.data = rec.weights;
                rl.fc_weights.qparams = QuantParams{rec.w_scale, rec.w_zero_point};
                rl.fc_weights.qparams.validate();
                rl.fc_bias = rec.bias;
                rl.fc_out_qp = QuantParams{rec.out_scale, rec.out_zero_point};
                rl.fc_out_qp.validate();
                rl.final_fc = (i + 1 == layers.size());
                check_accumulator_bounds(spec.in_ch, 1, rl.fc_bias, who);
                break;
            }
            case LayerKind::maxpool:
                break;
        }
        out.push_back(std::move(rl));
    }
    return out;
}

} // namespace

Network build(const NetworkConfig& cfg, const io::WeightSet& ws) {
    validate_config(cfg);
    std::set<std::string> used;

    Network net;
    net.config = cfg;
    net.spatial = build_stream(cfg, StreamId::spatial, ws, used);
    net.temporal = build_stream(cfg, StreamId::temporal, ws, used);
    net.feature_len = net.spatial.back().out_shape.c;

    net.fusion.spec = cfg.fusion;
    if (cfg.fusion.mode == FusionMode::linear_concat) {
        const auto& rec = take_record(ws, used, "fusion", io::RecordKind::fusion);
        const std::int64_t expect[] = {cfg.class_count, 2 * net.feature_len};
        check_record_dims(rec, expect, "fusion");
        net.fusion.weights.shape = Shape{cfg.class_count, 2 * net.feature_len, 1, 1};
        net.fusion.weights.data = rec.weights;
        net.fusion.weights.qparams = QuantParams{rec.w_scale, rec.w_zero_point};
        net.fusion.weights.qparams.validate();
        net.fusion.bias = rec.bias;
        net.fusion.bias_scale = rec.out_scale;
    }

    for (const auto& rec : ws.records) {
        if (!used.contains(rec.name)) {
            throw ConfigError("unexpected weight record '" + rec.name +
                              "' not referenced by the config");
        }
    }
    return net;
}

namespace {

QuantTensor run_conv(const RuntimeLayer& rl, const QuantTensor& cur, const ExecOptions& opts) {
    if (opts.plan.has_value()) {
        return tile::tiled_fused_layer(cur, rl.conv, *opts.plan, opts.workers).first;
    }
    if (opts.auto_budget.has_value()) {
        tile::ResourceModel model;
        model.buffer_budget_bytes = *opts.auto_budget;
        const tile::TilingPlan plan =
            tile::select_plan(tile::extents_for(cur.shape, rl.conv), model);
        return tile::tiled_fused_layer(cur, rl.conv, plan, opts.workers).first;
    }
    if (opts.workers > 1) {
        // Full-extent plan: workers split over output-channel tiles only when
        // the plan says so, so give them the spatial grid instead.
        const Shape out = conv_output_shape(cur.shape, rl.conv);
        const tile::TilingPlan plan{std::max<std::int64_t>(1, out.h / opts.workers), out.w,
                                    rl.conv.in_ch(), rl.conv.out_ch()};
        return tile::tiled_fused_layer(cur, rl.conv, plan, opts.workers).first;
    }
    return fused_layer(cur, rl.conv);
}

} // namespace

std::vector<double> forward_stream(const Network& net, StreamId stream, const QuantTensor& input,
                                   const ExecOptions& opts) {
    const auto& layers = stream == StreamId::spatial ? net.spatial : net.temporal;
    const Shape& want = layers.front().in_shape;
    if (input.shape.n != 1 || input.shape.c != want.c || input.shape.h != want.h ||
        input.shape.w != want.w) {
        throw ConfigError(stream_name(stream) + " input shape " + to_string(input.shape) +
                          " does not match expected 1x" + std::to_string(want.c) + "x" +
                          std::to_string(want.h) + "x" + std::to_string(want.w));
    }

    QuantTensor cur = input;
    std::vector<double> features;
    for (const auto& rl : layers) {
        switch (rl.spec.kind) {
            case LayerKind::fused_conv:
                cur = run_conv(rl, cur, opts);
                break;
            case LayerKind::maxpool:
                cur = maxpool(cur, rl.spec.k, rl.spec.stride);
                break;
            case LayerKind::fully_connected: {
                const AccTensor acc = fully_connected(cur, rl.fc_weights, rl.fc_bias);
                if (rl.final_fc) {
                    const double s = cur.qparams.scale * rl.fc_weights.qparams.scale;
                    features.resize(acc.data.size());
                    for (std::size_t i = 0; i < acc.data.size(); ++i) {
                        features[i] = acc.data[i] * s;
                    }
                } else {
                    cur = requantize(acc, cur.qparams, rl.fc_weights.qparams, rl.fc_out_qp);
                }
                break;
            }
        }
    }
    return features;
}

std::vector<double> fuse(const FusionHead& head, std::span<const double> spatial_feats,
                         std::span<const double> temporal_feats) {
    if (spatial_feats.size() != temporal_feats.size()) {
        throw ConfigError("fuse: feature lengths differ (" + std::to_string(spatial_feats.size()) +
                          " vs " + std::to_string(temporal_feats.size()) + ")");
    }
    if (head.spec.mode == FusionMode::weighted_sum) {
        std::vector<double> out(spatial_feats.size());
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i] = head.spec.alpha_spatial * spatial_feats[i] +
                     head.spec.alpha_temporal * temporal_feats[i];
        }
        return out;
    }

    const std::int64_t classes = head.weights.shape.n;
    const std::int64_t width = head.weights.shape.c;
    if (width != static_cast<std::int64_t>(2 * spatial_feats.size())) {
        throw ConfigError("fuse: fusion weights expect " + std::to_string(width) +
                          " features, got " + std::to_string(2 * spatial_feats.size()));
    }
    const double w_scale = head.weights.qparams.scale;
    const int w_zp = head.weights.qparams.zero_point;
    const std::int64_t half = width / 2;

    std::vector<double> logits(static_cast<std::size_t>(classes));
    for (std::int64_t o = 0; o < classes; ++o) {
        const std::uint8_t* wrow = head.weights.data.data() + o * width;
        double acc = head.bias[o] * head.bias_scale;
        for (std::int64_t i = 0; i < half; ++i) {
            acc += (static_cast<int>(wrow[i]) - w_zp) * w_scale * spatial_feats[i];
        }
        for (std::int64_t i = 0; i < half; ++i) {
            acc += (static_cast<int>(wrow[half + i]) - w_zp) * w_scale * temporal_feats[i];
        }
        logits[static_cast<std::size_t>(o)] = acc;
    }
    return logits;
}

Prediction predict(const Network& net, const QuantTensor& rgb_frame,
                   const flow::FlowStack& flow_stack, const ExecOptions& opts) {
    if (flow_stack.l != net.config.flow_l) {
        throw ConfigError("flow stack has L=" + std::to_string(flow_stack.l) +
                          ", network expects L=" + std::to_string(net.config.flow_l));
    }
    const std::vector<double> s_feats = forward_stream(net, StreamId::spatial, rgb_frame, opts);
    const std::vector<double> t_feats =
        forward_stream(net, StreamId::temporal, flow_stack.to_tensor(), opts);
    const std::vector<double> logits = fuse(net.fusion, s_feats, t_feats);

    Prediction pred;
    pred.probs = softmax(logits);
    pred.class_id = 0;
    for (std::size_t i = 1; i < pred.probs.size(); ++i) {
        if (pred.probs[i] > pred.probs[pred.class_id]) {
            pred.class_id = static_cast<std::int64_t>(i);
        }
    }
    return pred;
}

std::int64_t count_layer_ops(const LayerSpec& spec, std::int64_t h_out, std::int64_t w_out) {
    switch (spec.kind) {
        case LayerKind::fused_conv:
            return 2 * static_cast<std::int64_t>(spec.k) * spec.k * spec.in_ch * spec.out_ch *
                   h_out * w_out;
        case LayerKind::fully_connected:
            return 2 * spec.in_ch * spec.out_ch;
        case LayerKind::maxpool:
            return 0;
    }
    return 0;
}

namespace {

std::int64_t count_stream_ops(const NetworkConfig& cfg, const std::vector<LayerSpec>& layers,
                              std::int64_t in_ch) {
    if (layers.empty()) return 0;
    const std::vector<Shape> shapes = resolve_stream(cfg, layers, in_ch);
    std::int64_t total = 0;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        total += count_layer_ops(layers[i], shapes[i + 1].h, shapes[i + 1].w);
    }
    return total;
}

} // namespace

std::int64_t count_ops(const NetworkConfig& cfg) {
    std::int64_t total = count_stream_ops(cfg, cfg.spatial_layers, 3);
    total += count_stream_ops(cfg, cfg.temporal_layers, 2 * static_cast<std::int64_t>(cfg.flow_l));
    if (cfg.fusion.mode == FusionMode::linear_concat && !cfg.spatial_layers.empty()) {
        const std::int64_t feat = cfg.spatial_layers.back().out_ch;
        total += 2 * cfg.class_count * 2 * feat;
    }
    return total;
}

std::int64_t count_parameters(const NetworkConfig& cfg) {
    std::int64_t total = 0;
    for (const auto* layers : {&cfg.spatial_layers, &cfg.temporal_layers}) {
        for (const auto& l : *layers) {
            if (l.kind == LayerKind::fused_conv) {
                total += l.out_ch * l.in_ch * l.k * l.k + l.out_ch;
            } else if (l.kind == LayerKind::fully_connected) {
                total += l.out_ch * l.in_ch + l.out_ch;
            }
        }
    }
    if (cfg.fusion.mode == FusionMode::linear_concat && !cfg.spatial_layers.empty()) {
        const std::int64_t feat = cfg.spatial_layers.back().out_ch;
        total += cfg.class_count * 2 * feat + cfg.class_count;
    }
    return total;
}

QuantParams rgb_input_qparams() {
    return QuantParams{1.0 / 255.0, 0};
}

QuantParams temporal_input_qparams(double flow_bound) {
    return QuantParams{flow_bound / 127.0, 128};
}

} // namespace qact::net
