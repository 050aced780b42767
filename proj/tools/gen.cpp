#include "gen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "qact/netpbm.hpp"

namespace qact::tools {

namespace {

constexpr int kCalibSamples = 4;

struct Calibration {
    std::vector<QuantTensor> samples;
};

// Runs the freshly generated layer over the calibration batch, records the
// real-valued accumulator range, calibrates out_qp from it, and advances the
// batch for the next layer.
QuantParams calibrate_conv(Calibration& calib, FusedLayerParams& params) {
    double lo = 0.0, hi = 0.0;
    std::vector<AccTensor> accs;
    accs.reserve(calib.samples.size());
    for (const auto& x : calib.samples) {
        AccTensor acc = apply_activation(conv2d_acc(x, params), params.activation);
        const double s = x.qparams.scale * params.weights.qparams.scale;
        for (std::int32_t v : acc.data) {
            lo = std::min(lo, v * s);
            hi = std::max(hi, v * s);
        }
        accs.push_back(std::move(acc));
    }
    const QuantParams out_qp = compute_qparams(lo, hi);
    params.out_qp = out_qp;
    for (std::size_t i = 0; i < calib.samples.size(); ++i) {
        calib.samples[i] = requantize(accs[i], calib.samples[i].qparams,
                                      params.weights.qparams, out_qp);
    }
    return out_qp;
}

std::vector<double> random_reals(std::mt19937_64& rng, std::size_t n, double lo, double hi) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> v(n);
    for (auto& x : v) x = dist(rng);
    return v;
}

io::WeightRecord make_conv_record(const std::string& name, const net::LayerSpec& spec,
                                  Calibration& calib, std::mt19937_64& rng) {
    const std::size_t n_weights =
        static_cast<std::size_t>(spec.out_ch * spec.in_ch * spec.k * spec.k);
    const double r = std::sqrt(3.0 / (static_cast<double>(spec.in_ch) * spec.k * spec.k));
    const std::vector<double> w = random_reals(rng, n_weights, -r, r);
    const auto [wmin, wmax] = std::minmax_element(w.begin(), w.end());
    const QuantParams w_qp = compute_qparams(*wmin, *wmax);

    FloatTensor wf;
    wf.shape = Shape{spec.out_ch, spec.in_ch, spec.k, spec.k};
    wf.data = w;

    FusedLayerParams params;
    params.weights = quantize(wf, w_qp);
    params.activation = spec.activation;
    params.stride = spec.stride;
    params.padding = spec.padding;

    const double in_scale = calib.samples.front().qparams.scale;
    const std::vector<double> b = random_reals(rng, static_cast<std::size_t>(spec.out_ch),
                                               -0.05, 0.05);
    params.bias.resize(b.size());
    for (std::size_t i = 0; i < b.size(); ++i) {
        params.bias[i] = static_cast<std::int32_t>(round_half_even(b[i] / (in_scale * w_qp.scale)));
    }

    const QuantParams out_qp = calibrate_conv(calib, params);

    io::WeightRecord rec;
    rec.name = name;
    rec.kind = io::RecordKind::conv;
    rec.dims = {static_cast<std::uint32_t>(spec.out_ch), static_cast<std::uint32_t>(spec.in_ch),
                static_cast<std::uint32_t>(spec.k), static_cast<std::uint32_t>(spec.k)};
    rec.w_scale = w_qp.scale;
    rec.w_zero_point = w_qp.zero_point;
    rec.out_scale = out_qp.scale;
    rec.out_zero_point = out_qp.zero_point;
    rec.weights = params.weights.data;
    rec.bias = params.bias;
    return rec;
}

io::WeightRecord make_fc_record(const std::string& name, const net::LayerSpec& spec,
                                Calibration& calib, std::mt19937_64& rng, bool final_fc) {
    const std::size_t n_weights = static_cast<std::size_t>(spec.out_ch * spec.in_ch);
    const double r = std::sqrt(3.0 / static_cast<double>(spec.in_ch));
    const std::vector<double> w = random_reals(rng, n_weights, -r, r);
    const auto [wmin, wmax] = std::minmax_element(w.begin(), w.end());
    const QuantParams w_qp = compute_qparams(*wmin, *wmax);

    FloatTensor wf;
    wf.shape = Shape{spec.out_ch, spec.in_ch, 1, 1};
    wf.data = w;
    const QuantTensor wq = quantize(wf, w_qp);

    const double in_scale = calib.samples.front().qparams.scale;
    const std::vector<double> b = random_reals(rng, static_cast<std::size_t>(spec.out_ch),
                                               -0.05, 0.05);
    std::vector<std::int32_t> bias(b.size());
    for (std::size_t i = 0; i < b.size(); ++i) {
        bias[i] = static_cast<std::int32_t>(round_half_even(b[i] / (in_scale * w_qp.scale)));
    }

    double lo = 0.0, hi = 0.0;
    std::vector<AccTensor> accs;
    for (const auto& x : calib.samples) {
        AccTensor acc = fully_connected(x, wq, bias);
        const double s = x.qparams.scale * w_qp.scale;
        for (std::int32_t v : acc.data) {
            lo = std::min(lo, v * s);
            hi = std::max(hi, v * s);
        }
        accs.push_back(std::move(acc));
    }
    const QuantParams out_qp = compute_qparams(lo, hi);
    if (!final_fc) {
        for (std::size_t i = 0; i < calib.samples.size(); ++i) {
            calib.samples[i] = requantize(accs[i], calib.samples[i].qparams, w_qp, out_qp);
        }
    }

    io::WeightRecord rec;
    rec.name = name;
    rec.kind = io::RecordKind::fully_connected;
    rec.dims = {static_cast<std::uint32_t>(spec.out_ch), static_cast<std::uint32_t>(spec.in_ch)};
    rec.w_scale = w_qp.scale;
    rec.w_zero_point = w_qp.zero_point;
    rec.out_scale = out_qp.scale;
    rec.out_zero_point = out_qp.zero_point;
    rec.weights = wq.data;
    rec.bias = bias;
    return rec;
}

void generate_stream(const net::NetworkConfig& cfg, const std::vector<net::LayerSpec>& layers,
                     const std::string& stream, const QuantParams& input_qp,
                     std::int64_t input_channels, std::mt19937_64& rng, io::WeightSet& ws) {
    Calibration calib;
    std::uniform_int_distribution<int> byte_dist(0, 255);
    for (int i = 0; i < kCalibSamples; ++i) {
        QuantTensor t;
        t.shape = Shape{1, input_channels, cfg.input_height, cfg.input_width};
        t.qparams = input_qp;
        t.data.resize(static_cast<std::size_t>(t.shape.numel()));
        for (auto& v : t.data) v = static_cast<std::uint8_t>(byte_dist(rng));
        calib.samples.push_back(std::move(t));
    }

    for (std::size_t i = 0; i < layers.size(); ++i) {
        const net::LayerSpec& spec = layers[i];
        const std::string name = stream + "." + std::to_string(i);
        switch (spec.kind) {
            case net::LayerKind::fused_conv:
                ws.records.push_back(make_conv_record(name, spec, calib, rng));
                break;
            case net::LayerKind::maxpool:
                for (auto& s : calib.samples) s = maxpool(s, spec.k, spec.stride);
                break;
            case net::LayerKind::fully_connected:
                ws.records.push_back(
                    make_fc_record(name, spec, calib, rng, i + 1 == layers.size()));
                break;
        }
    }
}

} // namespace

io::WeightSet generate_random_weights(const net::NetworkConfig& cfg, std::uint64_t seed) {
    net::validate_config(cfg);
    std::mt19937_64 rng(seed);
    io::WeightSet ws;

    generate_stream(cfg, cfg.spatial_layers, "spatial", net::rgb_input_qparams(), 3, rng, ws);
    generate_stream(cfg, cfg.temporal_layers, "temporal",
                    net::temporal_input_qparams(cfg.flow_bound), 2 * cfg.flow_l, rng, ws);

    if (cfg.fusion.mode == net::FusionMode::linear_concat) {
        const std::int64_t feat = cfg.spatial_layers.back().out_ch;
        const std::int64_t width = 2 * feat;
        const double r = std::sqrt(3.0 / static_cast<double>(width));
        const std::vector<double> w =
            random_reals(rng, static_cast<std::size_t>(cfg.class_count * width), -r, r);
        const auto [wmin, wmax] = std::minmax_element(w.begin(), w.end());
        const QuantParams w_qp = compute_qparams(*wmin, *wmax);

        FloatTensor wf;
        wf.shape = Shape{cfg.class_count, width, 1, 1};
        wf.data = w;
        const QuantTensor wq = quantize(wf, w_qp);

        io::WeightRecord rec;
        rec.name = "fusion";
        rec.kind = io::RecordKind::fusion;
        rec.dims = {static_cast<std::uint32_t>(cfg.class_count),
                    static_cast<std::uint32_t>(width)};
        rec.w_scale = w_qp.scale;
        rec.w_zero_point = w_qp.zero_point;
        rec.out_scale = 1e-4;   // bias stored in units of out_scale
        rec.out_zero_point = 0;
        rec.weights = wq.data;
        const std::vector<double> b =
            random_reals(rng, static_cast<std::size_t>(cfg.class_count), -0.05, 0.05);
        rec.bias.resize(b.size());
        for (std::size_t i = 0; i < b.size(); ++i) {
            rec.bias[i] = static_cast<std::int32_t>(round_half_even(b[i] / rec.out_scale));
        }
        ws.records.push_back(std::move(rec));
    }
    return ws;
}

void generate_frames(const std::filesystem::path& dir, int count, int width, int height,
                     std::uint64_t seed) {
    std::filesystem::create_directories(dir);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> phase_dist(0.0, 6.28318);
    const double phase_x = phase_dist(rng);
    const double phase_y = phase_dist(rng);

    for (int t = 0; t < count; ++t) {
        std::vector<std::uint8_t> px(static_cast<std::size_t>(width) * height);
        for (int y = 0; y < height; ++y) {
            for (int x = 0; x < width; ++x) {
                const double v = 127.5 +
                                 58.0 * std::sin(2.0 * M_PI * (x - 1.5 * t) / 17.0 + phase_x) +
                                 48.0 * std::sin(2.0 * M_PI * (y - 0.7 * t) / 13.0 + phase_y);
                px[static_cast<std::size_t>(y) * width + x] =
                    clamp_u8(round_half_even(std::clamp(v, 0.0, 255.0)));
            }
        }
        char name[32];
        std::snprintf(name, sizeof name, "frame_%04d.pgm", t);
        io::write_pgm(px, width, height, dir / name);
    }
}

} // namespace qact::tools
