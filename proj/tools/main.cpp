#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gen.hpp"
#include "qact/config.hpp"
#include "qact/graph.hpp"
#include "qact/metrics.hpp"
#include "qact/netpbm.hpp"
#include "qact/optflow.hpp"
#include "qact/tiling.hpp"
#include "qact/weights.hpp"

namespace fs = std::filesystem;
using namespace qact;

namespace {

struct UsageError {
    std::string msg;
};

std::vector<fs::path> list_frame_files(const fs::path& dir) {
    if (!fs::is_directory(dir)) {
        throw Error("frame directory does not exist: " + dir.string());
    }
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        std::string ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        if (ext == ".pgm" || ext == ".ppm") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end(), [](const fs::path& a, const fs::path& b) {
        return a.filename().string() < b.filename().string();
    });
    return files;
}

net::ExecOptions make_exec_options(int workers, const std::string& plan_flag) {
    net::ExecOptions opts;
    opts.workers = workers;
    if (plan_flag == "auto") {
        opts.auto_budget = tile::kDefaultBufferBudgetBytes;
        return opts;
    }
    tile::TilingPlan plan;
    std::int64_t* fields[4] = {&plan.tr, &plan.tc, &plan.tn, &plan.tm};
    std::size_t pos = 0;
    for (int i = 0; i < 4; ++i) {
        std::size_t used = 0;
        try {
            *fields[i] = std::stoll(plan_flag.substr(pos), &used);
        } catch (const std::exception&) {
            throw UsageError{"--plan expects 'auto' or Tr,Tc,Tn,Tm"};
        }
        pos += used;
        if (i < 3) {
            if (pos >= plan_flag.size() || plan_flag[pos] != ',') {
                throw UsageError{"--plan expects 'auto' or Tr,Tc,Tn,Tm"};
            }
            ++pos;
        }
    }
    if (pos != plan_flag.size() || plan.tr < 1 || plan.tc < 1 || plan.tn < 1 || plan.tm < 1) {
        throw UsageError{"--plan tile extents must be positive integers"};
    }
    opts.plan = plan;
    return opts;
}

io::Image load_checked_frame(const fs::path& path, const net::NetworkConfig& cfg) {
    const io::Image img = io::read_frame(path);
    if (img.width != cfg.input_width || img.height != cfg.input_height) {
        throw FormatError(path.filename().string() + ": frame is " + std::to_string(img.width) +
                          "x" + std::to_string(img.height) + ", config expects " +
                          std::to_string(cfg.input_width) + "x" +
                          std::to_string(cfg.input_height));
    }
    return img;
}

struct LoadedWindowSet {
    std::vector<flow::FrameGray> grays;       // one per frame
    std::vector<QuantTensor> rgb;             // one per frame
    std::vector<std::string> names;
};

LoadedWindowSet load_frames(const std::vector<fs::path>& files, const net::NetworkConfig& cfg) {
    LoadedWindowSet set;
    for (const auto& f : files) {
        const io::Image img = load_checked_frame(f, cfg);
        set.grays.push_back(img.to_gray());
        set.rgb.push_back(io::to_rgb_tensor(img));
        set.names.push_back(f.filename().string());
    }
    return set;
}

void require_window_count(std::size_t frames, int flow_l) {
    if (frames < static_cast<std::size_t>(flow_l) + 1) {
        throw Error("need at least " + std::to_string(flow_l + 1) + " frames (flow L=" +
                    std::to_string(flow_l) + " plus one), found " + std::to_string(frames));
    }
}

int run_infer(const std::string& config_path, const std::string& weights_path,
              const std::string& frames_dir, int workers, const std::string& plan_flag) {
    const net::NetworkConfig cfg = io::read_config(config_path);
    const net::Network network = net::build(cfg, io::read_weights(fs::path(weights_path)));
    const net::ExecOptions opts = make_exec_options(workers, plan_flag);

    const auto files = list_frame_files(frames_dir);
    require_window_count(files.size(), cfg.flow_l);
    const LoadedWindowSet set = load_frames(files, cfg);

    const std::int64_t ops_per_prediction = net::count_ops(cfg);
    const io::ClockFn clock = io::steady_clock_fn();
    const double t0 = clock();

    std::int64_t predictions = 0;
    const std::size_t l = static_cast<std::size_t>(cfg.flow_l);
    for (std::size_t last = l; last < set.grays.size(); ++last) {
        const std::span<const flow::FrameGray> window{set.grays.data() + (last - l), l + 1};
        const flow::FlowStack stack = flow::stack_flows(window, cfg.flow_l, flow::kDefaultWindow,
                                                        flow::kDefaultTau, cfg.flow_bound);
        const net::Prediction pred = net::predict(network, set.rgb[last], stack, opts);
        std::printf("%s class=%lld p=%.6f\n", set.names[last].c_str(),
                    static_cast<long long>(pred.class_id), pred.probs[pred.class_id]);
        ++predictions;
    }
    const double wall = clock() - t0;

    // Timing goes to stderr so prediction output stays byte-stable across runs.
    const io::Metrics m = io::compute_metrics(predictions, wall, predictions * ops_per_prediction);
    std::fprintf(stderr, "frames=%lld wall_time_s=%.6f fps=%.3f gops=%.3f\n",
                 static_cast<long long>(m.frames_processed), m.wall_time_s, m.fps, m.gops);
    return 0;
}

int run_flow(const std::string& frames_dir, const std::string& out_dir, int window, double tau,
             double bound) {
    if (window < 3 || window % 2 == 0) throw UsageError{"--window must be odd and >= 3"};
    if (!(bound > 0.0)) throw UsageError{"--bound must be positive"};

    const auto files = list_frame_files(frames_dir);
    if (files.size() < 2) {
        throw Error("need at least 2 frames to compute flow, found " +
                    std::to_string(files.size()));
    }
    fs::create_directories(out_dir);

    flow::FrameGray prev = io::read_frame(files[0]).to_gray();
    for (std::size_t i = 1; i < files.size(); ++i) {
        flow::FrameGray next = io::read_frame(files[i]).to_gray();
        const flow::FlowField field = flow::lk_flow(prev, next, window, tau);
        std::vector<std::uint8_t> dx(field.vx.size());
        std::vector<std::uint8_t> dy(field.vy.size());
        for (std::size_t p = 0; p < dx.size(); ++p) {
            dx[p] = flow::quantize_flow_component(field.vx[p], bound);
            dy[p] = flow::quantize_flow_component(field.vy[p], bound);
        }
        char name[48];
        std::snprintf(name, sizeof name, "flow_%04zu_dx.pgm", i - 1);
        io::write_pgm(dx, field.width, field.height, fs::path(out_dir) / name);
        std::snprintf(name, sizeof name, "flow_%04zu_dy.pgm", i - 1);
        io::write_pgm(dy, field.width, field.height, fs::path(out_dir) / name);
        prev = std::move(next);
    }
    std::printf("wrote %zu flow field(s) to %s\n", files.size() - 1, out_dir.c_str());
    return 0;
}

int run_bench(const std::string& config_path, const std::string& weights_path,
              const std::string& frames_dir, int repeat, int workers,
              const std::string& plan_flag) {
    if (repeat < 1) throw UsageError{"--repeat must be >= 1"};
    const net::NetworkConfig cfg = io::read_config(config_path);
    const net::Network network = net::build(cfg, io::read_weights(fs::path(weights_path)));
    const net::ExecOptions opts = make_exec_options(workers, plan_flag);

    const auto files = list_frame_files(frames_dir);
    require_window_count(files.size(), cfg.flow_l);
    const LoadedWindowSet set = load_frames(files, cfg);

    const std::size_t l = static_cast<std::size_t>(cfg.flow_l);
    const std::int64_t windows = static_cast<std::int64_t>(set.grays.size() - l);
    const std::int64_t ops_per_prediction = net::count_ops(cfg);
    const io::ClockFn clock = io::steady_clock_fn();

    std::vector<double> walls;
    walls.reserve(static_cast<std::size_t>(repeat));
    for (int rep = 0; rep < repeat; ++rep) {
        const double t0 = clock();
        for (std::size_t last = l; last < set.grays.size(); ++last) {
            const std::span<const flow::FrameGray> window{set.grays.data() + (last - l), l + 1};
            const flow::FlowStack stack = flow::stack_flows(
                window, cfg.flow_l, flow::kDefaultWindow, flow::kDefaultTau, cfg.flow_bound);
            (void)net::predict(network, set.rgb[last], stack, opts);
        }
        walls.push_back(clock() - t0);
    }

    const double median_wall = io::median(walls);
    const io::Metrics m = io::compute_metrics(windows, median_wall, windows * ops_per_prediction);
    std::printf("repeats=%d windows=%lld median_wall_s=%.6f fps=%.3f gops=%.3f\n", repeat,
                static_cast<long long>(windows), m.wall_time_s, m.fps, m.gops);
    return 0;
}

int run_validate(const std::string& config_path, const std::string& weights_path) {
    const net::NetworkConfig cfg = io::read_config(config_path);
    const io::WeightSet ws = io::read_weights(fs::path(weights_path));
    (void)net::build(cfg, ws);
    std::printf("ok: %zu weight records, %lld parameters, %lld ops/prediction\n",
                ws.records.size(), static_cast<long long>(net::count_parameters(cfg)),
                static_cast<long long>(net::count_ops(cfg)));
    return 0;
}

int run_plan(const std::string& config_path, std::int64_t budget, int pe, int simd) {
    const net::NetworkConfig cfg = io::read_config(config_path);
    tile::ResourceModel model;
    model.buffer_budget_bytes = budget;
    model.pe_count = pe;
    model.simd_width = simd;
    model.validate();

    std::printf("%-12s %-10s %-20s %12s %14s %14s\n", "layer", "out(HxW)", "plan(Tr,Tc,Tn,Tm)",
                "footprint_B", "traffic_B", "est_cycles");
    for (const bool spatial : {true, false}) {
        const auto& layers = spatial ? cfg.spatial_layers : cfg.temporal_layers;
        const std::string stream = spatial ? "spatial" : "temporal";
        const auto shapes = net::resolve_stream(
            cfg, layers, spatial ? 3 : 2 * static_cast<std::int64_t>(cfg.flow_l));
        for (std::size_t i = 0; i < layers.size(); ++i) {
            if (layers[i].kind != net::LayerKind::fused_conv) continue;
            tile::ConvExtents ext;
            ext.out_rows = shapes[i + 1].h;
            ext.out_cols = shapes[i + 1].w;
            ext.in_ch = layers[i].in_ch;
            ext.out_ch = layers[i].out_ch;
            ext.k = layers[i].k;
            ext.stride = layers[i].stride;
            ext.padding = layers[i].padding;
            ext.in_rows = shapes[i].h;
            ext.in_cols = shapes[i].w;

            const tile::TilingPlan plan = tile::select_plan(ext, model);
            const std::string name = stream + "." + std::to_string(i);
            const std::string shape =
                std::to_string(ext.out_rows) + "x" + std::to_string(ext.out_cols);
            std::printf("%-12s %-10s %-20s %12lld %14lld %14lld\n", name.c_str(), shape.c_str(),
                        to_string(plan).c_str(),
                        static_cast<long long>(tile::buffer_footprint(plan, ext.k, ext.stride)),
                        static_cast<long long>(tile::estimate_traffic(plan, ext)),
                        static_cast<long long>(tile::estimate_cycles(plan, ext, model)));
        }
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"qact: quantized two-stream action recognition runtime"};
    app.require_subcommand(1);

    std::string config_path, weights_path, frames_dir, out_path, plan_flag = "auto";
    int workers = 1, repeat = 5, window = flow::kDefaultWindow;
    int count = 16, width = 32, height = 32, pe = 1, simd = 1;
    double tau = flow::kDefaultTau, bound = flow::kDefaultFlowBound;
    std::int64_t budget = tile::kDefaultBufferBudgetBytes;
    std::uint64_t seed = 1;

    auto* infer = app.add_subcommand("infer", "run sliding-window predictions over a frame dir");
    infer->add_option("--config", config_path, "network config file")->required();
    infer->add_option("--weights", weights_path, "QHW1 weight file")->required();
    infer->add_option("--frames", frames_dir, "directory of PGM/PPM frames")->required();
    infer->add_option("--workers", workers, "tile worker count")->check(CLI::PositiveNumber);
    infer->add_option("--plan", plan_flag, "'auto' or fixed Tr,Tc,Tn,Tm");

    auto* flow_cmd = app.add_subcommand("flow", "write quantized optical flow planes as PGM");
    flow_cmd->add_option("--frames", frames_dir, "directory of PGM/PPM frames")->required();
    flow_cmd->add_option("--out", out_path, "output directory")->required();
    flow_cmd->add_option("--window", window, "LK window size (odd)");
    flow_cmd->add_option("--tau", tau, "minimum-eigenvalue threshold");
    flow_cmd->add_option("--bound", bound, "flow quantization bound (pixels)");

    auto* bench = app.add_subcommand("bench", "repeat inference and report median throughput");
    bench->add_option("--config", config_path, "network config file")->required();
    bench->add_option("--weights", weights_path, "QHW1 weight file")->required();
    bench->add_option("--frames", frames_dir, "directory of PGM/PPM frames")->required();
    bench->add_option("--repeat", repeat, "number of timed repeats")->required();
    bench->add_option("--workers", workers, "tile worker count")->check(CLI::PositiveNumber);
    bench->add_option("--plan", plan_flag, "'auto' or fixed Tr,Tc,Tn,Tm");

    auto* validate = app.add_subcommand("validate", "check config/weight consistency");
    validate->add_option("--config", config_path, "network config file")->required();
    validate->add_option("--weights", weights_path, "QHW1 weight file")->required();

    auto* plan_cmd = app.add_subcommand("plan", "select tiling plans against a buffer budget");
    plan_cmd->add_option("--config", config_path, "network config file")->required();
    plan_cmd->add_option("--budget", budget, "on-chip buffer budget in bytes")->required();
    plan_cmd->add_option("--pe", pe, "processing elements (cycle estimate)");
    plan_cmd->add_option("--simd", simd, "SIMD lanes (cycle estimate)");

    auto* mkweights =
        app.add_subcommand("mkweights", "generate random calibrated weights (dev utility)");
    mkweights->add_option("--config", config_path, "network config file")->required();
    mkweights->add_option("--out", out_path, "output QHW1 file")->required();
    mkweights->add_option("--seed", seed, "RNG seed");

    auto* mkframes =
        app.add_subcommand("mkframes", "generate a synthetic PGM sequence (dev utility)");
    mkframes->add_option("--out", out_path, "output directory")->required();
    mkframes->add_option("--count", count, "number of frames")->check(CLI::PositiveNumber);
    mkframes->add_option("--width", width, "frame width")->check(CLI::PositiveNumber);
    mkframes->add_option("--height", height, "frame height")->check(CLI::PositiveNumber);
    mkframes->add_option("--seed", seed, "RNG seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (infer->parsed()) {
            return run_infer(config_path, weights_path, frames_dir, workers, plan_flag);
        }
        if (flow_cmd->parsed()) {
            return run_flow(frames_dir, out_path, window, tau, bound);
        }
        if (bench->parsed()) {
            return run_bench(config_path, weights_path, frames_dir, repeat, workers, plan_flag);
        }
        if (validate->parsed()) {
            return run_validate(config_path, weights_path);
        }
        if (plan_cmd->parsed()) {
            return run_plan(config_path, budget, pe, simd);
        }
        if (mkweights->parsed()) {
            const net::NetworkConfig cfg = io::read_config(config_path);
            const io::WeightSet ws = tools::generate_random_weights(cfg, seed);
            io::write_weights(ws, fs::path(out_path));
            std::printf("wrote %zu records to %s\n", ws.records.size(), out_path.c_str());
            return 0;
        }
        if (mkframes->parsed()) {
            tools::generate_frames(out_path, count, width, height, seed);
            std::printf("wrote %d frames to %s\n", count, out_path.c_str());
            return 0;
        }
    } catch (const UsageError& e) {
        std::fprintf(stderr, "error: %s\n", e.msg.c_str());
        return 1;
    } catch (const InfeasibleError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
