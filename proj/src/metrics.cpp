#include "qact/metrics.hpp"

#include <algorithm>
#include <chrono>

namespace qact::io {

double median(std::vector<double> samples) {
    if (samples.empty()) throw Error("median: no samples");
    std::sort(samples.begin(), samples.end());
    const std::size_t mid = samples.size() / 2;
    if (samples.size() % 2 == 1) return samples[mid];
    return 0.5 * (samples[mid - 1] + samples[mid]);
}

Metrics compute_metrics(std::int64_t frames, double wall_time_s, std::int64_t total_ops) {
    if (!(wall_time_s > 0.0)) {
        throw Error("compute_metrics: wall time must be positive, got " +
                    std::to_string(wall_time_s));
    }
    if (frames < 0 || total_ops < 0) {
        throw Error("compute_metrics: counts must be nonnegative");
    }
    Metrics m;
    m.frames_processed = frames;
    m.wall_time_s = wall_time_s;
    m.total_ops = total_ops;
    m.fps = static_cast<double>(frames) / wall_time_s;
    m.gops = static_cast<double>(total_ops) / wall_time_s / 1e9;
    return m;
}

ClockFn steady_clock_fn() {
    return [] {
        const auto now = std::chrono::steady_clock::now().time_since_epoch();
        return std::chrono::duration<double>(now).count();
    };
}

} // namespace qact::io
