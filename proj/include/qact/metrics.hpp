#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "qact/error.hpp"

namespace qact::io {

// Throughput measurements: fps = frames / wall_time and
// gops = total_ops / wall_time / 1e9.
struct Metrics {
    std::int64_t frames_processed = 0;
    double wall_time_s = 0.0;
    std::int64_t total_ops = 0;
    double fps = 0.0;
    double gops = 0.0;
};

Metrics compute_metrics(std::int64_t frames, double wall_time_s, std::int64_t total_ops);

// Median of the samples (mean of the middle pair for even counts). Used for
// bench summaries over repeats.
double median(std::vector<double> samples);

// Monotonic seconds. Injected wherever timing feeds Metrics so tests can
// supply synthetic time.
using ClockFn = std::function<double()>;
ClockFn steady_clock_fn();

} // namespace qact::io
