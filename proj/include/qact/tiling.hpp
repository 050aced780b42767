#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "qact/fused_ops.hpp"
#include "qact/qtensor.hpp"

namespace qact::tile {

// Tile extents over output rows/cols and input/output channels. Values larger
// than a layer's real extents are clamped when the plan is applied.
struct TilingPlan {
    std::int64_t tr = 1;   // output rows per tile
    std::int64_t tc = 1;   // output cols per tile
    std::int64_t tn = 1;   // input channels per tile
    std::int64_t tm = 1;   // output channels per tile

    void validate() const;
    bool operator==(const TilingPlan&) const = default;
};

std::string to_string(const TilingPlan& p);

// On-chip buffer analog plus the two parallel compute axes. pe_count and
// simd_width feed the cycle estimate only; correctness never depends on them.
struct ResourceModel {
    std::int64_t buffer_budget_bytes = 0;
    int pe_count = 1;
    int simd_width = 1;

    void validate() const;
};

// 312 36Kb block RAMs, the BRAM class of the target device family.
inline constexpr std::int64_t kDefaultBufferBudgetBytes = 312 * 36864 / 8;

// One (output tile x input-channel tile) execution step.
struct TileRecord {
    std::int64_t batch = 0;
    std::int64_t row_tile = 0;
    std::int64_t col_tile = 0;
    std::int64_t oc_tile = 0;
    std::int64_t ic_tile = 0;
    std::int64_t input_bytes = 0;
    std::int64_t weight_bytes = 0;
    std::int64_t output_bytes = 0;
};

struct ExecutionTrace {
    std::vector<TileRecord> records;   // sorted by (batch, row, col, oc, ic)
    std::int64_t input_bytes = 0;
    std::int64_t weight_bytes = 0;
    std::int64_t output_bytes = 0;
};

// A conv layer's loop extents resolved against its input shape.
struct ConvExtents {
    std::int64_t out_rows = 0;
    std::int64_t out_cols = 0;
    std::int64_t in_ch = 0;
    std::int64_t out_ch = 0;
    int k = 1;
    int stride = 1;
    int padding = 0;
    std::int64_t in_rows = 0;
    std::int64_t in_cols = 0;
};

ConvExtents extents_for(const Shape& input, const FusedLayerParams& params);

// Executes the fused layer tile by tile. Output is byte-identical to
// fused_layer(ifm, params) for every plan and worker count: each output tile
// has a single owner that combines input-channel partial sums in ascending
// tile order before activation and requantization.
std::pair<QuantTensor, ExecutionTrace> tiled_fused_layer(const QuantTensor& ifm,
                                                         const FusedLayerParams& params,
                                                         const TilingPlan& plan,
                                                         int workers);

// Input-tile bytes ((Tr-1)*s + K)((Tc-1)*s + K)*Tn, weight-tile bytes
// Tm*Tn*K^2, output-tile bytes Tr*Tc*Tm*4 (32-bit accumulators), summed.
std::int64_t buffer_footprint(const TilingPlan& plan, int k, int stride);

// Estimated off-chip traffic in bytes for one layer pass: whole weight set
// once per output-spatial tile, input tiles once per output-channel tile
// (halo windows clamped to the real input), output written back once.
std::int64_t estimate_traffic(const TilingPlan& plan, const ConvExtents& ext);

// Cycle estimate: inner products chunked by simd_width, spread over pe_count.
// Reporting only.
std::int64_t estimate_cycles(const TilingPlan& plan, const ConvExtents& ext,
                             const ResourceModel& model);

// Exhaustive search over divisor tile sizes of each extent, keeping plans
// whose footprint fits the budget and minimizing estimated traffic. Ties
// break toward larger Tm, then Tr, Tc, Tn. Throws InfeasibleError when not
// even the unit plan fits.
TilingPlan select_plan(const ConvExtents& ext, const ResourceModel& model);

// Round-robin assignment of output tiles to workers. Tiles are numbered in
// (batch, row_tile, col_tile, oc_tile) row-major order; tile i goes to
// worker i % workers. Every tile is assigned exactly once.
std::vector<std::vector<std::int64_t>> parallel_schedule(const TilingPlan& plan,
                                                         const Shape& out_shape, int workers);

} // namespace qact::tile
