#pragma once

// Independent enumeration-based reference for plan selection: divisor
// candidates, the footprint/traffic definitions re-derived from scratch, and
// a full scan with the documented tie-break.

#include <algorithm>
#include <cstdint>
#include <vector>

#include "qact/tiling.hpp"

namespace tiling_oracle {

using qact::tile::ConvExtents;
using qact::tile::TilingPlan;

inline std::vector<std::int64_t> all_divisors(std::int64_t n) {
    std::vector<std::int64_t> d;
    for (std::int64_t i = 1; i <= n; ++i) {
        if (n % i == 0) d.push_back(i);
    }
    return d;
}

inline std::int64_t window_bytes(const ConvExtents& e, std::int64_t r0, std::int64_t r1,
                                 std::int64_t c0, std::int64_t c1) {
    const std::int64_t y0 = std::max<std::int64_t>(0, r0 * e.stride - e.padding);
    const std::int64_t y1 = std::min(e.in_rows, (r1 - 1) * e.stride - e.padding + e.k);
    const std::int64_t x0 = std::max<std::int64_t>(0, c0 * e.stride - e.padding);
    const std::int64_t x1 = std::min(e.in_cols, (c1 - 1) * e.stride - e.padding + e.k);
    return std::max<std::int64_t>(0, y1 - y0) * std::max<std::int64_t>(0, x1 - x0);
}

inline std::int64_t traffic(const TilingPlan& p, const ConvExtents& e) {
    const auto ceil_div = [](std::int64_t a, std::int64_t b) { return (a + b - 1) / b; };
    const std::int64_t rt = ceil_div(e.out_rows, p.tr);
    const std::int64_t ct = ceil_div(e.out_cols, p.tc);
    const std::int64_t mt = ceil_div(e.out_ch, p.tm);
    std::int64_t input = 0;
    for (std::int64_t r = 0; r < rt; ++r)
        for (std::int64_t c = 0; c < ct; ++c) {
            input += window_bytes(e, r * p.tr, std::min(e.out_rows, (r + 1) * p.tr), c * p.tc,
                                  std::min(e.out_cols, (c + 1) * p.tc)) *
                     e.in_ch;
        }
    return rt * ct * e.out_ch * e.in_ch * e.k * e.k + input * mt +
           e.out_rows * e.out_cols * e.out_ch;
}

inline std::int64_t footprint(const TilingPlan& p, const ConvExtents& e) {
    const std::int64_t in_rows = (p.tr - 1) * e.stride + e.k;
    const std::int64_t in_cols = (p.tc - 1) * e.stride + e.k;
    return in_rows * in_cols * p.tn + p.tm * p.tn * e.k * e.k + p.tr * p.tc * p.tm * 4;
}

inline TilingPlan best_plan(const ConvExtents& e, std::int64_t budget, bool& feasible,
                            std::int64_t& best_traffic) {
    feasible = false;
    TilingPlan best;
    best_traffic = 0;
    for (std::int64_t tr : all_divisors(e.out_rows))
        for (std::int64_t tc : all_divisors(e.out_cols))
            for (std::int64_t tn : all_divisors(e.in_ch))
                for (std::int64_t tm : all_divisors(e.out_ch)) {
                    const TilingPlan cand{tr, tc, tn, tm};
                    if (footprint(cand, e) > budget) continue;
                    const std::int64_t t = traffic(cand, e);
                    bool better = !feasible;
                    if (feasible) {
                        if (t != best_traffic) {
                            better = t < best_traffic;
                        } else if (tm != best.tm) {
                            better = tm > best.tm;
                        } else if (tr != best.tr) {
                            better = tr > best.tr;
                        } else if (tc != best.tc) {
                            better = tc > best.tc;
                        } else {
                            better = tn > best.tn;
                        }
                    }
                    if (better) {
                        feasible = true;
                        best = cand;
                        best_traffic = t;
                    }
                }
    return best;
}

} // namespace tiling_oracle
