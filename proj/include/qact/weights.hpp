#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "qact/error.hpp"

namespace qact::io {

enum class RecordKind : std::uint8_t {
    conv = 0,
    fully_connected = 1,
    fusion = 2,
};

// One parametric layer as stored on disk. Weight payload is u8 with per-record
// affine params; bias is i32 in the accumulator domain, one per dims[0].
struct WeightRecord {
    std::string name;
    RecordKind kind = RecordKind::conv;
    std::vector<std::uint32_t> dims;
    double w_scale = 1.0;
    int w_zero_point = 0;
    double out_scale = 1.0;
    int out_zero_point = 0;
    std::vector<std::uint8_t> weights;
    std::vector<std::int32_t> bias;

    std::uint64_t weight_count() const;
};

struct WeightSet {
    std::vector<WeightRecord> records;

    const WeightRecord* find(std::string_view name) const;
};

inline constexpr std::array<char, 4> kWeightMagic{'Q', 'H', 'W', '1'};
inline constexpr std::uint32_t kWeightVersion = 1;

// QHW1 binary layout, all multi-byte fields little-endian:
//   magic "QHW1", u32 version, u32 record count, then per record:
//   u16 name length + UTF-8 name, u8 kind, u8 rank + u32 dims[rank],
//   f32 w_scale, u8 w_zp, f32 out_scale, u8 out_zp,
//   u8 weight payload (prod dims), i32 bias payload (dims[0]).
WeightSet read_weights(std::istream& in);
WeightSet read_weights(const std::filesystem::path& path);
void write_weights(const WeightSet& ws, std::ostream& out);
void write_weights(const WeightSet& ws, const std::filesystem::path& path);

} // namespace qact::io
