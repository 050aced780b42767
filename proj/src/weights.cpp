#include "qact/weights.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

namespace qact::io {

namespace {

constexpr std::uint64_t kMaxWeightPayload = std::uint64_t{1} << 28;
constexpr int kMaxRank = 8;

void put_bytes(std::ostream& out, const void* p, std::size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void put_u8(std::ostream& out, std::uint8_t v) {
    put_bytes(out, &v, 1);
}

void put_u16(std::ostream& out, std::uint16_t v) {
    const std::uint8_t b[2] = {static_cast<std::uint8_t>(v & 0xff),
                               static_cast<std::uint8_t>(v >> 8)};
    put_bytes(out, b, 2);
}

void put_u32(std::ostream& out, std::uint32_t v) {
    const std::uint8_t b[4] = {
        static_cast<std::uint8_t>(v & 0xff), static_cast<std::uint8_t>((v >> 8) & 0xff),
        static_cast<std::uint8_t>((v >> 16) & 0xff), static_cast<std::uint8_t>(v >> 24)};
    put_bytes(out, b, 4);
}

void put_f32(std::ostream& out, float v) {
    put_u32(out, std::bit_cast<std::uint32_t>(v));
}

void get_bytes(std::istream& in, void* p, std::size_t n, const std::string& what) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n) {
        throw TruncatedFileError("weight file truncated while reading " + what);
    }
}

std::uint8_t get_u8(std::istream& in, const std::string& what) {
    std::uint8_t v = 0;
    get_bytes(in, &v, 1, what);
    return v;
}

std::uint16_t get_u16(std::istream& in, const std::string& what) {
    std::uint8_t b[2];
    get_bytes(in, b, 2, what);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint32_t get_u32(std::istream& in, const std::string& what) {
    std::uint8_t b[4];
    get_bytes(in, b, 4, what);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

float get_f32(std::istream& in, const std::string& what) {
    return std::bit_cast<float>(get_u32(in, what));
}

void put_i32(std::ostream& out, std::int32_t v) {
    put_u32(out, static_cast<std::uint32_t>(v));
}

std::int32_t get_i32(std::istream& in, const std::string& what) {
    return static_cast<std::int32_t>(get_u32(in, what));
}

void check_scale(double scale, const std::string& record, const char* field) {
    if (!(scale > 0.0) || !std::isfinite(scale)) {
        throw FormatError("record '" + record + "': " + field + " must be positive and finite");
    }
}

} // namespace

std::uint64_t WeightRecord::weight_count() const {
    std::uint64_t n = 1;
    for (std::uint32_t d : dims) n *= d;
    return dims.empty() ? 0 : n;
}

const WeightRecord* WeightSet::find(std::string_view name) const {
    for (const auto& r : records) {
        if (r.name == name) return &r;
    }
    return nullptr;
}

WeightSet read_weights(std::istream& in) {
    char magic[4];
    in.read(magic, 4);
    if (in.gcount() != 4) throw TruncatedFileError("weight file shorter than magic");
    if (!std::equal(magic, magic + 4, kWeightMagic.begin())) {
        throw BadMagicError("weight file magic is not QHW1");
    }
    const std::uint32_t version = get_u32(in, "version");
    if (version != kWeightVersion) {
        throw VersionMismatchError("weight file version " + std::to_string(version) +
                                   " unsupported (expected " + std::to_string(kWeightVersion) +
                                   ")");
    }
    const std::uint32_t count = get_u32(in, "record count");

    WeightSet ws;
    ws.records.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::string ctx = "record #" + std::to_string(i);
        WeightRecord rec;
        const std::uint16_t name_len = get_u16(in, ctx + " name length");
        rec.name.resize(name_len);
        if (name_len > 0) get_bytes(in, rec.name.data(), name_len, ctx + " name");
        const std::string who = "record '" + rec.name + "'";

        const std::uint8_t kind = get_u8(in, who + " kind");
        if (kind > static_cast<std::uint8_t>(RecordKind::fusion)) {
            throw FormatError(who + ": unknown record kind " + std::to_string(kind));
        }
        rec.kind = static_cast<RecordKind>(kind);

        const std::uint8_t rank = get_u8(in, who + " rank");
        if (rank < 1 || rank > kMaxRank) {
            throw FormatError(who + ": rank " + std::to_string(rank) + " outside [1, " +
                              std::to_string(kMaxRank) + "]");
        }
        rec.dims.resize(rank);
        for (std::uint8_t d = 0; d < rank; ++d) {
            rec.dims[d] = get_u32(in, who + " dims");
            if (rec.dims[d] == 0) throw FormatError(who + ": zero dimension");
        }
        if (rec.weight_count() > kMaxWeightPayload) {
            throw FormatError(who + ": weight payload implausibly large");
        }

        rec.w_scale = get_f32(in, who + " w_scale");
        rec.w_zero_point = get_u8(in, who + " w_zero_point");
        rec.out_scale = get_f32(in, who + " out_scale");
        rec.out_zero_point = get_u8(in, who + " out_zero_point");
        check_scale(rec.w_scale, rec.name, "w_scale");
        check_scale(rec.out_scale, rec.name, "out_scale");

        rec.weights.resize(rec.weight_count());
        get_bytes(in, rec.weights.data(), rec.weights.size(), who + " weight payload");
        rec.bias.resize(rec.dims[0]);
        for (auto& b : rec.bias) b = get_i32(in, who + " bias payload");
        ws.records.push_back(std::move(rec));
    }
    return ws;
}

WeightSet read_weights(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open weight file " + path.string());
    return read_weights(f);
}

void write_weights(const WeightSet& ws, std::ostream& out) {
    put_bytes(out, kWeightMagic.data(), 4);
    put_u32(out, kWeightVersion);
    put_u32(out, static_cast<std::uint32_t>(ws.records.size()));
    for (const auto& rec : ws.records) {
        if (rec.name.size() > std::numeric_limits<std::uint16_t>::max()) {
            throw Error("record name too long: " + rec.name);
        }
        if (rec.dims.empty() || rec.dims.size() > kMaxRank) {
            throw Error("record '" + rec.name + "': rank must be in [1, " +
                        std::to_string(kMaxRank) + "]");
        }
        if (rec.weights.size() != rec.weight_count() || rec.bias.size() != rec.dims[0]) {
            throw Error("record '" + rec.name + "': payload sizes do not match dims");
        }
        put_u16(out, static_cast<std::uint16_t>(rec.name.size()));
        put_bytes(out, rec.name.data(), rec.name.size());
        put_u8(out, static_cast<std::uint8_t>(rec.kind));
        put_u8(out, static_cast<std::uint8_t>(rec.dims.size()));
        for (std::uint32_t d : rec.dims) put_u32(out, d);
        put_f32(out, static_cast<float>(rec.w_scale));
        put_u8(out, static_cast<std::uint8_t>(rec.w_zero_point));
        put_f32(out, static_cast<float>(rec.out_scale));
        put_u8(out, static_cast<std::uint8_t>(rec.out_zero_point));
        put_bytes(out, rec.weights.data(), rec.weights.size());
        for (std::int32_t b : rec.bias) put_i32(out, b);
    }
    if (!out) throw Error("weight write failed");
}

void write_weights(const WeightSet& ws, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open " + path.string() + " for writing");
    write_weights(ws, f);
}

} // namespace qact::io
