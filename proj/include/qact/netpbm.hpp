#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "qact/optflow.hpp"
#include "qact/qtensor.hpp"

namespace qact::io {

// Decoded netpbm frame: channels is 1 (PGM) or 3 (PPM), pixels row-major with
// channels interleaved per pixel, maxval always 255.
struct Image {
    int width = 0;
    int height = 0;
    int channels = 1;
    std::vector<std::uint8_t> pixels;

    flow::FrameGray to_gray() const;   // luma for RGB, passthrough for gray
};

// Binary PGM ("P5") or PPM ("P6") with maxval 255. Header comments are
// honored. Unsupported magic/maxval, bad dimensions, and short payloads
// raise distinct errors.
Image read_frame(std::istream& in);
Image read_frame(const std::filesystem::path& path);

void write_pgm(const std::vector<std::uint8_t>& pixels, int width, int height,
               const std::filesystem::path& path);

// (1, 3, H, W) tensor under the RGB input convention (scale 1/255, zp 0);
// gray frames are replicated across the three channels.
QuantTensor to_rgb_tensor(const Image& img);

} // namespace qact::io
