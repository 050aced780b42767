#include "qact/netpbm.hpp"

#include <fstream>
#include <istream>
#include <string>

namespace qact::io {

namespace {

constexpr std::int64_t kMaxPixels = std::int64_t{1} << 26;   // 64M pixels per plane

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string header_token(std::istream& in) {
    std::string tok;
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        } else if (std::isspace(c)) {
            c = in.get();
        } else {
            break;
        }
    }
    while (c != EOF && !std::isspace(c) && c != '#') {
        tok.push_back(static_cast<char>(c));
        c = in.get();
    }
    // Leave the terminator in the stream: the byte after the maxval token is
    // the single whitespace separating header from payload.
    if (c != EOF) in.unget();
    return tok;
}

std::int64_t header_int(std::istream& in, const char* what) {
    const std::string tok = header_token(in);
    if (tok.empty()) throw TruncatedFileError(std::string("frame header ends before ") + what);
    std::int64_t v = 0;
    for (char ch : tok) {
        if (ch < '0' || ch > '9') {
            throw FormatError(std::string("frame header ") + what + " is not a number: '" + tok +
                              "'");
        }
        v = v * 10 + (ch - '0');
        if (v > kMaxPixels) break;
    }
    return v;
}

} // namespace

flow::FrameGray Image::to_gray() const {
    flow::FrameGray g;
    g.width = width;
    g.height = height;
    g.pixels.resize(static_cast<std::size_t>(width) * height);
    if (channels == 1) {
        g.pixels = pixels;
    } else {
        for (std::size_t i = 0; i < g.pixels.size(); ++i) {
            g.pixels[i] = flow::luma(pixels[3 * i], pixels[3 * i + 1], pixels[3 * i + 2]);
        }
    }
    return g;
}

Image read_frame(std::istream& in) {
    const std::string magic = header_token(in);
    if (magic.empty()) throw TruncatedFileError("empty frame file");
    Image img;
    if (magic == "P5") {
        img.channels = 1;
    } else if (magic == "P6") {
        img.channels = 3;
    } else {
        throw FormatError("unsupported netpbm magic '" + magic + "' (expected P5 or P6)");
    }

    const std::int64_t w = header_int(in, "width");
    const std::int64_t h = header_int(in, "height");
    const std::int64_t maxval = header_int(in, "maxval");
    if (w < 1 || h < 1 || w * h > kMaxPixels) {
        throw FormatError("frame dimensions " + std::to_string(w) + "x" + std::to_string(h) +
                          " unsupported");
    }
    if (maxval != 255) {
        throw FormatError("unsupported maxval " + std::to_string(maxval) + " (only 255)");
    }
    // Exactly one whitespace byte separates the header from the payload.
    const int sep = in.get();
    if (sep == EOF) throw TruncatedFileError("frame ends before payload");
    if (!std::isspace(sep)) throw FormatError("missing whitespace before frame payload");

    img.width = static_cast<int>(w);
    img.height = static_cast<int>(h);
    const std::size_t need = static_cast<std::size_t>(w * h * img.channels);
    img.pixels.resize(need);
    in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(need));
    if (static_cast<std::size_t>(in.gcount()) != need) {
        throw TruncatedFileError("frame payload has " + std::to_string(in.gcount()) +
                                 " bytes, header promises " + std::to_string(need));
    }
    return img;
}

Image read_frame(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open frame " + path.string());
    return read_frame(f);
}

void write_pgm(const std::vector<std::uint8_t>& pixels, int width, int height,
               const std::filesystem::path& path) {
    if (pixels.size() != static_cast<std::size_t>(width) * height) {
        throw Error("write_pgm: pixel count does not match dimensions");
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open " + path.string() + " for writing");
    f << "P5\n" << width << " " << height << "\n255\n";
    f.write(reinterpret_cast<const char*>(pixels.data()),
            static_cast<std::streamsize>(pixels.size()));
    if (!f) throw Error("write failed for " + path.string());
}

QuantTensor to_rgb_tensor(const Image& img) {
    QuantTensor t;
    t.shape = Shape{1, 3, img.height, img.width};
    t.qparams = QuantParams{1.0 / 255.0, 0};
    t.data.resize(static_cast<std::size_t>(t.shape.numel()));
    const std::size_t plane = static_cast<std::size_t>(img.width) * img.height;
    for (std::size_t i = 0; i < plane; ++i) {
        if (img.channels == 3) {
            t.data[i] = img.pixels[3 * i];
            t.data[plane + i] = img.pixels[3 * i + 1];
            t.data[2 * plane + i] = img.pixels[3 * i + 2];
        } else {
            t.data[i] = t.data[plane + i] = t.data[2 * plane + i] = img.pixels[i];
        }
    }
    return t;
}

} // namespace qact::io
