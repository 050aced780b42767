#pragma once

#include <cstdint>
#include <filesystem>

#include "qact/graph.hpp"
#include "qact/weights.hpp"

namespace qact::tools {

// Random weight set for a config, with per-layer output quantization
// calibrated by running a few random inputs through the layers as they are
// generated. Useful for demos and benchmarks; not a trained model.
io::WeightSet generate_random_weights(const net::NetworkConfig& cfg, std::uint64_t seed);

// Synthetic PGM sequence with smooth horizontal/vertical motion so optical
// flow has something to track. Files are named frame_0000.pgm, frame_0001.pgm, ...
void generate_frames(const std::filesystem::path& dir, int count, int width, int height,
                     std::uint64_t seed);

} // namespace qact::tools
