// Binary model checkpoints. Layout (all integers little-endian):
//
//   bytes 0..7    magic "XFERCKPT"
//   bytes 8..11   uint32 format version (1)
//   bytes 12..19  uint64 length H of the JSON header
//   next H bytes  UTF-8 JSON: {"spec": {...}, "seed": n, "metadata": {...},
//                 "tensors": [{"name", "shape", "offset"}]}
//   remainder     float64 payload; each tensor starts at its byte offset
//                 relative to the payload start, values in row-major order
//
// Doubles are copied bit-for-bit, so save then load reproduces parameters exactly.
#pragma once

#include <filesystem>
#include <stdexcept>

#include "xfer/nn.hpp"

namespace xfer {

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace xfer
