#pragma once

#include <string>

#include "subuda/encoder.hpp"
#include "subuda/memory.hpp"

namespace subuda {

// Versioned JSON checkpoint: encoder layer dims, flattened weights/biases,
// head configuration and standardization stats, plus the centroid memory
// (class centroids per domain and subtype cluster summaries) used for
// prototype classification at test time. Doubles round-trip exactly.
struct Checkpoint {
  EncoderParams params;
  CentroidMemory memory;
};

void save_checkpoint(const std::string& path, const EncoderParams& params,
                     const CentroidMemory& memory);

Checkpoint load_checkpoint(const std::string& path);

}  // namespace subuda
