#pragma once

#include <cstdint>
#include <string>

#include "uvd/temporal_shapes.hpp"

namespace uvd {

// Versioned binary container: one file per split, 8-bit quantized pixels in
// [N,T,H,W,1] order plus labels, ids, class names, and the generating spec's
// digest.
inline constexpr uint32_t kDatasetFormatVersion = 1;

void save_dataset(const VideoDataset& ds, uint64_t spec_hash, const std::string& path);

struct LoadedDataset {
    VideoDataset dataset;
    uint64_t spec_hash = 0;
    bool spec_hash_mismatch = false;  // set when the caller supplied an expectation
};

// expected_spec_hash == 0 skips the digest comparison; mismatches are
// surfaced in the result, never thrown.
LoadedDataset load_dataset(const std::string& path, uint64_t expected_spec_hash = 0);

}  // namespace uvd
