#pragma once

#include <cstdint>
#include <string>

#include "uvd/nn.hpp"

namespace uvd {

inline constexpr uint32_t kCheckpointFormatVersion = 1;

void save_checkpoint(const std::string& path, const nn::Params& params, const nn::AdamW& opt,
                     int64_t step, int epoch, uint64_t config_hash);

struct CheckpointMeta {
    int64_t step = 0;
    int epoch = 0;
    uint64_t config_hash = 0;
};

// Restores weights (and optimizer moments when opt is non-null) in place.
// The parameter registry must match the saved layout exactly; a nonzero
// expected_config_hash that disagrees with the file refuses the load.
CheckpointMeta load_checkpoint(const std::string& path, nn::Params& params, nn::AdamW* opt,
                               uint64_t expected_config_hash = 0);

}  // namespace uvd
