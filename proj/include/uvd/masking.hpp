#pragma once

#include <string>
#include <vector>

#include "uvd/tensor.hpp"

namespace uvd {

// Per-frame visibility. true = frame is given as condition.
struct FrameMask {
    std::vector<bool> visible;

    int frames() const { return int(visible.size()); }
    int hidden_count() const {
        int n = 0;
        for (bool v : visible) n += v ? 0 : 1;
        return n;
    }
    int visible_count() const { return frames() - hidden_count(); }
    bool all_visible() const { return hidden_count() == 0; }
    bool all_hidden() const { return visible_count() == 0; }
};

enum class MaskMode {
    random_subset,
    prefix,
    uniform_stride,
    all_visible,
    all_hidden,
    first_frame_only,
};

MaskMode mask_mode_from_string(const std::string& s);
std::string to_string(MaskMode m);

struct MaskPolicy {
    MaskMode mode = MaskMode::random_subset;
    // bounds on the drawn hidden count for the stochastic modes
    int min_hidden = 0;
    int max_hidden = 0;

    // default curriculum: hidden count uniform on {ceil(T/2), ..., T}
    static MaskPolicy default_for(int t) {
        MaskPolicy p;
        p.mode = MaskMode::random_subset;
        p.min_hidden = (t + 1) / 2;
        p.max_hidden = t;
        return p;
    }
};

FrameMask sample_mask(const MaskPolicy& policy, int t, Rng& rng);

// Zeroes hidden frames, copies visible frames verbatim.
LatentVideo apply_mask(const LatentVideo& z0, const FrameMask& mask);

// Condition tensor fed to the backbone: masked video, optionally with a
// per-frame visibility indicator plane appended as an extra channel.
LatentVideo build_condition(const LatentVideo& z0, const FrameMask& mask, bool with_indicator);

// Prefix mask with max(1, floor(rho*T)) visible leading frames.
FrameMask mask_for_observation_ratio(double rho, int t);

// k visible frames at endpoint-inclusive uniform stride.
FrameMask mask_for_sparse_frames(int k, int t);

}  // namespace uvd
