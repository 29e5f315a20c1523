#include "uvd/masking.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace uvd {

MaskMode mask_mode_from_string(const std::string& s) {
    if (s == "random_subset") return MaskMode::random_subset;
    if (s == "prefix") return MaskMode::prefix;
    if (s == "uniform_stride") return MaskMode::uniform_stride;
    if (s == "all_visible") return MaskMode::all_visible;
    if (s == "all_hidden") return MaskMode::all_hidden;
    if (s == "first_frame_only") return MaskMode::first_frame_only;
    throw std::invalid_argument("unknown mask mode: " + s);
}

std::string to_string(MaskMode m) {
    switch (m) {
        case MaskMode::random_subset: return "random_subset";
        case MaskMode::prefix: return "prefix";
        case MaskMode::uniform_stride: return "uniform_stride";
        case MaskMode::all_visible: return "all_visible";
        case MaskMode::all_hidden: return "all_hidden";
        case MaskMode::first_frame_only: return "first_frame_only";
    }
    throw std::invalid_argument("bad MaskMode");
}

namespace {

int draw_hidden_count(const MaskPolicy& p, int t, Rng& rng) {
    if (p.min_hidden < 0 || p.min_hidden > p.max_hidden || p.max_hidden > t)
        throw std::invalid_argument("sample_mask: policy bounds invalid for T");
    return int(rng.uniform_int(p.min_hidden, p.max_hidden));
}

}  // namespace

FrameMask sample_mask(const MaskPolicy& policy, int t, Rng& rng) {
    if (t <= 0) throw std::invalid_argument("sample_mask: T must be positive");
    FrameMask m;
    m.visible.assign(size_t(t), true);
    switch (policy.mode) {
        case MaskMode::all_visible: return m;
        case MaskMode::all_hidden:
            m.visible.assign(size_t(t), false);
            return m;
        case MaskMode::first_frame_only:
            m.visible.assign(size_t(t), false);
            m.visible[0] = true;
            return m;
        case MaskMode::prefix: {
            int h = draw_hidden_count(policy, t, rng);
            for (int i = t - h; i < t; ++i) m.visible[size_t(i)] = false;
            return m;
        }
        case MaskMode::uniform_stride: {
            int h = draw_hidden_count(policy, t, rng);
            int k = t - h;
            if (k == 0) {
                m.visible.assign(size_t(t), false);
                return m;
            }
            return mask_for_sparse_frames(k, t);
        }
        case MaskMode::random_subset: {
            int h = draw_hidden_count(policy, t, rng);
            // partial Fisher-Yates: first h entries of a shuffled index list
            std::vector<int> idx(static_cast<size_t>(t));
            for (int i = 0; i < t; ++i) idx[size_t(i)] = i;
            for (int i = 0; i < h; ++i) {
                int j = int(rng.uniform_int(i, t - 1));
                std::swap(idx[size_t(i)], idx[size_t(j)]);
                m.visible[size_t(idx[size_t(i)])] = false;
            }
            return m;
        }
    }
    throw std::invalid_argument("sample_mask: bad mode");
}

LatentVideo apply_mask(const LatentVideo& z0, const FrameMask& mask) {
    if (z0.ndim() != 4) throw std::invalid_argument("apply_mask: expected [T,C,H,W]");
    if (mask.frames() != z0.dim(0)) throw std::invalid_argument("apply_mask: mask length mismatch");
    LatentVideo out = z0;
    int64_t frame_sz = z0.numel() / z0.dim(0);
    for (int f = 0; f < z0.dim(0); ++f) {
        if (mask.visible[size_t(f)]) continue;
        double* p = out.data() + int64_t(f) * frame_sz;
        std::fill(p, p + frame_sz, 0.0);
    }
    return out;
}

LatentVideo build_condition(const LatentVideo& z0, const FrameMask& mask, bool with_indicator) {
    LatentVideo masked = apply_mask(z0, mask);
    if (!with_indicator) return masked;
    int t = z0.dim(0), c = z0.dim(1), h = z0.dim(2), w = z0.dim(3);
    Tensor out({t, c + 1, h, w});
    int64_t plane = int64_t(h) * w;
    for (int f = 0; f < t; ++f) {
        const double* src = masked.data() + int64_t(f) * c * plane;
        double* dst = out.data() + int64_t(f) * (c + 1) * plane;
        std::copy(src, src + int64_t(c) * plane, dst);
        std::fill(dst + int64_t(c) * plane, dst + int64_t(c + 1) * plane,
                  mask.visible[size_t(f)] ? 1.0 : 0.0);
    }
    return out;
}

FrameMask mask_for_observation_ratio(double rho, int t) {
    if (!(rho > 0.0) || rho > 1.0)
        throw std::invalid_argument("mask_for_observation_ratio: rho must be in (0,1]");
    if (t <= 0) throw std::invalid_argument("mask_for_observation_ratio: T must be positive");
    int k = std::max(1, int(std::floor(rho * double(t))));
    FrameMask m;
    m.visible.assign(size_t(t), false);
    for (int i = 0; i < k; ++i) m.visible[size_t(i)] = true;
    return m;
}

FrameMask mask_for_sparse_frames(int k, int t) {
    if (t <= 0) throw std::invalid_argument("mask_for_sparse_frames: T must be positive");
    if (k < 1 || k > t) throw std::invalid_argument("mask_for_sparse_frames: k must be in [1,T]");
    FrameMask m;
    m.visible.assign(size_t(t), false);
    if (k == 1) {
        m.visible[0] = true;
        return m;
    }
    for (int i = 0; i < k; ++i) {
        long pos = std::lround(double(i) * double(t - 1) / double(k - 1));
        m.visible[size_t(pos)] = true;
    }
    return m;
}

}  // namespace uvd
