#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "uvd/tensor.hpp"

namespace uvd {

// Single-blob videos whose classes differ only in how the blob moves or
// pulses over time; every directional class shares its per-frame marginal
// distribution with its partner, so single frames cannot be classified.
struct TemporalShapesSpec {
    int t = 16;
    int h = 16;
    int w = 16;
    int num_classes = 8;

    double blob_sigma_min = 1.2;
    double blob_sigma_max = 1.8;
    double speed_min = 0.3;  // px/frame for the four axis classes
    double speed_max = 0.5;
    double ramp_speed_lo = 0.15;  // accelerate/decelerate endpoints, px/frame
    double ramp_speed_hi = 0.65;
    double pixel_noise = 0.05;

    void validate() const;
    static const std::vector<std::string>& class_names();
};

// class indices
enum : int {
    kLeft = 0,
    kRight = 1,
    kUp = 2,
    kDown = 3,
    kAccelerate = 4,
    kDecelerate = 5,
    kAppearThenVanish = 6,
    kVanishThenAppear = 7,
};

// Per-frame blob center (torus coordinates) and amplitude.
struct MotionProgram {
    std::vector<double> cx, cy, amp;
    double blob_sigma = 1.5;
};

MotionProgram temporal_shapes_program(const TemporalShapesSpec& spec, int label, Rng& rng);

// [T,1,H,W] video with values on the 8-bit grid in [-1, 1]. Rendering
// quantizes immediately so in-memory data equals its stored form.
Tensor render_temporal_shapes(const TemporalShapesSpec& spec, const MotionProgram& prog,
                              Rng& rng);

// clamp to [-1,1] and snap to the 256-level storage grid
double quantize_unit(double v);

struct VideoSample {
    Tensor video;  // [T,1,H,W]
    int label = 0;
    int64_t id = 0;
};

struct VideoDataset {
    int num_classes = 0;
    std::vector<std::string> class_names;
    std::vector<VideoSample> samples;
};

enum class Split { train, val, test };

// id-hash decile: 0-7 train, 8 val, 9 test
int split_bucket(int64_t id);
Split split_of_id(int64_t id);
VideoDataset dataset_split(const VideoDataset& ds, Split s);

// Balanced, order-independent generation: sample id's label is id mod C and
// its randomness is forked from the seed by id alone.
VideoDataset generate_temporal_shapes(const TemporalShapesSpec& spec, int n, uint64_t seed);

// stable digest of every generation-relevant spec field
uint64_t temporal_shapes_spec_hash(const TemporalShapesSpec& spec);

}  // namespace uvd
