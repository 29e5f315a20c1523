#include "uvd/temporal_shapes.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace uvd {

namespace {

double wrap(double x, double period) {
    double r = std::fmod(x, period);
    return r < 0.0 ? r + period : r;
}

// shortest distance on a circle of the given period
double torus_dist(double a, double b, double period) {
    double d = std::fabs(a - b);
    d = std::fmod(d, period);
    return std::min(d, period - d);
}

}  // namespace

void TemporalShapesSpec::validate() const {
    if (t < 2) throw std::invalid_argument("TemporalShapesSpec: t must be >= 2");
    if (h < 4 || w < 4) throw std::invalid_argument("TemporalShapesSpec: spatial size too small");
    if (num_classes < 2 || num_classes > 8)
        throw std::invalid_argument("TemporalShapesSpec: num_classes must be in [2, 8]");
    if (blob_sigma_min <= 0.0 || blob_sigma_max < blob_sigma_min)
        throw std::invalid_argument("TemporalShapesSpec: bad blob sigma range");
    if (speed_min <= 0.0 || speed_max < speed_min)
        throw std::invalid_argument("TemporalShapesSpec: bad speed range");
    if (ramp_speed_lo <= 0.0 || ramp_speed_hi <= ramp_speed_lo)
        throw std::invalid_argument("TemporalShapesSpec: bad ramp range");
    if (pixel_noise < 0.0) throw std::invalid_argument("TemporalShapesSpec: bad pixel noise");
    // the speed ramp must not let the blob lap the torus within a clip
    double total = 0.5 * (ramp_speed_lo + ramp_speed_hi) * double(t - 1);
    if (total >= double(std::min(h, w)))
        throw std::invalid_argument("TemporalShapesSpec: ramp displacement wraps the torus");
}

const std::vector<std::string>& TemporalShapesSpec::class_names() {
    static const std::vector<std::string> names = {
        "left",       "right",      "up",
        "down",       "accelerate", "decelerate",
        "appear-then-vanish", "vanish-then-appear",
    };
    return names;
}

MotionProgram temporal_shapes_program(const TemporalShapesSpec& spec, int label, Rng& rng) {
    spec.validate();
    if (label < 0 || label >= spec.num_classes)
        throw std::invalid_argument("temporal_shapes_program: label out of range");

    const int t = spec.t;
    MotionProgram prog;
    prog.cx.assign(size_t(t), 0.0);
    prog.cy.assign(size_t(t), 0.0);
    prog.amp.assign(size_t(t), 1.0);

    // identical draw order for every class keeps shared parameters aligned
    double x0 = rng.uniform() * spec.w;
    double y0 = rng.uniform() * spec.h;
    prog.blob_sigma =
        spec.blob_sigma_min + rng.uniform() * (spec.blob_sigma_max - spec.blob_sigma_min);
    double v = spec.speed_min + rng.uniform() * (spec.speed_max - spec.speed_min);

    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    for (int i = 0; i < t; ++i) {
        double fx = x0, fy = y0;
        switch (label) {
            case kLeft:
                fx = x0 - v * i;
                break;
            case kRight:
                fx = x0 + v * i;
                break;
            case kUp:
                fy = y0 - v * i;
                break;
            case kDown:
                fy = y0 + v * i;
                break;
            case kAccelerate:
            case kDecelerate: {
                // per-step speeds ramp linearly between the two endpoints,
                // rising for accelerate and falling for decelerate
                double s = 0.0;
                for (int k = 0; k < i; ++k) {
                    double u = (t > 2) ? double(k) / double(t - 2) : 0.0;
                    double spd = (label == kAccelerate)
                                     ? spec.ramp_speed_lo + u * (spec.ramp_speed_hi - spec.ramp_speed_lo)
                                     : spec.ramp_speed_hi - u * (spec.ramp_speed_hi - spec.ramp_speed_lo);
                    s += spd;
                }
                fx = x0 + s * inv_sqrt2;
                fy = y0 + s * inv_sqrt2;
                break;
            }
            case kAppearThenVanish: {
                double ph = M_PI * double(i) / double(t - 1);
                prog.amp[size_t(i)] = std::sin(ph) * std::sin(ph);
                break;
            }
            case kVanishThenAppear: {
                double ph = M_PI * double(i) / double(t - 1);
                prog.amp[size_t(i)] = std::cos(ph) * std::cos(ph);
                break;
            }
            default:
                break;
        }
        prog.cx[size_t(i)] = wrap(fx, spec.w);
        prog.cy[size_t(i)] = wrap(fy, spec.h);
    }
    return prog;
}

double quantize_unit(double v) {
    v = std::min(1.0, std::max(-1.0, v));
    long q = std::lround((v + 1.0) * 127.5);
    if (q < 0) q = 0;
    if (q > 255) q = 255;
    return double(q) / 127.5 - 1.0;
}

Tensor render_temporal_shapes(const TemporalShapesSpec& spec, const MotionProgram& prog,
                              Rng& rng) {
    if (int(prog.cx.size()) != spec.t || int(prog.cy.size()) != spec.t ||
        int(prog.amp.size()) != spec.t)
        throw std::invalid_argument("render_temporal_shapes: program length mismatch");

    Tensor out({spec.t, 1, spec.h, spec.w});
    double inv2s2 = 1.0 / (2.0 * prog.blob_sigma * prog.blob_sigma);
    for (int i = 0; i < spec.t; ++i) {
        for (int r = 0; r < spec.h; ++r) {
            double dy = torus_dist(double(r), prog.cy[size_t(i)], spec.h);
            for (int c = 0; c < spec.w; ++c) {
                double dx = torus_dist(double(c), prog.cx[size_t(i)], spec.w);
                double intensity =
                    prog.amp[size_t(i)] * std::exp(-(dx * dx + dy * dy) * inv2s2);
                double v = -1.0 + 2.0 * intensity;
                if (spec.pixel_noise > 0.0) v += spec.pixel_noise * rng.normal();
                out.at4(i, 0, r, c) = quantize_unit(v);
            }
        }
    }
    return out;
}

int split_bucket(int64_t id) {
    return int(splitmix64(uint64_t(id) ^ 0x5157'4453'504C'5421ULL) % 10);
}

Split split_of_id(int64_t id) {
    int b = split_bucket(id);
    if (b < 8) return Split::train;
    return b == 8 ? Split::val : Split::test;
}

VideoDataset dataset_split(const VideoDataset& ds, Split s) {
    VideoDataset out;
    out.num_classes = ds.num_classes;
    out.class_names = ds.class_names;
    for (const VideoSample& sample : ds.samples)
        if (split_of_id(sample.id) == s) out.samples.push_back(sample);
    return out;
}

VideoDataset generate_temporal_shapes(const TemporalShapesSpec& spec, int n, uint64_t seed) {
    spec.validate();
    if (n < 0) throw std::invalid_argument("generate_temporal_shapes: n must be >= 0");

    VideoDataset ds;
    ds.num_classes = spec.num_classes;
    ds.class_names.assign(TemporalShapesSpec::class_names().begin(),
                          TemporalShapesSpec::class_names().begin() + spec.num_classes);

    Rng base(seed);
    ds.samples.reserve(size_t(n));
    for (int id = 0; id < n; ++id) {
        VideoSample s;
        s.id = id;
        s.label = id % spec.num_classes;
        Rng r = base.fork(uint64_t(id));
        MotionProgram prog = temporal_shapes_program(spec, s.label, r);
        s.video = render_temporal_shapes(spec, prog, r);
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

uint64_t temporal_shapes_spec_hash(const TemporalShapesSpec& spec) {
    std::ostringstream os;
    os << spec.t << '|' << spec.h << '|' << spec.w << '|' << spec.num_classes << '|'
       << spec.blob_sigma_min << '|' << spec.blob_sigma_max << '|' << spec.speed_min << '|'
       << spec.speed_max << '|' << spec.ramp_speed_lo << '|' << spec.ramp_speed_hi << '|'
       << spec.pixel_noise;
    std::string s = os.str();
    uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

}  // namespace uvd
