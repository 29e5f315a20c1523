#include "uvd/sweeps.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "uvd/common.hpp"
#include "uvd/metrics.hpp"
#include "uvd/recognition.hpp"

namespace uvd {

bool operator==(const MetricRecord& a, const MetricRecord& b) {
    return a.protocol == b.protocol && a.sweep_var == b.sweep_var &&
           a.sweep_value == b.sweep_value && a.metric_name == b.metric_name &&
           a.metric_value == b.metric_value && a.n == b.n && a.seed == b.seed;
}

namespace {

constexpr const char* kCsvHeader = "protocol,sweep_var,sweep_value,metric_name,metric_value,n,seed";

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void check_field(const std::string& s) {
    if (s.empty() || s.find_first_of(",\n\r") != std::string::npos)
        throw std::invalid_argument("metric csv: field must be nonempty and comma-free: '" + s +
                                    "'");
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    size_t start = 0;
    while (true) {
        size_t pos = line.find(',', start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

double parse_double(const std::string& s) {
    const char* begin = s.c_str();
    char* end = nullptr;
    double v = std::strtod(begin, &end);
    if (end == begin || *end != '\0')
        throw std::invalid_argument("metric csv: bad numeric field '" + s + "'");
    return v;
}

}  // namespace

std::string metric_records_to_csv(const std::vector<MetricRecord>& records) {
    std::string out = kCsvHeader;
    out += '\n';
    for (const MetricRecord& r : records) {
        check_field(r.protocol);
        check_field(r.sweep_var);
        check_field(r.metric_name);
        out += r.protocol;
        out += ',';
        out += r.sweep_var;
        out += ',';
        out += format_double(r.sweep_value);
        out += ',';
        out += r.metric_name;
        out += ',';
        out += format_double(r.metric_value);
        out += ',';
        out += std::to_string(r.n);
        out += ',';
        out += std::to_string(r.seed);
        out += '\n';
    }
    return out;
}

std::vector<MetricRecord> metric_records_from_csv(const std::string& csv) {
    std::istringstream in(csv);
    std::string line;
    if (!std::getline(in, line) || line != kCsvHeader)
        throw std::invalid_argument("metric csv: missing or unexpected header");
    std::vector<MetricRecord> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f = split_line(line);
        if (f.size() != 7) throw std::invalid_argument("metric csv: expected 7 fields per row");
        MetricRecord r;
        r.protocol = f[0];
        r.sweep_var = f[1];
        r.sweep_value = parse_double(f[2]);
        r.metric_name = f[3];
        r.metric_value = parse_double(f[4]);
        r.n = int(std::stol(f[5]));
        r.seed = std::stoull(f[6]);
        out.push_back(std::move(r));
    }
    return out;
}

void write_metric_csv(const std::vector<MetricRecord>& records, const std::string& path) {
    std::string csv = metric_records_to_csv(records);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("metric csv: cannot open for writing: " + path);
    out.write(csv.data(), std::streamsize(csv.size()));
    if (!out) throw IoError("metric csv: write failed: " + path);
}

std::vector<MetricRecord> read_metric_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("metric csv: cannot open for reading: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return metric_records_from_csv(buf.str());
}

namespace {

// Randomness is forked per (mask, sample), never per grid index, so a point's
// measurement does not depend on where it sits in the grid.
constexpr uint64_t kGenerationStreamBit = 0x8000'0000'0000'0000ull;

uint64_t mask_stream(const FrameMask& mask) {
    uint64_t h = 14695981039346656037ull;
    h = splitmix64(h ^ uint64_t(mask.frames()));
    for (bool v : mask.visible) h = splitmix64(h * 2 + (v ? 1 : 0));
    return h;
}

double masked_accuracy(const GenerativeModel& model, const VideoDataset& data,
                       const FrameMask& mask, const Rng& base, double sigma_max) {
    Rng point_base = base.fork(mask_stream(mask));
    std::vector<int> pred, label;
    pred.reserve(data.samples.size());
    label.reserve(data.samples.size());
    for (size_t j = 0; j < data.samples.size(); ++j) {
        const VideoSample& s = data.samples[j];
        Rng r = point_base.fork(uint64_t(j));
        Tensor logits = classify_partial(s.video, mask, model, r, sigma_max);
        pred.push_back(predict(logits).class_index);
        label.push_back(s.label);
    }
    return top1_accuracy(pred, label);
}

struct SweepPoint {
    double value = 0.0;
    FrameMask mask;
};

std::vector<MetricRecord> accuracy_sweep(const GenerativeModel& model, const VideoDataset& data,
                                         const std::string& protocol,
                                         const std::string& sweep_var,
                                         const std::vector<SweepPoint>& points, uint64_t seed,
                                         double sigma_max) {
    if (points.empty()) throw std::invalid_argument(protocol + " sweep: empty grid");
    if (data.samples.empty()) throw std::invalid_argument(protocol + " sweep: empty dataset");
    Rng base(seed);
    int n = int(data.samples.size());

    std::vector<double> acc(points.size());
    double full_acc = -1.0;
    for (size_t i = 0; i < points.size(); ++i) {
        acc[i] = masked_accuracy(model, data, points[i].mask, base, sigma_max);
        if (points[i].mask.all_visible()) full_acc = acc[i];
    }
    if (full_acc < 0.0) {
        FrameMask full;
        full.visible.assign(size_t(points[0].mask.frames()), true);
        full_acc = masked_accuracy(model, data, full, base, sigma_max);
    }

    // retention is undefined when the fully visible baseline scores zero
    std::vector<MetricRecord> out;
    for (size_t i = 0; i < points.size(); ++i) {
        out.push_back({protocol, sweep_var, points[i].value, "accuracy", acc[i], n, seed});
        if (full_acc > 0.0)
            out.push_back({protocol, sweep_var, points[i].value, "retention",
                           retention(acc[i], full_acc), n, seed});
    }
    return out;
}

}  // namespace

std::vector<MetricRecord> run_early_prediction_sweep(const GenerativeModel& model,
                                                     const VideoDataset& data,
                                                     const std::vector<double>& rho_grid,
                                                     uint64_t seed, double sigma_max) {
    if (data.samples.empty()) throw std::invalid_argument("early sweep: empty dataset");
    int t = data.samples[0].video.dim(0);
    std::vector<SweepPoint> points;
    for (double rho : rho_grid) points.push_back({rho, mask_for_observation_ratio(rho, t)});
    return accuracy_sweep(model, data, "early", "rho", points, seed, sigma_max);
}

std::vector<MetricRecord> run_sparse_sweep(const GenerativeModel& model, const VideoDataset& data,
                                           const std::vector<int>& k_grid, uint64_t seed,
                                           double sigma_max) {
    if (data.samples.empty()) throw std::invalid_argument("sparse sweep: empty dataset");
    int t = data.samples[0].video.dim(0);
    std::vector<SweepPoint> points;
    for (int k : k_grid) points.push_back({double(k), mask_for_sparse_frames(k, t)});
    return accuracy_sweep(model, data, "sparse", "k", points, seed, sigma_max);
}

std::vector<MetricRecord> run_generation_difficulty_sweep(
    const GenerativeModel& model, const VideoDataset& data,
    const std::vector<MaskProtocol>& protocols, const FeatureExtractor& ex,
    const SamplerConfig& scfg, int n_generate, uint64_t seed) {
    if (protocols.empty()) throw std::invalid_argument("generation sweep: no protocols");
    if (data.samples.empty()) throw std::invalid_argument("generation sweep: empty dataset");
    if (n_generate < 2) throw std::invalid_argument("generation sweep: need n_generate >= 2");

    Rng base(seed);
    std::vector<Tensor> ref_features;
    ref_features.reserve(data.samples.size());
    for (const VideoSample& s : data.samples) ref_features.push_back(ex.features(s.video));
    FeatureStats ref_stats = fit_feature_stats(ref_features);

    bool indicator = model.wants_mask_indicator();
    std::vector<MetricRecord> out;
    for (const MaskProtocol& proto : protocols) {
        double acc = masked_accuracy(model, data, proto.mask, base, scfg.sigma_max);

        Rng gen_base = base.fork(kGenerationStreamBit ^ mask_stream(proto.mask));
        std::vector<Tensor> gen_features;
        gen_features.reserve(size_t(n_generate));
        for (int j = 0; j < n_generate; ++j) {
            const VideoSample& s = data.samples[size_t(j) % data.samples.size()];
            Tensor cond = build_condition(s.video, proto.mask, indicator);
            Rng r = gen_base.fork(uint64_t(j));
            Tensor gen = sample(model, cond, s.video.shape(), scfg, r);
            for (int64_t i = 0; i < gen.numel(); ++i) gen.data()[i] = quantize_unit(gen.data()[i]);
            gen_features.push_back(ex.features(gen));
        }
        double fvd = frechet_distance(fit_feature_stats(gen_features), ref_stats);

        double visible = proto.mask.visible_count();
        int n = int(data.samples.size());
        out.push_back({proto.name, "visible_frames", visible, "accuracy", acc, n, seed});
        out.push_back({proto.name, "visible_frames", visible, "fvd", fvd, n_generate, seed});
    }
    return out;
}

}  // namespace uvd
