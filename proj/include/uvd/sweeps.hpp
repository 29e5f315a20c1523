#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "uvd/extractor.hpp"
#include "uvd/generative.hpp"
#include "uvd/masking.hpp"
#include "uvd/sampler.hpp"
#include "uvd/temporal_shapes.hpp"

namespace uvd {

struct MetricRecord {
    std::string protocol;
    std::string sweep_var;
    double sweep_value = 0.0;
    std::string metric_name;
    double metric_value = 0.0;
    int n = 0;
    uint64_t seed = 0;
};

bool operator==(const MetricRecord& a, const MetricRecord& b);

// doubles are printed with 17 significant digits, so parsing is lossless
std::string metric_records_to_csv(const std::vector<MetricRecord>& records);
std::vector<MetricRecord> metric_records_from_csv(const std::string& csv);
void write_metric_csv(const std::vector<MetricRecord>& records, const std::string& path);
std::vector<MetricRecord> read_metric_csv(const std::string& path);

// Prefix-observation classification over a grid of observed fractions.
// Emits an accuracy and a retention record per grid point; retention divides
// by the all-visible point (computed as an extra pass when the grid lacks
// one). Every random draw is forked from `seed`, so results are reproducible
// and independent of grid order.
std::vector<MetricRecord> run_early_prediction_sweep(const GenerativeModel& model,
                                                     const VideoDataset& data,
                                                     const std::vector<double>& rho_grid,
                                                     uint64_t seed, double sigma_max = 80.0);

// Same protocol over counts of uniformly spread visible frames.
std::vector<MetricRecord> run_sparse_sweep(const GenerativeModel& model, const VideoDataset& data,
                                           const std::vector<int>& k_grid, uint64_t seed,
                                           double sigma_max = 80.0);

struct MaskProtocol {
    std::string name;
    FrameMask mask;
};

// For each mask protocol: partial-observation accuracy over the dataset, and
// the Frechet feature distance between mask-conditioned generations (snapped
// to the 8-bit storage grid) and the real clips.
std::vector<MetricRecord> run_generation_difficulty_sweep(
    const GenerativeModel& model, const VideoDataset& data,
    const std::vector<MaskProtocol>& protocols, const FeatureExtractor& ex,
    const SamplerConfig& scfg, int n_generate, uint64_t seed);

}  // namespace uvd
