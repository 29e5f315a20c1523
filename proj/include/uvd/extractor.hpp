#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "uvd/metrics.hpp"
#include "uvd/nn.hpp"
#include "uvd/temporal_shapes.hpp"

namespace uvd {

// Small 3D-convolutional video classifier. Once trained and frozen, its
// pooled penultimate activations define the feature space for the video
// Frechet metric.
struct ExtractorConfig {
    int in_channels = 1;
    std::vector<int> channels{16, 32, 64};  // stride-2 ladder
    int num_classes = 8;
    int kernel = 3;

    int feature_dim() const { return channels.back(); }
    void validate() const;
};

// stable digest of the architecture fields, used to guard checkpoint loads
uint64_t extractor_config_hash(const ExtractorConfig& cfg);

class FeatureExtractor {
  public:
    FeatureExtractor(const ExtractorConfig& cfg, uint64_t seed);

    // [T, C, H, W] video -> pooled feature vector [feature_dim]
    Tensor features(const Tensor& video) const;
    // [T, C, H, W] video -> class logits [num_classes]
    Tensor logits(const Tensor& video) const;

    const ExtractorConfig& config() const { return cfg_; }
    nn::Params& params() { return params_; }
    const nn::Params& params() const { return params_; }

  private:
    ExtractorConfig cfg_;
    nn::Params params_;
    std::vector<nn::Conv3d> convs_;
    nn::Linear fc_;
    nn::SiLU silu_;

    Tensor pooled(const Tensor& video, nn::Tape* tape) const;
    Tensor pooled_backward(const Tensor& gfeat, nn::Tape& tape, nn::Grads* g) const;

    friend double train_extractor(FeatureExtractor&, const VideoDataset&,
                                  const struct ExtractorTrainConfig&);
};

struct ExtractorTrainConfig {
    int steps = 500;
    int batch = 8;
    double lr = 3e-3;
    uint64_t seed = 7;
};

// Supervised cross-entropy training on labeled clips; returns the mean loss
// over the final fifth of the steps.
double train_extractor(FeatureExtractor& ex, const VideoDataset& data,
                       const ExtractorTrainConfig& tcfg);

double extractor_accuracy(const FeatureExtractor& ex, const VideoDataset& data);

void save_extractor(const FeatureExtractor& ex, const std::string& path);

// construction seed is irrelevant here; every weight comes from the file
FeatureExtractor load_extractor(const ExtractorConfig& cfg, const std::string& path);

// load when the file exists, otherwise train on `data`, save, and return
FeatureExtractor load_or_train_extractor(const ExtractorConfig& cfg, const std::string& path,
                                         const VideoDataset& data,
                                         const ExtractorTrainConfig& tcfg);

// Frechet distance between Gaussian fits of extracted features; each side
// needs at least two clips.
double toy_fvd(const std::vector<Tensor>& generated, const std::vector<Tensor>& reference,
               const FeatureExtractor& ex);

}  // namespace uvd
