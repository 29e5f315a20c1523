#pragma once

#include <string>
#include <vector>

#include "uvd/nn.hpp"

namespace uvd {

struct BackboneConfig {
    int latent_channels = 1;  // D
    int base_channels = 64;
    std::vector<int> channel_multipliers{1, 2, 2, 4};
    int num_up_blocks = 4;
    int feature_tap_index = 2;  // 1-based decoder stage of the classification tap
    int num_classes = 8;
    std::string temporal_mixing = "temporal_attention";
    int emb_dim = 64;
    int gn_groups = 8;
    bool mask_indicator_channel = false;

    void validate() const;
    int stage_channels(int stage) const { return base_channels * channel_multipliers.at(size_t(stage)); }
    int tap_channels() const { return stage_channels(num_up_blocks - feature_tap_index); }
    int in_channels() const { return 2 * latent_channels + (mask_indicator_channel ? 1 : 0); }
    int cond_channels() const { return latent_channels + (mask_indicator_channel ? 1 : 0); }
};

namespace detail {

struct ResBlock {
    nn::GroupNorm gn1;
    nn::Conv2d conv1;
    nn::Linear emb_proj;
    nn::GroupNorm gn2;
    nn::Conv2d conv2;
    nn::Conv2d skip;
    bool use_skip = false;
    int cin = 0, cout = 0;

    void init(nn::Params& p, const std::string& name, int cin_, int cout_, int emb_dim,
              int gn_groups, Rng& rng);
    Tensor forward(const nn::Params& p, const Tensor& x, const Tensor& emb, nn::Tape* tape) const;
    // gemb accumulates the embedding gradient when non-null
    Tensor backward(const nn::Params& p, const Tensor& gy, nn::Tape& tape, nn::Grads* g,
                    Tensor* gemb) const;
};

struct TemporalMix {
    bool use_attention = true;
    nn::TemporalAttention attn;
    nn::TemporalConv tconv;

    void init(nn::Params& p, const std::string& name, int channels, bool attention, Rng& rng);
    Tensor forward(const nn::Params& p, const Tensor& x, nn::Tape* tape) const;
    Tensor backward(const nn::Params& p, const Tensor& gy, nn::Tape& tape, nn::Grads* g) const;
};

struct Stage {
    ResBlock res;
    TemporalMix mix;

    void init(nn::Params& p, const std::string& name, int cin, int cout, int emb_dim,
              int gn_groups, bool attention, Rng& rng);
    Tensor forward(const nn::Params& p, const Tensor& x, const Tensor& emb, nn::Tape* tape) const;
    Tensor backward(const nn::Params& p, const Tensor& gy, nn::Tape& tape, nn::Grads* g,
                    Tensor* gemb) const;
};

}  // namespace detail

// 4-stage encoder/decoder over [T, 2D, H, W] with per-stage spatial residual
// blocks, temporal mixing, sigma conditioning, and a feature tap at one
// decoder stage. forward_mode selects how much of the decoder runs.
class UNet {
  public:
    enum class Mode { full, to_tap };

    UNet(const BackboneConfig& cfg, nn::Params& params, Rng& rng);

    struct Out {
        Tensor residual;  // empty in to_tap mode
        Tensor tap;       // empty when capture_tap == false
    };

    Out forward(const nn::Params& p, const Tensor& x, double c_noise, nn::Tape* tape, Mode mode,
                bool capture_tap) const;

    // Reverse of forward. g_residual may be empty (cls-only), g_tap may be
    // empty (gen-only); mode must match the forward call that filled the tape.
    // Returns the gradient w.r.t. the input x.
    Tensor backward(const nn::Params& p, const Tensor& g_residual, const Tensor& g_tap,
                    nn::Tape& tape, nn::Grads* g, Mode mode) const;

    const BackboneConfig& config() const { return cfg_; }

  private:
    BackboneConfig cfg_;
    nn::Linear emb_l1_, emb_l2_;
    nn::Conv2d in_conv_;
    std::vector<detail::Stage> down_;
    detail::Stage mid_;
    std::vector<detail::Stage> up_;
    nn::GroupNorm out_gn_;
    nn::Conv2d out_conv_;
    nn::SiLU silu_;
    nn::AvgPool2 pool_;
    nn::UpsampleNearest upsample_;

    Tensor embed(const nn::Params& p, double c_noise, nn::Tape* tape) const;
};

// attentive pooling over the tap tokens followed by a linear classifier
class ClassifierHead {
  public:
    ClassifierHead() = default;
    ClassifierHead(int tap_channels, int num_classes, nn::Params& params, Rng& rng);

    Tensor forward(const nn::Params& p, const Tensor& tap, nn::Tape* tape) const;
    Tensor backward(const nn::Params& p, const Tensor& glogits, nn::Tape& tape,
                    nn::Grads* g) const;

  private:
    nn::AttentivePool pool_;
    nn::Linear fc_;
    int channels_ = 0;
    int num_classes_ = 0;
};

}  // namespace uvd
