#pragma once

#include "uvd/backbone.hpp"
#include "uvd/edm.hpp"
#include "uvd/generative.hpp"

namespace uvd {

// The denoiser-classifier pair: one UNet trunk serving an EDM-preconditioned
// denoising output and a pooled classification output from the feature tap.
class VideoModel : public GenerativeModel {
  public:
    VideoModel(const BackboneConfig& cfg, double sigma_data, uint64_t init_seed);

    Tensor denoise(const Tensor& z_noisy, const Tensor& cond, double sigma) const override;
    Tensor class_score(const Tensor& z_noisy, const Tensor& cond, double sigma,
                       int target) const override;
    int num_classes() const override { return cfg_.num_classes; }
    double sigma_data() const override { return pre_.sigma_data; }
    bool wants_mask_indicator() const override { return cfg_.mask_indicator_channel; }
    Tensor class_logits(const Tensor& z_noisy, const Tensor& cond, double sigma) const override {
        return classify(z_noisy, cond, sigma);
    }

    // logits with the noisy channel scaled by c_in(sigma) internally
    Tensor classify(const Tensor& z_noisy, const Tensor& cond, double sigma) const;
    // logits from a caller-prepared noisy channel (already on the c_in scale)
    Tensor logits_from_scaled(const Tensor& scaled_noisy, const Tensor& cond,
                              double sigma) const;
    // d log softmax(target) / d(scaled noisy channel)
    Tensor class_score_scaled(const Tensor& scaled_noisy, const Tensor& cond, double sigma,
                              int target) const;

    struct SampleLosses {
        double gen = 0.0;  // lambda(sigma) * MSE(D, z0)
        double cls = 0.0;  // cross-entropy of the head logits
    };
    // Accumulates parameter gradients of w_cls*cls + w_gen*gen for one
    // example. A zero weight skips that branch entirely.
    SampleLosses accumulate(const Tensor& z0, const Tensor& cond, int label, double sigma,
                            const Tensor& noise, double w_gen, double w_cls, nn::Grads& g) const;

    nn::Params& params() { return params_; }
    const nn::Params& params() const { return params_; }
    const BackboneConfig& config() const { return cfg_; }
    const edm::Preconditioner& preconditioner() const { return pre_; }

  private:
    BackboneConfig cfg_;
    edm::Preconditioner pre_;
    nn::Params params_;
    UNet unet_;
    ClassifierHead head_;

    VideoModel(const BackboneConfig& cfg, double sigma_data, Rng rng);
    void check_pair(const Tensor& z, const Tensor& cond) const;
};

}  // namespace uvd
