#pragma once

#include "uvd/tensor.hpp"

namespace uvd {

// What the sampler needs from a model: a denoised estimate and, for guided
// sampling, the gradient of the target-class log-probability with respect to
// the preconditioned (c_in-scaled) noisy input.
class GenerativeModel {
  public:
    virtual ~GenerativeModel() = default;

    // D(z_noisy; cond, sigma), same shape as z_noisy
    virtual Tensor denoise(const Tensor& z_noisy, const Tensor& cond, double sigma) const = 0;

    // d log p(target | c_in(sigma)*z_noisy, cond) / d(c_in(sigma)*z_noisy)
    virtual Tensor class_score(const Tensor& z_noisy, const Tensor& cond, double sigma,
                               int target) const = 0;

    // class logits given the noisy input (scaled internally) and condition
    virtual Tensor class_logits(const Tensor& z_noisy, const Tensor& cond,
                                double sigma) const = 0;

    virtual int num_classes() const = 0;
    virtual double sigma_data() const = 0;

    // whether condition tensors must carry the visibility indicator plane
    virtual bool wants_mask_indicator() const { return false; }
};

}  // namespace uvd
