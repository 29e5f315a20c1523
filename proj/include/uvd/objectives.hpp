#pragma once

#include <vector>

#include "uvd/edm.hpp"
#include "uvd/tensor.hpp"

namespace uvd {

struct LossBreakdown {
    double gen_loss = 0.0;
    double cls_loss = 0.0;
    double total = 0.0;
    double gamma = 10.0;
};

// lambda(sigma) * mean squared error between the denoised estimate and the
// clean target
double generative_loss(const Tensor& z0, const Tensor& denoised, double sigma,
                       const edm::Preconditioner& pre);

// mean over the batch of -sum_i y_i log softmax(logits)_i
double classification_loss(const Tensor& one_hot, const Tensor& logits);
double classification_loss(const std::vector<int>& labels, const Tensor& logits);

Tensor one_hot(const std::vector<int>& labels, int num_classes);

LossBreakdown total_loss(double gen, double cls, double gamma);

// With probability p_drop replaces the condition with all zeros (the
// all-hidden condition); otherwise returns it unchanged.
Tensor condition_dropout(const Tensor& z_masked, Rng& rng, double p_drop);

}  // namespace uvd
