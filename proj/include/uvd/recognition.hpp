#pragma once

#include <cmath>
#include <cstdint>

#include "uvd/generative.hpp"
#include "uvd/masking.hpp"
#include "uvd/tensor.hpp"

namespace uvd {

struct RecognitionConfig {
    double eval_sigma = std::exp(-1.2);  // median of the training noise law
    int n_eval_draws = 4;
    uint64_t seed = 0;
};

// Full-observation path: condition on the clean clip, average logits over
// noise draws at eval_sigma. Deterministic given the config seed.
Tensor classify_full(const Tensor& z0, const RecognitionConfig& config,
                     const GenerativeModel& model);

// Partial-observation path: condition on the masked clip; the noisy channel
// is a plain standard-normal draw presented at the sigma_max noise level,
// the in-distribution limit of the preconditioned training input.
Tensor classify_partial(const Tensor& observed, const FrameMask& mask,
                        const GenerativeModel& model, Rng& rng, double sigma_max = 80.0);

struct Prediction {
    int class_index = 0;
    Tensor probs;
};

// softmax + argmax; ties break toward the smallest index
Prediction predict(const Tensor& logits);

}  // namespace uvd
