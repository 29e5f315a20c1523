#pragma once

#include <utility>
#include <vector>

#include "uvd/tensor.hpp"

namespace uvd {

double top1_accuracy(const std::vector<int>& predictions, const std::vector<int>& labels);

// accuracy / full_accuracy; full_accuracy must be positive
double retention(double accuracy, double full_accuracy);

// pointwise retention over (sweep value, accuracy) pairs; the pair whose
// accuracy equals full_accuracy maps to exactly 1.0
std::vector<std::pair<double, double>> retention_curve(
    const std::vector<std::pair<double, double>>& accuracy_by_value, double full_accuracy);

// Gaussian fit of a feature cloud.
struct FeatureStats {
    Tensor mean;  // [D]
    Tensor cov;   // [D, D], symmetric positive semidefinite
    int dim() const { return mean.empty() ? 0 : mean.dim(0); }
};

// unbiased sample moments; needs at least two samples
FeatureStats fit_feature_stats(const std::vector<Tensor>& features);

// squared 2-Wasserstein distance between the fitted Gaussians,
//   |mu_a - mu_b|^2 + tr(S_a + S_b - 2 (S_a S_b)^{1/2})
// matrix square roots via eigendecomposition; eigenvalue mass below zero is
// rounding noise on a PSD input and is clamped at 0
double frechet_distance(const FeatureStats& a, const FeatureStats& b);

}  // namespace uvd
