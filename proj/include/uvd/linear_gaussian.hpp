#pragma once

#include <vector>

#include "uvd/generative.hpp"
#include "uvd/masking.hpp"
#include "uvd/tensor.hpp"

namespace uvd {

// Mixture of isotropic Gaussians over flattened T*d "videos". Everything the
// rest of the system estimates with a network has a closed form here: score,
// optimal denoiser, class posterior, and frame-conditional means.
struct LinearGaussianSpec {
    int d = 2;       // coordinates per frame
    int frames = 4;  // T
    double sigma_data = 0.5;
    std::vector<Tensor> means;   // one flat [frames*d] vector per class
    std::vector<double> prior;   // class probabilities on the simplex

    int dim() const { return d * frames; }
    int num_classes() const { return int(means.size()); }
    void validate() const;

    // well-separated asymmetric pair with a nonzero mixture mean
    static LinearGaussianSpec two_class();
};

// flat [T*d] vector <-> [T,1,1,d] video layout used by the backbone
Tensor lg_to_video(const Tensor& flat, const LinearGaussianSpec& spec);
Tensor lg_from_video(const Tensor& video, const LinearGaussianSpec& spec);

// log of the sigma-smoothed mixture density at z
double lg_log_density(const Tensor& z, double sigma, const LinearGaussianSpec& spec);

// exact score of the smoothed mixture (sigma >= 0)
Tensor analytic_score(const Tensor& z, double sigma, const LinearGaussianSpec& spec);

// E[z0 | z_sigma = z]; equals z at sigma == 0
Tensor analytic_optimal_denoiser(const Tensor& z, double sigma, const LinearGaussianSpec& spec);

// Bayes posterior over classes under the smoothed mixture
Tensor analytic_posterior(const Tensor& z, double sigma, const LinearGaussianSpec& spec);

// d log p(y | z; sigma) / dz, in closed form
Tensor analytic_posterior_grad(const Tensor& z, double sigma, const LinearGaussianSpec& spec,
                               int y);

// E[z_hidden | z_S(, y)] over the hidden coordinates in flat order; empty
// tensor when every frame is observed. y < 0 marginalizes over classes.
Tensor analytic_conditional_mean(const Tensor& observed, const FrameMask& mask,
                                 const LinearGaussianSpec& spec, int y = -1);

// one draw from the mixture
Tensor lg_sample(const LinearGaussianSpec& spec, Rng& rng, int* label = nullptr);

// closed-form first two moments of the mixture
Tensor lg_mixture_mean(const LinearGaussianSpec& spec);
Tensor lg_mixture_cov(const LinearGaussianSpec& spec);  // [dim, dim]

// Drop-in oracle model for the sampler: the unconditional analytic denoiser
// plus the analytic class posterior (condition input is ignored).
class AnalyticScoreModel : public GenerativeModel {
  public:
    explicit AnalyticScoreModel(LinearGaussianSpec spec);

    Tensor denoise(const Tensor& z_noisy, const Tensor& cond, double sigma) const override;
    Tensor class_score(const Tensor& z_noisy, const Tensor& cond, double sigma,
                       int target) const override;
    // log Bayes posterior of the smoothed mixture (the condition is ignored)
    Tensor class_logits(const Tensor& z_noisy, const Tensor& cond, double sigma) const override;
    int num_classes() const override { return spec_.num_classes(); }
    double sigma_data() const override { return spec_.sigma_data; }

    const LinearGaussianSpec& spec() const { return spec_; }

  private:
    LinearGaussianSpec spec_;
};

}  // namespace uvd
