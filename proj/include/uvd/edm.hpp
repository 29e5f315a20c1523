#pragma once

#include <functional>
#include <vector>

#include "uvd/tensor.hpp"

namespace uvd::edm {

// Denoiser preconditioning coefficients around a raw backbone:
//   D(z; sigma) = c_skip(s)*z + c_out(s)*F([c_in(s)*z, cond])
struct Preconditioner {
    double sigma_data = 0.5;

    double c_skip(double sigma) const;
    double c_out(double sigma) const;
    double c_in(double sigma) const;
    double c_noise(double sigma) const;  // sigma > 0
    double lambda(double sigma) const;   // sigma > 0
};

struct Coeffs {
    double c_skip, c_out, c_in, c_noise, lambda;
};

// All five coefficients at once. c_noise and lambda are NaN/inf-free only
// for sigma > 0; at sigma == 0 they are not meaningful and set to 0 and
// infinity respectively.
Coeffs precondition(double sigma, const Preconditioner& pre);

// Noise grid for sampling, stored descending: sigmas[0] = sigma_max, ...,
// sigmas[n_steps-1] = sigma_min, sigmas[n_steps] = 0.
struct SigmaGrid {
    std::vector<double> sigmas;
    int n_steps = 0;
};

SigmaGrid karras_sigma_grid(int n_steps, double sigma_min, double sigma_max, double rho);

// Training-time noise level distribution: sigma = exp(p_mean + p_std * g).
struct TrainSigmaSampler {
    double p_mean = -1.2;
    double p_std = 1.2;
};

double sample_train_sigma(const TrainSigmaSampler& sampler, Rng& rng);

Tensor add_noise(const Tensor& z0, double sigma, const Tensor& noise);

// Raw backbone: maps the channel-concatenated input [c_in*z_noisy, cond]
// and the scalar noise embedding value to a residual of the input's latent
// channel depth.
using BackboneFn = std::function<Tensor(const Tensor& x_concat, double c_noise)>;

Tensor denoise(const Tensor& z_noisy, const Tensor& z_masked_cond, double sigma,
               const BackboneFn& backbone, const Preconditioner& pre);

Tensor score_from_denoiser(const Tensor& z_noisy, const Tensor& denoised, double sigma);

double loss_weight(double sigma, const Preconditioner& pre);

// Channel concatenation [T,C1,H,W] + [T,C2,H,W] -> [T,C1+C2,H,W].
Tensor concat_channels(const Tensor& a, const Tensor& b);

// channels [c0, c1) of a [T,C,H,W] tensor
Tensor slice_channels(const Tensor& x, int c0, int c1);

}  // namespace uvd::edm
