#pragma once

#include <cstdint>
#include <vector>

#include "uvd/generative.hpp"
#include "uvd/tensor.hpp"

namespace uvd {

struct SamplerConfig {
    int n_steps = 40;
    double sigma_min = 0.002;
    double sigma_max = 80.0;
    double rho = 7.0;
    double churn = 0.0;

    // classifier guidance; active when guidance_scale > 0 and target >= 0
    double guidance_scale = 0.0;
    int guidance_target = -1;

    // classifier-free mix weight; 1 = conditional model only
    double cfg_scale = 1.0;
};

struct ChurnResult {
    Tensor z_hat;
    double t_hat = 0.0;
};

// Noise-injection half step. churn == 0 leaves the state untouched and
// consumes no randomness.
ChurnResult churn_perturb(const Tensor& z, double t, double churn, int n_steps, Rng& rng);

// One Euler update from a precomputed denoised estimate. t_next == 0 returns
// the denoised estimate itself, bit for bit.
Tensor euler_step_from(const Tensor& z_hat, const Tensor& denoised, double t_hat, double t_next);

Tensor euler_step(const Tensor& z_hat, double t_hat, double t_next, const Tensor& cond,
                  const GenerativeModel& model);

// Per-step class steering term
//   -((t_next - t_hat) * t_hat / sqrt(t_hat^2 + sigma_data^2)) * scale * g
// where g is the model's class_score at (z_hat, t_hat).
Tensor classifier_guidance_delta(const GenerativeModel& model, const Tensor& z_hat,
                                 const Tensor& cond, double t_hat, double t_next, int target,
                                 double scale);

// d_uncond + w * (d_cond - d_uncond); w == 1 returns d_cond bit for bit
Tensor classifier_free_mix(const Tensor& d_cond, const Tensor& d_uncond, double w);

// Full reverse process: z ~ N(0, sigma_max^2 I) of latent_shape, then n_steps
// churn + Euler updates conditioned on cond. latent_shape may have fewer
// channels than cond when cond carries an extra visibility plane.
Tensor sample(const GenerativeModel& model, const Tensor& cond,
              const std::vector<int>& latent_shape, const SamplerConfig& cfg, Rng& rng);

}  // namespace uvd
