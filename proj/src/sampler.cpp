#include "uvd/sampler.hpp"

#include <cmath>
#include <stdexcept>

#include "uvd/edm.hpp"

namespace uvd {

ChurnResult churn_perturb(const Tensor& z, double t, double churn, int n_steps, Rng& rng) {
    if (t < 0.0) throw std::invalid_argument("churn_perturb: t must be >= 0");
    if (churn < 0.0) throw std::invalid_argument("churn_perturb: churn must be >= 0");
    if (n_steps <= 0) throw std::invalid_argument("churn_perturb: n_steps must be positive");

    ChurnResult out;
    if (churn == 0.0) {
        out.z_hat = z;
        out.t_hat = t;
        return out;
    }
    double gamma = std::min(churn / double(n_steps), std::sqrt(2.0) - 1.0);
    double t_hat = t * (1.0 + gamma);
    double extra = std::sqrt(std::max(0.0, t_hat * t_hat - t * t));
    out.z_hat = z;
    for (int64_t i = 0; i < out.z_hat.numel(); ++i) out.z_hat[i] += extra * rng.normal();
    out.t_hat = t_hat;
    return out;
}

Tensor euler_step_from(const Tensor& z_hat, const Tensor& denoised, double t_hat, double t_next) {
    if (t_hat <= 0.0) throw std::invalid_argument("euler_step: t_hat must be positive");
    if (t_next < 0.0) throw std::invalid_argument("euler_step: t_next must be >= 0");
    if (!z_hat.same_shape(denoised)) throw std::invalid_argument("euler_step: shape mismatch");
    if (t_next == 0.0) return denoised;

    Tensor out = z_hat;
    double c = (t_next - t_hat) / t_hat;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] += c * (z_hat[i] - denoised[i]);
    return out;
}

Tensor euler_step(const Tensor& z_hat, double t_hat, double t_next, const Tensor& cond,
                  const GenerativeModel& model) {
    if (t_hat <= 0.0) throw std::invalid_argument("euler_step: t_hat must be positive");
    return euler_step_from(z_hat, model.denoise(z_hat, cond, t_hat), t_hat, t_next);
}

Tensor classifier_guidance_delta(const GenerativeModel& model, const Tensor& z_hat,
                                 const Tensor& cond, double t_hat, double t_next, int target,
                                 double scale) {
    if (t_hat <= 0.0) throw std::invalid_argument("guidance: t_hat must be positive");
    if (scale < 0.0) throw std::invalid_argument("guidance: scale must be >= 0");
    Tensor g = model.class_score(z_hat, cond, t_hat, target);
    double sd = model.sigma_data();
    double coef = -((t_next - t_hat) * t_hat / std::sqrt(t_hat * t_hat + sd * sd)) * scale;
    g *= coef;
    return g;
}

Tensor classifier_free_mix(const Tensor& d_cond, const Tensor& d_uncond, double w) {
    if (!d_cond.same_shape(d_uncond)) throw std::invalid_argument("cfg mix: shape mismatch");
    if (w == 1.0) return d_cond;
    Tensor out = d_uncond;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] += w * (d_cond[i] - d_uncond[i]);
    return out;
}

Tensor sample(const GenerativeModel& model, const Tensor& cond,
              const std::vector<int>& latent_shape, const SamplerConfig& cfg, Rng& rng) {
    if (cfg.n_steps <= 0) throw std::invalid_argument("sample: n_steps must be positive");
    if (cfg.cfg_scale < 1.0) throw std::invalid_argument("sample: cfg_scale must be >= 1");
    if (latent_shape.size() != 4) throw std::invalid_argument("sample: latent shape must be 4-d");
    if (cond.shape().size() != 4 || cond.shape()[0] != latent_shape[0] ||
        cond.shape()[2] != latent_shape[2] || cond.shape()[3] != latent_shape[3])
        throw std::invalid_argument("sample: cond incompatible with latent shape");
    bool guided = cfg.guidance_scale > 0.0 && cfg.guidance_target >= 0;
    if (guided && cfg.guidance_target >= model.num_classes())
        throw std::invalid_argument("sample: guidance target out of range");

    edm::SigmaGrid grid = edm::karras_sigma_grid(cfg.n_steps, cfg.sigma_min, cfg.sigma_max, cfg.rho);

    Tensor z = Tensor::randn(latent_shape, rng);
    z *= cfg.sigma_max;

    Tensor uncond;
    if (cfg.cfg_scale != 1.0) uncond = Tensor::zeros(cond.shape());

    for (int i = 0; i < cfg.n_steps; ++i) {
        double t = grid.sigmas[size_t(i)];
        double t_next = grid.sigmas[size_t(i) + 1];
        ChurnResult ch = churn_perturb(z, t, cfg.churn, cfg.n_steps, rng);

        Tensor d = model.denoise(ch.z_hat, cond, ch.t_hat);
        if (cfg.cfg_scale != 1.0)
            d = classifier_free_mix(d, model.denoise(ch.z_hat, uncond, ch.t_hat), cfg.cfg_scale);

        z = euler_step_from(ch.z_hat, d, ch.t_hat, t_next);
        if (guided) {
            // The steering term enters through the slope estimate, so the
            // state update carries the opposite sign of the step length;
            // this is what moves the trajectory toward the target class.
            Tensor delta = classifier_guidance_delta(model, ch.z_hat, cond, ch.t_hat, t_next,
                                                     cfg.guidance_target, cfg.guidance_scale);
            z.add_scaled(delta, -(t_next - ch.t_hat));
        }
    }
    return z;
}

}  // namespace uvd
