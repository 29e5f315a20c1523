#include "uvd/edm.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace uvd::edm {

double Preconditioner::c_skip(double sigma) const {
    double sd2 = sigma_data * sigma_data;
    return sd2 / (sigma * sigma + sd2);
}

double Preconditioner::c_out(double sigma) const {
    double sd2 = sigma_data * sigma_data;
    return sigma * sigma_data / std::sqrt(sigma * sigma + sd2);
}

double Preconditioner::c_in(double sigma) const {
    double sd2 = sigma_data * sigma_data;
    return 1.0 / std::sqrt(sigma * sigma + sd2);
}

double Preconditioner::c_noise(double sigma) const { return 0.25 * std::log(sigma); }

double Preconditioner::lambda(double sigma) const {
    double sd2 = sigma_data * sigma_data;
    double ss = sigma * sigma_data;
    return (sigma * sigma + sd2) / (ss * ss);
}

Coeffs precondition(double sigma, const Preconditioner& pre) {
    if (!(sigma >= 0.0)) throw std::invalid_argument("precondition: sigma must be >= 0");
    Coeffs c;
    c.c_skip = pre.c_skip(sigma);
    c.c_out = pre.c_out(sigma);
    c.c_in = pre.c_in(sigma);
    if (sigma > 0.0) {
        c.c_noise = pre.c_noise(sigma);
        c.lambda = pre.lambda(sigma);
    } else {
        c.c_noise = 0.0;
        c.lambda = std::numeric_limits<double>::infinity();
    }
    return c;
}

SigmaGrid karras_sigma_grid(int n_steps, double sigma_min, double sigma_max, double rho) {
    if (n_steps < 2) throw std::invalid_argument("karras_sigma_grid: n_steps must be >= 2");
    if (!(sigma_min > 0.0) || !(sigma_min < sigma_max))
        throw std::invalid_argument("karras_sigma_grid: need 0 < sigma_min < sigma_max");
    if (!(rho > 0.0)) throw std::invalid_argument("karras_sigma_grid: rho must be > 0");

    SigmaGrid grid;
    grid.n_steps = n_steps;
    grid.sigmas.resize(size_t(n_steps) + 1);
    double max_inv_rho = std::pow(sigma_max, 1.0 / rho);
    double min_inv_rho = std::pow(sigma_min, 1.0 / rho);
    for (int i = 0; i < n_steps; ++i) {
        double f = double(i) / double(n_steps - 1);
        grid.sigmas[size_t(i)] = std::pow(max_inv_rho + f * (min_inv_rho - max_inv_rho), rho);
    }
    grid.sigmas[0] = sigma_max;
    grid.sigmas[size_t(n_steps) - 1] = sigma_min;
    grid.sigmas[size_t(n_steps)] = 0.0;
    return grid;
}

double sample_train_sigma(const TrainSigmaSampler& sampler, Rng& rng) {
    if (!(sampler.p_std >= 0.0))
        throw std::invalid_argument("sample_train_sigma: p_std must be >= 0");
    return std::exp(sampler.p_mean + sampler.p_std * rng.normal());
}

Tensor add_noise(const Tensor& z0, double sigma, const Tensor& noise) {
    if (!z0.same_shape(noise)) throw std::invalid_argument("add_noise: shape mismatch");
    if (!(sigma >= 0.0)) throw std::invalid_argument("add_noise: sigma must be >= 0");
    Tensor out = z0;
    out.add_scaled(noise, sigma);
    return out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 4 || b.ndim() != 4)
        throw std::invalid_argument("concat_channels: expected [T,C,H,W] tensors");
    if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
        throw std::invalid_argument("concat_channels: [T,H,W] dims differ");
    int t = a.dim(0), ca = a.dim(1), cb = b.dim(1), h = a.dim(2), w = a.dim(3);
    Tensor out({t, ca + cb, h, w});
    int64_t plane = int64_t(h) * w;
    for (int f = 0; f < t; ++f) {
        const double* pa = a.data() + int64_t(f) * ca * plane;
        const double* pb = b.data() + int64_t(f) * cb * plane;
        double* po = out.data() + int64_t(f) * (ca + cb) * plane;
        std::copy(pa, pa + ca * plane, po);
        std::copy(pb, pb + cb * plane, po + ca * plane);
    }
    return out;
}

Tensor slice_channels(const Tensor& x, int c0, int c1) {
    if (x.ndim() != 4) throw std::invalid_argument("slice_channels: expected [T,C,H,W]");
    if (c0 < 0 || c1 > x.dim(1) || c0 >= c1)
        throw std::invalid_argument("slice_channels: bad channel range");
    int t = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    Tensor out({t, c1 - c0, h, w});
    int64_t plane = int64_t(h) * w;
    for (int f = 0; f < t; ++f) {
        const double* src = x.data() + (int64_t(f) * c + c0) * plane;
        std::copy(src, src + int64_t(c1 - c0) * plane,
                  out.data() + int64_t(f) * (c1 - c0) * plane);
    }
    return out;
}

Tensor denoise(const Tensor& z_noisy, const Tensor& z_masked_cond, double sigma,
               const BackboneFn& backbone, const Preconditioner& pre) {
    if (!(sigma >= 0.0)) throw std::invalid_argument("denoise: sigma must be >= 0");
    if (z_noisy.ndim() != 4 || !z_noisy.same_shape(z_masked_cond))
        throw std::invalid_argument("denoise: z_noisy/cond must be equal-shape [T,C,H,W]");
    if (sigma == 0.0) return z_noisy;  // c_skip=1, c_out=0

    Coeffs c = precondition(sigma, pre);
    Tensor x = concat_channels(c.c_in * z_noisy, z_masked_cond);
    Tensor f = backbone(x, c.c_noise);
    if (!f.same_shape(z_noisy))
        throw NumericalError("denoise: backbone output shape violates contract");
    Tensor out = c.c_skip * z_noisy;
    out.add_scaled(f, c.c_out);
    return out;
}

Tensor score_from_denoiser(const Tensor& z_noisy, const Tensor& denoised, double sigma) {
    if (!z_noisy.same_shape(denoised))
        throw std::invalid_argument("score_from_denoiser: shape mismatch");
    if (!(sigma > 0.0)) throw std::domain_error("score_from_denoiser: undefined at sigma == 0");
    Tensor out = denoised;
    out -= z_noisy;
    out *= 1.0 / (sigma * sigma);
    return out;
}

double loss_weight(double sigma, const Preconditioner& pre) {
    if (!(sigma > 0.0)) throw std::invalid_argument("loss_weight: sigma must be > 0");
    return pre.lambda(sigma);
}

}  // namespace uvd::edm
