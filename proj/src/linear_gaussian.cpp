#include "uvd/linear_gaussian.hpp"

#include <cmath>
#include <stdexcept>

namespace uvd {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// log pi_y - ||z - mu_y||^2 / (2 s2), the shared normalizer dropped
std::vector<double> class_log_weights(const Tensor& z, double s2,
                                      const LinearGaussianSpec& spec) {
    std::vector<double> lw(size_t(spec.num_classes()));
    for (int y = 0; y < spec.num_classes(); ++y) {
        double q = 0.0;
        const Tensor& mu = spec.means[size_t(y)];
        for (int64_t i = 0; i < z.numel(); ++i) {
            double d = z[i] - mu[i];
            q += d * d;
        }
        lw[size_t(y)] = std::log(spec.prior[size_t(y)]) - q / (2.0 * s2);
    }
    return lw;
}

double log_sum_exp(const std::vector<double>& v) {
    double m = v[0];
    for (double x : v) m = std::max(m, x);
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

std::vector<double> responsibilities(const std::vector<double>& lw) {
    double lse = log_sum_exp(lw);
    std::vector<double> r(lw.size());
    for (size_t i = 0; i < lw.size(); ++i) r[i] = std::exp(lw[i] - lse);
    return r;
}

void check_point(const Tensor& z, const LinearGaussianSpec& spec) {
    if (z.numel() != spec.dim())
        throw std::invalid_argument("linear_gaussian: point dimension mismatch");
}

}  // namespace

void LinearGaussianSpec::validate() const {
    if (d <= 0 || frames <= 0) throw std::invalid_argument("LinearGaussianSpec: bad shape");
    if (!(sigma_data > 0.0))
        throw std::invalid_argument("LinearGaussianSpec: sigma_data must be > 0");
    if (means.empty() || means.size() != prior.size())
        throw std::invalid_argument("LinearGaussianSpec: means/prior size mismatch");
    double p = 0.0;
    for (double x : prior) {
        if (!(x > 0.0)) throw std::invalid_argument("LinearGaussianSpec: prior must be positive");
        p += x;
    }
    if (std::fabs(p - 1.0) > 1e-9)
        throw std::invalid_argument("LinearGaussianSpec: prior must sum to 1");
    for (const Tensor& mu : means)
        if (mu.numel() != dim())
            throw std::invalid_argument("LinearGaussianSpec: mean dimension mismatch");
}

LinearGaussianSpec LinearGaussianSpec::two_class() {
    LinearGaussianSpec spec;
    spec.d = 2;
    spec.frames = 4;
    spec.sigma_data = 0.5;
    Tensor mu0({8}), mu1({8});
    for (int t = 0; t < 4; ++t) {
        mu0[2 * t] = -1.0 + 1.0 * t;          // ramp -1 .. 2
        mu0[2 * t + 1] = -1.0 + (2.0 / 3) * t;  // ramp -1 .. 1
        mu1[2 * t] = 1.2;
        mu1[2 * t + 1] = -0.8;
    }
    spec.means = {mu0, mu1};
    spec.prior = {0.6, 0.4};
    return spec;
}

Tensor lg_to_video(const Tensor& flat, const LinearGaussianSpec& spec) {
    check_point(flat, spec);
    return flat.reshaped({spec.frames, 1, 1, spec.d});
}

Tensor lg_from_video(const Tensor& video, const LinearGaussianSpec& spec) {
    if (video.ndim() != 4 || video.dim(0) != spec.frames || video.dim(1) != 1 ||
        video.dim(2) != 1 || video.dim(3) != spec.d)
        throw std::invalid_argument("lg_from_video: expected [T,1,1,d] layout");
    return video.reshaped({spec.dim()});
}

double lg_log_density(const Tensor& z, double sigma, const LinearGaussianSpec& spec) {
    check_point(z, spec);
    if (!(sigma >= 0.0)) throw std::invalid_argument("lg_log_density: sigma must be >= 0");
    double s2 = sigma * sigma + spec.sigma_data * spec.sigma_data;
    std::vector<double> lw = class_log_weights(z, s2, spec);
    return log_sum_exp(lw) - 0.5 * double(spec.dim()) * std::log(kTwoPi * s2);
}

Tensor analytic_score(const Tensor& z, double sigma, const LinearGaussianSpec& spec) {
    check_point(z, spec);
    if (!(sigma >= 0.0)) throw std::invalid_argument("analytic_score: sigma must be >= 0");
    double s2 = sigma * sigma + spec.sigma_data * spec.sigma_data;
    std::vector<double> r = responsibilities(class_log_weights(z, s2, spec));
    Tensor out(z.shape());
    for (int y = 0; y < spec.num_classes(); ++y) {
        const Tensor& mu = spec.means[size_t(y)];
        for (int64_t i = 0; i < z.numel(); ++i) out[i] += r[size_t(y)] * (mu[i] - z[i]) / s2;
    }
    return out;
}

Tensor analytic_optimal_denoiser(const Tensor& z, double sigma,
                                 const LinearGaussianSpec& spec) {
    check_point(z, spec);
    if (!(sigma >= 0.0))
        throw std::invalid_argument("analytic_optimal_denoiser: sigma must be >= 0");
    double sd2 = spec.sigma_data * spec.sigma_data;
    double s2 = sigma * sigma + sd2;
    std::vector<double> r = responsibilities(class_log_weights(z, s2, spec));
    Tensor out(z.shape());
    for (int y = 0; y < spec.num_classes(); ++y) {
        const Tensor& mu = spec.means[size_t(y)];
        for (int64_t i = 0; i < z.numel(); ++i)
            out[i] += r[size_t(y)] * (sd2 * z[i] + sigma * sigma * mu[i]) / s2;
    }
    return out;
}

Tensor analytic_posterior(const Tensor& z, double sigma, const LinearGaussianSpec& spec) {
    check_point(z, spec);
    if (!(sigma >= 0.0)) throw std::invalid_argument("analytic_posterior: sigma must be >= 0");
    double s2 = sigma * sigma + spec.sigma_data * spec.sigma_data;
    std::vector<double> r = responsibilities(class_log_weights(z, s2, spec));
    Tensor out({spec.num_classes()});
    for (int y = 0; y < spec.num_classes(); ++y) out[y] = r[size_t(y)];
    return out;
}

Tensor analytic_posterior_grad(const Tensor& z, double sigma, const LinearGaussianSpec& spec,
                               int y) {
    check_point(z, spec);
    if (y < 0 || y >= spec.num_classes())
        throw std::invalid_argument("analytic_posterior_grad: class index out of range");
    double s2 = sigma * sigma + spec.sigma_data * spec.sigma_data;
    std::vector<double> r = responsibilities(class_log_weights(z, s2, spec));
    // grad log p(y|z) = (mu_y - sum_k r_k mu_k) / s2; the z terms cancel
    Tensor out(z.shape());
    const Tensor& mu_y = spec.means[size_t(y)];
    for (int64_t i = 0; i < z.numel(); ++i) {
        double blend = 0.0;
        for (int k = 0; k < spec.num_classes(); ++k)
            blend += r[size_t(k)] * spec.means[size_t(k)][i];
        out[i] = (mu_y[i] - blend) / s2;
    }
    return out;
}

Tensor analytic_conditional_mean(const Tensor& observed, const FrameMask& mask,
                                 const LinearGaussianSpec& spec, int y) {
    check_point(observed, spec);
    if (mask.frames() != spec.frames)
        throw std::invalid_argument("analytic_conditional_mean: mask length mismatch");
    if (mask.all_hidden())
        throw std::invalid_argument("analytic_conditional_mean: no observed frames");
    if (y >= spec.num_classes())
        throw std::invalid_argument("analytic_conditional_mean: class index out of range");
    if (mask.all_visible()) return Tensor();

    int hidden = spec.d * mask.hidden_count();
    Tensor out({hidden});
    std::vector<double> w;
    if (y >= 0) {
        w.assign(size_t(spec.num_classes()), 0.0);
        w[size_t(y)] = 1.0;
    } else {
        // responsibilities from the observed coordinates only
        double sd2 = spec.sigma_data * spec.sigma_data;
        std::vector<double> lw(size_t(spec.num_classes()));
        for (int k = 0; k < spec.num_classes(); ++k) {
            double q = 0.0;
            const Tensor& mu = spec.means[size_t(k)];
            for (int t = 0; t < spec.frames; ++t) {
                if (!mask.visible[size_t(t)]) continue;
                for (int j = 0; j < spec.d; ++j) {
                    double dd = observed[t * spec.d + j] - mu[t * spec.d + j];
                    q += dd * dd;
                }
            }
            lw[size_t(k)] = std::log(spec.prior[size_t(k)]) - q / (2.0 * sd2);
        }
        w = responsibilities(lw);
    }

    int pos = 0;
    for (int t = 0; t < spec.frames; ++t) {
        if (mask.visible[size_t(t)]) continue;
        for (int j = 0; j < spec.d; ++j, ++pos)
            for (int k = 0; k < spec.num_classes(); ++k)
                out[pos] += w[size_t(k)] * spec.means[size_t(k)][t * spec.d + j];
    }
    return out;
}

Tensor lg_sample(const LinearGaussianSpec& spec, Rng& rng, int* label) {
    double u = rng.uniform();
    int y = spec.num_classes() - 1;
    double acc = 0.0;
    for (int k = 0; k < spec.num_classes(); ++k) {
        acc += spec.prior[size_t(k)];
        if (u < acc) {
            y = k;
            break;
        }
    }
    if (label) *label = y;
    Tensor z = spec.means[size_t(y)];
    for (int64_t i = 0; i < z.numel(); ++i) z[i] += spec.sigma_data * rng.normal();
    return z;
}

Tensor lg_mixture_mean(const LinearGaussianSpec& spec) {
    Tensor mu({spec.dim()});
    for (int y = 0; y < spec.num_classes(); ++y)
        mu.add_scaled(spec.means[size_t(y)], spec.prior[size_t(y)]);
    return mu;
}

Tensor lg_mixture_cov(const LinearGaussianSpec& spec) {
    int n = spec.dim();
    Tensor mu = lg_mixture_mean(spec);
    Tensor cov({n, n});
    double sd2 = spec.sigma_data * spec.sigma_data;
    for (int i = 0; i < n; ++i) cov.at2(i, i) = sd2;
    for (int y = 0; y < spec.num_classes(); ++y) {
        const Tensor& m = spec.means[size_t(y)];
        double p = spec.prior[size_t(y)];
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) cov.at2(i, j) += p * (m[i] - mu[i]) * (m[j] - mu[j]);
    }
    return cov;
}

AnalyticScoreModel::AnalyticScoreModel(LinearGaussianSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
}

Tensor AnalyticScoreModel::denoise(const Tensor& z_noisy, const Tensor& cond,
                                   double sigma) const {
    (void)cond;
    Tensor flat = lg_from_video(z_noisy, spec_);
    return lg_to_video(analytic_optimal_denoiser(flat, sigma, spec_), spec_);
}

Tensor AnalyticScoreModel::class_score(const Tensor& z_noisy, const Tensor& cond, double sigma,
                                       int target) const {
    (void)cond;
    Tensor flat = lg_from_video(z_noisy, spec_);
    Tensor g = analytic_posterior_grad(flat, sigma, spec_, target);
    // the classifier input is c_in-scaled, so the chain rule multiplies by
    // 1/c_in = sqrt(sigma^2 + sigma_data^2)
    double s = std::sqrt(sigma * sigma + spec_.sigma_data * spec_.sigma_data);
    g *= s;
    return lg_to_video(g, spec_);
}

Tensor AnalyticScoreModel::class_logits(const Tensor& z_noisy, const Tensor& cond,
                                        double sigma) const {
    (void)cond;
    Tensor flat = lg_from_video(z_noisy, spec_);
    Tensor post = analytic_posterior(flat, sigma, spec_);
    Tensor logits({spec_.num_classes()});
    for (int y = 0; y < spec_.num_classes(); ++y)
        logits[y] = std::log(std::max(post[y], 1e-300));
    return logits;
}

}  // namespace uvd
