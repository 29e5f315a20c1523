#include <doctest.h>

#include <cmath>

#include "testutil.hpp"
#include "uvd/edm.hpp"
#include "uvd/linear_gaussian.hpp"
#include "uvd/sampler.hpp"

using namespace uvd;
namespace tu = uvd::testutil;

namespace {

// D(z) = z: the probability-flow velocity vanishes everywhere
struct IdentityModel : GenerativeModel {
    Tensor denoise(const Tensor& z, const Tensor&, double) const override { return z; }
    Tensor class_score(const Tensor& z, const Tensor&, double, int) const override {
        return Tensor::zeros(z.shape());
    }
    Tensor class_logits(const Tensor&, const Tensor&, double) const override {
        return Tensor::zeros({1});
    }
    int num_classes() const override { return 1; }
    double sigma_data() const override { return 0.5; }
};

// D(z) = K, a fixed output regardless of input
struct ConstantModel : GenerativeModel {
    Tensor k;
    explicit ConstantModel(Tensor kk) : k(std::move(kk)) {}
    Tensor denoise(const Tensor&, const Tensor&, double) const override { return k; }
    Tensor class_score(const Tensor& z, const Tensor&, double, int) const override {
        return Tensor::zeros(z.shape());
    }
    Tensor class_logits(const Tensor&, const Tensor&, double) const override {
        return Tensor::zeros({1});
    }
    int num_classes() const override { return 1; }
    double sigma_data() const override { return 0.5; }
};

}  // namespace

TEST_CASE("euler step algebra") {
    Rng rng(31);
    Tensor z = Tensor::randn({2, 1, 2, 2}, rng);
    Tensor d = Tensor::randn({2, 1, 2, 2}, rng);

    // generic point: z + (t_next - t_hat) * (z - d) / t_hat
    Tensor got = euler_step_from(z, d, 2.0, 0.5);
    for (int64_t i = 0; i < z.numel(); ++i) {
        double want = z[i] + (0.5 - 2.0) * (z[i] - d[i]) / 2.0;
        CHECK(got[i] == doctest::Approx(want).epsilon(1e-15));
    }

    // terminal step hands back the denoised estimate exactly
    CHECK(euler_step_from(z, d, 2.0, 0.0).bit_equal(d));

    // convenience overload routes through the model
    ConstantModel cm(d);
    Tensor cond = Tensor::zeros(z.shape());
    CHECK(euler_step(z, 2.0, 0.5, cond, cm).bit_equal(euler_step_from(z, d, 2.0, 0.5)));

    CHECK_THROWS_AS(euler_step_from(z, d, 0.0, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(euler_step_from(z, d, -1.0, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(euler_step_from(z, d, 1.0, -0.1), std::invalid_argument);
}

TEST_CASE("identity denoiser gives a driftless trajectory") {
    IdentityModel model;
    Tensor cond = Tensor::zeros({2, 1, 2, 2});
    SamplerConfig cfg;
    cfg.n_steps = 12;

    Rng rng_a(77);
    Tensor out = sample(model, cond, {2, 1, 2, 2}, cfg, rng_a);

    // the initial draw must come through untouched
    Rng rng_b(77);
    Tensor init = Tensor::randn({2, 1, 2, 2}, rng_b);
    init *= cfg.sigma_max;
    CHECK(out.bit_equal(init));
}

TEST_CASE("churn perturbation") {
    Rng rng(32);
    Tensor z = Tensor::randn({1, 1, 2, 2}, rng);

    SUBCASE("churn of zero is a no-op and consumes no randomness") {
        Rng r1(99), r2(99);
        ChurnResult res = churn_perturb(z, 3.0, 0.0, 10, r1);
        CHECK(res.z_hat.bit_equal(z));
        CHECK(res.t_hat == 3.0);
        CHECK(r1.normal() == r2.normal());
    }

    SUBCASE("gamma saturates at sqrt(2)-1") {
        Rng r(100);
        ChurnResult res = churn_perturb(z, 1.0, 1e9, 10, r);
        CHECK(res.t_hat == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
    }

    SUBCASE("marginal variance is preserved at the raised noise level") {
        // z ~ N(0, t^2): after perturbation the law must be N(0, t_hat^2)
        const double t = 1.7, churn = 4.0;
        const int n_steps = 10, n_mc = 200000;
        double gamma = std::min(churn / n_steps, std::sqrt(2.0) - 1.0);
        double t_hat_want = t * (1.0 + gamma);
        Rng r(101);
        double sum = 0.0, sum2 = 0.0;
        Tensor one({1, 1, 1, 1});
        for (int i = 0; i < n_mc; ++i) {
            one[0] = t * r.normal();
            ChurnResult res = churn_perturb(one, t, churn, n_steps, r);
            CHECK(res.t_hat == t_hat_want);
            sum += res.z_hat[0];
            sum2 += res.z_hat[0] * res.z_hat[0];
        }
        double mean = sum / n_mc;
        double var = sum2 / n_mc - mean * mean;
        CHECK(std::fabs(mean) < 0.02);
        CHECK(tu::rel_err(var, t_hat_want * t_hat_want) < 0.02);
    }

    CHECK_THROWS_AS(churn_perturb(z, -1.0, 0.0, 10, rng), std::invalid_argument);
    CHECK_THROWS_AS(churn_perturb(z, 1.0, -0.5, 10, rng), std::invalid_argument);
    CHECK_THROWS_AS(churn_perturb(z, 1.0, 0.0, 0, rng), std::invalid_argument);
}

TEST_CASE("classifier guidance delta scales linearly and matches closed form") {
    LinearGaussianSpec spec = LinearGaussianSpec::two_class();
    AnalyticScoreModel model(spec);
    Rng rng(33);
    Tensor flat = lg_sample(spec, rng);
    Tensor z = lg_to_video(flat, spec);
    Tensor cond = Tensor::zeros(z.shape());

    double t_hat = 2.0, t_next = 1.2;
    Tensor d1 = classifier_guidance_delta(model, z, cond, t_hat, t_next, 1, 1.0);
    Tensor d3 = classifier_guidance_delta(model, z, cond, t_hat, t_next, 1, 3.0);
    Tensor d1x3 = d1;
    d1x3 *= 3.0;
    CHECK(tu::max_abs_diff(d3, d1x3) < 1e-12);

    // coefficient times the model's class score, assembled independently
    double sd = model.sigma_data();
    double coef = -((t_next - t_hat) * t_hat / std::sqrt(t_hat * t_hat + sd * sd));
    Tensor g = model.class_score(z, cond, t_hat, 1);
    g *= coef * 3.0;
    CHECK(tu::max_abs_diff(d3, g) < 1e-12);

    CHECK_THROWS_AS(classifier_guidance_delta(model, z, cond, 0.0, 0.0, 1, 1.0),
                    std::invalid_argument);
    CHECK_THROWS_AS(classifier_guidance_delta(model, z, cond, 1.0, 0.5, 1, -1.0),
                    std::invalid_argument);
}

TEST_CASE("classifier-free mix identities") {
    Rng rng(34);
    Tensor dc = Tensor::randn({1, 1, 2, 2}, rng);
    Tensor du = Tensor::randn({1, 1, 2, 2}, rng);

    CHECK(classifier_free_mix(dc, du, 1.0).bit_equal(dc));

    Tensor mixed = classifier_free_mix(dc, du, 2.5);
    for (int64_t i = 0; i < dc.numel(); ++i)
        CHECK(mixed[i] == doctest::Approx(du[i] + 2.5 * (dc[i] - du[i])).epsilon(1e-15));

    Tensor bad = Tensor::zeros({1, 1, 1, 1});
    CHECK_THROWS_AS(classifier_free_mix(dc, bad, 1.5), std::invalid_argument);
}

TEST_CASE("sampling is reproducible from the generator state") {
    LinearGaussianSpec spec = LinearGaussianSpec::two_class();
    AnalyticScoreModel model(spec);
    Tensor cond = Tensor::zeros({4, 1, 1, 2});
    SamplerConfig cfg;
    cfg.n_steps = 8;
    cfg.churn = 1.0;

    Rng r1(55), r2(55), r3(56);
    Tensor a = sample(model, cond, {4, 1, 1, 2}, cfg, r1);
    Tensor b = sample(model, cond, {4, 1, 1, 2}, cfg, r2);
    Tensor c = sample(model, cond, {4, 1, 1, 2}, cfg, r3);
    CHECK(a.bit_equal(b));
    CHECK_FALSE(a.bit_equal(c));
}

TEST_CASE("sample validation") {
    LinearGaussianSpec spec = LinearGaussianSpec::two_class();
    AnalyticScoreModel model(spec);
    Tensor cond = Tensor::zeros({4, 1, 1, 2});
    Rng rng(1);

    SamplerConfig cfg;
    cfg.n_steps = 0;
    CHECK_THROWS_AS(sample(model, cond, {4, 1, 1, 2}, cfg, rng), std::invalid_argument);

    cfg.n_steps = 4;
    cfg.cfg_scale = 0.5;
    CHECK_THROWS_AS(sample(model, cond, {4, 1, 1, 2}, cfg, rng), std::invalid_argument);

    cfg.cfg_scale = 1.0;
    cfg.guidance_scale = 1.0;
    cfg.guidance_target = 5;
    CHECK_THROWS_AS(sample(model, cond, {4, 1, 1, 2}, cfg, rng), std::invalid_argument);

    cfg.guidance_target = -1;
    cfg.guidance_scale = 0.0;
    CHECK_THROWS_AS(sample(model, cond, {3, 1, 1, 2}, cfg, rng), std::invalid_argument);
}

TEST_CASE("analytic sampler reproduces the mixture moments") {
    LinearGaussianSpec spec = LinearGaussianSpec::two_class();
    AnalyticScoreModel model(spec);
    Tensor cond = Tensor::zeros({4, 1, 1, 2});
    SamplerConfig cfg;
    cfg.n_steps = 120;  // first-order integration bias shows up in the covariance

    Tensor mu = lg_mixture_mean(spec);
    Tensor cov = lg_mixture_cov(spec);

    Rng rng(333);
    const int n = 4000;
    Tensor acc = Tensor::zeros({8});
    Tensor acc2 = Tensor::zeros({8, 8});
    for (int i = 0; i < n; ++i) {
        Tensor z = lg_from_video(sample(model, cond, {4, 1, 1, 2}, cfg, rng), spec);
        acc += z;
        for (int a = 0; a < 8; ++a)
            for (int b = 0; b < 8; ++b) acc2.at2(a, b) += z[a] * z[b];
    }
    acc *= 1.0 / n;
    Tensor cov_mc({8, 8});
    for (int a = 0; a < 8; ++a)
        for (int b = 0; b < 8; ++b) cov_mc.at2(a, b) = acc2.at2(a, b) / n - acc[a] * acc[b];

    CHECK(tu::rel_tensor_err(acc, mu) < 0.05);
    CHECK(tu::rel_tensor_err(cov_mc, cov) < 0.05);
}

TEST_CASE("classifier guidance steers samples toward the target class") {
    LinearGaussianSpec spec = LinearGaussianSpec::two_class();
    AnalyticScoreModel model(spec);
    Tensor cond = Tensor::zeros({4, 1, 1, 2});

    auto fraction_of_class = [&](double s, int target) {
        SamplerConfig cfg;
        cfg.n_steps = 24;
        cfg.guidance_scale = s;
        cfg.guidance_target = target;
        Rng rng(444);
        const int n = 150;
        int hits = 0;
        for (int i = 0; i < n; ++i) {
            Tensor z = lg_from_video(sample(model, cond, {4, 1, 1, 2}, cfg, rng), spec);
            Tensor post = analytic_posterior(z, 0.0, spec);
            if (post[target] > 0.5) ++hits;
        }
        return double(hits) / n;
    };

    // class 1 carries prior 0.4; guidance must raise its share well above that
    double base = fraction_of_class(0.0, 1);
    double guided = fraction_of_class(3.0, 1);
    CHECK(base < 0.55);
    CHECK(guided > 0.9);
    CHECK(guided > base);
}
