#include <doctest.h>

#include <cmath>

#include "testutil.hpp"
#include "uvd/edm.hpp"

using namespace uvd;
using namespace uvd::edm;
namespace tu = uvd::testutil;

TEST_CASE("preconditioning coefficients at reference points") {
    Preconditioner pre;  // sigma_data = 0.5
    Coeffs c = precondition(1.0, pre);
    CHECK(c.c_skip == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(c.c_out == doctest::Approx(0.44721359549995793).epsilon(1e-12));
    CHECK(c.c_in == doctest::Approx(0.89442719099991586).epsilon(1e-12));
    CHECK(c.lambda == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(c.c_noise == doctest::Approx(0.0));

    Coeffs c0 = precondition(0.0, pre);
    CHECK(c0.c_skip == 1.0);
    CHECK(c0.c_out == 0.0);
    CHECK(c0.c_in == doctest::Approx(2.0));

    // large-sigma limits
    Coeffs cl = precondition(1e6, pre);
    CHECK(cl.c_skip == doctest::Approx(0.0).epsilon(1e-4));
    CHECK(cl.c_out == doctest::Approx(0.5).epsilon(1e-4));
    CHECK(cl.c_in == doctest::Approx(1e-6).epsilon(1e-4));

    CHECK(loss_weight(0.5, pre) == doctest::Approx(2.0 / (0.5 * 0.5)).epsilon(1e-12));
    CHECK_THROWS_AS(precondition(-1.0, pre), std::invalid_argument);
    CHECK_THROWS_AS(loss_weight(0.0, pre), std::invalid_argument);
}

TEST_CASE("lambda * c_out^2 == 1 on log grid") {
    for (double sd : {0.25, 0.5, 1.0, 2.0}) {
        Preconditioner pre{sd};
        for (int i = 0; i <= 120; ++i) {
            double sigma = std::pow(10.0, -3.0 + 6.0 * i / 120.0);
            double v = pre.lambda(sigma) * pre.c_out(sigma) * pre.c_out(sigma);
            CHECK(std::fabs(v - 1.0) <= 1e-10);
        }
    }
}

TEST_CASE("c_in monotone decreasing, c_skip + normalized c_out consistent") {
    Preconditioner pre;
    double prev = pre.c_in(0.0);
    for (int i = 1; i <= 50; ++i) {
        double s = 0.001 * std::pow(10.0, 6.0 * i / 50.0);
        double ci = pre.c_in(s);
        CHECK(ci > 0.0);
        CHECK(ci < prev);
        prev = ci;
    }
}

TEST_CASE("karras grid endpoints and shape") {
    SigmaGrid g = karras_sigma_grid(2, 0.02, 80.0, 7.0);
    REQUIRE(g.sigmas.size() == 3);
    CHECK(g.sigmas[0] == 80.0);
    CHECK(g.sigmas[1] == 0.02);
    CHECK(g.sigmas[2] == 0.0);

    SigmaGrid lin = karras_sigma_grid(3, 1.0, 3.0, 1.0);
    REQUIRE(lin.sigmas.size() == 4);
    CHECK(lin.sigmas[0] == doctest::Approx(3.0));
    CHECK(lin.sigmas[1] == doctest::Approx(2.0));
    CHECK(lin.sigmas[2] == doctest::Approx(1.0));
    CHECK(lin.sigmas[3] == 0.0);

    CHECK_THROWS_AS(karras_sigma_grid(1, 0.02, 80, 7), std::invalid_argument);
    CHECK_THROWS_AS(karras_sigma_grid(10, 80, 0.02, 7), std::invalid_argument);
    CHECK_THROWS_AS(karras_sigma_grid(10, 0.02, 80, 0.0), std::invalid_argument);
}

TEST_CASE("karras grid strictly decreasing for random params") {
    Rng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        int n = int(rng.uniform_int(2, 60));
        double smin = 0.001 + rng.uniform() * 0.5;
        double smax = smin + 0.5 + rng.uniform() * 100.0;
        double rho = 0.5 + rng.uniform() * 9.5;
        SigmaGrid g = karras_sigma_grid(n, smin, smax, rho);
        REQUIRE(int(g.sigmas.size()) == n + 1);
        CHECK(g.sigmas.front() == smax);
        CHECK(g.sigmas[size_t(n) - 1] == smin);
        CHECK(g.sigmas.back() == 0.0);
        for (size_t i = 1; i < g.sigmas.size(); ++i) CHECK(g.sigmas[i] < g.sigmas[i - 1]);
    }
}

TEST_CASE("add_noise identities and variance") {
    Rng rng(5);
    Tensor z0 = Tensor::randn({2, 1, 3, 3}, rng);
    Tensor n = Tensor::randn({2, 1, 3, 3}, rng);
    CHECK(add_noise(z0, 0.0, n).bit_equal(z0));

    Tensor zero({2, 1, 3, 3});
    Tensor out = add_noise(zero, 2.0, n);
    for (int64_t i = 0; i < out.numel(); ++i) CHECK(out[i] == 2.0 * n[i]);

    CHECK_THROWS_AS(add_noise(z0, 1.0, Tensor({1, 1, 3, 3})), std::invalid_argument);

    // scalar data N(0, 0.25) at sigma=1 -> variance 1.25
    Rng r2(17);
    int big = 1000000;
    double s = 0, s2 = 0;
    for (int i = 0; i < big; ++i) {
        double x = 0.5 * r2.normal() + r2.normal();
        s += x;
        s2 += x * x;
    }
    double mean = s / big;
    double var = s2 / big - mean * mean;
    CHECK(var == doctest::Approx(1.25).epsilon(0.01));
}

TEST_CASE("denoise wrapper") {
    Preconditioner pre;
    Rng rng(1);
    Tensor z = Tensor::randn({3, 2, 4, 4}, rng);
    Tensor cond = Tensor::randn({3, 2, 4, 4}, rng);

    // zero-noise identity holds without consulting the backbone
    BackboneFn boom = [](const Tensor&, double) -> Tensor {
        throw std::logic_error("must not be called at sigma=0");
    };
    CHECK(denoise(z, cond, 0.0, boom, pre).bit_equal(z));

    // zero backbone: output = c_skip * z
    BackboneFn zero_fn = [](const Tensor& x, double) {
        return Tensor({x.dim(0), x.dim(1) / 2, x.dim(2), x.dim(3)});
    };
    Tensor d = denoise(z, cond, 1.0, zero_fn, pre);
    for (int64_t i = 0; i < z.numel(); ++i) CHECK(d[i] == doctest::Approx(0.2 * z[i]).epsilon(1e-12));

    // backbone sees [c_in * z, cond] concatenated on channels
    BackboneFn probe = [&](const Tensor& x, double c_noise) {
        REQUIRE(x.dim(1) == 4);
        CHECK(c_noise == doctest::Approx(0.25 * std::log(2.0)));
        double ci = pre.c_in(2.0);
        CHECK(x.at4(1, 0, 2, 2) == doctest::Approx(ci * z.at4(1, 0, 2, 2)));
        CHECK(x.at4(1, 2, 2, 2) == doctest::Approx(cond.at4(1, 0, 2, 2)));
        return Tensor({x.dim(0), 2, x.dim(2), x.dim(3)});
    };
    denoise(z, cond, 2.0, probe, pre);

    CHECK_THROWS_AS(denoise(z, Tensor({3, 2, 4, 5}), 1.0, zero_fn, pre), std::invalid_argument);
}

TEST_CASE("score from denoiser") {
    Tensor z = Tensor::from_values({1, 1, 1, 1}, {2.0});
    Tensor d = Tensor::from_values({1, 1, 1, 1}, {1.0});
    Tensor sc = score_from_denoiser(z, d, 1.0);
    CHECK(sc[0] == doctest::Approx(-1.0));
    CHECK(score_from_denoiser(z, z, 3.0).norm() == 0.0);
    CHECK_THROWS_AS(score_from_denoiser(z, d, 0.0), std::domain_error);
}

TEST_CASE("train sigma sampler") {
    TrainSigmaSampler ts;
    Rng rng(2);
    for (int i = 0; i < 1000; ++i) CHECK(sample_train_sigma(ts, rng) > 0.0);

    TrainSigmaSampler degen{-0.7, 0.0};
    CHECK(sample_train_sigma(degen, rng) == doctest::Approx(std::exp(-0.7)));

    // median of exp(N(0,1)) is 1
    TrainSigmaSampler unit{0.0, 1.0};
    std::vector<double> draws(100000);
    for (double& d : draws) d = sample_train_sigma(unit, rng);
    std::nth_element(draws.begin(), draws.begin() + 50000, draws.end());
    CHECK(draws[50000] == doctest::Approx(1.0).epsilon(0.03));
}

TEST_CASE("concat channels layout") {
    Rng rng(3);
    Tensor a = Tensor::randn({2, 2, 3, 3}, rng);
    Tensor b = Tensor::randn({2, 1, 3, 3}, rng);
    Tensor c = edm::concat_channels(a, b);
    REQUIRE(c.shape() == std::vector<int>({2, 3, 3, 3}));
    CHECK(c.at4(1, 1, 2, 0) == a.at4(1, 1, 2, 0));
    CHECK(c.at4(1, 2, 2, 0) == b.at4(1, 0, 2, 0));
    CHECK_THROWS_AS(edm::concat_channels(a, Tensor({2, 1, 4, 3})), std::invalid_argument);
}
