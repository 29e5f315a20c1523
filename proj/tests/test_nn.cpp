#include <doctest.h>

#include <cmath>
#include <functional>

#include "testutil.hpp"
#include "uvd/nn.hpp"

using namespace uvd;
using namespace uvd::nn;
namespace tu = uvd::testutil;

namespace {

// checks d(sum(forward(x) * r))/dx and /dparams against central differences
void check_gradients(Params& params, const std::function<Tensor(const Tensor&, Tape*)>& fwd,
                     const std::function<Tensor(const Tensor&, Tape&, Grads*)>& bwd,
                     const Tensor& x, double tol = 1e-6) {
    Rng rng(99);
    Tape tape;
    Tensor y = fwd(x, &tape);
    Tensor r = Tensor::randn(y.shape(), rng);
    Grads grads(params);
    Tensor gx = bwd(r, tape, &grads);
    REQUIRE(gx.shape() == x.shape());

    auto loss_at_x = [&](const Tensor& xv) { return fwd(xv, nullptr).dot(r); };

    int64_t n_probe = std::min<int64_t>(x.numel(), 25);
    for (int64_t pi = 0; pi < n_probe; ++pi) {
        int64_t i = (pi * 7919) % x.numel();
        double fd = tu::fd_grad(loss_at_x, x, i);
        CHECK(std::fabs(gx[i] - fd) < tol * std::max(1.0, std::fabs(fd)));
    }

    for (int pid = 0; pid < params.count(); ++pid) {
        Tensor& pv = params.value(pid);
        int64_t n_p = std::min<int64_t>(pv.numel(), 10);
        for (int64_t pi = 0; pi < n_p; ++pi) {
            int64_t i = (pi * 104729) % pv.numel();
            double keep = pv[i];
            double eps = 1e-5;
            pv[i] = keep + eps;
            double fp = fwd(x, nullptr).dot(r);
            pv[i] = keep - eps;
            double fm = fwd(x, nullptr).dot(r);
            pv[i] = keep;
            double fd = (fp - fm) / (2 * eps);
            CHECK(std::fabs(grads.at(pid)[i] - fd) < tol * std::max(1.0, std::fabs(fd)));
        }
    }
}

}  // namespace

TEST_CASE("linear gradients") {
    Params p;
    Rng rng(1);
    Linear lin;
    lin.init(p, "lin", 5, 3, rng);
    Tensor x = Tensor::randn({4, 5}, rng);
    check_gradients(
        p, [&](const Tensor& xv, Tape* t) { return lin.forward(p, xv, t); },
        [&](const Tensor& gy, Tape& t, Grads* g) { return lin.backward(p, gy, t, g); }, x);
}

TEST_CASE("conv2d gradients k3 and k1") {
    for (int k : {3, 1}) {
        Params p;
        Rng rng(2);
        Conv2d conv;
        conv.init(p, "conv", 3, 4, k, rng);
        Tensor x = Tensor::randn({2, 3, 5, 4}, rng);
        check_gradients(
            p, [&](const Tensor& xv, Tape* t) { return conv.forward(p, xv, t); },
            [&](const Tensor& gy, Tape& t, Grads* g) { return conv.backward(p, gy, t, g); }, x);
    }
}

TEST_CASE("groupnorm gradients and normalization") {
    Params p;
    Rng rng(3);
    GroupNorm gn;
    gn.init(p, "gn", 4, 2);
    // non-trivial gamma/beta
    for (int64_t i = 0; i < 4; ++i) {
        p.value(gn.gamma)[i] = 0.5 + 0.3 * double(i);
        p.value(gn.beta)[i] = 0.1 * double(i);
    }
    Tensor x = Tensor::randn({2, 4, 3, 3}, rng);
    x *= 2.5;

    // normalized slices have zero mean / unit variance before affine
    Params pid;
    GroupNorm gn_id;
    gn_id.init(pid, "g", 4, 2);
    Tensor y = gn_id.forward(pid, x, nullptr);
    double m0 = 0;
    for (int c = 0; c < 2; ++c)
        for (int yy = 0; yy < 3; ++yy)
            for (int xx = 0; xx < 3; ++xx) m0 += y.at4(0, c, yy, xx);
    CHECK(std::fabs(m0 / 18.0) < 1e-12);

    check_gradients(
        p, [&](const Tensor& xv, Tape* t) { return gn.forward(p, xv, t); },
        [&](const Tensor& gy, Tape& t, Grads* g) { return gn.backward(p, gy, t, g); }, x, 1e-5);
}

TEST_CASE("silu avgpool upsample gradients") {
    Rng rng(4);
    Params dummy;
    SiLU act;
    Tensor x = Tensor::randn({2, 2, 4, 4}, rng);
    check_gradients(
        dummy, [&](const Tensor& xv, Tape* t) { return act.forward(xv, t); },
        [&](const Tensor& gy, Tape& t, Grads*) { return act.backward(gy, t); }, x);

    AvgPool2 pool;
    for (auto shape : {std::vector<int>{2, 2, 4, 4}, std::vector<int>{1, 1, 5, 3},
                       std::vector<int>{1, 2, 1, 1}}) {
        Tensor xp = Tensor::randn(shape, rng);
        check_gradients(
            dummy, [&](const Tensor& xv, Tape* t) { return pool.forward(xv, t); },
            [&](const Tensor& gy, Tape& t, Grads*) { return pool.backward(gy, t); }, xp);
    }
    CHECK(pool.forward(Tensor::full({1, 1, 2, 2}, 3.0), nullptr)[0] == doctest::Approx(3.0));
    CHECK(pool.forward(Tensor::randn({1, 1, 16, 16}, rng), nullptr).dim(2) == 8);
    CHECK(pool.forward(Tensor::randn({1, 1, 1, 1}, rng), nullptr).dim(2) == 1);

    UpsampleNearest up;
    Tensor xs = Tensor::randn({2, 2, 2, 2}, rng);
    check_gradients(
        dummy, [&](const Tensor& xv, Tape* t) { return up.forward(xv, 4, 4, t); },
        [&](const Tensor& gy, Tape& t, Grads*) { return up.backward(gy, t); }, xs);
    Tensor u = up.forward(xs, 4, 4, nullptr);
    CHECK(u.at4(0, 0, 1, 1) == xs.at4(0, 0, 0, 0));
    CHECK(u.at4(0, 0, 3, 2) == xs.at4(0, 0, 1, 1));
    // 1x1 -> 1x1 is identity
    Tensor one = Tensor::full({1, 1, 1, 1}, 7.0);
    CHECK(up.forward(one, 1, 1, nullptr)[0] == 7.0);
}

TEST_CASE("temporal attention gradients and residual identity at init") {
    Params p;
    Rng rng(5);
    TemporalAttention attn;
    attn.init(p, "attn", 3, rng);

    // zero-init output projection -> layer is the identity at init
    Tensor x = Tensor::randn({4, 3, 2, 2}, rng);
    CHECK(attn.forward(p, x, nullptr).bit_equal(x));

    // randomize wo to exercise the full path
    for (int64_t i = 0; i < p.value(attn.wo).numel(); ++i) p.value(attn.wo)[i] = 0.3 * rng.normal();
    check_gradients(
        p, [&](const Tensor& xv, Tape* t) { return attn.forward(p, xv, t); },
        [&](const Tensor& gy, Tape& t, Grads* g) { return attn.backward(p, gy, t, g); }, x, 1e-5);

    // positional features break permutation equivariance: the output for a
    // reversed video is not just the reversed output of the original
    Tensor xr(x.shape());
    for (int f = 0; f < 4; ++f)
        for (int c = 0; c < 3; ++c)
            for (int yy = 0; yy < 2; ++yy)
                for (int xx = 0; xx < 2; ++xx) xr.at4(f, c, yy, xx) = x.at4(3 - f, c, yy, xx);
    Tensor yf = attn.forward(p, x, nullptr);
    Tensor yr = attn.forward(p, xr, nullptr);
    Tensor yf_rev(yf.shape());
    for (int f = 0; f < 4; ++f)
        for (int c = 0; c < 3; ++c)
            for (int yy = 0; yy < 2; ++yy)
                for (int xx = 0; xx < 2; ++xx) yf_rev.at4(f, c, yy, xx) = yf.at4(3 - f, c, yy, xx);
    CHECK(tu::max_abs_diff(yr, yf_rev) > 1e-8);
    CHECK(yr.all_finite());
}

TEST_CASE("temporal conv gradients and identity at init") {
    Params p;
    Rng rng(6);
    TemporalConv tc;
    tc.init(p, "tc", 3, rng);
    Tensor x = Tensor::randn({5, 3, 2, 2}, rng);
    CHECK(tc.forward(p, x, nullptr).bit_equal(x));

    for (int64_t i = 0; i < p.value(tc.w).numel(); ++i) p.value(tc.w)[i] = 0.2 * rng.normal();
    for (int64_t i = 0; i < 3; ++i) p.value(tc.b)[i] = 0.1 * rng.normal();
    check_gradients(
        p, [&](const Tensor& xv, Tape* t) { return tc.forward(p, xv, t); },
        [&](const Tensor& gy, Tape& t, Grads* g) { return tc.backward(p, gy, t, g); }, x, 1e-5);

    // order sensitivity: reversing frames must change some output frame
    Tensor xr(x.shape());
    for (int f = 0; f < 5; ++f)
        for (int64_t i = 0; i < 12; ++i) xr[int64_t(4 - f) * 12 + i] = x[int64_t(f) * 12 + i];
    Tensor yf = tc.forward(p, x, nullptr);
    Tensor yr = tc.forward(p, xr, nullptr);
    CHECK(tu::max_abs_diff(yf, yr) > 1e-8);
}

TEST_CASE("attentive pool gradients") {
    Params p;
    Rng rng(7);
    AttentivePool pool;
    pool.init(p, "pool", 4, rng);
    for (int64_t i = 0; i < 4; ++i) p.value(pool.q)[i] = 0.5 * rng.normal();
    Tensor tokens = Tensor::randn({6, 4}, rng);
    check_gradients(
        p, [&](const Tensor& xv, Tape* t) { return pool.forward(p, xv, t); },
        [&](const Tensor& gy, Tape& t, Grads* g) { return pool.backward(p, gy, t, g); }, tokens,
        1e-5);

    // zero query pools to the mean value vector
    Params p2;
    AttentivePool pool2;
    pool2.init(p2, "pool", 4, rng);
    Tensor toks = Tensor::randn({5, 4}, rng);
    Tensor out = pool2.forward(p2, toks, nullptr);
    Tensor vtok({5, 4});
    // recompute v tokens by hand
    for (int i = 0; i < 5; ++i)
        for (int d = 0; d < 4; ++d) {
            double s = 0;
            for (int e = 0; e < 4; ++e) s += toks.at2(i, e) * p2.value(pool2.wv).at2(d, e);
            vtok.at2(i, d) = s;
        }
    for (int d = 0; d < 4; ++d) {
        double m = 0;
        for (int i = 0; i < 5; ++i) m += vtok.at2(i, d);
        CHECK(out[d] == doctest::Approx(m / 5.0).epsilon(1e-10));
    }
}

TEST_CASE("conv3d gradients") {
    Params p;
    Rng rng(8);
    Conv3d c3;
    c3.init(p, "c3", 2, 3, 3, 2, rng);
    Tensor x = Tensor::randn({2, 4, 4, 4}, rng);
    Tensor y = c3.forward(p, x, nullptr);
    CHECK(y.shape() == std::vector<int>({3, 2, 2, 2}));
    check_gradients(
        p, [&](const Tensor& xv, Tape* t) { return c3.forward(p, xv, t); },
        [&](const Tensor& gy, Tape& t, Grads* g) { return c3.backward(p, gy, t, g); }, x, 1e-5);
}

TEST_CASE("softmax and log softmax") {
    Tensor l = Tensor::from_values({2}, {std::log(3.0), 0.0});
    Tensor s = softmax(l);
    CHECK(s[0] == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(s[1] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(log_softmax_at(l, 0) == doctest::Approx(std::log(0.75)).epsilon(1e-12));

    // stability at large logits
    Tensor big = Tensor::from_values({3}, {1000.0, 999.0, -1000.0});
    Tensor sb = softmax(big);
    CHECK(sb.all_finite());
    CHECK(sb.sum() == doctest::Approx(1.0));
}

TEST_CASE("fourier embed deterministic and distinct") {
    Tensor a = fourier_embed(0.3, 16);
    Tensor b = fourier_embed(0.3, 16);
    CHECK(a.bit_equal(b));
    Tensor c = fourier_embed(-0.9, 16);
    CHECK(tu::max_abs_diff(a, c) > 1e-3);
    CHECK_THROWS_AS(fourier_embed(0.1, 7), std::invalid_argument);
}

TEST_CASE("adamw optimizes a quadratic and respects head multiplier") {
    Params p;
    int w1 = p.add("body", {4});
    int w2 = p.add("head", {4}, true);
    Rng rng(9);
    for (int64_t i = 0; i < 4; ++i) {
        p.value(w1)[i] = 1.0 + rng.uniform();
        p.value(w2)[i] = 1.0 + rng.uniform();
    }
    AdamWConfig cfg;
    cfg.lr = 0.05;
    cfg.head_lr_mult = 10.0;
    AdamW opt(p, cfg);
    double body0 = p.value(w1).norm(), head0 = p.value(w2).norm();
    Grads g(p);
    for (int it = 0; it < 30; ++it) {
        g.zero();
        for (int64_t i = 0; i < 4; ++i) {
            g.at(w1)[i] = 2.0 * p.value(w1)[i];
            g.at(w2)[i] = 2.0 * p.value(w2)[i];
        }
        opt.step(p, g, 1.0);
    }
    CHECK(p.value(w1).norm() < body0);
    CHECK(p.value(w2).norm() < head0);
    // head moves much faster under the multiplier
    CHECK(p.value(w2).norm() < 0.5 * p.value(w1).norm());
}

TEST_CASE("grads accumulate in fixed order") {
    Params p;
    p.add("a", {3});
    Grads g1(p), g2(p);
    g1.at(0)[0] = 1.0;
    g2.at(0)[0] = 2.5;
    g1.add(g2);
    CHECK(g1.at(0)[0] == 3.5);
    g1.scale(2.0);
    CHECK(g1.at(0)[0] == 7.0);
}
