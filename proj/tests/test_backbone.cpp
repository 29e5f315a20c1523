#include <doctest.h>

#include <cmath>
#include <functional>

#include "testutil.hpp"
#include "uvd/backbone.hpp"

using namespace uvd;
namespace tu = uvd::testutil;

namespace {

BackboneConfig tiny_config() {
    BackboneConfig cfg;
    cfg.latent_channels = 1;
    cfg.base_channels = 4;
    cfg.channel_multipliers = {1, 1, 2, 2};
    cfg.feature_tap_index = 2;
    cfg.num_classes = 3;
    cfg.emb_dim = 8;
    cfg.gn_groups = 2;
    return cfg;
}

// zero-initialized params (output conv, attention out-proj, ...) would leave
// whole subgraphs without gradient signal, so tests shake every weight first
void randomize_params(nn::Params& p, Rng& rng, double s = 0.05) {
    for (int id = 0; id < p.count(); ++id) {
        Tensor n = Tensor::randn(p.value(id).shape(), rng);
        p.value(id).add_scaled(n, s);
    }
}

double full_loss(const UNet& net, const nn::Params& p, const Tensor& x, double cn,
                 const Tensor& r1, const Tensor& r2) {
    UNet::Out out = net.forward(p, x, cn, nullptr, UNet::Mode::full, true);
    return out.residual.dot(r1) + out.tap.dot(r2);
}

}  // namespace

TEST_CASE("unet shape contract and zero-init residual") {
    BackboneConfig cfg = tiny_config();
    nn::Params p;
    Rng rng(11);
    UNet net(cfg, p, rng);

    Tensor x = Tensor::randn({3, cfg.in_channels(), 5, 4}, rng);
    UNet::Out out = net.forward(p, x, 0.25, nullptr, UNet::Mode::full, true);

    REQUIRE(out.residual.shape() == std::vector<int>({3, cfg.latent_channels, 5, 4}));
    REQUIRE(out.tap.dim(1) == cfg.tap_channels());
    REQUIRE(out.tap.dim(0) == 3);

    // final conv starts at zero, so the residual branch starts as exact zero
    for (int64_t i = 0; i < out.residual.numel(); ++i) CHECK(out.residual[i] == 0.0);
}

TEST_CASE("tap shape per tap index and to_tap consistency") {
    for (int tap = 1; tap <= 4; ++tap) {
        BackboneConfig cfg = tiny_config();
        cfg.feature_tap_index = tap;
        nn::Params p;
        Rng rng(20 + tap);
        UNet net(cfg, p, rng);
        randomize_params(p, rng);

        Tensor x = Tensor::randn({2, cfg.in_channels(), 5, 4}, rng);
        UNet::Out full = net.forward(p, x, 0.5, nullptr, UNet::Mode::full, true);
        UNet::Out part = net.forward(p, x, 0.5, nullptr, UNet::Mode::to_tap, true);

        CHECK(full.tap.dim(1) == cfg.tap_channels());
        REQUIRE(part.residual.empty());
        REQUIRE(!part.tap.empty());
        CHECK(part.tap.bit_equal(full.tap));
    }
}

TEST_CASE("tap capture leaves residual untouched") {
    BackboneConfig cfg = tiny_config();
    nn::Params p;
    Rng rng(31);
    UNet net(cfg, p, rng);
    randomize_params(p, rng);

    Tensor x = Tensor::randn({3, cfg.in_channels(), 4, 4}, rng);
    UNet::Out a = net.forward(p, x, 1.5, nullptr, UNet::Mode::full, true);
    UNet::Out b = net.forward(p, x, 1.5, nullptr, UNet::Mode::full, false);
    CHECK(b.tap.empty());
    CHECK(a.residual.bit_equal(b.residual));
}

TEST_CASE("noise level conditioning reaches the output") {
    BackboneConfig cfg = tiny_config();
    nn::Params p;
    Rng rng(37);
    UNet net(cfg, p, rng);
    randomize_params(p, rng);

    Tensor x = Tensor::randn({2, cfg.in_channels(), 4, 4}, rng);
    UNet::Out a = net.forward(p, x, -1.0, nullptr, UNet::Mode::full, true);
    UNet::Out b = net.forward(p, x, 2.0, nullptr, UNet::Mode::full, true);
    CHECK(tu::max_abs_diff(a.residual, b.residual) > 1e-8);
    CHECK(tu::max_abs_diff(a.tap, b.tap) > 1e-8);
}

TEST_CASE("unet full-mode gradients match finite differences") {
    BackboneConfig cfg = tiny_config();
    nn::Params p;
    Rng rng(41);
    UNet net(cfg, p, rng);
    randomize_params(p, rng);

    Tensor x = Tensor::randn({3, cfg.in_channels(), 5, 4}, rng);
    double cn = 0.3;
    nn::Tape probe_tape;
    UNet::Out out = net.forward(p, x, cn, &probe_tape, UNet::Mode::full, true);
    Tensor r1 = Tensor::randn(out.residual.shape(), rng);
    Tensor r2 = Tensor::randn(out.tap.shape(), rng);

    nn::Grads g(p);
    Tensor gx = net.backward(p, r1, r2, probe_tape, &g, UNet::Mode::full);
    CHECK(probe_tape.empty());
    REQUIRE(gx.shape() == x.shape());

    auto loss_at = [&](const Tensor& xv) { return full_loss(net, p, xv, cn, r1, r2); };
    for (int64_t pi = 0; pi < 20; ++pi) {
        int64_t i = (pi * 7919) % x.numel();
        double fd = tu::fd_grad(loss_at, x, i);
        CHECK(std::fabs(gx[i] - fd) < 1e-4 * std::max(1.0, std::fabs(fd)));
    }

    for (int pid = 0; pid < p.count(); ++pid) {
        Tensor& pv = p.value(pid);
        int64_t n_probe = std::min<int64_t>(pv.numel(), 4);
        for (int64_t pi = 0; pi < n_probe; ++pi) {
            int64_t i = (pi * 104729) % pv.numel();
            double keep = pv[i];
            double eps = 1e-5;
            pv[i] = keep + eps;
            double fp = full_loss(net, p, x, cn, r1, r2);
            pv[i] = keep - eps;
            double fm = full_loss(net, p, x, cn, r1, r2);
            pv[i] = keep;
            double fd = (fp - fm) / (2 * eps);
            CHECK(std::fabs(g.at(pid)[i] - fd) < 1e-4 * std::max(1.0, std::fabs(fd)));
        }
    }
}

TEST_CASE("unet to_tap gradients match finite differences") {
    BackboneConfig cfg = tiny_config();
    cfg.feature_tap_index = 3;
    nn::Params p;
    Rng rng(43);
    UNet net(cfg, p, rng);
    randomize_params(p, rng);

    Tensor x = Tensor::randn({2, cfg.in_channels(), 4, 3}, rng);
    double cn = -0.7;
    nn::Tape tape;
    UNet::Out out = net.forward(p, x, cn, &tape, UNet::Mode::to_tap, true);
    Tensor r2 = Tensor::randn(out.tap.shape(), rng);

    nn::Grads g(p);
    Tensor gx = net.backward(p, Tensor(), r2, tape, &g, UNet::Mode::to_tap);
    CHECK(tape.empty());

    auto loss_at = [&](const Tensor& xv) {
        return net.forward(p, xv, cn, nullptr, UNet::Mode::to_tap, true).tap.dot(r2);
    };
    for (int64_t pi = 0; pi < 15; ++pi) {
        int64_t i = (pi * 7919) % x.numel();
        double fd = tu::fd_grad(loss_at, x, i);
        CHECK(std::fabs(gx[i] - fd) < 1e-4 * std::max(1.0, std::fabs(fd)));
    }
}

TEST_CASE("unet temporal_conv variant gradients") {
    BackboneConfig cfg = tiny_config();
    cfg.temporal_mixing = "temporal_conv";
    nn::Params p;
    Rng rng(47);
    UNet net(cfg, p, rng);
    randomize_params(p, rng);

    Tensor x = Tensor::randn({3, cfg.in_channels(), 4, 4}, rng);
    double cn = 0.1;
    nn::Tape tape;
    UNet::Out out = net.forward(p, x, cn, &tape, UNet::Mode::full, true);
    Tensor r1 = Tensor::randn(out.residual.shape(), rng);
    Tensor r2 = Tensor::randn(out.tap.shape(), rng);
    nn::Grads g(p);
    Tensor gx = net.backward(p, r1, r2, tape, &g, UNet::Mode::full);
    CHECK(tape.empty());

    auto loss_at = [&](const Tensor& xv) { return full_loss(net, p, xv, cn, r1, r2); };
    for (int64_t pi = 0; pi < 12; ++pi) {
        int64_t i = (pi * 7919) % x.numel();
        double fd = tu::fd_grad(loss_at, x, i);
        CHECK(std::fabs(gx[i] - fd) < 1e-4 * std::max(1.0, std::fabs(fd)));
    }
}

TEST_CASE("unet runs on degenerate spatial grids") {
    BackboneConfig cfg = tiny_config();
    cfg.latent_channels = 1;
    nn::Params p;
    Rng rng(53);
    UNet net(cfg, p, rng);
    randomize_params(p, rng);

    // 1x2 spatial grid, as used by flat low-dimensional latent families
    Tensor x = Tensor::randn({4, cfg.in_channels(), 1, 2}, rng);
    nn::Tape tape;
    UNet::Out out = net.forward(p, x, 0.0, &tape, UNet::Mode::full, true);
    REQUIRE(out.residual.shape() == std::vector<int>({4, 1, 1, 2}));
    Tensor r1 = Tensor::randn(out.residual.shape(), rng);
    Tensor r2 = Tensor::randn(out.tap.shape(), rng);
    nn::Grads g(p);
    Tensor gx = net.backward(p, r1, r2, tape, &g, UNet::Mode::full);
    CHECK(tape.empty());
    CHECK(gx.all_finite());
    CHECK(gx.norm() > 0.0);
}

TEST_CASE("classifier head starts uniform and differentiates") {
    BackboneConfig cfg = tiny_config();
    int c = cfg.tap_channels();
    {
        nn::Params p;
        Rng rng(61);
        ClassifierHead head(c, 5, p, rng);
        Tensor tap = Tensor::randn({3, c, 2, 2}, rng);
        Tensor logits = head.forward(p, tap, nullptr);
        REQUIRE(logits.shape() == std::vector<int>({5}));
        // zero-init final layer: every class starts at the same logit
        for (int64_t i = 0; i < logits.numel(); ++i) CHECK(logits[i] == 0.0);
    }

    nn::Params p;
    Rng rng(62);
    ClassifierHead head(c, 4, p, rng);
    randomize_params(p, rng, 0.2);

    Tensor tap = Tensor::randn({3, c, 2, 2}, rng);
    nn::Tape tape;
    Tensor logits = head.forward(p, tap, &tape);
    Tensor r = Tensor::randn(logits.shape(), rng);
    nn::Grads g(p);
    Tensor gtap = head.backward(p, r, tape, &g);
    CHECK(tape.empty());
    REQUIRE(gtap.shape() == tap.shape());

    auto loss_at = [&](const Tensor& tv) { return head.forward(p, tv, nullptr).dot(r); };
    for (int64_t pi = 0; pi < 15; ++pi) {
        int64_t i = (pi * 7919) % tap.numel();
        double fd = tu::fd_grad(loss_at, tap, i);
        CHECK(std::fabs(gtap[i] - fd) < 1e-5 * std::max(1.0, std::fabs(fd)));
    }
    for (int pid = 0; pid < p.count(); ++pid) {
        Tensor& pv = p.value(pid);
        int64_t n_probe = std::min<int64_t>(pv.numel(), 5);
        for (int64_t pi = 0; pi < n_probe; ++pi) {
            int64_t i = (pi * 104729) % pv.numel();
            double keep = pv[i];
            double eps = 1e-5;
            pv[i] = keep + eps;
            double fp = head.forward(p, tap, nullptr).dot(r);
            pv[i] = keep - eps;
            double fm = head.forward(p, tap, nullptr).dot(r);
            pv[i] = keep;
            double fd = (fp - fm) / (2 * eps);
            CHECK(std::fabs(g.at(pid)[i] - fd) < 1e-5 * std::max(1.0, std::fabs(fd)));
        }
    }
}

TEST_CASE("head params are flagged for the lr multiplier, backbone params are not") {
    BackboneConfig cfg = tiny_config();
    nn::Params p;
    Rng rng(71);
    UNet net(cfg, p, rng);
    ClassifierHead head(cfg.tap_channels(), cfg.num_classes, p, rng);

    int fc_w = p.find("head.fc.w");
    int pool_q = p.find("head.pool.q");
    int in_w = p.find("in_conv.w");
    REQUIRE(fc_w >= 0);
    REQUIRE(pool_q >= 0);
    REQUIRE(in_w >= 0);
    CHECK(p.info(fc_w).head);
    CHECK(p.info(pool_q).head);
    CHECK(!p.info(in_w).head);
}

TEST_CASE("backbone config validation") {
    BackboneConfig cfg = tiny_config();
    CHECK_NOTHROW(cfg.validate());

    BackboneConfig bad = cfg;
    bad.feature_tap_index = 0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad.feature_tap_index = 5;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

    bad = cfg;
    bad.emb_dim = 7;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

    bad = cfg;
    bad.channel_multipliers = {1, 2};
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

    bad = cfg;
    bad.temporal_mixing = "none_of_the_above";
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}
