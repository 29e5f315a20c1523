#include <doctest.h>

#include <cmath>

#include "testutil.hpp"
#include "uvd/model.hpp"
#include "uvd/objectives.hpp"

using namespace uvd;
namespace tu = uvd::testutil;

namespace {

BackboneConfig lg_like_config() {
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

void shake(nn::Params& p, Rng& rng, double s = 0.05) {
    for (int id = 0; id < p.count(); ++id) {
        Tensor n = Tensor::randn(p.value(id).shape(), rng);
        p.value(id).add_scaled(n, s);
    }
}

}  // namespace

TEST_CASE("generative loss closed forms") {
    edm::Preconditioner pre;  // sigma_data 0.5
    Rng rng(3);
    Tensor z0 = Tensor::randn({2, 1, 3, 3}, rng);
    CHECK(generative_loss(z0, z0, 0.7, pre) == 0.0);

    Tensor a = Tensor::zeros({1});
    Tensor b = Tensor::full({1}, 1.0);
    // sigma=1, sigma_data=0.5 -> lambda = 1.25/0.25 = 5
    CHECK(tu::rel_err(generative_loss(a, b, 1.0, pre), 5.0) < 1e-12);

    CHECK_THROWS_AS(generative_loss(a, b, 0.0, pre), std::invalid_argument);
    CHECK_THROWS_AS(generative_loss(a, Tensor::zeros({2}), 1.0, pre), std::invalid_argument);
}

TEST_CASE("generative loss is frame-permutation invariant") {
    edm::Preconditioner pre;
    Rng rng(5);
    Tensor z0 = Tensor::randn({4, 2, 3, 3}, rng);
    Tensor d = Tensor::randn({4, 2, 3, 3}, rng);
    double base = generative_loss(z0, d, 0.9, pre);

    std::vector<int> perm{2, 0, 3, 1};
    Tensor z0p({4, 2, 3, 3}), dp({4, 2, 3, 3});
    int64_t fsz = z0.numel() / 4;
    for (int f = 0; f < 4; ++f) {
        std::copy(z0.data() + perm[size_t(f)] * fsz, z0.data() + (perm[size_t(f)] + 1) * fsz,
                  z0p.data() + f * fsz);
        std::copy(d.data() + perm[size_t(f)] * fsz, d.data() + (perm[size_t(f)] + 1) * fsz,
                  dp.data() + f * fsz);
    }
    CHECK(std::fabs(generative_loss(z0p, dp, 0.9, pre) - base) < 1e-12);
}

TEST_CASE("classification loss closed forms") {
    // probability one on the true class
    Tensor sharp({1, 3});
    sharp.at2(0, 0) = 50.0;
    CHECK(classification_loss(std::vector<int>{0}, sharp) < 1e-6);

    Tensor uniform = Tensor::zeros({2, 4});
    CHECK(tu::rel_err(classification_loss(std::vector<int>{1, 3}, uniform), std::log(4.0)) <
          1e-12);

    Tensor two({1, 2});
    two.at2(0, 0) = std::log(3.0);
    two.at2(0, 1) = 0.0;
    CHECK(tu::rel_err(classification_loss(std::vector<int>{0}, two), -std::log(0.75)) < 1e-12);

    CHECK(classification_loss(std::vector<int>{1}, two) > 0.0);
    CHECK_THROWS_AS(classification_loss(std::vector<int>{0, 1}, two), std::invalid_argument);
    CHECK_THROWS_AS(one_hot({5}, 3), std::invalid_argument);
}

TEST_CASE("total loss algebra") {
    LossBreakdown def;
    CHECK(def.gamma == 10.0);

    LossBreakdown lb = total_loss(0.5, 1.0, 10.0);
    CHECK(lb.total == 6.0);

    LossBreakdown abl = total_loss(0.5, 1.0, 0.0);
    CHECK(abl.total == abl.cls_loss);

    Rng rng(7);
    for (int i = 0; i < 20; ++i) {
        double g = rng.uniform() * 3, c = rng.uniform() * 3, ga = rng.uniform() * 20;
        LossBreakdown r = total_loss(g, c, ga);
        CHECK(r.total == r.cls_loss + r.gamma * r.gen_loss);
    }
}

TEST_CASE("condition dropout") {
    Rng rng(11);
    Tensor z = Tensor::randn({3, 1, 2, 2}, rng);

    Rng r0(1);
    CHECK(condition_dropout(z, r0, 0.0).bit_equal(z));
    Rng r1(1);
    Tensor dropped = condition_dropout(z, r1, 1.0);
    CHECK(dropped.min() == 0.0);
    CHECK(dropped.max() == 0.0);

    CHECK_THROWS_AS(condition_dropout(z, r0, -0.1), std::invalid_argument);
    CHECK_THROWS_AS(condition_dropout(z, r0, 1.5), std::invalid_argument);

    Rng mc(13);
    int drops = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i)
        if (condition_dropout(z, mc, 0.10)[0] == 0.0 && z[0] != 0.0) ++drops;
    double freq = double(drops) / n;
    CHECK(std::fabs(freq - 0.10) < 0.005);
}

TEST_CASE("model denoise contract") {
    BackboneConfig cfg = lg_like_config();
    VideoModel model(cfg, 0.5, 101);

    Rng rng(12);
    Tensor z = Tensor::randn({4, 1, 1, 2}, rng);
    Tensor cond = Tensor::randn({4, 1, 1, 2}, rng);

    // sigma = 0 short-circuits to the input without touching the backbone
    CHECK(model.denoise(z, cond, 0.0).bit_equal(z));

    Tensor d = model.denoise(z, cond, 0.5);
    REQUIRE(d.shape() == z.shape());
    CHECK(d.all_finite());

    CHECK_THROWS_AS(model.denoise(z, Tensor::zeros({4, 2, 1, 2}), 0.5), std::invalid_argument);
    CHECK_THROWS_AS(model.denoise(z, cond, -1.0), std::invalid_argument);
}

TEST_CASE("model accumulate gradients match finite differences") {
    BackboneConfig cfg = lg_like_config();
    VideoModel model(cfg, 0.5, 202);
    Rng rng(14);
    shake(model.params(), rng);

    Tensor z0 = Tensor::randn({4, 1, 2, 2}, rng);
    Tensor cond = Tensor::randn({4, 1, 2, 2}, rng);
    Tensor noise = Tensor::randn({4, 1, 2, 2}, rng);
    double sigma = 0.8, w_gen = 10.0 * 1.7, w_cls = 1.0;
    int label = 1;

    nn::Grads g(model.params());
    VideoModel::SampleLosses losses =
        model.accumulate(z0, cond, label, sigma, noise, w_gen, w_cls, g);
    CHECK(losses.gen > 0.0);
    CHECK(losses.cls > 0.0);

    Tensor zt = z0;
    zt.add_scaled(noise, sigma);
    auto loss_now = [&]() {
        double lg = generative_loss(z0, model.denoise(zt, cond, sigma), sigma,
                                    model.preconditioner());
        Tensor logits = model.classify(zt, cond, sigma);
        double lc = -nn::log_softmax_at(logits, label);
        return w_gen * lg + w_cls * lc;
    };

    nn::Params& p = model.params();
    int checked = 0;
    for (int pid = 0; pid < p.count(); pid += 3) {
        Tensor& pv = p.value(pid);
        for (int64_t pi = 0; pi < std::min<int64_t>(pv.numel(), 2); ++pi) {
            int64_t i = (pi * 104729) % pv.numel();
            double keep = pv[i], eps = 1e-5;
            pv[i] = keep + eps;
            double fp = loss_now();
            pv[i] = keep - eps;
            double fm = loss_now();
            pv[i] = keep;
            double fd = (fp - fm) / (2 * eps);
            CHECK(std::fabs(g.at(pid)[i] - fd) < 1e-4 * std::max(1.0, std::fabs(fd)));
            ++checked;
        }
    }
    CHECK(checked > 20);
}

TEST_CASE("joint loss reaches both backbone tail and head parameters") {
    BackboneConfig cfg = lg_like_config();
    VideoModel model(cfg, 0.5, 303);
    Rng rng(15);
    shake(model.params(), rng);

    Tensor z0 = Tensor::randn({4, 1, 2, 2}, rng);
    Tensor cond = Tensor::randn({4, 1, 2, 2}, rng);
    Tensor noise = Tensor::randn({4, 1, 2, 2}, rng);

    nn::Grads g(model.params());
    model.accumulate(z0, cond, 0, 0.6, noise, 10.0, 1.0, g);

    nn::Params& p = model.params();
    int out_conv = p.find("out.conv.w");
    int head_fc = p.find("head.fc.w");
    REQUIRE(out_conv >= 0);
    REQUIRE(head_fc >= 0);
    CHECK(g.at(out_conv).norm() > 0.0);
    CHECK(g.at(head_fc).norm() > 0.0);

    // and one optimizer step moves both groups
    Tensor before_tail = p.value(out_conv);
    Tensor before_head = p.value(head_fc);
    nn::AdamWConfig ocfg;
    ocfg.lr = 1e-3;
    nn::AdamW opt(p, ocfg);
    opt.step(p, g, 1.0);
    CHECK(tu::max_abs_diff(p.value(out_conv), before_tail) > 0.0);
    CHECK(tu::max_abs_diff(p.value(head_fc), before_head) > 0.0);

    // head-only stepping freezes the trunk
    nn::Grads g2(model.params());
    model.accumulate(z0, cond, 0, 0.6, noise, 10.0, 1.0, g2);
    Tensor tail_frozen = p.value(out_conv);
    opt.step(p, g2, 1.0, /*head_only=*/true);
    CHECK(p.value(out_conv).bit_equal(tail_frozen));
    CHECK(tu::max_abs_diff(p.value(head_fc), before_head) > 0.0);
}

TEST_CASE("class score matches finite differences of log softmax") {
    BackboneConfig cfg = lg_like_config();
    VideoModel model(cfg, 0.5, 404);
    Rng rng(16);
    shake(model.params(), rng, 0.1);

    Tensor scaled = Tensor::randn({4, 1, 2, 2}, rng);
    Tensor cond = Tensor::randn({4, 1, 2, 2}, rng);
    double sigma = 1.3;
    int target = 2;

    Tensor grad = model.class_score_scaled(scaled, cond, sigma, target);
    REQUIRE(grad.shape() == scaled.shape());

    auto lp = [&](const Tensor& s) {
        return nn::log_softmax_at(model.logits_from_scaled(s, cond, sigma), target);
    };
    for (int64_t i = 0; i < scaled.numel(); ++i) {
        double fd = tu::fd_grad(lp, scaled, i);
        CHECK(std::fabs(grad[i] - fd) < 1e-4 * std::max(1.0, std::fabs(fd)));
    }

    // unscaled entry point applies c_in internally
    double cin = model.preconditioner().c_in(sigma);
    Tensor z = (1.0 / cin) * scaled;
    CHECK(tu::max_abs_diff(model.class_score(z, cond, sigma, target), grad) < 1e-9);

    CHECK_THROWS_AS(model.class_score_scaled(scaled, cond, sigma, 7), std::invalid_argument);
}
