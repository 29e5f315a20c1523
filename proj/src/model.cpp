#include "uvd/model.hpp"

#include <cmath>
#include <stdexcept>

namespace uvd {

VideoModel::VideoModel(const BackboneConfig& cfg, double sigma_data, uint64_t init_seed)
    : VideoModel(cfg, sigma_data, Rng(init_seed)) {}

VideoModel::VideoModel(const BackboneConfig& cfg, double sigma_data, Rng rng)
    : cfg_(cfg), pre_{sigma_data}, unet_(cfg_, params_, rng),
      head_(cfg_.tap_channels(), cfg_.num_classes, params_, rng) {
    if (!(sigma_data > 0.0)) throw std::invalid_argument("VideoModel: sigma_data must be > 0");
}

void VideoModel::check_pair(const Tensor& z, const Tensor& cond) const {
    if (z.ndim() != 4 || z.dim(1) != cfg_.latent_channels)
        throw std::invalid_argument("VideoModel: latent must be [T,D,H,W]");
    if (cond.ndim() != 4 || cond.dim(1) != cfg_.cond_channels())
        throw std::invalid_argument("VideoModel: condition channel depth mismatch");
    if (cond.dim(0) != z.dim(0) || cond.dim(2) != z.dim(2) || cond.dim(3) != z.dim(3))
        throw std::invalid_argument("VideoModel: condition frame/spatial dims mismatch");
}

Tensor VideoModel::denoise(const Tensor& z_noisy, const Tensor& cond, double sigma) const {
    check_pair(z_noisy, cond);
    if (!(sigma >= 0.0)) throw std::invalid_argument("VideoModel::denoise: sigma must be >= 0");
    if (sigma == 0.0) return z_noisy;
    edm::Coeffs c = edm::precondition(sigma, pre_);
    Tensor x = edm::concat_channels(c.c_in * z_noisy, cond);
    UNet::Out out = unet_.forward(params_, x, c.c_noise, nullptr, UNet::Mode::full, false);
    Tensor d = out.residual;
    d *= c.c_out;
    d.add_scaled(z_noisy, c.c_skip);
    return d;
}

Tensor VideoModel::classify(const Tensor& z_noisy, const Tensor& cond, double sigma) const {
    if (!(sigma > 0.0)) throw std::invalid_argument("VideoModel::classify: sigma must be > 0");
    return logits_from_scaled(pre_.c_in(sigma) * z_noisy, cond, sigma);
}

Tensor VideoModel::logits_from_scaled(const Tensor& scaled_noisy, const Tensor& cond,
                                      double sigma) const {
    check_pair(scaled_noisy, cond);
    if (!(sigma > 0.0))
        throw std::invalid_argument("VideoModel::logits_from_scaled: sigma must be > 0");
    Tensor x = edm::concat_channels(scaled_noisy, cond);
    UNet::Out out =
        unet_.forward(params_, x, pre_.c_noise(sigma), nullptr, UNet::Mode::to_tap, true);
    return head_.forward(params_, out.tap, nullptr);
}

Tensor VideoModel::class_score(const Tensor& z_noisy, const Tensor& cond, double sigma,
                               int target) const {
    if (!(sigma > 0.0)) throw std::invalid_argument("VideoModel::class_score: sigma must be > 0");
    return class_score_scaled(pre_.c_in(sigma) * z_noisy, cond, sigma, target);
}

Tensor VideoModel::class_score_scaled(const Tensor& scaled_noisy, const Tensor& cond,
                                      double sigma, int target) const {
    check_pair(scaled_noisy, cond);
    if (target < 0 || target >= cfg_.num_classes)
        throw std::invalid_argument("VideoModel: class index out of range");
    if (!(sigma > 0.0))
        throw std::invalid_argument("VideoModel::class_score_scaled: sigma must be > 0");
    nn::Tape tape;
    Tensor x = edm::concat_channels(scaled_noisy, cond);
    UNet::Out out =
        unet_.forward(params_, x, pre_.c_noise(sigma), &tape, UNet::Mode::to_tap, true);
    Tensor logits = head_.forward(params_, out.tap, &tape);
    Tensor glog = nn::softmax(logits);
    glog *= -1.0;
    glog[target] += 1.0;
    Tensor gtap = head_.backward(params_, glog, tape, nullptr);
    Tensor gx = unet_.backward(params_, Tensor(), gtap, tape, nullptr, UNet::Mode::to_tap);
    return edm::slice_channels(gx, 0, cfg_.latent_channels);
}

VideoModel::SampleLosses VideoModel::accumulate(const Tensor& z0, const Tensor& cond, int label,
                                                double sigma, const Tensor& noise, double w_gen,
                                                double w_cls, nn::Grads& g) const {
    check_pair(z0, cond);
    if (!(sigma > 0.0)) throw std::invalid_argument("VideoModel::accumulate: sigma must be > 0");
    if (w_gen < 0.0 || w_cls < 0.0)
        throw std::invalid_argument("VideoModel::accumulate: negative loss weight");
    bool need_gen = w_gen > 0.0;
    bool need_cls = w_cls > 0.0;
    if (!need_gen && !need_cls)
        throw std::invalid_argument("VideoModel::accumulate: both loss weights are zero");
    if (need_cls && (label < 0 || label >= cfg_.num_classes))
        throw std::invalid_argument("VideoModel::accumulate: label out of range");

    Tensor zt = z0;
    zt.add_scaled(noise, sigma);
    edm::Coeffs c = edm::precondition(sigma, pre_);
    UNet::Mode mode = need_gen ? UNet::Mode::full : UNet::Mode::to_tap;

    nn::Tape tape;
    Tensor x = edm::concat_channels(c.c_in * zt, cond);
    UNet::Out out = unet_.forward(params_, x, c.c_noise, &tape, mode, need_cls);

    SampleLosses losses;
    Tensor g_residual, g_tap;
    if (need_gen) {
        Tensor d = out.residual;
        d *= c.c_out;
        d.add_scaled(zt, c.c_skip);
        losses.gen = c.lambda * d.mse(z0);
        g_residual = d;
        g_residual -= z0;
        g_residual *= w_gen * c.lambda * (2.0 / double(d.numel())) * c.c_out;
    }
    if (need_cls) {
        Tensor logits = head_.forward(params_, out.tap, &tape);
        losses.cls = -nn::log_softmax_at(logits, label);
        Tensor glog = nn::softmax(logits);
        glog[label] -= 1.0;
        glog *= w_cls;
        g_tap = head_.backward(params_, glog, tape, &g);
    }
    unet_.backward(params_, g_residual, g_tap, tape, &g, mode);
    return losses;
}

}  // namespace uvd
