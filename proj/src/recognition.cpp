#include "uvd/recognition.hpp"

#include <stdexcept>

#include "uvd/edm.hpp"

namespace uvd {

namespace {

FrameMask full_mask(int t) {
    FrameMask m;
    m.visible.assign(size_t(t), true);
    return m;
}

}  // namespace

Tensor classify_full(const Tensor& z0, const RecognitionConfig& config,
                     const GenerativeModel& model) {
    if (z0.ndim() != 4) throw std::invalid_argument("classify_full: z0 must be [T,C,H,W]");
    if (config.eval_sigma <= 0.0)
        throw std::invalid_argument("classify_full: eval_sigma must be positive");
    if (config.n_eval_draws < 1)
        throw std::invalid_argument("classify_full: n_eval_draws must be >= 1");

    Tensor cond = build_condition(z0, full_mask(z0.dim(0)), model.wants_mask_indicator());

    Rng rng(config.seed);
    Tensor logits;
    for (int draw = 0; draw < config.n_eval_draws; ++draw) {
        Tensor noise = Tensor::randn(z0.shape(), rng);
        Tensor z_noisy = edm::add_noise(z0, config.eval_sigma, noise);
        Tensor l = model.class_logits(z_noisy, cond, config.eval_sigma);
        if (draw == 0)
            logits = std::move(l);
        else
            logits += l;
    }
    logits *= 1.0 / double(config.n_eval_draws);
    return logits;
}

Tensor classify_partial(const Tensor& observed, const FrameMask& mask,
                        const GenerativeModel& model, Rng& rng, double sigma_max) {
    if (observed.ndim() != 4)
        throw std::invalid_argument("classify_partial: observed must be [T,C,H,W]");
    if (mask.frames() != observed.dim(0))
        throw std::invalid_argument("classify_partial: mask length mismatch");
    if (sigma_max <= 0.0) throw std::invalid_argument("classify_partial: sigma_max must be > 0");

    Tensor cond = build_condition(observed, mask, model.wants_mask_indicator());
    Tensor z_noisy = Tensor::randn(observed.shape(), rng);
    return model.class_logits(z_noisy, cond, sigma_max);
}

Prediction predict(const Tensor& logits) {
    if (logits.numel() == 0) throw std::invalid_argument("predict: empty logits");
    if (!logits.all_finite()) throw std::invalid_argument("predict: non-finite logits");

    double m = logits[0];
    for (int64_t i = 1; i < logits.numel(); ++i) m = std::max(m, logits[i]);

    Prediction out;
    out.probs = Tensor::zeros(logits.shape());
    double z = 0.0;
    for (int64_t i = 0; i < logits.numel(); ++i) {
        out.probs[i] = std::exp(logits[i] - m);
        z += out.probs[i];
    }
    out.probs *= 1.0 / z;

    int best = 0;
    for (int64_t i = 1; i < logits.numel(); ++i)
        if (logits[i] > logits[best]) best = int(i);
    out.class_index = best;
    return out;
}

}  // namespace uvd
