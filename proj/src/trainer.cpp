#include "uvd/trainer.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "uvd/edm.hpp"
#include "uvd/masking.hpp"
#include "uvd/objectives.hpp"

namespace uvd {

namespace {

constexpr uint64_t kEpochStream = 0xA000'0000'0000'0000ULL;
constexpr uint64_t kSampleStream = 0xB000'0000'0000'0000ULL;

}  // namespace

void TrainConfig::validate() const {
    if (phase != "gen_only" && phase != "joint" && phase != "cls_only")
        throw std::invalid_argument("TrainConfig: unknown phase '" + phase + "'");
    if (gamma < 0.0) throw std::invalid_argument("TrainConfig: gamma must be >= 0");
    if (p_drop < 0.0 || p_drop > 1.0)
        throw std::invalid_argument("TrainConfig: p_drop must be in [0,1]");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
    if (base_lr <= 0.0 || warmup_lr < 0.0 || final_lr < 0.0)
        throw std::invalid_argument("TrainConfig: learning rates must be positive");
    if (warmup_epochs < 0) throw std::invalid_argument("TrainConfig: warmup_epochs must be >= 0");
    if (mask_min_hidden < 0.0 || mask_min_hidden > 1.0)
        throw std::invalid_argument("TrainConfig: mask_min_hidden must be in [0,1]");
    if (p_std <= 0.0) throw std::invalid_argument("TrainConfig: p_std must be positive");
}

std::string train_record_jsonl(const TrainStepRecord& r) {
    std::ostringstream os;
    os.precision(10);
    os << "{\"step\":" << r.step << ",\"epoch\":" << r.epoch << ",\"lr\":" << r.lr
       << ",\"gen_loss\":" << r.gen_loss << ",\"cls_loss\":" << r.cls_loss
       << ",\"total\":" << r.total << ",\"sigma_mean\":" << r.sigma_mean << "}";
    return os.str();
}

Trainer::Trainer(VideoModel& model, const VideoDataset& data, TrainConfig cfg)
    : model_(model),
      data_(data),
      cfg_(std::move(cfg)),
      opt_(model.params(),
           nn::AdamWConfig{cfg_.base_lr, 0.9, 0.999, 1e-8, cfg_.weight_decay, cfg_.head_lr_mult}),
      grads_(model.params()),
      base_(cfg_.seed) {
    cfg_.validate();
    if (int(data_.samples.size()) < cfg_.batch_size)
        throw std::invalid_argument("Trainer: dataset smaller than one batch");
    for (const VideoSample& s : data_.samples)
        if (s.label < 0 || s.label >= model_.num_classes())
            throw std::invalid_argument("Trainer: sample label out of model range");
    steps_per_epoch_ = int(data_.samples.size()) / cfg_.batch_size;
}

double Trainer::lr_at(int64_t step) const {
    int64_t total = total_steps();
    int64_t warmup = cfg_.warmup_steps >= 0
                         ? cfg_.warmup_steps
                         : int64_t(cfg_.warmup_epochs) * steps_per_epoch_;
    if (warmup > total) warmup = total;
    if (warmup > 0 && step < warmup)
        return cfg_.warmup_lr +
               (cfg_.base_lr - cfg_.warmup_lr) * double(step) / double(warmup);
    if (step >= total) return cfg_.final_lr;
    double denom = double(total - warmup);
    double progress = denom > 0.0 ? double(step - warmup) / denom : 1.0;
    return cfg_.final_lr +
           (cfg_.base_lr - cfg_.final_lr) * 0.5 * (1.0 + std::cos(M_PI * progress));
}

void Trainer::ensure_order(int epoch) {
    if (order_epoch_ == epoch) return;
    order_.resize(data_.samples.size());
    for (size_t i = 0; i < order_.size(); ++i) order_[i] = int(i);
    Rng r = base_.fork(kEpochStream + uint64_t(epoch));
    for (size_t i = order_.size(); i > 1; --i) {
        size_t j = size_t(r.uniform_int(0, int64_t(i) - 1));
        std::swap(order_[i - 1], order_[j]);
    }
    order_epoch_ = epoch;
}

TrainStepRecord Trainer::run_step() {
    if (done()) throw std::logic_error("Trainer: run_step past the configured epochs");

    int epoch = epoch_index();
    ensure_order(epoch);
    int pos = int(step_ % steps_per_epoch_) * cfg_.batch_size;

    double w_gen = cfg_.gen_active() ? cfg_.gamma / double(cfg_.batch_size) : 0.0;
    double w_cls = cfg_.cls_active() ? 1.0 / double(cfg_.batch_size) : 0.0;

    grads_.zero();
    double gen_sum = 0.0, cls_sum = 0.0, sigma_sum = 0.0;
    edm::TrainSigmaSampler sigma_law{cfg_.p_mean, cfg_.p_std};
    for (int slot = 0; slot < cfg_.batch_size; ++slot) {
        const VideoSample& s = data_.samples[size_t(order_[size_t(pos + slot)])];
        Rng r = base_.fork(kSampleStream + uint64_t(step_) * uint64_t(cfg_.batch_size) +
                           uint64_t(slot));

        double sigma = edm::sample_train_sigma(sigma_law, r);
        int t = s.video.dim(0);
        MaskPolicy policy;
        policy.mode = MaskMode::random_subset;
        policy.min_hidden = std::min(t, int(std::ceil(cfg_.mask_min_hidden * t)));
        policy.max_hidden = t;
        FrameMask mask = sample_mask(policy, t, r);
        Tensor cond = build_condition(s.video, mask, model_.wants_mask_indicator());
        cond = condition_dropout(cond, r, cfg_.p_drop);
        Tensor noise = Tensor::randn(s.video.shape(), r);

        VideoModel::SampleLosses losses =
            model_.accumulate(s.video, cond, s.label, sigma, noise, w_gen, w_cls, grads_);
        gen_sum += losses.gen;
        cls_sum += losses.cls;
        sigma_sum += sigma;
    }

    TrainStepRecord rec;
    rec.step = step_;
    rec.epoch = epoch;
    rec.lr = lr_at(step_);
    rec.gen_loss = cfg_.gen_active() ? gen_sum / cfg_.batch_size : 0.0;
    rec.cls_loss = cfg_.cls_active() ? cls_sum / cfg_.batch_size : 0.0;
    rec.total = rec.cls_loss + cfg_.gamma * rec.gen_loss;
    rec.sigma_mean = sigma_sum / cfg_.batch_size;
    if (!std::isfinite(rec.total))
        throw NumericalError("Trainer: non-finite loss at step " + std::to_string(step_));

    opt_.step(model_.params(), grads_, rec.lr / cfg_.base_lr, cfg_.probe_head_only);
    ++step_;
    return rec;
}

void Trainer::run_epoch(std::vector<TrainStepRecord>* log) {
    int epoch = epoch_index();
    while (!done() && epoch_index() == epoch) {
        TrainStepRecord rec = run_step();
        if (log) log->push_back(rec);
    }
}

void Trainer::restore_step(int64_t step) {
    if (step < 0 || step > total_steps())
        throw std::invalid_argument("Trainer: restore step out of range");
    step_ = step;
    order_epoch_ = -1;
}

}  // namespace uvd
