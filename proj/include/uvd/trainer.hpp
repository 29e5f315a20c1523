#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "uvd/model.hpp"
#include "uvd/temporal_shapes.hpp"

namespace uvd {

struct TrainConfig {
    std::string phase = "joint";  // gen_only | joint | cls_only
    double gamma = 10.0;
    double p_drop = 0.10;
    int batch_size = 16;
    int epochs = 10;

    double base_lr = 1.25e-5;
    double warmup_lr = 2.5e-7;
    double final_lr = 2.5e-7;
    int warmup_epochs = 5;
    int warmup_steps = -1;  // >= 0 overrides warmup_epochs
    double weight_decay = 0.0;
    double head_lr_mult = 10.0;
    bool probe_head_only = false;  // freeze the trunk, train the head

    // hidden-frame count drawn uniformly from {ceil(f*T), ..., T}; the
    // default 0.5 gives an expected 75% masking ratio
    double mask_min_hidden = 0.5;

    double p_mean = -1.2;  // log-noise law for training sigmas
    double p_std = 1.2;

    uint64_t seed = 0;

    void validate() const;
    bool gen_active() const { return phase != "cls_only" && gamma > 0.0; }
    bool cls_active() const { return phase != "gen_only"; }
};

struct TrainStepRecord {
    int64_t step = 0;
    int epoch = 0;
    double lr = 0.0;
    double gen_loss = 0.0;
    double cls_loss = 0.0;
    double total = 0.0;
    double sigma_mean = 0.0;
};

std::string train_record_jsonl(const TrainStepRecord& r);

// Owns the optimizer and the data order; the model is borrowed. All
// randomness forks from the config seed by (epoch) or (step, slot), so a
// resumed run replays the exact same draws as an uninterrupted one.
class Trainer {
  public:
    Trainer(VideoModel& model, const VideoDataset& data, TrainConfig cfg);

    int steps_per_epoch() const { return steps_per_epoch_; }
    int64_t total_steps() const { return int64_t(cfg_.epochs) * steps_per_epoch_; }
    int64_t step() const { return step_; }
    int epoch_index() const { return int(step_ / steps_per_epoch_); }
    bool done() const { return step_ >= total_steps(); }

    // linear warmup then cosine decay; exact endpoints at step 0, the end of
    // warmup, and past the final step
    double lr_at(int64_t step) const;

    TrainStepRecord run_step();
    void run_epoch(std::vector<TrainStepRecord>* log = nullptr);

    nn::AdamW& optimizer() { return opt_; }
    const nn::AdamW& optimizer() const { return opt_; }
    const TrainConfig& config() const { return cfg_; }

    // resume support: counters come from the checkpoint, order is re-derived
    void restore_step(int64_t step);

  private:
    VideoModel& model_;
    const VideoDataset& data_;
    TrainConfig cfg_;
    nn::AdamW opt_;
    nn::Grads grads_;
    Rng base_;
    int steps_per_epoch_ = 0;
    int64_t step_ = 0;
    std::vector<int> order_;
    int order_epoch_ = -1;

    void ensure_order(int epoch);
};

}  // namespace uvd
