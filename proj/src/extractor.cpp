#include "uvd/extractor.hpp"

#include <cmath>
#include <filesystem>
#include <stdexcept>

#include "uvd/checkpoint.hpp"
#include "uvd/common.hpp"

namespace uvd {

void ExtractorConfig::validate() const {
    if (in_channels <= 0) throw ConfigError("extractor: in_channels must be positive");
    if (channels.empty()) throw ConfigError("extractor: channel ladder must be nonempty");
    for (int c : channels)
        if (c <= 0) throw ConfigError("extractor: channels must be positive");
    if (num_classes < 2) throw ConfigError("extractor: need at least two classes");
    if (kernel <= 0 || kernel % 2 == 0) throw ConfigError("extractor: kernel must be odd");
}

uint64_t extractor_config_hash(const ExtractorConfig& cfg) {
    std::string s = "in=" + std::to_string(cfg.in_channels) + ";ch=";
    for (int c : cfg.channels) s += std::to_string(c) + ",";
    s += ";classes=" + std::to_string(cfg.num_classes) + ";k=" + std::to_string(cfg.kernel);
    uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    return h;
}

namespace {

// [T, C, H, W] -> [C, T, H, W]
Tensor to_cthw(const Tensor& v, int cin) {
    if (v.ndim() != 4 || v.dim(1) != cin)
        throw std::invalid_argument("extractor: video shape must be [T, C, H, W]");
    int t = v.dim(0), c = v.dim(1), h = v.dim(2), w = v.dim(3);
    Tensor out({c, t, h, w});
    int64_t plane = int64_t(h) * w;
    for (int ti = 0; ti < t; ++ti)
        for (int ci = 0; ci < c; ++ci) {
            const double* src = v.data() + (int64_t(ti) * c + ci) * plane;
            double* dst = out.data() + (int64_t(ci) * t + ti) * plane;
            for (int64_t i = 0; i < plane; ++i) dst[i] = src[i];
        }
    return out;
}

}  // namespace

FeatureExtractor::FeatureExtractor(const ExtractorConfig& cfg, uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(seed);
    convs_.resize(cfg_.channels.size());
    int cin = cfg_.in_channels;
    for (size_t i = 0; i < cfg_.channels.size(); ++i) {
        convs_[i].init(params_, "conv" + std::to_string(i), cin, cfg_.channels[i], cfg_.kernel,
                       2, rng);
        cin = cfg_.channels[i];
    }
    fc_.init(params_, "fc", cfg_.feature_dim(), cfg_.num_classes, rng);
}

Tensor FeatureExtractor::pooled(const Tensor& video, nn::Tape* tape) const {
    Tensor x = to_cthw(video, cfg_.in_channels);
    for (const nn::Conv3d& conv : convs_) {
        x = conv.forward(params_, x, tape);
        x = silu_.forward(x, tape);
    }
    int c = x.dim(0);
    int64_t vol = x.numel() / c;
    Tensor feat({c});
    for (int ci = 0; ci < c; ++ci) {
        const double* xc = x.data() + int64_t(ci) * vol;
        double s = 0.0;
        for (int64_t i = 0; i < vol; ++i) s += xc[i];
        feat[ci] = s / double(vol);
    }
    if (tape) tape->push(Tensor::from_values({4}, {double(c), double(x.dim(1)), double(x.dim(2)),
                                                   double(x.dim(3))}));
    return feat;
}

Tensor FeatureExtractor::pooled_backward(const Tensor& gfeat, nn::Tape& tape,
                                         nn::Grads* g) const {
    Tensor dims = tape.pop();
    int c = int(dims[0]), t = int(dims[1]), h = int(dims[2]), w = int(dims[3]);
    int64_t vol = int64_t(t) * h * w;
    Tensor gx({c, t, h, w});
    for (int ci = 0; ci < c; ++ci) {
        double gv = gfeat[ci] / double(vol);
        double* dst = gx.data() + int64_t(ci) * vol;
        for (int64_t i = 0; i < vol; ++i) dst[i] = gv;
    }
    for (size_t i = convs_.size(); i-- > 0;) {
        gx = silu_.backward(gx, tape);
        gx = convs_[i].backward(params_, gx, tape, g);
    }
    return gx;
}

Tensor FeatureExtractor::features(const Tensor& video) const { return pooled(video, nullptr); }

Tensor FeatureExtractor::logits(const Tensor& video) const {
    Tensor feat = pooled(video, nullptr);
    Tensor out = fc_.forward(params_, feat.reshaped({1, cfg_.feature_dim()}), nullptr);
    return out.reshaped({cfg_.num_classes});
}

double train_extractor(FeatureExtractor& ex, const VideoDataset& data,
                       const ExtractorTrainConfig& tcfg) {
    if (data.samples.empty()) throw std::invalid_argument("train_extractor: empty dataset");
    if (tcfg.steps <= 0 || tcfg.batch <= 0 || tcfg.lr <= 0)
        throw ConfigError("train_extractor: steps, batch, and lr must be positive");
    for (const VideoSample& s : data.samples)
        if (s.label < 0 || s.label >= ex.config().num_classes)
            throw std::invalid_argument("train_extractor: label out of range");

    nn::AdamWConfig ocfg;
    ocfg.lr = tcfg.lr;
    ocfg.head_lr_mult = 1.0;
    nn::AdamW opt(ex.params(), ocfg);
    nn::Grads grads(ex.params());
    Rng rng(tcfg.seed);
    int n = int(data.samples.size());
    int classes = ex.config().num_classes;
    int feat_dim = ex.config().feature_dim();

    int tail_from = tcfg.steps - (tcfg.steps + 4) / 5;
    double tail_loss = 0.0;
    int tail_count = 0;
    for (int step = 0; step < tcfg.steps; ++step) {
        grads.zero();
        double batch_loss = 0.0;
        for (int slot = 0; slot < tcfg.batch; ++slot) {
            const VideoSample& s = data.samples[size_t(rng.uniform_int(0, n - 1))];
            nn::Tape tape;
            Tensor feat = ex.pooled(s.video, &tape);
            Tensor lg = ex.fc_.forward(ex.params_, feat.reshaped({1, feat_dim}), &tape);
            Tensor row = lg.reshaped({classes});
            batch_loss += -nn::log_softmax_at(row, s.label);
            Tensor glog = nn::softmax(row);
            glog[s.label] -= 1.0;
            glog *= 1.0 / double(tcfg.batch);
            Tensor gfeat = ex.fc_.backward(ex.params_, glog.reshaped({1, classes}), tape, &grads);
            ex.pooled_backward(gfeat.reshaped({feat_dim}), tape, &grads);
        }
        batch_loss /= double(tcfg.batch);
        if (!std::isfinite(batch_loss) || !std::isfinite(grads.norm()))
            throw NumericalError("train_extractor: non-finite loss or gradient");
        opt.step(ex.params(), grads, 1.0);
        if (step >= tail_from) {
            tail_loss += batch_loss;
            ++tail_count;
        }
    }
    return tail_loss / double(tail_count);
}

double extractor_accuracy(const FeatureExtractor& ex, const VideoDataset& data) {
    std::vector<int> pred, label;
    pred.reserve(data.samples.size());
    label.reserve(data.samples.size());
    for (const VideoSample& s : data.samples) {
        pred.push_back(int(ex.logits(s.video).argmax()));
        label.push_back(s.label);
    }
    return top1_accuracy(pred, label);
}

void save_extractor(const FeatureExtractor& ex, const std::string& path) {
    nn::AdamW opt(ex.params(), nn::AdamWConfig{});
    save_checkpoint(path, ex.params(), opt, 0, 0, extractor_config_hash(ex.config()));
}

FeatureExtractor load_extractor(const ExtractorConfig& cfg, const std::string& path) {
    FeatureExtractor ex(cfg, 0);
    load_checkpoint(path, ex.params(), nullptr, extractor_config_hash(cfg));
    return ex;
}

FeatureExtractor load_or_train_extractor(const ExtractorConfig& cfg, const std::string& path,
                                         const VideoDataset& data,
                                         const ExtractorTrainConfig& tcfg) {
    if (std::filesystem::exists(path)) return load_extractor(cfg, path);
    FeatureExtractor ex(cfg, splitmix64(tcfg.seed));
    train_extractor(ex, data, tcfg);
    std::filesystem::path dir = std::filesystem::path(path).parent_path();
    if (!dir.empty()) std::filesystem::create_directories(dir);
    save_extractor(ex, path);
    return ex;
}

double toy_fvd(const std::vector<Tensor>& generated, const std::vector<Tensor>& reference,
               const FeatureExtractor& ex) {
    if (generated.size() < 2 || reference.size() < 2)
        throw std::invalid_argument("toy_fvd: need at least two clips per side");
    std::vector<Tensor> fg, fr;
    fg.reserve(generated.size());
    fr.reserve(reference.size());
    for (const Tensor& v : generated) fg.push_back(ex.features(v));
    for (const Tensor& v : reference) fr.push_back(ex.features(v));
    return frechet_distance(fit_feature_stats(fg), fit_feature_stats(fr));
}

}  // namespace uvd
