#include "uvd/backbone.hpp"

#include <cassert>
#include <stdexcept>

#include "uvd/edm.hpp"

namespace uvd {

namespace {

int group_count(int channels, int want) {
    int g = std::min(channels, want);
    while (g > 1 && channels % g != 0) --g;
    return g;
}

// split the channel-concatenated gradient of concat(a, b) back into parts
void split_channels(const Tensor& g, int ca, Tensor& ga, Tensor& gb) {
    int t = g.dim(0), c = g.dim(1), h = g.dim(2), w = g.dim(3);
    int cb = c - ca;
    ga = Tensor({t, ca, h, w});
    gb = Tensor({t, cb, h, w});
    int64_t plane = int64_t(h) * w;
    for (int f = 0; f < t; ++f) {
        const double* src = g.data() + int64_t(f) * c * plane;
        std::copy(src, src + ca * plane, ga.data() + int64_t(f) * ca * plane);
        std::copy(src + ca * plane, src + int64_t(c) * plane,
                  gb.data() + int64_t(f) * cb * plane);
    }
}

// tokens[(t*h*w + s), c] = tap[t, c, s]
Tensor tap_to_tokens(const Tensor& tap) {
    int t = tap.dim(0), c = tap.dim(1);
    int64_t hw = int64_t(tap.dim(2)) * tap.dim(3);
    Tensor tok({int(t * hw), c});
    for (int f = 0; f < t; ++f)
        for (int64_t s = 0; s < hw; ++s) {
            double* row = tok.data() + (int64_t(f) * hw + s) * c;
            const double* src = tap.data() + int64_t(f) * c * hw + s;
            for (int ch = 0; ch < c; ++ch) row[ch] = src[int64_t(ch) * hw];
        }
    return tok;
}

Tensor tokens_to_tap(const Tensor& tok, const std::vector<int>& tap_shape) {
    Tensor tap(tap_shape);
    int t = tap.dim(0), c = tap.dim(1);
    int64_t hw = int64_t(tap.dim(2)) * tap.dim(3);
    for (int f = 0; f < t; ++f)
        for (int64_t s = 0; s < hw; ++s) {
            const double* row = tok.data() + (int64_t(f) * hw + s) * c;
            double* dst = tap.data() + int64_t(f) * c * hw + s;
            for (int ch = 0; ch < c; ++ch) dst[int64_t(ch) * hw] = row[ch];
        }
    return tap;
}

}  // namespace

void BackboneConfig::validate() const {
    if (latent_channels <= 0 || base_channels <= 0 || emb_dim <= 0 || num_classes <= 0)
        throw std::invalid_argument("BackboneConfig: sizes must be positive");
    if (emb_dim % 2 != 0) throw std::invalid_argument("BackboneConfig: emb_dim must be even");
    if (int(channel_multipliers.size()) != num_up_blocks)
        throw std::invalid_argument("BackboneConfig: multipliers must match num_up_blocks");
    if (num_up_blocks != 4)
        throw std::invalid_argument("BackboneConfig: the decoder is fixed at 4 up blocks");
    if (feature_tap_index < 1 || feature_tap_index > num_up_blocks)
        throw std::invalid_argument("BackboneConfig: feature_tap_index out of range");
    if (temporal_mixing != "temporal_attention" && temporal_mixing != "temporal_conv")
        throw std::invalid_argument("BackboneConfig: unknown temporal_mixing");
    for (int m : channel_multipliers)
        if (m <= 0) throw std::invalid_argument("BackboneConfig: multipliers must be positive");
}

namespace detail {

void ResBlock::init(nn::Params& p, const std::string& name, int cin_, int cout_, int emb_dim,
                    int gn_groups, Rng& rng) {
    cin = cin_;
    cout = cout_;
    gn1.init(p, name + ".gn1", cin, group_count(cin, gn_groups));
    conv1.init(p, name + ".conv1", cin, cout, 3, rng);
    emb_proj.init(p, name + ".emb", emb_dim, cout, rng);
    gn2.init(p, name + ".gn2", cout, group_count(cout, gn_groups));
    conv2.init(p, name + ".conv2", cout, cout, 3, rng);
    use_skip = (cin != cout);
    if (use_skip) skip.init(p, name + ".skip", cin, cout, 1, rng);
}

Tensor ResBlock::forward(const nn::Params& p, const Tensor& x, const Tensor& emb,
                         nn::Tape* tape) const {
    nn::SiLU silu;
    Tensor h = gn1.forward(p, x, tape);
    h = silu.forward(h, tape);
    h = conv1.forward(p, h, tape);
    Tensor e = emb_proj.forward(p, emb, tape);  // [1, cout]
    int64_t hw = int64_t(h.dim(2)) * h.dim(3);
    for (int f = 0; f < h.dim(0); ++f)
        for (int c = 0; c < cout; ++c) {
            double* hp = h.data() + (int64_t(f) * cout + c) * hw;
            double ev = e[c];
            for (int64_t i = 0; i < hw; ++i) hp[i] += ev;
        }
    h = gn2.forward(p, h, tape);
    h = silu.forward(h, tape);
    h = conv2.forward(p, h, tape);
    if (use_skip) {
        h += skip.forward(p, x, tape);
    } else {
        h += x;
    }
    return h;
}

Tensor ResBlock::backward(const nn::Params& p, const Tensor& gy, nn::Tape& tape, nn::Grads* g,
                          Tensor* gemb) const {
    nn::SiLU silu;
    Tensor gx_res;
    if (use_skip) {
        gx_res = skip.backward(p, gy, tape, g);
    } else {
        gx_res = gy;
    }
    Tensor gh = conv2.backward(p, gy, tape, g);
    gh = silu.backward(gh, tape);
    gh = gn2.backward(p, gh, tape, g);
    // embedding broadcast-add: ge[c] = sum over frames and space
    Tensor ge({1, cout});
    int64_t hw = int64_t(gh.dim(2)) * gh.dim(3);
    for (int f = 0; f < gh.dim(0); ++f)
        for (int c = 0; c < cout; ++c) {
            const double* gp = gh.data() + (int64_t(f) * cout + c) * hw;
            double s = 0;
            for (int64_t i = 0; i < hw; ++i) s += gp[i];
            ge[c] += s;
        }
    Tensor ge_in = emb_proj.backward(p, ge, tape, g);
    if (gemb) *gemb += ge_in;
    Tensor gx = conv1.backward(p, gh, tape, g);
    gx = silu.backward(gx, tape);
    gx = gn1.backward(p, gx, tape, g);
    gx += gx_res;
    return gx;
}

void TemporalMix::init(nn::Params& p, const std::string& name, int channels, bool attention,
                       Rng& rng) {
    use_attention = attention;
    if (attention) {
        attn.init(p, name + ".tattn", channels, rng);
    } else {
        tconv.init(p, name + ".tconv", channels, rng);
    }
}

Tensor TemporalMix::forward(const nn::Params& p, const Tensor& x, nn::Tape* tape) const {
    return use_attention ? attn.forward(p, x, tape) : tconv.forward(p, x, tape);
}

Tensor TemporalMix::backward(const nn::Params& p, const Tensor& gy, nn::Tape& tape,
                             nn::Grads* g) const {
    return use_attention ? attn.backward(p, gy, tape, g) : tconv.backward(p, gy, tape, g);
}

void Stage::init(nn::Params& p, const std::string& name, int cin, int cout, int emb_dim,
                 int gn_groups, bool attention, Rng& rng) {
    res.init(p, name + ".res", cin, cout, emb_dim, gn_groups, rng);
    mix.init(p, name, cout, attention, rng);
}

Tensor Stage::forward(const nn::Params& p, const Tensor& x, const Tensor& emb,
                      nn::Tape* tape) const {
    return mix.forward(p, res.forward(p, x, emb, tape), tape);
}

Tensor Stage::backward(const nn::Params& p, const Tensor& gy, nn::Tape& tape, nn::Grads* g,
                       Tensor* gemb) const {
    return res.backward(p, mix.backward(p, gy, tape, g), tape, g, gemb);
}

}  // namespace detail

UNet::UNet(const BackboneConfig& cfg, nn::Params& params, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    bool attention = cfg_.temporal_mixing == "temporal_attention";
    int e = cfg_.emb_dim;
    emb_l1_.init(params, "emb.l1", e, e, rng);
    emb_l2_.init(params, "emb.l2", e, e, rng);
    in_conv_.init(params, "in_conv", cfg_.in_channels(), cfg_.stage_channels(0), 3, rng);

    int n = cfg_.num_up_blocks;
    down_.resize(size_t(n));
    int prev = cfg_.stage_channels(0);
    for (int i = 0; i < n; ++i) {
        down_[size_t(i)].init(params, "down" + std::to_string(i), prev, cfg_.stage_channels(i), e,
                              cfg_.gn_groups, attention, rng);
        prev = cfg_.stage_channels(i);
    }
    mid_.init(params, "mid", prev, prev, e, cfg_.gn_groups, attention, rng);
    up_.resize(size_t(n));
    for (int j = 0; j < n; ++j) {
        // up block j (1-based j+1) consumes concat(prev, skip from down stage n-1-j)
        int skip_c = cfg_.stage_channels(n - 1 - j);
        up_[size_t(j)].init(params, "up" + std::to_string(j + 1), prev + skip_c, skip_c, e,
                            cfg_.gn_groups, attention, rng);
        prev = skip_c;
    }
    out_gn_.init(params, "out.gn", prev, group_count(prev, cfg_.gn_groups));
    out_conv_.init(params, "out.conv", prev, cfg_.latent_channels, 3, rng, /*zero=*/true);
}

Tensor UNet::embed(const nn::Params& p, double c_noise, nn::Tape* tape) const {
    nn::SiLU silu;
    Tensor f = nn::fourier_embed(c_noise, cfg_.emb_dim).reshaped({1, cfg_.emb_dim});
    Tensor h = emb_l1_.forward(p, f, tape);
    h = silu.forward(h, tape);
    return emb_l2_.forward(p, h, tape);
}

UNet::Out UNet::forward(const nn::Params& p, const Tensor& x, double c_noise, nn::Tape* tape,
                        Mode mode, bool capture_tap) const {
    if (x.ndim() != 4 || x.dim(1) != cfg_.in_channels())
        throw std::invalid_argument("UNet::forward: wrong input channel depth");
    int n = cfg_.num_up_blocks;
    Tensor emb = embed(p, c_noise, tape);

    Tensor h = in_conv_.forward(p, x, tape);
    std::vector<Tensor> skips(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        h = down_[size_t(i)].forward(p, h, emb, tape);
        skips[size_t(i)] = h;
        if (i + 1 < n) h = pool_.forward(h, tape);
    }
    h = pool_.forward(h, tape);
    h = mid_.forward(p, h, emb, tape);

    Out out;
    for (int j = 0; j < n; ++j) {
        const Tensor& skip = skips[size_t(n - 1 - j)];
        h = upsample_.forward(h, skip.dim(2), skip.dim(3), tape);
        h = up_[size_t(j)].forward(p, edm::concat_channels(h, skip), emb, tape);
        if (j + 1 == cfg_.feature_tap_index) {
            if (capture_tap) out.tap = h;
            if (mode == Mode::to_tap) return out;
        }
    }
    nn::SiLU silu;
    Tensor r = out_gn_.forward(p, h, tape);
    r = silu.forward(r, tape);
    out.residual = out_conv_.forward(p, r, tape);
    return out;
}

Tensor UNet::backward(const nn::Params& p, const Tensor& g_residual, const Tensor& g_tap,
                      nn::Tape& tape, nn::Grads* g, Mode mode) const {
    int n = cfg_.num_up_blocks;
    nn::SiLU silu;
    Tensor gemb({1, cfg_.emb_dim});

    int start_j;  // decoder block at which the backward walk begins
    Tensor gh;
    if (mode == Mode::full) {
        if (g_residual.empty()) throw std::invalid_argument("UNet::backward: missing g_residual");
        gh = out_conv_.backward(p, g_residual, tape, g);
        gh = silu.backward(gh, tape);
        gh = out_gn_.backward(p, gh, tape, g);
        start_j = n - 1;
    } else {
        start_j = cfg_.feature_tap_index - 1;
        gh = Tensor();  // set from g_tap below
    }

    std::vector<Tensor> gskips(static_cast<size_t>(n));
    for (int j = start_j; j >= 0; --j) {
        if (j + 1 == cfg_.feature_tap_index && !g_tap.empty()) {
            if (gh.empty()) {
                gh = g_tap;
            } else {
                gh += g_tap;
            }
        }
        if (gh.empty())
            throw std::invalid_argument("UNet::backward: no gradient reaches decoder stage");
        Tensor gcat = up_[size_t(j)].backward(p, gh, tape, g, &gemb);
        int skip_c = cfg_.stage_channels(n - 1 - j);
        int up_c = gcat.dim(1) - skip_c;
        Tensor gup;
        split_channels(gcat, up_c, gup, gskips[size_t(n - 1 - j)]);
        gh = upsample_.backward(gup, tape);
    }

    gh = mid_.backward(p, gh, tape, g, &gemb);
    gh = pool_.backward(gh, tape);
    for (int i = n - 1; i >= 0; --i) {
        // decoder stages beyond the tap never run in to_tap mode, so their
        // skip connections carry no gradient
        if (!gskips[size_t(i)].empty()) gh += gskips[size_t(i)];
        gh = down_[size_t(i)].backward(p, gh, tape, g, &gemb);
        if (i > 0) gh = pool_.backward(gh, tape);
    }
    Tensor gx = in_conv_.backward(p, gh, tape, g);

    // embedding MLP was pushed first, so it unwinds last
    Tensor ge = emb_l2_.backward(p, gemb, tape, g);
    ge = silu.backward(ge, tape);
    emb_l1_.backward(p, ge, tape, g);
    assert(tape.empty() && "UNet::backward: tape not fully consumed");
    return gx;
}

ClassifierHead::ClassifierHead(int tap_channels, int num_classes, nn::Params& params, Rng& rng)
    : channels_(tap_channels), num_classes_(num_classes) {
    pool_.init(params, "head.pool", tap_channels, rng, /*head=*/true);
    fc_.init(params, "head.fc", tap_channels, num_classes, rng, /*head=*/true, /*zero=*/true);
}

Tensor ClassifierHead::forward(const nn::Params& p, const Tensor& tap, nn::Tape* tape) const {
    if (tap.ndim() != 4 || tap.dim(1) != channels_)
        throw std::invalid_argument("ClassifierHead: bad tap shape");
    if (tape) {
        Tensor shape({4});
        for (int i = 0; i < 4; ++i) shape[i] = tap.dim(i);
        tape->push(shape);
    }
    Tensor tokens = tap_to_tokens(tap);
    Tensor pooled = pool_.forward(p, tokens, tape);
    Tensor logits = fc_.forward(p, pooled.reshaped({1, channels_}), tape);
    return logits.reshaped({num_classes_});
}

Tensor ClassifierHead::backward(const nn::Params& p, const Tensor& glogits, nn::Tape& tape,
                                nn::Grads* g) const {
    Tensor gp = fc_.backward(p, glogits.reshaped({1, num_classes_}), tape, g);
    Tensor gtok = pool_.backward(p, gp.reshaped({channels_}), tape, g);
    Tensor shape = tape.pop();
    std::vector<int> tap_shape(4);
    for (int i = 0; i < 4; ++i) tap_shape[size_t(i)] = int(shape[i]);
    return tokens_to_tap(gtok, tap_shape);
}

}  // namespace uvd
