#include "uvd/nn.hpp"

#include <Eigen/Dense>
#include <cassert>
#include <cmath>
#include <stdexcept>

namespace uvd::nn {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using CMapM = Eigen::Map<const MatRM>;

namespace {

MapM as_mat(Tensor& t, int64_t rows, int64_t cols) { return MapM(t.data(), rows, cols); }
CMapM as_mat(const Tensor& t, int64_t rows, int64_t cols) {
    return CMapM(t.data(), rows, cols);
}

Tensor shape_token(const Tensor& x) {
    Tensor s({int(x.shape().size())});
    for (size_t i = 0; i < x.shape().size(); ++i) s[int64_t(i)] = x.shape()[i];
    return s;
}

std::vector<int> shape_from_token(const Tensor& s) {
    std::vector<int> shape(size_t(s.numel()));
    for (int64_t i = 0; i < s.numel(); ++i) shape[size_t(i)] = int(s[i]);
    return shape;
}

void init_normal(Tensor& t, double std, Rng& rng) {
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = std * rng.normal();
}

}  // namespace

// ---- Params / Grads / Tape ----

int Params::add(const std::string& name, std::vector<int> shape, bool head) {
    if (find(name) >= 0) throw std::invalid_argument("Params::add: duplicate name " + name);
    infos_.push_back({name, shape, head});
    values_.emplace_back(std::move(shape));
    return int(values_.size()) - 1;
}

int64_t Params::total_size() const {
    int64_t n = 0;
    for (const Tensor& t : values_) n += t.numel();
    return n;
}

int Params::find(const std::string& name) const {
    for (size_t i = 0; i < infos_.size(); ++i)
        if (infos_[i].name == name) return int(i);
    return -1;
}

Grads::Grads(const Params& p) {
    g_.reserve(size_t(p.count()));
    for (int i = 0; i < p.count(); ++i) g_.emplace_back(p.value(i).shape());
}

void Grads::zero() {
    for (Tensor& t : g_) t.zero();
}

void Grads::add(const Grads& other) {
    if (other.count() != count()) throw std::invalid_argument("Grads::add: count mismatch");
    for (size_t i = 0; i < g_.size(); ++i) g_[i] += other.g_[i];
}

void Grads::scale(double s) {
    for (Tensor& t : g_) t *= s;
}

double Grads::norm() const {
    double s = 0;
    for (const Tensor& t : g_) s += t.dot(t);
    return std::sqrt(s);
}

Tensor Tape::pop() {
    assert(!stack_.empty() && "Tape::pop on empty tape");
    Tensor t = std::move(stack_.back());
    stack_.pop_back();
    return t;
}

// ---- Linear ----

void Linear::init(Params& p, const std::string& name, int in, int out, Rng& rng, bool head,
                  bool zero) {
    in_f = in;
    out_f = out;
    w = p.add(name + ".w", {out, in}, head);
    b = p.add(name + ".b", {out}, head);
    if (!zero) init_normal(p.value(w), std::sqrt(2.0 / in), rng);
}

Tensor Linear::forward(const Params& p, const Tensor& x, Tape* tape) const {
    int64_t n = x.numel() / in_f;
    Tensor y({int(n), out_f});
    as_mat(y, n, out_f).noalias() = as_mat(x, n, in_f) * as_mat(p.value(w), out_f, in_f).transpose();
    const Tensor& bias = p.value(b);
    for (int64_t r = 0; r < n; ++r)
        for (int c = 0; c < out_f; ++c) y[r * out_f + c] += bias[c];
    if (tape) tape->push(x);
    return y;
}

Tensor Linear::backward(const Params& p, const Tensor& gy, Tape& tape, Grads* g) const {
    Tensor x = tape.pop();
    int64_t n = gy.numel() / out_f;
    Tensor gx(x.shape());
    as_mat(gx, n, in_f).noalias() = as_mat(gy, n, out_f) * as_mat(p.value(w), out_f, in_f);
    if (g) {
        as_mat(g->at(w), out_f, in_f).noalias() +=
            as_mat(gy, n, out_f).transpose() * as_mat(x, n, in_f);
        Tensor& gb = g->at(b);
        for (int64_t r = 0; r < n; ++r)
            for (int c = 0; c < out_f; ++c) gb[c] += gy[r * out_f + c];
    }
    return gx;
}

// ---- Conv2d ----

void Conv2d::init(Params& p, const std::string& name, int cin_, int cout_, int k_, Rng& rng,
                  bool zero) {
    cin = cin_;
    cout = cout_;
    k = k_;
    w = p.add(name + ".w", {cout, cin * k * k});
    b = p.add(name + ".b", {cout});
    if (!zero) init_normal(p.value(w), std::sqrt(2.0 / (cin * k * k)), rng);
}

namespace {

// col: [cin*k*k, H*W]
void im2col(const double* x, int cin, int h, int w, int k, double* col) {
    int pad = k / 2;
    int64_t hw = int64_t(h) * w;
    for (int c = 0; c < cin; ++c) {
        const double* xc = x + int64_t(c) * hw;
        for (int dy = 0; dy < k; ++dy) {
            for (int dx = 0; dx < k; ++dx) {
                double* row = col + (int64_t(c) * k * k + dy * k + dx) * hw;
                for (int y = 0; y < h; ++y) {
                    int sy = y + dy - pad;
                    if (sy < 0 || sy >= h) {
                        std::fill(row + int64_t(y) * w, row + int64_t(y) * w + w, 0.0);
                        continue;
                    }
                    for (int xx = 0; xx < w; ++xx) {
                        int sx = xx + dx - pad;
                        row[int64_t(y) * w + xx] =
                            (sx < 0 || sx >= w) ? 0.0 : xc[int64_t(sy) * w + sx];
                    }
                }
            }
        }
    }
}

void col2im_add(const double* col, int cin, int h, int w, int k, double* gx) {
    int pad = k / 2;
    int64_t hw = int64_t(h) * w;
    for (int c = 0; c < cin; ++c) {
        double* gxc = gx + int64_t(c) * hw;
        for (int dy = 0; dy < k; ++dy) {
            for (int dx = 0; dx < k; ++dx) {
                const double* row = col + (int64_t(c) * k * k + dy * k + dx) * hw;
                for (int y = 0; y < h; ++y) {
                    int sy = y + dy - pad;
                    if (sy < 0 || sy >= h) continue;
                    for (int xx = 0; xx < w; ++xx) {
                        int sx = xx + dx - pad;
                        if (sx < 0 || sx >= w) continue;
                        gxc[int64_t(sy) * w + sx] += row[int64_t(y) * w + xx];
                    }
                }
            }
        }
    }
}

}  // namespace

Tensor Conv2d::forward(const Params& p, const Tensor& x, Tape* tape) const {
    if (x.ndim() != 4 || x.dim(1) != cin) throw std::invalid_argument("Conv2d: bad input shape");
    int t = x.dim(0), h = x.dim(2), wdt = x.dim(3);
    int64_t hw = int64_t(h) * wdt;
    Tensor y({t, cout, h, wdt});
    const Tensor& wt = p.value(w);
    const Tensor& bias = p.value(b);

    if (k == 1) {
        for (int f = 0; f < t; ++f) {
            CMapM xm(x.data() + int64_t(f) * cin * hw, cin, hw);
            MapM ym(y.data() + int64_t(f) * cout * hw, cout, hw);
            ym.noalias() = as_mat(wt, cout, cin) * xm;
        }
    } else {
        Tensor col({cin * k * k, int(hw)});
        for (int f = 0; f < t; ++f) {
            im2col(x.data() + int64_t(f) * cin * hw, cin, h, wdt, k, col.data());
            MapM ym(y.data() + int64_t(f) * cout * hw, cout, hw);
            ym.noalias() = as_mat(wt, cout, cin * k * k) * as_mat(col, cin * k * k, hw);
        }
    }
    for (int f = 0; f < t; ++f)
        for (int c = 0; c < cout; ++c) {
            double* yc = y.data() + (int64_t(f) * cout + c) * hw;
            double bv = bias[c];
            for (int64_t i = 0; i < hw; ++i) yc[i] += bv;
        }
    if (tape) tape->push(x);
    return y;
}

Tensor Conv2d::backward(const Params& p, const Tensor& gy, Tape& tape, Grads* g) const {
    Tensor x = tape.pop();
    int t = x.dim(0), h = x.dim(2), wdt = x.dim(3);
    int64_t hw = int64_t(h) * wdt;
    Tensor gx(x.shape());
    const Tensor& wt = p.value(w);

    if (k == 1) {
        for (int f = 0; f < t; ++f) {
            CMapM gym(gy.data() + int64_t(f) * cout * hw, cout, hw);
            MapM gxm(gx.data() + int64_t(f) * cin * hw, cin, hw);
            gxm.noalias() = as_mat(wt, cout, cin).transpose() * gym;
            if (g) {
                CMapM xm(x.data() + int64_t(f) * cin * hw, cin, hw);
                as_mat(g->at(w), cout, cin).noalias() += gym * xm.transpose();
            }
        }
    } else {
        Tensor col({cin * k * k, int(hw)});
        Tensor gcol({cin * k * k, int(hw)});
        for (int f = 0; f < t; ++f) {
            CMapM gym(gy.data() + int64_t(f) * cout * hw, cout, hw);
            as_mat(gcol, cin * k * k, hw).noalias() =
                as_mat(wt, cout, cin * k * k).transpose() * gym;
            col2im_add(gcol.data(), cin, h, wdt, k, gx.data() + int64_t(f) * cin * hw);
            if (g) {
                im2col(x.data() + int64_t(f) * cin * hw, cin, h, wdt, k, col.data());
                as_mat(g->at(w), cout, cin * k * k).noalias() +=
                    gym * as_mat(col, cin * k * k, hw).transpose();
            }
        }
    }
    if (g) {
        Tensor& gb = g->at(b);
        for (int f = 0; f < t; ++f)
            for (int c = 0; c < cout; ++c) {
                const double* gyc = gy.data() + (int64_t(f) * cout + c) * hw;
                double s = 0;
                for (int64_t i = 0; i < hw; ++i) s += gyc[i];
                gb[c] += s;
            }
    }
    return gx;
}

// ---- GroupNorm ----

void GroupNorm::init(Params& p, const std::string& name, int channels_, int groups_) {
    channels = channels_;
    groups = groups_;
    if (channels % groups != 0) throw std::invalid_argument("GroupNorm: channels % groups != 0");
    gamma = p.add(name + ".gamma", {channels});
    beta = p.add(name + ".beta", {channels});
    p.value(gamma).fill(1.0);
}

Tensor GroupNorm::forward(const Params& p, const Tensor& x, Tape* tape) const {
    if (x.ndim() != 4 || x.dim(1) != channels)
        throw std::invalid_argument("GroupNorm: bad input shape");
    int t = x.dim(0), h = x.dim(2), wdt = x.dim(3);
    int cpg = channels / groups;
    int64_t hw = int64_t(h) * wdt;
    int64_t gsz = cpg * hw;

    Tensor y(x.shape());
    Tensor stats({t, groups, 2});  // mean, invstd
    const Tensor& gm = p.value(gamma);
    const Tensor& bt = p.value(beta);
    for (int f = 0; f < t; ++f) {
        for (int gi = 0; gi < groups; ++gi) {
            const double* xs = x.data() + (int64_t(f) * channels + int64_t(gi) * cpg) * hw;
            double mean = 0;
            for (int64_t i = 0; i < gsz; ++i) mean += xs[i];
            mean /= double(gsz);
            double var = 0;
            for (int64_t i = 0; i < gsz; ++i) {
                double d = xs[i] - mean;
                var += d * d;
            }
            var /= double(gsz);
            double inv = 1.0 / std::sqrt(var + eps);
            stats[(int64_t(f) * groups + gi) * 2 + 0] = mean;
            stats[(int64_t(f) * groups + gi) * 2 + 1] = inv;
            double* ys = y.data() + (int64_t(f) * channels + int64_t(gi) * cpg) * hw;
            for (int c = 0; c < cpg; ++c) {
                double gmc = gm[int64_t(gi) * cpg + c];
                double btc = bt[int64_t(gi) * cpg + c];
                for (int64_t i = 0; i < hw; ++i) {
                    double xh = (xs[c * hw + i] - mean) * inv;
                    ys[c * hw + i] = gmc * xh + btc;
                }
            }
        }
    }
    if (tape) {
        tape->push(x);
        tape->push(stats);
    }
    return y;
}

Tensor GroupNorm::backward(const Params& p, const Tensor& gy, Tape& tape, Grads* g) const {
    Tensor stats = tape.pop();
    Tensor x = tape.pop();
    int t = x.dim(0), h = x.dim(2), wdt = x.dim(3);
    int cpg = channels / groups;
    int64_t hw = int64_t(h) * wdt;
    int64_t gsz = cpg * hw;
    Tensor gx(x.shape());
    const Tensor& gm = p.value(gamma);

    for (int f = 0; f < t; ++f) {
        for (int gi = 0; gi < groups; ++gi) {
            double mean = stats[(int64_t(f) * groups + gi) * 2 + 0];
            double inv = stats[(int64_t(f) * groups + gi) * 2 + 1];
            const double* xs = x.data() + (int64_t(f) * channels + int64_t(gi) * cpg) * hw;
            const double* gys = gy.data() + (int64_t(f) * channels + int64_t(gi) * cpg) * hw;
            double* gxs = gx.data() + (int64_t(f) * channels + int64_t(gi) * cpg) * hw;

            // gxhat = gy * gamma; reduce mean(gxhat) and mean(gxhat * xhat)
            double s1 = 0, s2 = 0;
            for (int c = 0; c < cpg; ++c) {
                double gmc = gm[int64_t(gi) * cpg + c];
                for (int64_t i = 0; i < hw; ++i) {
                    double xh = (xs[c * hw + i] - mean) * inv;
                    double gxh = gys[c * hw + i] * gmc;
                    s1 += gxh;
                    s2 += gxh * xh;
                }
            }
            s1 /= double(gsz);
            s2 /= double(gsz);
            for (int c = 0; c < cpg; ++c) {
                double gmc = gm[int64_t(gi) * cpg + c];
                for (int64_t i = 0; i < hw; ++i) {
                    double xh = (xs[c * hw + i] - mean) * inv;
                    double gxh = gys[c * hw + i] * gmc;
                    gxs[c * hw + i] = inv * (gxh - s1 - xh * s2);
                }
            }
            if (g) {
                Tensor& gg = g->at(gamma);
                Tensor& gb = g->at(beta);
                for (int c = 0; c < cpg; ++c) {
                    double sg = 0, sb = 0;
                    for (int64_t i = 0; i < hw; ++i) {
                        double xh = (xs[c * hw + i] - mean) * inv;
                        sg += gys[c * hw + i] * xh;
                        sb += gys[c * hw + i];
                    }
                    gg[int64_t(gi) * cpg + c] += sg;
                    gb[int64_t(gi) * cpg + c] += sb;
                }
            }
        }
    }
    return gx;
}

// ---- SiLU ----

Tensor SiLU::forward(const Tensor& x, Tape* tape) const {
    Tensor y(x.shape());
    for (int64_t i = 0; i < x.numel(); ++i) {
        double s = 1.0 / (1.0 + std::exp(-x[i]));
        y[i] = x[i] * s;
    }
    if (tape) tape->push(x);
    return y;
}

Tensor SiLU::backward(const Tensor& gy, Tape& tape) const {
    Tensor x = tape.pop();
    Tensor gx(x.shape());
    for (int64_t i = 0; i < x.numel(); ++i) {
        double s = 1.0 / (1.0 + std::exp(-x[i]));
        gx[i] = gy[i] * s * (1.0 + x[i] * (1.0 - s));
    }
    return gx;
}

// ---- AvgPool2 ----

Tensor AvgPool2::forward(const Tensor& x, Tape* tape) const {
    int t = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    int ho = (h + 1) / 2, wo = (w + 1) / 2;
    Tensor y({t, c, ho, wo});
    for (int f = 0; f < t; ++f)
        for (int ch = 0; ch < c; ++ch)
            for (int yo = 0; yo < ho; ++yo)
                for (int xo = 0; xo < wo; ++xo) {
                    int r0 = 2 * yo, r1 = std::min(2 * yo + 2, h);
                    int c0 = 2 * xo, c1 = std::min(2 * xo + 2, w);
                    double s = 0;
                    for (int r = r0; r < r1; ++r)
                        for (int cc = c0; cc < c1; ++cc) s += x.at4(f, ch, r, cc);
                    y.at4(f, ch, yo, xo) = s / double((r1 - r0) * (c1 - c0));
                }
    if (tape) tape->push(shape_token(x));
    return y;
}

Tensor AvgPool2::backward(const Tensor& gy, Tape& tape) const {
    Tensor shape = tape.pop();
    Tensor gx(shape_from_token(shape));
    int t = gx.dim(0), c = gx.dim(1), h = gx.dim(2), w = gx.dim(3);
    int ho = (h + 1) / 2, wo = (w + 1) / 2;
    for (int f = 0; f < t; ++f)
        for (int ch = 0; ch < c; ++ch)
            for (int yo = 0; yo < ho; ++yo)
                for (int xo = 0; xo < wo; ++xo) {
                    int r0 = 2 * yo, r1 = std::min(2 * yo + 2, h);
                    int c0 = 2 * xo, c1 = std::min(2 * xo + 2, w);
                    double gv = gy.at4(f, ch, yo, xo) / double((r1 - r0) * (c1 - c0));
                    for (int r = r0; r < r1; ++r)
                        for (int cc = c0; cc < c1; ++cc) gx.at4(f, ch, r, cc) += gv;
                }
    return gx;
}

// ---- UpsampleNearest ----

Tensor UpsampleNearest::forward(const Tensor& x, int th, int tw, Tape* tape) const {
    int t = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    Tensor y({t, c, th, tw});
    for (int f = 0; f < t; ++f)
        for (int ch = 0; ch < c; ++ch)
            for (int yo = 0; yo < th; ++yo) {
                int sy = yo * h / th;
                for (int xo = 0; xo < tw; ++xo) y.at4(f, ch, yo, xo) = x.at4(f, ch, sy, xo * w / tw);
            }
    if (tape) tape->push(shape_token(x));
    return y;
}

Tensor UpsampleNearest::backward(const Tensor& gy, Tape& tape) const {
    Tensor shape = tape.pop();
    Tensor gx(shape_from_token(shape));
    int t = gx.dim(0), c = gx.dim(1), h = gx.dim(2), w = gx.dim(3);
    int th = gy.dim(2), tw = gy.dim(3);
    for (int f = 0; f < t; ++f)
        for (int ch = 0; ch < c; ++ch)
            for (int yo = 0; yo < th; ++yo) {
                int sy = yo * h / th;
                for (int xo = 0; xo < tw; ++xo)
                    gx.at4(f, ch, sy, xo * w / tw) += gy.at4(f, ch, yo, xo);
            }
    return gx;
}

// ---- TemporalAttention ----

void TemporalAttention::init(Params& p, const std::string& name, int channels_, Rng& rng) {
    channels = channels_;
    wq = p.add(name + ".wq", {channels, channels});
    wk = p.add(name + ".wk", {channels, channels});
    wv = p.add(name + ".wv", {channels, channels});
    wo = p.add(name + ".wo", {channels, channels});  // zero-init
    double std = std::sqrt(1.0 / channels);
    init_normal(p.value(wq), std, rng);
    init_normal(p.value(wk), std, rng);
    init_normal(p.value(wv), std, rng);
}

namespace {

// site-major token gather: out[(s*T + t), c] = x[t, c, site]
void gather_tokens(const Tensor& x, Tensor& out) {
    int t = x.dim(0), c = x.dim(1);
    int64_t hw = int64_t(x.dim(2)) * x.dim(3);
    for (int64_t s = 0; s < hw; ++s)
        for (int f = 0; f < t; ++f) {
            double* row = out.data() + (s * t + f) * c;
            const double* src = x.data() + int64_t(f) * c * hw + s;
            for (int ch = 0; ch < c; ++ch) row[ch] = src[int64_t(ch) * hw];
        }
}

void scatter_tokens_add(const Tensor& tok, Tensor& x) {
    int t = x.dim(0), c = x.dim(1);
    int64_t hw = int64_t(x.dim(2)) * x.dim(3);
    for (int64_t s = 0; s < hw; ++s)
        for (int f = 0; f < t; ++f) {
            const double* row = tok.data() + (s * t + f) * c;
            double* dst = x.data() + int64_t(f) * c * hw + s;
            for (int ch = 0; ch < c; ++ch) dst[int64_t(ch) * hw] += row[ch];
        }
}

// Fixed sinusoidal frame-position features added to the attention tokens.
// Without them self-attention is permutation-equivariant over frames and the
// network cannot represent temporal order at all.
void add_frame_positions(Tensor& xg, int t, int c) {
    int64_t n = xg.numel() / c;
    std::vector<double> pe(size_t(t) * c);
    for (int f = 0; f < t; ++f)
        for (int ch = 0; ch < c; ++ch) {
            double div = std::pow(10000.0, double(2 * (ch / 2)) / double(c));
            pe[size_t(f) * c + ch] =
                (ch % 2 == 0) ? std::sin(f / div) : std::cos(f / div);
        }
    for (int64_t row = 0; row < n; ++row) {
        int f = int(row % t);
        double* dst = xg.data() + row * c;
        const double* src = pe.data() + size_t(f) * c;
        for (int ch = 0; ch < c; ++ch) dst[ch] += src[ch];
    }
}

void softmax_rows_inplace(MapM m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        double mx = m.row(r).maxCoeff();
        m.row(r) = (m.row(r).array() - mx).exp();
        m.row(r) /= m.row(r).sum();
    }
}

}  // namespace

Tensor TemporalAttention::forward(const Params& p, const Tensor& x, Tape* tape) const {
    int t = x.dim(0), c = x.dim(1);
    int64_t hw = int64_t(x.dim(2)) * x.dim(3);
    int64_t n = hw * t;
    double scale = 1.0 / std::sqrt(double(c));

    Tensor xg({int(n), c});
    gather_tokens(x, xg);
    add_frame_positions(xg, t, c);
    Tensor q({int(n), c}), kk({int(n), c}), v({int(n), c}), z({int(n), c});
    as_mat(q, n, c).noalias() = as_mat(xg, n, c) * as_mat(p.value(wq), c, c).transpose();
    as_mat(kk, n, c).noalias() = as_mat(xg, n, c) * as_mat(p.value(wk), c, c).transpose();
    as_mat(v, n, c).noalias() = as_mat(xg, n, c) * as_mat(p.value(wv), c, c).transpose();

    Tensor att({int(hw), t, t});
    for (int64_t s = 0; s < hw; ++s) {
        MapM as(att.data() + s * t * t, t, t);
        CMapM qs(q.data() + s * t * c, t, c);
        CMapM ks(kk.data() + s * t * c, t, c);
        as.noalias() = qs * ks.transpose() * scale;
        softmax_rows_inplace(as);
        MapM zs(z.data() + s * t * c, t, c);
        CMapM vs(v.data() + s * t * c, t, c);
        zs.noalias() = as * vs;
    }
    Tensor y = x;
    Tensor proj({int(n), c});
    as_mat(proj, n, c).noalias() = as_mat(z, n, c) * as_mat(p.value(wo), c, c).transpose();
    scatter_tokens_add(proj, y);
    if (tape) tape->push(x);
    return y;
}

Tensor TemporalAttention::backward(const Params& p, const Tensor& gy, Tape& tape,
                                   Grads* g) const {
    Tensor x = tape.pop();
    int t = x.dim(0), c = x.dim(1);
    int64_t hw = int64_t(x.dim(2)) * x.dim(3);
    int64_t n = hw * t;
    double scale = 1.0 / std::sqrt(double(c));

    // recompute forward intermediates (positions are constant: gradient passes through)
    Tensor xg({int(n), c});
    gather_tokens(x, xg);
    add_frame_positions(xg, t, c);
    Tensor q({int(n), c}), kk({int(n), c}), v({int(n), c}), z({int(n), c});
    as_mat(q, n, c).noalias() = as_mat(xg, n, c) * as_mat(p.value(wq), c, c).transpose();
    as_mat(kk, n, c).noalias() = as_mat(xg, n, c) * as_mat(p.value(wk), c, c).transpose();
    as_mat(v, n, c).noalias() = as_mat(xg, n, c) * as_mat(p.value(wv), c, c).transpose();
    Tensor att({int(hw), t, t});
    for (int64_t s = 0; s < hw; ++s) {
        MapM as(att.data() + s * t * t, t, t);
        CMapM qs(q.data() + s * t * c, t, c);
        CMapM ks(kk.data() + s * t * c, t, c);
        as.noalias() = qs * ks.transpose() * scale;
        softmax_rows_inplace(as);
        MapM zs(z.data() + s * t * c, t, c);
        CMapM vs(v.data() + s * t * c, t, c);
        zs.noalias() = as * vs;
    }

    Tensor gproj({int(n), c});
    gather_tokens(gy, gproj);  // grad w.r.t. the projected tokens
    Tensor gz({int(n), c}), gq({int(n), c}), gk({int(n), c}), gv({int(n), c});
    as_mat(gz, n, c).noalias() = as_mat(gproj, n, c) * as_mat(p.value(wo), c, c);
    if (g)
        as_mat(g->at(wo), c, c).noalias() +=
            as_mat(gproj, n, c).transpose() * as_mat(z, n, c);

    Tensor ga({t, t}), gs({t, t});
    for (int64_t s = 0; s < hw; ++s) {
        CMapM as(att.data() + s * t * t, t, t);
        CMapM qs(q.data() + s * t * c, t, c);
        CMapM ks(kk.data() + s * t * c, t, c);
        CMapM vs(v.data() + s * t * c, t, c);
        CMapM gzs(gz.data() + s * t * c, t, c);
        MapM gam = as_mat(ga, t, t);
        MapM gsm = as_mat(gs, t, t);
        gam.noalias() = gzs * vs.transpose();
        for (int r = 0; r < t; ++r) {
            double dotv = (gam.row(r).array() * as.row(r).array()).sum();
            gsm.row(r) = as.row(r).array() * (gam.row(r).array() - dotv);
        }
        MapM gqs(gq.data() + s * t * c, t, c);
        MapM gks(gk.data() + s * t * c, t, c);
        MapM gvs(gv.data() + s * t * c, t, c);
        gqs.noalias() = gsm * ks * scale;
        gks.noalias() = gsm.transpose() * qs * scale;
        gvs.noalias() = as.transpose() * gzs;
    }

    Tensor gxg({int(n), c});
    as_mat(gxg, n, c).noalias() = as_mat(gq, n, c) * as_mat(p.value(wq), c, c);
    as_mat(gxg, n, c).noalias() += as_mat(gk, n, c) * as_mat(p.value(wk), c, c);
    as_mat(gxg, n, c).noalias() += as_mat(gv, n, c) * as_mat(p.value(wv), c, c);
    if (g) {
        as_mat(g->at(wq), c, c).noalias() += as_mat(gq, n, c).transpose() * as_mat(xg, n, c);
        as_mat(g->at(wk), c, c).noalias() += as_mat(gk, n, c).transpose() * as_mat(xg, n, c);
        as_mat(g->at(wv), c, c).noalias() += as_mat(gv, n, c).transpose() * as_mat(xg, n, c);
    }
    Tensor gx = gy;  // residual path
    scatter_tokens_add(gxg, gx);
    return gx;
}

// ---- TemporalConv ----

void TemporalConv::init(Params& p, const std::string& name, int channels_, Rng& rng) {
    (void)rng;
    channels = channels_;
    w = p.add(name + ".w", {channels, channels, 3});  // zero-init -> identity at start
    b = p.add(name + ".b", {channels});
}

Tensor TemporalConv::forward(const Params& p, const Tensor& x, Tape* tape) const {
    int t = x.dim(0), c = x.dim(1);
    int64_t hw = int64_t(x.dim(2)) * x.dim(3);
    const Tensor& wt = p.value(w);
    const Tensor& bias = p.value(b);
    Tensor y = x;
    for (int f = 0; f < t; ++f) {
        MapM ym(y.data() + int64_t(f) * c * hw, c, hw);
        for (int d = 0; d < 3; ++d) {
            int src = f + d - 1;
            if (src < 0 || src >= t) continue;
            // W_d[co][ci] = wt[co, ci, d]
            MatRM wd(c, c);
            for (int co = 0; co < c; ++co)
                for (int ci = 0; ci < c; ++ci) wd(co, ci) = wt[(int64_t(co) * c + ci) * 3 + d];
            CMapM xs(x.data() + int64_t(src) * c * hw, c, hw);
            ym.noalias() += wd * xs;
        }
        for (int co = 0; co < c; ++co) ym.row(co).array() += bias[co];
    }
    if (tape) tape->push(x);
    return y;
}

Tensor TemporalConv::backward(const Params& p, const Tensor& gy, Tape& tape, Grads* g) const {
    Tensor x = tape.pop();
    int t = x.dim(0), c = x.dim(1);
    int64_t hw = int64_t(x.dim(2)) * x.dim(3);
    const Tensor& wt = p.value(w);
    Tensor gx = gy;  // identity path
    for (int d = 0; d < 3; ++d) {
        MatRM wd(c, c);
        for (int co = 0; co < c; ++co)
            for (int ci = 0; ci < c; ++ci) wd(co, ci) = wt[(int64_t(co) * c + ci) * 3 + d];
        for (int f = 0; f < t; ++f) {
            int src = f + d - 1;
            if (src < 0 || src >= t) continue;
            CMapM gym(gy.data() + int64_t(f) * c * hw, c, hw);
            MapM gxm(gx.data() + int64_t(src) * c * hw, c, hw);
            gxm.noalias() += wd.transpose() * gym;
            if (g) {
                CMapM xs(x.data() + int64_t(src) * c * hw, c, hw);
                MatRM gwd = gym * xs.transpose();
                Tensor& gw = g->at(w);
                for (int co = 0; co < c; ++co)
                    for (int ci = 0; ci < c; ++ci)
                        gw[(int64_t(co) * c + ci) * 3 + d] += gwd(co, ci);
            }
        }
    }
    if (g) {
        Tensor& gb = g->at(b);
        for (int f = 0; f < t; ++f)
            for (int co = 0; co < c; ++co) {
                const double* row = gy.data() + (int64_t(f) * c + co) * hw;
                double s = 0;
                for (int64_t i = 0; i < hw; ++i) s += row[i];
                gb[co] += s;
            }
    }
    return gx;
}

// ---- AttentivePool ----

void AttentivePool::init(Params& p, const std::string& name, int dim_, Rng& rng, bool head) {
    dim = dim_;
    wk = p.add(name + ".wk", {dim, dim}, head);
    wv = p.add(name + ".wv", {dim, dim}, head);
    q = p.add(name + ".q", {dim}, head);  // zero-init -> uniform pooling at start
    double std = std::sqrt(1.0 / dim);
    init_normal(p.value(wk), std, rng);
    init_normal(p.value(wv), std, rng);
}

Tensor AttentivePool::forward(const Params& p, const Tensor& tokens, Tape* tape) const {
    int64_t n = tokens.numel() / dim;
    double scale = 1.0 / std::sqrt(double(dim));
    Tensor k({int(n), dim}), v({int(n), dim});
    as_mat(k, n, dim).noalias() = as_mat(tokens, n, dim) * as_mat(p.value(wk), dim, dim).transpose();
    as_mat(v, n, dim).noalias() = as_mat(tokens, n, dim) * as_mat(p.value(wv), dim, dim).transpose();
    const Tensor& qv = p.value(q);
    Tensor scores({int(n)});
    for (int64_t i = 0; i < n; ++i) {
        double s = 0;
        for (int d = 0; d < dim; ++d) s += k[i * dim + d] * qv[d];
        scores[i] = s * scale;
    }
    Tensor a = softmax(scores);
    Tensor out({dim});
    for (int64_t i = 0; i < n; ++i)
        for (int d = 0; d < dim; ++d) out[d] += a[i] * v[i * dim + d];
    if (tape) tape->push(tokens);
    return out;
}

Tensor AttentivePool::backward(const Params& p, const Tensor& gy, Tape& tape, Grads* g) const {
    Tensor tokens = tape.pop();
    int64_t n = tokens.numel() / dim;
    double scale = 1.0 / std::sqrt(double(dim));
    // recompute
    Tensor k({int(n), dim}), v({int(n), dim});
    as_mat(k, n, dim).noalias() = as_mat(tokens, n, dim) * as_mat(p.value(wk), dim, dim).transpose();
    as_mat(v, n, dim).noalias() = as_mat(tokens, n, dim) * as_mat(p.value(wv), dim, dim).transpose();
    const Tensor& qv = p.value(q);
    Tensor scores({int(n)});
    for (int64_t i = 0; i < n; ++i) {
        double s = 0;
        for (int d = 0; d < dim; ++d) s += k[i * dim + d] * qv[d];
        scores[i] = s * scale;
    }
    Tensor a = softmax(scores);

    Tensor ga({int(n)}), gs({int(n)});
    Tensor gv({int(n), dim}), gk({int(n), dim});
    for (int64_t i = 0; i < n; ++i) {
        double s = 0;
        for (int d = 0; d < dim; ++d) {
            s += gy[d] * v[i * dim + d];
            gv[i * dim + d] = a[i] * gy[d];
        }
        ga[i] = s;
    }
    double dotv = 0;
    for (int64_t i = 0; i < n; ++i) dotv += ga[i] * a[i];
    for (int64_t i = 0; i < n; ++i) gs[i] = a[i] * (ga[i] - dotv);

    Tensor gq({dim});
    for (int64_t i = 0; i < n; ++i)
        for (int d = 0; d < dim; ++d) {
            gk[i * dim + d] = gs[i] * qv[d] * scale;
            gq[d] += gs[i] * k[i * dim + d] * scale;
        }

    Tensor gtok(tokens.shape());
    as_mat(gtok, n, dim).noalias() = as_mat(gk, n, dim) * as_mat(p.value(wk), dim, dim);
    as_mat(gtok, n, dim).noalias() += as_mat(gv, n, dim) * as_mat(p.value(wv), dim, dim);
    if (g) {
        as_mat(g->at(wk), dim, dim).noalias() +=
            as_mat(gk, n, dim).transpose() * as_mat(tokens, n, dim);
        as_mat(g->at(wv), dim, dim).noalias() +=
            as_mat(gv, n, dim).transpose() * as_mat(tokens, n, dim);
        g->at(q) += gq;
    }
    return gtok;
}

// ---- Conv3d ----

void Conv3d::init(Params& p, const std::string& name, int cin_, int cout_, int k_, int stride_,
                  Rng& rng) {
    cin = cin_;
    cout = cout_;
    k = k_;
    stride = stride_;
    w = p.add(name + ".w", {cout, cin * k * k * k});
    b = p.add(name + ".b", {cout});
    init_normal(p.value(w), std::sqrt(2.0 / (cin * k * k * k)), rng);
}

namespace {

inline int conv_out(int n, int k, int s) { return (n + 2 * (k / 2) - k) / s + 1; }

void im2col3(const double* x, int cin, int t, int h, int w, int k, int s, double* col) {
    int pad = k / 2;
    int to = conv_out(t, k, s), ho = conv_out(h, k, s), wo = conv_out(w, k, s);
    int64_t ovol = int64_t(to) * ho * wo;
    int64_t idx = 0;
    for (int c = 0; c < cin; ++c)
        for (int dt = 0; dt < k; ++dt)
            for (int dy = 0; dy < k; ++dy)
                for (int dx = 0; dx < k; ++dx) {
                    double* row = col + idx * ovol;
                    ++idx;
                    int64_t o = 0;
                    for (int ot = 0; ot < to; ++ot) {
                        int st = ot * s + dt - pad;
                        for (int oy = 0; oy < ho; ++oy) {
                            int sy = oy * s + dy - pad;
                            for (int ox = 0; ox < wo; ++ox, ++o) {
                                int sx = ox * s + dx - pad;
                                row[o] = (st < 0 || st >= t || sy < 0 || sy >= h || sx < 0 ||
                                          sx >= w)
                                             ? 0.0
                                             : x[((int64_t(c) * t + st) * h + sy) * w + sx];
                            }
                        }
                    }
                }
}

void col2im3_add(const double* col, int cin, int t, int h, int w, int k, int s, double* gx) {
    int pad = k / 2;
    int to = conv_out(t, k, s), ho = conv_out(h, k, s), wo = conv_out(w, k, s);
    int64_t ovol = int64_t(to) * ho * wo;
    int64_t idx = 0;
    for (int c = 0; c < cin; ++c)
        for (int dt = 0; dt < k; ++dt)
            for (int dy = 0; dy < k; ++dy)
                for (int dx = 0; dx < k; ++dx) {
                    const double* row = col + idx * ovol;
                    ++idx;
                    int64_t o = 0;
                    for (int ot = 0; ot < to; ++ot) {
                        int st = ot * s + dt - pad;
                        for (int oy = 0; oy < ho; ++oy) {
                            int sy = oy * s + dy - pad;
                            for (int ox = 0; ox < wo; ++ox, ++o) {
                                int sx = ox * s + dx - pad;
                                if (st < 0 || st >= t || sy < 0 || sy >= h || sx < 0 || sx >= w)
                                    continue;
                                gx[((int64_t(c) * t + st) * h + sy) * w + sx] += row[o];
                            }
                        }
                    }
                }
}

}  // namespace

Tensor Conv3d::forward(const Params& p, const Tensor& x, Tape* tape) const {
    if (x.ndim() != 4 || x.dim(0) != cin) throw std::invalid_argument("Conv3d: bad input shape");
    int t = x.dim(1), h = x.dim(2), wdt = x.dim(3);
    int to = conv_out(t, k, stride), ho = conv_out(h, k, stride), wo = conv_out(wdt, k, stride);
    int64_t ovol = int64_t(to) * ho * wo;
    int kk = cin * k * k * k;
    Tensor col({kk, int(ovol)});
    im2col3(x.data(), cin, t, h, wdt, k, stride, col.data());
    Tensor y({cout, to, ho, wo});
    as_mat(y, cout, ovol).noalias() = as_mat(p.value(w), cout, kk) * as_mat(col, kk, ovol);
    const Tensor& bias = p.value(b);
    for (int c = 0; c < cout; ++c) {
        double* yc = y.data() + int64_t(c) * ovol;
        for (int64_t i = 0; i < ovol; ++i) yc[i] += bias[c];
    }
    if (tape) tape->push(x);
    return y;
}

Tensor Conv3d::backward(const Params& p, const Tensor& gy, Tape& tape, Grads* g) const {
    Tensor x = tape.pop();
    int t = x.dim(1), h = x.dim(2), wdt = x.dim(3);
    int to = gy.dim(1), ho = gy.dim(2), wo = gy.dim(3);
    int64_t ovol = int64_t(to) * ho * wo;
    int kk = cin * k * k * k;
    Tensor gcol({kk, int(ovol)});
    as_mat(gcol, kk, ovol).noalias() =
        as_mat(p.value(w), cout, kk).transpose() * as_mat(gy, cout, ovol);
    Tensor gx(x.shape());
    col2im3_add(gcol.data(), cin, t, h, wdt, k, stride, gx.data());
    if (g) {
        Tensor col({kk, int(ovol)});
        im2col3(x.data(), cin, t, h, wdt, k, stride, col.data());
        as_mat(g->at(w), cout, kk).noalias() +=
            as_mat(gy, cout, ovol) * as_mat(col, kk, ovol).transpose();
        Tensor& gb = g->at(b);
        for (int c = 0; c < cout; ++c) {
            const double* gyc = gy.data() + int64_t(c) * ovol;
            double s = 0;
            for (int64_t i = 0; i < ovol; ++i) s += gyc[i];
            gb[c] += s;
        }
    }
    return gx;
}

// ---- misc ----

Tensor fourier_embed(double v, int dim) {
    if (dim % 2 != 0) throw std::invalid_argument("fourier_embed: dim must be even");
    int half = dim / 2;
    Tensor out({dim});
    for (int j = 0; j < half; ++j) {
        double f = 0.5 * std::pow(200.0, half > 1 ? double(j) / double(half - 1) : 0.0);
        out[j] = std::sin(f * v);
        out[half + j] = std::cos(f * v);
    }
    return out;
}

Tensor softmax(const Tensor& logits) {
    Tensor out(logits.shape());
    double mx = logits.max();
    double s = 0;
    for (int64_t i = 0; i < logits.numel(); ++i) {
        out[i] = std::exp(logits[i] - mx);
        s += out[i];
    }
    out *= 1.0 / s;
    return out;
}

double log_softmax_at(const Tensor& logits, int index) {
    double mx = logits.max();
    double s = 0;
    for (int64_t i = 0; i < logits.numel(); ++i) s += std::exp(logits[i] - mx);
    return logits[index] - mx - std::log(s);
}

// ---- AdamW ----

AdamW::AdamW(const Params& p, AdamWConfig cfg) : cfg_(cfg) {
    m_.reserve(size_t(p.count()));
    v_.reserve(size_t(p.count()));
    for (int i = 0; i < p.count(); ++i) {
        m_.emplace_back(p.value(i).shape());
        v_.emplace_back(p.value(i).shape());
    }
}

void AdamW::step(Params& p, const Grads& g, double lr_scale, bool head_only) {
    ++t_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, double(t_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, double(t_));
    for (int i = 0; i < p.count(); ++i) {
        if (head_only && !p.info(i).head) continue;
        double lr = cfg_.lr * lr_scale * (p.info(i).head ? cfg_.head_lr_mult : 1.0);
        Tensor& pv = p.value(i);
        Tensor& m = m_[size_t(i)];
        Tensor& v = v_[size_t(i)];
        const Tensor& gr = g.at(i);
        for (int64_t j = 0; j < pv.numel(); ++j) {
            m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * gr[j];
            v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * gr[j] * gr[j];
            double mhat = m[j] / bc1;
            double vhat = v[j] / bc2;
            pv[j] -= lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * pv[j]);
        }
    }
}

void AdamW::restore(std::vector<Tensor> m, std::vector<Tensor> v, int64_t t) {
    if (m.size() != m_.size() || v.size() != v_.size())
        throw std::invalid_argument("AdamW::restore: state size mismatch");
    m_ = std::move(m);
    v_ = std::move(v);
    t_ = t;
}

}  // namespace uvd::nn
