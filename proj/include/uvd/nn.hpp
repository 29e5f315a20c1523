#pragma once

#include <string>
#include <vector>

#include "uvd/tensor.hpp"

namespace uvd::nn {

struct ParamInfo {
    std::string name;
    std::vector<int> shape;
    bool head = false;  // head params get the lr multiplier
};

// Named parameter slots. Layer structs hold slot ids into one shared registry
// so the optimizer and checkpointing can treat the model as a flat list.
class Params {
  public:
    int add(const std::string& name, std::vector<int> shape, bool head = false);
    int count() const { return int(values_.size()); }
    Tensor& value(int id) { return values_[size_t(id)]; }
    const Tensor& value(int id) const { return values_[size_t(id)]; }
    const ParamInfo& info(int id) const { return infos_[size_t(id)]; }
    int64_t total_size() const;
    int find(const std::string& name) const;  // -1 if absent

  private:
    std::vector<ParamInfo> infos_;
    std::vector<Tensor> values_;
};

class Grads {
  public:
    Grads() = default;
    explicit Grads(const Params& p);
    void zero();
    Tensor& at(int id) { return g_[size_t(id)]; }
    const Tensor& at(int id) const { return g_[size_t(id)]; }
    void add(const Grads& other);
    void scale(double s);
    int count() const { return int(g_.size()); }
    double norm() const;

  private:
    std::vector<Tensor> g_;
};

// LIFO activation store. Forward pushes what backward needs; backward pops in
// exact reverse order. A mismatch is a programming error and asserts.
class Tape {
  public:
    void push(Tensor t) { stack_.push_back(std::move(t)); }
    Tensor pop();
    bool empty() const { return stack_.empty(); }
    size_t size() const { return stack_.size(); }
    void clear() { stack_.clear(); }

  private:
    std::vector<Tensor> stack_;
};

// ---- layers ----
// forward(p, x, tape): tape == nullptr means inference only (no backward).
// backward returns the input gradient; grads == nullptr skips parameter
// gradients (used for input-gradient-only passes such as guidance).

struct Linear {
    int w = -1, b = -1;
    int in_f = 0, out_f = 0;

    void init(Params& p, const std::string& name, int in, int out, Rng& rng, bool head = false,
              bool zero = false);
    // x: [N, in] -> [N, out]
    Tensor forward(const Params& p, const Tensor& x, Tape* tape) const;
    Tensor backward(const Params& p, const Tensor& gy, Tape& tape, Grads* g) const;
};

struct Conv2d {
    int w = -1, b = -1;
    int cin = 0, cout = 0, k = 1;

    void init(Params& p, const std::string& name, int cin_, int cout_, int k_, Rng& rng,
              bool zero = false);
    // x: [T, cin, H, W] -> [T, cout, H, W], stride 1, same padding
    Tensor forward(const Params& p, const Tensor& x, Tape* tape) const;
    Tensor backward(const Params& p, const Tensor& gy, Tape& tape, Grads* g) const;
};

struct GroupNorm {
    int gamma = -1, beta = -1;
    int channels = 0, groups = 1;
    double eps = 1e-5;

    void init(Params& p, const std::string& name, int channels_, int groups_);
    // normalizes each (frame, group) slice of [T, C, H, W]
    Tensor forward(const Params& p, const Tensor& x, Tape* tape) const;
    Tensor backward(const Params& p, const Tensor& gy, Tape& tape, Grads* g) const;
};

struct SiLU {
    Tensor forward(const Tensor& x, Tape* tape) const;
    Tensor backward(const Tensor& gy, Tape& tape) const;
};

struct AvgPool2 {  // kernel 2, stride 2, ceil output, edge windows shrink
    Tensor forward(const Tensor& x, Tape* tape) const;
    Tensor backward(const Tensor& gy, Tape& tape) const;
};

struct UpsampleNearest {  // to explicit spatial size
    Tensor forward(const Tensor& x, int th, int tw, Tape* tape) const;
    Tensor backward(const Tensor& gy, Tape& tape) const;
};

// Single-head self-attention over the frame axis, applied independently at
// every spatial site, with residual connection. Output projection zero-init.
struct TemporalAttention {
    int wq = -1, wk = -1, wv = -1, wo = -1;
    int channels = 0;

    void init(Params& p, const std::string& name, int channels_, Rng& rng);
    Tensor forward(const Params& p, const Tensor& x, Tape* tape) const;
    Tensor backward(const Params& p, const Tensor& gy, Tape& tape, Grads* g) const;
};

// Residual per-channel-mixing conv over the frame axis (kernel 3, zero-init).
struct TemporalConv {
    int w = -1, b = -1;
    int channels = 0;

    void init(Params& p, const std::string& name, int channels_, Rng& rng);
    Tensor forward(const Params& p, const Tensor& x, Tape* tape) const;
    Tensor backward(const Params& p, const Tensor& gy, Tape& tape, Grads* g) const;
};

// Learned-query attention pooling of [N, D] tokens to a single [D] vector.
struct AttentivePool {
    int wk = -1, wv = -1, q = -1;
    int dim = 0;

    void init(Params& p, const std::string& name, int dim_, Rng& rng, bool head = true);
    Tensor forward(const Params& p, const Tensor& tokens, Tape* tape) const;
    Tensor backward(const Params& p, const Tensor& gy, Tape& tape, Grads* g) const;
};

// 3D convolution over [C, T, H, W] volumes (used by the eval feature
// extractor), arbitrary stride, same-style padding k/2.
struct Conv3d {
    int w = -1, b = -1;
    int cin = 0, cout = 0, k = 3, stride = 1;

    void init(Params& p, const std::string& name, int cin_, int cout_, int k_, int stride_,
              Rng& rng);
    Tensor forward(const Params& p, const Tensor& x, Tape* tape) const;
    Tensor backward(const Params& p, const Tensor& gy, Tape& tape, Grads* g) const;
};

// sin/cos features of a scalar at log-spaced frequencies, dim must be even
Tensor fourier_embed(double v, int dim);

Tensor softmax(const Tensor& logits);
double log_softmax_at(const Tensor& logits, int index);

// AdamW with decoupled weight decay; head params use lr * head_lr_mult.
struct AdamWConfig {
    double lr = 1.25e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
    double head_lr_mult = 10.0;
};

class AdamW {
  public:
    AdamW(const Params& p, AdamWConfig cfg);
    // head_only freezes everything but head-flagged params (probe training)
    void step(Params& p, const Grads& g, double lr_scale, bool head_only = false);
    int64_t t() const { return t_; }

    // serialization hooks for checkpointing
    const std::vector<Tensor>& m() const { return m_; }
    const std::vector<Tensor>& v() const { return v_; }
    void restore(std::vector<Tensor> m, std::vector<Tensor> v, int64_t t);
    const AdamWConfig& config() const { return cfg_; }

  private:
    AdamWConfig cfg_;
    std::vector<Tensor> m_, v_;
    int64_t t_ = 0;
};

}  // namespace uvd::nn
