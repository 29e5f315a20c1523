#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "uvd/common.hpp"

namespace uvd {

// Dense row-major double tensor. Videos use the layout [T, C, H, W].
class Tensor {
  public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
        data_.assign(size_t(numel_of(shape_)), 0.0);
    }

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<int> shape, double v) {
        Tensor t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), v);
        return t;
    }

    static Tensor randn(std::vector<int> shape, Rng& rng) {
        Tensor t(std::move(shape));
        for (double& x : t.data_) x = rng.normal();
        return t;
    }

    static Tensor from_values(std::vector<int> shape, std::vector<double> values) {
        if (numel_of(shape) != int64_t(values.size()))
            throw std::invalid_argument("Tensor::from_values: size mismatch");
        Tensor t;
        t.shape_ = std::move(shape);
        t.data_ = std::move(values);
        return t;
    }

    const std::vector<int>& shape() const { return shape_; }
    int ndim() const { return int(shape_.size()); }
    int dim(int i) const { return shape_.at(size_t(i)); }
    int64_t numel() const { return int64_t(data_.size()); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](int64_t i) { return data_[size_t(i)]; }
    double operator[](int64_t i) const { return data_[size_t(i)]; }

    double& at4(int a, int b, int c, int d) {
        return data_[size_t(((int64_t(a) * shape_[1] + b) * shape_[2] + c) * shape_[3] + d)];
    }
    double at4(int a, int b, int c, int d) const {
        return data_[size_t(((int64_t(a) * shape_[1] + b) * shape_[2] + c) * shape_[3] + d)];
    }
    double& at2(int a, int b) { return data_[size_t(int64_t(a) * shape_[1] + b)]; }
    double at2(int a, int b) const { return data_[size_t(int64_t(a) * shape_[1] + b)]; }

    Tensor reshaped(std::vector<int> shape) const {
        if (numel_of(shape) != numel()) throw std::invalid_argument("reshape: numel mismatch");
        Tensor t = *this;
        t.shape_ = std::move(shape);
        return t;
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }
    void zero() { fill(0.0); }

    Tensor& operator+=(const Tensor& o) {
        check_shape(o, "+=");
        for (size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }
    Tensor& operator-=(const Tensor& o) {
        check_shape(o, "-=");
        for (size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
        return *this;
    }
    Tensor& operator*=(double s) {
        for (double& x : data_) x *= s;
        return *this;
    }
    // this += s * o
    Tensor& add_scaled(const Tensor& o, double s) {
        check_shape(o, "add_scaled");
        for (size_t i = 0; i < data_.size(); ++i) data_[i] += s * o.data_[i];
        return *this;
    }

    friend Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
    friend Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
    friend Tensor operator*(double s, Tensor a) { return a *= s; }
    friend Tensor operator*(Tensor a, double s) { return a *= s; }

    double sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }
    double mean() const { return empty() ? 0.0 : sum() / double(numel()); }
    double min() const { return *std::min_element(data_.begin(), data_.end()); }
    double max() const { return *std::max_element(data_.begin(), data_.end()); }

    double dot(const Tensor& o) const {
        check_shape(o, "dot");
        double s = 0.0;
        for (size_t i = 0; i < data_.size(); ++i) s += data_[i] * o.data_[i];
        return s;
    }
    double norm() const { return std::sqrt(dot(*this)); }

    double mse(const Tensor& o) const {
        check_shape(o, "mse");
        double s = 0.0;
        for (size_t i = 0; i < data_.size(); ++i) {
            double d = data_[i] - o.data_[i];
            s += d * d;
        }
        return s / double(numel());
    }

    int64_t argmax() const {
        return int64_t(std::max_element(data_.begin(), data_.end()) - data_.begin());
    }

    bool all_finite() const {
        for (double x : data_)
            if (!std::isfinite(x)) return false;
        return true;
    }

    bool bit_equal(const Tensor& o) const {
        if (shape_ != o.shape_) return false;
        return std::memcmp(data_.data(), o.data_.data(), data_.size() * sizeof(double)) == 0;
    }

    static int64_t numel_of(const std::vector<int>& shape) {
        int64_t n = 1;
        for (int d : shape) {
            if (d < 0) throw std::invalid_argument("Tensor: negative dim");
            n *= d;
        }
        return n;
    }

  private:
    void check_shape(const Tensor& o, const char* op) const {
        if (shape_ != o.shape_)
            throw std::invalid_argument(std::string("Tensor ") + op + ": shape mismatch");
    }

    std::vector<int> shape_;
    std::vector<double> data_;
};

// Video latents are Tensors with shape [T, C, H, W].
using LatentVideo = Tensor;

inline int video_frames(const Tensor& z) { return z.dim(0); }
inline int video_channels(const Tensor& z) { return z.dim(1); }

}  // namespace uvd
