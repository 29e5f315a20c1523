#include "uvd/objectives.hpp"

#include <cmath>
#include <stdexcept>

#include "uvd/nn.hpp"

namespace uvd {

double generative_loss(const Tensor& z0, const Tensor& denoised, double sigma,
                       const edm::Preconditioner& pre) {
    if (!z0.same_shape(denoised)) throw std::invalid_argument("generative_loss: shape mismatch");
    if (!(sigma > 0.0)) throw std::invalid_argument("generative_loss: sigma must be > 0");
    return pre.lambda(sigma) * denoised.mse(z0);
}

double classification_loss(const Tensor& one_hot, const Tensor& logits) {
    if (one_hot.ndim() != 2 || logits.ndim() != 2 || !one_hot.same_shape(logits))
        throw std::invalid_argument("classification_loss: expected matching [B,C] tensors");
    int b = logits.dim(0), c = logits.dim(1);
    double loss = 0.0;
    for (int i = 0; i < b; ++i) {
        Tensor row({c});
        for (int j = 0; j < c; ++j) row[j] = logits.at2(i, j);
        double m = row.max();
        double lse = 0.0;
        for (int j = 0; j < c; ++j) lse += std::exp(row[j] - m);
        lse = m + std::log(lse);
        for (int j = 0; j < c; ++j) loss -= one_hot.at2(i, j) * (row[j] - lse);
    }
    return loss / double(b);
}

double classification_loss(const std::vector<int>& labels, const Tensor& logits) {
    if (logits.ndim() != 2 || int(labels.size()) != logits.dim(0))
        throw std::invalid_argument("classification_loss: batch size mismatch");
    return classification_loss(one_hot(labels, logits.dim(1)), logits);
}

Tensor one_hot(const std::vector<int>& labels, int num_classes) {
    Tensor out({int(labels.size()), num_classes});
    for (size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= num_classes)
            throw std::invalid_argument("one_hot: label out of range");
        out.at2(int(i), labels[i]) = 1.0;
    }
    return out;
}

LossBreakdown total_loss(double gen, double cls, double gamma) {
    LossBreakdown lb;
    lb.gen_loss = gen;
    lb.cls_loss = cls;
    lb.gamma = gamma;
    lb.total = cls + gamma * gen;
    return lb;
}

Tensor condition_dropout(const Tensor& z_masked, Rng& rng, double p_drop) {
    if (!(p_drop >= 0.0) || p_drop > 1.0)
        throw std::invalid_argument("condition_dropout: p_drop must be in [0,1]");
    if (rng.uniform() < p_drop) return Tensor::zeros(z_masked.shape());
    return z_masked;
}

}  // namespace uvd
