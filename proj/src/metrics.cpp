#include "uvd/metrics.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

#include "uvd/common.hpp"

namespace uvd {

double top1_accuracy(const std::vector<int>& predictions, const std::vector<int>& labels) {
    if (predictions.size() != labels.size())
        throw std::invalid_argument("top1_accuracy: length mismatch");
    if (predictions.empty()) throw std::invalid_argument("top1_accuracy: empty input");
    int hits = 0;
    for (size_t i = 0; i < predictions.size(); ++i)
        if (predictions[i] == labels[i]) ++hits;
    return double(hits) / double(predictions.size());
}

double retention(double accuracy, double full_accuracy) {
    if (!(full_accuracy > 0.0)) throw std::domain_error("retention: full accuracy must be > 0");
    return accuracy / full_accuracy;
}

std::vector<std::pair<double, double>> retention_curve(
    const std::vector<std::pair<double, double>>& accuracy_by_value, double full_accuracy) {
    std::vector<std::pair<double, double>> out;
    out.reserve(accuracy_by_value.size());
    for (const auto& [value, acc] : accuracy_by_value)
        out.emplace_back(value, retention(acc, full_accuracy));
    return out;
}

FeatureStats fit_feature_stats(const std::vector<Tensor>& features) {
    if (features.size() < 2)
        throw std::invalid_argument("fit_feature_stats: need at least two samples");
    if (features[0].ndim() != 1)
        throw std::invalid_argument("fit_feature_stats: features must be vectors");
    int d = features[0].dim(0);
    for (const Tensor& f : features)
        if (f.ndim() != 1 || f.dim(0) != d)
            throw std::invalid_argument("fit_feature_stats: inconsistent feature dimension");

    int64_t n = int64_t(features.size());
    FeatureStats s;
    s.mean = Tensor::zeros({d});
    for (const Tensor& f : features) s.mean += f;
    s.mean *= 1.0 / double(n);

    s.cov = Tensor::zeros({d, d});
    Tensor centered({d});
    for (const Tensor& f : features) {
        for (int i = 0; i < d; ++i) centered[i] = f[i] - s.mean[i];
        for (int i = 0; i < d; ++i) {
            double ci = centered[i];
            if (ci == 0.0) continue;
            double* row = s.cov.data() + int64_t(i) * d;
            for (int j = 0; j < d; ++j) row[j] += ci * centered[j];
        }
    }
    s.cov *= 1.0 / double(n - 1);
    return s;
}

namespace {

using Mat = Eigen::MatrixXd;

Mat as_matrix(const Tensor& t) {
    int d = t.dim(0);
    Mat m(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) m(i, j) = t.data()[int64_t(i) * d + j];
    return m;
}

Mat psd_sqrt(const Mat& s) {
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (s + s.transpose()));
    if (es.info() != Eigen::Success)
        throw NumericalError(
            "frechet_distance: eigendecomposition failed; covariance square roots need "
            "eigenvalues clamped at 0");
    Eigen::VectorXd lam = es.eigenvalues().cwiseMax(0.0);
    return es.eigenvectors() * lam.cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double frechet_distance(const FeatureStats& a, const FeatureStats& b) {
    if (a.dim() == 0 || b.dim() == 0) throw std::invalid_argument("frechet_distance: empty stats");
    if (a.dim() != b.dim() || a.cov.dim(0) != a.dim() || b.cov.dim(0) != b.dim())
        throw std::invalid_argument("frechet_distance: dimension mismatch");

    int d = a.dim();
    double mean_term = 0.0;
    for (int i = 0; i < d; ++i) {
        double diff = a.mean[i] - b.mean[i];
        mean_term += diff * diff;
    }

    Mat sa = as_matrix(a.cov);
    Mat sb = as_matrix(b.cov);
    Mat root_a = psd_sqrt(sa);
    Mat inner = root_a * sb * root_a;
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (inner + inner.transpose()));
    if (es.info() != Eigen::Success)
        throw NumericalError(
            "frechet_distance: eigendecomposition failed; covariance square roots need "
            "eigenvalues clamped at 0");
    double trace_cross = 0.0;
    for (int i = 0; i < d; ++i) trace_cross += std::sqrt(std::max(es.eigenvalues()[i], 0.0));

    double value = mean_term + sa.trace() + sb.trace() - 2.0 * trace_cross;
    if (!std::isfinite(value)) throw NumericalError("frechet_distance: non-finite result");
    return std::max(value, 0.0);
}

}  // namespace uvd
