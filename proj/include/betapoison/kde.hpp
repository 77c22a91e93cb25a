#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "betapoison/dataset.hpp"
#include "betapoison/error.hpp"

namespace betapoison {

/// How the kernel bandwidth is chosen.
struct Bandwidth {
    enum class Rule { scott, fixed };

    Rule rule = Rule::scott;
    double value = 0.0;  // used when rule == fixed

    static Bandwidth scott() { return {Rule::scott, 0.0}; }
    static Bandwidth fixed(double h) {
        if (!(h > 0.0) || !std::isfinite(h)) throw ArgumentError("bandwidth must be positive and finite");
        return {Rule::fixed, h};
    }

    friend bool operator==(const Bandwidth&, const Bandwidth&) = default;
};

/// Scott's rule with an isotropic kernel: mean per-feature sample standard
/// deviation times n^(-1/(d+4)).
inline double scott_bandwidth(std::span<const FeatureVector> samples) {
    const std::size_t n = samples.size();
    if (n < 2) throw ArgumentError("Scott's rule needs at least two samples; use a fixed bandwidth");
    const std::size_t d = samples.front().size();
    double sigma_sum = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        double mean = 0.0;
        for (const auto& s : samples) mean += s[j];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (const auto& s : samples) var += (s[j] - mean) * (s[j] - mean);
        sigma_sum += std::sqrt(var / static_cast<double>(n - 1));
    }
    const double sigma = sigma_sum / static_cast<double>(d);
    if (!(sigma > 0.0)) throw ArgumentError("Scott's rule is degenerate: samples have zero spread; use a fixed bandwidth");
    return sigma * std::pow(static_cast<double>(n), -1.0 / (static_cast<double>(d) + 4.0));
}

inline double resolve_bandwidth(const Bandwidth& bw, std::span<const FeatureVector> samples) {
    return bw.rule == Bandwidth::Rule::fixed ? bw.value : scott_bandwidth(samples);
}

/// Gaussian kernel density estimator with an isotropic bandwidth.
///
/// Densities are evaluated in log space; in a few hundred dimensions the
/// normalised density routinely underflows a double even though its logarithm
/// and the gradient of the logarithm are perfectly well behaved.
///
/// Evaluation reuses internal scratch buffers: share copies across threads,
/// not one instance.
class GaussianKde {
public:
    using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

    GaussianKde(std::span<const FeatureVector> samples, double h) : h_(h) {
        if (samples.empty()) throw ArgumentError("KDE needs at least one sample");
        if (!(h > 0.0) || !std::isfinite(h)) throw ArgumentError("KDE bandwidth must be positive and finite");
        const auto n = static_cast<Eigen::Index>(samples.size());
        const auto d = static_cast<Eigen::Index>(samples.front().size());
        support_.resize(n, d);
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto& s = samples[static_cast<std::size_t>(i)];
            if (static_cast<Eigen::Index>(s.size()) != d) throw ArgumentError("KDE samples differ in dimension");
            support_.row(i) = Eigen::Map<const Eigen::RowVectorXd>(s.data(), d);
        }
        log_norm_ = -std::log(static_cast<double>(n)) - 0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi) -
                    static_cast<double>(d) * std::log(h);
        exponents_.resize(n);
    }

    std::size_t dim() const { return static_cast<std::size_t>(support_.cols()); }
    std::size_t size() const { return static_cast<std::size_t>(support_.rows()); }
    double bandwidth() const { return h_; }

    double log_density(std::span<const double> x) const {
        check_dim(x);
        const Eigen::Map<const Eigen::RowVectorXd> xv(x.data(), support_.cols());
        fill_exponents(xv);
        const double top = exponents_.maxCoeff();
        return log_norm_ + top + std::log((exponents_.array() - top).exp().sum());
    }

    double density(std::span<const double> x) const { return std::exp(log_density(x)); }

    /// Returns log p(x) and writes d log p / dx into `grad`:
    /// sum_i w_i (x_i - x) / h^2 with softmax weights w_i.
    double log_density_gradient(std::span<const double> x, Eigen::VectorXd& grad) const {
        check_dim(x);
        const Eigen::Map<const Eigen::RowVectorXd> xv(x.data(), support_.cols());
        fill_exponents(xv);
        const double top = exponents_.maxCoeff();
        weights_ = (exponents_.array() - top).exp();
        const double total = weights_.sum();
        weights_ /= total;
        grad = (support_.transpose() * weights_ - xv.transpose()) / (h_ * h_);
        return log_norm_ + top + std::log(total);
    }

private:
    void check_dim(std::span<const double> x) const {
        if (x.size() != dim()) throw ArgumentError(fmt::format("KDE query has dim {}, expected {}", x.size(), dim()));
    }

    void fill_exponents(const Eigen::Map<const Eigen::RowVectorXd>& x) const {
        const double scale = -0.5 / (h_ * h_);
        for (Eigen::Index i = 0; i < support_.rows(); ++i) {
            exponents_(i) = scale * (support_.row(i) - x).squaredNorm();
        }
    }

    Matrix support_;
    double h_;
    double log_norm_ = 0.0;
    mutable Eigen::VectorXd exponents_;
    mutable Eigen::VectorXd weights_;
};

/// (1 / (n (2 pi)^(d/2) h^d)) * sum_i exp(-|x - x_i|^2 / (2 h^2))
inline double kde_likelihood(std::span<const double> x, std::span<const FeatureVector> class_samples, double h) {
    return GaussianKde(class_samples, h).density(x);
}

inline double kde_log_likelihood(std::span<const double> x, std::span<const FeatureVector> class_samples, double h) {
    return GaussianKde(class_samples, h).log_density(x);
}

} // namespace betapoison
