#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "betapoison/dataset.hpp"
#include "betapoison/error.hpp"

namespace betapoison {

/// Principal axes of a dataset.
///
/// `components` holds one unit-length axis per row, ordered by decreasing
/// explained variance. Each axis is oriented so that its largest-magnitude
/// entry is positive, which makes the fit independent of the eigensolver's
/// sign choices.
struct PcaModel {
    Eigen::VectorXd mean;
    Eigen::MatrixXd components;          // m x d
    Eigen::VectorXd explained_variance;  // m, non-increasing

    std::size_t dim() const { return static_cast<std::size_t>(mean.size()); }
    std::size_t rank() const { return static_cast<std::size_t>(components.rows()); }
};

enum class PcaMethod {
    automatic,   // covariance when d <= 1024, Gram matrix otherwise
    covariance,  // eigen-decomposition of the d x d covariance
    gram,        // eigen-decomposition of the n x n inner-product matrix
};

inline constexpr std::size_t kPcaCovarianceLimit = 1024;

inline Eigen::MatrixXd to_matrix(const Dataset& ds) {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(ds.size()), static_cast<Eigen::Index>(ds.dim()));
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto& f = ds[i].features;
        for (std::size_t j = 0; j < f.size(); ++j) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = f[j];
    }
    return x;
}

namespace detail {

inline void orient_axis(Eigen::MatrixXd& components, Eigen::Index row) {
    Eigen::Index arg = 0;
    components.row(row).cwiseAbs().maxCoeff(&arg);
    if (components(row, arg) < 0) components.row(row) *= -1.0;
}

} // namespace detail

inline PcaModel fit_pca(const Dataset& ds, std::size_t m, PcaMethod method = PcaMethod::automatic) {
    const std::size_t n = ds.size();
    const std::size_t d = ds.dim();
    if (m < 1 || m > std::min(d, n)) {
        throw ArgumentError(fmt::format("fit_pca: m={} outside [1, min(d={}, n={})]", m, d, n));
    }
    if (method == PcaMethod::automatic) method = d <= kPcaCovarianceLimit ? PcaMethod::covariance : PcaMethod::gram;

    const Eigen::MatrixXd x = to_matrix(ds);
    PcaModel model;
    model.mean = x.colwise().mean().transpose();
    const Eigen::MatrixXd centered = x.rowwise() - model.mean.transpose();
    const double denom = n > 1 ? static_cast<double>(n - 1) : 1.0;
    const auto mi = static_cast<Eigen::Index>(m);

    model.components.resize(mi, static_cast<Eigen::Index>(d));
    model.explained_variance.resize(mi);

    if (method == PcaMethod::covariance) {
        const Eigen::MatrixXd cov = (centered.transpose() * centered) / denom;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
        // Eigen returns ascending eigenvalues.
        const Eigen::Index top = cov.rows() - 1;
        for (Eigen::Index c = 0; c < mi; ++c) {
            model.explained_variance(c) = std::max(0.0, eig.eigenvalues()(top - c));
            model.components.row(c) = eig.eigenvectors().col(top - c).transpose();
        }
    } else {
        // Gram trick: if G u = lambda u with G = Xc Xc^T / (n-1), then
        // Xc^T u / sqrt(lambda (n-1)) is a unit eigenvector of the covariance.
        const Eigen::MatrixXd gram = (centered * centered.transpose()) / denom;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
        const Eigen::Index top = gram.rows() - 1;
        for (Eigen::Index c = 0; c < mi; ++c) {
            const double lambda = std::max(0.0, eig.eigenvalues()(top - c));
            Eigen::VectorXd axis = centered.transpose() * eig.eigenvectors().col(top - c);
            const double norm = axis.norm();
            if (norm > 0) axis /= norm;
            model.explained_variance(c) = lambda;
            model.components.row(c) = axis.transpose();
        }
    }
    for (Eigen::Index c = 0; c < mi; ++c) detail::orient_axis(model.components, c);
    return model;
}

inline Eigen::VectorXd project_point(const PcaModel& model, std::span<const double> x) {
    const Eigen::Map<const Eigen::VectorXd> v(x.data(), static_cast<Eigen::Index>(x.size()));
    return model.components * (v - model.mean);
}

inline FeatureVector reconstruct_point(const PcaModel& model, const Eigen::VectorXd& coords) {
    const Eigen::VectorXd back = model.components.transpose() * coords + model.mean;
    return FeatureVector(back.data(), back.data() + back.size());
}

/// Maps every sample to its principal coordinates; labels, flags and ids carry over.
inline Dataset project(const PcaModel& model, const Dataset& ds) {
    if (ds.dim() != model.dim()) {
        throw ArgumentError(fmt::format("project: dataset dim {} differs from model dim {}", ds.dim(), model.dim()));
    }
    std::vector<LabeledSample> out;
    out.reserve(ds.size());
    for (const auto& s : ds) {
        const Eigen::VectorXd p = project_point(model, s.features);
        out.push_back({FeatureVector(p.data(), p.data() + p.size()), s.label, s.is_poison, s.id});
    }
    return Dataset(model.rank(), std::move(out), ds.role());
}

} // namespace betapoison
