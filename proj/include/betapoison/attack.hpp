#pragma once

// Beta Poisoning: a poison sample is a clipped linear combination of k
// target-class prototypes whose coefficients are tuned by gradient ascent on a
// Gaussian KDE of the target class. The crafted point looks like a typical
// target-class sample but is injected with the opposite label.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <limits>
#include <mutex>
#include <ostream>
#include <random>
#include <span>
#include <thread>
#include <vector>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "betapoison/dataset.hpp"
#include "betapoison/error.hpp"
#include "betapoison/kde.hpp"
#include "betapoison/seed.hpp"

namespace betapoison {

/// Per-feature clip bounds for crafted samples.
struct Box {
    double lower = kFeatureLower;
    double upper = kFeatureUpper;

    friend bool operator==(const Box&, const Box&) = default;
};

struct AttackConfig {
    std::size_t k = 15;            // prototypes per poison sample
    double alpha = 0.01;           // learning rate
    double stop_tol = 1e-5;        // on the change of log P(x_p | y_t) between steps
    std::size_t max_iters = 1000;
    Bandwidth bandwidth = Bandwidth::scott();
    std::uint64_t seed = 0;
    Label target_class = 0;        // y_t: the class the poison imitates
    Label poison_label = 1;        // y_nt: the label it is injected with
    Box bounds{};
    std::size_t threads = 0;       // 0: hardware concurrency

    void validate() const {
        if (k < 1) throw ArgumentError("attack: k must be at least 1");
        if (!(alpha > 0.0)) throw ArgumentError("attack: alpha must be positive");
        if (!(stop_tol >= 0.0)) throw ArgumentError("attack: stop_tol must be non-negative");
        if (max_iters < 1) throw ArgumentError("attack: max_iters must be at least 1");
        if (target_class == poison_label) throw ArgumentError("attack: target class and poison label must differ");
        if (!(bounds.lower < bounds.upper)) throw ArgumentError("attack: clip bounds are empty");
    }
};

/// Optimisation state and history of one crafted sample.
struct BetaState {
    std::vector<double> beta;
    std::vector<FeatureVector> prototypes;
    std::vector<SampleId> prototype_ids;
    double bandwidth = 0.0;
    // One entry for the initial point and one per accepted step.
    std::vector<double> likelihood_trace;      // P(x_p | y_t); may underflow to 0 in high dimension
    std::vector<double> log_likelihood_trace;  // log P(x_p | y_t)
    std::vector<std::vector<double>> beta_trace;
    std::size_t iterations = 0;
    bool converged = false;
};

struct CraftedPoison {
    LabeledSample sample;
    BetaState state;
};

struct PoisonedDataset {
    Dataset suspicious;
    std::vector<BetaState> states;  // in the order the poison samples were appended
};

/// Draws k distinct samples of class `target` uniformly without replacement.
/// Candidates are ordered by id before drawing so input order does not matter.
inline std::vector<LabeledSample> sample_prototypes(const Dataset& dval, Label target, std::size_t k,
                                                    std::uint64_t seed) {
    std::vector<const LabeledSample*> pool;
    for (const auto& s : dval) {
        if (s.label == target) pool.push_back(&s);
    }
    if (pool.size() < k) {
        throw CapacityError(fmt::format("need {} prototypes of class {}, validation set has {}", k, target, pool.size()));
    }
    std::sort(pool.begin(), pool.end(), [](auto* a, auto* b) { return a->id < b->id; });
    Rng rng(seed);
    for (std::size_t i = 0; i < k; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
        std::swap(pool[i], pool[pick(rng)]);
    }
    std::vector<LabeledSample> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) out.push_back(*pool[i]);
    return out;
}

/// psi(beta, S) = sum_j beta_j S_j, before clipping.
inline FeatureVector combine_prototypes(std::span<const double> beta, std::span<const FeatureVector> prototypes) {
    if (beta.size() != prototypes.size() || prototypes.empty()) {
        throw ArgumentError("beta and prototype counts differ");
    }
    FeatureVector out(prototypes.front().size(), 0.0);
    for (std::size_t j = 0; j < beta.size(); ++j) {
        for (std::size_t c = 0; c < out.size(); ++c) out[c] += beta[j] * prototypes[j][c];
    }
    return out;
}

inline FeatureVector clip(FeatureVector x, const Box& box = {}) {
    for (double& v : x) v = std::clamp(v, box.lower, box.upper);
    return x;
}

namespace detail {

// Zeroes the x-space gradient on coordinates that sit on a clip bound while the
// gradient points out of the box.
inline void project_gradient(Eigen::Ref<Eigen::VectorXd> grad_x, std::span<const double> raw, const Box& box) {
    for (Eigen::Index c = 0; c < grad_x.size(); ++c) {
        const double r = raw[static_cast<std::size_t>(c)];
        if ((r <= box.lower && grad_x(c) < 0.0) || (r >= box.upper && grad_x(c) > 0.0)) grad_x(c) = 0.0;
    }
}

} // namespace detail

/// d P(x_p | y_t) / d beta at x_p = clip(psi(beta, S)), with the projected
/// clipping rule above.
inline std::vector<double> kde_gradient_beta(std::span<const double> beta, std::span<const FeatureVector> prototypes,
                                             std::span<const FeatureVector> class_samples, double h,
                                             const Box& box = {}) {
    const FeatureVector raw = combine_prototypes(beta, prototypes);
    const FeatureVector x = clip(raw, box);
    const GaussianKde kde(class_samples, h);
    Eigen::VectorXd grad_x;
    const double log_p = kde.log_density_gradient(x, grad_x);
    detail::project_gradient(grad_x, raw, box);
    grad_x *= std::exp(log_p);
    std::vector<double> out(prototypes.size());
    for (std::size_t j = 0; j < prototypes.size(); ++j) {
        out[j] = Eigen::Map<const Eigen::VectorXd>(prototypes[j].data(), grad_x.size()).dot(grad_x);
    }
    return out;
}

inline std::vector<double> kde_gradient_beta(const BetaState& state, std::span<const FeatureVector> class_samples,
                                             double h, const Box& box = {}) {
    return kde_gradient_beta(state.beta, state.prototypes, class_samples, h, box);
}

namespace detail {

/// Gradient ascent on log P(x_p | y_t) over beta.
///
/// Each iteration tries step alpha, capped so psi moves by at most one
/// bandwidth, and halves it until the log-likelihood does not drop. A step
/// that leaves x_p unchanged (beta drifting inside the clipped region) is
/// accepted without counting towards the stop rule. A step whose gain is at
/// most stop_tol ends the search and is discarded.
inline CraftedPoison run_beta_ascent(const GaussianKde& kde, std::vector<LabeledSample> prototypes,
                                     const AttackConfig& cfg, Rng& rng, SampleId poison_id) {
    constexpr int kMaxHalvings = 60;
    const std::size_t k = prototypes.size();
    const auto d = static_cast<Eigen::Index>(kde.dim());
    const double h = kde.bandwidth();

    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> protos(static_cast<Eigen::Index>(k), d);
    for (std::size_t j = 0; j < k; ++j) {
        protos.row(static_cast<Eigen::Index>(j)) = Eigen::Map<const Eigen::RowVectorXd>(prototypes[j].features.data(), d);
    }

    BetaState state;
    state.bandwidth = h;
    state.beta.resize(k);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (double& b : state.beta) b = unit(rng);
    for (auto& p : prototypes) {
        state.prototype_ids.push_back(p.id);
        state.prototypes.push_back(std::move(p.features));
    }

    Eigen::VectorXd beta = Eigen::Map<const Eigen::VectorXd>(state.beta.data(), static_cast<Eigen::Index>(k));
    Eigen::VectorXd raw = protos.transpose() * beta;
    Eigen::VectorXd x = raw.cwiseMax(cfg.bounds.lower).cwiseMin(cfg.bounds.upper);
    Eigen::VectorXd grad_x;
    double log_p = kde.log_density_gradient({x.data(), static_cast<std::size_t>(d)}, grad_x);

    auto record = [&] {
        state.log_likelihood_trace.push_back(log_p);
        state.likelihood_trace.push_back(std::exp(log_p));
        state.beta_trace.emplace_back(beta.data(), beta.data() + beta.size());
    };
    record();

    Eigen::VectorXd cand_beta, cand_raw, cand_x, cand_grad;
    for (std::size_t it = 1; it <= cfg.max_iters; ++it) {
        state.iterations = it;
        detail::project_gradient(grad_x, {raw.data(), static_cast<std::size_t>(d)}, cfg.bounds);
        const Eigen::VectorXd grad_beta = protos * grad_x;
        const double move = (protos.transpose() * grad_beta).norm();
        if (!(move > 0.0)) {
            state.converged = true;
            break;
        }

        double step = std::min(cfg.alpha, h / move);
        bool accepted = false;
        double cand_log_p = 0.0;
        for (int halving = 0; halving < kMaxHalvings; ++halving, step *= 0.5) {
            cand_beta = beta + step * grad_beta;
            cand_raw = protos.transpose() * cand_beta;
            cand_x = cand_raw.cwiseMax(cfg.bounds.lower).cwiseMin(cfg.bounds.upper);
            cand_log_p = kde.log_density_gradient({cand_x.data(), static_cast<std::size_t>(d)}, cand_grad);
            if (cand_log_p > log_p || (cand_log_p == log_p && cand_x == x)) {
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            state.converged = true;
            break;
        }
        const bool moved = cand_x != x;
        if (moved && std::abs(cand_log_p - log_p) <= cfg.stop_tol) {
            state.converged = true;
            break;
        }
        beta.swap(cand_beta);
        raw.swap(cand_raw);
        x.swap(cand_x);
        grad_x.swap(cand_grad);
        log_p = cand_log_p;
        record();
    }

    state.beta.assign(beta.data(), beta.data() + beta.size());
    CraftedPoison out;
    out.sample.features.assign(x.data(), x.data() + x.size());
    out.sample.label = cfg.poison_label;
    out.sample.is_poison = true;
    out.sample.id = poison_id;
    out.state = std::move(state);
    return out;
}

inline std::vector<FeatureVector> kde_support(const Dataset& dval, const AttackConfig& cfg) {
    auto support = dval.class_features(cfg.target_class);
    if (support.empty()) {
        throw CapacityError(fmt::format("validation set has no samples of target class {}", cfg.target_class));
    }
    return support;
}

inline CraftedPoison craft_one(const Dataset& dval, const GaussianKde& kde, const AttackConfig& cfg, std::size_t index,
                               SampleId poison_id) {
    const std::uint64_t sample_seed = derive_seed(cfg.seed, {stream::poison_sample, index});
    auto prototypes = sample_prototypes(dval, cfg.target_class, cfg.k, sample_seed);
    Rng rng(derive_seed(sample_seed, {stream::attack}));
    return run_beta_ascent(kde, std::move(prototypes), cfg, rng, poison_id);
}

} // namespace detail

/// Crafts one poison sample from the target-class samples of `dval`.
///
/// The KDE support is every target-class sample in `dval`; the prototypes are
/// a random subset of it. The result is labelled `cfg.poison_label` and marked
/// as poison; its id is dval.next_id().
inline CraftedPoison craft_poison(const Dataset& dval, const AttackConfig& cfg) {
    cfg.validate();
    const auto support = detail::kde_support(dval, cfg);
    const GaussianKde kde(support, resolve_bandwidth(cfg.bandwidth, support));
    return detail::craft_one(dval, kde, cfg, 0, dval.next_id());
}

inline std::size_t poison_count(std::size_t train_size, double rate) {
    if (!(rate > 0.0 && rate < 1.0)) throw ArgumentError(fmt::format("poison rate {} is outside (0,1)", rate));
    const auto count = static_cast<std::size_t>(std::llround(rate * static_cast<double>(train_size)));
    if (count < 1) throw ArgumentError(fmt::format("poison rate {} yields no samples for |D_tr|={}", rate, train_size));
    return count;
}

/// Appends round(rate * |dtr|) independently crafted poison samples to `dtr`.
///
/// Sample i draws its prototypes and initial beta from a seed derived from
/// (cfg.seed, i), so the output does not depend on the number of worker
/// threads. Poison ids continue after the largest id of dtr and dval.
inline PoisonedDataset poison_dataset_traced(const Dataset& dtr, const Dataset& dval, const AttackConfig& cfg,
                                             double rate) {
    cfg.validate();
    const std::size_t count = poison_count(dtr.size(), rate);
    if (dtr.dim() != dval.dim()) throw ArgumentError("training and validation dimensions differ");
    const auto support = detail::kde_support(dval, cfg);
    const double h = resolve_bandwidth(cfg.bandwidth, support);
    const SampleId first_id = std::max(dtr.next_id(), dval.next_id());

    std::vector<CraftedPoison> crafted(count);
    std::size_t workers = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
    workers = std::min(workers, count);
    if (workers <= 1) {
        const GaussianKde kde(support, h);
        for (std::size_t i = 0; i < count; ++i) crafted[i] = detail::craft_one(dval, kde, cfg, i, first_id + i);
    } else {
        std::atomic<std::size_t> next{0};
        std::exception_ptr failure;
        std::mutex failure_mutex;
        {
            std::vector<std::jthread> pool;
            for (std::size_t w = 0; w < workers; ++w) {
                pool.emplace_back([&] {
                    try {
                        const GaussianKde kde(support, h);
                        for (std::size_t i = next++; i < count; i = next++) {
                            crafted[i] = detail::craft_one(dval, kde, cfg, i, first_id + i);
                        }
                    } catch (...) {
                        std::lock_guard lock(failure_mutex);
                        if (!failure) failure = std::current_exception();
                    }
                });
            }
        }
        if (failure) std::rethrow_exception(failure);
    }

    std::vector<LabeledSample> samples = dtr.samples();
    PoisonedDataset out;
    out.states.reserve(count);
    for (auto& c : crafted) {
        samples.push_back(std::move(c.sample));
        out.states.push_back(std::move(c.state));
    }
    out.suspicious = Dataset(dtr.dim(), std::move(samples), Role::suspicious);
    return out;
}

inline Dataset poison_dataset(const Dataset& dtr, const Dataset& dval, const AttackConfig& cfg, double rate) {
    return poison_dataset_traced(dtr, dval, cfg, rate).suspicious;
}

/// One JSON object per accepted step:
/// {"sample": id, "iteration": t, "likelihood": p, "log_likelihood": lp, "beta": [...]}
void write_trace_jsonl(std::ostream& os, std::span<const BetaState> states, std::span<const SampleId> ids);

} // namespace betapoison
