#pragma once

// k-means with k-means++ seeding and restarts, plus elbow-based choice of k.
// Used on the one-dimensional distance lists of the clustering defense but
// works for any dimension.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include <fmt/format.h>

#include "betapoison/error.hpp"
#include "betapoison/seed.hpp"

namespace betapoison {

using Point = std::vector<double>;

struct Clustering {
    std::vector<std::size_t> assignments;  // cluster index per point
    std::vector<Point> centroids;
    double sse = 0.0;                      // sum of squared distances to assigned centroids
    std::vector<double> history;           // SSE after every Lloyd iteration of the winning restart
};

struct KMeansOptions {
    std::size_t restarts = 10;
    std::size_t max_iters = 100;
    double tol = 1e-9;  // stop once no centroid moves further than this
};

inline std::size_t count_distinct(std::span<const Point> points) {
    std::vector<Point> sorted(points.begin(), points.end());
    std::sort(sorted.begin(), sorted.end());
    return static_cast<std::size_t>(std::unique(sorted.begin(), sorted.end()) - sorted.begin());
}

namespace detail {

inline double sq_dist(const Point& a, const Point& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
}

inline std::vector<Point> kmeanspp_init(std::span<const Point> points, std::size_t k, Rng& rng) {
    std::vector<Point> centroids;
    centroids.reserve(k);
    std::uniform_int_distribution<std::size_t> first(0, points.size() - 1);
    centroids.push_back(points[first(rng)]);
    std::vector<double> d2(points.size());
    while (centroids.size() < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < points.size(); ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& c : centroids) best = std::min(best, sq_dist(points[i], c));
            d2[i] = best;
            total += best;
        }
        std::uniform_real_distribution<double> u(0.0, total);
        const double r = u(rng);
        double acc = 0.0;
        std::size_t chosen = points.size();
        for (std::size_t i = 0; i < points.size(); ++i) {
            if (d2[i] <= 0.0) continue;
            acc += d2[i];
            chosen = i;
            if (acc >= r) break;
        }
        centroids.push_back(points[chosen]);
    }
    return centroids;
}

// Assigns every point to its nearest centroid (lowest index on ties); returns the SSE.
inline double assign(std::span<const Point> points, const std::vector<Point>& centroids,
                     std::vector<std::size_t>& assignments) {
    double sse = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
        std::size_t best = 0;
        double best_d = sq_dist(points[i], centroids[0]);
        for (std::size_t c = 1; c < centroids.size(); ++c) {
            const double dc = sq_dist(points[i], centroids[c]);
            if (dc < best_d) {
                best_d = dc;
                best = c;
            }
        }
        assignments[i] = best;
        sse += best_d;
    }
    return sse;
}

// Moves, for each empty cluster, the point farthest from its centroid (taken
// from a cluster with at least two members) into it.
inline void repair_empty(std::span<const Point> points, std::vector<Point>& centroids,
                         std::vector<std::size_t>& assignments) {
    std::vector<std::size_t> sizes(centroids.size(), 0);
    for (auto a : assignments) ++sizes[a];
    for (std::size_t c = 0; c < centroids.size(); ++c) {
        if (sizes[c] != 0) continue;
        std::size_t far = points.size();
        double far_d = -1.0;
        for (std::size_t i = 0; i < points.size(); ++i) {
            if (sizes[assignments[i]] < 2) continue;
            const double di = sq_dist(points[i], centroids[assignments[i]]);
            if (di > far_d) {
                far_d = di;
                far = i;
            }
        }
        if (far == points.size()) break;
        --sizes[assignments[far]];
        assignments[far] = c;
        sizes[c] = 1;
        centroids[c] = points[far];
    }
}

inline Clustering lloyd(std::span<const Point> points, std::vector<Point> centroids, const KMeansOptions& opt) {
    const std::size_t dim = points.front().size();
    Clustering out;
    out.assignments.assign(points.size(), 0);
    out.sse = assign(points, centroids, out.assignments);
    for (std::size_t it = 0; it < opt.max_iters; ++it) {
        repair_empty(points, centroids, out.assignments);
        std::vector<Point> next(centroids.size(), Point(dim, 0.0));
        std::vector<std::size_t> sizes(centroids.size(), 0);
        for (std::size_t i = 0; i < points.size(); ++i) {
            auto& c = next[out.assignments[i]];
            for (std::size_t j = 0; j < dim; ++j) c[j] += points[i][j];
            ++sizes[out.assignments[i]];
        }
        double shift = 0.0;
        for (std::size_t c = 0; c < next.size(); ++c) {
            if (sizes[c] == 0) {
                next[c] = centroids[c];
            } else {
                for (double& v : next[c]) v /= static_cast<double>(sizes[c]);
            }
            shift = std::max(shift, std::sqrt(sq_dist(next[c], centroids[c])));
        }
        centroids = std::move(next);
        out.sse = assign(points, centroids, out.assignments);
        out.history.push_back(out.sse);
        if (shift < opt.tol) break;
    }
    out.centroids = std::move(centroids);
    return out;
}

// Globally optimal centroids for 1-D points: optimal clusters are contiguous
// runs of the sorted values, so a dynamic program over split points finds them
// in O(k n^2).
inline std::vector<Point> exact_1d_centroids(std::span<const Point> points, std::size_t k) {
    std::vector<double> x;
    x.reserve(points.size());
    for (const auto& p : points) x.push_back(p[0]);
    std::sort(x.begin(), x.end());
    const std::size_t n = x.size();
    std::vector<double> s(n + 1, 0.0), s2(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        s[i + 1] = s[i] + x[i];
        s2[i + 1] = s2[i] + x[i] * x[i];
    }
    // SSE of the run x[a..b).
    auto cost = [&](std::size_t a, std::size_t b) {
        const double m = static_cast<double>(b - a);
        const double sum = s[b] - s[a];
        return std::max(0.0, (s2[b] - s2[a]) - sum * sum / m);
    };
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<std::vector<double>> best(k + 1, std::vector<double>(n + 1, inf));
    std::vector<std::vector<std::size_t>> split(k + 1, std::vector<std::size_t>(n + 1, 0));
    best[0][0] = 0.0;
    for (std::size_t j = 1; j <= k; ++j) {
        for (std::size_t i = j; i <= n; ++i) {
            for (std::size_t a = j - 1; a < i; ++a) {
                if (best[j - 1][a] == inf) continue;
                const double v = best[j - 1][a] + cost(a, i);
                if (v < best[j][i]) {
                    best[j][i] = v;
                    split[j][i] = a;
                }
            }
        }
    }
    std::vector<Point> centroids(k);
    std::size_t end = n;
    for (std::size_t j = k; j >= 1; --j) {
        const std::size_t a = split[j][end];
        centroids[j - 1] = {(s[end] - s[a]) / static_cast<double>(end - a)};
        end = a;
    }
    return centroids;
}

} // namespace detail

/// Best of `opt.restarts` seeded k-means++ / Lloyd runs by SSE (earliest restart
/// wins ties). For 1-D points the exact optimum joins as a final candidate.
/// Requires 1 <= k <= number of distinct points.
inline Clustering kmeans(std::span<const Point> points, std::size_t k, std::uint64_t seed, const KMeansOptions& opt = {}) {
    if (points.empty()) throw ArgumentError("kmeans: no points");
    for (const auto& p : points) {
        if (p.size() != points.front().size()) throw ArgumentError("kmeans: points differ in dimension");
    }
    const std::size_t distinct = count_distinct(points);
    if (k < 1 || k > distinct) {
        throw ArgumentError(fmt::format("kmeans: k={} outside [1, {}] distinct points", k, distinct));
    }
    Clustering best;
    best.sse = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < std::max<std::size_t>(1, opt.restarts); ++r) {
        Rng rng(derive_seed(seed, {stream::clustering, r}));
        Clustering run = detail::lloyd(points, detail::kmeanspp_init(points, k, rng), opt);
        if (run.sse < best.sse) best = std::move(run);
    }
    // Restarts can all settle in the same local optimum even on tiny 1-D inputs
    // such as {0,2,4,4,6,6,10}; the exact solution joins as a final candidate.
    if (points.front().size() == 1) {
        Clustering run = detail::lloyd(points, detail::exact_1d_centroids(points, k), opt);
        if (run.sse < best.sse) best = std::move(run);
    }
    return best;
}

/// SSE of the best k-means solution for k = 1..k_max.
inline std::vector<double> sse_curve(std::span<const Point> points, std::size_t k_max, std::uint64_t seed,
                                     const KMeansOptions& opt = {}) {
    std::vector<double> curve;
    curve.reserve(k_max);
    for (std::size_t k = 1; k <= k_max; ++k) curve.push_back(kmeans(points, k, seed, opt).sse);
    return curve;
}

/// Knee of an SSE curve (curve[i] is SSE for k = i + 1): the k whose point lies
/// farthest below the chord from (1, SSE_1) to (k_max, SSE_kmax). Returns 1 when
/// the curve is flat or no point lies below the chord; ties go to the smaller k.
inline std::size_t elbow_from_curve(std::span<const double> curve) {
    if (curve.empty()) throw ArgumentError("elbow: empty SSE curve");
    const std::size_t k_max = curve.size();
    if (k_max == 1 || !(curve.front() > curve.back())) return 1;
    const double slope = (curve.back() - curve.front()) / static_cast<double>(k_max - 1);
    const double norm = std::sqrt(1.0 + slope * slope);
    std::size_t best_k = 1;
    double best = 0.0;
    for (std::size_t i = 0; i < k_max; ++i) {
        const double chord = curve.front() + slope * static_cast<double>(i);
        const double below = (chord - curve[i]) / norm;
        if (below > best) {
            best = below;
            best_k = i + 1;
        }
    }
    return best_k;
}

inline std::size_t elbow_select(std::span<const Point> points, std::size_t k_max, std::uint64_t seed,
                                const KMeansOptions& opt = {}) {
    if (k_max < 1) throw ArgumentError("elbow: k_max must be at least 1");
    return elbow_from_curve(sse_curve(points, k_max, seed, opt));
}

} // namespace betapoison
