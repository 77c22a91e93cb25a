#pragma once

// Detectors for Beta Poisoning. Crafted samples sit in a tight group close to
// the mean of the class they imitate (y_t) while carrying the other label
// (y_nt). Each detector exploits one side of that:
//
//   KPB  short average distance to the nearest neighbours
//   NCC  the nearest neighbours vote for a different label than a twice as
//        large neighbourhood
//   CBD  the y_nt samples nearest to mean(y_t) form their own 1-D cluster
//   MDT  y_nt samples closer than tau to mean(y_t)

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>

#include "betapoison/clustering.hpp"
#include "betapoison/dataset.hpp"
#include "betapoison/error.hpp"
#include "betapoison/neighbors.hpp"

namespace betapoison {

enum class DefenseKind { kpb, ncc, cbd, mdt };

inline std::string_view to_string(DefenseKind kind) {
    switch (kind) {
    case DefenseKind::kpb: return "kpb";
    case DefenseKind::ncc: return "ncc";
    case DefenseKind::cbd: return "cbd";
    case DefenseKind::mdt: return "mdt";
    }
    return "unknown";
}

inline DefenseKind parse_defense(std::string_view name) {
    for (auto kind : {DefenseKind::kpb, DefenseKind::ncc, DefenseKind::cbd, DefenseKind::mdt}) {
        if (name == to_string(kind)) return kind;
    }
    throw ArgumentError(fmt::format("unknown defense '{}' (expected kpb, ncc, cbd or mdt)", name));
}

struct DefenseParams {
    double tau = 0.0;   // distance threshold (KPB, MDT)
    double eta = 0.1;   // neighbourhood fraction (KPB, NCC)
    Label y_t = 0;      // class the poison imitates
    Label y_nt = 1;     // label the poison carries

    friend bool operator==(const DefenseParams&, const DefenseParams&) = default;
};

struct SampleDiagnostics {
    SampleId id = 0;
    std::optional<double> avg_neighbor_distance;  // KPB
    std::optional<Label> vote_near;               // NCC, num neighbours
    std::optional<Label> vote_wide;               // NCC, 2*num neighbours
    std::optional<double> distance_to_mean;       // CBD, MDT (y_nt samples only)
    std::optional<std::size_t> cluster;           // CBD; 0 is the cluster nearest mean(y_t)

    friend bool operator==(const SampleDiagnostics&, const SampleDiagnostics&) = default;
};

struct DefenseReport {
    DefenseKind defense = DefenseKind::kpb;
    DefenseParams params;
    std::size_t neighbors = 0;      // num for KPB and NCC
    std::size_t clusters = 0;       // k chosen by the elbow method (CBD)
    std::vector<double> sse_curve;  // CBD: SSE for k = 1..k_max
    std::vector<SampleId> flagged_ids;            // ascending
    std::vector<SampleDiagnostics> diagnostics;   // in dataset order

    bool is_flagged(SampleId id) const { return std::binary_search(flagged_ids.begin(), flagged_ids.end(), id); }

    friend bool operator==(const DefenseReport&, const DefenseReport&) = default;
};

inline constexpr std::size_t kCbdMaxClusters = 10;
inline constexpr std::uint64_t kCbdSeed = 0x5eedcbd;

namespace detail {

inline void validate_tau(double tau) {
    if (!(tau >= 0.0)) throw ArgumentError(fmt::format("tau {} must be non-negative", tau));
}

inline void require_labels(const Dataset& dsp, const DefenseParams& p) {
    if (p.y_t == p.y_nt) throw ArgumentError("y_t and y_nt must differ");
    if (dsp.count(p.y_t) == 0) throw ArgumentError(fmt::format("label y_t={} does not occur in the dataset", p.y_t));
    if (dsp.count(p.y_nt) == 0) throw ArgumentError(fmt::format("label y_nt={} does not occur in the dataset", p.y_nt));
}

// Most frequent label; ties go to the smaller label.
inline Label majority_label(const Dataset& ds, std::span<const Neighbor> neighbors) {
    std::map<Label, std::size_t> votes;
    for (const auto& n : neighbors) ++votes[ds[n.index].label];
    Label best = votes.begin()->first;
    std::size_t best_count = 0;
    for (auto [label, count] : votes) {
        if (count > best_count) {
            best = label;
            best_count = count;
        }
    }
    return best;
}

inline void finish(DefenseReport& report) { std::sort(report.flagged_ids.begin(), report.flagged_ids.end()); }

} // namespace detail

/// KPB: flags samples whose mean distance to their num nearest neighbours
/// (self excluded) is strictly below tau, num = max(1, floor(|D_sp| * eta)).
inline DefenseReport knn_proximity_defense(const Dataset& dsp, double tau, double eta) {
    detail::validate_tau(tau);
    if (dsp.size() < 2) throw CapacityError("KPB needs at least two samples");
    const std::size_t num = neighbor_count(dsp.size(), eta);
    if (num > dsp.size() - 1) throw CapacityError(fmt::format("KPB: num={} exceeds |D_sp|-1={}", num, dsp.size() - 1));

    DefenseReport report;
    report.defense = DefenseKind::kpb;
    report.params.tau = tau;
    report.params.eta = eta;
    report.neighbors = num;
    report.diagnostics.reserve(dsp.size());
    for (std::size_t i = 0; i < dsp.size(); ++i) {
        const auto nbrs = nearest_neighbors(dsp, i, num);
        double total = 0.0;
        for (const auto& n : nbrs) total += n.distance;
        const double avg = total / static_cast<double>(num);
        SampleDiagnostics diag;
        diag.id = dsp[i].id;
        diag.avg_neighbor_distance = avg;
        report.diagnostics.push_back(diag);
        if (avg < tau) report.flagged_ids.push_back(dsp[i].id);
    }
    detail::finish(report);
    return report;
}

/// NCC: flags a sample when the majority label of its num nearest neighbours
/// differs from that of its 2*num nearest neighbours (self excluded).
inline DefenseReport ncc_defense(const Dataset& dsp, double eta) {
    if (dsp.size() < 3) throw CapacityError("NCC needs at least three samples");
    const std::size_t num = neighbor_count(dsp.size(), eta);
    if (2 * num > dsp.size() - 1) {
        throw CapacityError(fmt::format("NCC: 2*num={} exceeds |D_sp|-1={}", 2 * num, dsp.size() - 1));
    }

    DefenseReport report;
    report.defense = DefenseKind::ncc;
    report.params.eta = eta;
    report.neighbors = num;
    report.diagnostics.reserve(dsp.size());
    for (std::size_t i = 0; i < dsp.size(); ++i) {
        const auto wide = nearest_neighbors(dsp, i, 2 * num);
        const Label y1 = detail::majority_label(dsp, std::span(wide).first(num));
        const Label y2 = detail::majority_label(dsp, wide);
        SampleDiagnostics diag;
        diag.id = dsp[i].id;
        diag.vote_near = y1;
        diag.vote_wide = y2;
        report.diagnostics.push_back(diag);
        if (y1 != y2) report.flagged_ids.push_back(dsp[i].id);
    }
    detail::finish(report);
    return report;
}

/// CBD: clusters the distances of y_nt samples to mean(y_t) with k-means (k by
/// the elbow method over 1..min(10, distinct distances)) and flags the cluster
/// with the smallest centroid. An elbow at k = 1 flags nothing.
inline DefenseReport cbd_defense(const Dataset& dsp, Label y_t, Label y_nt) {
    DefenseParams params;
    params.y_t = y_t;
    params.y_nt = y_nt;
    detail::require_labels(dsp, params);
    if (dsp.count(y_nt) < 2) throw CapacityError("CBD needs at least two samples of y_nt");

    const FeatureVector mean = class_mean(dsp, y_t);
    struct Entry {
        std::size_t index;
        double distance;
    };
    std::vector<Entry> entries;
    for (std::size_t i = 0; i < dsp.size(); ++i) {
        if (dsp[i].label == y_nt) entries.push_back({i, distance(dsp[i].features, mean)});
    }
    std::sort(entries.begin(), entries.end(), [&](const Entry& a, const Entry& b) {
        if (a.distance != b.distance) return a.distance < b.distance;
        return dsp[a.index].id < dsp[b.index].id;
    });

    std::vector<Point> points;
    points.reserve(entries.size());
    for (const auto& e : entries) points.push_back({e.distance});

    DefenseReport report;
    report.defense = DefenseKind::cbd;
    report.params = params;
    const std::size_t k_max = std::min(kCbdMaxClusters, count_distinct(points));
    report.sse_curve = sse_curve(points, k_max, kCbdSeed);
    report.clusters = elbow_from_curve(report.sse_curve);

    std::vector<std::size_t> rank(entries.size(), 0);
    if (report.clusters > 1) {
        const Clustering fit = kmeans(points, report.clusters, kCbdSeed);
        // Renumber clusters by ascending centroid so 0 is the one nearest mean(y_t).
        std::vector<std::size_t> order(fit.centroids.size());
        for (std::size_t c = 0; c < order.size(); ++c) order[c] = c;
        std::sort(order.begin(), order.end(), [&](auto a, auto b) { return fit.centroids[a][0] < fit.centroids[b][0]; });
        std::vector<std::size_t> renumber(order.size());
        for (std::size_t r = 0; r < order.size(); ++r) renumber[order[r]] = r;
        for (std::size_t e = 0; e < entries.size(); ++e) rank[e] = renumber[fit.assignments[e]];
    }

    std::vector<std::optional<std::size_t>> entry_of(dsp.size());
    for (std::size_t e = 0; e < entries.size(); ++e) entry_of[entries[e].index] = e;
    report.diagnostics.reserve(dsp.size());
    for (std::size_t i = 0; i < dsp.size(); ++i) {
        SampleDiagnostics diag;
        diag.id = dsp[i].id;
        if (auto e = entry_of[i]) {
            diag.distance_to_mean = entries[*e].distance;
            diag.cluster = rank[*e];
            if (report.clusters > 1 && rank[*e] == 0) report.flagged_ids.push_back(dsp[i].id);
        }
        report.diagnostics.push_back(diag);
    }
    detail::finish(report);
    return report;
}

/// MDT: flags y_nt samples whose distance to mean(y_t) is strictly below tau.
inline DefenseReport mdt_defense(const Dataset& dsp, Label y_t, Label y_nt, double tau) {
    detail::validate_tau(tau);
    DefenseParams params;
    params.y_t = y_t;
    params.y_nt = y_nt;
    params.tau = tau;
    detail::require_labels(dsp, params);

    const FeatureVector mean = class_mean(dsp, y_t);
    DefenseReport report;
    report.defense = DefenseKind::mdt;
    report.params = params;
    report.diagnostics.reserve(dsp.size());
    for (const auto& s : dsp) {
        SampleDiagnostics diag;
        diag.id = s.id;
        if (s.label == y_nt) {
            const double dist = distance(s.features, mean);
            diag.distance_to_mean = dist;
            if (dist < tau) report.flagged_ids.push_back(s.id);
        }
        report.diagnostics.push_back(diag);
    }
    detail::finish(report);
    return report;
}

inline DefenseReport run_defense(DefenseKind kind, const Dataset& dsp, const DefenseParams& p) {
    switch (kind) {
    case DefenseKind::kpb: return knn_proximity_defense(dsp, p.tau, p.eta);
    case DefenseKind::ncc: return ncc_defense(dsp, p.eta);
    case DefenseKind::cbd: return cbd_defense(dsp, p.y_t, p.y_nt);
    case DefenseKind::mdt: return mdt_defense(dsp, p.y_t, p.y_nt, p.tau);
    }
    throw ArgumentError("unknown defense");
}

} // namespace betapoison
