#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "betapoison/dataset.hpp"
#include "betapoison/defenses.hpp"
#include "betapoison/error.hpp"

namespace betapoison {

struct Confusion {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t tn = 0;
    std::size_t fn = 0;

    std::size_t total() const { return tp + fp + tn + fn; }
    friend bool operator==(const Confusion&, const Confusion&) = default;
};

struct Metrics {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;

    friend bool operator==(const Metrics&, const Metrics&) = default;
};

/// Conventions for empty denominators: precision is 0 when nothing is flagged,
/// recall is 1 when there is no poison to find, F1 is 0 when P + R = 0.
inline Metrics derive_metrics(const Confusion& c) {
    Metrics m;
    const std::size_t n = c.total();
    m.accuracy = n ? static_cast<double>(c.tp + c.tn) / static_cast<double>(n) : 0.0;
    m.precision = (c.tp + c.fp) ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp) : 0.0;
    m.recall = (c.tp + c.fn) ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn) : 1.0;
    const double pr = m.precision + m.recall;
    m.f1 = pr > 0.0 ? 2.0 * m.precision * m.recall / pr : 0.0;
    return m;
}

struct TrialMetrics {
    Confusion counts;
    Metrics metrics;

    friend bool operator==(const TrialMetrics&, const TrialMetrics&) = default;
};

/// Per-trial scores and their arithmetic means. The averaged counts are means
/// too, so they are generally not integers.
struct MetricsRecord {
    std::vector<TrialMetrics> trials;
    double tp = 0.0;
    double fp = 0.0;
    double tn = 0.0;
    double fn = 0.0;
    Metrics mean;

    std::size_t n_trials() const { return trials.size(); }
    friend bool operator==(const MetricsRecord&, const MetricsRecord&) = default;
};

inline TrialMetrics score(const Dataset& dsp, const DefenseReport& report) {
    for (SampleId id : report.flagged_ids) {
        if (!dsp.contains_id(id)) throw ConsistencyError(fmt::format("report flags id {} which is not in the dataset", id));
    }
    TrialMetrics out;
    auto& c = out.counts;
    for (const auto& s : dsp) {
        const bool flagged = report.is_flagged(s.id);
        if (flagged && s.is_poison) ++c.tp;
        else if (flagged) ++c.fp;
        else if (s.is_poison) ++c.fn;
        else ++c.tn;
    }
    out.metrics = derive_metrics(c);
    return out;
}

inline MetricsRecord average(std::vector<TrialMetrics> trials) {
    if (trials.empty()) throw ArgumentError("cannot average zero trials");
    MetricsRecord rec;
    const double n = static_cast<double>(trials.size());
    for (const auto& t : trials) {
        rec.tp += static_cast<double>(t.counts.tp);
        rec.fp += static_cast<double>(t.counts.fp);
        rec.tn += static_cast<double>(t.counts.tn);
        rec.fn += static_cast<double>(t.counts.fn);
        rec.mean.accuracy += t.metrics.accuracy;
        rec.mean.precision += t.metrics.precision;
        rec.mean.recall += t.metrics.recall;
        rec.mean.f1 += t.metrics.f1;
    }
    rec.tp /= n;
    rec.fp /= n;
    rec.tn /= n;
    rec.fn /= n;
    rec.mean.accuracy /= n;
    rec.mean.precision /= n;
    rec.mean.recall /= n;
    rec.mean.f1 /= n;
    rec.trials = std::move(trials);
    return rec;
}

} // namespace betapoison
