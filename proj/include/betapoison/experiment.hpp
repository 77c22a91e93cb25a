#pragma once

// Repeated-trial experiments: split, poison, defend, score, average.
//
// Spec files are flat `key = value` lines; `#` starts a comment. Keys:
//   dataset          synthetic | mnist:<dir> | cifar10:<dir>
//   classes          a,b  (poisons imitate a and carry label b unless `target` says otherwise)
//   target           y_t, one of the two classes
//   rate             poison rate in (0,1)
//   defense          kpb | ncc | cbd | mdt
//   tau, eta         defense parameters
//   k, alpha         attack prototypes and learning rate
//   stop_tol, max_iters, bandwidth (scott or a positive number)
//   trials, seed
//   n_train, n_val   samples per class; n_train = 0 uses every remaining sample
//   space            raw | pca:<m>
//   synthetic_dim, synthetic_sigma
//   threads          attack worker threads, 0 for all cores

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <fmt/format.h>

#include "betapoison/attack.hpp"
#include "betapoison/dataset.hpp"
#include "betapoison/defenses.hpp"
#include "betapoison/error.hpp"
#include "betapoison/loaders.hpp"
#include "betapoison/metrics.hpp"
#include "betapoison/pca.hpp"
#include "betapoison/seed.hpp"

namespace betapoison {

enum class SourceKind { synthetic, mnist, cifar10 };

inline std::string_view to_string(SourceKind kind) {
    switch (kind) {
    case SourceKind::synthetic: return "synthetic";
    case SourceKind::mnist: return "mnist";
    case SourceKind::cifar10: return "cifar10";
    }
    return "unknown";
}

struct ExperimentSpec {
    SourceKind source = SourceKind::synthetic;
    std::string path;  // directory for mnist / cifar10
    std::optional<std::pair<Label, Label>> classes;
    std::optional<Label> target;
    double rate = 0.2;
    DefenseKind defense = DefenseKind::mdt;
    double tau = 0.0;
    double eta = 0.1;
    std::size_t k = 15;
    double alpha = 0.01;
    double stop_tol = 1e-5;
    std::size_t max_iters = 1000;
    Bandwidth bandwidth = Bandwidth::scott();
    std::size_t trials = 5;
    std::uint64_t seed = 0;
    std::size_t n_train = 200;
    std::size_t n_val = 200;
    std::size_t pca_components = 0;  // 0: raw feature space
    std::size_t synthetic_dim = 2;
    double synthetic_sigma = 0.05;
    std::size_t threads = 0;

    std::pair<Label, Label> class_pair() const {
        if (classes) return *classes;
        switch (source) {
        case SourceKind::mnist: return {4, 6};
        case SourceKind::cifar10: return {0, 8};
        case SourceKind::synthetic: break;
        }
        return {0, 1};
    }

    /// (y_t, y_nt)
    std::pair<Label, Label> orientation() const {
        const auto [a, b] = class_pair();
        if (!target || *target == a) return {a, b};
        if (*target == b) return {b, a};
        throw ArgumentError(fmt::format("target {} is not one of the classes {},{}", *target, a, b));
    }

    DefenseParams defense_params() const {
        const auto [y_t, y_nt] = orientation();
        return {tau, eta, y_t, y_nt};
    }

    void validate() const {
        const auto [a, b] = class_pair();
        if (a == b) throw ArgumentError("classes must differ");
        orientation();
        if (!(rate > 0.0 && rate < 1.0)) throw ArgumentError(fmt::format("rate {} is outside (0,1)", rate));
        if (trials < 1) throw ArgumentError("trials must be at least 1");
        if (n_val < 1) throw ArgumentError("n_val must be at least 1");
        if (source != SourceKind::synthetic && path.empty()) throw ArgumentError("dataset directory is missing");
        if (source == SourceKind::synthetic && synthetic_dim < 1) throw ArgumentError("synthetic_dim must be positive");
        if (!(synthetic_sigma > 0.0)) throw ArgumentError("synthetic_sigma must be positive");
        if (!(tau >= 0.0)) throw ArgumentError("tau must be non-negative");
        if (!(eta > 0.0 && eta <= 1.0)) throw ArgumentError("eta must be in (0,1]");
    }
};

// ---------------------------------------------------------------------------
// Parsing helpers shared with the CLI.

namespace detail {

inline std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

} // namespace detail

template <class T>
T parse_number(std::string_view text, std::string_view what) {
    text = detail::trim(text);
    T value{};
    const char* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc{} || ptr != end || text.empty()) {
        throw ArgumentError(fmt::format("{}: cannot parse '{}'", what, text));
    }
    return value;
}

inline std::pair<Label, Label> parse_class_pair(std::string_view text) {
    const auto comma = text.find(',');
    if (comma == std::string_view::npos) throw ArgumentError(fmt::format("classes: expected 'a,b', got '{}'", text));
    const auto a = parse_number<Label>(text.substr(0, comma), "classes");
    const auto b = parse_number<Label>(text.substr(comma + 1), "classes");
    if (a == b) throw ArgumentError("classes must differ");
    return {a, b};
}

inline Bandwidth parse_bandwidth(std::string_view text) {
    text = detail::trim(text);
    if (text == "scott") return Bandwidth::scott();
    return Bandwidth::fixed(parse_number<double>(text, "bandwidth"));
}

inline std::string format_bandwidth(const Bandwidth& bw) {
    return bw.rule == Bandwidth::Rule::scott ? std::string("scott") : fmt::format("{}", bw.value);
}

/// "raw" -> 0, "pca:m" -> m
inline std::size_t parse_space(std::string_view text) {
    text = detail::trim(text);
    if (text == "raw") return 0;
    if (text.starts_with("pca:")) {
        const auto m = parse_number<std::size_t>(text.substr(4), "space");
        if (m < 1) throw ArgumentError("space: pca needs at least one component");
        return m;
    }
    throw ArgumentError(fmt::format("space: expected raw or pca:<m>, got '{}'", text));
}

/// "synthetic", "mnist:<dir>", "cifar10:<dir>"; a bare "mnist"/"cifar10" leaves the path empty.
inline std::pair<SourceKind, std::string> parse_source(std::string_view text) {
    text = detail::trim(text);
    const auto colon = text.find(':');
    const auto name = text.substr(0, colon);
    const std::string path = colon == std::string_view::npos ? std::string{} : std::string(text.substr(colon + 1));
    if (name == "synthetic" && path.empty()) return {SourceKind::synthetic, {}};
    if (name == "mnist") return {SourceKind::mnist, path};
    if (name == "cifar10") return {SourceKind::cifar10, path};
    throw ArgumentError(fmt::format("dataset: expected synthetic, mnist:<dir> or cifar10:<dir>, got '{}'", text));
}

/// "start:stop:step" (inclusive, values start + i*step) or a comma-separated list.
inline std::vector<double> parse_grid(std::string_view text) {
    text = detail::trim(text);
    std::vector<double> values;
    if (text.find(':') != std::string_view::npos) {
        const auto c1 = text.find(':');
        const auto c2 = text.find(':', c1 + 1);
        if (c2 == std::string_view::npos) throw ArgumentError(fmt::format("grid: expected start:stop:step, got '{}'", text));
        const double start = parse_number<double>(text.substr(0, c1), "grid start");
        const double stop = parse_number<double>(text.substr(c1 + 1, c2 - c1 - 1), "grid stop");
        const double step = parse_number<double>(text.substr(c2 + 1), "grid step");
        if (!(step > 0.0) || !(stop >= start)) throw ArgumentError("grid: need step > 0 and stop >= start");
        const auto n = static_cast<std::size_t>(std::floor((stop - start) / step + 1e-9));
        for (std::size_t i = 0; i <= n; ++i) {
            // Round to 12 significant digits so 0.1 + 2 * 0.05 prints as 0.2.
            const double v = start + static_cast<double>(i) * step;
            values.push_back(std::stod(fmt::format("{:.12g}", v)));
        }
    } else {
        std::size_t pos = 0;
        while (pos <= text.size()) {
            const auto comma = std::min(text.find(',', pos), text.size());
            values.push_back(parse_number<double>(text.substr(pos, comma - pos), "grid value"));
            pos = comma + 1;
        }
    }
    if (values.empty()) throw ArgumentError("grid is empty");
    return values;
}

inline void apply_spec_key(ExperimentSpec& spec, std::string_view key, std::string_view value) {
    if (key == "dataset") std::tie(spec.source, spec.path) = parse_source(value);
    else if (key == "classes") spec.classes = parse_class_pair(value);
    else if (key == "target") spec.target = parse_number<Label>(value, key);
    else if (key == "rate") spec.rate = parse_number<double>(value, key);
    else if (key == "defense") spec.defense = parse_defense(detail::trim(value));
    else if (key == "tau") spec.tau = parse_number<double>(value, key);
    else if (key == "eta") spec.eta = parse_number<double>(value, key);
    else if (key == "k") spec.k = parse_number<std::size_t>(value, key);
    else if (key == "alpha") spec.alpha = parse_number<double>(value, key);
    else if (key == "stop_tol") spec.stop_tol = parse_number<double>(value, key);
    else if (key == "max_iters") spec.max_iters = parse_number<std::size_t>(value, key);
    else if (key == "bandwidth") spec.bandwidth = parse_bandwidth(value);
    else if (key == "trials") spec.trials = parse_number<std::size_t>(value, key);
    else if (key == "seed") spec.seed = parse_number<std::uint64_t>(value, key);
    else if (key == "n_train") spec.n_train = parse_number<std::size_t>(value, key);
    else if (key == "n_val") spec.n_val = parse_number<std::size_t>(value, key);
    else if (key == "space") spec.pca_components = parse_space(value);
    else if (key == "synthetic_dim") spec.synthetic_dim = parse_number<std::size_t>(value, key);
    else if (key == "synthetic_sigma") spec.synthetic_sigma = parse_number<double>(value, key);
    else if (key == "threads") spec.threads = parse_number<std::size_t>(value, key);
    else throw ArgumentError(fmt::format("unknown experiment key '{}'", key));
}

inline ExperimentSpec parse_spec(std::istream& is) {
    ExperimentSpec spec;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        std::string_view view = line;
        if (auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
        view = detail::trim(view);
        if (view.empty()) continue;
        const auto eq = view.find('=');
        if (eq == std::string_view::npos) throw ArgumentError(fmt::format("line {}: expected key = value", line_no));
        apply_spec_key(spec, detail::trim(view.substr(0, eq)), detail::trim(view.substr(eq + 1)));
    }
    return spec;
}

inline ExperimentSpec load_spec(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError(fmt::format("cannot open {}", path));
    return parse_spec(is);
}

// ---------------------------------------------------------------------------
// Trials

/// Loads the configured source and keeps only the two classes of interest.
inline Dataset load_source(const ExperimentSpec& spec) {
    const auto [a, b] = spec.class_pair();
    switch (spec.source) {
    case SourceKind::mnist: return filter_binary(load_idx_dir(spec.path), a, b);
    case SourceKind::cifar10: return filter_binary(load_cifar10_dir(spec.path), a, b);
    case SourceKind::synthetic: break;
    }
    // Two blobs on the diagonal of the unit cube, relabelled to the class pair.
    const std::size_t per_class = std::max<std::size_t>(spec.n_train, 1) + spec.n_val;
    FeatureVector lo(spec.synthetic_dim, 0.2);
    FeatureVector hi(spec.synthetic_dim, 0.8);
    const Dataset blobs = generate_blobs(spec.seed, per_class, spec.synthetic_dim, {lo, hi}, spec.synthetic_sigma);
    std::vector<LabeledSample> samples = blobs.samples();
    for (auto& s : samples) s.label = s.label == 0 ? a : b;
    return Dataset(blobs.dim(), std::move(samples));
}

struct PreparedTrial {
    std::size_t index = 0;
    std::uint64_t seed = 0;
    Dataset dtr;
    Dataset dval;
    Dataset dsp;
    std::vector<BetaState> states;
    Label y_t = 0;
    Label y_nt = 1;
    Box bounds{};
};

inline std::uint64_t trial_seed(std::uint64_t base, std::size_t t) { return derive_seed(base, {stream::trial, t}); }

inline AttackConfig attack_config(const ExperimentSpec& spec) {
    AttackConfig cfg;
    cfg.k = spec.k;
    cfg.alpha = spec.alpha;
    cfg.stop_tol = spec.stop_tol;
    cfg.max_iters = spec.max_iters;
    cfg.bandwidth = spec.bandwidth;
    std::tie(cfg.target_class, cfg.poison_label) = spec.orientation();
    cfg.threads = spec.threads;
    return cfg;
}

/// Splits `source` into D_tr/D_val for trial t, optionally projects both onto
/// principal axes fitted on their union, and injects the poison. In PCA space
/// the clip box is the per-coordinate range of the projected data.
inline PreparedTrial prepare_trial(const ExperimentSpec& spec, const Dataset& source, std::size_t t) {
    spec.validate();
    PreparedTrial trial;
    trial.index = t;
    trial.seed = trial_seed(spec.seed, t);
    std::tie(trial.y_t, trial.y_nt) = spec.orientation();

    std::size_t n_train = spec.n_train;
    if (n_train == 0) {
        std::size_t smallest = source.size();
        for (Label c : source.classes()) smallest = std::min(smallest, source.count(c));
        if (smallest <= spec.n_val) throw CapacityError("no samples left for training after the validation split");
        n_train = smallest - spec.n_val;
    }
    const std::size_t sizes[] = {n_train, spec.n_val};
    const Role roles[] = {Role::training, Role::validation};
    auto parts = stratified_split(source, sizes, roles, trial.seed);
    trial.dtr = std::move(parts[0]);
    trial.dval = std::move(parts[1]);

    if (spec.pca_components > 0) {
        std::vector<LabeledSample> both = trial.dtr.samples();
        both.insert(both.end(), trial.dval.begin(), trial.dval.end());
        const PcaModel model = fit_pca(Dataset(trial.dtr.dim(), std::move(both)), spec.pca_components);
        trial.dtr = project(model, trial.dtr);
        trial.dval = project(model, trial.dval);
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (const auto* ds : {&trial.dtr, &trial.dval}) {
            for (const auto& s : *ds) {
                for (double v : s.features) {
                    lo = std::min(lo, v);
                    hi = std::max(hi, v);
                }
            }
        }
        trial.bounds = {lo, hi};
    }

    AttackConfig cfg = attack_config(spec);
    cfg.seed = derive_seed(trial.seed, {stream::attack});
    cfg.bounds = trial.bounds;
    auto poisoned = poison_dataset_traced(trial.dtr, trial.dval, cfg, spec.rate);
    trial.dsp = std::move(poisoned.suspicious);
    trial.states = std::move(poisoned.states);
    return trial;
}

inline std::vector<PreparedTrial> prepare_trials(const ExperimentSpec& spec, const Dataset& source) {
    std::vector<PreparedTrial> out;
    out.reserve(spec.trials);
    for (std::size_t t = 0; t < spec.trials; ++t) out.push_back(prepare_trial(spec, source, t));
    return out;
}

struct Evaluation {
    DefenseParams params;
    MetricsRecord record;
    std::vector<DefenseReport> reports;  // one per trial
};

inline Evaluation evaluate_trials(std::span<const PreparedTrial> trials, DefenseKind kind, DefenseParams params) {
    if (trials.empty()) throw ArgumentError("no trials to evaluate");
    Evaluation out;
    std::vector<TrialMetrics> scores;
    for (const auto& trial : trials) {
        params.y_t = trial.y_t;
        params.y_nt = trial.y_nt;
        out.reports.push_back(run_defense(kind, trial.dsp, params));
        scores.push_back(score(trial.dsp, out.reports.back()));
    }
    out.params = params;
    out.record = average(std::move(scores));
    return out;
}

inline Evaluation run_experiment(const ExperimentSpec& spec) {
    spec.validate();
    const Dataset source = load_source(spec);
    const auto trials = prepare_trials(spec, source);
    return evaluate_trials(trials, spec.defense, spec.defense_params());
}

enum class SweepParam { tau, eta };

inline std::string_view to_string(SweepParam p) { return p == SweepParam::tau ? "tau" : "eta"; }

inline SweepParam parse_sweep_param(std::string_view name) {
    if (name == "tau") return SweepParam::tau;
    if (name == "eta") return SweepParam::eta;
    throw ArgumentError(fmt::format("unknown sweep parameter '{}' (expected tau or eta)", name));
}

/// Parameters a defense actually reads.
inline bool defense_uses(DefenseKind kind, SweepParam p) {
    switch (kind) {
    case DefenseKind::kpb: return true;
    case DefenseKind::ncc: return p == SweepParam::eta;
    case DefenseKind::mdt: return p == SweepParam::tau;
    case DefenseKind::cbd: return false;
    }
    return false;
}

struct SweepPoint {
    double value = 0.0;
    Evaluation evaluation;
};

/// Evaluates every value on the same prepared trials, so all points see
/// identical suspicious datasets. Output is ordered by value.
inline std::vector<SweepPoint> sweep(std::span<const PreparedTrial> trials, DefenseKind kind, DefenseParams base,
                                     SweepParam param, std::vector<double> values) {
    if (values.empty()) throw ArgumentError("sweep needs at least one value");
    if (!defense_uses(kind, param)) {
        throw ArgumentError(fmt::format("{} does not use parameter {}", to_string(kind), to_string(param)));
    }
    std::sort(values.begin(), values.end());
    std::vector<SweepPoint> out;
    out.reserve(values.size());
    for (double v : values) {
        DefenseParams p = base;
        (param == SweepParam::tau ? p.tau : p.eta) = v;
        out.push_back({v, evaluate_trials(trials, kind, p)});
    }
    return out;
}

inline std::vector<SweepPoint> sweep(const ExperimentSpec& spec, SweepParam param, std::vector<double> values) {
    spec.validate();
    if (!defense_uses(spec.defense, param)) {
        throw ArgumentError(fmt::format("{} does not use parameter {}", to_string(spec.defense), to_string(param)));
    }
    const Dataset source = load_source(spec);
    const auto trials = prepare_trials(spec, source);
    return sweep(trials, spec.defense, spec.defense_params(), param, std::move(values));
}

/// Highest mean F1; ties go to higher mean accuracy, then to the smaller value.
inline const SweepPoint& best_point(std::span<const SweepPoint> points) {
    if (points.empty()) throw ArgumentError("no sweep points");
    const SweepPoint* best = &points.front();
    for (const auto& p : points) {
        const auto& m = p.evaluation.record.mean;
        const auto& b = best->evaluation.record.mean;
        if (m.f1 > b.f1 || (m.f1 == b.f1 && m.accuracy > b.accuracy)) best = &p;
    }
    return *best;
}

// ---------------------------------------------------------------------------
// Metrics CSV:
// defense,dataset,param_name,param_value,trial,tp,fp,tn,fn,accuracy,precision,recall,f1

inline void write_metrics_header(std::ostream& os) {
    os << "defense,dataset,param_name,param_value,trial,tp,fp,tn,fn,accuracy,precision,recall,f1\n";
}

/// Per-trial rows followed by an AVG row. An empty param_name writes "none"
/// with an empty value.
inline void write_metrics_rows(std::ostream& os, DefenseKind kind, std::string_view dataset,
                               std::string_view param_name, double param_value, const MetricsRecord& rec) {
    const std::string name = param_name.empty() ? std::string("none") : std::string(param_name);
    const std::string value = param_name.empty() ? std::string() : fmt::format("{}", param_value);
    for (std::size_t t = 0; t < rec.trials.size(); ++t) {
        const auto& c = rec.trials[t].counts;
        const auto& m = rec.trials[t].metrics;
        os << fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{}\n", to_string(kind), dataset, name, value, t, c.tp,
                          c.fp, c.tn, c.fn, m.accuracy, m.precision, m.recall, m.f1);
    }
    const auto& m = rec.mean;
    os << fmt::format("{},{},{},{},AVG,{},{},{},{},{},{},{},{}\n", to_string(kind), dataset, name, value, rec.tp, rec.fp,
                      rec.tn, rec.fn, m.accuracy, m.precision, m.recall, m.f1);
}

inline void write_sweep_csv(std::ostream& os, DefenseKind kind, std::string_view dataset, SweepParam param,
                            std::span<const SweepPoint> points) {
    write_metrics_header(os);
    for (const auto& p : points) write_metrics_rows(os, kind, dataset, to_string(param), p.value, p.evaluation.record);
}

} // namespace betapoison
