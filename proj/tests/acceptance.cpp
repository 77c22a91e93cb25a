// Acceptance run: one PASS/FAIL/SKIP line per criterion, exit status 1 on any FAIL.
//
// MNIST data comes from $BETAPOISON_MNIST_DIR or the bundled 4/6 subset; the
// CIFAR-10 variant runs only when $BETAPOISON_CIFAR10_DIR is set.

#include <chrono>
#include <cstdlib>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>

#include <fmt/format.h>

#include "betapoison/betapoison.hpp"
#include "oracles.hpp"

using namespace betapoison;

namespace {

int failures = 0;

struct Outcome {
    bool pass = false;
    std::string detail;
};

// `carried_s` charges work done earlier on this criterion's behalf, such as shared sweeps.
void report(const std::string& id, const std::string& name, double budget_s, const std::function<Outcome()>& body,
            double carried_s = 0.0) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
        out = body();
    } catch (const std::exception& e) {
        out = {false, fmt::format("exception: {}", e.what())};
    }
    const double secs = carried_s + std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs < budget_s;
    const bool pass = out.pass && in_time;
    if (!pass) ++failures;
    fmt::print("{} {:<3} {}: {} [{:.2f} s, budget {} s{}]\n", pass ? "PASS" : "FAIL", id, name, out.detail, secs,
               budget_s, in_time ? "" : ", over budget");
    std::fflush(stdout);
}

void skip(const std::string& id, const std::string& name, const std::string& why) {
    fmt::print("SKIP {:<3} {}: {}\n", id, name, why);
}

// Majority label with ties to the smaller label, over the first `count` rows.
Label oracle_vote(const std::vector<Label>& labels, const std::vector<oracle::NeighborRow>& rows, std::size_t count) {
    std::map<Label, std::size_t> votes;
    for (std::size_t j = 0; j < count; ++j) ++votes[labels[rows[j].index]];
    Label best = 0;
    std::size_t most = 0;
    for (auto [l, c] : votes) {
        if (c > most) most = c, best = l;
    }
    return best;
}

// ---------------------------------------------------------------------------

Outcome neighbor_oracle() {
    std::mt19937_64 rng(1001);
    std::uniform_int_distribution<std::size_t> n_dist(10, 200), d_dist(1, 10);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double etas[] = {0.05, 0.1, 0.2, 0.3};
    std::size_t mismatches = 0, checked = 0;
    for (int rep = 0; rep < 50; ++rep) {
        const std::size_t n = n_dist(rng), d = d_dist(rng);
        const bool coarse = rep % 4 == 0;  // grid-valued features produce distance ties
        std::vector<LabeledSample> samples;
        std::vector<oracle::Vec> pts;
        std::vector<std::size_t> ids;
        std::vector<Label> labels;
        for (std::size_t i = 0; i < n; ++i) {
            FeatureVector f(d);
            for (auto& c : f) c = coarse ? std::round(u(rng) * 3) / 3 : u(rng);
            const SampleId id = (i * 7919) % 100003;
            const Label l = u(rng) < 0.5 ? 0 : 1;
            samples.push_back({f, l, false, id});
            pts.push_back(f);
            ids.push_back(id);
            labels.push_back(l);
        }
        const Dataset ds(d, samples, Role::suspicious);
        const double eta = etas[rep % 4];
        const auto kpb = knn_proximity_defense(ds, 0.5, eta);
        const auto ncc = ncc_defense(ds, eta);
        const std::size_t num = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(n * eta + 1e-9)));
        if (kpb.neighbors != num || ncc.neighbors != num) ++mismatches;
        for (std::size_t q = 0; q < n; ++q) {
            const auto want = oracle::neighbors(pts, ids, q, 2 * num);
            const auto got = nearest_neighbors(ds, q, 2 * num);
            for (std::size_t j = 0; j < 2 * num; ++j) {
                if (got[j].index != want[j].index || got[j].distance != want[j].distance) ++mismatches;
            }
            double total = 0;
            for (std::size_t j = 0; j < num; ++j) total += want[j].distance;
            const double avg = total / static_cast<double>(num);
            if (*kpb.diagnostics[q].avg_neighbor_distance != avg) ++mismatches;
            if (kpb.is_flagged(ids[q]) != (avg < 0.5)) ++mismatches;
            const Label y1 = oracle_vote(labels, want, num), y2 = oracle_vote(labels, want, 2 * num);
            if (*ncc.diagnostics[q].vote_near != y1 || *ncc.diagnostics[q].vote_wide != y2) ++mismatches;
            if (ncc.is_flagged(ids[q]) != (y1 != y2)) ++mismatches;
            ++checked;
        }
    }
    return {mismatches == 0, fmt::format("50 datasets, {} queries, {} mismatches", checked, mismatches)};
}

Outcome gradient_check() {
    std::mt19937_64 rng(2002);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0;
    for (int inst = 0; inst < 20; ++inst) {
        const std::size_t d = 1 + inst % 5, k = 1 + inst % 4, n = 2 + inst % 6;
        std::vector<FeatureVector> protos(k, FeatureVector(d)), support(n, FeatureVector(d));
        for (auto& p : protos)
            for (auto& c : p) c = 0.1 + 0.8 * u(rng);
        for (auto& p : support)
            for (auto& c : p) c = 0.1 + 0.8 * u(rng);
        // Coefficients summing to at most 1 keep psi strictly inside the box.
        std::vector<double> beta(k);
        for (auto& b : beta) b = (0.2 + 0.7 * u(rng)) / static_cast<double>(k);
        const double h = 0.15 + 0.4 * u(rng);
        const auto g = kde_gradient_beta(beta, protos, support, h);
        const auto fd = oracle::fd_gradient_beta(beta, protos, support, h);
        double num = 0, den = 0;
        for (std::size_t i = 0; i < k; ++i) {
            num += (g[i] - fd[i]) * (g[i] - fd[i]);
            den += fd[i] * fd[i];
        }
        worst = std::max(worst, std::sqrt(num / den));
    }
    return {worst < 1e-5, fmt::format("20 instances, worst relative error {:.2e} (< 1e-5)", worst)};
}

double mean_pairwise(const std::vector<FeatureVector>& pts) {
    double total = 0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        for (std::size_t j = i + 1; j < pts.size(); ++j, ++pairs) total += distance(pts[i], pts[j]);
    }
    return total / static_cast<double>(pairs);
}

Outcome attack_properties() {
    const std::size_t dim = 5;
    const Dataset all = generate_blobs(3003, 200, dim, {FeatureVector(dim, 0.3), FeatureVector(dim, 0.7)}, 0.08);
    const std::size_t sizes[] = {100, 100};
    const Role roles[] = {Role::training, Role::validation};
    const auto parts = stratified_split(all, sizes, roles, 7);
    const Dataset& dtr = parts[0];
    const Dataset& dval = parts[1];

    std::size_t ascended = 0;
    std::vector<FeatureVector> poison;
    for (std::uint64_t run = 0; run < 20; ++run) {
        AttackConfig cfg;
        cfg.seed = derive_seed(3003, {stream::attack, run});
        const auto crafted = craft_poison(dval, cfg);
        const auto& tr = crafted.state.likelihood_trace;
        if (tr.back() >= tr.front()) ++ascended;
        poison.push_back(crafted.sample.features);
    }
    std::vector<FeatureVector> legit;
    for (const auto& s : dtr) {
        if (s.label == 1) legit.push_back(s.features);
    }
    const FeatureVector mean_t = class_mean(dtr, 0);
    auto mean_to = [&](const std::vector<FeatureVector>& pts) {
        double t = 0;
        for (const auto& p : pts) t += distance(p, mean_t);
        return t / static_cast<double>(pts.size());
    };
    const double pp = mean_pairwise(poison), ll = mean_pairwise(legit);
    const double pm = mean_to(poison), lm = mean_to(legit);
    const bool pass = ascended == 20 && pp < ll && pm < lm;
    return {pass, fmt::format("ascent in {}/20 runs; pairwise poison {:.4f} vs legit {:.4f}; "
                              "to mean(y_t) poison {:.4f} vs legit {:.4f}",
                              ascended, pp, ll, pm, lm)};
}

Outcome kmeans_optimality() {
    std::mt19937_64 rng(4004);
    std::uniform_real_distribution<double> u(0.0, 10.0);
    std::size_t fixtures = 0, worse = 0;
    double worst = 0;
    for (std::size_t n = 1; n <= 12; ++n) {
        for (int variant = 0; variant < 6; ++variant) {
            std::vector<double> xs(n);
            for (auto& x : xs) {
                x = u(rng);
                if (variant == 1) x = std::round(x);         // ties
                if (variant == 2) x = std::round(x / 3) * 3;  // heavy ties
                if (variant == 3) x = x < 5 ? x * 0.01 : 100 + x;  // two far groups
            }
            if (variant == 4) std::sort(xs.begin(), xs.end());
            if (variant == 5) std::sort(xs.rbegin(), xs.rend());
            std::vector<Point> pts;
            for (double x : xs) pts.push_back({x});
            for (std::size_t k = 1; k <= std::min<std::size_t>(3, count_distinct(pts)); ++k) {
                const double gap = kmeans(pts, k, 4004 + n).sse - oracle::exhaustive_kmeans_sse(xs, k);
                worst = std::max(worst, std::abs(gap));
                if (std::abs(gap) > 1e-9) ++worse;
                ++fixtures;
            }
        }
    }
    auto points = [](std::initializer_list<double> xs) {
        std::vector<Point> p;
        for (double x : xs) p.push_back({x});
        return p;
    };
    const auto two = points({0.10, 0.11, 0.09, 0.105, 5.0, 5.4, 4.6, 5.2, 4.8, 5.1});
    const auto three = points({0.0, 0.1, 0.2, 5.0, 5.1, 5.2, 10.0, 10.1, 10.2});
    const std::size_t e2 = elbow_select(two, 6, 1), e3 = elbow_select(three, 6, 1);
    return {worse == 0 && e2 == 2 && e3 == 3,
            fmt::format("{} (input, k) fixtures, max |SSE - optimum| {:.1e}; elbow {} and {} on the 2- and 3-group sets",
                        fixtures, worst, e2, e3)};
}

// ---------------------------------------------------------------------------
// Image pipeline

struct Sweeps {
    std::vector<SweepPoint> kpb, mdt, ncc;
    Evaluation cbd;
};

ExperimentSpec image_spec(SourceKind source, const std::string& path) {
    ExperimentSpec spec;
    spec.source = source;
    spec.path = path;
    spec.n_train = 200;
    spec.n_val = 200;
    spec.rate = 0.2;
    spec.trials = 5;
    spec.seed = 0;
    // A fixed bandwidth: Scott's rule on 784 raw pixels gives a kernel so wide
    // the ascent barely moves the poison off its initial combination.
    spec.bandwidth = Bandwidth::fixed(4.0);
    return spec;
}

Sweeps run_sweeps(const ExperimentSpec& spec) {
    const Dataset source = load_source(spec);
    const auto trials = prepare_trials(spec, source);
    const DefenseParams base = spec.defense_params();
    Sweeps s;
    s.kpb = sweep(trials, DefenseKind::kpb, base, SweepParam::tau, parse_grid("0:10:0.5"));
    s.mdt = sweep(trials, DefenseKind::mdt, base, SweepParam::tau, parse_grid("0:10:0.5"));
    s.ncc = sweep(trials, DefenseKind::ncc, base, SweepParam::eta, parse_grid("0.05:0.45:0.05"));
    s.cbd = evaluate_trials(trials, DefenseKind::cbd, base);
    return s;
}

std::string fmt_metrics(const Metrics& m) {
    return fmt::format("acc {:.3f} P {:.3f} R {:.3f} F1 {:.3f}", m.accuracy, m.precision, m.recall, m.f1);
}

Outcome table_scores(const Sweeps& s, bool cifar) {
    const auto& kpb = best_point(s.kpb);
    const auto& mdt = best_point(s.mdt);
    const auto& ncc = best_point(s.ncc);
    const Metrics& k = kpb.evaluation.record.mean;
    const Metrics& m = mdt.evaluation.record.mean;
    const Metrics& n = ncc.evaluation.record.mean;
    const Metrics& c = s.cbd.record.mean;
    bool pass = k.accuracy >= 0.98 && k.f1 >= 0.98;
    pass = pass && m.accuracy >= 0.98 && m.f1 >= 0.98;
    pass = pass && c.accuracy >= 0.99 && c.recall == 1.0;
    if (cifar) pass = pass && c.precision >= 0.90;
    pass = pass && n.recall >= 0.95 && n.precision <= n.recall - 0.15;
    return {pass, fmt::format("KPB tau={} {}; MDT tau={} {}; CBD {}; NCC eta={} {}", kpb.value, fmt_metrics(k),
                              mdt.value, fmt_metrics(m), fmt_metrics(c), ncc.value, fmt_metrics(n))};
}

bool sweep_shape(const std::vector<SweepPoint>& pts, std::string& detail) {
    bool nested = true, recall_up = true;
    for (std::size_t i = 1; i < pts.size(); ++i) {
        const auto& prev = pts[i - 1].evaluation;
        const auto& cur = pts[i].evaluation;
        for (std::size_t t = 0; t < cur.reports.size(); ++t) {
            const auto& a = prev.reports[t].flagged_ids;
            const auto& b = cur.reports[t].flagged_ids;
            nested = nested && std::includes(b.begin(), b.end(), a.begin(), a.end());
            recall_up = recall_up && cur.record.trials[t].metrics.recall >= prev.record.trials[t].metrics.recall;
        }
        recall_up = recall_up && cur.record.mean.recall >= prev.record.mean.recall;
    }
    double best_interior = -1;
    double best_tau = 0;
    std::size_t good = 0;
    for (std::size_t i = 1; i + 1 < pts.size(); ++i) {
        const auto& m = pts[i].evaluation.record.mean;
        if (m.accuracy >= 0.98 && m.f1 >= 0.98) {
            ++good;
            if (m.f1 > best_interior) best_interior = m.f1, best_tau = pts[i].value;
        }
    }
    const double f_lo = pts.front().evaluation.record.mean.f1, f_hi = pts.back().evaluation.record.mean.f1;
    const bool peak = good > 0 && f_lo < best_interior && f_hi < best_interior;
    detail += fmt::format("nested {}, recall monotone {}, {} interior tau meet the scores (best {} F1 {:.3f}), "
                          "F1 at tau={} {:.3f}, at tau={} {:.3f}",
                          nested ? "yes" : "no", recall_up ? "yes" : "no", good, best_tau, best_interior,
                          pts.front().value, f_lo, pts.back().value, f_hi);
    return nested && recall_up && peak;
}

Outcome sweep_shapes(const Sweeps& s) {
    std::string detail = "(time includes the shared criterion 5 sweeps) KPB: ";
    const bool kpb = sweep_shape(s.kpb, detail);
    detail += "; MDT: ";
    const bool mdt = sweep_shape(s.mdt, detail);
    return {kpb && mdt, detail};
}

Outcome metrics_identities() {
    std::mt19937_64 rng(7007);
    std::uniform_int_distribution<std::size_t> u(0, 50);
    std::size_t violations = 0;
    for (int rep = 0; rep < 2000; ++rep) {
        const std::size_t n = 1 + u(rng);
        std::vector<LabeledSample> samples;
        DefenseReport r;
        std::size_t poison = 0, flagged = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const bool p = u(rng) < 12, f = u(rng) < 20;
            samples.push_back({{0.0}, 1, p, i});
            poison += p;
            if (f) r.flagged_ids.push_back(i), ++flagged;
        }
        const Dataset ds(1, std::move(samples));
        const auto t = score(ds, r);
        const auto& c = t.counts;
        const auto& m = t.metrics;
        if (c.total() != n || c.tp + c.fp != flagged || c.tp + c.fn != poison) ++violations;
        const double tp = double(c.tp), fp = double(c.fp), tn = double(c.tn), fn = double(c.fn);
        auto near = [](double a, double b) { return std::abs(a - b) <= 1e-12; };
        if (!near(m.accuracy, (tp + tn) / (tp + fp + tn + fn))) ++violations;
        if (!near(m.precision, c.tp + c.fp ? tp / (tp + fp) : 0.0)) ++violations;
        if (!near(m.recall, c.tp + c.fn ? tp / (tp + fn) : 1.0)) ++violations;
        const double f1 = m.precision + m.recall > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
        if (!near(m.f1, f1)) ++violations;
    }
    // Degenerate conventions.
    if (derive_metrics({0, 0, 5, 0}).recall != 1.0 || derive_metrics({0, 0, 5, 0}).precision != 0.0) ++violations;
    if (derive_metrics({0, 0, 3, 2}).f1 != 0.0) ++violations;

    ExperimentSpec spec;
    spec.n_train = 40;
    spec.n_val = 40;
    spec.trials = 2;
    spec.seed = 77;
    spec.tau = 0.3;
    auto csv = [&] {
        const auto ev = run_experiment(spec);
        std::ostringstream os;
        write_metrics_header(os);
        write_metrics_rows(os, spec.defense, "synthetic", "tau", spec.tau, ev.record);
        return os.str();
    };
    const bool identical = csv() == csv();
    return {violations == 0 && identical, fmt::format("2000 random reports, {} violations; reruns byte-identical: {}",
                                                      violations, identical ? "yes" : "no")};
}

std::string env_or(const char* name, const std::string& fallback) {
    const char* v = std::getenv(name);
    return v && *v ? std::string(v) : fallback;
}

} // namespace

int main() {
    report("1", "neighbor oracle equivalence", 10, neighbor_oracle);
    report("2", "KDE gradient vs finite differences", 5, gradient_check);
    report("3", "attack ascent and poison geometry", 30, attack_properties);
    report("4", "k-means optimality and elbow", 10, kmeans_optimality);

    const std::string mnist_dir = env_or("BETAPOISON_MNIST_DIR", BETAPOISON_MNIST_DIR);
    Sweeps mnist;
    double sweep_s = 0;
    report("5", "MNIST 4/6 detection scores", 180, [&] {
        const auto t0 = std::chrono::steady_clock::now();
        mnist = run_sweeps(image_spec(SourceKind::mnist, mnist_dir));
        sweep_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        return table_scores(mnist, false);
    });
    report("6", "MNIST tau sweep shape", 300, [&] {
        if (mnist.kpb.empty()) return Outcome{false, "no MNIST sweep available"};
        return sweep_shapes(mnist);
    }, sweep_s);
    const std::string cifar_dir = env_or("BETAPOISON_CIFAR10_DIR", "");
    if (cifar_dir.empty()) {
        skip("5c", "CIFAR-10 0/8 detection scores", "set BETAPOISON_CIFAR10_DIR to run");
    } else {
        report("5c", "CIFAR-10 0/8 detection scores", 180, [&] {
            return table_scores(run_sweeps(image_spec(SourceKind::cifar10, cifar_dir)), true);
        });
    }
    report("7", "metrics identities and reproducibility", 5, metrics_identities);

    fmt::print("{}\n", failures ? fmt::format("{} criterion/criteria failed", failures) : "all criteria passed");
    return failures ? 1 : 0;
}
