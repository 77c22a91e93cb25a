// betapoison: craft poisoned datasets, run detectors, score and sweep them.
//
//   betapoison poison     --synthetic | --mnist DIR | --cifar10 DIR  [attack flags]
//   betapoison defend     --input dsp.csv --defense kpb|ncc|cbd|mdt [--tau T] [--eta E] [--y-t A --y-nt B | --auto]
//   betapoison evaluate   --report report.json --input dsp.csv | --spec experiment.txt
//   betapoison sweep      [--spec FILE] [pipeline flags] --defense D (--tau GRID | --eta GRID)
//   betapoison visualize  --input dsp.csv [--report report.json]
//
// Exit codes: 0 ok, 2 bad arguments, 3 inconsistent or malformed data, 4 I/O.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "betapoison/attack.hpp"
#include "betapoison/dataset.hpp"
#include "betapoison/defenses.hpp"
#include "betapoison/error.hpp"
#include "betapoison/experiment.hpp"
#include "betapoison/metrics.hpp"
#include "betapoison/report_io.hpp"
#include "betapoison/svg.hpp"

namespace fs = std::filesystem;
using namespace betapoison;

namespace {

constexpr int kExitArgument = 2;
constexpr int kExitData = 3;
constexpr int kExitIo = 4;

fs::path output_dir(const std::string& requested, std::string_view subcommand) {
    fs::path dir;
    if (!requested.empty()) {
        dir = requested;
    } else {
        const char* root = std::getenv("BETAPOISON_OUT");
        dir = fs::path(root && *root ? root : "out") / subcommand;
    }
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError(fmt::format("cannot create output directory {}: {}", dir.string(), ec.message()));
    return dir;
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError(fmt::format("cannot write {}", path.string()));
    return os;
}

void close_out(std::ofstream& os, const fs::path& path) {
    os.close();
    if (!os) throw IoError(fmt::format("failed writing {}", path.string()));
}

// Pipeline flags map one-to-one onto experiment spec keys, so the command line
// and spec files share a single parser.
struct PipelineFlags {
    std::map<std::string, std::string> values;
    std::vector<std::pair<CLI::Option*, std::string>> options;
    CLI::Option* synthetic = nullptr;
    CLI::Option* mnist = nullptr;
    CLI::Option* cifar10 = nullptr;
    std::string spec_file;

    void add(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
        options.emplace_back(app->add_option(flag, values[key], help), key);
    }

    void attach(CLI::App* app, bool with_defense) {
        synthetic = app->add_flag("--synthetic", "Two Gaussian blobs in the unit cube");
        mnist = app->add_option("--mnist", values["mnist"], "Directory with MNIST IDX files");
        cifar10 = app->add_option("--cifar10", values["cifar10"], "Directory with CIFAR-10 binary batches");
        synthetic->excludes(mnist)->excludes(cifar10);
        mnist->excludes(cifar10);
        add(app, "--classes", "classes", "Class pair a,b");
        add(app, "--target", "target", "Class the poison imitates (default: first of --classes)");
        add(app, "--rate", "rate", "Poison rate in (0,1)");
        add(app, "--k", "k", "Prototypes per poison sample");
        add(app, "--alpha", "alpha", "Learning rate");
        add(app, "--stop-tol", "stop_tol", "Stop when the log-likelihood gain is at most this");
        add(app, "--max-iters", "max_iters", "Iteration cap per poison sample");
        add(app, "--bandwidth", "bandwidth", "KDE bandwidth: scott or a positive number");
        add(app, "--seed", "seed", "Base seed");
        add(app, "--n-train", "n_train", "Training samples per class (0: all)");
        add(app, "--n-val", "n_val", "Validation samples per class");
        add(app, "--space", "space", "raw or pca:<m>");
        add(app, "--synthetic-dim", "synthetic_dim", "Feature count of the synthetic blobs");
        add(app, "--synthetic-sigma", "synthetic_sigma", "Standard deviation of the synthetic blobs");
        add(app, "--threads", "threads", "Attack worker threads (0: all cores)");
        add(app, "--trials", "trials", "Number of trials");
        if (with_defense) add(app, "--defense", "defense", "kpb, ncc, cbd or mdt");
        app->add_option("--spec", spec_file, "Experiment spec file; flags override its keys");
    }

    ExperimentSpec resolve() const {
        ExperimentSpec spec = spec_file.empty() ? ExperimentSpec{} : load_spec(spec_file);
        if (synthetic->count()) apply_spec_key(spec, "dataset", "synthetic");
        if (mnist->count()) apply_spec_key(spec, "dataset", "mnist:" + values.at("mnist"));
        if (cifar10->count()) apply_spec_key(spec, "dataset", "cifar10:" + values.at("cifar10"));
        for (const auto& [opt, key] : options) {
            if (opt->count()) apply_spec_key(spec, key, values.at(key));
        }
        if (spec.path.empty()) {
            const char* env = spec.source == SourceKind::mnist     ? "BETAPOISON_MNIST_DIR"
                              : spec.source == SourceKind::cifar10 ? "BETAPOISON_CIFAR10_DIR"
                                                                   : nullptr;
            if (env && std::getenv(env)) spec.path = std::getenv(env);
        }
        spec.validate();
        return spec;
    }
};

int cmd_poison(const PipelineFlags& flags, std::size_t trial_index, const std::string& out) {
    const ExperimentSpec spec = flags.resolve();
    const Dataset source = load_source(spec);
    const PreparedTrial trial = prepare_trial(spec, source, trial_index);
    const fs::path dir = output_dir(out, "poison");

    const fs::path dsp_path = dir / "dsp.csv";
    const fs::path dval_path = dir / "dval.csv";
    const fs::path trace_path = dir / "traces.jsonl";
    {
        auto os = open_out(dsp_path);
        write_csv(os, trial.dsp);
        close_out(os, dsp_path);
    }
    {
        auto os = open_out(dval_path);
        write_csv(os, trial.dval);
        close_out(os, dval_path);
    }
    {
        std::vector<SampleId> ids;
        for (const auto& s : trial.dsp) {
            if (s.is_poison) ids.push_back(s.id);
        }
        auto os = open_out(trace_path);
        write_trace_jsonl(os, trial.states, ids);
        close_out(os, trace_path);
    }
    fmt::print("{} poison samples (y_t={}, y_nt={}) added to {} training samples -> {}\n", trial.dsp.poison_count(),
               trial.y_t, trial.y_nt, trial.dtr.size(), dsp_path.string());
    return 0;
}

struct DefendFlags {
    std::string input;
    std::string defense;
    double tau = 0.0;
    double eta = 0.1;
    Label y_t = 0;
    Label y_nt = 1;
    CLI::Option* y_t_opt = nullptr;
    CLI::Option* y_nt_opt = nullptr;
    bool automatic = false;
    bool dump_sse = false;
    std::string out;
};

void write_defense_outputs(const fs::path& dir, const std::string& suffix, const Dataset& dsp,
                           const DefenseReport& report, bool dump_sse) {
    const fs::path json_path = dir / fmt::format("report{}.json", suffix);
    const fs::path csv_path = dir / fmt::format("report{}.csv", suffix);
    {
        auto os = open_out(json_path);
        write_report_json(os, report);
        close_out(os, json_path);
    }
    {
        auto os = open_out(csv_path);
        write_report_csv(os, dsp, report);
        close_out(os, csv_path);
    }
    if (dump_sse) {
        const fs::path sse_path = dir / fmt::format("sse{}.csv", suffix);
        auto os = open_out(sse_path);
        write_sse_curve_csv(os, report);
        close_out(os, sse_path);
    }
    fmt::print("{} (y_t={}, y_nt={}) flagged {} of {} samples -> {}\n", to_string(report.defense), report.params.y_t,
               report.params.y_nt, report.flagged_ids.size(), dsp.size(), json_path.string());
}

int cmd_defend(const DefendFlags& f) {
    const Dataset dsp = load_csv(f.input, Role::suspicious);
    const DefenseKind kind = parse_defense(f.defense);
    const bool label_aware = kind == DefenseKind::cbd || kind == DefenseKind::mdt;
    if (f.dump_sse && kind != DefenseKind::cbd) throw ArgumentError("--dump-sse applies to cbd only");
    DefenseParams params{f.tau, f.eta, f.y_t, f.y_nt};
    const fs::path dir = output_dir(f.out, "defend");

    if (f.automatic && label_aware) {
        // The attacked class is unknown: run both orientations, one report each.
        const auto classes = dsp.classes();
        if (classes.size() != 2) throw ArgumentError("--auto needs a dataset with exactly two classes");
        for (Label y_t : classes) {
            params.y_t = y_t;
            params.y_nt = y_t == *classes.begin() ? *classes.rbegin() : *classes.begin();
            write_defense_outputs(dir, fmt::format("_yt{}", y_t), dsp, run_defense(kind, dsp, params), f.dump_sse);
        }
        return 0;
    }
    if (label_aware && !(f.y_t_opt->count() && f.y_nt_opt->count())) {
        throw ArgumentError(fmt::format("{} needs --y-t and --y-nt, or --auto", to_string(kind)));
    }
    write_defense_outputs(dir, "", dsp, run_defense(kind, dsp, params), f.dump_sse);
    return 0;
}

int cmd_evaluate(const PipelineFlags& flags, const std::string& report_path, const std::string& input,
                 const std::string& out) {
    std::string metrics;
    if (!report_path.empty() || !input.empty()) {
        if (report_path.empty() || input.empty()) throw ArgumentError("evaluate needs both --report and --input");
        if (!flags.spec_file.empty()) throw ArgumentError("--spec cannot be combined with --report/--input");
        const Dataset dsp = load_csv(input, Role::suspicious);
        const DefenseReport report = load_report_json(report_path);
        MetricsRecord rec = average({score(dsp, report)});
        std::ostringstream os;
        write_metrics_header(os);
        const bool uses_tau = report.defense == DefenseKind::kpb || report.defense == DefenseKind::mdt;
        const bool uses_eta = report.defense == DefenseKind::ncc;
        write_metrics_rows(os, report.defense, fs::path(input).stem().string(),
                           uses_tau ? "tau" : uses_eta ? "eta" : "", uses_tau ? report.params.tau : report.params.eta,
                           rec);
        metrics = os.str();
    } else {
        const ExperimentSpec spec = flags.resolve();
        const Evaluation ev = run_experiment(spec);
        std::ostringstream os;
        write_metrics_header(os);
        const bool uses_tau = defense_uses(spec.defense, SweepParam::tau);
        const bool uses_eta = defense_uses(spec.defense, SweepParam::eta);
        write_metrics_rows(os, spec.defense, to_string(spec.source), uses_tau ? "tau" : uses_eta ? "eta" : "",
                           uses_tau ? spec.tau : spec.eta, ev.record);
        metrics = os.str();
    }
    const fs::path path = output_dir(out, "evaluate") / "metrics.csv";
    auto os = open_out(path);
    os << metrics;
    close_out(os, path);
    std::cout << metrics;
    return 0;
}

int cmd_sweep(const PipelineFlags& flags, CLI::Option* tau_opt, const std::string& tau_grid, CLI::Option* eta_opt,
              const std::string& eta_grid, const std::string& out) {
    ExperimentSpec spec = flags.resolve();
    auto is_grid = [](const std::string& s) { return s.find(':') != std::string::npos || s.find(',') != std::string::npos; };
    SweepParam param;
    std::string grid;
    if (tau_opt->count() && eta_opt->count()) {
        if (is_grid(tau_grid) == is_grid(eta_grid)) throw ArgumentError("give a grid for exactly one of --tau and --eta");
        param = is_grid(tau_grid) ? SweepParam::tau : SweepParam::eta;
        if (param == SweepParam::tau) {
            grid = tau_grid;
            spec.eta = parse_number<double>(eta_grid, "eta");
        } else {
            grid = eta_grid;
            spec.tau = parse_number<double>(tau_grid, "tau");
        }
    } else if (tau_opt->count()) {
        param = SweepParam::tau;
        grid = tau_grid;
    } else if (eta_opt->count()) {
        param = SweepParam::eta;
        grid = eta_grid;
    } else {
        throw ArgumentError("sweep needs --tau GRID or --eta GRID");
    }
    const auto points = sweep(spec, param, parse_grid(grid));

    const fs::path dir = output_dir(out, "sweep");
    const fs::path sweep_path = dir / "sweep.csv";
    const fs::path curve_path = dir / "curve.csv";
    {
        auto os = open_out(sweep_path);
        write_sweep_csv(os, spec.defense, to_string(spec.source), param, points);
        close_out(os, sweep_path);
    }
    {
        auto os = open_out(curve_path);
        os << fmt::format("{},accuracy,precision,recall,f1\n", to_string(param));
        for (const auto& p : points) {
            const auto& m = p.evaluation.record.mean;
            os << fmt::format("{},{},{},{},{}\n", p.value, m.accuracy, m.precision, m.recall, m.f1);
        }
        close_out(os, curve_path);
    }
    const auto& best = best_point(points);
    fmt::print("{} {} sweep over {} values; best {}={} (mean F1 {:.4f}, accuracy {:.4f}) -> {}\n",
               to_string(spec.defense), to_string(param), points.size(), to_string(param), best.value,
               best.evaluation.record.mean.f1, best.evaluation.record.mean.accuracy, sweep_path.string());
    return 0;
}

int cmd_visualize(const std::string& input, const std::string& report_path, const std::string& out) {
    const Dataset dsp = load_csv(input);
    std::optional<DefenseReport> report;
    if (!report_path.empty()) report = load_report_json(report_path);
    const Scatter sc = build_scatter(dsp, report ? &*report : nullptr);
    const fs::path dir = output_dir(out, "visualize");
    const fs::path csv_path = dir / "scatter.csv";
    const fs::path svg_path = dir / "scatter.svg";
    {
        auto os = open_out(csv_path);
        write_scatter_csv(os, sc);
        close_out(os, csv_path);
    }
    {
        auto os = open_out(svg_path);
        write_scatter_svg(os, sc, fs::path(input).stem().string());
        close_out(os, svg_path);
    }
    fmt::print("{} points -> {}\n", sc.points.size(), svg_path.string());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Beta Poisoning attack and detectors"};
    app.require_subcommand(1);

    auto* poison = app.add_subcommand("poison", "Craft a poisoned training set");
    PipelineFlags poison_flags;
    poison_flags.attach(poison, false);
    std::size_t trial_index = 0;
    std::string poison_out;
    poison->add_option("--trial", trial_index, "Trial index (selects the split and attack seeds)");
    poison->add_option("--out", poison_out, "Output directory");

    auto* defend = app.add_subcommand("defend", "Run a detector on a suspicious dataset");
    DefendFlags df;
    defend->add_option("--input", df.input, "Suspicious dataset CSV")->required();
    defend->add_option("--defense", df.defense, "kpb, ncc, cbd or mdt")->required();
    defend->add_option("--tau", df.tau, "Distance threshold (kpb, mdt)");
    defend->add_option("--eta", df.eta, "Neighbourhood fraction (kpb, ncc)");
    df.y_t_opt = defend->add_option("--y-t", df.y_t, "Class the poison imitates");
    df.y_nt_opt = defend->add_option("--y-nt", df.y_nt, "Label the poison carries");
    auto* auto_flag = defend->add_flag("--auto", df.automatic, "Run cbd/mdt once per orientation (report_yt<label>.json)");
    auto_flag->excludes(df.y_t_opt)->excludes(df.y_nt_opt);
    defend->add_flag("--dump-sse", df.dump_sse, "Write the CBD SSE-vs-k curve to sse.csv");
    defend->add_option("--out", df.out, "Output directory");

    auto* evaluate = app.add_subcommand("evaluate", "Score a report, or run a repeated-trial experiment");
    PipelineFlags eval_flags;
    eval_flags.attach(evaluate, true);
    std::string eval_report, eval_input, eval_out, eval_tau, eval_eta;
    evaluate->add_option("--report", eval_report, "Defense report JSON");
    evaluate->add_option("--input", eval_input, "Suspicious dataset CSV the report refers to");
    eval_flags.add(evaluate, "--tau", "tau", "Distance threshold (kpb, mdt)");
    eval_flags.add(evaluate, "--eta", "eta", "Neighbourhood fraction (kpb, ncc)");
    evaluate->add_option("--out", eval_out, "Output directory");

    auto* sweep_cmd = app.add_subcommand("sweep", "Evaluate a detector over a parameter grid");
    PipelineFlags sweep_flags;
    sweep_flags.attach(sweep_cmd, true);
    std::string tau_grid, eta_grid, sweep_out;
    auto* tau_opt = sweep_cmd->add_option("--tau", tau_grid, "start:stop:step or a,b,c");
    auto* eta_opt = sweep_cmd->add_option("--eta", eta_grid, "start:stop:step or a,b,c");
    sweep_cmd->add_option("--out", sweep_out, "Output directory");

    auto* visualize = app.add_subcommand("visualize", "PCA scatter of a dataset as CSV and SVG");
    std::string vis_input, vis_report, vis_out;
    visualize->add_option("--input", vis_input, "Dataset CSV")->required();
    visualize->add_option("--report", vis_report, "Defense report JSON for flagged markers");
    visualize->add_option("--out", vis_out, "Output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\nRun with --help for usage.\n";
        return kExitArgument;
    }

    try {
        if (*poison) return cmd_poison(poison_flags, trial_index, poison_out);
        if (*defend) return cmd_defend(df);
        if (*evaluate) return cmd_evaluate(eval_flags, eval_report, eval_input, eval_out);
        if (*sweep_cmd) return cmd_sweep(sweep_flags, tau_opt, tau_grid, eta_opt, eta_grid, sweep_out);
        if (*visualize) return cmd_visualize(vis_input, vis_report, vis_out);
    } catch (const ArgumentError& e) {
        std::cerr << "error: " << e.what() << "\nRun with --help for usage.\n";
        return kExitArgument;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitIo;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return kExitArgument;
}
