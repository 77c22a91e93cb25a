#include "betapoison/report_io.hpp"

#include <algorithm>
#include <fstream>
#include <optional>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "betapoison/error.hpp"

namespace betapoison {

namespace {

template <class T>
void put_optional(nlohmann::json& j, const char* key, const std::optional<T>& v) {
    if (v) j[key] = *v;
}

template <class T>
void get_optional(const nlohmann::json& j, const char* key, std::optional<T>& v) {
    if (auto it = j.find(key); it != j.end() && !it->is_null()) v = it->template get<T>();
}

template <class T>
std::string csv_optional(const std::optional<T>& v) {
    return v ? fmt::format("{}", *v) : std::string{};
}

nlohmann::json to_json(const DefenseReport& r) {
    nlohmann::json diag = nlohmann::json::array();
    for (const auto& d : r.diagnostics) {
        nlohmann::json e{{"id", d.id}};
        put_optional(e, "avg_neighbor_distance", d.avg_neighbor_distance);
        put_optional(e, "vote_near", d.vote_near);
        put_optional(e, "vote_wide", d.vote_wide);
        put_optional(e, "distance_to_mean", d.distance_to_mean);
        put_optional(e, "cluster", d.cluster);
        diag.push_back(std::move(e));
    }
    return {{"defense", std::string(to_string(r.defense))},
            {"params", {{"tau", r.params.tau}, {"eta", r.params.eta}, {"y_t", r.params.y_t}, {"y_nt", r.params.y_nt}}},
            {"num_neighbors", r.neighbors},
            {"clusters", r.clusters},
            {"sse_curve", r.sse_curve},
            {"flagged_ids", r.flagged_ids},
            {"diagnostics", std::move(diag)}};
}

DefenseReport from_json(const nlohmann::json& j) {
    try {
        DefenseReport r;
        try {
            r.defense = parse_defense(j.at("defense").get<std::string>());
        } catch (const ArgumentError& e) {
            throw FormatError(fmt::format("malformed defense report: {}", e.what()));
        }
        const auto& p = j.at("params");
        r.params.tau = p.at("tau").get<double>();
        r.params.eta = p.at("eta").get<double>();
        r.params.y_t = p.at("y_t").get<Label>();
        r.params.y_nt = p.at("y_nt").get<Label>();
        r.neighbors = j.value("num_neighbors", std::size_t{0});
        r.clusters = j.value("clusters", std::size_t{0});
        r.sse_curve = j.value("sse_curve", std::vector<double>{});
        r.flagged_ids = j.at("flagged_ids").get<std::vector<SampleId>>();
        std::sort(r.flagged_ids.begin(), r.flagged_ids.end());
        if (std::adjacent_find(r.flagged_ids.begin(), r.flagged_ids.end()) != r.flagged_ids.end()) {
            throw ConsistencyError("report lists a flagged id twice");
        }
        for (const auto& e : j.value("diagnostics", nlohmann::json::array())) {
            SampleDiagnostics d;
            d.id = e.at("id").get<SampleId>();
            get_optional(e, "avg_neighbor_distance", d.avg_neighbor_distance);
            get_optional(e, "vote_near", d.vote_near);
            get_optional(e, "vote_wide", d.vote_wide);
            get_optional(e, "distance_to_mean", d.distance_to_mean);
            get_optional(e, "cluster", d.cluster);
            r.diagnostics.push_back(d);
        }
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(fmt::format("malformed defense report: {}", e.what()));
    }
}

} // namespace

void write_report_json(std::ostream& os, const DefenseReport& r) { os << to_json(r).dump(2) << '\n'; }

DefenseReport read_report_json(std::istream& is) {
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(fmt::format("malformed defense report: {}", e.what()));
    }
    return from_json(j);
}

void write_report_csv(std::ostream& os, const Dataset& dsp, const DefenseReport& r) {
    if (r.diagnostics.size() != dsp.size()) {
        throw ConsistencyError(fmt::format("report covers {} samples, dataset has {}", r.diagnostics.size(), dsp.size()));
    }
    os << "id,label,is_poison,flagged,avg_neighbor_distance,vote_near,vote_wide,distance_to_mean,cluster\n";
    for (const auto& d : r.diagnostics) {
        const auto& s = dsp.by_id(d.id);
        os << fmt::format("{},{},{},{},{},{},{},{},{}\n", s.id, s.label, int{s.is_poison}, int{r.is_flagged(s.id)},
                          csv_optional(d.avg_neighbor_distance), csv_optional(d.vote_near), csv_optional(d.vote_wide),
                          csv_optional(d.distance_to_mean), csv_optional(d.cluster));
    }
}

void write_sse_curve_csv(std::ostream& os, const DefenseReport& r) {
    os << "k,sse\n";
    for (std::size_t i = 0; i < r.sse_curve.size(); ++i) os << fmt::format("{},{}\n", i + 1, r.sse_curve[i]);
}

DefenseReport load_report_json(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError(fmt::format("cannot open {}", path));
    try {
        return read_report_json(is);
    } catch (const FormatError& e) {
        throw FormatError(fmt::format("{}: {}", path, e.what()));
    }
}

} // namespace betapoison
