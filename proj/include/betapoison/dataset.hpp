#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <numeric>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <fmt/format.h>

#include "betapoison/error.hpp"
#include "betapoison/seed.hpp"

namespace betapoison {

using Label = int;
using SampleId = std::size_t;
using FeatureVector = std::vector<double>;

inline constexpr double kFeatureLower = 0.0;
inline constexpr double kFeatureUpper = 1.0;

enum class Role { training, validation, suspicious, flagged };

inline std::string_view to_string(Role role) {
    switch (role) {
    case Role::training: return "training";
    case Role::validation: return "validation";
    case Role::suspicious: return "suspicious";
    case Role::flagged: return "flagged";
    }
    return "unknown";
}

struct LabeledSample {
    FeatureVector features;
    Label label = 0;
    bool is_poison = false;
    SampleId id = 0;

    friend bool operator==(const LabeledSample&, const LabeledSample&) = default;
};

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double t = a[i] - b[i];
        s += t * t;
    }
    return s;
}

inline double distance(std::span<const double> a, std::span<const double> b) {
    return std::sqrt(squared_distance(a, b));
}

/// Ordered, immutable collection of samples sharing one dimensionality.
///
/// Ids are unique and survive filtering, so a subset can always be matched back
/// to the dataset it came from. A suspicious dataset must hold at least two
/// labels.
class Dataset {
public:
    Dataset() = default;

    Dataset(std::size_t dim, std::vector<LabeledSample> samples, Role role = Role::training)
        : dim_(dim), samples_(std::move(samples)), role_(role) {
        index_.reserve(samples_.size());
        for (std::size_t i = 0; i < samples_.size(); ++i) {
            const auto& s = samples_[i];
            if (s.features.size() != dim_) {
                throw ArgumentError(fmt::format("sample {} has {} features, dataset dimension is {}", s.id,
                                                s.features.size(), dim_));
            }
            if (!index_.emplace(s.id, i).second) {
                throw ConsistencyError(fmt::format("duplicate sample id {}", s.id));
            }
        }
        if (role_ == Role::suspicious && classes().size() < 2) {
            throw ArgumentError("a suspicious dataset needs at least two distinct labels");
        }
    }

    std::size_t size() const noexcept { return samples_.size(); }
    bool empty() const noexcept { return samples_.empty(); }
    std::size_t dim() const noexcept { return dim_; }
    Role role() const noexcept { return role_; }

    const std::vector<LabeledSample>& samples() const noexcept { return samples_; }
    const LabeledSample& operator[](std::size_t i) const { return samples_[i]; }
    auto begin() const noexcept { return samples_.begin(); }
    auto end() const noexcept { return samples_.end(); }

    std::set<Label> classes() const {
        std::set<Label> out;
        for (const auto& s : samples_) out.insert(s.label);
        return out;
    }

    std::size_t count(Label label) const {
        return static_cast<std::size_t>(
            std::count_if(samples_.begin(), samples_.end(), [&](const auto& s) { return s.label == label; }));
    }

    std::size_t poison_count() const {
        return static_cast<std::size_t>(
            std::count_if(samples_.begin(), samples_.end(), [](const auto& s) { return s.is_poison; }));
    }

    std::optional<std::size_t> index_of(SampleId id) const {
        auto it = index_.find(id);
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    bool contains_id(SampleId id) const { return index_.contains(id); }

    const LabeledSample& by_id(SampleId id) const {
        auto pos = index_of(id);
        if (!pos) throw ConsistencyError(fmt::format("unknown sample id {}", id));
        return samples_[*pos];
    }

    // Smallest id strictly greater than every id in the dataset.
    SampleId next_id() const {
        SampleId next = 0;
        for (const auto& s : samples_) next = std::max(next, s.id + 1);
        return next;
    }

    template <class Pred>
    Dataset filter(Pred&& keep, Role role) const {
        std::vector<LabeledSample> out;
        for (const auto& s : samples_) {
            if (keep(s)) out.push_back(s);
        }
        return Dataset(dim_, std::move(out), role);
    }

    template <class Pred>
    Dataset filter(Pred&& keep) const {
        return filter(std::forward<Pred>(keep), role_);
    }

    Dataset with_role(Role role) const { return Dataset(dim_, samples_, role); }

    std::vector<FeatureVector> class_features(Label label) const {
        std::vector<FeatureVector> out;
        for (const auto& s : samples_) {
            if (s.label == label) out.push_back(s.features);
        }
        return out;
    }

    friend bool operator==(const Dataset& a, const Dataset& b) {
        return a.dim_ == b.dim_ && a.role_ == b.role_ && a.samples_ == b.samples_;
    }

private:
    std::size_t dim_ = 0;
    std::vector<LabeledSample> samples_;
    Role role_ = Role::training;
    std::unordered_map<SampleId, std::size_t> index_;
};

// Arithmetic mean of all samples carrying `label`.
inline FeatureVector class_mean(const Dataset& ds, Label label) {
    FeatureVector mean(ds.dim(), 0.0);
    std::size_t n = 0;
    for (const auto& s : ds) {
        if (s.label != label) continue;
        for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += s.features[j];
        ++n;
    }
    if (n == 0) throw ArgumentError(fmt::format("label {} does not occur in the dataset", label));
    for (double& v : mean) v /= static_cast<double>(n);
    return mean;
}

/// Keeps only the samples labelled `class_a` or `class_b`; ids are preserved.
inline Dataset filter_binary(const Dataset& ds, Label class_a, Label class_b) {
    const auto present = ds.classes();
    for (Label c : {class_a, class_b}) {
        if (!present.contains(c)) throw ArgumentError(fmt::format("label {} does not occur in the dataset", c));
    }
    if (class_a == class_b) throw ArgumentError("filter_binary needs two different labels");
    return ds.filter([&](const LabeledSample& s) { return s.label == class_a || s.label == class_b; });
}

/// Draws disjoint per-class subsets without replacement.
///
/// Part `p` receives `per_class[p]` samples of every class present in `ds`.
/// Each class is shuffled once with a generator derived from (seed, label), so
/// the outcome does not depend on sample order. Samples inside a part are sorted
/// by id.
inline std::vector<Dataset> stratified_split(const Dataset& ds, std::span<const std::size_t> per_class,
                                             std::span<const Role> roles, std::uint64_t seed) {
    if (per_class.size() != roles.size()) throw ArgumentError("stratified_split: one role per part is required");
    const std::size_t needed = std::accumulate(per_class.begin(), per_class.end(), std::size_t{0});

    std::vector<std::vector<LabeledSample>> parts(per_class.size());
    for (Label label : ds.classes()) {
        std::vector<const LabeledSample*> members;
        for (const auto& s : ds) {
            if (s.label == label) members.push_back(&s);
        }
        if (members.size() < needed) {
            throw CapacityError(fmt::format("class {} has {} samples, {} requested", label, members.size(), needed));
        }
        std::sort(members.begin(), members.end(), [](auto* a, auto* b) { return a->id < b->id; });
        Rng rng(derive_seed(seed, {stream::split, static_cast<std::uint64_t>(static_cast<std::int64_t>(label))}));
        // Partial Fisher-Yates: only the first `needed` slots are drawn.
        for (std::size_t i = 0; i < needed; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, members.size() - 1);
            std::swap(members[i], members[pick(rng)]);
        }
        std::size_t offset = 0;
        for (std::size_t p = 0; p < per_class.size(); ++p) {
            for (std::size_t i = 0; i < per_class[p]; ++i) parts[p].push_back(*members[offset + i]);
            offset += per_class[p];
        }
    }

    std::vector<Dataset> out;
    out.reserve(parts.size());
    for (std::size_t p = 0; p < parts.size(); ++p) {
        std::sort(parts[p].begin(), parts[p].end(), [](const auto& a, const auto& b) { return a.id < b.id; });
        out.emplace_back(ds.dim(), std::move(parts[p]), roles[p]);
    }
    return out;
}

/// Two isotropic Gaussian blobs, labels 0 and 1, clipped to the unit box.
inline Dataset generate_blobs(std::uint64_t seed, std::size_t n_per_class, std::size_t dim,
                              const std::array<FeatureVector, 2>& centers, double sigma) {
    if (dim == 0) throw ArgumentError("generate_blobs: dim must be positive");
    if (n_per_class == 0) throw ArgumentError("generate_blobs: n_per_class must be positive");
    if (!(sigma > 0.0)) throw ArgumentError("generate_blobs: sigma must be positive");
    for (const auto& c : centers) {
        if (c.size() != dim) throw ArgumentError("generate_blobs: center length differs from dim");
    }

    Rng rng(derive_seed(seed, {stream::blobs}));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<LabeledSample> samples;
    samples.reserve(2 * n_per_class);
    for (Label label = 0; label < 2; ++label) {
        for (std::size_t i = 0; i < n_per_class; ++i) {
            LabeledSample s;
            s.features.resize(dim);
            for (std::size_t j = 0; j < dim; ++j) {
                s.features[j] = std::clamp(centers[label][j] + sigma * normal(rng), kFeatureLower, kFeatureUpper);
            }
            s.label = label;
            s.id = samples.size();
            samples.push_back(std::move(s));
        }
    }
    return Dataset(dim, std::move(samples));
}

// ---------------------------------------------------------------------------
// CSV: id,label,is_poison,f0..f{d-1}
// Values use the shortest representation that round-trips, so writing the same
// dataset twice produces identical bytes and reading it back is exact.

inline void write_csv(std::ostream& os, const Dataset& ds) {
    os << "id,label,is_poison";
    for (std::size_t j = 0; j < ds.dim(); ++j) os << ",f" << j;
    os << '\n';
    fmt::memory_buffer buf;
    for (const auto& s : ds) {
        buf.clear();
        fmt::format_to(std::back_inserter(buf), "{},{},{}", s.id, s.label, s.is_poison ? 1 : 0);
        for (double v : s.features) fmt::format_to(std::back_inserter(buf), ",{}", v);
        buf.push_back('\n');
        os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    }
}

namespace detail {

inline std::vector<std::string_view> split_fields(std::string_view line, char sep = ',') {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find(sep, start);
        out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline double parse_double(std::string_view text, std::size_t line_no) {
    std::string tmp(text);
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(tmp, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != tmp.size()) {
        throw FormatError(fmt::format("line {}: '{}' is not a number", line_no, text));
    }
    return v;
}

inline long long parse_integer(std::string_view text, std::size_t line_no) {
    std::string tmp(text);
    std::size_t used = 0;
    long long v = 0;
    try {
        v = std::stoll(tmp, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != tmp.size()) {
        throw FormatError(fmt::format("line {}: '{}' is not an integer", line_no, text));
    }
    return v;
}

inline std::string_view trim_cr(std::string_view s) {
    if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
    return s;
}

} // namespace detail

inline Dataset read_csv(std::istream& is, Role role = Role::training) {
    std::string line;
    if (!std::getline(is, line)) throw FormatError("empty CSV input");
    const auto header = detail::split_fields(detail::trim_cr(line));
    if (header.size() < 3 || header[0] != "id" || header[1] != "label" || header[2] != "is_poison") {
        throw FormatError("CSV header must start with id,label,is_poison");
    }
    const std::size_t dim = header.size() - 3;
    for (std::size_t j = 0; j < dim; ++j) {
        if (header[3 + j] != fmt::format("f{}", j)) throw FormatError(fmt::format("unexpected column '{}'", header[3 + j]));
    }

    std::vector<LabeledSample> samples;
    std::size_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        const auto row = detail::trim_cr(line);
        if (row.empty()) continue;
        const auto fields = detail::split_fields(row);
        if (fields.size() != header.size()) {
            throw FormatError(fmt::format("line {}: {} fields, expected {}", line_no, fields.size(), header.size()));
        }
        LabeledSample s;
        const auto id = detail::parse_integer(fields[0], line_no);
        if (id < 0) throw FormatError(fmt::format("line {}: negative id", line_no));
        s.id = static_cast<SampleId>(id);
        s.label = static_cast<Label>(detail::parse_integer(fields[1], line_no));
        const auto poison = detail::parse_integer(fields[2], line_no);
        if (poison != 0 && poison != 1) throw FormatError(fmt::format("line {}: is_poison must be 0 or 1", line_no));
        s.is_poison = poison == 1;
        s.features.reserve(dim);
        for (std::size_t j = 0; j < dim; ++j) s.features.push_back(detail::parse_double(fields[3 + j], line_no));
        samples.push_back(std::move(s));
    }
    return Dataset(dim, std::move(samples), role);
}

inline void save_csv(const std::string& path, const Dataset& ds) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError(fmt::format("cannot open {} for writing", path));
    write_csv(os, ds);
    if (!os) throw IoError(fmt::format("failed writing {}", path));
}

inline Dataset load_csv(const std::string& path, Role role = Role::training) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError(fmt::format("cannot open {}", path));
    return read_csv(is, role);
}

} // namespace betapoison
