#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include <fmt/format.h>

#include "betapoison/dataset.hpp"
#include "betapoison/error.hpp"

namespace betapoison {

struct Neighbor {
    std::size_t index;  // position in the dataset
    double distance;    // Euclidean
};

/// Number of neighbours for a fraction eta of n samples: max(1, floor(n * eta)).
/// A 1e-9 slack keeps products such as 100 * 0.29 from flooring one short.
inline std::size_t neighbor_count(std::size_t n, double eta) {
    if (!(eta > 0.0 && eta <= 1.0)) throw ArgumentError(fmt::format("eta {} is outside (0,1]", eta));
    const auto num = static_cast<std::size_t>(std::floor(static_cast<double>(n) * eta + 1e-9));
    return std::max<std::size_t>(1, num);
}

/// The `count` nearest neighbours of sample `query`, itself excluded, ordered by
/// (distance, id). Ordering on ids rather than positions makes the result
/// independent of sample order.
inline std::vector<Neighbor> nearest_neighbors(const Dataset& ds, std::size_t query, std::size_t count) {
    if (count > ds.size() - 1) {
        throw CapacityError(fmt::format("{} neighbours requested from {} samples", count, ds.size()));
    }
    const auto& q = ds[query].features;
    std::vector<Neighbor> all;
    all.reserve(ds.size() - 1);
    for (std::size_t j = 0; j < ds.size(); ++j) {
        if (j != query) all.push_back({j, distance(q, ds[j].features)});
    }
    auto closer = [&](const Neighbor& a, const Neighbor& b) {
        if (a.distance != b.distance) return a.distance < b.distance;
        return ds[a.index].id < ds[b.index].id;
    };
    if (count < all.size()) {
        std::nth_element(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(count), all.end(), closer);
        all.resize(count);
    }
    std::sort(all.begin(), all.end(), closer);
    return all;
}

} // namespace betapoison
