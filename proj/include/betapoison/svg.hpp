#pragma once

// Two-component PCA scatter of a suspicious dataset, as CSV and as a static SVG.
// SVG coordinates are printed with two decimals.

#include <ostream>
#include <string>
#include <vector>

#include "betapoison/dataset.hpp"
#include "betapoison/defenses.hpp"

namespace betapoison {

struct ScatterPoint {
    double pc1 = 0.0;
    double pc2 = 0.0;
    Label label = 0;
    bool is_poison = false;
    bool flagged = false;
};

struct ClassMarker {
    Label label = 0;
    double pc1 = 0.0;
    double pc2 = 0.0;
};

struct Scatter {
    std::vector<ScatterPoint> points;  // dataset order
    std::vector<ClassMarker> means;    // legitimate samples only, ascending label
};

/// Projects `dsp` onto its first two principal axes. Class means are computed
/// from legitimate samples. `report` may be null.
Scatter build_scatter(const Dataset& dsp, const DefenseReport* report = nullptr);

void write_scatter_csv(std::ostream& os, const Scatter& sc);

void write_scatter_svg(std::ostream& os, const Scatter& sc, const std::string& title = "PCA projection");

} // namespace betapoison
