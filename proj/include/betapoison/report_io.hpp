#pragma once

// DefenseReport as JSON, and the per-sample CSV used for plotting:
//   id,label,is_poison,flagged,avg_neighbor_distance,vote_near,vote_wide,distance_to_mean,cluster
// Diagnostics that a defense does not produce are left empty.

#include <istream>
#include <ostream>
#include <string>

#include "betapoison/dataset.hpp"
#include "betapoison/defenses.hpp"

namespace betapoison {

void write_report_json(std::ostream& os, const DefenseReport& r);

/// FormatError on malformed JSON or missing fields, ConsistencyError when an id
/// is flagged twice.
DefenseReport read_report_json(std::istream& is);

DefenseReport load_report_json(const std::string& path);

void write_report_csv(std::ostream& os, const Dataset& dsp, const DefenseReport& r);

/// SSE-vs-k curve of a CBD report: k,sse
void write_sse_curve_csv(std::ostream& os, const DefenseReport& r);

} // namespace betapoison
