#include "betapoison/svg.hpp"

#include <algorithm>
#include <array>
#include <map>

#include <fmt/format.h>

#include "betapoison/error.hpp"
#include "betapoison/pca.hpp"

namespace betapoison {

Scatter build_scatter(const Dataset& dsp, const DefenseReport* report) {
    if (dsp.size() < 2 || dsp.dim() < 2) throw CapacityError("scatter needs at least two samples and two features");
    const PcaModel model = fit_pca(dsp, 2);
    Scatter out;
    out.points.reserve(dsp.size());
    std::map<Label, std::array<double, 3>> sums;
    for (const auto& s : dsp) {
        const Eigen::VectorXd p = project_point(model, s.features);
        out.points.push_back({p(0), p(1), s.label, s.is_poison, report ? report->is_flagged(s.id) : false});
        if (!s.is_poison) {
            auto& acc = sums[s.label];
            acc[0] += p(0);
            acc[1] += p(1);
            acc[2] += 1.0;
        }
    }
    if (report) {
        for (SampleId id : report->flagged_ids) {
            if (!dsp.contains_id(id)) throw ConsistencyError(fmt::format("report flags id {} which is not in the dataset", id));
        }
    }
    for (const auto& [label, acc] : sums) out.means.push_back({label, acc[0] / acc[2], acc[1] / acc[2]});
    return out;
}

void write_scatter_csv(std::ostream& os, const Scatter& sc) {
    os << "pc1,pc2,label,is_poison,flagged\n";
    for (const auto& p : sc.points) {
        os << fmt::format("{},{},{},{},{}\n", p.pc1, p.pc2, p.label, int{p.is_poison}, int{p.flagged});
    }
}

void write_scatter_svg(std::ostream& os, const Scatter& sc, const std::string& title) {
    constexpr double width = 720, height = 540, margin = 50, legend_w = 150;
    constexpr std::array<const char*, 6> palette = {"#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b"};

    double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    if (!sc.points.empty()) {
        auto [xa, xb] = std::minmax_element(sc.points.begin(), sc.points.end(),
                                            [](auto& a, auto& b) { return a.pc1 < b.pc1; });
        auto [ya, yb] = std::minmax_element(sc.points.begin(), sc.points.end(),
                                            [](auto& a, auto& b) { return a.pc2 < b.pc2; });
        x0 = xa->pc1, x1 = xb->pc1, y0 = ya->pc2, y1 = yb->pc2;
    }
    if (x1 - x0 <= 0) x1 = x0 + 1;
    if (y1 - y0 <= 0) y1 = y0 + 1;
    const double plot_w = width - 2 * margin - legend_w;
    const double plot_h = height - 2 * margin;
    auto sx = [&](double v) { return margin + (v - x0) / (x1 - x0) * plot_w; };
    auto sy = [&](double v) { return height - margin - (v - y0) / (y1 - y0) * plot_h; };

    std::map<Label, const char*> colour;
    for (const auto& p : sc.points) colour.emplace(p.label, nullptr);
    std::size_t next = 0;
    for (auto& [label, c] : colour) c = palette[next++ % palette.size()];

    os << fmt::format(R"(<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}">)", width,
                      height, width, height)
       << '\n';
    os << R"(<rect width="100%" height="100%" fill="white"/>)" << '\n';
    os << fmt::format(R"(<text x="{:.2f}" y="28" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>)",
                      margin + plot_w / 2, title)
       << '\n';
    os << fmt::format(R"(<rect x="{:.2f}" y="{:.2f}" width="{:.2f}" height="{:.2f}" fill="none" stroke="#444"/>)", margin,
                      margin, plot_w, plot_h)
       << '\n';
    os << fmt::format(R"(<text x="{:.2f}" y="{:.2f}" font-family="sans-serif" font-size="12" text-anchor="middle">PC1</text>)",
                      margin + plot_w / 2, height - 15)
       << '\n';
    os << fmt::format(R"svg(<text x="15" y="{:.2f}" font-family="sans-serif" font-size="12" transform="rotate(-90 15 {:.2f})" text-anchor="middle">PC2</text>)svg",
                      margin + plot_h / 2, margin + plot_h / 2)
       << '\n';

    // Legitimate samples first so poisons and rings stay visible on top.
    for (const auto& p : sc.points) {
        if (p.is_poison) continue;
        os << fmt::format(R"(<circle cx="{:.2f}" cy="{:.2f}" r="3" fill="{}" fill-opacity="0.6"/>)", sx(p.pc1), sy(p.pc2),
                          colour[p.label])
           << '\n';
    }
    for (const auto& p : sc.points) {
        if (!p.is_poison) continue;
        const double cx = sx(p.pc1), cy = sy(p.pc2);
        os << fmt::format(R"(<path d="M{:.2f} {:.2f}L{:.2f} {:.2f}M{:.2f} {:.2f}L{:.2f} {:.2f}" stroke="#d62728" stroke-width="1.5"/>)",
                          cx - 4, cy - 4, cx + 4, cy + 4, cx - 4, cy + 4, cx + 4, cy - 4)
           << '\n';
    }
    for (const auto& p : sc.points) {
        if (!p.flagged) continue;
        os << fmt::format(R"(<circle cx="{:.2f}" cy="{:.2f}" r="6" fill="none" stroke="black" stroke-width="1"/>)", sx(p.pc1),
                          sy(p.pc2))
           << '\n';
    }
    for (const auto& m : sc.means) {
        const double cx = sx(m.pc1), cy = sy(m.pc2);
        os << fmt::format(R"(<path d="M{:.2f} {:.2f}L{:.2f} {:.2f}L{:.2f} {:.2f}L{:.2f} {:.2f}Z" fill="{}" stroke="black" stroke-width="1.5"/>)",
                          cx, cy - 9, cx + 9, cy, cx, cy + 9, cx - 9, cy, colour[m.label])
           << '\n';
    }

    double ly = margin + 10;
    const double lx = width - legend_w - margin / 2 + 10;
    auto legend_text = [&](const std::string& text) {
        os << fmt::format(R"(<text x="{:.2f}" y="{:.2f}" font-family="sans-serif" font-size="12">{}</text>)", lx + 14,
                          ly + 4, text)
           << '\n';
        ly += 20;
    };
    for (const auto& [label, c] : colour) {
        os << fmt::format(R"(<circle cx="{:.2f}" cy="{:.2f}" r="4" fill="{}"/>)", lx, ly, c) << '\n';
        legend_text(fmt::format("class {}", label));
    }
    os << fmt::format(R"(<path d="M{:.2f} {:.2f}L{:.2f} {:.2f}M{:.2f} {:.2f}L{:.2f} {:.2f}" stroke="#d62728" stroke-width="1.5"/>)",
                      lx - 4, ly - 4, lx + 4, ly + 4, lx - 4, ly + 4, lx + 4, ly - 4)
       << '\n';
    legend_text("poison");
    os << fmt::format(R"(<circle cx="{:.2f}" cy="{:.2f}" r="6" fill="none" stroke="black"/>)", lx, ly) << '\n';
    legend_text("flagged");
    os << fmt::format(R"(<path d="M{:.2f} {:.2f}L{:.2f} {:.2f}L{:.2f} {:.2f}L{:.2f} {:.2f}Z" fill="#ccc" stroke="black"/>)",
                      lx, ly - 6, lx + 6, ly, lx, ly + 6, lx - 6, ly)
       << '\n';
    legend_text("class mean");
    os << "</svg>\n";
}

} // namespace betapoison
