#include "udi/bench/scaling.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <fmt/core.h>
#include <nlohmann/json.hpp>

#include "udi/common/error.hpp"

namespace udi {

std::string_view to_string(Regime regime) {
    switch (regime) {
    case Regime::Sublinear: return "sublinear";
    case Regime::Linear: return "linear";
    case Regime::Superlinear: return "superlinear";
    }
    return "unknown";
}

Regime classify_slope(double slope, const ScalingOptions& options) {
    if (slope < options.low) return Regime::Sublinear;
    if (slope > options.high) return Regime::Superlinear;
    return Regime::Linear;
}

namespace {

struct Fit {
    double slope = 0;
    double intercept = 0;
    double sse = 0;
};

// Least squares over points a..b inclusive.
Fit fit(const std::vector<double>& x, const std::vector<double>& y, std::size_t a, std::size_t b) {
    double n = static_cast<double>(b - a + 1);
    double mx = 0, my = 0;
    for (std::size_t i = a; i <= b; ++i) mx += x[i], my += y[i];
    mx /= n;
    my /= n;
    double sxx = 0, sxy = 0;
    for (std::size_t i = a; i <= b; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    Fit f;
    f.slope = sxx > 0 ? sxy / sxx : 0.0;
    f.intercept = my - f.slope * mx;
    for (std::size_t i = a; i <= b; ++i) {
        double r = y[i] - (f.intercept + f.slope * x[i]);
        f.sse += r * r;
    }
    return f;
}

}  // namespace

RegimeReport classify_scaling(std::vector<std::pair<double, double>> points, const ScalingOptions& options) {
    if (options.window < 2) fail(ErrorCode::InvalidConfig, "window must cover at least two points");
    if (!(options.low <= options.high)) fail(ErrorCode::InvalidConfig, "low threshold above high threshold");
    std::map<double, std::pair<double, int>> by_nodes;
    for (const auto& [n, t] : points) {
        if (!(n > 0) || !(t > 0)) fail(ErrorCode::InvalidSpec, fmt::format("non-positive point ({}, {})", n, t));
        auto& acc = by_nodes[n];
        acc.first += t;
        acc.second += 1;
    }
    const std::size_t w = static_cast<std::size_t>(options.window);
    if (by_nodes.size() < std::max<std::size_t>(4, w)) {
        fail(ErrorCode::InsufficientData,
             fmt::format("need at least {} distinct node counts, have {}", std::max<std::size_t>(4, w), by_nodes.size()));
    }

    RegimeReport rep;
    std::vector<double> x, y;
    for (const auto& [n, acc] : by_nodes) {
        double mean = acc.first / acc.second;
        rep.points.emplace_back(n, mean);
        x.push_back(std::log(n));
        y.push_back(std::log(mean));
    }
    const std::size_t m = x.size();

    // Local slopes, reported for inspection.
    for (std::size_t k = 0; k + w <= m; ++k) rep.window_slopes.push_back(fit(x, y, k, k + w - 1).slope);

    // Least-squares segmentation for every piece count; neighbouring pieces
    // share their end point and each spans at least one window.
    const std::size_t span = w - 1;
    const std::size_t kmax = (m - 1) / span;
    std::vector<std::vector<double>> best(kmax + 1, std::vector<double>(m, INFINITY));
    std::vector<std::vector<std::size_t>> from(kmax + 1, std::vector<std::size_t>(m, 0));
    best[0][0] = 0;
    for (std::size_t j = 1; j <= kmax; ++j) {
        for (std::size_t b = j * span; b < m; ++b) {
            for (std::size_t a = (j - 1) * span; a + span <= b; ++a) {
                if (best[j - 1][a] == INFINITY) continue;
                double c = best[j - 1][a] + fit(x, y, a, b).sse;
                if (c < best[j][b] - 1e-12) {
                    best[j][b] = c;
                    from[j][b] = a;
                }
            }
        }
    }
    // Piece count by BIC: slope, intercept and a breakpoint per extra piece.
    const double md = static_cast<double>(m);
    std::size_t k = 1;
    double k_score = INFINITY;
    for (std::size_t j = 1; j <= kmax; ++j) {
        double rss = std::max(best[j][m - 1] / md, 1e-18);
        double score = md * std::log(rss) + static_cast<double>(3 * j - 1) * std::log(md);
        if (score < k_score - 1e-9) {
            k_score = score;
            k = j;
        }
    }
    std::vector<std::size_t> cuts{m - 1};
    for (std::size_t j = k; j > 0; --j) cuts.push_back(from[j][cuts.back()]);
    std::reverse(cuts.begin(), cuts.end());

    // Refit each stretch; neighbours that end up with one label are joined.
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        auto f = fit(x, y, cuts[i], cuts[i + 1]);
        RegimeSegment seg{rep.points[cuts[i]].first, rep.points[cuts[i + 1]].first, f.slope,
                          classify_slope(f.slope, options)};
        if (!rep.segments.empty() && rep.segments.back().label == seg.label) {
            auto start = std::find_if(rep.points.begin(), rep.points.end(),
                                      [&](const auto& p) { return p.first == rep.segments.back().first_nodes; });
            auto a = static_cast<std::size_t>(start - rep.points.begin());
            auto joined = fit(x, y, a, cuts[i + 1]);
            rep.segments.back().last_nodes = seg.last_nodes;
            rep.segments.back().slope = joined.slope;
            rep.segments.back().label = classify_slope(joined.slope, options);
            continue;
        }
        if (!rep.segments.empty()) rep.breakpoints.push_back(seg.first_nodes);
        rep.segments.push_back(seg);
    }
    return rep;
}

RegimeReport classify_scaling(const std::vector<BenchRow>& rows, const ScalingOptions& options) {
    std::vector<std::pair<double, double>> points;
    points.reserve(rows.size());
    for (const auto& r : rows) points.emplace_back(r.nodes, r.startup_seconds);
    return classify_scaling(std::move(points), options);
}

std::string RegimeReport::to_text() const {
    std::string out = "segment  nodes                 slope  regime\n";
    for (std::size_t i = 0; i < segments.size(); ++i) {
        const auto& s = segments[i];
        out += fmt::format("{:<8} {:<21} {:6.3f}  {}\n", i + 1, fmt::format("{:g}..{:g}", s.first_nodes, s.last_nodes),
                           s.slope, to_string(s.label));
    }
    out += "breakpoints:";
    if (breakpoints.empty()) out += " none";
    for (std::size_t i = 0; i < breakpoints.size(); ++i) out += fmt::format("{}{:g}", i ? ", " : " ", breakpoints[i]);
    out += "\n";
    return out;
}

std::string RegimeReport::to_json() const {
    nlohmann::json j;
    j["segments"] = nlohmann::json::array();
    for (const auto& s : segments) {
        j["segments"].push_back({{"first_nodes", s.first_nodes},
                                 {"last_nodes", s.last_nodes},
                                 {"slope", s.slope},
                                 {"label", std::string(to_string(s.label))}});
    }
    j["breakpoints"] = breakpoints;
    j["points"] = nlohmann::json::array();
    for (const auto& [n, t] : points) j["points"].push_back({n, t});
    j["window_slopes"] = window_slopes;
    return j.dump(2);
}

}  // namespace udi
