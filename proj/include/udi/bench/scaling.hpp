#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "udi/bench/bench.hpp"

namespace udi {

enum class Regime { Sublinear, Linear, Superlinear };
std::string_view to_string(Regime regime);

struct ScalingOptions {
    int window = 3;     // points per sliding fit, and the shortest segment
    double low = 0.9;   // slope below: sublinear
    double high = 1.1;  // slope above: superlinear
};

struct RegimeSegment {
    double first_nodes = 0;
    double last_nodes = 0;
    double slope = 0;  // least squares of log(time) on log(nodes) over the segment
    Regime label = Regime::Linear;
};

struct RegimeReport {
    std::vector<RegimeSegment> segments;  // contiguous, cover the measured range
    std::vector<double> breakpoints;      // node counts where the label changes
    std::vector<std::pair<double, double>> points;  // (nodes, mean time)
    std::vector<double> window_slopes;

    std::string to_text() const;
    std::string to_json() const;
};

Regime classify_slope(double slope, const ScalingOptions& options = {});

/// Mean time per node count on log-log axes. The curve is cut into the
/// least-squares best set of straight pieces (piece count by BIC), each piece
/// labelled by its slope, and neighbours with one label joined. Throws
/// InsufficientData for fewer than four distinct node counts (or fewer than
/// one window), InvalidSpec for non-positive values.
RegimeReport classify_scaling(const std::vector<BenchRow>& rows, const ScalingOptions& options = {});
RegimeReport classify_scaling(std::vector<std::pair<double, double>> points, const ScalingOptions& options = {});

}  // namespace udi
