#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

#include "support/test_support.hpp"
#include "udi/bench/bench.hpp"
#include "udi/bench/scaling.hpp"
#include "udi/common/rng.hpp"

using namespace udi;

namespace {

std::vector<double> powers_of_two(int max_exp) {
    std::vector<double> out;
    for (int e = 0; e <= max_exp; ++e) out.push_back(std::ldexp(1.0, e));
    return out;
}

// Continuous piecewise power law: exponent a below b1, c between b1 and b2,
// d above b2.
double piecewise(double n, double a, double b1, double c, double b2, double d) {
    if (n <= b1) return std::pow(n, a);
    double at_b1 = std::pow(b1, a);
    if (n <= b2) return at_b1 * std::pow(n / b1, c);
    return at_b1 * std::pow(b2 / b1, c) * std::pow(n / b2, d);
}

std::vector<std::pair<double, double>> regimes_truth(const std::vector<double>& grid) {
    std::vector<std::pair<double, double>> pts;
    for (double n : grid) pts.emplace_back(n, 0.2 * piecewise(n, 0.6, 256, 1.0, 2048, 1.3));
    return pts;
}

// Index distance between two node counts on the grid.
long grid_distance(const std::vector<double>& grid, double a, double b) {
    auto ia = std::find(grid.begin(), grid.end(), a) - grid.begin();
    auto ib = std::find(grid.begin(), grid.end(), b) - grid.begin();
    return std::labs(ia - ib);
}

}  // namespace

TEST_CASE("square-root scaling is one sublinear segment") {
    std::vector<std::pair<double, double>> pts;
    for (double n : powers_of_two(12)) pts.emplace_back(n, 3.0 * std::sqrt(n));
    auto rep = classify_scaling(pts);
    REQUIRE(rep.segments.size() == 1);
    CHECK(rep.breakpoints.empty());
    CHECK(rep.segments[0].label == Regime::Sublinear);
    CHECK(std::abs(rep.segments[0].slope - 0.5) <= 0.05);
    CHECK(rep.segments[0].first_nodes == 1);
    CHECK(rep.segments[0].last_nodes == 4096);
}

TEST_CASE("piecewise power law: three regimes, breakpoints at 256 and 2048") {
    // A regime needs at least a window's worth of points, so the grid runs
    // past 4096.
    auto grid = powers_of_two(14);
    auto rep = classify_scaling(regimes_truth(grid));
    REQUIRE(rep.segments.size() == 3);
    CHECK(rep.segments[0].label == Regime::Sublinear);
    CHECK(rep.segments[1].label == Regime::Linear);
    CHECK(rep.segments[2].label == Regime::Superlinear);
    CHECK(std::abs(rep.segments[0].slope - 0.6) <= 0.05);
    CHECK(std::abs(rep.segments[1].slope - 1.0) <= 0.05);
    CHECK(std::abs(rep.segments[2].slope - 1.3) <= 0.05);
    REQUIRE(rep.breakpoints.size() == 2);
    CHECK(grid_distance(grid, rep.breakpoints[0], 256) <= 1);
    CHECK(grid_distance(grid, rep.breakpoints[1], 2048) <= 1);
}

TEST_CASE("segments are contiguous and cover the measured range") {
    auto grid = powers_of_two(14);
    auto rep = classify_scaling(regimes_truth(grid));
    REQUIRE_FALSE(rep.segments.empty());
    CHECK(rep.segments.front().first_nodes == grid.front());
    CHECK(rep.segments.back().last_nodes == grid.back());
    for (std::size_t i = 1; i < rep.segments.size(); ++i) {
        CHECK(rep.segments[i].first_nodes == rep.segments[i - 1].last_nodes);
        CHECK(rep.segments[i].first_nodes == rep.breakpoints[i - 1]);
        CHECK(rep.segments[i].label != rep.segments[i - 1].label);
    }
    for (const auto& s : rep.segments) CHECK(s.label == classify_slope(s.slope));
}

TEST_CASE("constant startup is slope zero, sublinear") {
    std::vector<std::pair<double, double>> pts;
    for (double n : powers_of_two(8)) pts.emplace_back(n, 1.5);
    auto rep = classify_scaling(pts);
    REQUIRE(rep.segments.size() == 1);
    CHECK(rep.segments[0].slope == doctest::Approx(0.0));
    CHECK(rep.segments[0].label == Regime::Sublinear);
}

TEST_CASE("slope thresholds") {
    CHECK(classify_slope(0.89) == Regime::Sublinear);
    CHECK(classify_slope(0.9) == Regime::Linear);
    CHECK(classify_slope(1.1) == Regime::Linear);
    CHECK(classify_slope(1.11) == Regime::Superlinear);
    ScalingOptions tight{3, 0.95, 1.05};
    CHECK(classify_slope(0.93, tight) == Regime::Sublinear);
}

TEST_CASE("5% multiplicative noise: exponents within 0.1") {
    // Half-octave grid out to 2^14 so each regime has enough points. Noise
    // occasionally hides a regime, so this is a rate over many draws.
    std::vector<double> grid;
    for (int e = 0; e <= 28; ++e) grid.push_back(std::round(std::pow(2.0, e / 2.0)));
    const int draws = 40;
    int recovered = 0;
    for (int seed = 1; seed <= draws; ++seed) {
        std::mt19937_64 gen(static_cast<std::uint64_t>(seed));
        std::normal_distribution<double> noise(0.0, 0.05);
        std::vector<std::pair<double, double>> pts;
        for (double n : grid) {
            pts.emplace_back(n, 0.2 * piecewise(n, 0.6, 256, 1.0, 2048, 1.3) * (1.0 + noise(gen)));
        }
        auto rep = classify_scaling(pts);
        bool ok = rep.segments.size() == 3 && std::abs(rep.segments[0].slope - 0.6) <= 0.1 &&
                  std::abs(rep.segments[1].slope - 1.0) <= 0.1 && std::abs(rep.segments[2].slope - 1.3) <= 0.1;
        if (ok) ++recovered;
        else MESSAGE("seed " << seed << " missed:\n" << rep.to_text());
    }
    CHECK(recovered >= draws * 95 / 100);
}

TEST_CASE("repeated node counts are averaged") {
    std::vector<std::pair<double, double>> pts;
    for (double n : powers_of_two(6)) {
        pts.emplace_back(n, 0.9 * n);
        pts.emplace_back(n, 1.1 * n);
    }
    auto rep = classify_scaling(pts);
    REQUIRE(rep.points.size() == 7);
    CHECK(rep.points[3].second == doctest::Approx(8.0));
    REQUIRE(rep.segments.size() == 1);
    CHECK(rep.segments[0].slope == doctest::Approx(1.0));
    CHECK(rep.segments[0].label == Regime::Linear);
}

TEST_CASE("classifier needs four distinct node counts") {
    std::vector<std::pair<double, double>> pts{{1, 1}, {2, 2}, {4, 3}, {4, 3.5}};
    CHECK_THROWS_WITH_AS(classify_scaling(pts), doctest::Contains("InsufficientData"), Error);
    pts.emplace_back(8, 4);
    CHECK_NOTHROW(classify_scaling(pts));
    std::vector<std::pair<double, double>> bad{{1, 1}, {2, 0}, {4, 3}, {8, 4}};
    CHECK_THROWS_WITH_AS(classify_scaling(bad), doctest::Contains("InvalidSpec"), Error);
}

TEST_CASE("report renders as text and json") {
    auto rep = classify_scaling(regimes_truth(powers_of_two(12)));
    auto text = rep.to_text();
    CHECK(text.find("sublinear") != std::string::npos);
    CHECK(text.find("superlinear") != std::string::npos);
    CHECK(text.find("breakpoints: ") != std::string::npos);
    auto json = rep.to_json();
    CHECK(json.find("\"segments\"") != std::string::npos);
    CHECK(json.find("\"breakpoints\"") != std::string::npos);
}

TEST_CASE("csv round-trips exactly") {
    std::vector<BenchRow> rows{
        {1, 1, ImageMode::Directive, 36'000'000, 0.051241, 1},
        {4096, 32, ImageMode::PerCommand, 1'700'000'000, 12.5, 18446744073709551615ull},
    };
    auto csv = to_csv(rows);
    CHECK(csv.rfind(std::string(kBenchCsvHeader) + "\n", 0) == 0);
    CHECK(csv.find("4096,32,per-command,1700000000,12.500000,18446744073709551615\n") != std::string::npos);
    auto back = parse_csv(csv);
    CHECK(back == rows);
    CHECK(to_csv(back) == csv);
}

TEST_CASE("csv parse errors name the line") {
    std::string head = std::string(kBenchCsvHeader) + "\n";
    CHECK_THROWS_WITH_AS(parse_csv(head + "1,1,directive,10,0.5,1\n2,1,sideways,10,0.5,1\n"),
                         doctest::Contains("line 3"), Error);
    CHECK_THROWS_WITH_AS(parse_csv(head + "1,1,directive,10,0.5\n"), doctest::Contains("line 2"), Error);
    CHECK_THROWS_WITH_AS(parse_csv(head + "0,1,directive,10,0.5,1\n"), doctest::Contains("positive"), Error);
    CHECK_THROWS_WITH_AS(parse_csv("nodes,seed\n"), doctest::Contains("InvalidSpec"), Error);
    CHECK(parse_csv(head).empty());
}

TEST_CASE("single node, one rank: startup is the base mount latency plus its jitter draw") {
    BenchConfig c;
    c.node_counts = {1};
    c.seed = 5;
    auto r = bench_startup(c);
    REQUIRE(r.rows.size() == 1);
    CHECK(r.failures.empty());
    double u = keyed_uniform(5, {static_cast<std::uint64_t>(Stream::MountJitter), 0, 0});
    CHECK(r.rows[0].startup_seconds == doctest::Approx(0.050 - 0.010 * std::log(u)).epsilon(1e-5));
    CHECK(r.rows[0].startup_seconds >= 0.050);
}

TEST_CASE("rows come out in input order and are deterministic per seed") {
    BenchConfig c;
    c.node_counts = {4, 1, 2};
    c.ranks = {2, 1};
    c.modes = {ImageMode::PerCommand, ImageMode::Directive};
    c.image_sizes = {2'000'000};
    auto a = bench_startup(c);
    auto b = bench_startup(c);
    REQUIRE(a.rows.size() == 12);
    CHECK(a.rows[0].image_mode == ImageMode::PerCommand);
    CHECK(a.rows[0].nodes == 4);
    CHECK(a.rows[0].ranks_per_node == 2);
    CHECK(a.rows[1].ranks_per_node == 1);
    CHECK(a.rows[2].nodes == 1);
    CHECK(a.rows[11].image_mode == ImageMode::Directive);
    CHECK(to_csv(a.rows) == to_csv(b.rows));
    CHECK(a.trace_digest == b.trace_digest);
    c.seed = 2;
    CHECK(bench_startup(c).trace_digest != a.trace_digest);
}

TEST_CASE("80 nodes: directive flat across ranks, per-command non-decreasing") {
    BenchConfig c;
    c.node_counts = {80};
    c.ranks = {1, 2, 4, 8, 16, 32};
    c.modes = {ImageMode::Directive, ImageMode::PerCommand};
    auto r = bench_startup(c);
    REQUIRE(r.rows.size() == 12);
    const double base = r.rows[0].startup_seconds;
    for (int i = 0; i < 6; ++i) {
        CHECK(r.rows[i].image_mode == ImageMode::Directive);
        CHECK(std::abs(r.rows[i].startup_seconds / base - 1.0) <= 0.05);
    }
    for (int i = 7; i < 12; ++i) {
        CHECK(r.rows[i].image_mode == ImageMode::PerCommand);
        CHECK(r.rows[i].startup_seconds >= r.rows[i - 1].startup_seconds);
    }
    CHECK(r.rows[11].startup_seconds > r.rows[6].startup_seconds);
}

TEST_CASE("startup does not depend on image size") {
    BenchConfig c;
    c.node_counts = {1, 16, 256};
    c.image_sizes = {36'000'000, 1'700'000'000};
    auto t0 = std::chrono::steady_clock::now();
    auto r = bench_startup(c);
    auto wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    REQUIRE(r.rows.size() == 6);
    for (int i = 0; i < 3; ++i) {
        double ratio = r.rows[i + 3].startup_seconds / r.rows[i].startup_seconds;
        CHECK(ratio >= 0.95);
        CHECK(ratio <= 1.05);
    }
    CHECK(wall < 60.0);
}

TEST_CASE("bad bench config is rejected") {
    BenchConfig c;
    c.node_counts = {};
    CHECK_THROWS_WITH_AS(bench_startup(c), doctest::Contains("InvalidConfig"), Error);
    c.node_counts = {0};
    CHECK_THROWS_WITH_AS(bench_startup(c), doctest::Contains("InvalidConfig"), Error);
}
