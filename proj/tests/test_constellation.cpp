#include <doctest.h>

#include "fibershape/constellation.hpp"
#include "fibershape/error.hpp"

#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

using namespace fibershape;

namespace {

int hamming(std::uint32_t a, std::uint32_t b) { return std::popcount(a ^ b); }

double dist2(const Point4& a, const Point4& b) {
    double d = 0.0;
    for (int i = 0; i < 4; ++i) d += (a[i] - b[i]) * (a[i] - b[i]);
    return d;
}

std::string replace_line(const std::string& text, int line_no, const std::string& with) {
    std::istringstream in(text);
    std::string out, line;
    int n = 0;
    while (std::getline(in, line)) {
        out += (n++ == line_no ? with : line) + "\n";
    }
    return out;
}

}  // namespace

TEST_CASE("pm-qpsk geometry and probabilities") {
    const auto c = make_pm_qam(2);
    CHECK(c.size() == 16);
    CHECK(c.bits_per_symbol == 4);
    for (std::size_t i = 0; i < c.size(); ++i) {
        CHECK(c.probs[i] == doctest::Approx(1.0 / 16).epsilon(1e-15));
        CHECK(energy(c.points[i]) == doctest::Approx(1.0).epsilon(1e-12));
        for (double v : c.points[i]) CHECK(std::abs(v) == doctest::Approx(0.5).epsilon(1e-12));
    }
}

TEST_CASE("pm-qam sizes and invariants") {
    const std::map<int, int> bits{{2, 4}, {3, 6}, {4, 8}, {5, 10}, {6, 12}};
    for (auto [m2, m] : bits) {
        const auto c = make_pm_qam(m2);
        CHECK(c.bits_per_symbol == m);
        CHECK(c.size() == (std::size_t{1} << m));
        CHECK_NOTHROW(validate(c, true));
        CHECK(c.average_energy() == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(entropy(c) == doctest::Approx(m).epsilon(1e-12));
    }
    CHECK_THROWS_AS(make_pm_qam(1), InvalidInput);
    CHECK_THROWS_AS(make_pm_qam(7), InvalidInput);
}

TEST_CASE("square pm-qam nearest neighbours differ in exactly one bit") {
    for (int m2 : {2, 4, 6}) {
        const auto c = make_pm_qam(m2);
        const double dmin = min_distance(c);
        int pairs = 0;
        for (std::size_t i = 0; i < c.size(); ++i) {
            for (std::size_t j = i + 1; j < c.size(); ++j) {
                if (std::abs(std::sqrt(dist2(c.points[i], c.points[j])) - dmin) < 1e-9) {
                    ++pairs;
                    CHECK(hamming(c.labels[i], c.labels[j]) == 1);
                }
            }
        }
        CHECK(pairs > 0);
    }
}

TEST_CASE("cross 32-qam layout: energy levels and near-Gray labels") {
    const auto c = make_pm_qam(5);
    // X polarization only: the 32 distinct 2D points
    std::set<std::pair<long, long>> pts;
    std::map<std::pair<long, long>, std::uint32_t> label_of;
    const double unit = std::abs(c.points[0][0]) / std::abs(std::round(c.points[0][0] / min_distance(c) * 2.0));
    for (std::size_t i = 0; i < c.size(); ++i) {
        const std::pair<long, long> p{std::lround(c.points[i][0] / unit), std::lround(c.points[i][1] / unit)};
        pts.insert(p);
        label_of[p] = c.labels[i] >> 5;
    }
    REQUIRE(pts.size() == 32);
    std::map<long, int> levels;
    for (auto [a, b] : pts) {
        CHECK(std::abs(a) % 2 == 1);
        CHECK(std::abs(b) % 2 == 1);
        CHECK(std::max(std::abs(a), std::abs(b)) <= 5);
        CHECK(!(std::abs(a) == 5 && std::abs(b) == 5));
        ++levels[a * a + b * b];
    }
    CHECK(levels == std::map<long, int>{{2, 4}, {10, 8}, {18, 4}, {26, 8}, {34, 8}});
    double total = 0.0;
    int n = 0;
    for (auto [p, l] : label_of) {
        for (auto [q, k] : label_of) {
            const long d = (p.first - q.first) * (p.first - q.first) + (p.second - q.second) * (p.second - q.second);
            if (d == 4) {
                total += hamming(l, k);
                ++n;
            }
        }
    }
    CHECK(total / n == doctest::Approx(1.154).epsilon(1e-3));
}

TEST_CASE("maxwell-boltzmann pm-64qam") {
    const auto u = make_mb_shaped_pm64qam(0.0);
    for (double p : u.probs) CHECK(p == doctest::Approx(1.0 / 4096).epsilon(1e-12));

    const double lambda = 0.05;
    const auto c = make_mb_shaped_pm64qam(lambda);
    CHECK_NOTHROW(validate(c, true));
    double emin = 1e300;
    for (const auto& p : c.points) emin = std::min(emin, energy(p));
    // the lowest-energy 4D point is (±1, ±1, ±1, ±1) on the integer grid: E = 4
    std::vector<double> w(c.size());
    double z = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) {
        const double e_grid = 4.0 * energy(c.points[i]) / emin;
        w[i] = std::exp(-lambda * e_grid);
        z += w[i];
    }
    for (std::size_t i = 0; i < c.size(); ++i) CHECK(c.probs[i] == doctest::Approx(w[i] / z).epsilon(1e-10));

    const auto big = make_mb_shaped_pm64qam(5.0);
    double big_min = 1e300;
    for (const auto& p : big.points) big_min = std::min(big_min, energy(p));
    double inner = 0.0;
    int inner_count = 0;
    for (std::size_t i = 0; i < big.size(); ++i) {
        if (energy(big.points[i]) < big_min * 1.0001) {
            inner += big.probs[i];
            ++inner_count;
        }
    }
    CHECK(inner_count == 16);
    CHECK(inner > 0.999);

    double last = entropy(u);
    for (double l : {0.01, 0.02, 0.05, 0.1, 0.3, 1.0}) {
        const double h = entropy(make_mb_shaped_pm64qam(l));
        CHECK(h <= last + 1e-12);
        last = h;
    }
    CHECK_THROWS_AS(make_mb_shaped_pm64qam(-1.0), InvalidInput);
}

TEST_CASE("normalize") {
    const auto c = make_pm_qam(4);
    auto doubled = c;
    for (auto& p : doubled.points) {
        for (auto& v : p) v *= 2.0;
    }
    CHECK(normalize(doubled) == normalize(c));
    const auto once = normalize(c);
    const auto twice = normalize(once);
    for (std::size_t i = 0; i < c.size(); ++i) {
        for (int d = 0; d < 4; ++d) CHECK(twice.points[i][d] == doctest::Approx(once.points[i][d]).epsilon(1e-12));
    }
    Constellation4D two;
    two.bits_per_symbol = 1;
    two.points = {{2, 0, 0, 0}, {0, 0, 0, 0}};
    two.labels = {0, 1};
    two.probs = {0.5, 0.5};
    const auto n = normalize(two);
    CHECK(n.points[0][0] == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
    auto zero = two;
    zero.points[0] = {0, 0, 0, 0};
    CHECK_THROWS_AS(normalize(zero), InvalidInput);
}

TEST_CASE("entropy") {
    CHECK(entropy(make_pm_qam(5)) == doctest::Approx(10.0).epsilon(1e-12));
    Constellation4D c;
    c.bits_per_symbol = 2;
    c.points = {{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}};
    c.labels = {0, 1, 2, 3};
    c.probs = {0.5, 0.25, 0.25, 0.0};
    CHECK(entropy(c) == doctest::Approx(1.5).epsilon(1e-15));
    c.probs = {0.0, 1.0, 0.0, 0.0};
    CHECK(entropy(c) == 0.0);
}

TEST_CASE("file round trip and rejection") {
    const auto dir = std::filesystem::temp_directory_path() / "fibershape_constellation_test";
    std::filesystem::create_directories(dir);
    for (const auto& c : {make_pm_qam(5), make_mb_shaped_pm64qam(0.037)}) {
        save(c, dir / "c.txt");
        CHECK(load(dir / "c.txt") == c);
    }
    const std::string good = to_text(make_pm_qam(2));
    CHECK(from_text(good) == make_pm_qam(2));

    // probabilities scaled to sum 0.9
    {
        auto c = make_pm_qam(2);
        for (auto& p : c.probs) p *= 0.9;
        try {
            from_text(to_text(c));
            FAIL("accepted probs summing to 0.9");
        } catch (const InvalidInput& e) {
            CHECK(std::string(e.what()).find("sum to 1") != std::string::npos);
        }
    }
    // duplicate label: second row reuses the first row's label
    {
        auto c = make_pm_qam(2);
        c.labels[1] = c.labels[0];
        try {
            from_text(to_text(c));
            FAIL("accepted duplicate labels");
        } catch (const InvalidInput& e) {
            CHECK(std::string(e.what()).find("distinct") != std::string::npos);
        }
    }
    CHECK_THROWS_AS(from_text(replace_line(good, 0, "not-a-constellation 1")), InvalidInput);
    CHECK_THROWS_AS(from_text(replace_line(good, 2, "M 15")), InvalidInput);
    CHECK_THROWS_AS(from_text(replace_line(good, 4, "0.5 0.5 0.5 abc 0000 0.0625")), InvalidInput);
    CHECK_THROWS_AS(from_text(good + "0 0 0 0 0000 0\n"), InvalidInput);
    std::filesystem::remove_all(dir);
}

TEST_CASE("baselines by name") {
    CHECK(make_baseline("pm-qpsk") == make_pm_qam(2));
    CHECK(make_baseline("pm32qam") == make_pm_qam(5));
    CHECK(make_baseline("ps-pm64qam:0.05") == make_mb_shaped_pm64qam(0.05));
    CHECK_THROWS_AS(make_baseline("pm128qam"), InvalidInput);
}
