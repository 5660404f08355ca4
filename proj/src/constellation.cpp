#include "fibershape/constellation.hpp"

#include "fibershape/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <complex>
#include <fstream>
#include <limits>
#include <sstream>

namespace fibershape {
namespace {

constexpr const char* kMagic = "fibershape-constellation";
constexpr int kFormatVersion = 1;

std::uint32_t gray(std::uint32_t i) { return i ^ (i >> 1); }

struct Qam2D {
    std::vector<std::complex<double>> points;  // unnormalized, odd-integer grid
    std::vector<std::uint32_t> labels;
};

Qam2D square_qam(int bits) {
    const int half = bits / 2;
    const int levels = 1 << half;
    Qam2D q;
    for (int i = 0; i < levels; ++i) {
        for (int k = 0; k < levels; ++k) {
            q.points.emplace_back(2 * i - levels + 1, 2 * k - levels + 1);
            q.labels.push_back((gray(i) << half) | gray(k));
        }
    }
    return q;
}

Qam2D rect_8qam() {
    Qam2D q;
    for (int i = 0; i < 4; ++i) {
        for (int k = 0; k < 2; ++k) {
            q.points.emplace_back(2 * i - 3, 2 * k - 1);
            q.labels.push_back((gray(i) << 1) | static_cast<std::uint32_t>(k));
        }
    }
    return q;
}

// Cross 32-QAM built from the 8x4 rectangular Gray constellation: the two
// outer columns (|I| = 7) are folded onto the top and bottom arms.
Qam2D cross_32qam() {
    Qam2D q;
    for (int i = 0; i < 8; ++i) {
        for (int k = 0; k < 4; ++k) {
            int re = 2 * i - 7;
            int im = 2 * k - 3;
            if (std::abs(re) == 7) {
                const int sign = re > 0 ? 1 : -1;
                // (7,-3)->(1,-5) (7,-1)->(3,-5) (7,1)->(1,5) (7,3)->(3,5)
                const int fold_re = (im == -3 || im == 1) ? 1 : 3;
                const int fold_im = im < 0 ? -5 : 5;
                re = sign * fold_re;
                im = fold_im;
            }
            q.points.emplace_back(re, im);
            q.labels.push_back((gray(static_cast<std::uint32_t>(i)) << 2) | gray(static_cast<std::uint32_t>(k)));
        }
    }
    return q;
}

Qam2D make_2d(int bits) {
    switch (bits) {
        case 2:
        case 4:
        case 6:
            return square_qam(bits);
        case 3:
            return rect_8qam();
        case 5:
            return cross_32qam();
        default:
            throw InvalidInput("make_pm_qam: unsupported bits per 2D symbol " + std::to_string(bits) +
                               " (supported: 2, 3, 4, 5, 6)");
    }
}

Constellation4D product(const Qam2D& q, int bits_2d) {
    Constellation4D c;
    c.bits_per_symbol = 2 * bits_2d;
    const std::size_t n = q.points.size();
    c.points.reserve(n * n);
    for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = 0; b < n; ++b) {
            c.points.push_back({q.points[a].real(), q.points[a].imag(), q.points[b].real(), q.points[b].imag()});
            c.labels.push_back((q.labels[a] << bits_2d) | q.labels[b]);
        }
    }
    c.probs.assign(n * n, 1.0 / static_cast<double>(n * n));
    return c;
}

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& tok, std::size_t line) {
    double v = 0.0;
    auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
        throw InvalidInput("constellation file line " + std::to_string(line) + ": bad number '" + tok + "'");
    }
    return v;
}

}  // namespace

double Constellation4D::average_energy() const {
    double e = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) e += probs[i] * energy(points[i]);
    return e;
}

void validate(const Constellation4D& c, bool require_unit_energy) {
    const int m = c.bits_per_symbol;
    require(m >= 1 && m <= 24, "constellation: bits per symbol must be in [1, 24], got " + std::to_string(m));
    const std::size_t expected = std::size_t{1} << m;
    require(c.points.size() == expected,
            "constellation: M = 2^m violated (m=" + std::to_string(m) + ", M=" + std::to_string(c.points.size()) + ")");
    require(c.labels.size() == expected && c.probs.size() == expected,
            "constellation: points, labels and probs must have equal length");
    std::vector<char> seen(expected, 0);
    for (auto l : c.labels) {
        require(l < expected, "constellation: label " + std::to_string(l) + " does not fit in m bits");
        require(!seen[l], "constellation: labels must be distinct (duplicate label " + std::to_string(l) + ")");
        seen[l] = 1;
    }
    double sum = 0.0;
    for (double p : c.probs) {
        require(std::isfinite(p) && p >= 0.0, "constellation: probabilities must be nonnegative and finite");
        sum += p;
    }
    require(std::abs(sum - 1.0) <= 1e-9, "constellation: probabilities must sum to 1 within 1e-9 (sum=" +
                                             format_double(sum) + ")");
    for (const auto& p : c.points) {
        for (double v : p) require(std::isfinite(v), "constellation: coordinates must be finite");
    }
    if (require_unit_energy) {
        const double e = c.average_energy();
        require(std::abs(e - 1.0) <= 1e-9, "constellation: average energy must be 1 within 1e-9 (got " +
                                               format_double(e) + ")");
    }
}

Constellation4D make_pm_qam(int m_per_2d) {
    return normalize(product(make_2d(m_per_2d), m_per_2d));
}

Constellation4D make_mb_shaped_pm64qam(double lambda) {
    require(std::isfinite(lambda) && lambda >= 0.0, "make_mb_shaped_pm64qam: lambda must be >= 0");
    Constellation4D c = product(square_qam(6), 6);
    double emin = std::numeric_limits<double>::infinity();
    for (const auto& p : c.points) emin = std::min(emin, energy(p));
    double z = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) {
        c.probs[i] = std::exp(-lambda * (energy(c.points[i]) - emin));
        z += c.probs[i];
    }
    for (auto& p : c.probs) p /= z;
    return normalize(c);
}

Constellation4D normalize(const Constellation4D& c) {
    const double e = c.average_energy();
    require(std::isfinite(e) && e > 0.0, "normalize: constellation has zero average energy");
    Constellation4D out = c;
    const double s = 1.0 / std::sqrt(e);
    for (auto& p : out.points) {
        for (double& v : p) v *= s;
    }
    return out;
}

double entropy(const Constellation4D& c) {
    double h = 0.0;
    for (double p : c.probs) {
        if (p > 0.0) h -= p * std::log2(p);
    }
    return h;
}

double min_distance(const Constellation4D& c) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < c.size(); ++i) {
        for (std::size_t j = i + 1; j < c.size(); ++j) {
            double d = 0.0;
            for (int k = 0; k < 4; ++k) {
                const double t = c.points[i][k] - c.points[j][k];
                d += t * t;
            }
            best = std::min(best, d);
        }
    }
    return std::sqrt(best);
}

Constellation4D make_baseline(const std::string& name) {
    if (name == "pm-qpsk" || name == "pmqpsk" || name == "pm4qam") return make_pm_qam(2);
    if (name == "pm8qam") return make_pm_qam(3);
    if (name == "pm16qam") return make_pm_qam(4);
    if (name == "pm32qam") return make_pm_qam(5);
    if (name == "pm64qam") return make_pm_qam(6);
    const std::string ps = "ps-pm64qam:";
    if (name.rfind(ps, 0) == 0) {
        return make_mb_shaped_pm64qam(parse_double(name.substr(ps.size()), 0));
    }
    throw InvalidInput("unknown baseline '" + name + "' (pm-qpsk, pm8qam, pm16qam, pm32qam, pm64qam, ps-pm64qam:<lambda>)");
}

std::string to_text(const Constellation4D& c) {
    validate(c);
    std::ostringstream os;
    os << kMagic << ' ' << kFormatVersion << '\n';
    os << "m " << c.bits_per_symbol << '\n';
    os << "M " << c.size() << '\n';
    os << "# re_x im_x re_y im_y label probability\n";
    for (std::size_t i = 0; i < c.size(); ++i) {
        for (double v : c.points[i]) os << format_double(v) << ' ';
        for (int b = 0; b < c.bits_per_symbol; ++b) os << c.bit(i, b);
        os << ' ' << format_double(c.probs[i]) << '\n';
    }
    return os.str();
}

Constellation4D from_text(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    std::size_t lineno = 0;
    auto next_line = [&]() -> bool {
        while (std::getline(is, line)) {
            ++lineno;
            if (!line.empty() && line[0] != '#') return true;
        }
        return false;
    };
    require(next_line(), "constellation file: empty");
    {
        std::istringstream hs(line);
        std::string magic;
        int version = 0;
        hs >> magic >> version;
        require(magic == kMagic, "constellation file: missing header '" + std::string(kMagic) + "'");
        require(version == kFormatVersion, "constellation file: unsupported version " + std::to_string(version));
    }
    auto read_field = [&](const std::string& key) -> long long {
        require(next_line(), "constellation file: missing field '" + key + "'");
        std::istringstream fs(line);
        std::string k;
        long long v = -1;
        fs >> k >> v;
        require(k == key && !fs.fail(), "constellation file line " + std::to_string(lineno) + ": expected '" + key + "'");
        return v;
    };
    Constellation4D c;
    const long long m = read_field("m");
    const long long count = read_field("M");
    require(m >= 1 && m <= 24, "constellation file: m out of range");
    require(count == (1LL << m), "constellation file: M = 2^m violated");
    c.bits_per_symbol = static_cast<int>(m);
    for (long long i = 0; i < count; ++i) {
        require(next_line(), "constellation file: expected " + std::to_string(count) + " rows, got " + std::to_string(i));
        std::istringstream rs(line);
        std::vector<std::string> tok;
        for (std::string t; rs >> t;) tok.push_back(t);
        require(tok.size() == 6, "constellation file line " + std::to_string(lineno) + ": expected 6 fields");
        Point4 p{};
        for (int k = 0; k < 4; ++k) p[k] = parse_double(tok[k], lineno);
        const std::string& bits = tok[4];
        require(static_cast<long long>(bits.size()) == m, "constellation file line " + std::to_string(lineno) +
                                                               ": label must have m bits");
        std::uint32_t label = 0;
        for (char ch : bits) {
            require(ch == '0' || ch == '1', "constellation file line " + std::to_string(lineno) + ": bad label");
            label = (label << 1) | static_cast<std::uint32_t>(ch - '0');
        }
        c.points.push_back(p);
        c.labels.push_back(label);
        c.probs.push_back(parse_double(tok[5], lineno));
    }
    require(!next_line(), "constellation file: trailing data after " + std::to_string(count) + " rows");
    validate(c);
    return c;
}

void save(const Constellation4D& c, const std::filesystem::path& path) {
    std::ofstream out(path);
    require(static_cast<bool>(out), "cannot write " + path.string());
    out << to_text(c);
    require(static_cast<bool>(out), "write failed: " + path.string());
}

Constellation4D load(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), "cannot read " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return from_text(ss.str());
}

}  // namespace fibershape
