#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

namespace lbp::num {

struct MeanErr {
    double mean = 0.0;
    double std_error = 0.0;
    std::size_t n = 0;
};

inline MeanErr mean_and_stderr(const std::vector<double>& x) {
    MeanErr r;
    r.n = x.size();
    if (x.empty()) return r;
    double s = 0;
    for (double v : x) s += v;
    r.mean = s / static_cast<double>(x.size());
    double ss = 0;
    for (double v : x) ss += (v - r.mean) * (v - r.mean);
    if (x.size() > 1)
        r.std_error = std::sqrt(ss / (static_cast<double>(x.size()) * (static_cast<double>(x.size()) - 1.0)));
    return r;
}

// Two-sample Kolmogorov-Smirnov distance (handles ties and point masses).
inline double ks_two_sample(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("ks_two_sample: empty sample");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    return d;
}

// One-sample KS against a cdf evaluated at the sample points.
inline double ks_one_sample(std::vector<double> x, const std::function<double(double)>& cdf) {
    if (x.empty()) throw std::invalid_argument("ks_one_sample: empty sample");
    std::sort(x.begin(), x.end());
    const double n = static_cast<double>(x.size());
    double d = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double c = cdf(x[i]);
        d = std::max(d, std::abs(static_cast<double>(i + 1) / n - c));
        d = std::max(d, std::abs(c - static_cast<double>(i) / n));
    }
    return d;
}

// Total-variation distance between two sub-probability vectors; mass beyond
// the shorter vector counts fully.
inline double tv_distance(const std::vector<double>& p, const std::vector<double>& q) {
    const std::size_t n = std::max(p.size(), q.size());
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double pi = i < p.size() ? p[i] : 0.0;
        const double qi = i < q.size() ? q[i] : 0.0;
        s += std::abs(pi - qi);
    }
    return 0.5 * s;
}

inline double pearson_correlation(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2)
        throw std::invalid_argument("pearson_correlation: size mismatch");
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) { mx += x[i]; my += y[i]; }
    mx /= n; my /= n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    return sxy / std::sqrt(sxx * syy);
}

} // namespace lbp::num
