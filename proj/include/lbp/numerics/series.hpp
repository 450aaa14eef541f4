#pragma once

#include <stdexcept>
#include <vector>

namespace lbp::num {

// Coefficients a_0..a_{N-1} of exp(g(s)) for a polynomial g with g(0) = 0,
// via the recurrence n*a_n = sum_{k=1..n} k*g_k*a_{n-k}, a_0 = 1.
// g is passed as coefficients g[0], g[1], ... with g[0] required to be 0.
inline std::vector<double> power_series_exp(const std::vector<double>& g, int n_terms) {
    if (n_terms <= 0) throw std::invalid_argument("power_series_exp: n_terms must be positive");
    if (!g.empty() && g[0] != 0.0)
        throw std::invalid_argument("power_series_exp: g(0) must be 0 (factor the constant outside)");
    std::vector<double> a(static_cast<std::size_t>(n_terms), 0.0);
    a[0] = 1.0;
    const int kmax = static_cast<int>(g.size()) - 1;
    for (int n = 1; n < n_terms; ++n) {
        double s = 0.0;
        for (int k = 1; k <= std::min(n, kmax); ++k)
            s += k * g[static_cast<std::size_t>(k)] * a[static_cast<std::size_t>(n - k)];
        a[static_cast<std::size_t>(n)] = s / n;
    }
    return a;
}

} // namespace lbp::num
