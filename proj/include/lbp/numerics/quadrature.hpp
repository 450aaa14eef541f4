#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

namespace lbp::num {

struct QuadResult {
    double value = 0.0;
    double error_estimate = 0.0;
    long evaluations = 0;
    bool converged = true;
};

struct QuadOptions {
    double abs_tol = 1e-10;
    long max_evals = 400000;
    // Integrand behaves like (x-a)^p near a (resp. (b-x)^p near b) with
    // p in (-1,0); triggers a power substitution that removes the blow-up.
    std::optional<double> left_power{};
    std::optional<double> right_power{};
};

namespace detail {

// Gauss-Kronrod 7-15 on [a,b]; err is the usual scaled |G7-K15| estimate.
template <class F>
double quad_gk15(F&& f, double a, double b, double& err, long& evals) {
    static const double nw[8][3] = {
        {0.000000000000000, 0.417959183673469, 0.209482141084728},
        {0.405845151377397, 0.381830050505119, 0.190350578064785},
        {0.741531185599394, 0.279705391489277, 0.140653259715525},
        {0.949107912342759, 0.129484966168870, 0.063092092629979},
        {0.207784955007898, 0.0,               0.204432940075298},
        {0.586087235467691, 0.0,               0.169004726639267},
        {0.864864423359769, 0.0,               0.104790010322250},
        {0.991455371120813, 0.0,               0.022935322010529}};
    const double x0 = 0.5 * (a + b);
    const double m = b - x0;
    double y0 = f(x0);
    double g7 = nw[0][1] * y0;
    double k15 = nw[0][2] * y0;
    for (int i = 1; i < 8; ++i) {
        const double mx = m * nw[i][0];
        const double yi = f(x0 + mx) + f(x0 - mx);
        g7 += nw[i][1] * yi;
        k15 += nw[i][2] * yi;
    }
    g7 *= m;
    k15 *= m;
    evals += 15;
    err = std::abs(g7 - k15);
    err = 200.0 * err * std::sqrt(err > 0 ? err : 0.0);
    err = std::max(err, std::abs(k15) * 1e-15);
    return k15;
}

template <class F>
QuadResult adaptive_core(F&& f, double a, double b, double abs_tol, long max_evals) {
    QuadResult res;
    if (a == b) return res;
    struct Seg { double a, b, val, err; };
    std::vector<Seg> stack;
    double err0;
    double v0 = quad_gk15(f, a, b, err0, res.evaluations);
    stack.push_back({a, b, v0, err0});
    double total = 0.0, total_err = 0.0;
    while (!stack.empty()) {
        Seg s = stack.back();
        stack.pop_back();
        const double local_tol = abs_tol * std::max(1e-3, (s.b - s.a) / (b - a));
        if (s.err <= local_tol || s.err <= std::abs(s.val) * 1e-14 ||
            (s.b - s.a) < 1e-15 * std::max(std::abs(a), std::abs(b)) + 1e-300) {
            total += s.val;
            total_err += s.err;
            continue;
        }
        if (res.evaluations + 30 > max_evals) {
            total += s.val;
            total_err += s.err;
            res.converged = false;
            continue;
        }
        const double mid = 0.5 * (s.a + s.b);
        double e1, e2;
        const double v1 = quad_gk15(f, s.a, mid, e1, res.evaluations);
        const double v2 = quad_gk15(f, mid, s.b, e2, res.evaluations);
        stack.push_back({s.a, mid, v1, e1});
        stack.push_back({mid, s.b, v2, e2});
    }
    res.value = total;
    res.error_estimate = total_err;
    if (total_err > abs_tol * 8 && std::abs(total_err) > 1e-13 * std::abs(total))
        res.converged = res.converged && total_err <= abs_tol * 8;
    return res;
}

} // namespace detail

// Adaptive quadrature over a finite interval. Endpoint hints with power
// p in (-1,0) are removed by the substitution x = a + u^(1/(1+p)), which
// maps an (x-a)^p envelope to a bounded integrand.
template <class F>
QuadResult adaptive_quad(F&& f, double a, double b, QuadOptions opt = {}) {
    if (!(a <= b)) throw std::invalid_argument("adaptive_quad: requires a <= b");
    const bool sub_left = opt.left_power && *opt.left_power > -1.0 && *opt.left_power < 0.0;
    const bool sub_right = opt.right_power && *opt.right_power > -1.0 && *opt.right_power < 0.0;
    if (sub_left && sub_right) {
        const double mid = 0.5 * (a + b);
        QuadOptions ol = opt; ol.right_power.reset(); ol.abs_tol = 0.5 * opt.abs_tol;
        QuadOptions orr = opt; orr.left_power.reset(); orr.abs_tol = 0.5 * opt.abs_tol;
        QuadResult rl = adaptive_quad(f, a, mid, ol);
        QuadResult rr = adaptive_quad(f, mid, b, orr);
        return {rl.value + rr.value, rl.error_estimate + rr.error_estimate,
                rl.evaluations + rr.evaluations, rl.converged && rr.converged};
    }
    if (sub_left) {
        const double k = 1.0 / (1.0 + *opt.left_power);
        const double u1 = std::pow(b - a, 1.0 / k);
        auto g = [&](double u) { return f(a + std::pow(u, k)) * k * std::pow(u, k - 1.0); };
        return detail::adaptive_core(g, 0.0, u1, opt.abs_tol, opt.max_evals);
    }
    if (sub_right) {
        const double k = 1.0 / (1.0 + *opt.right_power);
        const double u1 = std::pow(b - a, 1.0 / k);
        auto g = [&](double u) { return f(b - std::pow(u, k)) * k * std::pow(u, k - 1.0); };
        return detail::adaptive_core(g, 0.0, u1, opt.abs_tol, opt.max_evals);
    }
    return detail::adaptive_core(f, a, b, opt.abs_tol, opt.max_evals);
}

// Integral over [a, infinity) by geometrically growing segments. Stops when
// the geometric extrapolation of the remaining tail drops below tolerance;
// suited to integrands with exponential or power-law (p < -1) decay.
template <class F>
QuadResult quad_to_infinity(F&& f, double a, QuadOptions opt = {}, double first_len = 1.0) {
    QuadResult res;
    double lo = a;
    double len = first_len;
    double prev_abs = std::numeric_limits<double>::infinity();
    const int max_segments = 220;
    for (int k = 0; k < max_segments; ++k) {
        QuadOptions seg_opt;
        seg_opt.abs_tol = opt.abs_tol * 0.25;
        seg_opt.max_evals = opt.max_evals;
        QuadResult seg = adaptive_quad(f, lo, lo + len, seg_opt);
        res.value += seg.value;
        res.error_estimate += seg.error_estimate;
        res.evaluations += seg.evaluations;
        res.converged = res.converged && seg.converged;
        const double cur_abs = std::abs(seg.value);
        if (cur_abs < 0.25 * opt.abs_tol && prev_abs < 0.25 * opt.abs_tol) {
            // tail below tolerance for two consecutive segments
            res.error_estimate += cur_abs + prev_abs;
            return res;
        }
        if (k > 2 && prev_abs > 0.0 && cur_abs < prev_abs) {
            const double ratio = cur_abs / prev_abs;
            const double tail = cur_abs * ratio / (1.0 - ratio);
            if (tail < 0.5 * opt.abs_tol && cur_abs < opt.abs_tol) {
                res.error_estimate += tail;
                return res;
            }
        }
        prev_abs = cur_abs;
        lo += len;
        len *= 2.0;
    }
    res.converged = false;
    return res;
}

} // namespace lbp::num
