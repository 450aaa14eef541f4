#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "lbp/mechanism.hpp"
#include "lbp/mechanism_kernel.hpp"
#include "lbp/numerics/ode.hpp"
#include "lbp/numerics/quadrature.hpp"

namespace lbp {

// r(s), the forcing of the Riccati equation y' - y^2 = -q r^2 on (0, xi).
inline double r_func(const DiscreteMechanism& mech, double s) {
    ThetaPhiKernel k(mech);
    if (!(s > 0) || s >= k.xi_value()) throw std::invalid_argument("r_func: need s in (0, xi)");
    return std::sqrt(k.r_squared(s));
}
inline double r_func(const LevyMechanism& mech, double s) {
    ThetaPhiKernel k(mech);
    if (!(s > 0)) throw std::invalid_argument("r_func: need s > 0");
    return std::sqrt(k.r_squared(s));
}

struct RiccatiOptions {
    double tol = 1e-7;        // shooting convergence (sup-norm on compare grid)
    double tol_res = 1e-6;    // residual bound on the reported grid
    double tol_w = 1e-8;      // terminal decay threshold for w
    double ode_rel_tol = 1e-11;
    double ode_abs_tol = 1e-13;
    double kernel_tol = 1e-13;
    int k_max = 40;
    double T0 = 0.0;          // first shooting endpoint; 0 = automatic
    double t_growth = 2.0;    // schedule factor (doubling / geometric approach)
    int compare_points = 120;
};

// Grid representation of w_q with its cumulative integral W and the shooting
// diagnostics. The internal dense solution (u-coordinate, logarithmic in s
// near both endpoints) backs interpolation beyond the reported grid.
struct RiccatiSolution {
    double q = 0;
    Setting setting = Setting::continuous;
    double xi = 0;

    std::vector<double> grid, w, W; // reported grid in (0, xi)
    double max_residual = 0;
    double W_total = 0;             // int_0^xi w_q, endpoint corrections included
    double W0_correction = 0;       // int_0^{s_min} w_q (power-law extrapolation)
    double W_tail = 0;              // int_{s_hi}^xi w_q (asymptotic tail)
    std::vector<double> shooting_T;
    std::vector<double> shooting_delta;

    std::shared_ptr<const ThetaPhiKernel> kernel;

    // dense data over the full solve span [s_min, s_hi]
    std::vector<double> s_nodes, u_nodes, w_nodes, W_nodes;
    num::OdeSolution dense; // in the u-coordinate, integrated backward
    double s_min = 0, s_hi = 0;
    bool xi_finite = false;

    double u_of_s(double s) const {
        return xi_finite ? std::log(s / (xi - s)) : std::log(s);
    }
    double s_of_u(double u) const {
        return xi_finite ? xi / (1.0 + std::exp(-u)) : std::exp(u);
    }
    double ds_du(double s) const { return xi_finite ? s * (xi - s) / xi : s; }

    double w_at(double s) const {
        if (s >= s_hi) return dense(u_of_s(s_hi));
        if (s <= s_min) return dense(u_of_s(s_min));
        return dense(u_of_s(s));
    }

    // W(t) = int_0^t w_q for t within the solve span.
    double W_at(double t) const {
        if (t <= s_min) {
            // below the solve span W is bounded by the endpoint correction
            return W0_correction * (t / s_min);
        }
        if (t >= s_hi) return W0_correction + W_nodes.back();
        const double u = u_of_s(t);
        auto it = std::upper_bound(u_nodes.begin(), u_nodes.end(), u);
        std::size_t i = static_cast<std::size_t>(std::distance(u_nodes.begin(), it));
        if (i == 0) return W0_correction;
        --i;
        // 5-point Gauss-Legendre on the dense interpolant within the cell
        static const double gx[5] = {-0.9061798459386640, -0.5384693101056831, 0.0,
                                     0.5384693101056831, 0.9061798459386640};
        static const double gw[5] = {0.2369268850561891, 0.4786286704993665,
                                     0.5688888888888889, 0.4786286704993665,
                                     0.2369268850561891};
        const double ua = u_nodes[i], ub = u;
        const double mid = 0.5 * (ua + ub), half = 0.5 * (ub - ua);
        double acc = 0;
        for (int g = 0; g < 5; ++g) {
            const double ug = mid + half * gx[g];
            const double sg = s_of_u(ug);
            acc += gw[g] * dense(ug) * ds_du(sg);
        }
        return W0_correction + W_nodes[i] + half * acc;
    }
};

namespace riccati_detail {

// Asymptotic density of int w beyond the solve span, expressed in the
// mechanism coordinate: g ~ g0 + g1 with g0 = q/psi. Valid where the grid
// was cut because w dropped below tol_w.
inline double tail_g(const ThetaPhiKernel& k, double q, double v) {
    const double c = k.competition();
    if (k.setting() == Setting::continuous) {
        const auto& lm = k.levy();
        const double ps = lm.psi(v);
        const double psp = lm.psi_prime(v);
        const double g0 = q / ps;
        const double g1 = -c * v * q * (psp + q) / (ps * ps * ps);
        return g0 + g1;
    }
    const auto& dm = k.discrete();
    const double ps = dm.psi(v);
    const double psp = dm.psi_prime(v);
    const double g0 = q / ps;
    const double g1 = -c * v * (1.0 - v) * q * (q - psp) / (ps * ps * ps);
    return g0 + g1;
}

// int_{s}^{xi} w_q via the coordinate change back to the mechanism variable.
// Continuous: int_{phi(s)}^{inf} g; discrete with xi = inf (d >= c):
// int_0^{phi(s)} g; discrete with finite xi: sqrt(q) * envelope integral.
inline double w_tail_integral(const ThetaPhiKernel& k, double q, double s, double tol) {
    if (k.setting() == Setting::continuous) {
        const double lam = k.phi(s);
        num::QuadOptions opt;
        opt.abs_tol = tol;
        auto qd = num::quad_to_infinity([&](double u) { return tail_g(k, q, u); }, lam, opt,
                                        std::max(1.0, lam));
        return qd.value;
    }
    const auto& dm = k.discrete();
    if (dm.d() >= dm.c()) {
        const double v = k.phi(s);
        num::QuadOptions opt;
        opt.abs_tol = tol;
        auto qd = num::adaptive_quad([&](double u) { return tail_g(k, q, u); }, 0.0, v, opt);
        return qd.value;
    }
    return std::sqrt(q) * k.r_integral_to_xi(s);
}

// int_s^{xi} r^2, used to bound inner-integral truncation in the transforms.
inline double r2_tail_integral(const ThetaPhiKernel& k, double s, double tol) {
    const double c = k.competition();
    if (k.setting() == Setting::continuous) {
        const double lam = k.phi(s);
        num::QuadOptions opt;
        opt.abs_tol = tol;
        auto qd = num::quad_to_infinity(
            [&](double u) { return std::exp(-k.m(u)) / (c * u); }, lam, opt, std::max(1.0, lam));
        return qd.value;
    }
    const auto& dm = k.discrete();
    const double v = k.phi(s);
    num::QuadOptions opt;
    opt.abs_tol = tol;
    if (dm.d() > 0 && dm.d() < dm.c()) opt.left_power = dm.d() / dm.c() - 1.0;
    auto qd = num::adaptive_quad(
        [&](double u) { return u > 0 ? std::exp(-dm.m(u)) / (c * u * (1.0 - u)) : 0.0; }, 0.0,
        v, opt);
    return qd.value;
}

// Automatic first shooting endpoint: the point where the asymptotic w is
// safely below the terminal threshold.
inline double auto_T0(const ThetaPhiKernel& k, double q, double tol_w) {
    const double target = 0.25 * tol_w;
    if (k.setting() == Setting::continuous) {
        double lam = 1.0;
        for (int i = 0; i < 200; ++i) {
            const double ps = k.levy().psi(lam);
            if (ps > 0) {
                const double w_est = std::exp(-k.m(lam)) * q / ps;
                if (w_est < target) break;
            }
            lam *= 1.5;
            if (lam > 1e6) break;
        }
        return k.theta(lam);
    }
    const auto& dm = k.discrete();
    if (dm.d() >= dm.c()) {
        double v = 0.5;
        for (int i = 0; i < 900; ++i) {
            const double w_est = std::exp(-dm.m(v)) * q / dm.psi(v);
            if (w_est < target) break;
            v *= 0.5;
            if (v < 1e-280) break;
        }
        return k.theta(v);
    }
    // finite xi: w(t) ~ q int_t^xi r^2 near the endpoint. For d < c/2 the
    // decay exponent d/(c-d) is below 1 and the tol_w level may sit closer
    // to xi than doubles can represent; the gap is floored accordingly.
    const double xiv = k.xi_value();
    double gap = 0.25 * xiv;
    for (int i = 0; i < 60; ++i) {
        const double w_est = q * r2_tail_integral(k, xiv - gap, 0.1 * target);
        if (w_est < target) break;
        gap *= 0.5;
        if (gap < 2e-8 * xiv) break;
    }
    return xiv - gap;
}

} // namespace riccati_detail

// Backward-shooting construction of the distinguished Riccati solution:
// integrate y' = y^2 - q r^2 from y(T) = 0 toward 0+, push T toward xi until
// the solution stops moving on a fixed comparison grid, and assert that the
// family of shots increases monotonically as T grows.
inline RiccatiSolution solve_wq(std::shared_ptr<const ThetaPhiKernel> kernel, double q,
                                const RiccatiOptions& opt = {}) {
    if (!(q > 0)) throw std::invalid_argument("solve_wq: need q > 0");
    const ThetaPhiKernel& k = *kernel;
    if (k.setting() == Setting::discrete) {
        if (!(k.discrete().d() > 0))
            throw std::domain_error("solve_wq: discrete setting requires d > 0");
    } else if (k.levy().is_subordinator()) {
        throw std::domain_error("solve_wq: continuous setting requires a non-subordinator");
    }

    RiccatiSolution sol;
    sol.q = q;
    sol.setting = k.setting();
    sol.xi = k.xi_value();
    sol.xi_finite = std::isfinite(sol.xi);
    sol.kernel = kernel;

    // lower end of the solve span: envelope integral below tol_w
    // (int_0^{s_min} w <= sqrt(q) int_0^{s_min} r ~ 2 sqrt(q s_min / c))
    const double c = k.competition();
    double s_min = 0.2 * c * (opt.tol_w * opt.tol_w) / q;
    s_min = std::max(s_min, 1e-280);

    const double T0 = opt.T0 > 0 ? opt.T0 : riccati_detail::auto_T0(k, q, opt.tol_w);
    if (sol.xi_finite && !(T0 < sol.xi))
        throw std::invalid_argument("solve_wq: T0 must lie below xi");
    s_min = std::min(s_min, 1e-3 * T0);

    auto r2 = [&](double s) { return k.r_squared(s); };
    auto u_of_s = [&](double s) {
        return sol.xi_finite ? std::log(s / (sol.xi - s)) : std::log(s);
    };
    auto s_of_u = [&](double u) {
        return sol.xi_finite ? sol.xi / (1.0 + std::exp(-u)) : std::exp(u);
    };
    auto ds_du = [&](double s) { return sol.xi_finite ? s * (sol.xi - s) / sol.xi : s; };

    // comparison grid, logarithmic in s over the converged bulk
    const double cmp_lo = std::max(2.0 * s_min, 1e-12 * T0);
    const double cmp_hi = 0.9 * T0;
    std::vector<double> cmp(static_cast<std::size_t>(opt.compare_points));
    for (int i = 0; i < opt.compare_points; ++i) {
        const double f = static_cast<double>(i) / (opt.compare_points - 1);
        cmp[static_cast<std::size_t>(i)] = cmp_lo * std::pow(cmp_hi / cmp_lo, f);
    }

    const double u_min = u_of_s(s_min);
    const double sqq = std::sqrt(q);

    auto shoot = [&](double T) {
        auto field = [&](double u, double y) {
            const double s = s_of_u(u);
            return ds_du(s) * (y * y - q * r2(s));
        };
        num::OdeOptions oo;
        oo.rel_tol = opt.ode_rel_tol;
        oo.abs_tol = opt.ode_abs_tol;
        oo.h_max = 0.04; // keeps the dense-output derivative at residual accuracy
        oo.guard = [&](double u, double y) {
            const double s = s_of_u(u);
            const double env = sqq * std::sqrt(r2(s));
            if (y < -0.5 * env - 1e-8) return false;      // entering the repelling zone
            if (y > 1e4 * (1.0 + env)) return false;      // runaway blow-up
            return true;
        };
        auto ode = num::ode_solve(field, u_of_s(T), 0.0, u_min, oo);
        if (!ode.completed)
            throw std::runtime_error("solve_wq: backward integration failed (" + ode.fail_reason +
                                     ") at T=" + std::to_string(T));
        return ode;
    };

    double T_prev = T0;
    num::OdeSolution ode_prev = shoot(T0);
    sol.shooting_T.push_back(T0);
    std::vector<double> prev_vals(cmp.size());
    for (std::size_t i = 0; i < cmp.size(); ++i) prev_vals[i] = ode_prev(u_of_s(cmp[i]));

    bool converged = false;
    double T_cur = T0;
    num::OdeSolution ode_cur;
    // closest representable approach to a finite xi in the logit coordinate
    const double gap_floor = sol.xi_finite ? 1e-11 * sol.xi : 0.0;
    for (int kk = 1; kk <= opt.k_max; ++kk) {
        T_cur = sol.xi_finite
                    ? sol.xi - std::max(gap_floor, (sol.xi - T0) * std::pow(opt.t_growth, -kk))
                    : T0 * std::pow(opt.t_growth, kk);
        ode_cur = shoot(T_cur);
        sol.shooting_T.push_back(T_cur);
        double sup = 0;
        double monotone_slack = 50.0 * (opt.ode_abs_tol + opt.ode_rel_tol);
        for (std::size_t i = 0; i < cmp.size(); ++i) {
            const double cur = ode_cur(u_of_s(cmp[i]));
            if (cur < prev_vals[i] - monotone_slack * (1.0 + std::abs(prev_vals[i])))
                throw std::runtime_error("solve_wq: successive shots are not monotone increasing "
                                         "(integration fault)");
            // scaled sup-norm: w spans many orders of magnitude across the grid
            sup = std::max(sup, std::abs(cur - prev_vals[i]) / (1.0 + std::abs(prev_vals[i])));
            prev_vals[i] = cur;
        }
        sol.shooting_delta.push_back(sup);
        const double w_at_prev_T = ode_cur(u_of_s(T_prev));
        // terminal decay either reaches tol_w or the representable limit of
        // the domain end (d < c/2: w ~ gap^{d/(c-d)} cannot meet tol_w in
        // doubles; the envelope bound keeps the W remainder accounted for)
        const bool terminal_ok =
            w_at_prev_T < opt.tol_w ||
            (sol.xi_finite && sol.xi - T_cur <= 1.5 * gap_floor);
        if (sup < opt.tol && terminal_ok) {
            converged = true;
            break;
        }
        T_prev = T_cur;
        ode_prev = ode_cur;
    }
    if (!converged)
        throw std::runtime_error("solve_wq: shooting did not converge within k_max refinements");

    // Reported span: [first node where the envelope is moderate, T_prev],
    // where T_prev is the last endpoint certified by the following shot.
    sol.dense = ode_cur;
    sol.s_min = s_min;
    sol.s_hi = T_prev;

    // collect dense nodes ascending in u
    std::vector<double> un;
    for (auto it = sol.dense.steps.rbegin(); it != sol.dense.steps.rend(); ++it)
        un.push_back(it->t0 + it->h);
    un.push_back(sol.dense.steps.front().t0); // = u at T_cur
    const double u_hi = u_of_s(sol.s_hi);
    std::erase_if(un, [&](double u) { return u > u_hi; });
    un.push_back(u_hi);
    std::sort(un.begin(), un.end());
    un.erase(std::unique(un.begin(), un.end()), un.end());

    sol.u_nodes = un;
    sol.s_nodes.resize(un.size());
    sol.w_nodes.resize(un.size());
    for (std::size_t i = 0; i < un.size(); ++i) {
        sol.s_nodes[i] = s_of_u(un[i]);
        sol.w_nodes[i] = sol.dense(un[i]);
    }

    // cumulative W by per-cell Gauss-Legendre on the dense interpolant
    sol.W_nodes.assign(un.size(), 0.0);
    static const double gx[5] = {-0.9061798459386640, -0.5384693101056831, 0.0,
                                 0.5384693101056831, 0.9061798459386640};
    static const double gw[5] = {0.2369268850561891, 0.4786286704993665, 0.5688888888888889,
                                 0.4786286704993665, 0.2369268850561891};
    for (std::size_t i = 1; i < un.size(); ++i) {
        const double ua = un[i - 1], ub = un[i];
        const double mid = 0.5 * (ua + ub), half = 0.5 * (ub - ua);
        double acc = 0;
        for (int g = 0; g < 5; ++g) {
            const double ug = mid + half * gx[g];
            const double sg = s_of_u(ug);
            acc += gw[g] * sol.dense(ug) * ds_du(sg);
        }
        sol.W_nodes[i] = sol.W_nodes[i - 1] + half * acc;
    }

    // endpoint correction below s_min: local power-law extrapolation capped by
    // the envelope integral sqrt(q) int_0^{s_min} r
    {
        const double w0 = sol.w_nodes.front();
        const double w1 = sol.w_nodes[std::min<std::size_t>(4, sol.w_nodes.size() - 1)];
        const double s0 = sol.s_nodes.front();
        const double s1 = sol.s_nodes[std::min<std::size_t>(4, sol.s_nodes.size() - 1)];
        double p = 0.5;
        if (s1 > s0 && w0 > 0 && w1 > 0) p = std::log(w0 / w1) / std::log(s1 / s0);
        p = std::clamp(p, 0.0, 0.95);
        const double extrap = s0 * w0 / (1.0 - p);
        const double bound = sqq * k.r_integral_from_0(s0);
        sol.W0_correction = std::min(extrap, bound);
    }

    sol.W_tail = riccati_detail::w_tail_integral(k, q, sol.s_hi, 0.01 * opt.tol_w);
    sol.W_total = sol.W0_correction + sol.W_nodes.back() + sol.W_tail;

    // reported grid: trim both ends to where the forcing is moderate, so the
    // residual check below is meaningful in absolute terms (for d < c/2 the
    // forcing blows up at the finite endpoint as well as at 0)
    const double r2_cap = 2.0e4 / q;
    // near a finite xi the residual also divides the dense-output derivative
    // by ds/du ~ gap, so the grid stops where the Jacobian gets too small
    const double ds_floor = sol.xi_finite ? 1e-5 * sol.xi : 0.0;
    std::size_t first = 0;
    while (first + 8 < sol.s_nodes.size() && r2(sol.s_nodes[first]) > r2_cap) ++first;
    std::size_t last = sol.s_nodes.size();
    while (last > first + 8 && (r2(sol.s_nodes[last - 1]) > r2_cap ||
                                ds_du(sol.s_nodes[last - 1]) < ds_floor))
        --last;
    sol.grid.assign(sol.s_nodes.begin() + static_cast<long>(first),
                    sol.s_nodes.begin() + static_cast<long>(last));
    sol.w.assign(sol.w_nodes.begin() + static_cast<long>(first),
                 sol.w_nodes.begin() + static_cast<long>(last));
    sol.W.resize(sol.grid.size());
    for (std::size_t i = 0; i < sol.grid.size(); ++i)
        sol.W[i] = sol.W0_correction + sol.W_nodes[first + i];

    // residual via the dense-output derivative at cell midpoints
    double max_res = 0;
    for (std::size_t i = first; i + 1 < last && i + 1 < sol.u_nodes.size(); ++i) {
        const double um = 0.5 * (sol.u_nodes[i] + sol.u_nodes[i + 1]);
        const double sm = s_of_u(um);
        const double wm = sol.dense(um);
        const double dw_du = sol.dense.derivative(um);
        const double resid = dw_du / ds_du(sm) - (wm * wm - q * r2(sm));
        max_res = std::max(max_res, std::abs(resid));
    }
    sol.max_residual = max_res;
    return sol;
}

inline RiccatiSolution solve_wq(const DiscreteMechanism& mech, double q,
                                const RiccatiOptions& opt = {}) {
    return solve_wq(std::make_shared<const ThetaPhiKernel>(mech, opt.kernel_tol), q, opt);
}
inline RiccatiSolution solve_wq(const LevyMechanism& mech, double q,
                                const RiccatiOptions& opt = {}) {
    return solve_wq(std::make_shared<const ThetaPhiKernel>(mech, opt.kernel_tol), q, opt);
}

// W(upper) = int_0^upper w_q. upper may be anywhere in the solve span, or xi
// (also +inf) for the full integral.
inline double integral_wq(const RiccatiSolution& sol, double upper) {
    if (upper < 0) throw std::invalid_argument("integral_wq: need upper >= 0");
    if (upper == sol.xi || std::isinf(upper)) return sol.W_total;
    if (upper > sol.s_hi) {
        if (upper > sol.xi) throw std::invalid_argument("integral_wq: upper beyond xi");
        // between the grid end and xi: subtract the remaining tail
        const double tail_from_upper =
            riccati_detail::w_tail_integral(*sol.kernel, sol.q, upper, 1e-12);
        return sol.W_total - tail_from_upper;
    }
    return sol.W_at(upper);
}

namespace riccati_detail {

inline void require_absorption(const RiccatiSolution& sol) {
    if (sol.setting == Setting::discrete) {
        if (!(sol.kernel->discrete().d() > 0))
            throw std::domain_error("transform requires the absorption regime (discrete d > 0)");
        return;
    }
    if (absorption_regime(sol.kernel->levy()) != AbsorptionRegime::extinction_with_absorption)
        throw std::domain_error(
            "transform requires the absorption regime (continuous: Gaussian part present)");
}

// exp(-x * phi(s)) in the continuous setting; phi(s)^x (generating-function
// argument) in the discrete one. Both vanish as s -> xi and make the
// x -> infinity limits of the transforms collapse to the entrance-law forms.
inline double initial_weight(const ThetaPhiKernel& k, double x, double s) {
    if (std::isinf(x)) return 0.0;
    if (k.setting() == Setting::continuous) return std::exp(-x * k.phi(s));
    const double v = k.phi(s);
    return std::pow(v, x);
}

} // namespace riccati_detail

// E_inf(exp(-q T_a)) = exp(-int_0^xi w_q).
inline double laplace_Ta_infinity(const RiccatiSolution& sol) {
    riccati_detail::require_absorption(sol);
    return std::exp(-sol.W_total);
}

inline double laplace_Ta_infinity(const DiscreteMechanism& mech, double q,
                                  const RiccatiOptions& opt = {}) {
    return laplace_Ta_infinity(solve_wq(mech, q, opt));
}
inline double laplace_Ta_infinity(const LevyMechanism& mech, double q,
                                  const RiccatiOptions& opt = {}) {
    return laplace_Ta_infinity(solve_wq(mech, q, opt));
}

// Entrance law from infinity: E_inf(exp(-lam Z_tau)) = exp(-W(theta(lam))),
// tau ~ Exp(q) independent. In the discrete setting the argument enters the
// generating function at s = e^{-lam}, so theta(e^{-lam}) plays theta(lam).
inline double entrance_law(const RiccatiSolution& sol, double lam) {
    if (lam < 0) throw std::invalid_argument("entrance_law: need lam >= 0");
    const ThetaPhiKernel& k = *sol.kernel;
    if (sol.setting == Setting::continuous) {
        if (k.levy().is_subordinator())
            throw std::domain_error("entrance_law: requires a non-subordinator");
    } else if (!(k.discrete().d() > 0)) {
        throw std::domain_error("entrance_law: requires d > 0");
    }
    if (lam == 0) return 1.0;
    const double arg = (sol.setting == Setting::continuous) ? lam : std::exp(-lam);
    if (sol.setting == Setting::discrete && arg <= 1e-300) return std::exp(-sol.W_total);
    const double t = k.theta(arg);
    return std::exp(-integral_wq(sol, std::min(t, sol.xi)));
}

namespace riccati_detail {

// Inner transform integral int_t^{xi} q r^2(s) K(s) e^{-(W(s)-W(t))} ds,
// where K is (1 - initial_weight) or initial_weight. Evaluated in log-s with
// the truncation beyond the solve span bounded by q * int r^2.
template <class K>
double inner_integral(const RiccatiSolution& sol, double t, K&& weight, double tol) {
    const auto& k = *sol.kernel;
    const double q = sol.q;
    const double Wt = sol.W_at(t);
    const double s_hi = sol.s_hi;
    if (t >= s_hi) return 0.0;
    auto f = [&](double lu) {
        const double s = std::exp(lu);
        return q * k.r_squared(s) * weight(s) * std::exp(-(sol.W_at(s) - Wt)) * s;
    };
    num::QuadOptions opt;
    opt.abs_tol = tol;
    auto res = num::adaptive_quad(f, std::log(t), std::log(s_hi), opt);
    // exact continuation past the solve span: with q r^2 = w^2 - w' the
    // integral over (s_hi, xi) collapses to w(s_hi) e^{-(W(s_hi)-W(t))};
    // w decays only polylogarithmically faster than 1/s, so this term is
    // not negligible against the long outer range.
    const double cont =
        sol.w_nodes.back() * weight(s_hi) * std::exp(-(sol.W_at(s_hi) - Wt));
    return res.value + cont;
}

// Outer transform integral int_0^b F(t) dt in log coordinates: F carries the
// t^{-1/2} blow-up at 0 and a heavy 1/t-type tail, both of which become
// smooth O(1)-scale bumps in u = ln t.
template <class F>
double outer_integral_log(F&& f, double b, double tol) {
    if (!(b > 0)) return 0.0;
    const double u_hi = std::log(b);
    const double u_lo = u_hi - 80.0;
    num::QuadOptions opt;
    opt.abs_tol = tol;
    auto q = num::adaptive_quad(
        [&](double u) {
            const double t = std::exp(u);
            return f(t) * t;
        },
        u_lo, u_hi, opt);
    return q.value;
}

} // namespace riccati_detail

namespace riccati_detail {

// Shared evaluation of
//   1 - int_0^{T_up} dt e^{-(W(T_up) - W(t))} int_t^{xi} q r^2 (1 - weight_x) e^{-..}
// for T_up within the solve span or beyond it (T_up = xi gives the T_a
// transform). Beyond the span the exact identity
//   int e^{-(W_up - W)} w dt = 1 - e^{-(W_up - W(split))}
// absorbs the non-decaying part of the outer integrand, leaving the
// weight-reduced remainder T(x) which decays like e^{-x phi(split)}.
inline double transform_core(const RiccatiSolution& sol, double x, double t_up, double W_up,
                             double lam_up, double tol) {
    const auto& k = *sol.kernel;
    const double q = sol.q;
    const double split = std::min(t_up, sol.s_hi);
    auto outer = [&](double t) {
        const double inner = inner_integral(
            sol, t, [&](double s) { return 1.0 - initial_weight(k, x, s); }, 0.1 * tol);
        return std::exp(-(W_up - sol.W_at(t))) * inner;
    };
    const double head = outer_integral_log(outer, split, tol);
    if (t_up <= sol.s_hi) return 1.0 - head;

    // remainder over [split, t_up)
    const double W_split = sol.W_at(split);
    double Tx = 0.0;
    if (!std::isinf(x)) {
        const double mid_factor = std::exp(-0.5 * (W_up - W_split));
        if (sol.setting == Setting::continuous) {
            const double lam_split = k.phi(split);
            num::QuadOptions topt;
            topt.abs_tol = 0.1 * tol;
            auto g = [&](double u) {
                return std::exp(-x * u) * tail_g(k, q, u) * mid_factor;
            };
            if (std::isinf(lam_up)) {
                auto tq = num::quad_to_infinity(g, lam_split, topt, std::max(1.0, 1.0 / x));
                Tx = tq.value;
            } else if (lam_up > lam_split) {
                auto tq = num::adaptive_quad(g, lam_split, lam_up, topt);
                Tx = tq.value;
            }
        } else {
            // discrete: weight = phi(s)^x <= phi(split)^x beyond the span
            Tx = initial_weight(k, x, split) * (1.0 - std::exp(-(W_up - W_split)));
        }
    }
    const double value = 1.0 - head - (1.0 - std::exp(-(W_up - W_split))) + Tx;
    return std::clamp(value, 0.0, 1.0);
}

} // namespace riccati_detail

// Laplace transform of the q-resolvent of the LB-process started at x:
//   q G_{q,x}(lam) = 1 - int_0^{theta(lam)} dt e^{-int_t^{theta(lam)} w}
//                        int_t^{xi} ds q r^2(s) (1 - e^{-x phi(s)}) e^{-int_t^s w}.
// Returns G (q G divided by q). Continuous setting.
inline double resolvent_G(const RiccatiSolution& sol, double x, double lam, double tol = 1e-9) {
    if (sol.setting != Setting::continuous)
        throw std::domain_error("resolvent_G: continuous setting only");
    if (x < 0 || lam < 0) throw std::invalid_argument("resolvent_G: need x, lam >= 0");
    const double q = sol.q;
    if (lam == 0 || x == 0) return 1.0 / q;
    const double t_up = sol.kernel->theta(lam);
    const double W_up = integral_wq(sol, std::min(t_up, sol.xi));
    return riccati_detail::transform_core(sol, x, t_up, W_up, lam, tol) / q;
}

// E_x(exp(-q T_a)), the lam -> infinity limit of q G_{q,x}.
inline double laplace_Ta_from_x(const RiccatiSolution& sol, double x, double tol = 1e-9) {
    riccati_detail::require_absorption(sol);
    if (x < 0) throw std::invalid_argument("laplace_Ta_from_x: need x >= 0");
    if (x == 0) return 1.0;
    return riccati_detail::transform_core(sol, x, sol.xi, sol.W_total,
                                          std::numeric_limits<double>::infinity(), tol);
}

// E_x(T_a) by nested quadrature, evaluated along two algebraically equal but
// numerically independent routes that must agree within 10*tol:
//   s-form: int_0^xi s r^2(s) (1 - weight_x(s)) ds
//   m-form: int over the mechanism coordinate with the scaled theta helper.
// x = +inf gives the entrance-law expectation.
namespace riccati_detail {

// Limit of the continuous m-form tail integrand after the u = 1/t
// substitution: the integrand tends to 1/psi(t) ~ 2/(gamma t^2), so
// f(1/u)/u^2 -> 2/gamma at u = 0.
inline double m_form_tail_limit(const ThetaPhiKernel& k) {
    const double g = k.levy().gamma();
    return g > 0 ? 2.0 / g : 0.0;
}

// e^{-m(t)} theta(t) evaluated without overflow: for large m the mass of
// int_0^t e^{m(s) - m(t)} ds concentrates at s = t.
inline double theta_scaled(const ThetaPhiKernel& k, double t, double tol) {
    const double mt = k.m(t);
    if (mt < 30.0) return std::exp(-mt) * k.theta(t);
    const double mp = (k.setting() == Setting::continuous)
                          ? k.levy().psi(t) / (k.competition() * t)
                          : 0.0; // only used in the continuous branch
    const double tau_cut = std::min(t, (50.0 + std::log(1.0 + t)) / std::max(mp, 1e-12));
    num::QuadOptions opt;
    opt.abs_tol = tol;
    auto qd = num::adaptive_quad(
        [&](double tau) { return std::exp(k.m(t - tau) - mt); }, 0.0, tau_cut, opt);
    return qd.value;
}

inline double expected_Ta_m_form(const ThetaPhiKernel& k, double x, double tol) {
    const double c = k.competition();
    if (k.setting() == Setting::continuous) {
        auto f = [&](double t) {
            if (t <= 0) return 0.0;
            const double one_minus = std::isinf(x) ? 1.0 : -std::expm1(-t * x);
            return one_minus * theta_scaled(k, t, 0.01 * tol) / (c * t);
        };
        const double A = 8.0;
        num::QuadOptions opt;
        opt.abs_tol = 0.5 * tol;
        auto head = num::adaptive_quad(f, 0.0, A, opt);
        // tail via u = 1/t, where the integrand extends smoothly to u = 0
        auto tail = num::adaptive_quad(
            [&](double u) { return u > 0 ? f(1.0 / u) / (u * u) : m_form_tail_limit(k); }, 0.0,
            1.0 / A, opt);
        return head.value + tail.value;
    }
    // discrete: int_0^1 (1 - v^x) e^{-m(v)} theta(v) / (c v (1 - v)) dv
    const auto& dm = k.discrete();
    auto f = [&](double v) {
        if (v <= 0 || v >= 1) return 0.0;
        const double one_minus = std::isinf(x) ? 1.0 : -std::expm1(x * std::log(v));
        return one_minus * std::exp(-dm.m(v)) * k.theta(v) / (c * v * (1.0 - v));
    };
    num::QuadOptions opt;
    opt.abs_tol = 0.5 * tol;
    // upper half directly (integrand bounded at v = 1)
    auto upper = num::adaptive_quad(f, 0.5, 1.0, opt);
    // lower half through v = e^{-y} to absorb the v^{d/c - 1} endpoint
    auto lower = num::quad_to_infinity(
        [&](double y) {
            const double v = std::exp(-y);
            return f(v) * v;
        },
        std::log(2.0), opt, 1.0);
    return upper.value + lower.value;
}

inline double expected_Ta_s_form(const ThetaPhiKernel& k, double x, double tol) {
    const double c = k.competition();
    if (k.setting() == Setting::continuous) {
        const double A = 8.0;                  // mechanism coordinate split point
        const double S = k.theta(A);           // same point in the theta coordinate
        auto f = [&](double lu) {
            const double s = std::exp(lu);
            const double w = std::isinf(x) ? 0.0 : initial_weight(k, x, s);
            return s * s * k.r_squared(s) * (1.0 - w);
        };
        num::QuadOptions opt;
        opt.abs_tol = 0.5 * tol;
        // s^2 r^2 ~ s/c near 0, so the mass below s0 is negligible
        const double s0 = std::max(1e-14, 1e-4 * tol * c);
        auto head = num::adaptive_quad(f, std::log(s0), std::log(S), opt);
        // exact change of variables for the tail (heavy in the s coordinate):
        // int_S^inf s r^2 (1-w) ds = int_A^inf (1 - w) e^{-m} theta / (c u) du
        auto tail = num::adaptive_quad(
            [&](double uu) {
                if (uu <= 0) return m_form_tail_limit(k);
                const double t = 1.0 / uu;
                const double one_minus = std::isinf(x) ? 1.0 : -std::expm1(-t * x);
                return one_minus * theta_scaled(k, t, 0.01 * tol) / (c * t) / (uu * uu);
            },
            0.0, 1.0 / A, opt);
        return head.value + tail.value;
    }
    const auto& dm = k.discrete();
    const double xiv = k.xi_value();
    auto integrand_s = [&](double s) {
        const double w = std::isinf(x) ? 0.0 : initial_weight(k, x, s);
        return s * k.r_squared(s) * (1.0 - w);
    };
    if (std::isfinite(xiv)) {
        // right-endpoint envelope r^2 ~ (xi - s)^{-(1-2d/c)/(1-d/c)}
        num::QuadOptions opt;
        opt.abs_tol = tol;
        const double dc = dm.d() / dm.c();
        if (dc < 0.5) opt.right_power = -(1.0 - 2.0 * dc) / (1.0 - dc);
        auto qd = num::adaptive_quad(integrand_s, 1e-12 * xiv, xiv * (1.0 - 1e-14), opt);
        return qd.value;
    }
    num::QuadOptions opt;
    opt.abs_tol = tol;
    auto qd = num::quad_to_infinity(integrand_s, 1e-12, opt, 1.0);
    return qd.value;
}

} // namespace riccati_detail

inline double expected_Ta(const ThetaPhiKernel& k, double x, double tol = 1e-10) {
    if (!(x > 0)) throw std::invalid_argument("expected_Ta: need x > 0 (or +inf)");
    if (k.setting() == Setting::discrete) {
        if (!(k.discrete().d() > 0)) throw std::domain_error("expected_Ta: requires d > 0");
    } else {
        if (absorption_regime(k.levy()) != AbsorptionRegime::extinction_with_absorption)
            throw std::domain_error("expected_Ta: requires the absorption regime");
    }
    const double a = riccati_detail::expected_Ta_m_form(k, x, tol);
    const double b = riccati_detail::expected_Ta_s_form(k, x, tol);
    if (std::abs(a - b) > 10.0 * tol * std::max(1.0, std::abs(a)))
        throw std::runtime_error("expected_Ta: the two quadrature routes disagree (" +
                                 std::to_string(a) + " vs " + std::to_string(b) + ")");
    return a;
}

inline double expected_Ta(const DiscreteMechanism& mech, double x, double tol = 1e-10) {
    return expected_Ta(ThetaPhiKernel(mech), x, tol);
}
inline double expected_Ta(const LevyMechanism& mech, double x, double tol = 1e-10) {
    return expected_Ta(ThetaPhiKernel(mech), x, tol);
}

} // namespace lbp
