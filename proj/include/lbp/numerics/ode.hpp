#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace lbp::num {

struct OdeOptions {
    double rel_tol = 1e-10;
    double abs_tol = 1e-12;
    double h_init = 0.0;    // 0: choose automatically
    double h_max = 0.0;     // 0: unbounded; caps the step (dense-output accuracy)
    long max_steps = 4000000;
    // Step acceptance predicate; a rejected step is retried with half the
    // size until the minimum step underflows.
    std::function<bool(double t, double y)> guard;
};

// Dense solution of a scalar ODE from a Dormand-Prince 5(4) integration.
// Works for increasing or decreasing t.
class OdeSolution {
public:
    struct Step {
        double t0, h;
        double y0, y1;
        std::array<double, 5> rcont; // quartic dense-output coefficients
    };

    bool completed = false;
    std::string fail_reason;
    double t_begin = 0, t_end = 0;
    double y_end = 0;
    std::vector<Step> steps;

    double operator()(double t) const { return eval(t, false); }
    double derivative(double t) const { return eval(t, true); }

private:
    double eval(double t, bool deriv) const {
        if (steps.empty()) throw std::runtime_error("OdeSolution: empty solution");
        const bool fwd = t_end >= t_begin;
        std::size_t lo = 0, hi = steps.size() - 1;
        while (lo < hi) {
            const std::size_t mid = (lo + hi) / 2;
            const double tm = steps[mid].t0 + steps[mid].h;
            if (fwd ? (t > tm) : (t < tm)) lo = mid + 1;
            else hi = mid;
        }
        const Step& s = steps[lo];
        const double th = (t - s.t0) / s.h;
        const auto& r = s.rcont;
        if (!deriv) {
            return r[0] + th * (r[1] + (1 - th) * (r[2] + th * (r[3] + (1 - th) * r[4])));
        }
        const double u = r[1] + (1 - 2 * th) * r[2] + th * (2 - 3 * th) * r[3] +
                         2 * th * (1 - th) * (1 - 2 * th) * r[4];
        return u / s.h;
    }
};

// Adaptive explicit Runge-Kutta (Dormand-Prince 5(4)) with embedded error
// control and 4th-order dense output.
template <class F>
OdeSolution ode_solve(F&& field, double t0, double y0, double t1, OdeOptions opt = {}) {
    OdeSolution sol;
    sol.t_begin = t0;
    sol.t_end = t1;
    if (t0 == t1) {
        sol.completed = true;
        sol.y_end = y0;
        OdeSolution::Step s{t0, 0.0, y0, y0, {y0, 0, 0, 0, 0}};
        sol.steps.push_back(s);
        return sol;
    }
    const double dir = (t1 > t0) ? 1.0 : -1.0;
    const double span = std::abs(t1 - t0);
    double t = t0, y = y0;
    double k1 = field(t, y);
    double h = opt.h_init != 0.0 ? std::abs(opt.h_init)
                                 : std::min(span, 1e-2 * span / (1.0 + std::abs(k1)));
    h = std::max(h, span * 1e-13);
    const double h_min = span * 1e-15;

    static const double a21 = 1.0 / 5;
    static const double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static const double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static const double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187,
                        a53 = 64448.0 / 6561, a54 = -212.0 / 729;
    static const double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                        a64 = 49.0 / 176, a65 = -5103.0 / 18656;
    static const double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192,
                        a75 = -2187.0 / 6784, a76 = 11.0 / 84;
    static const double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                        e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
    static const double d1 = -12715105075.0 / 11282082432.0,
                        d3 = 87487479700.0 / 32700410799.0,
                        d4 = -10690763975.0 / 1880347072.0,
                        d5 = 701980252875.0 / 199316789632.0,
                        d6 = -1453857185.0 / 822651844.0,
                        d7 = 69997945.0 / 29380423.0;

    long steps_taken = 0;
    int consecutive_rejects = 0;
    while (dir * (t1 - t) > 0) {
        if (++steps_taken > opt.max_steps) {
            sol.fail_reason = "max step count exceeded";
            sol.completed = false;
            sol.y_end = y;
            sol.t_end = t;
            return sol;
        }
        h = std::min(h, std::abs(t1 - t));
        if (opt.h_max > 0) h = std::min(h, opt.h_max);
        const double hs = dir * h;
        const double k2 = field(t + 0.2 * hs, y + hs * a21 * k1);
        const double k3 = field(t + 0.3 * hs, y + hs * (a31 * k1 + a32 * k2));
        const double k4 = field(t + 0.8 * hs, y + hs * (a41 * k1 + a42 * k2 + a43 * k3));
        const double k5 = field(t + 8.0 / 9 * hs, y + hs * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
        const double k6 = field(t + hs, y + hs * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
        const double y1 = y + hs * (a71 * k1 + a73 * k3 + a74 * k4 + a75 * k5 + a76 * k6);
        const double k7 = field(t + hs, y1);
        const double err_raw = hs * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
        const double sc = opt.abs_tol + opt.rel_tol * std::max(std::abs(y), std::abs(y1));
        const double err = std::abs(err_raw) / sc;
        const bool guard_ok = !opt.guard || opt.guard(t + hs, y1);
        if (err <= 1.0 && guard_ok && std::isfinite(y1)) {
            consecutive_rejects = 0;
            OdeSolution::Step s;
            s.t0 = t;
            s.h = hs;
            s.y0 = y;
            s.y1 = y1;
            const double ydiff = y1 - y;
            const double bspl = hs * k1 - ydiff;
            s.rcont[0] = y;
            s.rcont[1] = ydiff;
            s.rcont[2] = bspl;
            s.rcont[3] = ydiff - hs * k7 - bspl;
            s.rcont[4] = hs * (d1 * k1 + d3 * k3 + d4 * k4 + d5 * k5 + d6 * k6 + d7 * k7);
            sol.steps.push_back(s);
            t += hs;
            y = y1;
            k1 = k7; // FSAL
            const double fac = err > 0 ? 0.9 * std::pow(err, -0.2) : 5.0;
            h *= std::clamp(fac, 0.2, 5.0);
        } else {
            if (!guard_ok || !std::isfinite(y1)) {
                h *= 0.5;
                if (++consecutive_rejects > 120) {
                    sol.fail_reason = "guard permanently violated";
                    sol.completed = false;
                    sol.y_end = y;
                    sol.t_end = t;
                    return sol;
                }
            } else {
                h *= std::clamp(0.9 * std::pow(err, -0.2), 0.1, 0.5);
            }
            if (h < h_min) {
                sol.fail_reason = "step size underflow";
                sol.completed = false;
                sol.y_end = y;
                sol.t_end = t;
                return sol;
            }
        }
    }
    sol.completed = true;
    sol.y_end = y;
    sol.t_end = t;
    return sol;
}

} // namespace lbp::num
