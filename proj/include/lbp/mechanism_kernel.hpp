#pragma once

#include <cmath>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <variant>
#include <vector>

#include "lbp/mechanism.hpp"
#include "lbp/numerics/quadrature.hpp"

namespace lbp {

// Cached evaluation of the theta <-> phi coordinate change for one mechanism.
// theta knots are accumulated once (under a mutex, so concurrent readers are
// safe) and every evaluation reduces to a short local quadrature plus Newton
// steps with the analytic derivative theta' = -exp(m) / exp(m).
//
// The kernel also evaluates r^2, the Riccati forcing, through the identity
//   r^2(theta(v)) = exp(-2 m(v)) / (c v (1 - v))   (discrete)
//   r^2(theta(v)) = exp(-2 m(v)) / (c v)           (continuous)
// keeping 1 - v exact near v = 1 where the discrete r blows up.
class ThetaPhiKernel {
public:
    ThetaPhiKernel(const DiscreteMechanism& mech, double tol = 1e-13)
        : mech_(mech), tol_(tol), setting_(Setting::discrete) {
        const auto& dm = std::get<DiscreteMechanism>(mech_);
        c_ = dm.c();
        xi_ = (dm.d() >= dm.c()) ? std::numeric_limits<double>::infinity() : xi(dm, tol_);
        // ladder descending from v = 1 (theta = 0)
        knot_v_ = {1.0};
        knot_th_ = {0.0};
    }

    ThetaPhiKernel(const LevyMechanism& mech, double tol = 1e-13)
        : mech_(mech), tol_(tol), setting_(Setting::continuous) {
        const auto& lm = std::get<LevyMechanism>(mech_);
        c_ = lm.c();
        xi_ = std::numeric_limits<double>::infinity();
        knot_v_ = {0.0};
        knot_th_ = {0.0};
        knot_mj_ = {0.0};
        has_jumps_ = lm.rho() > 0;
    }

    Setting setting() const { return setting_; }
    double xi_value() const { return xi_; }
    double competition() const { return c_; }
    const DiscreteMechanism& discrete() const { return std::get<DiscreteMechanism>(mech_); }
    const LevyMechanism& levy() const { return std::get<LevyMechanism>(mech_); }

    double exp_m(double v) const {
        if (setting_ == Setting::discrete) return discrete().exp_m(v);
        return std::exp(m_cont(v));
    }

    double m(double v) const {
        if (setting_ == Setting::discrete) return discrete().m(v);
        return m_cont(v);
    }

    // theta in the mechanism coordinate (s in (0,1] discrete, lam >= 0 cont.)
    double theta(double v) const {
        std::lock_guard<std::mutex> lock(mu_);
        return theta_locked(v);
    }

    double phi(double s) const {
        std::lock_guard<std::mutex> lock(mu_);
        return phi_locked(s).first;
    }

    // (phi(s), 1 - phi(s)) with whichever part is small solved directly.
    std::pair<double, double> phi_pair(double s) const {
        std::lock_guard<std::mutex> lock(mu_);
        return phi_locked(s);
    }

    double r_squared(double s) const {
        std::lock_guard<std::mutex> lock(mu_);
        auto [v, omv] = phi_locked(s);
        if (setting_ == Setting::discrete) {
            const double mm = m_discrete_pair(v, omv);
            return std::exp(-2.0 * mm) / (c_ * v * omv);
        }
        return std::exp(-2.0 * m_cont(v)) / (c_ * v);
    }

    // Exact envelope integrals of r (via the change of variables back to v):
    //   discrete:   int r ds = int dv / sqrt(c v (1-v))
    //   continuous: int r ds = int dv / sqrt(c v)
    double r_integral_from_0(double s) const {
        std::lock_guard<std::mutex> lock(mu_);
        auto [v, omv] = phi_locked(s);
        if (setting_ == Setting::discrete)
            return (2.0 / std::sqrt(c_)) * std::asin(std::sqrt(omv));
        return 2.0 * std::sqrt(v / c_);
    }

    double r_integral_to_xi(double s) const {
        if (setting_ == Setting::continuous)
            throw std::domain_error("r_integral_to_xi: diverges in the continuous setting");
        std::lock_guard<std::mutex> lock(mu_);
        auto [v, omv] = phi_locked(s);
        (void)omv;
        return (2.0 / std::sqrt(c_)) * std::asin(std::sqrt(v));
    }

private:
    // --- continuous m with jump-part caching at knots ---------------------
    double m_cont(double lam) const {
        const auto& lm = levy();
        double v = -lm.drift() * lam / c_ + lm.gamma() * lam * lam / (4.0 * c_);
        if (has_jumps_) v += m_jump(lam);
        return v;
    }

    double jump_integrand(double s) const {
        const auto& lm = levy();
        if (s <= 0) {
            double v = 0;
            for (const auto& [sz, rate] : lm.atoms()) v -= rate * sz;
            if (lm.exp_jumps().rate > 0) v -= lm.exp_jumps().rate * lm.exp_jumps().mean;
            return v / c_;
        }
        double v = 0;
        for (const auto& [sz, rate] : lm.atoms()) v += rate * std::expm1(-s * sz);
        if (lm.exp_jumps().rate > 0) {
            const double kappa = 1.0 / lm.exp_jumps().mean;
            v -= lm.exp_jumps().rate * s / (kappa + s);
        }
        return v / (c_ * s);
    }

    double m_jump(double lam) const {
        // nearest knot below lam, then a short local quadrature
        std::size_t i = knot_below(lam);
        num::QuadOptions opt;
        opt.abs_tol = tol_;
        auto q = num::adaptive_quad([&](double s) { return jump_integrand(s); },
                                    knot_v_[i], lam, opt);
        return knot_mj_[i] + q.value;
    }

    std::size_t knot_below(double v) const {
        std::size_t lo = 0, hi = knot_v_.size() - 1;
        while (lo < hi) {
            const std::size_t mid = (lo + hi + 1) / 2;
            if (knot_v_[mid] <= v) lo = mid;
            else hi = mid - 1;
        }
        return lo;
    }

    // --- discrete stable m given (v, 1-v) ---------------------------------
    double m_discrete_pair(double v, double omv) const {
        const auto& dm = discrete();
        const double logv = (v > 0.5) ? std::log1p(-omv) : std::log(v);
        double acc = -(dm.d() / c_) * logv;
        for (int k = 1; k <= dm.max_litter(); ++k) {
            const double tk = dm.tail(k);
            if (tk == 0) continue;
            acc -= tk * (-std::expm1(k * logv)) / (c_ * k);
        }
        return acc;
    }

    double exp_m_pair(double v, double omv) const { return std::exp(m_discrete_pair(v, omv)); }

    // --- theta with cached knots ------------------------------------------
    double theta_locked(double v) const {
        if (setting_ == Setting::continuous) {
            if (v < 0) throw std::invalid_argument("theta: need lam >= 0");
            extend_cont(v);
            const std::size_t i = knot_below(v);
            num::QuadOptions opt;
            opt.abs_tol = std::max(tol_, 1e-14 * knot_th_[i]);
            auto q = num::adaptive_quad([&](double u) { return std::exp(m_cont(u)); },
                                        knot_v_[i], v, opt);
            return knot_th_[i] + q.value;
        }
        if (!(v > 0) || v > 1.0) throw std::invalid_argument("theta: need s in (0,1]");
        extend_disc(v);
        // knots are descending in v for the discrete setting
        std::size_t lo = 0, hi = knot_v_.size() - 1;
        while (lo < hi) {
            const std::size_t mid = (lo + hi + 1) / 2;
            if (knot_v_[mid] >= v) lo = mid;
            else hi = mid - 1;
        }
        num::QuadOptions opt;
        opt.abs_tol = std::max(tol_, 1e-14 * knot_th_[lo]);
        auto q = num::adaptive_quad([&](double u) { return discrete().exp_m(u); }, v,
                                    knot_v_[lo], opt);
        return knot_th_[lo] + q.value;
    }

    void extend_cont(double target) const {
        double last = knot_v_.back();
        double step = std::max(0.25, 0.05 * last);
        while (last < target) {
            const double nxt = std::min(target, last + step);
            num::QuadOptions opt;
            opt.abs_tol = std::max(tol_, 1e-14 * knot_th_.back());
            auto q = num::adaptive_quad([&](double u) { return std::exp(m_cont(u)); }, last, nxt, opt);
            knot_v_.push_back(nxt);
            knot_th_.push_back(knot_th_.back() + q.value);
            if (has_jumps_) {
                num::QuadOptions jopt;
                jopt.abs_tol = tol_;
                auto jq = num::adaptive_quad([&](double s) { return jump_integrand(s); }, last, nxt, jopt);
                knot_mj_.push_back(knot_mj_.back() + jq.value);
            }
            if (!std::isfinite(knot_th_.back()) || knot_th_.back() > 1e305)
                throw std::runtime_error("ThetaPhiKernel: theta overflow while extending");
            last = nxt;
            step *= 1.6;
        }
    }

    void extend_disc(double target) const {
        double last = knot_v_.back();
        while (last > target) {
            const double nxt = std::max(target, 0.5 * last);
            num::QuadOptions opt;
            opt.abs_tol = std::max(tol_, 1e-14 * knot_th_.back());
            auto q = num::adaptive_quad([&](double u) { return discrete().exp_m(u); }, nxt, last, opt);
            knot_v_.push_back(nxt);
            knot_th_.push_back(knot_th_.back() + q.value);
            last = nxt;
            if (last < 1e-300) throw std::runtime_error("ThetaPhiKernel: discrete theta underflow");
        }
    }

    // --- phi (inverse of theta) -------------------------------------------
    // Safeguarded Newton on ln(theta) = ln(s) inside a knot bracket: theta
    // grows superexponentially, so plain Newton from a linear guess can
    // overshoot by orders of magnitude. Bisection backstop keeps the iterate
    // inside the bracket.
    std::pair<double, double> phi_locked(double s) const {
        if (s < 0) throw std::invalid_argument("phi: need t >= 0");
        if (setting_ == Setting::continuous) {
            if (s == 0) return {0.0, 1.0};
            while (knot_th_.back() < s) extend_cont(knot_v_.back() * 2.0 + 1.0);
            std::size_t lo = 0, hi = knot_th_.size() - 1;
            while (lo < hi) {
                const std::size_t mid = (lo + hi + 1) / 2;
                if (knot_th_[mid] <= s) lo = mid;
                else hi = mid - 1;
            }
            const double th_i = knot_th_[lo];
            const double v_i = knot_v_[lo];
            double v_lo = v_i;
            double v_hi = (lo + 1 < knot_v_.size()) ? knot_v_[lo + 1] : knot_v_.back();
            if (v_hi <= v_lo) return {v_lo, 1.0 - v_lo};
            double v = interp_guess(lo, s);
            v = std::clamp(v, v_lo, v_hi);
            for (int it = 0; it < 80; ++it) {
                num::QuadOptions opt;
                opt.abs_tol = std::max(tol_, 1e-14 * s);
                auto q = num::adaptive_quad([&](double u) { return std::exp(m_cont(u)); }, v_i,
                                            v, opt);
                const double th_v = th_i + q.value;
                if (std::abs(th_v - s) <= std::max(tol_, 4e-15 * s)) break;
                if (th_v < s) v_lo = v;
                else v_hi = v;
                const double step = (std::log(th_v) - std::log(s)) * th_v / std::exp(m_cont(v));
                double v_new = v - step;
                if (!(v_new > v_lo) || !(v_new < v_hi)) v_new = 0.5 * (v_lo + v_hi);
                if (v_new == v) break;
                v = v_new;
            }
            return {v, 1.0 - v};
        }
        // discrete
        if (s == 0) return {1.0, 0.0};
        if (s >= xi_) throw std::invalid_argument("phi: t must lie below xi (discrete domain end)");
        // Near a finite xi, phi is tiny; solving lower_theta(v) = xi - s keeps
        // the quadrature conditioned on the short end of the interval.
        if (std::isfinite(xi_) && s > 0.98 * xi_) {
            const double gap = xi_ - s;
            const double v = solve_lower_theta(gap);
            return {v, 1.0 - v};
        }
        // Near the s -> 0 end phi is close to 1: solve in u = 1 - v, where
        // theta(1-u) = int_0^u exp(m(1-w)) dw has a smooth integrand.
        const double s_switch = theta_locked(0.75);
        if (s <= s_switch) {
            double u = std::min(0.25, s); // exp(m(1)) = 1, so theta(1-u) ~ u
            for (int it = 0; it < 60; ++it) {
                num::QuadOptions opt;
                opt.abs_tol = std::max(tol_, 1e-15 * std::max(s, 1e-30));
                auto q = num::adaptive_quad(
                    [&](double w) { return exp_m_pair(1.0 - w, w); }, 0.0, u, opt);
                const double resid = q.value - s;
                if (std::abs(resid) <= std::max(tol_ * s, 2e-15 * s)) break;
                u -= resid / exp_m_pair(1.0 - u, u);
                u = std::clamp(u, 1e-320, 0.25);
            }
            return {1.0 - u, u};
        }
        // interior / small-v branch: bracket on the descending knot ladder
        // (theta decreasing in v); safeguarded Newton with bisection backstop
        while (knot_th_.back() < s) extend_disc(0.5 * knot_v_.back());
        std::size_t lo = 0, hi = knot_th_.size() - 1;
        while (lo < hi) {
            const std::size_t mid = (lo + hi + 1) / 2;
            if (knot_th_[mid] <= s) lo = mid;
            else hi = mid - 1;
        }
        const double v_anchor = knot_v_[lo]; // theta(v_anchor) <= s
        const double th_i = knot_th_[lo];
        double v_hi = v_anchor;              // theta(v_hi) <= s
        double v_lo = (lo + 1 < knot_v_.size()) ? knot_v_[lo + 1] : 1e-320; // theta >= s
        double v = 0.5 * (v_lo + v_hi);
        for (int it = 0; it < 100; ++it) {
            num::QuadOptions opt;
            opt.abs_tol = std::max(tol_, 1e-14 * s);
            auto q = num::adaptive_quad([&](double u) { return discrete().exp_m(u); }, v,
                                        v_anchor, opt);
            const double th_v = th_i + q.value;
            if (std::abs(th_v - s) <= std::max(tol_, 4e-15 * s)) break;
            if (th_v < s) v_hi = v;
            else v_lo = v;
            // theta' = -exp(m); Newton on ln(theta) tames the steep growth
            const double step = (std::log(th_v) - std::log(s)) * th_v / discrete().exp_m(v);
            double v_new = v + step;
            if (!(v_new > v_lo) || !(v_new < v_hi)) v_new = 0.5 * (v_lo + v_hi);
            if (v_new == v) break;
            v = v_new;
        }
        return {v, 1.0 - v};
    }

    // lower_theta(v) = int_0^v exp(m) du = xi - theta(v); finite only for d < c.
    double lower_theta(double v) const {
        const auto& dm = discrete();
        num::QuadOptions opt;
        opt.abs_tol = std::max(1e-300, tol_ * std::min(1.0, v));
        if (dm.d() > 0) opt.left_power = -dm.d() / c_;
        return num::adaptive_quad([&](double u) { return dm.exp_m(u); }, 0.0, v, opt).value;
    }

    double solve_lower_theta(double gap) const {
        const auto& dm = discrete();
        const double p = 1.0 - dm.d() / c_; // exp_m ~ beta v^{-d/c}, lower_theta ~ beta v^p / p
        double v = std::pow(std::max(gap, 1e-300) * p / dm.beta(), 1.0 / p);
        v = std::clamp(v, 1e-300, 0.5);
        for (int it = 0; it < 80; ++it) {
            const double resid = lower_theta(v) - gap;
            if (std::abs(resid) <= std::max(4e-14 * gap, 1e-300)) break;
            double nv = v - resid / dm.exp_m(v);
            if (!(nv > 0)) nv = 0.5 * v;
            v = std::min(nv, 0.75);
        }
        return v;
    }

    double interp_guess(std::size_t i, double s) const {
        if (i + 1 < knot_v_.size()) {
            const double t0 = knot_th_[i], t1 = knot_th_[i + 1];
            const double w = (s - t0) / (t1 - t0);
            return knot_v_[i] + w * (knot_v_[i + 1] - knot_v_[i]);
        }
        return knot_v_[i];
    }

    std::variant<DiscreteMechanism, LevyMechanism> mech_;
    double tol_;
    Setting setting_;
    double c_ = 1;
    double xi_ = 0;
    bool has_jumps_ = false;
    mutable std::mutex mu_;
    mutable std::vector<double> knot_v_, knot_th_, knot_mj_;
};

} // namespace lbp
