#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "lbp/numerics/quadrature.hpp"
#include "lbp/numerics/roots.hpp"
#include "lbp/numerics/series.hpp"

namespace lbp {

enum class Setting { discrete, continuous };

enum class AbsorptionRegime {
    recurrent,                      // nondecreasing driving noise, no extinction
    extinction_with_absorption,     // dies out and hits 0 in finite time
    extinction_without_absorption,  // dies out but stays positive
};

inline const char* to_string(AbsorptionRegime r) {
    switch (r) {
        case AbsorptionRegime::recurrent: return "recurrent";
        case AbsorptionRegime::extinction_with_absorption: return "extinction_with_absorption";
        case AbsorptionRegime::extinction_without_absorption: return "extinction_without_absorption";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// Integer-state branching mechanism: per-capita litter rates pi_k, natural
// death rate d, pairwise competition rate c.
//
//   psi(s) = d - (rho + d) s + sum_k pi_k s^{k+1}
//          = (1 - s) (d - sum_k tail_k s^k),   tail_k = sum_{i>=k} pi_i
//   m(s)   = int_s^1 psi(v) / (c v (1 - v)) dv
//          = -(d/c) ln s - sum_k tail_k (1 - s^k) / (c k)
//   exp(m(s)) = beta s^{-d/c} exp(sum_k tail_k s^k / (c k)),
//   beta = exp(-sum_k tail_k / (c k))
// ---------------------------------------------------------------------------
class DiscreteMechanism {
public:
    DiscreteMechanism(double d, double c, const std::map<int, double>& pi)
        : d_(d), c_(c) {
        if (!(c > 0)) throw std::invalid_argument("DiscreteMechanism: c must be positive");
        if (d < 0) throw std::invalid_argument("DiscreteMechanism: d must be nonnegative");
        for (const auto& [k, rate] : pi) {
            if (k < 1) throw std::invalid_argument("DiscreteMechanism: litter sizes start at 1");
            if (rate < 0) throw std::invalid_argument("DiscreteMechanism: litter rates must be >= 0");
            if (rate > 0) pi_.emplace_back(k, rate);
        }
        for (const auto& [k, rate] : pi_) {
            rho_ += rate;
            kmax_ = std::max(kmax_, k);
        }
        if (rho_ == 0 && d_ == 0)
            throw std::invalid_argument("DiscreteMechanism: need d > 0 or a positive litter rate");
        tails_.assign(static_cast<std::size_t>(kmax_) + 1, 0.0);
        for (const auto& [k, rate] : pi_) tails_[static_cast<std::size_t>(k)] += rate;
        for (int k = kmax_ - 1; k >= 1; --k)
            tails_[static_cast<std::size_t>(k)] += tails_[static_cast<std::size_t>(k) + 1];
        double s = 0;
        for (int k = 1; k <= kmax_; ++k) s += tails_[static_cast<std::size_t>(k)] / (c_ * k);
        log_beta_ = -s;
    }

    double d() const { return d_; }
    double c() const { return c_; }
    double rho() const { return rho_; }
    int max_litter() const { return kmax_; }
    const std::vector<std::pair<int, double>>& pi() const { return pi_; }
    double pi_rate(int k) const {
        for (const auto& [kk, rate] : pi_)
            if (kk == k) return rate;
        return 0.0;
    }

    // tail_k = sum_{i >= k} pi_i, k >= 1
    double tail(int k) const {
        if (k < 1) throw std::invalid_argument("tail: k must be >= 1");
        if (k > kmax_) return 0.0;
        return tails_[static_cast<std::size_t>(k)];
    }

    double psi(double s) const {
        if (s < 0.0 || s > 1.0) throw std::invalid_argument("psi: need s in [0,1]");
        return s > 0.75 ? psi_factored(s) : psi_plain(s);
    }

    double psi_plain(double s) const {
        double v = d_ - (rho_ + d_) * s;
        for (const auto& [k, rate] : pi_) v += rate * std::pow(s, k + 1);
        return v;
    }

    double psi_factored(double s) const {
        double t = 0;
        for (int k = kmax_; k >= 1; --k) t = t * s + tails_[static_cast<std::size_t>(k)];
        return (1.0 - s) * (d_ - s * t);
    }

    double psi_prime(double s) const {
        double v = -(rho_ + d_);
        for (const auto& [k, rate] : pi_) v += rate * (k + 1) * std::pow(s, k);
        return v;
    }

    // Finite support, so the log-moment condition always holds; kept as an
    // explicit predicate so callers can assert it before deriving m.
    bool condition_L() const { return true; }

    double log_beta() const { return log_beta_; }
    double beta() const { return std::exp(log_beta_); }

    double m(double s) const {
        if (!(s > 0.0) || s > 1.0) throw std::invalid_argument("m: need s in (0,1]");
        double acc = -(d_ / c_) * std::log(s);
        for (int k = 1; k <= kmax_; ++k) {
            const double tk = tails_[static_cast<std::size_t>(k)];
            if (tk == 0) continue;
            // 1 - s^k evaluated as -expm1(k log s) to stay exact near s = 1
            acc -= tk * (-std::expm1(k * std::log(s))) / (c_ * k);
        }
        return acc;
    }

    double exp_m(double s) const { return std::exp(m(s)); }

private:
    double d_ = 0, c_ = 1;
    std::vector<std::pair<int, double>> pi_; // sorted by litter size
    std::vector<double> tails_;              // tails_[k] = tail_k
    double rho_ = 0;
    int kmax_ = 0;
    double log_beta_ = 0;
};

// ---------------------------------------------------------------------------
// Spectrally positive Levy mechanism with finite-activity jumps: drift +
// Gaussian part + finitely many jump atoms + an optional exponential-density
// jump component (total rate `rate`, mean size `mean`).
//
// Canonical storage follows the compensated Levy-Khinchin form
//   psi(lam) = alpha lam + gamma/2 lam^2
//            + int (e^{-lam r} - 1 + lam r 1_{r<1}) Pi(dr),
// while simulation and m use the uncompensated drift b with
//   X_t = b t + sqrt(gamma) B_t + compound-Poisson jumps,
//   b = int_{r<1} r Pi(dr) - alpha.
// ---------------------------------------------------------------------------
struct ExpJumpComponent {
    double rate = 0.0; // total mass of the exponential component
    double mean = 1.0; // mean jump size (1/kappa)
};

class LevyMechanism {
public:
    static LevyMechanism from_compensated(double alpha, double gamma, double c,
                                          std::vector<std::pair<double, double>> atoms = {},
                                          ExpJumpComponent exp_jumps = {}) {
        return LevyMechanism(alpha, gamma, c, std::move(atoms), exp_jumps);
    }

    // Natural parametrization: X_t = b t + sqrt(gamma) B_t + jumps.
    static LevyMechanism from_uncompensated(double b, double gamma, double c,
                                            std::vector<std::pair<double, double>> atoms = {},
                                            ExpJumpComponent exp_jumps = {}) {
        LevyMechanism tmp(0.0, gamma, c, std::move(atoms), exp_jumps);
        const double alpha = tmp.small_jump_mean() - b;
        return LevyMechanism(alpha, gamma, c, tmp.atoms_, exp_jumps);
    }

    double alpha() const { return alpha_; }
    double gamma() const { return gamma_; }
    double c() const { return c_; }
    const std::vector<std::pair<double, double>>& atoms() const { return atoms_; }
    const ExpJumpComponent& exp_jumps() const { return exp_jumps_; }

    double rho() const {
        double r = exp_jumps_.rate;
        for (const auto& [sz, rate] : atoms_) { (void)sz; r += rate; }
        return r;
    }

    // int_{0<r<1} r Pi(dr), the compensated-vs-uncompensated drift offset.
    double small_jump_mean() const {
        double s = 0;
        for (const auto& [sz, rate] : atoms_)
            if (sz < 1.0) s += sz * rate;
        if (exp_jumps_.rate > 0) {
            const double kappa = 1.0 / exp_jumps_.mean;
            s += exp_jumps_.rate * (1.0 - (1.0 + kappa) * std::exp(-kappa)) / kappa;
        }
        return s;
    }

    // Uncompensated linear drift of X.
    double drift() const { return small_jump_mean() - alpha_; }

    bool is_subordinator() const { return gamma_ == 0.0 && drift() >= 0.0; }

    double delta() const {
        if (!is_subordinator()) throw std::domain_error("delta: mechanism is not a subordinator");
        return drift();
    }

    bool condition_L() const { return true; } // finite activity, exponential tails

    double psi(double lam) const {
        if (lam < 0) throw std::invalid_argument("psi: need lam >= 0");
        double v = -drift() * lam + 0.5 * gamma_ * lam * lam;
        for (const auto& [sz, rate] : atoms_) v += rate * std::expm1(-lam * sz);
        if (exp_jumps_.rate > 0) {
            const double kappa = 1.0 / exp_jumps_.mean;
            v -= exp_jumps_.rate * lam / (kappa + lam);
        }
        return v;
    }

    double psi_prime(double lam) const {
        double v = -drift() + gamma_ * lam;
        for (const auto& [sz, rate] : atoms_) v -= rate * sz * std::exp(-lam * sz);
        if (exp_jumps_.rate > 0) {
            const double kappa = 1.0 / exp_jumps_.mean;
            v -= exp_jumps_.rate * kappa / ((kappa + lam) * (kappa + lam));
        }
        return v;
    }

    // Levy tail: Pi([y, inf)).
    double levy_tail(double y) const {
        if (!(y > 0)) throw std::invalid_argument("levy_tail: need y > 0");
        double t = 0;
        for (const auto& [sz, rate] : atoms_)
            if (sz >= y) t += rate;
        if (exp_jumps_.rate > 0) t += exp_jumps_.rate * std::exp(-y / exp_jumps_.mean);
        return t;
    }

    // m(lam) = int_0^lam psi(s)/(c s) ds. Drift and Gaussian parts are closed
    // form; the jump part is integrated adaptively (its integrand is bounded,
    // with value -(sum rate_i r_i + rate_e/kappa)/c at 0).
    double m(double lam, double quad_tol = 1e-12) const {
        if (lam < 0) throw std::invalid_argument("m: need lam >= 0");
        if (lam == 0) return 0.0;
        double v = -drift() * lam / c_ + gamma_ * lam * lam / (4.0 * c_);
        if (!atoms_.empty() || exp_jumps_.rate > 0) {
            auto integrand = [&](double s) { return jump_psi_over_s(s) / c_; };
            num::QuadOptions opt;
            opt.abs_tol = quad_tol;
            auto q = num::adaptive_quad(integrand, 0.0, lam, opt);
            if (!q.converged)
                throw std::runtime_error("LevyMechanism::m: jump-part quadrature did not converge (err=" +
                                         std::to_string(q.error_estimate) + ")");
            v += q.value;
        }
        return v;
    }

    double exp_m(double lam, double quad_tol = 1e-12) const { return std::exp(m(lam, quad_tol)); }

    // Subordinator form of m (usable as an independent route):
    //   -m(lam) = delta lam / c + int_0^inf (1 - e^{-lam r}) tail(r)/(c r) dr.
    double m_subordinator_route(double lam, double quad_tol = 1e-12) const {
        const double del = delta(); // throws if not a subordinator
        double v = -del * lam / c_;
        if (rho() > 0) {
            auto integrand = [&](double r) {
                const double one_minus = -std::expm1(-lam * r);
                return -one_minus * levy_tail(r) / (c_ * r);
            };
            num::QuadOptions opt;
            opt.abs_tol = quad_tol;
            // integrand -> -lam * tail(0+)/c at r = 0; exponential decay at infinity
            auto q = num::quad_to_infinity(integrand, 0.0, opt,
                                           std::max(exp_jumps_.mean, 1.0 / (1.0 + lam)));
            if (!q.converged)
                throw std::runtime_error("m_subordinator_route: quadrature did not converge");
            v += q.value;
        }
        return v;
    }

private:
    LevyMechanism(double alpha, double gamma, double c,
                  std::vector<std::pair<double, double>> atoms, ExpJumpComponent exp_jumps)
        : alpha_(alpha), gamma_(gamma), c_(c), atoms_(std::move(atoms)), exp_jumps_(exp_jumps) {
        if (!(c_ > 0)) throw std::invalid_argument("LevyMechanism: c must be positive");
        if (gamma_ < 0) throw std::invalid_argument("LevyMechanism: gamma must be >= 0");
        for (const auto& [sz, rate] : atoms_) {
            if (!(sz > 0)) throw std::invalid_argument("LevyMechanism: jump sizes must be positive");
            if (rate < 0) throw std::invalid_argument("LevyMechanism: jump rates must be >= 0");
        }
        std::erase_if(atoms_, [](const auto& a) { return a.second == 0.0; });
        std::sort(atoms_.begin(), atoms_.end());
        if (exp_jumps_.rate < 0) throw std::invalid_argument("LevyMechanism: exp-jump rate must be >= 0");
        if (exp_jumps_.rate > 0 && !(exp_jumps_.mean > 0))
            throw std::invalid_argument("LevyMechanism: exp-jump mean must be positive");
    }

    // (sum_i rate_i (e^{-s r_i} - 1) + exp-component) / s, bounded near 0.
    double jump_psi_over_s(double s) const {
        if (s <= 0) {
            double v = 0;
            for (const auto& [sz, rate] : atoms_) v -= rate * sz;
            if (exp_jumps_.rate > 0) v -= exp_jumps_.rate * exp_jumps_.mean;
            return v;
        }
        double v = 0;
        for (const auto& [sz, rate] : atoms_) v += rate * std::expm1(-s * sz);
        if (exp_jumps_.rate > 0) {
            const double kappa = 1.0 / exp_jumps_.mean;
            v -= exp_jumps_.rate * s / (kappa + s);
        }
        return v / s;
    }

    double alpha_ = 0, gamma_ = 0, c_ = 1;
    std::vector<std::pair<double, double>> atoms_;
    ExpJumpComponent exp_jumps_;
};

// ---------------------------------------------------------------------------
// Free-function operations shared across the two settings.
// ---------------------------------------------------------------------------

inline double psi(const DiscreteMechanism& mech, double s) { return mech.psi(s); }
inline double psi(const LevyMechanism& mech, double lam) { return mech.psi(lam); }

inline double tail(const DiscreteMechanism& mech, int k) { return mech.tail(k); }
inline double levy_tail(const LevyMechanism& mech, double y) { return mech.levy_tail(y); }

inline bool condition_L(const DiscreteMechanism& mech) { return mech.condition_L(); }
inline bool condition_L(const LevyMechanism& mech) { return mech.condition_L(); }

inline double exp_m(const DiscreteMechanism& mech, double s) { return mech.exp_m(s); }
inline double exp_m(const LevyMechanism& mech, double lam, double tol = 1e-12) {
    return mech.exp_m(lam, tol);
}

// theta: decreasing (0,1] -> [0, xi) in the discrete setting.
inline double theta(const DiscreteMechanism& mech, double s, double tol = 1e-12) {
    if (!(s > 0.0) || s > 1.0) throw std::invalid_argument("theta: need s in (0,1]");
    if (s == 1.0) return 0.0;
    num::QuadOptions opt;
    opt.abs_tol = tol;
    auto q = num::adaptive_quad([&](double v) { return mech.exp_m(v); }, s, 1.0, opt);
    return q.value;
}

// theta: increasing [0,inf) -> [0,inf) in the continuous setting.
inline double theta(const LevyMechanism& mech, double lam, double tol = 1e-12) {
    if (lam < 0) throw std::invalid_argument("theta: need lam >= 0");
    if (lam == 0) return 0.0;
    num::QuadOptions opt;
    opt.abs_tol = tol;
    auto q = num::adaptive_quad([&](double v) { return mech.exp_m(v, 0.1 * tol); }, 0.0, lam, opt);
    return q.value;
}

// Endpoint of theta's range. Discrete: finite iff d < c (analytic test, the
// quadrature only runs in the finite case). Continuous: always +infinity.
inline double xi(const DiscreteMechanism& mech, double tol = 1e-12) {
    if (mech.d() >= mech.c()) return std::numeric_limits<double>::infinity();
    num::QuadOptions opt;
    opt.abs_tol = tol;
    if (mech.d() > 0) opt.left_power = -mech.d() / mech.c();
    auto q = num::adaptive_quad([&](double v) { return mech.exp_m(v); }, 0.0, 1.0, opt);
    return q.value;
}

inline double xi(const LevyMechanism&) { return std::numeric_limits<double>::infinity(); }

// phi = theta^{-1} by bracketed root finding plus a Newton polish using
// theta' = -exp(m) (discrete) / exp(m) (continuous).
inline double phi(const DiscreteMechanism& mech, double t, double tol_phi = 1e-12,
                  double quad_tol = 1e-13) {
    if (t < 0) throw std::invalid_argument("phi: need t >= 0");
    if (t == 0) return 1.0;
    const double xiv = xi(mech, quad_tol);
    if (t >= xiv) throw std::invalid_argument("phi: t must lie below xi");
    double lo = 0.5;
    while (theta(mech, lo, quad_tol) < t) {
        lo *= 0.5;
        if (lo < 1e-300) throw std::runtime_error("phi: bracket search failed");
    }
    double v = num::find_root_bracketed(
        [&](double x) { return theta(mech, x, quad_tol) - t; }, lo, 1.0,
        std::max(tol_phi, 1e-15));
    for (int it = 0; it < 3; ++it) {
        const double resid = theta(mech, v, quad_tol) - t;
        if (std::abs(resid) <= tol_phi * std::max(1.0, t)) break;
        v = std::clamp(v + resid / mech.exp_m(v), 1e-300, 1.0);
    }
    return v;
}

inline double phi(const LevyMechanism& mech, double t, double tol_phi = 1e-12,
                  double quad_tol = 1e-13) {
    if (t < 0) throw std::invalid_argument("phi: need t >= 0");
    if (t == 0) return 0.0;
    double hi = 1.0;
    while (theta(mech, hi, quad_tol) < t) {
        hi *= 2.0;
        if (hi > 1e12) throw std::runtime_error("phi: bracket search failed");
    }
    double v = num::find_root_bracketed(
        [&](double x) { return theta(mech, x, quad_tol) - t; }, 0.0, hi,
        std::max(tol_phi, 1e-15));
    for (int it = 0; it < 3; ++it) {
        const double resid = theta(mech, v, quad_tol) - t;
        if (std::abs(resid) <= tol_phi * std::max(1.0, t)) break;
        v = std::max(0.0, v - resid / mech.exp_m(v, 0.1 * quad_tol));
    }
    return v;
}

// Power-series coefficients of exp(m): exp(m(s)) = sum_{i>=1} nu_i s^{i-1}
// (requires d = 0, where exp(m) extends continuously to [0,1]).
inline std::vector<double> nu_discrete(const DiscreteMechanism& mech, int n) {
    if (mech.d() != 0.0) throw std::domain_error("nu_discrete: requires d = 0");
    if (n < 1) throw std::invalid_argument("nu_discrete: need n >= 1");
    std::vector<double> g(static_cast<std::size_t>(mech.max_litter()) + 1, 0.0);
    for (int k = 1; k <= mech.max_litter(); ++k)
        g[static_cast<std::size_t>(k)] = mech.tail(k) / (mech.c() * k);
    auto a = num::power_series_exp(g, n);
    const double beta = mech.beta();
    for (double& x : a) x *= beta;
    return a; // a[i-1] = nu_i
}

// Stationary law of the d = 0 process: mu_i proportional to nu_i / i.
// Throws if the truncation cannot certify the requested tolerance.
inline std::vector<double> mu_discrete(const DiscreteMechanism& mech, int n, double tol = 1e-10) {
    auto nu = nu_discrete(mech, n);
    double nu_sum = 0, norm = 0;
    for (int i = 1; i <= n; ++i) {
        nu_sum += nu[static_cast<std::size_t>(i - 1)];
        norm += nu[static_cast<std::size_t>(i - 1)] / i;
    }
    const double deficit = std::max(0.0, 1.0 - nu_sum);
    if (deficit / (n + 1) > tol * norm)
        throw std::runtime_error("mu_discrete: truncation N too small for requested tolerance");
    std::vector<double> mu(static_cast<std::size_t>(n), 0.0);
    for (int i = 1; i <= n; ++i)
        mu[static_cast<std::size_t>(i - 1)] = nu[static_cast<std::size_t>(i - 1)] / (i * norm);
    return mu;
}

// Binary-splitting closed form: Poisson(rho/c) conditioned to be positive.
inline double mu_binary(double rho, double c, int i) {
    if (i < 1) throw std::invalid_argument("mu_binary: need i >= 1");
    const double a = rho / c;
    double log_p = i * std::log(a) - a - std::lgamma(i + 1.0);
    return std::exp(log_p) / (-std::expm1(-a));
}

// Laplace transform of the law nu (subordinator setting): exp(m(lam)).
inline double nu_laplace(const LevyMechanism& mech, double lam, double tol = 1e-12) {
    if (!mech.is_subordinator())
        throw std::domain_error("nu_laplace: mechanism must be a subordinator");
    if (lam < 0) throw std::invalid_argument("nu_laplace: need lam >= 0");
    return mech.exp_m(lam, tol);
}

// Trichotomy deciding positive vs null recurrence for subordinator noise:
// delta != 0, or infinite jump mass (not representable here), or c < rho.
inline bool condition_partial(const LevyMechanism& mech) {
    if (!mech.is_subordinator())
        throw std::domain_error("condition_partial: mechanism must be a subordinator");
    return mech.delta() != 0.0 || mech.rho() > mech.c();
}

// Mean of the stationary law mu: (int_0^inf exp(m))^{-1}. The integrand
// decays like lam^{-rho/c} when delta = 0 and exponentially when delta > 0,
// so the geometric-segment quadrature terminates exactly in the recurrent
// cases; divergence is reported, not returned.
inline double stationary_mean(const LevyMechanism& mech, double tol = 1e-10) {
    if (!mech.is_subordinator())
        throw std::domain_error("stationary_mean: mechanism must be a subordinator");
    if (!condition_partial(mech))
        throw std::runtime_error(
            "stationary_mean: integral of exp(m) diverges (delta = 0 and rho <= c); "
            "the process is null-recurrent and has no stationary mean");
    num::QuadOptions opt;
    opt.abs_tol = tol;
    auto q = num::quad_to_infinity([&](double lam) { return mech.exp_m(lam, 0.01 * tol); }, 0.0, opt);
    if (!q.converged)
        throw std::runtime_error("stationary_mean: quadrature of exp(m) did not converge");
    return 1.0 / q.value;
}

// Laplace transform of the stationary law mu itself (positive-recurrent
// subordinator case): int e^{-lam r} mu(dr) = int_lam^inf e^m / int_0^inf e^m,
// using int_lam^inf e^{-u r} du = e^{-lam r} / r to resolve the size-biasing.
inline double stationary_law_laplace(const LevyMechanism& mech, double lam, double tol = 1e-10) {
    if (lam < 0) throw std::invalid_argument("stationary_law_laplace: need lam >= 0");
    const double mean_mu = stationary_mean(mech, tol); // = 1 / int_0^inf e^m; validates regime
    num::QuadOptions opt;
    opt.abs_tol = tol;
    auto upper = num::quad_to_infinity([&](double u) { return mech.exp_m(u, 0.01 * tol); }, lam, opt);
    if (!upper.converged)
        throw std::runtime_error("stationary_law_laplace: tail quadrature did not converge");
    return upper.value * mean_mu;
}

inline AbsorptionRegime absorption_regime(const LevyMechanism& mech) {
    if (mech.is_subordinator()) return AbsorptionRegime::recurrent;
    // int^inf dlam/psi: Gaussian part makes psi ~ gamma lam^2/2 (convergent);
    // finite activity with gamma = 0 leaves psi(lam)/lam bounded (divergent).
    if (mech.gamma() > 0) return AbsorptionRegime::extinction_with_absorption;
    return AbsorptionRegime::extinction_without_absorption;
}

} // namespace lbp
