#pragma once

#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "lbp/mechanism.hpp"
#include "lbp/numerics/parallel.hpp"
#include "lbp/numerics/random.hpp"
#include "lbp/process_types.hpp"
#include "lbp/riccati.hpp"

namespace lbp {

// Generator rates out of state i: births i*pi_k to i+k, deaths
// d*i + c*i*(i-1) to i-1. State 0 is absorbing.
inline std::vector<std::pair<long, double>> transition_rates(const DiscreteMechanism& mech,
                                                             long i) {
    if (i < 0) throw std::invalid_argument("transition_rates: need i >= 0");
    std::vector<std::pair<long, double>> out;
    if (i == 0) return out;
    const double fi = static_cast<double>(i);
    for (const auto& [k, rate] : mech.pi()) out.emplace_back(i + k, fi * rate);
    const double death = mech.d() * fi + mech.c() * fi * (fi - 1.0);
    if (death > 0) out.emplace_back(i - 1, death);
    return out;
}

inline double total_rate(const DiscreteMechanism& mech, long i) {
    const double fi = static_cast<double>(i);
    return fi * (mech.d() + mech.rho() + mech.c() * (fi - 1.0));
}

namespace discrete_detail {

// One exact jump; returns the new state. Holding time added to t.
inline long step(const DiscreteMechanism& mech, long i, double& t, num::RandomStream& rng) {
    const double fi = static_cast<double>(i);
    const double birth_rate = fi * mech.rho();
    const double death_rate = mech.d() * fi + mech.c() * fi * (fi - 1.0);
    const double total = birth_rate + death_rate;
    t += rng.exponential(total);
    if (rng.uniform01() * total <= death_rate) return i - 1;
    // litter size proportional to pi_k
    const auto& pi = mech.pi();
    if (pi.size() == 1) return i + pi.front().first;
    double u = rng.uniform01() * mech.rho();
    for (const auto& [k, rate] : pi) {
        u -= rate;
        if (u <= 0) return i + k;
    }
    return i + pi.back().first;
}

} // namespace discrete_detail

// Statistically exact sample of the minimal process: exponential holding at
// the total outflow rate, jump chosen proportionally to individual rates.
inline Trajectory simulate_discrete(const DiscreteMechanism& mech, long x0, const RunConfig& cfg,
                                    num::RandomStream& rng) {
    if (x0 < 0) throw std::invalid_argument("simulate_discrete: need x0 >= 0");
    Trajectory traj;
    double t = 0;
    long i = x0;
    traj.t.push_back(0.0);
    traj.z.push_back(static_cast<double>(i));
    if (i == 0) {
        traj.absorbed_at = 0.0;
        return traj;
    }
    while (true) {
        double t_next = t;
        const long j = discrete_detail::step(mech, i, t_next, rng);
        if (t_next > cfg.t_max) {
            traj.cap_hit = true;
            traj.t.push_back(cfg.t_max);
            traj.z.push_back(static_cast<double>(i));
            return traj;
        }
        t = t_next;
        i = j;
        traj.t.push_back(t);
        traj.z.push_back(static_cast<double>(i));
        if (i == 0) {
            traj.absorbed_at = t;
            return traj;
        }
        if (static_cast<double>(i) >= cfg.z_cap) {
            traj.cap_hit = true;
            return traj;
        }
    }
}

// Time-weighted occupation frequencies over [burn_in, t_max]; requires d = 0
// (the positive-recurrent regime).
inline std::vector<double> occupation_distribution(const DiscreteMechanism& mech, long x0,
                                                   const RunConfig& cfg) {
    if (mech.d() != 0.0)
        throw std::domain_error("occupation_distribution: requires d = 0 (recurrent regime)");
    if (x0 < 1) throw std::invalid_argument("occupation_distribution: need x0 >= 1");
    num::RandomStream rng = num::RandomStream(cfg.seed).split(0);
    std::vector<double> mass;
    double t = 0;
    long i = x0;
    while (t < cfg.t_max) {
        double t_next = t;
        const long j = discrete_detail::step(mech, i, t_next, rng);
        const double a = std::max(t, cfg.burn_in);
        const double b = std::min(t_next, cfg.t_max);
        if (b > a) {
            if (static_cast<std::size_t>(i) >= mass.size())
                mass.resize(static_cast<std::size_t>(i) + 1, 0.0);
            mass[static_cast<std::size_t>(i)] += b - a;
        }
        t = t_next;
        i = j;
    }
    const double span = cfg.t_max - cfg.burn_in;
    for (double& m : mass) m /= span;
    return mass; // mass[i] ~ stationary probability of state i
}

struct ExtinctionSample {
    double T_a = 0;
    bool censored = false;
};

// Absorption times from x0, one per replica; replicas hitting t_max are
// reported censored at t_max.
inline std::vector<ExtinctionSample> extinction_samples(const DiscreteMechanism& mech, long x0,
                                                        const RunConfig& cfg) {
    if (!(mech.d() > 0)) throw std::domain_error("extinction_samples: requires d > 0");
    num::RandomStream root(cfg.seed);
    return num::parallel_replicas<ExtinctionSample>(
        cfg.replicas, root,
        [&](long, num::RandomStream& rng) {
            ExtinctionSample out;
            double t = 0;
            long i = x0;
            while (i > 0 && t <= cfg.t_max)
                i = discrete_detail::step(mech, i, t, rng);
            if (i == 0 && t <= cfg.t_max) {
                out.T_a = t;
            } else {
                out.T_a = cfg.t_max;
                out.censored = true;
            }
            return out;
        },
        cfg.threads);
}

// E_inf(T_a) for the integer-state process (d > 0): the double integral
//   int_0^1 dv/(c v (1-v)) e^{-m(v)} int_v^1 du e^{m(u)},
// evaluated through the dual-route machinery shared with the transform layer.
inline double expected_Ta_infinity_discrete(const DiscreteMechanism& mech, double tol = 1e-10) {
    return expected_Ta(mech, std::numeric_limits<double>::infinity(), tol);
}

// P_i(a birth occurs before a death) = rho i / ((rho + d) i + c i (i-1)).
inline double birth_before_death_prob(const DiscreteMechanism& mech, long i) {
    if (i < 1) throw std::invalid_argument("birth_before_death_prob: need i >= 1");
    const double fi = static_cast<double>(i);
    return mech.rho() / (mech.rho() + mech.d() + mech.c() * (fi - 1.0));
}

// Closed-form solution of dz = b z dt - c z^2 dt.
inline double logistic_ode(double b, double c, double z0, double t) {
    if (!(c > 0)) throw std::invalid_argument("logistic_ode: need c > 0");
    if (z0 < 0) throw std::invalid_argument("logistic_ode: need z0 >= 0");
    if (z0 == 0 || t == 0) return z0;
    if (b == 0.0) return z0 / (1.0 + c * z0 * t);
    // b z0 e^{bt} / (b + c z0 (e^{bt}-1)), with expm1 keeping b -> 0 exact
    const double ebt = std::exp(b * t);
    return z0 * ebt / (1.0 + c * z0 * std::expm1(b * t) / b);
}

// Rescaled binary family: N^{(n)} = n Z^{(n)} is binary-splitting with
//   rho_n = gamma/2 n^2 + lambda n, d_n = gamma/2 n^2 + delta n, c_n = c.
// With these rates the generator of N/n equals n times the logistic-diffusion
// generator (drift n(bz - cz^2), variance n gamma z, b = lambda - delta), so
// the weak limit is read along the slowed clock t/n: the descriptor carries
// both the state and the time rescaling.
struct ScaledFamily {
    DiscreteMechanism mech;
    long n = 1;
    double state_scale() const { return 1.0 / static_cast<double>(n); }
    double time_scale() const { return 1.0 / static_cast<double>(n); }
};

inline ScaledFamily scaled_family(long n, double lambda, double delta, double gamma, double c) {
    if (n < 1) throw std::invalid_argument("scaled_family: need n >= 1");
    if (!(lambda > 0) || !(delta > 0) || !(gamma > 0) || !(c > 0))
        throw std::invalid_argument("scaled_family: parameters must be positive");
    const double fn = static_cast<double>(n);
    const double rho_n = 0.5 * gamma * fn * fn + lambda * fn;
    const double d_n = 0.5 * gamma * fn * fn + delta * fn;
    return ScaledFamily{DiscreteMechanism(d_n, c, {{1, rho_n}}), n};
}

// Marginal Z^{(n)}_t = N(t/n) / n started from ceil(n x); used by the scaling
// convergence study.
inline double scaled_family_endpoint(const ScaledFamily& fam, double x, double t,
                                     num::RandomStream& rng) {
    long i = static_cast<long>(std::ceil(x * static_cast<double>(fam.n)));
    const double t_end = t * fam.time_scale();
    double tt = 0;
    while (i > 0) {
        double t_next = tt;
        const long j = discrete_detail::step(fam.mech, i, t_next, rng);
        if (t_next > t_end) break;
        tt = t_next;
        i = j;
    }
    return static_cast<double>(i) * fam.state_scale();
}

} // namespace lbp
