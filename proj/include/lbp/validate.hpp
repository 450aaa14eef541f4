#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lbp/continuous_process.hpp"
#include "lbp/discrete_process.hpp"
#include "lbp/mechanism.hpp"
#include "lbp/numerics/parallel.hpp"
#include "lbp/numerics/stats.hpp"
#include "lbp/riccati.hpp"

// Monte-Carlo-versus-closed-form validation criteria. Each criterion pins
// its own mechanism, replica budget and tolerance; only the seed and the
// worker count come from the caller so runs stay reproducible.
namespace lbp::validate {

struct ValidateOptions {
    std::uint64_t seed = 24601;
    int threads = 0;
};

struct CheckResult {
    std::string name;
    double measured = 0;
    double tolerance = 0;
    bool pass = false;
    std::string detail;
};

struct CriterionResult {
    int id = 0;
    std::string name;
    bool pass = true;
    std::vector<CheckResult> checks;
    double seconds = 0;

    void add(CheckResult c) {
        pass = pass && c.pass;
        checks.push_back(std::move(c));
    }
};

namespace detail {

inline CheckResult below(const std::string& name, double measured, double tol,
                         const std::string& detail = "") {
    return {name, measured, tol, measured < tol, detail};
}

inline DiscreteMechanism binary(double d, double c, double rho) {
    return DiscreteMechanism(d, c, {{1, rho}});
}

inline LevyMechanism feller() { return LevyMechanism::from_uncompensated(1.0, 1.0, 1.0); }

} // namespace detail

// Shared Monte Carlo artifacts reused across criteria (the extinction study
// feeds both the Laplace-transform and the expectation checks).
class Session {
public:
    explicit Session(ValidateOptions opts = {}) : opts_(opts) {}

    const ValidateOptions& options() const { return opts_; }

    const std::vector<ExtinctionSample>& extinction_samples_from(long x0) {
        auto& slot = x0 == 1000 ? ext_1000_ : ext_2000_;
        if (!slot) {
            RunConfig cfg;
            cfg.seed = opts_.seed + (x0 == 1000 ? 0 : 1);
            cfg.replicas = 100000;
            cfg.t_max = 60.0;
            cfg.threads = opts_.threads;
            slot = extinction_samples(detail::binary(1.0, 1.0, 1.0), x0, cfg);
        }
        return *slot;
    }

    CriterionResult run(int id) {
        using clock = std::chrono::steady_clock;
        const auto t0 = clock::now();
        CriterionResult res;
        switch (id) {
            case 1: res = criterion1(); break;
            case 2: res = criterion2(); break;
            case 3: res = criterion3(); break;
            case 4: res = criterion4(); break;
            case 5: res = criterion5(); break;
            case 6: res = criterion6(); break;
            case 7: res = criterion7(); break;
            case 8: res = criterion8(); break;
            case 9: res = criterion9(); break;
            case 10: res = criterion10(); break;
            case 11: res = criterion11(); break;
            default: throw std::invalid_argument("unknown criterion id");
        }
        res.id = id;
        res.seconds = std::chrono::duration<double>(clock::now() - t0).count();
        return res;
    }

private:
    // 1. Stationary law: time-weighted occupation vs conditioned Poisson.
    CriterionResult criterion1() {
        CriterionResult res;
        res.name = "stationary occupation vs conditioned-Poisson law (TV)";
        RunConfig cfg;
        cfg.seed = opts_.seed;
        cfg.t_max = 1e5;
        cfg.burn_in = 100.0;
        auto occ = occupation_distribution(detail::binary(0.0, 1.0, 1.0), 1, cfg);
        std::vector<double> target(std::max<std::size_t>(occ.size(), 64), 0.0);
        for (std::size_t i = 1; i < target.size(); ++i)
            target[i] = mu_binary(1.0, 1.0, static_cast<int>(i));
        res.add(detail::below("tv_distance", num::tv_distance(occ, target), 0.02,
                              "t_max=1e5, burn_in=100"));
        return res;
    }

    // 2. Series route vs closed form for the stationary law.
    CriterionResult criterion2() {
        CriterionResult res;
        res.name = "power-series stationary law vs closed form";
        auto mu = mu_discrete(detail::binary(0.0, 1.0, 1.0), 40, 1e-12);
        double max_diff = 0;
        for (int i = 1; i <= 30; ++i)
            max_diff = std::max(max_diff,
                                std::abs(mu[static_cast<std::size_t>(i - 1)] - mu_binary(1.0, 1.0, i)));
        res.add(detail::below("max_abs_diff(i<=30)", max_diff, 1e-10));
        return res;
    }

    // 3. Extinction-time Laplace transform vs Monte Carlo from x_inf.
    CriterionResult criterion3() {
        CriterionResult res;
        res.name = "extinction Laplace transform (q=1) vs MC from x_inf";
        const auto mech = detail::binary(1.0, 1.0, 1.0);
        const auto& s1 = extinction_samples_from(1000);
        const auto& s2 = extinction_samples_from(2000);
        long censored = 0;
        double acc1 = 0;
        for (const auto& s : s1) {
            censored += s.censored;
            acc1 += std::exp(-s.T_a);
        }
        acc1 /= static_cast<double>(s1.size());
        double acc2 = 0;
        for (const auto& s : s2) acc2 += std::exp(-s.T_a);
        acc2 /= static_cast<double>(s2.size());

        const double closed = laplace_Ta_infinity(mech, 1.0);
        res.add(detail::below("censored_fraction",
                              static_cast<double>(censored) / static_cast<double>(s1.size()),
                              1e-3));
        res.add(detail::below("|closed - mc|", std::abs(closed - acc1), 0.01,
                              "closed=" + std::to_string(closed) + ", mc=" + std::to_string(acc1)));
        res.add(detail::below("|mc(x2000) - mc(x1000)|", std::abs(acc2 - acc1), 0.002));
        return res;
    }

    // 4. Expected extinction time from infinity: dual quadrature routes + MC.
    CriterionResult criterion4() {
        CriterionResult res;
        res.name = "expected extinction time from infinity";
        const auto mech = detail::binary(1.0, 1.0, 1.0);
        ThetaPhiKernel kern(mech);
        const double inf = std::numeric_limits<double>::infinity();
        const double m_form = riccati_detail::expected_Ta_m_form(kern, inf, 1e-9);
        const double s_form = riccati_detail::expected_Ta_s_form(kern, inf, 1e-9);
        res.add(detail::below("|m_form - s_form|", std::abs(m_form - s_form), 1e-8,
                              "m=" + std::to_string(m_form) + ", s=" + std::to_string(s_form)));

        const auto& samples = extinction_samples_from(1000);
        std::vector<double> tas;
        tas.reserve(samples.size());
        long censored = 0;
        for (const auto& s : samples) {
            censored += s.censored;
            tas.push_back(s.T_a);
        }
        auto me = num::mean_and_stderr(tas);
        res.add(detail::below("censored_fraction",
                              static_cast<double>(censored) / static_cast<double>(samples.size()),
                              1e-3));
        res.add(detail::below("relative_error(MC)", std::abs(me.mean - m_form) / m_form, 0.05,
                              "mc=" + std::to_string(me.mean)));
        return res;
    }

    // 5. Lamperti route vs direct Euler route, marginal at t = 1.
    CriterionResult criterion5() {
        CriterionResult res;
        res.name = "time-change route vs SDE route (KS at t=1)";
        const auto mech = detail::feller();
        const long n = 10000;
        num::RandomStream root(opts_.seed + 5);
        auto run_pair = [&](double dt) {
            auto lam = num::parallel_replicas<double>(
                n, root,
                [&](long, num::RandomStream& s) {
                    return lamperti_endpoint(mech, 1.0, 1.0, dt, s);
                },
                opts_.threads);
            num::RandomStream root2(opts_.seed + 6);
            auto sde = num::parallel_replicas<double>(
                n, root2,
                [&](long, num::RandomStream& s) {
                    return feller_endpoint(1.0, 1.0, 1.0, 1.0, 1.0, dt, s);
                },
                opts_.threads);
            return num::ks_two_sample(lam, sde);
        };
        const double ks = run_pair(1e-3);
        const double ks_half = run_pair(5e-4);
        res.add(detail::below("ks_distance(dt=1e-3)", ks, 0.02));
        res.add(detail::below("|ks(dt) - ks(dt/2)|", std::abs(ks - ks_half), 0.01,
                              "ks_half=" + std::to_string(ks_half)));
        return res;
    }

    // 6. Resolvent formula vs MC at an independent exponential time.
    CriterionResult criterion6() {
        CriterionResult res;
        res.name = "resolvent formula vs MC at Exp(q) time";
        const auto mech = detail::feller();
        auto sol = solve_wq(mech, 1.0);
        const double qg = sol.q * resolvent_G(sol, 1.0, 1.0);

        num::RandomStream root(opts_.seed + 7);
        const long n = 100000;
        auto vals = num::parallel_replicas<double>(
            n, root,
            [&](long, num::RandomStream& s) {
                const double tau = s.exponential(1.0);
                const double z = feller_endpoint(1.0, 1.0, 1.0, 1.0, tau, 1e-3, s);
                return std::exp(-z);
            },
            opts_.threads);
        auto me = num::mean_and_stderr(vals);
        res.add(detail::below("|qG - mc|", std::abs(qg - me.mean), 0.01,
                              "qG=" + std::to_string(qg) + ", mc=" + std::to_string(me.mean)));
        res.add(detail::below("|qG(x=0) - 1|", std::abs(sol.q * resolvent_G(sol, 0.0, 3.0) - 1.0),
                              1e-8));
        res.add(detail::below("|qG(lam=0) - 1|", std::abs(sol.q * resolvent_G(sol, 2.0, 0.0) - 1.0),
                              1e-8));
        return res;
    }

    // 7. Riccati solution quality across q and settings.
    CriterionResult criterion7() {
        CriterionResult res;
        res.name = "Riccati solution quality (residual, uniqueness, envelope)";
        RiccatiOptions a;
        RiccatiOptions b;
        b.t_growth = 3.0;
        b.compare_points = 90;
        double worst_res = 0, worst_sup = 0, worst_end = 0;
        bool positive = true, envelope = true;
        for (double q : {0.1, 1.0, 10.0}) {
            for (int setting = 0; setting < 2; ++setting) {
                auto solve_one = [&](const RiccatiOptions& o) {
                    return setting == 0 ? solve_wq(detail::binary(1.0, 1.0, 1.0), q, o)
                                        : solve_wq(detail::feller(), q, o);
                };
                auto sa = solve_one(a);
                auto sb = solve_one(b);
                worst_res = std::max(worst_res, sa.max_residual);
                worst_end = std::max(worst_end, sa.w.back());
                double sup = 0;
                for (double s = 0.02; s < 2.0; s *= 1.25)
                    sup = std::max(sup, std::abs(sa.w_at(s) - sb.w_at(s)));
                worst_sup = std::max(worst_sup, sup);
                const std::size_t n = sa.grid.size();
                const std::size_t tenth = std::max<std::size_t>(n / 10, 1);
                for (std::size_t i = 0; i < n; ++i) {
                    positive = positive && sa.w[i] >= 0.0;
                    if (i < tenth || i + tenth >= n) {
                        const double env =
                            std::sqrt(q) * std::sqrt(sa.kernel->r_squared(sa.grid[i]));
                        envelope = envelope && sa.w[i] <= env + 1e-8;
                    }
                }
            }
        }
        res.add(detail::below("max_residual", worst_res, 1e-6));
        res.add(detail::below("schedule_disagreement", worst_sup, 1e-5));
        res.add(detail::below("terminal_w", worst_end, 1e-8));
        res.add({"positivity", positive ? 1.0 : 0.0, 1.0, positive, ""});
        res.add({"sqrt(q)r envelope (outer 10%)", envelope ? 1.0 : 0.0, 1.0, envelope, ""});
        return res;
    }

    // 8. Long-term regime trichotomy.
    CriterionResult criterion8() {
        CriterionResult res;
        res.name = "long-term regime trichotomy";
        // (a) positive-recurrent subordinator: Laplace transform of Z_50
        {
            auto mech = LevyMechanism::from_uncompensated(1.0, 0.0, 1.0, {}, {1.0, 1.0});
            num::RandomStream root(opts_.seed + 8);
            const long n = 10000;
            auto zs = num::parallel_replicas<double>(
                n, root,
                [&](long, num::RandomStream& s) {
                    return lamperti_endpoint(mech, 1.0, 50.0, 1e-3, s);
                },
                opts_.threads);
            double worst = 0;
            std::string det;
            for (double lam : {0.5, 1.0, 2.0}) {
                double acc = 0;
                for (double z : zs) acc += std::exp(-lam * z);
                acc /= static_cast<double>(n);
                const double closed = stationary_law_laplace(mech, lam);
                worst = std::max(worst, std::abs(acc - closed));
                det += "lam=" + std::to_string(lam) + ": mc=" + std::to_string(acc) +
                       " closed=" + std::to_string(closed) + "; ";
            }
            res.add(detail::below("(a) |mc - stationary Laplace|", worst, 0.02, det));
        }
        // (b) null-recurrent: P(Z_t > 0.1) decreasing below 0.1
        {
            auto mech = LevyMechanism::from_uncompensated(0.0, 0.0, 1.0, {}, {0.5, 1.0});
            num::RandomStream root(opts_.seed + 9);
            const long n = 2000;
            std::vector<double> times{25.0, 100.0, 400.0};
            std::vector<double> frac(times.size(), 0.0);
            auto rows = num::parallel_replicas<std::vector<double>>(
                n, root,
                [&](long, num::RandomStream& s) {
                    return lamperti_checkpoints(mech, 1.0, times, 1e-2, s);
                },
                opts_.threads);
            for (const auto& zrow : rows)
                for (std::size_t j = 0; j < times.size(); ++j) frac[j] += zrow[j] > 0.1;
            for (double& f : frac) f /= static_cast<double>(n);
            const bool decreasing = frac[0] >= frac[1] && frac[1] >= frac[2];
            res.add({"(b) P(Z_t > 0.1) decreasing", decreasing ? 1.0 : 0.0, 1.0, decreasing,
                     "fracs=" + std::to_string(frac[0]) + "," + std::to_string(frac[1]) + "," +
                         std::to_string(frac[2])});
            res.add(detail::below("(b) P(Z_400 > 0.1)", frac[2], 0.1));
        }
        // (c) Gaussian non-subordinator: absorption in finite time
        {
            num::RandomStream root(opts_.seed + 10);
            const long n = 10000;
            auto absorbed = num::parallel_replicas<char>(
                n, root,
                [&](long, num::RandomStream& s) {
                    return static_cast<char>(
                        !feller_extinction_time(1.0, 1.0, 1.0, 1.0, 60.0, 1e-3, s).second);
                },
                opts_.threads);
            double frac = 0;
            for (char aflag : absorbed) frac += aflag;
            frac /= static_cast<double>(n);
            res.add({"(c) absorbed fraction by t=60", frac, 0.999, frac > 0.999, ""});
        }
        // (d) gamma = 0 non-subordinator: extinction without absorption
        {
            auto mech = LevyMechanism::from_uncompensated(-1.0, 0.0, 1.0, {}, {1.0, 1.0});
            num::RandomStream root(opts_.seed + 11);
            const long n = 2000;
            std::vector<double> times{2.0, 8.0, 32.0};
            auto rows = num::parallel_replicas<std::vector<double>>(
                n, root,
                [&](long, num::RandomStream& s) {
                    return lamperti_checkpoints(mech, 1.0, times, 1e-2, s);
                },
                opts_.threads);
            bool all_positive = true;
            std::vector<std::vector<double>> cols(times.size());
            for (const auto& zrow : rows)
                for (std::size_t j = 0; j < times.size(); ++j) {
                    all_positive = all_positive && zrow[j] > 0.0;
                    cols[j].push_back(zrow[j]);
                }
            auto quantile95 = [](std::vector<double> v) {
                std::sort(v.begin(), v.end());
                return v[static_cast<std::size_t>(0.95 * static_cast<double>(v.size()))];
            };
            const double q0 = quantile95(cols[0]);
            const double q2 = quantile95(cols[2]);
            res.add({"(d) no absorption at finite times", all_positive ? 1.0 : 0.0, 1.0,
                     all_positive, ""});
            res.add({"(d) upper-quantile decay", q2, q0, q2 < q0,
                     "q95(t=2)=" + std::to_string(q0) + ", q95(t=32)=" + std::to_string(q2)});
        }
        return res;
    }

    // 9. Scaling convergence of the rescaled binary family to the diffusion.
    CriterionResult criterion9() {
        CriterionResult res;
        res.name = "scaling convergence to the logistic diffusion (KS over n)";
        const double lambda = 1.0, delta = 0.5, gamma = 1.0, c = 1.0, x = 1.0;
        const long n_rep = 10000;
        num::RandomStream root_e(opts_.seed + 12);
        auto euler = num::parallel_replicas<double>(
            n_rep, root_e,
            [&](long, num::RandomStream& s) {
                return feller_endpoint(lambda - delta, c, gamma, x, 1.0, 1e-3, s);
            },
            opts_.threads);
        std::vector<double> ks_vals;
        std::string det;
        int idx = 0;
        for (long nn : {10L, 30L, 100L}) {
            auto fam = scaled_family(nn, lambda, delta, gamma, c);
            num::RandomStream root(opts_.seed + 13 + static_cast<std::uint64_t>(idx++));
            auto zs = num::parallel_replicas<double>(
                n_rep, root,
                [&](long, num::RandomStream& s) {
                    return scaled_family_endpoint(fam, x, 1.0, s);
                },
                opts_.threads);
            ks_vals.push_back(num::ks_two_sample(zs, euler));
            det += "n=" + std::to_string(nn) + ": ks=" + std::to_string(ks_vals.back()) + "; ";
        }
        const bool decreasing = ks_vals[0] > ks_vals[1] && ks_vals[1] > ks_vals[2];
        res.add({"ks strictly decreasing over n in {10,30,100}", decreasing ? 1.0 : 0.0, 1.0,
                 decreasing, det});
        return res;
    }

    // 10. Dynkin generator self-consistency at small t.
    CriterionResult criterion10() {
        CriterionResult res;
        res.name = "Dynkin generator check (exponential test function)";
        RunConfig cfg;
        cfg.seed = opts_.seed + 14;
        cfg.replicas = 100000;
        cfg.dt = 2e-4;
        cfg.threads = opts_.threads;
        auto r = dynkin_exponential_check(detail::feller(), 1.0, 1.0, 0.1, cfg);
        res.add({"residual vs 3 std errors", r.residual, 3.0 * r.std_error,
                 r.residual <= 3.0 * r.std_error,
                 "residual=" + std::to_string(r.residual) +
                     ", sigma=" + std::to_string(r.std_error)});
        return res;
    }

    // 11. Integration-by-parts identity of the transform kernel.
    CriterionResult criterion11() {
        CriterionResult res;
        res.name = "integration-by-parts identity of the transform kernel";
        auto sol = solve_wq(detail::feller(), 1.0);
        const auto& k = *sol.kernel;
        double worst = 0;
        for (double lam : {0.5, 1.0, 2.0}) {
            const double t_up = k.theta(lam);
            const double lhs = riccati_detail::outer_integral_log(
                [&](double t) {
                    const double inner = riccati_detail::inner_integral(
                        sol, t, [](double) { return 1.0; }, 1e-12);
                    return std::exp(sol.W_at(t)) * inner;
                },
                t_up, 1e-11);
            const double rhs = std::expm1(sol.W_at(t_up));
            worst = std::max(worst, std::abs(lhs - rhs) / rhs);
        }
        res.add(detail::below("max relative error (lam in {0.5,1,2})", worst, 1e-6));
        return res;
    }

    ValidateOptions opts_;
    std::optional<std::vector<ExtinctionSample>> ext_1000_, ext_2000_;
};

inline std::vector<int> suite_criteria(const std::string& suite) {
    if (suite == "stationary") return {1, 2, 8};
    if (suite == "extinction") return {3, 4};
    if (suite == "lamperti") return {5, 6, 7, 10, 11};
    if (suite == "scaling") return {9};
    if (suite == "all") return {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11};
    throw std::invalid_argument("unknown validation suite: " + suite);
}

} // namespace lbp::validate
