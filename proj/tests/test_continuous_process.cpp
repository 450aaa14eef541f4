#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "lbp/continuous_process.hpp"
#include "lbp/discrete_process.hpp" // logistic_ode
#include "lbp/numerics/parallel.hpp"
#include "lbp/numerics/stats.hpp"
#include "lbp/riccati.hpp"

using namespace lbp;

namespace {
LevyMechanism feller(double b, double c, double gamma) {
    return LevyMechanism::from_uncompensated(b, gamma, c);
}
} // namespace

TEST_CASE("simulate_ou: pure decay when X = 0") {
    auto mech = LevyMechanism::from_uncompensated(0.0, 0.0, 1.0);
    RunConfig cfg;
    cfg.t_max = 3.0;
    cfg.dt = 0.01;
    num::RandomStream rng(1);
    auto s = rng.split(0);
    auto path = simulate_ou(mech, 2.0, cfg, s);
    REQUIRE(path.capped);
    for (std::size_t i = 0; i < path.t.size(); ++i)
        CHECK(path.r[i] == doctest::Approx(2.0 * std::exp(-path.t[i])).epsilon(1e-12));
    CHECK_FALSE(path.T0.has_value());
}

TEST_CASE("simulate_ou: exact Gaussian transition moments") {
    auto mech = feller(0.7, 1.3, 0.9); // b=0.7, c=1.3, gamma=0.9
    RunConfig cfg;
    cfg.t_max = 0.3;
    cfg.dt = 0.3; // single step to t_max
    const double x0 = 1.5;
    num::RandomStream root(77);
    const int n = 40000;
    std::vector<double> vals(n);
    for (int i = 0; i < n; ++i) {
        auto s = root.split(static_cast<std::uint64_t>(i));
        auto path = simulate_ou(mech, x0, cfg, s);
        vals[static_cast<std::size_t>(i)] = path.r.back();
    }
    const double c = 1.3, b = 0.7, gamma = 0.9, h = 0.3;
    const double mean = x0 * std::exp(-c * h) + (b / c) * (1.0 - std::exp(-c * h));
    const double var = gamma * (1.0 - std::exp(-2.0 * c * h)) / (2.0 * c);
    auto me = num::mean_and_stderr(vals);
    CHECK(std::abs(me.mean - mean) < 4.0 * me.std_error);
    double ss = 0;
    for (double v : vals) ss += (v - me.mean) * (v - me.mean);
    const double sample_var = ss / (n - 1);
    CHECK(sample_var == doctest::Approx(var).epsilon(0.05));
}

TEST_CASE("simulate_ou: subordinator paths stay positive and reach nu") {
    // delta=1, exponential jumps rate 1 mean 1, c=1
    auto mech = LevyMechanism::from_uncompensated(1.0, 0.0, 1.0, {}, {1.0, 1.0});
    REQUIRE(mech.is_subordinator());
    RunConfig cfg;
    cfg.t_max = 8.0;
    cfg.dt = 0.01;
    num::RandomStream root(5);
    const int n = 4000;
    std::vector<double> r_end(n);
    for (int i = 0; i < n; ++i) {
        auto s = root.split(static_cast<std::uint64_t>(i));
        auto path = simulate_ou(mech, 1.0, cfg, s);
        CHECK_FALSE(path.T0.has_value());
        for (double r : path.r) CHECK(r > 0.0);
        r_end[static_cast<std::size_t>(i)] = path.r.back();
    }
    // E[e^{-lam R_t}] -> exp(m(lam)) (stationary law of the OU-type process)
    for (double lam : {0.5, 1.0}) {
        double acc = 0;
        for (double r : r_end) acc += std::exp(-lam * r);
        acc /= n;
        CHECK(std::abs(acc - nu_laplace(mech, lam)) < 0.02);
    }
}

TEST_CASE("simulate_ou: non-subordinator paths hit zero") {
    auto mech = feller(1.0, 1.0, 1.0);
    RunConfig cfg;
    cfg.t_max = 30.0;
    cfg.dt = 1e-2;
    num::RandomStream root(9);
    int hit = 0;
    const int n = 300;
    for (int i = 0; i < n; ++i) {
        auto s = root.split(static_cast<std::uint64_t>(i));
        auto path = simulate_ou(mech, 1.0, cfg, s);
        if (path.T0) {
            ++hit;
            CHECK(path.r.back() == 0.0);
        }
    }
    CHECK(hit > 0.95 * n); // R oscillates below 0 eventually
}

TEST_CASE("lamperti_forward: synthetic constant path") {
    OUPath path;
    path.c = 1.0;
    path.gamma = 1.0; // treat cells as diffusive so the trapezoid is used
    path.drift = 0.0;
    const double a = 2.5;
    for (int i = 0; i <= 1000; ++i) {
        path.t.push_back(i * 0.01);
        path.r.push_back(a);
    }
    auto traj = lamperti_forward(path, 0.5, 20.0);
    // eta_t = t/a, C_t = a t, Z == a until the path runs out (t_R = 10 -> eta = 4)
    for (std::size_t i = 0; i < traj.t.size(); ++i)
        CHECK(traj.z[i] == doctest::Approx(a).epsilon(1e-9));
    CHECK(traj.t.back() == doctest::Approx(4.0).epsilon(0.15));
    CHECK(traj.cap_hit); // ran out of R-path before t = 20
}

TEST_CASE("lamperti round trip: C recovered from Z") {
    // Z = R o C with C' = Z: rebuild eta from the output and compare to the
    // direct integral on the OU grid
    auto mech = feller(0.5, 1.0, 1.0);
    RunConfig cfg;
    cfg.t_max = 4.0;
    cfg.dt = 1e-3;
    num::RandomStream root(123);
    auto s = root.split(1);
    auto path = simulate_ou(mech, 1.0, cfg, s);
    auto traj = lamperti_forward(path, 1e-3, 3.0);
    REQUIRE(traj.t.size() > 100);
    // C_t = int_0^t Z_s ds maps output times back to R-times; then
    // R(C_t) should equal Z_t (consistency of the inverse pair)
    double C = 0;
    for (std::size_t i = 1; i < traj.t.size() && !traj.absorbed_at; ++i) {
        const double dt_out = traj.t[i] - traj.t[i - 1];
        C += 0.5 * dt_out * (traj.z[i] + traj.z[i - 1]);
        // find R at time C by linear interpolation on the recorded grid
        auto it = std::lower_bound(path.t.begin(), path.t.end(), C);
        if (it == path.t.end() || it == path.t.begin()) break;
        const std::size_t j = static_cast<std::size_t>(std::distance(path.t.begin(), it));
        const double w = (C - path.t[j - 1]) / (path.t[j] - path.t[j - 1]);
        const double r_at_C = path.r[j - 1] + w * (path.r[j] - path.r[j - 1]);
        if (traj.z[i] > 0.05) // away from the absorption zone
            CHECK(r_at_C == doctest::Approx(traj.z[i]).epsilon(0.02));
    }
}

TEST_CASE("feller euler: deterministic limit tracks the logistic ODE") {
    RunConfig cfg;
    cfg.t_max = 5.0;
    cfg.dt = 1e-3;
    num::RandomStream root(11);
    auto s = root.split(0);
    auto traj = simulate_feller_logistic(1.0, 1.0, 1e-8, 0.5, cfg, s);
    double sup = 0;
    for (std::size_t i = 0; i < traj.t.size(); ++i)
        sup = std::max(sup, std::abs(traj.z[i] - logistic_ode(1.0, 1.0, 0.5, traj.t[i])));
    CHECK(sup < 1e-3);
}

TEST_CASE("feller euler: all paths absorbed eventually") {
    RunConfig cfg;
    cfg.t_max = 60.0;
    cfg.dt = 1e-3;
    num::RandomStream root(13);
    const int n = 2000;
    int absorbed = 0;
    for (int i = 0; i < n; ++i) {
        auto s = root.split(static_cast<std::uint64_t>(i));
        auto [ta, censored] = feller_extinction_time(1.0, 1.0, 1.0, 1.0, cfg.t_max, cfg.dt, s);
        (void)ta;
        absorbed += !censored;
    }
    CHECK(static_cast<double>(absorbed) / n > 0.999);
}

TEST_CASE("feller euler: mean extinction time matches the closed form") {
    RunConfig cfg;
    cfg.dt = 1e-3;
    num::RandomStream root(17);
    const int n = 10000;
    std::vector<double> tas(n);
    for (int i = 0; i < n; ++i) {
        auto s = root.split(static_cast<std::uint64_t>(i));
        tas[static_cast<std::size_t>(i)] =
            feller_extinction_time(1.0, 1.0, 1.0, 1.0, 100.0, cfg.dt, s).first;
    }
    auto me = num::mean_and_stderr(tas);
    const double closed = expected_Ta(feller(1.0, 1.0, 1.0), 1.0, 1e-9); // 4.4927...
    CHECK(std::abs(me.mean - closed) < 0.05 * closed);

    // the same samples also test the Laplace transform of T_a from x = 1
    auto sol = solve_wq(feller(1.0, 1.0, 1.0), 1.0);
    double lap_mc = 0;
    for (double ta : tas) lap_mc += std::exp(-ta);
    lap_mc /= static_cast<double>(tas.size());
    CHECK(std::abs(lap_mc - laplace_Ta_from_x(sol, 1.0)) < 0.01);
}

TEST_CASE("entrance law matches MC started from a large state") {
    auto mech = feller(1.0, 1.0, 1.0);
    auto sol = solve_wq(mech, 1.0);
    num::RandomStream root(4242);
    const long n = 10000;
    const double lambda = 1.0;
    auto vals = num::parallel_replicas<double>(
        n, root,
        [&](long, num::RandomStream& s) {
            const double tau = s.exponential(1.0);
            const double z = lamperti_endpoint(mech, 1000.0, tau, 2e-3, s);
            return std::exp(-lambda * z);
        },
        0);
    auto me = num::mean_and_stderr(vals);
    CHECK(std::abs(me.mean - entrance_law(sol, lambda)) < 0.015);
}

TEST_CASE("two-route consistency: Lamperti vs Euler marginal at t = 1") {
    auto mech = feller(1.0, 1.0, 1.0);
    RunConfig cfg;
    cfg.dt = 1e-3;
    num::RandomStream root(20240);
    const int n = 4000;
    std::vector<double> lam_route(n), sde_route(n);
    for (int i = 0; i < n; ++i) {
        auto s1 = root.split(static_cast<std::uint64_t>(i));
        lam_route[static_cast<std::size_t>(i)] = lamperti_endpoint(mech, 1.0, 1.0, cfg.dt, s1);
        auto s2 = root.split(static_cast<std::uint64_t>(1000000 + i));
        sde_route[static_cast<std::size_t>(i)] =
            feller_endpoint(1.0, 1.0, 1.0, 1.0, 1.0, cfg.dt, s2);
    }
    const double ks = num::ks_two_sample(lam_route, sde_route);
    CHECK(ks < 0.04); // null fluctuation at n = 4000 is ~0.03
}

TEST_CASE("null-recurrent subordinator case: Z_t -> 0 in probability") {
    // delta = 0, rho = 0.5 < c = 1
    auto mech = LevyMechanism::from_uncompensated(0.0, 0.0, 1.0, {}, {0.5, 1.0});
    REQUIRE(mech.is_subordinator());
    REQUIRE_FALSE(condition_partial(mech));
    num::RandomStream root(31);
    const int n = 800;
    std::vector<double> times{10.0, 40.0, 160.0};
    std::vector<int> above(times.size(), 0);
    for (int i = 0; i < n; ++i) {
        auto s = root.split(static_cast<std::uint64_t>(i));
        auto zs = lamperti_checkpoints(mech, 1.0, times, 1e-2, s);
        for (std::size_t j = 0; j < times.size(); ++j) above[j] += zs[j] > 0.1;
    }
    CHECK(above[0] > above[2]); // decreasing trend
    CHECK(static_cast<double>(above[2]) / n <
          static_cast<double>(above[0]) / n + 0.05);
}

TEST_CASE("gamma = 0 non-subordinator: extinction without absorption") {
    // b = -1 drift down, exponential jumps rate 1 mean 1 (rho = 1)
    auto mech = LevyMechanism::from_uncompensated(-1.0, 0.0, 1.0, {}, {1.0, 1.0});
    REQUIRE_FALSE(mech.is_subordinator());
    REQUIRE(absorption_regime(mech) == AbsorptionRegime::extinction_without_absorption);
    num::RandomStream root(37);
    const int n = 500;
    std::vector<double> times{2.0, 8.0, 32.0};
    std::vector<double> sum(times.size(), 0.0);
    for (int i = 0; i < n; ++i) {
        auto s = root.split(static_cast<std::uint64_t>(i));
        auto zs = lamperti_checkpoints(mech, 1.0, times, 1e-2, s);
        for (std::size_t j = 0; j < times.size(); ++j) {
            CHECK(zs[j] > 0.0); // never absorbed at any finite time
            sum[j] += zs[j];
        }
    }
    CHECK(sum[2] < sum[0]); // mean level decays
}

TEST_CASE("lamperti checkpoints: deterministic and stream-split reproducible") {
    auto mech = feller(1.0, 1.0, 1.0);
    num::RandomStream root(55);
    auto s1 = root.split(3);
    auto s2 = num::RandomStream(55).split(3);
    auto a = lamperti_checkpoints(mech, 1.0, {0.5, 1.0, 2.0}, 1e-3, s1);
    auto b = lamperti_checkpoints(mech, 1.0, {0.5, 1.0, 2.0}, 1e-3, s2);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("dynkin exponential check at the reference point (reduced replicas)") {
    auto mech = feller(1.0, 1.0, 1.0);
    RunConfig cfg;
    cfg.seed = 99;
    cfg.replicas = 20000;
    cfg.dt = 5e-4;
    auto res = dynkin_exponential_check(mech, 1.0, 1.0, 0.1, cfg);
    CHECK(res.residual <= 3.0 * res.std_error);
    CHECK(res.pass_3sigma);

    // t = 0 and lambda = 0 are exact
    auto res0 = dynkin_exponential_check(mech, 1.0, 0.0, 0.1, cfg);
    CHECK(res0.residual < 1e-12);
    RunConfig tiny = cfg;
    tiny.replicas = 100;
    auto rest0 = dynkin_exponential_check(mech, 1.0, 1.0, 0.0, tiny);
    CHECK(rest0.residual < 1e-12);
}

TEST_CASE("dynkin check for a jump mechanism goes through the time change") {
    // Gaussian part plus a jump atom: the Z-path comes from the
    // Ornstein-Uhlenbeck route, the generator from psi
    auto mech = LevyMechanism::from_uncompensated(0.5, 0.5, 1.0, {{0.5, 0.5}});
    RunConfig cfg;
    cfg.seed = 77;
    cfg.replicas = 10000;
    cfg.dt = 1e-3;
    auto res = dynkin_exponential_check(mech, 1.0, 1.0, 0.1, cfg);
    CHECK(res.residual <= 3.0 * res.std_error);

    // pure-jump non-subordinator (gamma = 0, analytic cells)
    auto jumpy = LevyMechanism::from_uncompensated(-0.5, 0.0, 1.0, {}, {1.0, 0.5});
    auto res2 = dynkin_exponential_check(jumpy, 1.0, 1.0, 0.1, cfg);
    CHECK(res2.residual <= 3.0 * res2.std_error);
}
