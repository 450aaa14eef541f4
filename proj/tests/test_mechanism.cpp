#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "lbp/mechanism.hpp"
#include "lbp/mechanism_kernel.hpp"
#include "lbp/numerics/quadrature.hpp"

using namespace lbp;

namespace {
DiscreteMechanism binary(double d, double c, double rho) {
    return DiscreteMechanism(d, c, {{1, rho}});
}
} // namespace

TEST_CASE("discrete psi: closed forms and factored form agree") {
    auto m = binary(0.0, 1.0, 1.0); // psi(s) = s^2 - s
    CHECK(m.psi(0.5) == doctest::Approx(-0.25).epsilon(1e-14));
    CHECK(m.psi(1.0) == doctest::Approx(0.0));
    CHECK(m.psi(0.0) == doctest::Approx(0.0));

    auto md = binary(0.7, 1.3, 0.9);
    CHECK(md.psi(0.0) == doctest::Approx(md.d()));
    CHECK(md.psi(1.0) == doctest::Approx(0.0));
    // plain vs factored on a grid, machine-level
    DiscreteMechanism multi(0.4, 2.0, {{1, 0.5}, {3, 0.5}, {7, 0.25}});
    for (int i = 0; i <= 100; ++i) {
        const double s = i / 100.0;
        CHECK(multi.psi_plain(s) ==
              doctest::Approx(multi.psi_factored(s)).epsilon(1e-12).scale(1.0));
    }
}

TEST_CASE("tails") {
    auto m = binary(0.0, 1.0, 1.0);
    CHECK(m.tail(1) == doctest::Approx(1.0));
    CHECK(m.tail(2) == doctest::Approx(0.0));
    DiscreteMechanism two(0.0, 1.0, {{1, 0.5}, {3, 0.5}});
    CHECK(two.tail(1) == doctest::Approx(1.0)); // = rho
    CHECK(two.tail(2) == doctest::Approx(0.5));
    CHECK(two.tail(3) == doctest::Approx(0.5));
    CHECK(two.tail(4) == doctest::Approx(0.0));

    auto lev = LevyMechanism::from_uncompensated(0.0, 0.0, 1.0, {}, {2.0, 1.0});
    CHECK(lev.levy_tail(1.0) == doctest::Approx(2.0 * std::exp(-1.0)).epsilon(1e-14));
    auto atom = LevyMechanism::from_uncompensated(0.0, 0.0, 1.0, {{1e6, 1.0}});
    CHECK(atom.levy_tail(1.0) == doctest::Approx(1.0));
    CHECK(atom.condition_L());
}

TEST_CASE("condition (L) holds for representable mechanisms") {
    CHECK(binary(0.0, 1.0, 1.0).condition_L());
    CHECK(LevyMechanism::from_uncompensated(1.0, 0.0, 1.0, {}, {2.0, 1.0}).condition_L());
}

TEST_CASE("exp_m closed forms") {
    // d=0, c=1, pi_1=1: m(s) = s - 1
    auto m0 = binary(0.0, 1.0, 1.0);
    CHECK(m0.exp_m(0.5) == doctest::Approx(std::exp(-0.5)).epsilon(1e-13));
    CHECK(m0.exp_m(1.0) == doctest::Approx(1.0));
    // d=1, c=1, pi_1=1: exp(m) = s^{-1} e^{s-1}
    auto m1 = binary(1.0, 1.0, 1.0);
    for (double s : {0.1, 0.3, 0.9, 1.0})
        CHECK(m1.exp_m(s) == doctest::Approx(std::exp(s - 1.0) / s).epsilon(1e-12));
    // continuous b=1, gamma=1, c=1: m(lam) = lam^2/4 - lam
    auto lev = LevyMechanism::from_uncompensated(1.0, 1.0, 1.0);
    for (double lam : {0.0, 0.5, 2.0, 7.0})
        CHECK(lev.m(lam) == doctest::Approx(lam * lam / 4.0 - lam).epsilon(1e-12));
    CHECK(lev.psi(1.0) == doctest::Approx(-0.5).epsilon(1e-14)); // lam^2/2 - lam at 1
}

TEST_CASE("exp_m quadrature oracle (discrete, away from 0)") {
    // exp(m) from closed form vs direct quadrature of psi/(c v (1-v))
    DiscreteMechanism mech(0.6, 1.1, {{1, 0.5}, {2, 0.7}});
    for (double s : {0.01, 0.05, 0.3, 0.8, 0.99}) {
        num::QuadOptions opt;
        opt.abs_tol = 1e-12;
        auto q = num::adaptive_quad(
            [&](double v) {
                return v < 1.0 ? mech.psi_plain(v) / (mech.c() * v * (1.0 - v))
                               : -(mech.d() - mech.tail(1)) / mech.c();
            },
            s, 1.0, opt);
        CHECK(mech.exp_m(s) == doctest::Approx(std::exp(q.value)).epsilon(1e-10));
    }
}

TEST_CASE("continuous m: jump quadrature vs subordinator route") {
    // exponential jumps: closed form -m = delta lam / c + (rate/c) ln(1 + lam mean)
    auto sub = LevyMechanism::from_uncompensated(1.0, 0.0, 1.0, {}, {2.0, 0.5});
    CHECK(sub.is_subordinator());
    CHECK(sub.delta() == doctest::Approx(1.0));
    for (double lam : {0.3, 1.0, 4.0}) {
        const double closed = -(1.0 * lam + 2.0 * std::log(1.0 + 0.5 * lam));
        CHECK(sub.m(lam) == doctest::Approx(closed).epsilon(1e-10));
        CHECK(sub.m_subordinator_route(lam) == doctest::Approx(closed).epsilon(1e-8));
    }
    // atoms only
    auto sub2 = LevyMechanism::from_uncompensated(0.5, 0.0, 2.0, {{0.7, 1.0}, {2.0, 0.5}});
    for (double lam : {0.5, 2.5})
        CHECK(sub2.m(lam) == doctest::Approx(sub2.m_subordinator_route(lam)).epsilon(1e-8));
}

TEST_CASE("compensated vs uncompensated parametrizations agree") {
    auto un = LevyMechanism::from_uncompensated(0.3, 0.4, 1.5, {{0.5, 2.0}, {3.0, 0.25}},
                                                {1.0, 0.8});
    auto comp = LevyMechanism::from_compensated(un.alpha(), un.gamma(), un.c(), un.atoms(),
                                                un.exp_jumps());
    CHECK(comp.drift() == doctest::Approx(0.3).epsilon(1e-13));
    for (double lam : {0.1, 1.0, 5.0})
        CHECK(un.psi(lam) == doctest::Approx(comp.psi(lam)).epsilon(1e-13));
    // psi(0) = 0 and convexity on a grid
    CHECK(un.psi(0.0) == doctest::Approx(0.0));
    for (double lam : {0.5, 1.0, 2.0, 4.0}) {
        const double h = 1e-4;
        const double second =
            (un.psi(lam + h) - 2.0 * un.psi(lam) + un.psi(lam - h)) / (h * h);
        CHECK(second > 0.0);
    }
}

TEST_CASE("theta, xi, phi: discrete") {
    auto m0 = binary(0.0, 1.0, 1.0);
    // xi = int_0^1 e^{v-1} dv = 1 - 1/e
    CHECK(xi(m0) == doctest::Approx(1.0 - std::exp(-1.0)).epsilon(1e-11));
    // theta is decreasing with theta(1) = 0
    CHECK(theta(m0, 1.0) == doctest::Approx(0.0));
    CHECK(theta(m0, 0.4) > theta(m0, 0.6));

    // d >= c  =>  xi = infinity, analytic test only
    CHECK(std::isinf(xi(binary(1.0, 1.0, 1.0))));
    CHECK(std::isinf(xi(binary(2.0, 1.0, 1.0))));
    CHECK_FALSE(std::isinf(xi(binary(0.3, 1.0, 1.0))));

    // phi o theta = identity
    for (double s : {0.05, 0.3, 0.7, 0.95}) {
        const double t = theta(m0, s);
        CHECK(phi(m0, t) == doctest::Approx(s).epsilon(1e-9));
    }
    CHECK(phi(m0, 0.0) == doctest::Approx(1.0));
    CHECK_THROWS(phi(m0, xi(m0) * 1.01));
}

TEST_CASE("theta, xi, phi: continuous") {
    auto lev = LevyMechanism::from_uncompensated(1.0, 1.0, 1.0);
    CHECK(std::isinf(xi(lev)));
    CHECK(theta(lev, 0.0) == doctest::Approx(0.0));
    CHECK(theta(lev, 1.0) > 0.0);
    for (double lam : {0.2, 1.0, 3.0, 6.0}) {
        const double t = theta(lev, lam);
        CHECK(phi(lev, t) == doctest::Approx(lam).epsilon(1e-9));
    }
    // strictly increasing
    CHECK(theta(lev, 2.0) > theta(lev, 1.0));
}

TEST_CASE("theta/phi kernel agrees with the direct operations") {
    auto m1 = binary(1.0, 1.0, 1.0);
    ThetaPhiKernel dk(m1);
    for (double s : {0.02, 0.2, 0.6, 0.97})
        CHECK(dk.theta(s) == doctest::Approx(theta(m1, s)).epsilon(1e-10));
    for (double t : {0.01, 0.5, 2.0, 10.0})
        CHECK(dk.phi(t) == doctest::Approx(phi(m1, t)).epsilon(1e-9));

    auto lev = LevyMechanism::from_uncompensated(1.0, 1.0, 1.0);
    ThetaPhiKernel ck(lev);
    for (double lam : {0.2, 1.5, 4.0})
        CHECK(ck.theta(lam) == doctest::Approx(theta(lev, lam)).epsilon(1e-10));
    for (double t : {0.05, 0.4, 1.2})
        CHECK(ck.phi(t) == doctest::Approx(phi(lev, t)).epsilon(1e-9));
    // phi_pair keeps 1 - phi accurate near the small-s end (discrete)
    auto [v, omv] = dk.phi_pair(1e-9);
    CHECK(v == doctest::Approx(1.0));
    CHECK(omv == doctest::Approx(1e-9).epsilon(1e-3));
}

TEST_CASE("nu_discrete: binary series") {
    // c=1, pi_1=1: exp(m(s)) = e^{s-1}, nu_i = e^{-1}/(i-1)!
    auto nu = nu_discrete(binary(0.0, 1.0, 1.0), 12);
    CHECK(nu[0] == doctest::Approx(0.36787944117144233).epsilon(1e-12));
    CHECK(nu[1] == doctest::Approx(0.36787944117144233).epsilon(1e-12));
    CHECK(nu[2] == doctest::Approx(0.18393972058572117).epsilon(1e-12));
    // c=2: nu_i = e^{-1/2} (1/2)^{i-1} / (i-1)!
    auto nu2 = nu_discrete(binary(0.0, 2.0, 1.0), 8);
    double fact = 1.0;
    for (int i = 1; i <= 8; ++i) {
        if (i > 1) fact *= (i - 1);
        const double expect = std::exp(-0.5) * std::pow(0.5, i - 1) / fact;
        CHECK(nu2[static_cast<std::size_t>(i - 1)] == doctest::Approx(expect).epsilon(1e-12));
    }
    // sums approach 1 monotonically
    double acc = 0;
    double prev_deficit = 1.0;
    for (double x : nu) {
        acc += x;
        const double deficit = 1.0 - acc;
        CHECK(deficit < prev_deficit + 1e-15);
        prev_deficit = deficit;
    }
    CHECK(acc == doctest::Approx(1.0).epsilon(1e-8));
    CHECK_THROWS_AS(nu_discrete(binary(0.5, 1.0, 1.0), 5), std::domain_error);
}

TEST_CASE("mu_discrete equals the conditioned-Poisson closed form") {
    // rho = c = 1: mu_1 = 1/(e-1), mu_2 = mu_1/2, mu_3 = mu_1/6
    CHECK(mu_binary(1.0, 1.0, 1) == doctest::Approx(0.5819767068693265).epsilon(1e-12));
    CHECK(mu_binary(1.0, 1.0, 2) == doctest::Approx(0.29098835343466324).epsilon(1e-12));
    CHECK(mu_binary(1.0, 1.0, 3) == doctest::Approx(0.09699611781155441).epsilon(1e-12));

    auto mu = mu_discrete(binary(0.0, 1.0, 1.0), 40, 1e-12);
    double sum = 0;
    for (int i = 1; i <= 40; ++i) {
        CHECK(mu[static_cast<std::size_t>(i - 1)] ==
              doctest::Approx(mu_binary(1.0, 1.0, i)).epsilon(1e-10).scale(1e-10));
        sum += mu[static_cast<std::size_t>(i - 1)];
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-10));
    // too-small truncation is rejected
    CHECK_THROWS_AS(mu_discrete(binary(0.0, 1.0, 1.0), 2, 1e-12), std::runtime_error);
}

TEST_CASE("nu_laplace and stationary_mean") {
    // pure drift delta=1, c=1: exp(m) = e^{-lam}, mean mu = 1
    auto drift = LevyMechanism::from_uncompensated(1.0, 0.0, 1.0);
    CHECK(nu_laplace(drift, 0.0) == doctest::Approx(1.0));
    for (double lam : {0.5, 1.0, 3.0})
        CHECK(nu_laplace(drift, lam) == doctest::Approx(std::exp(-lam)).epsilon(1e-10));
    CHECK(stationary_mean(drift) == doctest::Approx(1.0).epsilon(1e-8));

    // delta=0, atom jumps with rho=0.5 < c=1: (partial) fails, divergence reported
    auto null_rec = LevyMechanism::from_uncompensated(0.0, 0.0, 1.0, {{1.0, 0.5}});
    CHECK_FALSE(condition_partial(null_rec));
    CHECK_THROWS_AS(stationary_mean(null_rec), std::runtime_error);

    // non-subordinator rejected
    auto nonsub = LevyMechanism::from_uncompensated(-1.0, 0.0, 1.0, {}, {1.0, 1.0});
    CHECK_THROWS_AS(nu_laplace(nonsub, 1.0), std::domain_error);
}

TEST_CASE("condition (partial)") {
    auto d1 = LevyMechanism::from_uncompensated(0.1, 0.0, 1.0, {}, {1.0, 1.0});
    CHECK(condition_partial(d1)); // delta != 0
    auto big = LevyMechanism::from_uncompensated(0.0, 0.0, 1.0, {}, {2.0, 1.0});
    CHECK(condition_partial(big)); // rho = 2 > c = 1
    auto small = LevyMechanism::from_uncompensated(0.0, 0.0, 1.0, {}, {0.5, 1.0});
    CHECK_FALSE(condition_partial(small));
    auto equal = LevyMechanism::from_uncompensated(0.0, 0.0, 1.0, {}, {1.0, 1.0});
    CHECK_FALSE(condition_partial(equal)); // strict inequality
}

TEST_CASE("absorption regime trichotomy") {
    CHECK(absorption_regime(LevyMechanism::from_uncompensated(1.0, 0.0, 1.0, {}, {1.0, 1.0})) ==
          AbsorptionRegime::recurrent);
    CHECK(absorption_regime(LevyMechanism::from_uncompensated(1.0, 1.0, 1.0)) ==
          AbsorptionRegime::extinction_with_absorption);
    // gamma = 0, downward drift, finite jumps: non-subordinator, no absorption
    CHECK(absorption_regime(LevyMechanism::from_uncompensated(-1.0, 0.0, 1.0, {}, {1.0, 1.0})) ==
          AbsorptionRegime::extinction_without_absorption);
}

TEST_CASE("subordinator dual-route psi identity") {
    auto sub = LevyMechanism::from_uncompensated(0.7, 0.0, 1.0, {{0.4, 1.0}}, {1.5, 2.0});
    REQUIRE(sub.is_subordinator());
    const double delta = sub.delta();
    for (double lam : {0.1, 0.7, 2.0, 6.0}) {
        // psi(lam) = -delta lam - int (1 - e^{-lam r}) Pi(dr)
        double jump = 0.4 != 0.0 ? 1.0 * (-std::expm1(-lam * 0.4)) : 0.0;
        const double kappa = 1.0 / 2.0;
        jump += 1.5 * lam / (kappa + lam);
        CHECK(sub.psi(lam) == doctest::Approx(-delta * lam - jump).epsilon(1e-12));
    }
}

TEST_CASE("discrete theta monotone decreasing, continuous increasing") {
    auto md = binary(0.5, 1.0, 1.0);
    double prev = theta(md, 0.05);
    for (double s : {0.2, 0.5, 0.8, 1.0}) {
        const double cur = theta(md, s);
        CHECK(cur < prev);
        prev = cur;
    }
    auto lev = LevyMechanism::from_uncompensated(0.5, 2.0, 1.0);
    double prevc = 0;
    for (double lam : {0.5, 1.0, 2.0, 4.0}) {
        const double cur = theta(lev, lam);
        CHECK(cur > prevc);
        prevc = cur;
    }
}

TEST_CASE("mechanism validation") {
    CHECK_THROWS_AS(DiscreteMechanism(0.0, 0.0, {{1, 1.0}}), std::invalid_argument);
    CHECK_THROWS_AS(DiscreteMechanism(-0.1, 1.0, {{1, 1.0}}), std::invalid_argument);
    CHECK_THROWS_AS(DiscreteMechanism(0.0, 1.0, {}), std::invalid_argument);
    CHECK_THROWS_AS(DiscreteMechanism(0.0, 1.0, {{0, 1.0}}), std::invalid_argument);
    CHECK_THROWS_AS(LevyMechanism::from_uncompensated(0.0, -1.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(LevyMechanism::from_uncompensated(0.0, 1.0, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(binary(0.0, 1.0, 1.0).psi(1.5), std::invalid_argument);
    CHECK_THROWS_AS(binary(0.0, 1.0, 1.0).m(0.0), std::invalid_argument);
}
