#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "rbm/classical.hpp"
#include "rbm/wavefunction.hpp"
#include "test_support.hpp"

using namespace rbm;
using namespace rbm::testing;

namespace {

FourVector on_shell(double px, double py, double pz, double m) {
    return {std::sqrt(px * px + py * py + pz * pz + m * m), px, py, pz};
}

}  // namespace

TEST_CASE("classical state construction enforces the mass shell") {
    CHECK_NOTHROW(ClassicalState::make({on_shell(0.3, 0.0, 0.0, 1.0)}, {1.0}));
    // Off-shell energy.
    CHECK_THROWS_AS(ClassicalState::make({{1.5, 0.3, 0.0, 0.0}}, {1.0}), PreconditionError);
    // Negative energy.
    FourVector neg = on_shell(0.3, 0.0, 0.0, 1.0);
    neg.t = -neg.t;
    CHECK_THROWS_AS(ClassicalState::make({neg}, {1.0}), PreconditionError);
}

TEST_CASE("classical trajectories are exact straight lines in tau") {
    const auto cs = ClassicalState::make(
        {on_shell(0.5, 0.0, 0.0, 1.0), on_shell(-0.2, 0.4, 0.0, 2.0)}, {1.0, 2.0});
    const std::vector<FourVector> x0 = {{0.0, 1.0, 0.0, 0.0}, {0.0, -1.0, 0.5, 0.0}};
    const auto traj = classical_trajectory(cs, x0, {0.0, 3.0}, 0.25);
    REQUIRE(traj.n == 2);
    CHECK(traj.reason == TerminationReason::complete);
    CHECK(traj.samples.back().s == doctest::Approx(3.0).epsilon(1e-14));
    for (const auto& smp : traj.samples) {
        for (std::size_t a = 0; a < 2; ++a) {
            const FourVector want = x0[a] + cs.momenta[a] * (smp.s / cs.masses[a]);
            for (int mu = 0; mu < 4; ++mu)
                CHECK(smp.X[a][mu] == doctest::Approx(want[mu]).epsilon(1e-14));
        }
    }
}

TEST_CASE("quantum single-mode trajectory reduces to the classical one") {
    const auto state = plane_wave_state();
    const FourVector p = state.modes()[0][0].four_momentum(1.0);
    const auto cs = ClassicalState::make({p}, {1.0});
    const std::vector<FourVector> x0 = {{0.0, 0.7, 0.0, 0.0}};

    IntegratorConfig cfg;
    cfg.step = 1e-3;
    const auto quantum = integrate(state, x0, {0.0, 2.0}, cfg);
    const auto classical = classical_trajectory(cs, x0, {0.0, 2.0}, 2.0);
    const auto& qf = quantum.samples.back().X[0];
    const auto& cf = classical.samples.back().X[0];
    for (int mu = 0; mu < 4; ++mu) CHECK(std::abs(qf[mu] - cf[mu]) < 1e-9);
}

TEST_CASE("static particle: zero transport residual, exact marginalization") {
    const auto cs = ClassicalState::make({on_shell(0.0, 0.0, 0.0, 1.0)}, {1.0});
    const std::vector<FourVector> x0 = {{0.0, 0.0, 0.0, 0.0}};
    // The surrogate moves rigidly along t only; with velocity (1,0,0,0) and
    // dtau equal to the grid spacing the tau difference and the t difference
    // sample identical Gaussian values and cancel to rounding.
    DeltaGridConfig grid;
    grid.dtau = grid.spacing;
    const auto report = delta_equivariance_check(cs, x0, 0.5, grid);
    CHECK(report.residual < 1e-10);
    CHECK(report.marginalization_l1 < 1e-6);
}

TEST_CASE("moving particle: residual is pure discretization error and refines") {
    const auto cs = ClassicalState::make({on_shell(0.6, 0.0, 0.0, 1.0)}, {1.0});
    const std::vector<FourVector> x0 = {{0.0, -0.3, 0.0, 0.0}};

    DeltaGridConfig coarse;
    coarse.width = 0.4;
    coarse.spacing = 0.1;
    coarse.dtau = 0.05;
    const auto r_coarse = delta_equivariance_check(cs, x0, 0.4, coarse);
    CHECK(r_coarse.residual > 0.0);
    CHECK(r_coarse.residual < 0.1);
    CHECK(r_coarse.marginalization_l1 < 1e-6);

    // Halving the grid spacing and the tau step at fixed width drops the
    // second-order residual by roughly 4x; at least half.
    DeltaGridConfig fine = coarse;
    fine.spacing /= 2.0;
    fine.dtau /= 2.0;
    const auto r_fine = delta_equivariance_check(cs, x0, 0.4, fine);
    CHECK(r_coarse.residual / r_fine.residual >= 1.8);
}

TEST_CASE("surrogate width below three grid cells is rejected") {
    const auto cs = ClassicalState::make({on_shell(0.1, 0.0, 0.0, 1.0)}, {1.0});
    const std::vector<FourVector> x0 = {{0.0, 0.0, 0.0, 0.0}};
    DeltaGridConfig grid;
    grid.width = 0.2;
    grid.spacing = 0.1;  // w < 3h
    CHECK_THROWS_AS(delta_equivariance_check(cs, x0, 0.1, grid), PreconditionError);
}

TEST_CASE("non-relativistic limit identities") {
    const auto cs = ClassicalState::make(
        {on_shell(0.005, 0.0, 0.0, 1.0), on_shell(-0.003, 0.002, 0.0, 1.0)}, {1.0, 1.0});
    for (std::size_t a = 0; a < 2; ++a) {
        const auto r = nonrel_limit_check(cs, a);
        // dtau/dt = 1/gamma = 1 + O(v^2).
        CHECK(r.dtau_dt_deviation < 3e-5);
        CHECK(r.dt2_relation_residual < 1e-10);
        CHECK(r.many_time_identity_residual < 1e-6);
    }
}

TEST_CASE("relativistic momenta are rejected by the slow-motion checks") {
    const auto cs = ClassicalState::make({on_shell(0.5, 0.0, 0.0, 1.0)}, {1.0});
    CHECK_THROWS_AS(nonrel_limit_check(cs, 0), PreconditionError);
}
