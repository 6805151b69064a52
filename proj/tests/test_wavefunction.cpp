#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <vector>

#include "rbm/rng.hpp"
#include "rbm/wavefunction.hpp"
#include "test_support.hpp"

using namespace rbm;
using namespace rbm::testing;

namespace {

const Complex I{0.0, 1.0};

}  // namespace

TEST_CASE("constructor validation") {
    CHECK_THROWS_AS(ManyBodyState({}, {}, {}, BoxSpec{}), DimensionError);
    CHECK_THROWS_AS(ManyBodyState({ParticleSpec{1.0, 1}}, {{}}, {}, BoxSpec{}), DimensionError);
    CHECK_THROWS_AS(ManyBodyState({ParticleSpec{1.0, 1}}, {{MomentumMode{{0, 0, 0}}}},
                                  {Complex{1, 0}, Complex{0, 0}}, BoxSpec{}),
                    DimensionError);
    CHECK_THROWS_AS(ManyBodyState({ParticleSpec{1.0, 1}},
                                  {{MomentumMode{{0, 0, 0}, -1}}}, {Complex{1, 0}}, BoxSpec{}),
                    DimensionError);
    CHECK_NOTHROW(ManyBodyState::with_negative_energy_modes(
        {ParticleSpec{1.0, 1}}, {{MomentumMode{{0, 0, 0}, -1}}}, {Complex{1, 0}}, BoxSpec{}));
}

TEST_CASE("normalization fixes the covariant amplitude norm") {
    for (const auto& state : {two_mode_state(), entangled_state(), generic_state()}) {
        const double vol = std::pow(10.0, 3) * 10.0;  // L^3 T
        const double total =
            state.amplitude_norm2() * std::pow(vol, static_cast<double>(state.particle_count()));
        CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("plane wave: exact velocity and vanishing quantum potential") {
    const auto state = plane_wave_state();
    const FourVector p = state.modes()[0][0].four_momentum(1.0);
    CounterRng rng(11, 0);
    for (int i = 0; i < 20; ++i) {
        const auto xs = random_config(state, rng);
        const FourVector v = velocity(state, 0, xs);
        for (int mu = 0; mu < 4; ++mu) CHECK(v[mu] == doctest::Approx(p[mu]).epsilon(1e-12));
        CHECK(quantum_potential(state, 0, xs) == doctest::Approx(0.0).epsilon(1e-9));
    }
}

TEST_CASE("analytic first derivatives match central differences") {
    CounterRng rng(21, 0);
    for (const auto& state : {two_mode_state(), entangled_state(), generic_state()}) {
        for (int i = 0; i < 40; ++i) {
            const auto xs = random_config(state, rng);
            const auto f = evaluate(state, xs);
            for (std::size_t a = 0; a < state.particle_count(); ++a) {
                for (int mu = 0; mu < 4; ++mu) {
                    for (int A = 0; A < state.component_dim(); ++A) {
                        const Complex want = fd_first(state, a, mu, xs, A);
                        CHECK(std::abs(f.grad[a][A][mu] - want) < 1e-6 * (1.0 + std::abs(want)));
                    }
                }
            }
        }
    }
}

TEST_CASE("analytic second derivatives match central differences") {
    CounterRng rng(22, 0);
    const auto state = generic_state();
    for (int i = 0; i < 10; ++i) {
        const auto xs = random_config(state, rng);
        for (std::size_t a = 0; a < state.particle_count(); ++a) {
            const auto sec = second_derivatives(state, a, xs);
            for (int mu = 0; mu < 4; ++mu) {
                for (int nu = 0; nu < 4; ++nu) {
                    const Complex want = fd_second(state, a, mu, nu, xs, 0);
                    CHECK(std::abs(sec[0][mu][nu] - want) < 1e-5 * (1.0 + std::abs(want)));
                }
            }
        }
    }
}

TEST_CASE("mode sums satisfy the mass-shell wave equation exactly") {
    CounterRng rng(23, 0);
    const auto state = generic_state();
    for (int i = 0; i < 20; ++i) {
        const auto xs = random_config(state, rng);
        const auto f = evaluate(state, xs);
        for (std::size_t a = 0; a < state.particle_count(); ++a) {
            const double m = state.particles()[a].mass;
            const auto sec = second_derivatives(state, a, xs);
            // box psi = g^{mu nu} d_mu d_nu psi = -m^2 psi
            Complex box{0.0, 0.0};
            for (int mu = 0; mu < 4; ++mu) box += static_cast<double>(metric_sign(mu)) * sec[0][mu][mu];
            CHECK(std::abs(box + m * m * f.psi[0]) < 1e-10 * (1.0 + std::abs(f.psi[0])));
        }
    }
}

TEST_CASE("global phase is a gauge transformation") {
    const auto base = two_mode_state();
    auto amps = base.amplitudes();
    for (auto& c : amps) c *= std::exp(I * 1.234);
    const ManyBodyState rot(base.particles(), base.modes(), amps, base.box());
    CounterRng rng(31, 0);
    for (int i = 0; i < 20; ++i) {
        const auto xs = random_config(base, rng);
        CHECK(density_at(rot, xs) == doctest::Approx(density_at(base, xs)).epsilon(1e-12));
        const FourVector v0 = velocity(base, 0, xs);
        const FourVector v1 = velocity(rot, 0, xs);
        for (int mu = 0; mu < 4; ++mu) CHECK(v1[mu] == doctest::Approx(v0[mu]).epsilon(1e-12));
    }
}

TEST_CASE("density_at agrees with full evaluation") {
    CounterRng rng(32, 0);
    const auto state = generic_state();
    for (int i = 0; i < 50; ++i) {
        const auto xs = random_config(state, rng);
        CHECK(density_at(state, xs) == doctest::Approx(evaluate(state, xs).density).epsilon(1e-13));
    }
}

TEST_CASE("velocity squared matches 1 + 2Q/m") {
    CounterRng rng(33, 0);
    const auto state = two_mode_state();
    for (int i = 0; i < 30; ++i) {
        const auto xs = random_config(state, rng);
        const FourVector v = velocity(state, 0, xs);
        const double q = quantum_potential(state, 0, xs);
        CHECK(dot(v, v) == doctest::Approx(1.0 + 2.0 * q / 1.0).epsilon(1e-8));
    }
}

TEST_CASE("quantum potential matches a finite-difference d'Alembertian of R") {
    const auto state = two_mode_state();
    CounterRng rng(34, 0);
    const double h = 1e-3;
    for (int i = 0; i < 10; ++i) {
        const auto xs = random_config(state, rng);
        const double r0 = std::sqrt(density_at(state, xs));
        double box_r = 0.0;
        for (int mu = 0; mu < 4; ++mu) {
            auto up = xs, dn = xs;
            up[0][mu] += h;
            dn[0][mu] -= h;
            const double second =
                (std::sqrt(density_at(state, up)) - 2.0 * r0 + std::sqrt(density_at(state, dn))) /
                (h * h);
            box_r += metric_sign(mu) * second;
        }
        const double want = box_r / (2.0 * 1.0 * r0);
        CHECK(std::abs(quantum_potential(state, 0, xs) - want) < 1e-4 * (1.0 + std::abs(want)));
    }
}

TEST_CASE("energy statistics from mode weights") {
    // Two modes with distinct energies and weights 0.8^2 : 0.6^2.
    const double p1 = lattice_p(1), p2 = lattice_p(3);
    const ManyBodyState state({ParticleSpec{1.0, 1}},
                              {{MomentumMode{{p1, 0, 0}}, MomentumMode{{p2, 0, 0}}}},
                              {Complex{0.8, 0.0}, Complex{0.0, 0.6}}, BoxSpec{});
    const double e1 = std::sqrt(1.0 + p1 * p1), e2 = std::sqrt(1.0 + p2 * p2);
    const double mean = 0.64 * e1 + 0.36 * e2;
    const double var = 0.64 * e1 * e1 + 0.36 * e2 * e2 - mean * mean;
    const auto st = energy_stats(state, 0);
    CHECK(st.mean == doctest::Approx(mean).epsilon(1e-12));
    CHECK(st.stddev == doctest::Approx(std::sqrt(var)).epsilon(1e-12));

    // Equal-energy superposition: zero spread.
    CHECK(energy_stats(two_mode_state(), 0).stddev == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("spatial norm is independent of the time arguments") {
    const auto state = generic_state();
    const double n0 = spatial_norm(state, std::vector<double>{0.0, 0.0});
    for (double t : {-3.0, -1.0, 0.7, 2.5}) {
        const double n = spatial_norm(state, std::vector<double>{t, -0.5 * t});
        CHECK(std::abs(n / n0 - 1.0) < 1e-10);
    }
}

TEST_CASE("mixed energy signs break time-independence of the spatial norm") {
    const double p = lattice_p(1);
    const auto state = ManyBodyState::with_negative_energy_modes(
        {ParticleSpec{1.0, 1}},
        {{MomentumMode{{p, 0, 0}, +1}, MomentumMode{{p, 0, 0}, -1}}},
        {Complex{0.8, 0.0}, Complex{0.6, 0.0}}, BoxSpec{});
    CHECK(state.has_negative_energy());
    const double n0 = spatial_norm(state, std::vector<double>{0.0});
    double spread = 0.0;
    for (double t : {0.5, 1.0, 2.0}) {
        spread = std::max(spread, std::abs(spatial_norm(state, std::vector<double>{t}) / n0 - 1.0));
    }
    CHECK(spread > 1e-3);
}

TEST_CASE("epsilon estimate: plane waves are indeterminate, mixed energies are not") {
    CounterRng rng(41, 0);
    const auto pw = plane_wave_state();
    auto xs = random_config(pw, rng);
    CHECK_THROWS_AS(epsilon_estimate(pw, 0, xs), IndeterminateError);

    const double p1 = lattice_p(1), p2 = lattice_p(2);
    const ManyBodyState mixed({ParticleSpec{1.0, 1}},
                              {{MomentumMode{{p1, 0, 0}}, MomentumMode{{p2, 0, 0}}}},
                              {Complex{0.8, 0.0}, Complex{0.6, 0.0}}, BoxSpec{});
    int found = 0;
    for (int i = 0; i < 50; ++i) {
        const auto pt = random_config(mixed, rng);
        try {
            const double eps = epsilon_estimate(mixed, 0, pt);
            CHECK(std::isfinite(eps));
            ++found;
        } catch (const IndeterminateError&) {
        }
    }
    CHECK(found > 10);
}

TEST_CASE("error taxonomy for special queries") {
    const ManyBodyState with_massless(
        {ParticleSpec{1.0, 1}, ParticleSpec{0.0, 1}},
        {{MomentumMode{{lattice_p(1), 0, 0}}},
         {MomentumMode{{lattice_p(1), 0, 0}}, MomentumMode{{lattice_p(2), 0, 0}}}},
        {Complex{0.8, 0.0}, Complex{0.6, 0.0}}, BoxSpec{});
    std::vector<FourVector> xs = {{0, 0, 0, 0}, {0, 0, 0, 0}};
    CHECK_THROWS_AS(velocity(with_massless, 1, xs), MasslessError);
    CHECK_THROWS_AS(quantum_potential(with_massless, 1, xs), MasslessError);

    const auto traced = traced_state(with_massless);
    CHECK(traced.particle_count() == 1);
    const std::vector<FourVector> one{FourVector{}};
    CHECK_THROWS_AS(quantum_potential(traced, 0, one), MultiComponentError);

    CHECK_THROWS_AS(traced_state(two_mode_state()), NoMasslessError);
    CHECK_THROWS_AS(traceout_massless(two_mode_state(), one), NoMasslessError);

    const ManyBodyState off_lattice(
        {ParticleSpec{1.0, 1}, ParticleSpec{0.0, 1}},
        {{MomentumMode{{lattice_p(1), 0, 0}}}, {MomentumMode{{0.1, 0, 0}}}},
        {Complex{1.0, 0.0}}, BoxSpec{});
    CHECK_FALSE(off_lattice.on_lattice());
    CHECK_THROWS_AS(traced_state(off_lattice), OffLatticeError);
}

TEST_CASE("trace-out matches an explicit integral over the massless coordinates") {
    // Massive particle (two modes) entangled with a massless particle (two
    // modes); generic amplitudes.
    const double p1 = lattice_p(1), p2 = lattice_p(2);
    const ManyBodyState full(
        {ParticleSpec{1.0, 1}, ParticleSpec{0.0, 1}},
        {{MomentumMode{{p1, 0, 0}}, MomentumMode{{-p1, 0, 0}}},
         {MomentumMode{{p1, 0, 0}}, MomentumMode{{p2, 0, 0}}}},
        {Complex{0.6, 0.1}, Complex{0.2, -0.4}, Complex{-0.3, 0.2}, Complex{0.4, 0.3}},
        BoxSpec{});
    const double L = full.box().L, T = full.box().T;

    CounterRng rng(51, 0);
    for (int i = 0; i < 5; ++i) {
        const std::vector<FourVector> xms{
            FourVector{rng.next_in(-2, 2), rng.next_in(-2, 2), 0.0, 0.0}};
        const FourVector xm = xms[0];
        const auto traced = traceout_massless(full, xms);

        // Midpoint quadrature over the massless x-axis is exact for lattice
        // phases; the y, z and y^0 integrals are trivial for these modes.
        const int N = 64;
        double rho = 0.0;
        FourVector cur{};
        for (int k = 0; k < N; ++k) {
            const double y = -L / 2 + (k + 0.5) * L / N;
            const FourVector ym{0.37, y, 0.0, 0.0};
            const auto f = evaluate(full, std::vector<FourVector>{xm, ym});
            rho += f.density;
            cur += *f.currents[0];
        }
        const double w = (L / N) * L * L * T;
        rho *= w;
        cur = cur * w;

        CHECK(traced.density == doctest::Approx(rho).epsilon(1e-10));
        for (int mu = 0; mu < 4; ++mu)
            CHECK(traced.currents[0][mu] == doctest::Approx(cur[mu]).epsilon(1e-9));

        // The folded effective state reproduces the same density.
        const auto eff = traced_state(full);
        CHECK(density_at(eff, xms) == doctest::Approx(rho).epsilon(1e-10));
    }
}

TEST_CASE("boost acts as a scalar: psi'(Lambda x) = psi(x)") {
    const Boost b({0.45, 0.0, 0.2});
    CounterRng rng(61, 0);
    for (const auto& state : {two_mode_state(), generic_state()}) {
        const auto boosted = boost_state(state, b);
        for (int i = 0; i < 20; ++i) {
            const auto xs = random_config(state, rng);
            std::vector<FourVector> lxs;
            for (const auto& x : xs) lxs.push_back(b(x));
            const auto f0 = evaluate(state, xs);
            const auto f1 = evaluate(boosted, lxs);
            CHECK(std::abs(f1.psi[0] - f0.psi[0]) < 1e-10 * (1.0 + std::abs(f0.psi[0])));
            CHECK(f1.density == doctest::Approx(f0.density).epsilon(1e-10));
            // Velocities transform as four-vectors.
            const FourVector v = b(velocity(state, 0, xs));
            const FourVector vb = velocity(boosted, 0, lxs);
            for (int mu = 0; mu < 4; ++mu)
                CHECK(vb[mu] == doctest::Approx(v[mu]).epsilon(1e-9));
        }
    }
}

TEST_CASE("boosted mode momenta stay on shell") {
    const Boost b({0.0, 0.7, 0.0});
    const auto state = generic_state();
    const auto boosted = boost_state(state, b);
    for (std::size_t a = 0; a < state.particle_count(); ++a) {
        const double m = state.particles()[a].mass;
        for (const auto& mode : boosted.modes()[a]) {
            const FourVector p = mode.four_momentum(m);
            CHECK(dot(p, p) == doctest::Approx(m * m).epsilon(1e-10));
            CHECK(p.t > 0.0);
        }
    }
    CHECK_FALSE(boosted.on_lattice());
}
