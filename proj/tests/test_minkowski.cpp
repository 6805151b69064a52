#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "rbm/minkowski.hpp"
#include "rbm/rng.hpp"

using namespace rbm;

TEST_CASE("metric signature is (+,-,-,-)") {
    const FourVector u{1.0, 2.0, 3.0, 4.0};
    CHECK(dot(u, u) == doctest::Approx(1.0 - 4.0 - 9.0 - 16.0));
    CHECK(metric_sign(0) == 1);
    CHECK(metric_sign(1) == -1);
    CHECK(metric_sign(2) == -1);
    CHECK(metric_sign(3) == -1);
}

TEST_CASE("vector algebra") {
    const FourVector u{1.0, 2.0, 3.0, 4.0};
    const FourVector v{0.5, -1.0, 0.0, 2.0};
    const FourVector s = u + v * 2.0;
    CHECK(s.t == doctest::Approx(2.0));
    CHECK(s.x == doctest::Approx(0.0));
    CHECK(s.z == doctest::Approx(8.0));
    CHECK(u[0] == u.t);
    CHECK(u[3] == u.z);
    CHECK(dot(u, v) == doctest::Approx(0.5 + 2.0 - 0.0 - 8.0));
}

TEST_CASE("x-boost of a unit time step") {
    // Active convention: t' = gamma (t - beta x), x' = gamma (x - beta t).
    const double beta = 0.6;
    const double gamma = 1.0 / std::sqrt(1.0 - beta * beta);
    const Boost b({beta, 0.0, 0.0});
    const FourVector out = b({1.0, 0.0, 0.0, 0.0});
    CHECK(out.t == doctest::Approx(gamma));
    CHECK(out.x == doctest::Approx(-gamma * beta));
    CHECK(out.y == doctest::Approx(0.0));
    CHECK(out.z == doctest::Approx(0.0));
    CHECK(b.gamma() == doctest::Approx(gamma));
}

TEST_CASE("boost leaves transverse components alone") {
    const Boost b({0.0, 0.8, 0.0});
    const FourVector out = b({0.0, 3.0, 0.0, -2.0});
    CHECK(out.x == doctest::Approx(3.0));
    CHECK(out.z == doctest::Approx(-2.0));
}

TEST_CASE("inverse boost round-trips random vectors") {
    CounterRng rng(1234, 0);
    const Boost b({0.3, -0.5, 0.2});
    const Boost binv = b.inverse();
    for (int i = 0; i < 200; ++i) {
        FourVector u{rng.next_in(-5, 5), rng.next_in(-5, 5), rng.next_in(-5, 5),
                     rng.next_in(-5, 5)};
        const FourVector back = binv(b(u));
        for (int mu = 0; mu < 4; ++mu) CHECK(back[mu] == doctest::Approx(u[mu]).epsilon(1e-12));
    }
}

TEST_CASE("Minkowski product is boost invariant") {
    CounterRng rng(77, 0);
    const Boost b({-0.4, 0.1, 0.55});
    for (int i = 0; i < 200; ++i) {
        FourVector u{rng.next_in(-3, 3), rng.next_in(-3, 3), rng.next_in(-3, 3),
                     rng.next_in(-3, 3)};
        FourVector v{rng.next_in(-3, 3), rng.next_in(-3, 3), rng.next_in(-3, 3),
                     rng.next_in(-3, 3)};
        CHECK(dot(b(u), b(v)) == doctest::Approx(dot(u, v)).epsilon(1e-12));
    }
}

TEST_CASE("collinear boosts compose by velocity addition") {
    const double b1 = 0.5, b2 = 0.3;
    const double b12 = (b1 + b2) / (1.0 + b1 * b2);
    const Boost first({b1, 0.0, 0.0});
    const Boost second({b2, 0.0, 0.0});
    const Boost combined({b12, 0.0, 0.0});
    const FourVector u{1.3, -0.7, 0.4, 2.0};
    const FourVector via_two = second(first(u));
    const FourVector via_one = combined(u);
    for (int mu = 0; mu < 4; ++mu)
        CHECK(via_two[mu] == doctest::Approx(via_one[mu]).epsilon(1e-12));
}

TEST_CASE("superluminal boost parameters are rejected") {
    CHECK_THROWS_AS(Boost({1.0, 0.0, 0.0}), InvalidBoostError);
    CHECK_THROWS_AS(Boost({0.8, 0.8, 0.0}), InvalidBoostError);
    CHECK_NOTHROW(Boost({0.0, 0.0, 0.0}));
}
