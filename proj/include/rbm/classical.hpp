#pragma once

#include <span>
#include <vector>

#include "rbm/dynamics.hpp"
#include "rbm/minkowski.hpp"

namespace rbm {

class PreconditionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Free classical relativistic particles: S_a(x) = -p_a . x, V_a = p_a / m_a.
struct ClassicalState {
    // p^0 = E > 0 and p.p = m^2 within 1e-12 for every particle.
    std::vector<FourVector> momenta;
    std::vector<double> masses;

    static ClassicalState make(std::vector<FourVector> momenta, std::vector<double> masses);
};

// X_a(tau) = X_a(0) + (p_a / m_a) tau, exact.
Trajectory classical_trajectory(const ClassicalState& cstate,
                                std::span<const FourVector> initial,
                                std::pair<double, double> tau_span, double sample_step = 0.1);

struct DeltaEquivarianceReport {
    double residual = 0.0;            // normalized discrete equivariance residual (4D surrogate)
    double marginalization_l1 = 0.0;  // L1 gap: x^0-marginalized 4D surrogate vs 3D surrogate
    double surrogate_width = 0.0;
    double grid_spacing = 0.0;
};

struct DeltaGridConfig {
    double width = 0.4;       // Gaussian surrogate width w
    double spacing = 0.1;     // grid spacing h (must satisfy w >= 3 h)
    double half_extent = 2.0; // grid half-size around the trajectory point
    double dtau = 0.05;       // central-difference step in tau
};

// Represents delta^4(x - X(tau)) by a Gaussian surrogate on a grid and
// measures the discrete residual of the transport equation, plus the
// x^0-marginalization identity against a directly built 3D surrogate.
DeltaEquivarianceReport delta_equivariance_check(const ClassicalState& cstate,
                                                 std::span<const FourVector> initial,
                                                 double tau, const DeltaGridConfig& grid);

struct NonRelLimitReport {
    double dtau_dt_deviation = 0.0;   // |dtau/dX^0 - 1|
    double dt2_relation_residual = 0.0;  // dt^2 vs (1/v^2) dX.dX along the path
    double many_time_identity_residual = 0.0;  // finite-difference check
};

// Slow-motion checks: dtau/dt -> 1, the dt^2 = (1/v^2) dX.dX relation, and the
// equal-times many-time derivative identity for a product function.
NonRelLimitReport nonrel_limit_check(const ClassicalState& cstate, std::size_t a);

}  // namespace rbm
