#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "rbm/minkowski.hpp"
#include "rbm/wavefunction.hpp"

namespace rbm {

class StepLimitError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};
class NonPositiveOmegaError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class IntegratorMethod { rk4_fixed, rk4_adaptive };
enum class TerminationReason { complete, node, step_limit };

struct IntegratorConfig {
    IntegratorMethod method = IntegratorMethod::rk4_fixed;
    double step = 1e-3;
    double tolerance = 1e-8;  // local error target, adaptive mode
    std::size_t max_steps = 10'000'000;
};

struct TrajectorySample {
    double s = 0.0;
    std::vector<FourVector> X;  // one event per massive particle
};

struct Trajectory {
    std::size_t n = 0;  // massive particle count
    std::vector<TrajectorySample> samples;
    TerminationReason reason = TerminationReason::complete;
    IntegratorConfig config;
    bool has_tachyonic_segment = false;  // some particle had V.V < 0 along the way
};

// Velocity field over joint configurations of the massive particles. States
// containing massless particles are traced out once up front, so the guidance
// follows the traced currents.
class GuidanceField {
public:
    explicit GuidanceField(const ManyBodyState& state);

    std::size_t dof() const { return effective_.particle_count(); }
    const ManyBodyState& effective_state() const { return effective_; }
    double psi_floor() const { return floor_; }

    // Throws NodeError when the density falls at or below the node floor.
    std::vector<FourVector> velocities(std::span<const FourVector> xs) const;
    double density(std::span<const FourVector> xs) const;

private:
    ManyBodyState effective_;
    double floor_;
};

// Integrates dX_a/ds = V_a(X_1..X_n), all particles sharing the same scalar s.
Trajectory integrate(const ManyBodyState& state, std::span<const FourVector> initial,
                     std::pair<double, double> s_span, const IntegratorConfig& cfg);
Trajectory integrate(const GuidanceField& field, std::span<const FourVector> initial,
                     std::pair<double, double> s_span, const IntegratorConfig& cfg);

using OmegaField = std::function<double(std::span<const FourVector>)>;

// Integrates dX_a/dlambda = Omega(X) V_a(X); the spacetime image of the path
// is independent of the choice of Omega.
Trajectory integrate_reparam(const ManyBodyState& state, std::span<const FourVector> initial,
                             std::pair<double, double> lambda_span, const OmegaField& omega,
                             const IntegratorConfig& cfg);

struct ProperTimeAudit {
    std::size_t segments = 0;
    std::size_t skipped_lightlike = 0;
    double max_rel_residual_velocity = 0.0;  // ds^2 vs dX.dX / V.V
    double max_rel_residual_scale = 0.0;     // ds^2 vs (1 + 2Q/m)^-1 dX.dX
};

// Checks the proper-time law segmentwise at midpoints along a computed
// trajectory of a single-component state.
ProperTimeAudit proper_time_audit(const ManyBodyState& state, const Trajectory& traj);

struct ClassicalTimeCompare {
    double s_total = 0.0;
    double tau_total = 0.0;  // accumulated over timelike segments only
    std::size_t spacelike_segments = 0;
    std::vector<double> f_profile;  // (1 + 2Q/m)^-1 at segment midpoints
};

ClassicalTimeCompare classical_time_compare(const ManyBodyState& state, const Trajectory& traj,
                                            std::size_t a);

// CSV export, header "s,particle,t,x,y,z".
void trajectory_to_csv(const Trajectory& traj, std::ostream& os);

}  // namespace rbm
