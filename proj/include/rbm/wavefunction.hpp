#pragma once

#include <array>
#include <complex>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "rbm/minkowski.hpp"

namespace rbm {

using Complex = std::complex<double>;

class NodeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};
class MasslessError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};
class MultiComponentError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};
class IndeterminateError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};
class NoMasslessError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};
class OffLatticeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};
class DimensionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ParticleSpec {
    double mass = 1.0;
    int components = 1;
    bool massless() const { return mass == 0.0; }
};

// A single plane-wave mode on the positive-energy branch, p^0 = +sqrt(p^2+m^2).
// energy_sign = -1 exists only as a test hook for the negative-energy control
// in the spatial-norm checks; regular construction rejects it.
struct MomentumMode {
    std::array<double, 3> p3 = {0.0, 0.0, 0.0};
    int energy_sign = +1;

    double energy(double mass) const {
        return std::sqrt(p3[0] * p3[0] + p3[1] * p3[1] + p3[2] * p3[2] + mass * mass);
    }
    // p^mu (upper index), time component carries the energy sign.
    FourVector four_momentum(double mass) const {
        return {energy_sign * energy(mass), p3[0], p3[1], p3[2]};
    }
};

struct BoxSpec {
    double L = 10.0;  // spatial extent per axis, x in [-L/2, L/2]
    double T = 10.0;  // time extent, t in [-T/2, T/2]
};

// Field data at one joint configuration.
struct FieldSample {
    std::vector<Complex> psi;  // one entry per discrete component A
    // grad[a][A][mu] = d_{a mu} psi_A (lower index mu)
    std::vector<std::vector<std::array<Complex, 4>>> grad;
    double density = 0.0;  // psi^dagger psi
    // j_a^mu (upper index); absent for massless particles
    std::vector<std::optional<FourVector>> currents;
};

// Finite positive-energy mode-sum wave function for n particles:
//   psi_A(x_1..x_n) = sum_{k_1..k_n} c[A][k_1..k_n] prod_a exp(-i p_{a,k_a} . x_a)
// Immutable after construction; all evaluation is pure.
class ManyBodyState {
public:
    ManyBodyState(std::vector<ParticleSpec> particles,
                  std::vector<std::vector<MomentumMode>> modes, std::vector<Complex> amplitudes,
                  BoxSpec box);

    // Test hook: permits energy_sign = -1 modes (mixed-sign negative control).
    static ManyBodyState with_negative_energy_modes(std::vector<ParticleSpec> particles,
                                                    std::vector<std::vector<MomentumMode>> modes,
                                                    std::vector<Complex> amplitudes, BoxSpec box);

    std::size_t particle_count() const { return particles_.size(); }
    const std::vector<ParticleSpec>& particles() const { return particles_; }
    const std::vector<std::vector<MomentumMode>>& modes() const { return modes_; }
    const std::vector<Complex>& amplitudes() const { return amplitudes_; }
    const BoxSpec& box() const { return box_; }
    int component_dim() const { return ncomp_; }
    bool on_lattice() const { return on_lattice_; }
    bool has_negative_energy() const { return has_negative_energy_; }
    std::size_t massless_count() const { return massless_count_; }

    // Rescales amplitudes so that (L^3 T)^n sum |c|^2 = 1 (covariant normalization).
    ManyBodyState normalized() const;
    double amplitude_norm2() const;  // sum over A and mode tuples of |c|^2

    // Coarse-sampled peak density estimate; basis of the node floor.
    double peak_density_estimate() const;
    double psi_floor() const { return 1e-12 * peak_density_estimate(); }

    // Flat amplitude indexing: A slowest, then one mode index per particle.
    Complex amplitude(int A, std::span<const int> ks) const;

private:
    ManyBodyState() = default;
    void validate_and_finalize(bool allow_negative);

    std::vector<ParticleSpec> particles_;
    std::vector<std::vector<MomentumMode>> modes_;
    std::vector<Complex> amplitudes_;
    BoxSpec box_;
    int ncomp_ = 1;
    bool on_lattice_ = true;
    bool has_negative_energy_ = false;
    std::size_t massless_count_ = 0;
    mutable double peak_density_ = -1.0;
};

// Full analytic evaluation: psi, first derivatives, density, currents.
FieldSample evaluate(const ManyBodyState& state, std::span<const FourVector> xs);

// psi^dagger psi only; much cheaper than evaluate for sampling loops.
double density_at(const ManyBodyState& state, std::span<const FourVector> xs);

// Same-particle second derivatives d_{a mu} d_{a nu} psi_A for one particle.
// second[A][mu][nu], lower indices.
std::vector<std::array<std::array<Complex, 4>, 4>> second_derivatives(
    const ManyBodyState& state, std::size_t a, std::span<const FourVector> xs);

// V_a^mu = j_a^mu / (psi^dagger psi). Throws NodeError at nodes, MasslessError
// for massless particles. May legally be spacelike.
FourVector velocity(const ManyBodyState& state, std::size_t a, std::span<const FourVector> xs);

// Q_a = (1/2 m_a) box_a R / R for single-component states.
double quantum_potential(const ManyBodyState& state, std::size_t a, std::span<const FourVector> xs);

struct EnergyStats {
    double mean = 0.0;
    double stddev = 0.0;
};

// Marginal mode-weight energy statistics for particle a (x^0-independent).
EnergyStats energy_stats(const ManyBodyState& state, std::size_t a);

// eps = (|psi|^2 d0 V^0) / (V^0 d0 |psi|^2) - 1 for particle a, from analytic
// derivatives. Throws IndeterminateError where d0 |psi|^2 is negligible.
double epsilon_estimate(const ManyBodyState& state, std::size_t a, std::span<const FourVector> xs);

// N(x^0_1..x^0_n) = integral over the spatial box of psi^dagger psi, computed
// through the double mode sum with explicit phase factors so the cancellation
// is exercised numerically.
double spatial_norm(const ManyBodyState& state, std::span<const double> t_values);

// Folds every massless particle's mode index into the discrete component index,
// weighting amplitudes by sqrt(L^3 T) per traced particle. The result is an
// effective state over the massive particles whose density and currents equal
// the analytic trace-out integrals.
ManyBodyState traced_state(const ManyBodyState& state);

struct TracedSample {
    double density = 0.0;
    std::vector<FourVector> currents;  // one per massive particle, in order
};

TracedSample traceout_massless(const ManyBodyState& state,
                               std::span<const FourVector> xs_massive);

// Boosts every mode momentum p -> Lambda p, amplitudes fixed (scalar
// convention), so that psi'(Lambda x) = psi(x).
ManyBodyState boost_state(const ManyBodyState& state, const Boost& b);

}  // namespace rbm
