#pragma once

#include <array>
#include <optional>
#include <vector>

#include "rbm/dynamics.hpp"
#include "rbm/ensemble.hpp"
#include "rbm/wavefunction.hpp"

namespace rbm {

class OverlapError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};
class UnclassifiedError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Single-particle mode-sum packet (modes plus complex weights, unit weight norm).
struct Packet {
    std::vector<MomentumMode> modes;
    std::vector<Complex> amps;
};

// Lattice Gaussian packet along the x axis, localized around `center` with
// momentum spread sigma_p around mean_p. Mode weights below 1e-7 are dropped;
// the retained range is wide enough to keep position-space ringing below the
// pointer non-overlap tolerance.
Packet make_gaussian_packet(const BoxSpec& box, double center, double sigma_p,
                            double mean_p = 0.0);

Packet boost_packet(const Packet& packet, double mass, const Boost& b);

struct Branch {
    Complex amplitude;
    Packet system;
    Packet pointer;
};

struct MeasurementScenario {
    std::vector<Branch> branches;
    bool system_massless = false;
    double system_mass = 1.0;
    double pointer_mass = 100.0;
    BoxSpec box;
    EnsembleSpec ensemble;
    IntegratorConfig integrator;
    double s_final = 0.3;
};

struct CorrelationScenario {
    std::vector<std::vector<Complex>> amplitudes;  // c[b1][b2]
    std::vector<Packet> system1, pointer1;         // one per outcome of side 1
    std::vector<Packet> system2, pointer2;         // one per outcome of side 2
    double system_mass = 1.0;
    double pointer_mass = 100.0;
    std::optional<Boost> boost1, boost2;
    BoxSpec box;
    EnsembleSpec ensemble;
    IntegratorConfig integrator;
    double s_final = 0.2;
};

// Joint decohered state sum_b c_b psi_b(x) phi_b(y), particle order
// [system, pointer]; normalized. Verifies the pointer non-overlap invariant
// and the absence of cross-branch density at random probe points.
ManyBodyState build_post_measurement(const MeasurementScenario& scenario);

// The normalized single-branch state (c_b = 1); the effective wave function
// of members classified into branch b.
ManyBodyState branch_state(const MeasurementScenario& scenario, std::size_t b);

// Four-particle state [sys1, ptr1, sys2, ptr2] with per-side boosts applied
// when present.
ManyBodyState build_correlation_state(const CorrelationScenario& scenario);

// Picks the branch whose pointer packet dominates at the event: the largest
// |phi_b(y)|^2 must beat the runner-up by 10^3 and exceed an absolute floor.
class BranchClassifier {
public:
    BranchClassifier(std::vector<Packet> packets, double mass, const BoxSpec& box);
    std::optional<std::size_t> operator()(const FourVector& y) const;
    const ManyBodyState& packet_state(std::size_t b) const { return states_[b]; }

private:
    std::vector<ManyBodyState> states_;
    double floor_ = 0.0;
};

std::optional<std::size_t> classify_branch(const MeasurementScenario& scenario,
                                           const FourVector& pointer_event);

struct BranchStat {
    double expected = 0.0;   // |c_b|^2
    double empirical = 0.0;  // classified frequency
    double stderr_ = 0.0;    // binomial, at the expected rate
};

struct MeasurementReport {
    std::vector<BranchStat> branches;
    std::size_t count = 0;
    std::size_t classified = 0;
    std::size_t unclassified = 0;  // includes node-terminated members
    double max_sigma() const;      // max |empirical - expected| / stderr
};

// Samples the joint density, integrates every member to s_final and reports
// branch frequencies against |c_b|^2. Throws UnclassifiedError when more than
// 1% of the members cannot be classified.
MeasurementReport run_measurement(const MeasurementScenario& scenario);

struct CorrelationReport {
    std::vector<std::vector<BranchStat>> table;  // [b1][b2]
    std::size_t count = 0;
    std::size_t classified = 0;
    std::size_t unclassified = 0;
    double max_sigma() const;
    // E = sum_{b1 b2} (-1)^{b1+b2} p[b1][b2], for two-outcome sides.
    double correlator() const;
    double correlator_stderr() const;
};

CorrelationReport run_correlation(const CorrelationScenario& scenario);

// Fills the 2x2 singlet amplitude matrix for analyzer angles (a, b):
// E = -cos(a - b).
void set_singlet_amplitudes(CorrelationScenario& scenario, double angle_a, double angle_b);

struct ChshResult {
    double value = 0.0;
    double stderr_ = 0.0;
    std::array<CorrelationReport, 4> settings;
};

// S = E(a1,b1) - E(a1,b2) + E(a2,b1) + E(a2,b2) from four runs of the base
// scenario with singlet amplitudes; seeds offset per setting.
ChshResult run_chsh(const CorrelationScenario& base, std::array<double, 2> a_angles,
                    std::array<double, 2> b_angles);

struct FrameMixReport {
    CorrelationReport rest;     // boosts stripped
    CorrelationReport boosted;  // as specified
    double max_sigma_gap = 0.0;  // per-cell |p_boosted - p_rest| / combined stderr
};

// Runs the scenario with and without its per-apparatus boosts and compares
// the outcome tables.
FrameMixReport frame_mix_check(const CorrelationScenario& scenario);

}  // namespace rbm
