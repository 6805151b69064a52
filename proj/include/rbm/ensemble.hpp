#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "rbm/dynamics.hpp"
#include "rbm/stats.hpp"
#include "rbm/wavefunction.hpp"

namespace rbm {

class MajorantBreachError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Per-particle spacetime box; degenerate axes (lo == hi) are held fixed.
struct Region4 {
    FourVector lo;
    FourVector hi;
};

// The full normalization box of a state, 1 region per particle.
std::vector<Region4> full_box_region(const ManyBodyState& state);

enum class SamplerKind { rejection, mcmc };

struct EnsembleSpec {
    std::size_t count = 10000;
    std::vector<Region4> region;  // one per (massive) particle of the sampled state
    std::uint64_t seed = 1;
    SamplerKind sampler = SamplerKind::rejection;
    unsigned workers = 0;  // 0 = hardware concurrency
};

struct SampleSet {
    std::vector<std::vector<FourVector>> configs;
    std::size_t mcmc_burn_in = 0;
    std::size_t mcmc_thinning = 1;
};

// Draws i.i.d. (rejection) or asymptotically distributed (mcmc) samples with
// density proportional to psi^dagger psi restricted to the region.
// Deterministic given the seed; independent of the worker count.
SampleSet sample(const ManyBodyState& state, const EnsembleSpec& spec);

struct PushforwardResult {
    SampleSet samples;
    std::size_t excluded = 0;  // node-terminated members, dropped
};

// Advances every configuration by delta_s under the s-flow.
PushforwardResult pushforward(const ManyBodyState& state, const SampleSet& samples,
                              double delta_s, const IntegratorConfig& cfg, unsigned workers = 0);

struct ContinuityResidual {
    double residual = 0.0;  // sum_a d_{a mu} (rho V_a^mu), analytic
    double scale = 0.0;     // magnitude of the individually summed contributions
};

ContinuityResidual continuity_residual(const ManyBodyState& state,
                                       std::span<const FourVector> xs);

// rho / N with N from the spatial norm; N is x^0-independent for
// positive-energy states.
class ConditionalDensity {
public:
    ConditionalDensity(const ManyBodyState& state, std::vector<double> t_values);
    double operator()(std::span<const FourVector> xs) const;
    double norm() const { return norm_; }

private:
    const ManyBodyState* state_;
    double norm_;
};

ConditionalDensity conditional_space_density(const ManyBodyState& state,
                                             std::vector<double> t_values);

struct SpaceEquivarianceResidual {
    double residual = 0.0;       // normalized by the local term magnitudes
    double epsilon_proxy = 0.0;  // Delta E_a / Ebar_a
};

SpaceEquivarianceResidual space_equivariance_residual(const ManyBodyState& state, std::size_t a,
                                                      std::span<const FourVector> xs);

// --- equivariance verification harness -------------------------------------

struct AxisId {
    std::size_t particle = 0;
    int axis = 0;  // 0 = t, 1..3 = x,y,z
};

struct AxisCheck {
    AxisId axis;
    Chi2Result chi2;
};

struct EquivarianceReport {
    double delta_s = 0.0;
    std::size_t count = 0;
    std::size_t kept = 0;      // pushed members inside the interior region
    std::size_t excluded = 0;  // node-terminated members
    std::vector<AxisCheck> checks;
    bool passed(double p_threshold = 0.01) const {
        for (const auto& c : checks)
            if (c.chi2.p_value <= p_threshold) return false;
        return true;
    }
};

// Per-axis masses of the analytic density marginal over `region`, integrating
// out every other non-degenerate axis by midpoint quadrature.
std::vector<double> analytic_axis_marginal(const ManyBodyState& state,
                                           const std::vector<Region4>& region, AxisId axis,
                                           int nbins, int grid_per_dim = 24);

// Samples |psi|^2 over the region, pushes the ensemble forward by delta_s and
// chi-square-compares every non-degenerate axis marginal against the analytic
// density on the interior region (boundary shell of width max|V| delta_s
// excluded).
EquivarianceReport equivariance_check(const ManyBodyState& state, const EnsembleSpec& spec,
                                      double delta_s, const IntegratorConfig& cfg,
                                      int nbins = 20);

// CSV export, header "member,particle,t,x,y,z".
void samples_to_csv(const SampleSet& set, std::ostream& os);

}  // namespace rbm
