#include "rbm/classical.hpp"

#include <cmath>

#include "rbm/rng.hpp"

namespace rbm {

ClassicalState ClassicalState::make(std::vector<FourVector> momenta, std::vector<double> masses) {
    if (momenta.size() != masses.size() || momenta.empty())
        throw DimensionError("ClassicalState: one momentum per particle required");
    for (std::size_t a = 0; a < momenta.size(); ++a) {
        if (momenta[a].t <= 0.0) throw PreconditionError("ClassicalState: p^0 must be positive");
        const double m2 = masses[a] * masses[a];
        if (std::abs(dot(momenta[a], momenta[a]) - m2) > 1e-12 * (1.0 + m2))
            throw PreconditionError("ClassicalState: momentum off the mass shell");
    }
    ClassicalState c;
    c.momenta = std::move(momenta);
    c.masses = std::move(masses);
    return c;
}

Trajectory classical_trajectory(const ClassicalState& cstate,
                                std::span<const FourVector> initial,
                                std::pair<double, double> tau_span, double sample_step) {
    if (initial.size() != cstate.momenta.size())
        throw DimensionError("classical_trajectory: initial size mismatch");
    if (sample_step <= 0.0) throw DimensionError("classical_trajectory: sample_step must be positive");

    Trajectory traj;
    traj.n = initial.size();
    const double span = tau_span.second - tau_span.first;
    const auto steps = static_cast<std::size_t>(std::ceil(std::abs(span) / sample_step));
    for (std::size_t i = 0; i <= std::max<std::size_t>(steps, 1); ++i) {
        const double tau = tau_span.first + span * static_cast<double>(i) / std::max<std::size_t>(steps, 1);
        TrajectorySample sample;
        sample.s = tau;
        sample.X.resize(traj.n);
        for (std::size_t a = 0; a < traj.n; ++a)
            sample.X[a] = initial[a] + cstate.momenta[a] * ((tau - tau_span.first) / cstate.masses[a]);
        traj.samples.push_back(std::move(sample));
    }
    traj.reason = TerminationReason::complete;
    return traj;
}

namespace {

// Normalized 1D Gaussian of width w.
double gauss(double u, double w) {
    static const double inv_sqrt_2pi = 0.3989422804014327;
    return inv_sqrt_2pi / w * std::exp(-0.5 * u * u / (w * w));
}

}  // namespace

DeltaEquivarianceReport delta_equivariance_check(const ClassicalState& cstate,
                                                 std::span<const FourVector> initial,
                                                 double tau, const DeltaGridConfig& grid) {
    if (cstate.momenta.size() != 1 || initial.size() != 1)
        throw DimensionError("delta_equivariance_check: single-particle check");
    const double w = grid.width;
    const double h = grid.spacing;
    if (w < 3.0 * h) throw PreconditionError("delta surrogate width below 3 grid cells");

    const FourVector v = cstate.momenta[0] * (1.0 / cstate.masses[0]);  // dX/dtau
    const FourVector X = initial[0] + v * tau;
    const std::array<double, 4> vel = {v.t, v.x, v.y, v.z};
    const std::array<double, 4> ctr = {X.t, X.x, X.y, X.z};

    // The surrogate rho(x; tau) = prod_mu G_w(x^mu - X^mu(tau)) moves rigidly,
    // so the continuum transport residual is zero and what remains is the
    // discretization error of the central differences.
    const double extent = std::min(grid.half_extent, 4.0 * w);
    const int half = static_cast<int>(std::ceil(extent / h));
    const int npts = 2 * half + 1;

    // Per-axis Gaussian tables at tau and tau +/- dtau, padded one cell for
    // the +/- h stencil.
    std::array<std::vector<double>, 4> g0, gp, gm;
    for (int mu = 0; mu < 4; ++mu) {
        g0[mu].resize(npts + 2);
        gp[mu].resize(npts + 2);
        gm[mu].resize(npts + 2);
        for (int i = 0; i < npts + 2; ++i) {
            const double x = ctr[mu] + (i - half - 1) * h;
            g0[mu][i] = gauss(x - ctr[mu], w);
            gp[mu][i] = gauss(x - (ctr[mu] + vel[mu] * grid.dtau), w);
            gm[mu][i] = gauss(x - (ctr[mu] - vel[mu] * grid.dtau), w);
        }
    }

    double res_l1 = 0.0;
    double scale_l1 = 0.0;
    for (int i0 = 1; i0 <= npts; ++i0)
        for (int i1 = 1; i1 <= npts; ++i1)
            for (int i2 = 1; i2 <= npts; ++i2)
                for (int i3 = 1; i3 <= npts; ++i3) {
                    const std::array<int, 4> idx = {i0, i1, i2, i3};
                    const double rp = gp[0][i0] * gp[1][i1] * gp[2][i2] * gp[3][i3];
                    const double rm = gm[0][i0] * gm[1][i1] * gm[2][i2] * gm[3][i3];
                    const double dtau_term = (rp - rm) / (2.0 * grid.dtau);
                    double div = 0.0;
                    for (int mu = 0; mu < 4; ++mu) {
                        double other = 1.0;
                        for (int nu = 0; nu < 4; ++nu)
                            if (nu != mu) other *= g0[nu][idx[nu]];
                        div += vel[mu] * (g0[mu][idx[mu] + 1] - g0[mu][idx[mu] - 1]) / (2.0 * h) *
                               other;
                    }
                    res_l1 += std::abs(dtau_term + div);
                    scale_l1 += std::abs(dtau_term) + std::abs(div);
                }
    const double cell = h * h * h * h;

    DeltaEquivarianceReport report;
    report.surrogate_width = w;
    report.grid_spacing = h;
    report.residual = res_l1 * cell / std::max(scale_l1 * cell, 1e-300);

    // x^0-marginalization: summing the 4D surrogate over the time axis must
    // reproduce the directly built 3D spatial surrogate. The time sum runs
    // over the full half_extent so the tail truncation stays below 1e-6.
    const int thalf = static_cast<int>(std::ceil(grid.half_extent / h));
    double t_sum = 0.0;
    for (int i = -thalf; i <= thalf; ++i) t_sum += gauss(i * h, w) * h;
    double space_mass = 1.0;
    for (int mu = 1; mu < 4; ++mu) {
        double axis = 0.0;
        for (int i = 1; i <= npts; ++i) axis += g0[mu][i] * h;
        space_mass *= axis;
    }
    report.marginalization_l1 = std::abs(t_sum - 1.0) * space_mass;
    return report;
}

NonRelLimitReport nonrel_limit_check(const ClassicalState& cstate, std::size_t a) {
    if (a >= cstate.momenta.size()) throw DimensionError("nonrel_limit_check: bad particle index");
    const FourVector p = cstate.momenta[a];
    const double E = p.t;
    const double v2 = (p.x * p.x + p.y * p.y + p.z * p.z) / (E * E);
    if (std::sqrt(v2) >= 0.01)
        throw PreconditionError("nonrel_limit_check requires |v| < 0.01");

    NonRelLimitReport report;
    // One finite tau segment; the trajectory is exactly linear so a single
    // segment is exact.
    const double m = cstate.masses[a];
    const double dtau = 0.1;
    const FourVector dx = p * (dtau / m);
    report.dtau_dt_deviation = std::abs(dtau / dx.t - 1.0);
    if (v2 > 1e-30) {
        const double dspace2 = dx.x * dx.x + dx.y * dx.y + dx.z * dx.z;
        const double dt2 = dx.t * dx.t;
        report.dt2_relation_residual = std::abs(dt2 - dspace2 / v2) / dt2;
    }

    // Many-time identity: for f(t_1..t_n) = prod_a sin(w_a t_a), the sum of
    // the partial time derivatives at equal times equals the derivative of
    // the diagonal restriction. Both sides by central differences.
    const std::size_t n = cstate.momenta.size();
    CounterRng rng(0x6d616e79u, a);
    std::vector<double> omega(n);
    for (auto& o : omega) o = rng.next_in(0.5, 2.0);
    const double fd = 1e-5;
    const auto f = [&](std::span<const double> ts) {
        double out = 1.0;
        for (std::size_t b = 0; b < n; ++b) out *= std::sin(omega[b] * ts[b]);
        return out;
    };
    for (int trial = 0; trial < 5; ++trial) {
        const double t = rng.next_in(-3.0, 3.0);
        std::vector<double> ts(n, t);
        double lhs = 0.0;
        for (std::size_t b = 0; b < n; ++b) {
            ts[b] = t + fd;
            const double fp = f(ts);
            ts[b] = t - fd;
            const double fm = f(ts);
            ts[b] = t;
            lhs += (fp - fm) / (2.0 * fd);
        }
        std::vector<double> tp(n, t + fd), tm(n, t - fd);
        const double rhs = (f(tp) - f(tm)) / (2.0 * fd);
        report.many_time_identity_residual =
            std::max(report.many_time_identity_residual, std::abs(lhs - rhs));
    }
    return report;
}

}  // namespace rbm
