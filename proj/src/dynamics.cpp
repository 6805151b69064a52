#include "rbm/dynamics.hpp"

#include <cmath>
#include <ostream>

namespace rbm {

namespace {

using Config = std::vector<FourVector>;

Config axpy(const Config& x, const Config& d, double h) {
    Config out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + d[i] * h;
    return out;
}

// One classical RK4 step of dX/dl = rhs(X) * scale.
template <typename Rhs>
Config rk4_step(const Rhs& rhs, const Config& x, double h) {
    const Config k1 = rhs(x);
    const Config k2 = rhs(axpy(x, k1, h / 2));
    const Config k3 = rhs(axpy(x, k2, h / 2));
    const Config k4 = rhs(axpy(x, k3, h));
    Config out = x;
    for (std::size_t i = 0; i < x.size(); ++i)
        out[i] += (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) * (h / 6.0);
    return out;
}

double config_dist(const Config& a, const Config& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const FourVector d = a[i] - b[i];
        m = std::max({m, std::abs(d.t), std::abs(d.x), std::abs(d.y), std::abs(d.z)});
    }
    return m;
}

bool any_spacelike(const Config& vs) {
    for (const auto& v : vs)
        if (dot(v, v) < 0.0) return true;
    return false;
}

template <typename Rhs>
Trajectory run_integration(const Rhs& rhs, std::span<const FourVector> initial,
                           std::pair<double, double> span, const IntegratorConfig& cfg,
                           double initial_density, double floor) {
    if (cfg.step <= 0.0 || cfg.tolerance <= 0.0)
        throw DimensionError("integrator step and tolerance must be positive");
    if (initial_density <= floor) throw NodeError("initial configuration lies on a node");

    Trajectory traj;
    traj.n = initial.size();
    traj.config = cfg;
    Config x(initial.begin(), initial.end());
    double s = span.first;
    traj.samples.push_back({s, x});

    const double dir = span.second >= span.first ? 1.0 : -1.0;
    double h = cfg.step * dir;
    std::size_t steps = 0;

    while (dir * (span.second - s) > 1e-15 * (1.0 + std::abs(span.second))) {
        if (++steps > cfg.max_steps) throw StepLimitError("integrator exceeded max_steps");
        double h_try = h;
        if (dir * (s + h_try - span.second) > 0.0) h_try = span.second - s;

        // Near-node policy: on any node hit inside the step, halve up to 10
        // times, then terminate the trajectory with reason = node.
        int halvings = 0;
        while (true) {
            try {
                Config next;
                if (cfg.method == IntegratorMethod::rk4_fixed) {
                    next = rk4_step(rhs, x, h_try);
                } else {
                    // step doubling error control
                    while (true) {
                        const Config full = rk4_step(rhs, x, h_try);
                        const Config half = rk4_step(rhs, rk4_step(rhs, x, h_try / 2), h_try / 2);
                        const double err = config_dist(full, half) / 15.0;
                        if (err <= cfg.tolerance || std::abs(h_try) <= 1e-12) {
                            next = half;
                            break;
                        }
                        h_try /= 2;
                    }
                }
                if (any_spacelike(rhs(x))) traj.has_tachyonic_segment = true;
                x = next;
                s += h_try;
                traj.samples.push_back({s, x});
                if (cfg.method == IntegratorMethod::rk4_adaptive &&
                    std::abs(h_try) < std::abs(h))
                    h = h_try * 2;  // cautious regrowth
                break;
            } catch (const NodeError&) {
                if (++halvings > 10) {
                    traj.reason = TerminationReason::node;
                    return traj;
                }
                h_try /= 2;
            }
        }
    }
    traj.reason = TerminationReason::complete;
    return traj;
}

}  // namespace

GuidanceField::GuidanceField(const ManyBodyState& state)
    : effective_(state.massless_count() > 0 ? traced_state(state) : state),
      floor_(effective_.psi_floor()) {}

std::vector<FourVector> GuidanceField::velocities(std::span<const FourVector> xs) const {
    const FieldSample f = evaluate(effective_, xs);
    if (f.density <= floor_) throw NodeError("node encountered during integration");
    std::vector<FourVector> vs;
    vs.reserve(f.currents.size());
    for (const auto& j : f.currents) vs.push_back(*j * (1.0 / f.density));
    return vs;
}

double GuidanceField::density(std::span<const FourVector> xs) const {
    return evaluate(effective_, xs).density;
}

Trajectory integrate(const GuidanceField& field, std::span<const FourVector> initial,
                     std::pair<double, double> s_span, const IntegratorConfig& cfg) {
    if (initial.size() != field.dof())
        throw DimensionError("integrate: one initial event per massive particle required");
    const auto rhs = [&field](const Config& x) { return field.velocities(x); };
    return run_integration(rhs, initial, s_span, cfg, field.density(initial), field.psi_floor());
}

Trajectory integrate(const ManyBodyState& state, std::span<const FourVector> initial,
                     std::pair<double, double> s_span, const IntegratorConfig& cfg) {
    return integrate(GuidanceField(state), initial, s_span, cfg);
}

Trajectory integrate_reparam(const ManyBodyState& state, std::span<const FourVector> initial,
                             std::pair<double, double> lambda_span, const OmegaField& omega,
                             const IntegratorConfig& cfg) {
    GuidanceField field(state);
    if (initial.size() != field.dof())
        throw DimensionError("integrate_reparam: initial size mismatch");
    const auto rhs = [&](const Config& x) {
        const double w = omega(x);
        if (w <= 0.0) throw NonPositiveOmegaError("Omega must be positive along the path");
        auto vs = field.velocities(x);
        for (auto& v : vs) v = v * w;
        return vs;
    };
    return run_integration(rhs, initial, lambda_span, cfg, field.density(initial),
                           field.psi_floor());
}

ProperTimeAudit proper_time_audit(const ManyBodyState& state, const Trajectory& traj) {
    if (state.component_dim() != 1)
        throw MultiComponentError("proper-time audit needs a single-component state");
    GuidanceField field(state);
    ProperTimeAudit report;
    for (std::size_t i = 0; i + 1 < traj.samples.size(); ++i) {
        const auto& s0 = traj.samples[i];
        const auto& s1 = traj.samples[i + 1];
        const double ds2 = (s1.s - s0.s) * (s1.s - s0.s);
        Config mid(traj.n);
        for (std::size_t a = 0; a < traj.n; ++a) mid[a] = (s0.X[a] + s1.X[a]) * 0.5;
        const auto vs = field.velocities(mid);
        ++report.segments;
        for (std::size_t a = 0; a < traj.n; ++a) {
            const double vv = dot(vs[a], vs[a]);
            if (std::abs(vv) < 1e-8) {
                ++report.skipped_lightlike;
                continue;
            }
            const FourVector dx = s1.X[a] - s0.X[a];
            const double dd = dot(dx, dx) / vv;
            const double r_v = std::abs(ds2 - dd) / (std::abs(ds2) + std::abs(dd) + 1e-300);
            report.max_rel_residual_velocity = std::max(report.max_rel_residual_velocity, r_v);

            const double q = quantum_potential(field.effective_state(), a, mid);
            const double m = field.effective_state().particles()[a].mass;
            const double f = 1.0 / (1.0 + 2.0 * q / m);
            const double dd_f = f * dot(dx, dx);
            const double r_f = std::abs(ds2 - dd_f) / (std::abs(ds2) + std::abs(dd_f) + 1e-300);
            report.max_rel_residual_scale = std::max(report.max_rel_residual_scale, r_f);
        }
    }
    return report;
}

ClassicalTimeCompare classical_time_compare(const ManyBodyState& state, const Trajectory& traj,
                                            std::size_t a) {
    if (a >= traj.n) throw DimensionError("classical_time_compare: bad particle index");
    GuidanceField field(state);
    ClassicalTimeCompare out;
    if (traj.samples.empty()) return out;
    out.s_total = traj.samples.back().s - traj.samples.front().s;
    for (std::size_t i = 0; i + 1 < traj.samples.size(); ++i) {
        const FourVector dx = traj.samples[i + 1].X[a] - traj.samples[i].X[a];
        const double dd = dot(dx, dx);
        if (dd >= 0.0) {
            out.tau_total += std::sqrt(dd);
        } else {
            ++out.spacelike_segments;
        }
        Config mid(traj.n);
        for (std::size_t b = 0; b < traj.n; ++b)
            mid[b] = (traj.samples[i].X[b] + traj.samples[i + 1].X[b]) * 0.5;
        const double q = quantum_potential(field.effective_state(), a, mid);
        const double m = field.effective_state().particles()[a].mass;
        out.f_profile.push_back(1.0 / (1.0 + 2.0 * q / m));
    }
    return out;
}

void trajectory_to_csv(const Trajectory& traj, std::ostream& os) {
    os << "s,particle,t,x,y,z\n";
    os.precision(17);
    for (const auto& sample : traj.samples)
        for (std::size_t a = 0; a < traj.n; ++a)
            os << sample.s << ',' << a << ',' << sample.X[a].t << ',' << sample.X[a].x << ','
               << sample.X[a].y << ',' << sample.X[a].z << '\n';
}

}  // namespace rbm
