#include "rbm/ensemble.hpp"

#include <atomic>
#include <cmath>
#include <ostream>

#include "rbm/parallel.hpp"
#include "rbm/rng.hpp"

namespace rbm {

namespace {

struct FlatRegion {
    // Flattened coordinate list: (particle, axis) in order, with bounds.
    struct Dim {
        std::size_t particle;
        int axis;
        double lo, hi;
        bool degenerate() const { return hi <= lo; }
    };
    std::vector<Dim> dims;

    static FlatRegion from(const std::vector<Region4>& region) {
        FlatRegion fr;
        for (std::size_t p = 0; p < region.size(); ++p)
            for (int mu = 0; mu < 4; ++mu)
                fr.dims.push_back({p, mu, region[p].lo[mu], region[p].hi[mu]});
        return fr;
    }

    std::vector<FourVector> config_at(std::span<const double> coords) const {
        std::size_t n = dims.size() / 4;
        std::vector<FourVector> xs(n);
        for (std::size_t d = 0; d < dims.size(); ++d) xs[dims[d].particle][dims[d].axis] = coords[d];
        return xs;
    }
};

double region_majorant(const ManyBodyState& state, const FlatRegion& fr) {
    // Coarse-grid peak times a 1.5 safety factor; a few random probes help
    // with peaks that fall between grid points.
    std::vector<std::size_t> free_dims;
    for (std::size_t d = 0; d < fr.dims.size(); ++d)
        if (!fr.dims[d].degenerate()) free_dims.push_back(d);

    std::vector<double> coords(fr.dims.size());
    for (std::size_t d = 0; d < fr.dims.size(); ++d) coords[d] = fr.dims[d].lo;

    double peak = 0.0;
    if (!free_dims.empty()) {
        int g = std::max(5, static_cast<int>(std::floor(
                                std::pow(20000.0, 1.0 / static_cast<double>(free_dims.size())))));
        std::vector<int> idx(free_dims.size(), 0);
        while (true) {
            for (std::size_t k = 0; k < free_dims.size(); ++k) {
                const auto& dim = fr.dims[free_dims[k]];
                coords[free_dims[k]] = dim.lo + (idx[k] + 0.5) * (dim.hi - dim.lo) / g;
            }
            peak = std::max(peak, density_at(state, fr.config_at(coords)));
            std::size_t k = free_dims.size();
            bool done = true;
            while (k > 0) {
                --k;
                if (++idx[k] < g) {
                    done = false;
                    break;
                }
                idx[k] = 0;
            }
            if (done) break;
        }
    }
    CounterRng rng(0xabcdu, 0);
    for (int i = 0; i < 512; ++i) {
        for (std::size_t d = 0; d < fr.dims.size(); ++d)
            coords[d] = fr.dims[d].degenerate() ? fr.dims[d].lo
                                                : rng.next_in(fr.dims[d].lo, fr.dims[d].hi);
        peak = std::max(peak, density_at(state, fr.config_at(coords)));
    }
    return 1.5 * peak;
}

}  // namespace

std::vector<Region4> full_box_region(const ManyBodyState& state) {
    std::vector<Region4> region;
    const double L = state.box().L, T = state.box().T;
    for (std::size_t a = 0; a < state.particle_count(); ++a)
        region.push_back({{-T / 2, -L / 2, -L / 2, -L / 2}, {T / 2, L / 2, L / 2, L / 2}});
    return region;
}

SampleSet sample(const ManyBodyState& state, const EnsembleSpec& spec) {
    if (spec.region.size() != state.particle_count())
        throw DimensionError("sample: one region per particle required");
    SampleSet set;
    if (spec.count == 0) return set;

    const FlatRegion fr = FlatRegion::from(spec.region);
    const double majorant = region_majorant(state, fr);
    if (majorant <= 0.0) throw MajorantBreachError("density vanishes over the region");

    set.configs.resize(spec.count);
    std::atomic<bool> breached{false};

    if (spec.sampler == SamplerKind::rejection) {
        parallel_for(spec.count, spec.workers, [&](std::size_t i) {
            CounterRng rng(spec.seed, i);
            std::vector<double> coords(fr.dims.size());
            for (int attempt = 0; attempt < 1000000; ++attempt) {
                for (std::size_t d = 0; d < fr.dims.size(); ++d)
                    coords[d] = fr.dims[d].degenerate()
                                    ? fr.dims[d].lo
                                    : rng.next_in(fr.dims[d].lo, fr.dims[d].hi);
                auto xs = fr.config_at(coords);
                const double rho = density_at(state, xs);
                if (rho > majorant) {
                    breached.store(true);
                    return;
                }
                if (rng.next_double() * majorant < rho) {
                    set.configs[i] = std::move(xs);
                    return;
                }
            }
            breached.store(true);
        });
    } else {
        set.mcmc_burn_in = 500;
        set.mcmc_thinning = 10;
        parallel_for(spec.count, spec.workers, [&](std::size_t i) {
            CounterRng rng(spec.seed, i);
            std::vector<double> coords(fr.dims.size());
            for (std::size_t d = 0; d < fr.dims.size(); ++d)
                coords[d] = fr.dims[d].degenerate() ? fr.dims[d].lo
                                                    : rng.next_in(fr.dims[d].lo, fr.dims[d].hi);
            double rho = density_at(state, fr.config_at(coords));
            std::vector<double> prop(coords);
            const std::size_t steps = set.mcmc_burn_in + set.mcmc_thinning;
            for (std::size_t step = 0; step < steps; ++step) {
                // Symmetric random-walk proposal; moves leaving the region are
                // rejected outright (clamping would bias the boundary).
                bool in_region = true;
                for (std::size_t d = 0; d < fr.dims.size(); ++d) {
                    if (fr.dims[d].degenerate()) {
                        prop[d] = coords[d];
                        continue;
                    }
                    const double width = fr.dims[d].hi - fr.dims[d].lo;
                    prop[d] = coords[d] + 0.1 * width * (2.0 * rng.next_double() - 1.0);
                    if (prop[d] < fr.dims[d].lo || prop[d] > fr.dims[d].hi) in_region = false;
                }
                if (!in_region) continue;
                const double rho_p = density_at(state, fr.config_at(prop));
                if (rho_p > majorant) {
                    breached.store(true);
                    return;
                }
                if (rng.next_double() * rho < rho_p) {
                    coords = prop;
                    rho = rho_p;
                }
            }
            set.configs[i] = fr.config_at(coords);
        });
    }
    if (breached.load())
        throw MajorantBreachError("evaluated density exceeded the majorant; enlarge the factor");
    return set;
}

PushforwardResult pushforward(const ManyBodyState& state, const SampleSet& samples,
                              double delta_s, const IntegratorConfig& cfg, unsigned workers) {
    GuidanceField field(state);
    PushforwardResult out;
    std::vector<std::vector<FourVector>> pushed(samples.configs.size());
    std::vector<char> ok(samples.configs.size(), 0);
    parallel_for(samples.configs.size(), workers, [&](std::size_t i) {
        if (delta_s == 0.0) {
            pushed[i] = samples.configs[i];
            ok[i] = 1;
            return;
        }
        try {
            Trajectory traj = integrate(field, samples.configs[i], {0.0, delta_s}, cfg);
            if (traj.reason == TerminationReason::complete) {
                pushed[i] = traj.samples.back().X;
                ok[i] = 1;
            }
        } catch (const NodeError&) {
        }
    });
    for (std::size_t i = 0; i < pushed.size(); ++i) {
        if (ok[i])
            out.samples.configs.push_back(std::move(pushed[i]));
        else
            ++out.excluded;
    }
    return out;
}

ContinuityResidual continuity_residual(const ManyBodyState& state,
                                       std::span<const FourVector> xs) {
    const FieldSample f = evaluate(state, xs);
    if (f.density <= state.psi_floor()) throw NodeError("continuity residual undefined at a node");
    const int ncomp = state.component_dim();
    ContinuityResidual out;
    for (std::size_t a = 0; a < state.particle_count(); ++a) {
        if (state.particles()[a].massless()) continue;
        const double m = state.particles()[a].mass;
        const auto sec = second_derivatives(state, a, xs);
        for (int A = 0; A < ncomp; ++A) {
            // d_{a mu} j_a^mu = -(1/m) Im( d^mu psi* d_mu psi + psi* box psi )
            Complex grad_contract{};
            Complex box_term{};
            for (int mu = 0; mu < 4; ++mu) {
                const double s = metric_sign(mu);
                grad_contract += s * std::conj(f.grad[a][A][mu]) * f.grad[a][A][mu];
                box_term += s * sec[A][mu][mu];
                out.scale += (std::norm(f.grad[a][A][mu]) +
                              std::abs(std::conj(f.psi[A]) * sec[A][mu][mu])) /
                             m;
            }
            out.residual += -std::imag(grad_contract + std::conj(f.psi[A]) * box_term) / m;
        }
    }
    return out;
}

ConditionalDensity::ConditionalDensity(const ManyBodyState& state, std::vector<double> t_values)
    : state_(&state), norm_(spatial_norm(state, t_values)) {}

double ConditionalDensity::operator()(std::span<const FourVector> xs) const {
    return evaluate(*state_, xs).density / norm_;
}

ConditionalDensity conditional_space_density(const ManyBodyState& state,
                                             std::vector<double> t_values) {
    return ConditionalDensity(state, std::move(t_values));
}

SpaceEquivarianceResidual space_equivariance_residual(const ManyBodyState& state, std::size_t a,
                                                      std::span<const FourVector> xs) {
    if (state.particles()[a].massless()) throw MasslessError("no velocity for massless particle");
    const FieldSample f = evaluate(state, xs);
    if (f.density <= state.psi_floor()) throw NodeError("residual undefined at a node");
    const double m = state.particles()[a].mass;
    const int ncomp = state.component_dim();
    const auto sec = second_derivatives(state, a, xs);

    // d_{a nu} rho and d_{a nu} j_a^mu, lower index nu, upper index mu.
    std::array<double, 4> d_rho{};
    std::array<std::array<double, 4>, 4> d_j{};  // [nu][mu]
    FourVector j{};
    for (int A = 0; A < ncomp; ++A) {
        const Complex psi = f.psi[A];
        for (int nu = 0; nu < 4; ++nu) {
            d_rho[nu] += 2.0 * std::real(std::conj(psi) * f.grad[a][A][nu]);
            for (int mu = 0; mu < 4; ++mu) {
                const double raise = metric_sign(mu);
                d_j[nu][mu] += -raise *
                               std::imag(std::conj(f.grad[a][A][nu]) * f.grad[a][A][mu] +
                                         std::conj(psi) * sec[A][nu][mu]) /
                               m;
            }
        }
        for (int mu = 0; mu < 4; ++mu)
            j[mu] += -metric_sign(mu) * std::imag(std::conj(psi) * f.grad[a][A][mu]) / m;
    }

    const double j0 = j.t;
    if (std::abs(j0) < 1e-300) throw NodeError("vanishing time current");
    const double rho = f.density;

    // r = d_{a0} rho + sum_i d_{ai} ( rho j^i / j^0 ). The scale accumulates
    // the magnitude of every contribution separately: the terms cancel almost
    // exactly for near-shell states, so |term_t| + |term_x| would normalize
    // the residual by itself.
    const double term_t = d_rho[0];
    double term_x = 0.0;
    double scale = std::abs(term_t);
    for (int i = 1; i < 4; ++i) {
        const double p1 = d_rho[i] * j[i] / j0;
        const double p2 = rho * d_j[i][i] / j0;
        const double p3 = rho * j[i] * d_j[i][0] / (j0 * j0);
        term_x += p1 + p2 - p3;
        scale += std::abs(p1) + std::abs(p2) + std::abs(p3);
    }
    scale += 1e-300;
    const EnergyStats es = energy_stats(state, a);
    return {(term_t + term_x) / scale, es.stddev / es.mean};
}

std::vector<double> analytic_axis_marginal(const ManyBodyState& state,
                                           const std::vector<Region4>& region, AxisId axis,
                                           int nbins, int grid_per_dim) {
    const FlatRegion fr = FlatRegion::from(region);
    std::vector<std::size_t> free_dims;
    std::size_t target = 0;
    for (std::size_t d = 0; d < fr.dims.size(); ++d) {
        if (fr.dims[d].particle == axis.particle && fr.dims[d].axis == axis.axis) target = d;
        if (!fr.dims[d].degenerate()) free_dims.push_back(d);
    }
    if (fr.dims[target].degenerate())
        throw DimensionError("analytic_axis_marginal: target axis is degenerate");

    // target axis resolution must be a bin multiple
    const int g_target = ((grid_per_dim + nbins - 1) / nbins) * nbins;
    std::vector<int> gcount(free_dims.size());
    for (std::size_t k = 0; k < free_dims.size(); ++k)
        gcount[k] = free_dims[k] == target ? g_target : grid_per_dim;

    std::vector<double> coords(fr.dims.size());
    for (std::size_t d = 0; d < fr.dims.size(); ++d) coords[d] = fr.dims[d].lo;

    std::vector<double> bins(nbins, 0.0);
    std::vector<int> idx(free_dims.size(), 0);
    while (true) {
        int target_cell = 0;
        for (std::size_t k = 0; k < free_dims.size(); ++k) {
            const auto& dim = fr.dims[free_dims[k]];
            coords[free_dims[k]] = dim.lo + (idx[k] + 0.5) * (dim.hi - dim.lo) / gcount[k];
            if (free_dims[k] == target) target_cell = idx[k];
        }
        const double rho = density_at(state, fr.config_at(coords));
        bins[target_cell * nbins / g_target] += rho;
        std::size_t k = free_dims.size();
        bool done = true;
        while (k > 0) {
            --k;
            if (++idx[k] < gcount[k]) {
                done = false;
                break;
            }
            idx[k] = 0;
        }
        if (done) break;
    }
    return bins;
}

EquivarianceReport equivariance_check(const ManyBodyState& state, const EnsembleSpec& spec,
                                      double delta_s, const IntegratorConfig& cfg, int nbins) {
    EquivarianceReport report;
    report.delta_s = delta_s;
    report.count = spec.count;

    const SampleSet initial = sample(state, spec);
    PushforwardResult pushed = pushforward(state, initial, delta_s, cfg, spec.workers);
    report.excluded = pushed.excluded;

    // Boundary-shell width per axis: max |V^mu| across a velocity probe of the
    // initial ensemble, times delta_s, with a 20% margin.
    GuidanceField field(state);
    std::array<double, 4> vmax{};
    const std::size_t probes = std::min<std::size_t>(initial.configs.size(), 400);
    for (std::size_t i = 0; i < probes; ++i) {
        try {
            for (const auto& v : field.velocities(initial.configs[i]))
                for (int mu = 0; mu < 4; ++mu) vmax[mu] = std::max(vmax[mu], std::abs(v[mu]));
        } catch (const NodeError&) {
        }
    }

    std::vector<Region4> interior = spec.region;
    for (auto& r : interior)
        for (int mu = 0; mu < 4; ++mu) {
            if (r.hi[mu] <= r.lo[mu]) continue;
            const double shell = 1.2 * vmax[mu] * std::abs(delta_s);
            r.lo[mu] += shell;
            r.hi[mu] -= shell;
            if (r.hi[mu] <= r.lo[mu]) throw DimensionError("boundary shell consumed the region");
        }

    const auto inside = [&](const std::vector<FourVector>& xs) {
        for (std::size_t p = 0; p < interior.size(); ++p)
            for (int mu = 0; mu < 4; ++mu) {
                if (interior[p].hi[mu] <= interior[p].lo[mu]) continue;
                if (xs[p][mu] < interior[p].lo[mu] || xs[p][mu] > interior[p].hi[mu]) return false;
            }
        return true;
    };

    std::vector<const std::vector<FourVector>*> kept;
    for (const auto& xs : pushed.samples.configs)
        if (inside(xs)) kept.push_back(&xs);
    report.kept = kept.size();

    for (std::size_t p = 0; p < interior.size(); ++p) {
        for (int mu = 0; mu < 4; ++mu) {
            if (interior[p].hi[mu] <= interior[p].lo[mu]) continue;
            const AxisId axis{p, mu};
            std::vector<double> expected = analytic_axis_marginal(state, interior, axis, nbins);
            double total = 0.0;
            for (double e : expected) total += e;
            for (double& e : expected) e *= static_cast<double>(kept.size()) / total;

            std::vector<double> observed(nbins, 0.0);
            const double lo = interior[p].lo[mu], hi = interior[p].hi[mu];
            for (const auto* xs : kept) {
                int b = static_cast<int>(((*xs)[p][mu] - lo) / (hi - lo) * nbins);
                b = std::clamp(b, 0, nbins - 1);
                observed[b] += 1.0;
            }
            report.checks.push_back({axis, chi2_test(observed, expected)});
        }
    }
    return report;
}

void samples_to_csv(const SampleSet& set, std::ostream& os) {
    os << "member,particle,t,x,y,z\n";
    os.precision(17);
    for (std::size_t i = 0; i < set.configs.size(); ++i)
        for (std::size_t a = 0; a < set.configs[i].size(); ++a)
            os << i << ',' << a << ',' << set.configs[i][a].t << ',' << set.configs[i][a].x << ','
               << set.configs[i][a].y << ',' << set.configs[i][a].z << '\n';
}

}  // namespace rbm
