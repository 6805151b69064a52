#include "rbm/wavefunction.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rbm/rng.hpp"

namespace rbm {

namespace {

constexpr Complex kI{0.0, 1.0};

bool is_lattice_momentum(double p, double L) {
    const double k = p * L / (2.0 * M_PI);
    return std::abs(k - std::round(k)) < 1e-9;
}

// Iterates all mode tuples in row-major order, invoking f(flat_base, ks) where
// flat_base is the offset of the tuple within one component block.
template <typename F>
void for_each_tuple(const std::vector<std::vector<MomentumMode>>& modes, F&& f) {
    const std::size_t n = modes.size();
    std::vector<int> ks(n, 0);
    while (true) {
        std::size_t flat = 0;
        for (std::size_t a = 0; a < n; ++a) flat = flat * modes[a].size() + ks[a];
        f(flat, ks);
        std::size_t a = n;
        while (a > 0) {
            --a;
            if (++ks[a] < static_cast<int>(modes[a].size())) break;
            ks[a] = 0;
            if (a == 0) return;
        }
    }
}

// Lower-index momentum p_mu = (p^0, -p^i) per mode.
std::array<double, 4> lower_momentum(const MomentumMode& mode, double mass) {
    const FourVector p = mode.four_momentum(mass);
    return {p.t, -p.x, -p.y, -p.z};
}

}  // namespace

ManyBodyState::ManyBodyState(std::vector<ParticleSpec> particles,
                             std::vector<std::vector<MomentumMode>> modes,
                             std::vector<Complex> amplitudes, BoxSpec box) {
    particles_ = std::move(particles);
    modes_ = std::move(modes);
    amplitudes_ = std::move(amplitudes);
    box_ = box;
    validate_and_finalize(false);
}

ManyBodyState ManyBodyState::with_negative_energy_modes(
    std::vector<ParticleSpec> particles, std::vector<std::vector<MomentumMode>> modes,
    std::vector<Complex> amplitudes, BoxSpec box) {
    ManyBodyState s;
    s.particles_ = std::move(particles);
    s.modes_ = std::move(modes);
    s.amplitudes_ = std::move(amplitudes);
    s.box_ = box;
    s.validate_and_finalize(true);
    return s;
}

void ManyBodyState::validate_and_finalize(bool allow_negative) {
    if (particles_.empty()) throw DimensionError("state needs at least one particle");
    if (modes_.size() != particles_.size())
        throw DimensionError("mode list count must match particle count");

    std::size_t tuples = 1;
    for (std::size_t a = 0; a < particles_.size(); ++a) {
        const auto& part = particles_[a];
        if (part.mass < 0.0) throw DimensionError("mass must be >= 0");
        if (part.components < 1) throw DimensionError("components must be >= 1");
        if (modes_[a].empty()) throw DimensionError("every particle needs >= 1 mode");
        if (part.massless()) ++massless_count_;
        for (const auto& mode : modes_[a]) {
            if (mode.energy_sign != 1 && mode.energy_sign != -1)
                throw DimensionError("energy_sign must be +-1");
            if (mode.energy_sign < 0) {
                if (!allow_negative)
                    throw DimensionError("negative-energy modes need the test-only constructor");
                has_negative_energy_ = true;
            }
            for (double p : mode.p3)
                if (!is_lattice_momentum(p, box_.L)) on_lattice_ = false;
        }
        tuples *= modes_[a].size();
    }

    ncomp_ = 1;
    for (const auto& part : particles_) ncomp_ *= part.components;
    if (amplitudes_.size() != tuples * static_cast<std::size_t>(ncomp_))
        throw DimensionError("amplitude tensor shape mismatch");
    if (box_.L <= 0.0 || box_.T <= 0.0) throw DimensionError("box extents must be positive");
}

double ManyBodyState::amplitude_norm2() const {
    double s = 0.0;
    for (const auto& c : amplitudes_) s += std::norm(c);
    return s;
}

ManyBodyState ManyBodyState::normalized() const {
    const double vol = std::pow(box_.L * box_.L * box_.L * box_.T,
                                static_cast<double>(particles_.size()));
    const double scale = 1.0 / std::sqrt(vol * amplitude_norm2());
    ManyBodyState out = *this;
    for (auto& c : out.amplitudes_) c *= scale;
    out.peak_density_ = -1.0;
    return out;
}

Complex ManyBodyState::amplitude(int A, std::span<const int> ks) const {
    std::size_t flat = A;
    for (std::size_t a = 0; a < modes_.size(); ++a) flat = flat * modes_[a].size() + ks[a];
    return amplitudes_[flat];
}

double ManyBodyState::peak_density_estimate() const {
    if (peak_density_ >= 0.0) return peak_density_;
    CounterRng rng(0x5eedu, 0);
    const std::size_t n = particles_.size();
    std::vector<FourVector> xs(n);
    double peak = 0.0;
    for (int i = 0; i < 1024; ++i) {
        for (auto& x : xs) {
            x.t = rng.next_in(-box_.T / 2, box_.T / 2);
            x.x = rng.next_in(-box_.L / 2, box_.L / 2);
            x.y = rng.next_in(-box_.L / 2, box_.L / 2);
            x.z = rng.next_in(-box_.L / 2, box_.L / 2);
        }
        peak = std::max(peak, density_at(*this, xs));
    }
    peak = std::max(peak, density_at(*this, std::vector<FourVector>(n)));
    peak_density_ = peak;
    return peak_density_;
}

FieldSample evaluate(const ManyBodyState& state, std::span<const FourVector> xs) {
    const auto& parts = state.particles();
    const auto& modes = state.modes();
    const std::size_t n = parts.size();
    if (xs.size() != n) throw DimensionError("evaluate: one event per particle required");
    const int ncomp = state.component_dim();

    // Per-particle per-mode plane-wave phases and lower-index momenta.
    std::vector<std::vector<Complex>> phases(n);
    std::vector<std::vector<std::array<double, 4>>> pmu(n);
    for (std::size_t a = 0; a < n; ++a) {
        phases[a].reserve(modes[a].size());
        pmu[a].reserve(modes[a].size());
        for (const auto& mode : modes[a]) {
            const FourVector p = mode.four_momentum(parts[a].mass);
            const double phase =
                -(p.t * xs[a].t - p.x * xs[a].x - p.y * xs[a].y - p.z * xs[a].z);
            phases[a].push_back(std::polar(1.0, phase));
            pmu[a].push_back(lower_momentum(mode, parts[a].mass));
        }
    }

    FieldSample out;
    out.psi.assign(ncomp, Complex{});
    out.grad.assign(n, std::vector<std::array<Complex, 4>>(ncomp));

    // Accumulate psi and, per particle, the partial sums over tuples sharing a
    // mode index; the momentum factors are applied once per mode afterwards.
    std::vector<std::vector<std::vector<Complex>>> partial(n);
    for (std::size_t a = 0; a < n; ++a)
        partial[a].assign(ncomp, std::vector<Complex>(modes[a].size()));

    const auto& amps = state.amplitudes();
    std::size_t tuples = amps.size() / ncomp;
    for_each_tuple(modes, [&](std::size_t flat, const std::vector<int>& ks) {
        Complex prod{1.0, 0.0};
        for (std::size_t a = 0; a < n; ++a) prod *= phases[a][ks[a]];
        for (int A = 0; A < ncomp; ++A) {
            const Complex term = amps[A * tuples + flat] * prod;
            out.psi[A] += term;
            for (std::size_t a = 0; a < n; ++a) partial[a][A][ks[a]] += term;
        }
    });
    for (std::size_t a = 0; a < n; ++a)
        for (int A = 0; A < ncomp; ++A)
            for (std::size_t k = 0; k < modes[a].size(); ++k) {
                const Complex mi_term = -kI * partial[a][A][k];
                const auto& p = pmu[a][k];
                for (int mu = 0; mu < 4; ++mu) out.grad[a][A][mu] += mi_term * p[mu];
            }

    for (int A = 0; A < ncomp; ++A) out.density += std::norm(out.psi[A]);

    out.currents.resize(n);
    for (std::size_t a = 0; a < n; ++a) {
        if (parts[a].massless()) continue;
        FourVector j{};
        for (int mu = 0; mu < 4; ++mu) {
            double im = 0.0;
            for (int A = 0; A < ncomp; ++A)
                im += std::imag(std::conj(out.psi[A]) * out.grad[a][A][mu]);
            // raise the index: d^mu = eta^{mu mu} d_mu
            j[mu] = -metric_sign(mu) * im / parts[a].mass;
        }
        out.currents[a] = j;
    }
    return out;
}

double density_at(const ManyBodyState& state, std::span<const FourVector> xs) {
    const auto& parts = state.particles();
    const auto& modes = state.modes();
    const std::size_t n = parts.size();
    if (xs.size() != n) throw DimensionError("density_at: one event per particle required");
    const int ncomp = state.component_dim();

    std::vector<std::vector<Complex>> phases(n);
    for (std::size_t a = 0; a < n; ++a) {
        phases[a].reserve(modes[a].size());
        for (const auto& mode : modes[a]) {
            const FourVector p = mode.four_momentum(parts[a].mass);
            phases[a].push_back(std::polar(
                1.0, -(p.t * xs[a].t - p.x * xs[a].x - p.y * xs[a].y - p.z * xs[a].z)));
        }
    }

    std::vector<Complex> psi(ncomp, Complex{});
    const auto& amps = state.amplitudes();
    const std::size_t tuples = amps.size() / ncomp;
    for_each_tuple(modes, [&](std::size_t flat, const std::vector<int>& ks) {
        Complex prod{1.0, 0.0};
        for (std::size_t a = 0; a < n; ++a) prod *= phases[a][ks[a]];
        for (int A = 0; A < ncomp; ++A) psi[A] += amps[A * tuples + flat] * prod;
    });
    double density = 0.0;
    for (int A = 0; A < ncomp; ++A) density += std::norm(psi[A]);
    return density;
}

std::vector<std::array<std::array<Complex, 4>, 4>> second_derivatives(
    const ManyBodyState& state, std::size_t a, std::span<const FourVector> xs) {
    const auto& parts = state.particles();
    const auto& modes = state.modes();
    const std::size_t n = parts.size();
    if (xs.size() != n || a >= n) throw DimensionError("second_derivatives: bad arguments");
    const int ncomp = state.component_dim();

    std::vector<std::vector<Complex>> phases(n);
    for (std::size_t b = 0; b < n; ++b)
        for (const auto& mode : modes[b]) {
            const FourVector p = mode.four_momentum(parts[b].mass);
            phases[b].push_back(std::polar(
                1.0, -(p.t * xs[b].t - p.x * xs[b].x - p.y * xs[b].y - p.z * xs[b].z)));
        }
    std::vector<std::array<double, 4>> pmu;
    for (const auto& mode : modes[a]) pmu.push_back(lower_momentum(mode, parts[a].mass));

    std::vector<std::array<std::array<Complex, 4>, 4>> out(ncomp);
    std::vector<std::vector<Complex>> partial(ncomp, std::vector<Complex>(modes[a].size()));
    const auto& amps = state.amplitudes();
    std::size_t tuples = amps.size() / ncomp;
    for_each_tuple(modes, [&](std::size_t flat, const std::vector<int>& ks) {
        Complex prod{1.0, 0.0};
        for (std::size_t b = 0; b < n; ++b) prod *= phases[b][ks[b]];
        for (int A = 0; A < ncomp; ++A) partial[A][ks[a]] += amps[A * tuples + flat] * prod;
    });
    for (int A = 0; A < ncomp; ++A)
        for (std::size_t k = 0; k < modes[a].size(); ++k) {
            // (-i p_mu)(-i p_nu) = -p_mu p_nu
            const Complex base = -partial[A][k];
            const auto& p = pmu[k];
            for (int mu = 0; mu < 4; ++mu)
                for (int nu = 0; nu < 4; ++nu) out[A][mu][nu] += base * (p[mu] * p[nu]);
        }
    return out;
}

FourVector velocity(const ManyBodyState& state, std::size_t a, std::span<const FourVector> xs) {
    if (a >= state.particle_count()) throw DimensionError("velocity: bad particle index");
    if (state.particles()[a].massless())
        throw MasslessError("massless particles have no velocity field");
    const FieldSample f = evaluate(state, xs);
    if (f.density <= state.psi_floor())
        throw NodeError("velocity undefined at a wave-function node");
    return *f.currents[a] * (1.0 / f.density);
}

double quantum_potential(const ManyBodyState& state, std::size_t a,
                         std::span<const FourVector> xs) {
    if (state.component_dim() != 1)
        throw MultiComponentError("polar decomposition undefined for multi-component states");
    if (state.particles()[a].massless())
        throw MasslessError("quantum potential undefined for massless particles");
    const FieldSample f = evaluate(state, xs);
    if (f.density <= state.psi_floor()) throw NodeError("quantum potential undefined at a node");

    const double m = state.particles()[a].mass;
    const double R = std::sqrt(f.density);
    const Complex psi = f.psi[0];
    const auto& g = f.grad[a][0];
    const auto sec = second_derivatives(state, a, xs)[0];

    // dR_mu = Re(psi* d_mu psi) / R  (lower index)
    std::array<double, 4> dR;
    for (int mu = 0; mu < 4; ++mu) dR[mu] = std::real(std::conj(psi) * g[mu]) / R;

    // eta^{mu nu} contractions
    double dpsi_dpsi = 0.0;  // d^mu psi* d_mu psi
    double dR_dR = 0.0;
    Complex box_psi{};
    for (int mu = 0; mu < 4; ++mu) {
        const double s = metric_sign(mu);
        dpsi_dpsi += s * std::norm(g[mu]);
        dR_dR += s * dR[mu] * dR[mu];
        box_psi += s * sec[mu][mu];
    }
    const double box_R = (std::real(std::conj(psi) * box_psi) + dpsi_dpsi - dR_dR) / R;
    return box_R / (2.0 * m * R);
}

EnergyStats energy_stats(const ManyBodyState& state, std::size_t a) {
    const auto& modes = state.modes();
    if (a >= modes.size()) throw DimensionError("energy_stats: bad particle index");
    const double mass = state.particles()[a].mass;
    std::vector<double> w(modes[a].size(), 0.0);
    const auto& amps = state.amplitudes();
    const int ncomp = state.component_dim();
    const std::size_t tuples = amps.size() / ncomp;
    for_each_tuple(modes, [&](std::size_t flat, const std::vector<int>& ks) {
        for (int A = 0; A < ncomp; ++A) w[ks[a]] += std::norm(amps[A * tuples + flat]);
    });
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    double mean = 0.0, m2 = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) {
        const double e = modes[a][k].energy(mass);
        mean += w[k] / total * e;
        m2 += w[k] / total * e * e;
    }
    return {mean, std::sqrt(std::max(m2 - mean * mean, 0.0))};
}

double epsilon_estimate(const ManyBodyState& state, std::size_t a,
                        std::span<const FourVector> xs) {
    const FieldSample f = evaluate(state, xs);
    if (f.density <= state.psi_floor()) throw NodeError("epsilon undefined at a node");
    if (state.particles()[a].massless()) throw MasslessError("no velocity for massless particle");
    const double m = state.particles()[a].mass;
    const int ncomp = state.component_dim();
    const auto sec = second_derivatives(state, a, xs);

    double d0_rho = 0.0;
    double j0 = 0.0, d0_j0 = 0.0;
    for (int A = 0; A < ncomp; ++A) {
        const Complex psi = f.psi[A];
        const Complex g0 = f.grad[a][A][0];
        d0_rho += 2.0 * std::real(std::conj(psi) * g0);
        j0 += -std::imag(std::conj(psi) * g0) / m;
        d0_j0 += -std::imag(std::conj(g0) * g0 + std::conj(psi) * sec[A][0][0]) / m;
    }
    const double rho = f.density;
    const double v0 = j0 / rho;
    const double d0_v0 = (d0_j0 * rho - j0 * d0_rho) / (rho * rho);
    const double denom = v0 * d0_rho;
    if (std::abs(denom) < 1e-10 * state.peak_density_estimate() * (1.0 + std::abs(v0)))
        throw IndeterminateError("d0 |psi|^2 vanishes; epsilon indeterminate");
    // eps is defined through rho d0 V^0 = V^0 d0 rho * eps, so it is the plain
    // ratio; it vanishes in the narrow-energy limit.
    return (rho * d0_v0) / denom;
}

double spatial_norm(const ManyBodyState& state, std::span<const double> t_values) {
    const auto& parts = state.particles();
    const auto& modes = state.modes();
    const std::size_t n = parts.size();
    if (t_values.size() != n) throw DimensionError("spatial_norm: one time per particle required");
    const double L = state.box().L;
    const auto& amps = state.amplitudes();
    const int ncomp = state.component_dim();
    const std::size_t tuples = amps.size() / ncomp;

    // Collect tuples once so the double sum below can pair them freely.
    std::vector<std::vector<int>> all_ks;
    for_each_tuple(modes, [&](std::size_t, const std::vector<int>& ks) { all_ks.push_back(ks); });

    const auto axis_integral = [&](double dp) {
        if (std::abs(dp) < 1e-14) return L;
        return 2.0 * std::sin(dp * L / 2.0) / dp;
    };

    Complex total{};
    for (const auto& ks : all_ks) {
        for (const auto& kps : all_ks) {
            // spatial integral prod_a prod_axis int e^{i(p - p') x} dx and the
            // time phase e^{-i (p0 - p0') t_a}; cancellation is numerical.
            Complex factor{1.0, 0.0};
            for (std::size_t a = 0; a < n; ++a) {
                const FourVector p = modes[a][ks[a]].four_momentum(parts[a].mass);
                const FourVector pp = modes[a][kps[a]].four_momentum(parts[a].mass);
                factor *= axis_integral(p.x - pp.x) * axis_integral(p.y - pp.y) *
                          axis_integral(p.z - pp.z);
                factor *= std::polar(1.0, -(p.t - pp.t) * t_values[a]);
            }
            std::size_t flat = 0, flatp = 0;
            for (std::size_t a = 0; a < n; ++a) {
                flat = flat * modes[a].size() + ks[a];
                flatp = flatp * modes[a].size() + kps[a];
            }
            for (int A = 0; A < ncomp; ++A)
                total += std::conj(amps[A * tuples + flatp]) * amps[A * tuples + flat] * factor;
        }
    }
    return std::real(total);
}

ManyBodyState traced_state(const ManyBodyState& state) {
    if (state.massless_count() == 0)
        throw NoMasslessError("trace-out requires at least one massless particle");
    if (state.massless_count() == state.particle_count())
        throw DimensionError("trace-out requires at least one massive particle");
    if (!state.on_lattice())
        throw OffLatticeError("analytic trace-out requires box-lattice momenta");

    const auto& parts = state.particles();
    const auto& modes = state.modes();
    const std::size_t n = parts.size();
    const int ncomp = state.component_dim();
    const double L = state.box().L;
    const double T = state.box().T;

    std::vector<ParticleSpec> massive_parts;
    std::vector<std::vector<MomentumMode>> massive_modes;
    std::size_t traced_dim = 1;
    for (std::size_t a = 0; a < n; ++a) {
        if (parts[a].massless()) {
            traced_dim *= modes[a].size();
        } else {
            massive_parts.push_back(parts[a]);
            massive_modes.push_back(modes[a]);
        }
    }
    const double weight = std::pow(L * L * L * T, 0.5 * static_cast<double>(state.massless_count()));

    // New collective component index: (A, massless mode tuple).
    std::size_t new_ncomp = ncomp * traced_dim;
    std::size_t massive_tuples = 1;
    for (const auto& ms : massive_modes) massive_tuples *= ms.size();
    std::vector<Complex> new_amps(new_ncomp * massive_tuples);

    const auto& amps = state.amplitudes();
    const std::size_t tuples = amps.size() / ncomp;
    for (int A = 0; A < ncomp; ++A) {
        for_each_tuple(modes, [&](std::size_t flat, const std::vector<int>& ks) {
            std::size_t ml_flat = 0, mv_flat = 0;
            for (std::size_t a = 0; a < n; ++a) {
                if (parts[a].massless())
                    ml_flat = ml_flat * modes[a].size() + ks[a];
                else
                    mv_flat = mv_flat * modes[a].size() + ks[a];
            }
            const std::size_t Anew = A * traced_dim + ml_flat;
            new_amps[Anew * massive_tuples + mv_flat] = amps[A * tuples + flat] * weight;
        });
    }

    // Fold the traced dimension into the first massive particle's component count
    // so that the component product equals new_ncomp.
    int rest = 1;
    for (std::size_t i = 1; i < massive_parts.size(); ++i) rest *= massive_parts[i].components;
    massive_parts[0].components = static_cast<int>(new_ncomp) / rest;

    return ManyBodyState(std::move(massive_parts), std::move(massive_modes), std::move(new_amps),
                         state.box());
}

TracedSample traceout_massless(const ManyBodyState& state,
                               std::span<const FourVector> xs_massive) {
    const ManyBodyState eff = traced_state(state);
    const FieldSample f = evaluate(eff, xs_massive);
    TracedSample out;
    out.density = f.density;
    for (const auto& j : f.currents) out.currents.push_back(*j);
    return out;
}

ManyBodyState boost_state(const ManyBodyState& state, const Boost& b) {
    std::vector<std::vector<MomentumMode>> new_modes;
    for (std::size_t a = 0; a < state.particle_count(); ++a) {
        const double mass = state.particles()[a].mass;
        std::vector<MomentumMode> ms;
        for (const auto& mode : state.modes()[a]) {
            const FourVector q = b(mode.four_momentum(mass));
            MomentumMode nm;
            nm.p3 = {q.x, q.y, q.z};
            nm.energy_sign = mode.energy_sign;
            ms.push_back(nm);
        }
        new_modes.push_back(std::move(ms));
    }
    if (state.has_negative_energy())
        return ManyBodyState::with_negative_energy_modes(state.particles(), std::move(new_modes),
                                                         state.amplitudes(), state.box());
    return ManyBodyState(state.particles(), std::move(new_modes), state.amplitudes(), state.box());
}

}  // namespace rbm
