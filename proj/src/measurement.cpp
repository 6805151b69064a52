#include "rbm/measurement.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <tuple>

#include "rbm/parallel.hpp"
#include "rbm/rng.hpp"

namespace rbm {

namespace {

constexpr double kOverlapTolerance = 1e-6;
constexpr double kCrossDensityTolerance = 1e-4;
constexpr double kDominance = 1e3;
constexpr double kClassifierFloor = 1e-6;
constexpr double kUnclassifiedBudget = 0.01;

ManyBodyState packet_state(const Packet& packet, double mass, const BoxSpec& box) {
    return ManyBodyState({ParticleSpec{mass, 1}}, {packet.modes}, packet.amps, box);
}

using ModeKey = std::tuple<double, double, double>;
ModeKey key_of(const MomentumMode& m) { return {m.p3[0], m.p3[1], m.p3[2]}; }

// Merges per-branch mode lists into one list; index_maps[b][i] is the union
// index of branch b's mode i.
std::vector<MomentumMode> merge_modes(const std::vector<const Packet*>& packets,
                                      std::vector<std::vector<std::size_t>>& index_maps) {
    std::vector<MomentumMode> merged;
    std::map<ModeKey, std::size_t> seen;
    index_maps.clear();
    for (const Packet* p : packets) {
        std::vector<std::size_t> map;
        map.reserve(p->modes.size());
        for (const auto& m : p->modes) {
            auto [it, inserted] = seen.try_emplace(key_of(m), merged.size());
            if (inserted) merged.push_back(m);
            map.push_back(it->second);
        }
        index_maps.push_back(std::move(map));
    }
    return merged;
}

// Max over a coarse spacetime scan of |phi_b||phi_b'| for b != b', against the
// common packet peak.
void check_pointer_overlap(const std::vector<Packet>& packets, double mass, const BoxSpec& box) {
    std::vector<ManyBodyState> states;
    states.reserve(packets.size());
    for (const auto& p : packets) states.push_back(packet_state(p, mass, box));

    const int nx = 400, nt = 5;
    double peak = 0.0, worst = 0.0;
    for (int it = 0; it < nt; ++it) {
        const double t = -box.T / 2 + box.T * it / (nt - 1);
        for (int ix = 0; ix < nx; ++ix) {
            const double x = -box.L / 2 + box.L * ix / (nx - 1.0);
            const FourVector y{t, x, 0.0, 0.0};
            std::vector<double> mag(states.size());
            for (std::size_t b = 0; b < states.size(); ++b) {
                const double d = density_at(states[b], {&y, 1});
                mag[b] = std::sqrt(d);
                peak = std::max(peak, d);
            }
            for (std::size_t b = 0; b < states.size(); ++b)
                for (std::size_t c = b + 1; c < states.size(); ++c)
                    worst = std::max(worst, mag[b] * mag[c]);
        }
    }
    if (worst > kOverlapTolerance * peak)
        throw OverlapError("pointer packets overlap beyond the decoherence tolerance");
}

std::vector<Region4> default_region(const BoxSpec& box, std::size_t n) {
    Region4 r;
    r.lo = {0.0, -box.L / 2, 0.0, 0.0};
    r.hi = {0.0, box.L / 2, 0.0, 0.0};
    return std::vector<Region4>(n, r);
}

// -2 node/failed, -1 unclassified, >= 0 branch index.
int classify_code(const std::optional<std::size_t>& c) {
    return c ? static_cast<int>(*c) : -1;
}

}  // namespace

Packet make_gaussian_packet(const BoxSpec& box, double center, double sigma_p, double mean_p) {
    if (sigma_p <= 0.0) throw DimensionError("make_gaussian_packet: sigma_p must be positive");
    const double dp = 2.0 * M_PI / box.L;
    const long k0 = std::lround(mean_p / dp);
    // Keep weights down to 1e-7: a sharper cutoff leaves position-space
    // ringing above the pointer non-overlap tolerance.
    const long khalf = static_cast<long>(std::ceil(7.6 * sigma_p / dp));
    Packet packet;
    for (long k = k0 - khalf; k <= k0 + khalf; ++k) {
        const double p = k * dp;
        const double w = std::exp(-(p - mean_p) * (p - mean_p) / (4.0 * sigma_p * sigma_p));
        if (w < 1e-7) continue;
        packet.modes.push_back(MomentumMode{{p, 0.0, 0.0}});
        packet.amps.push_back(std::polar(w, -p * center));
    }
    double norm2 = 0.0;
    for (const auto& a : packet.amps) norm2 += std::norm(a);
    const double scale = 1.0 / std::sqrt(norm2);
    for (auto& a : packet.amps) a *= scale;
    return packet;
}

Packet boost_packet(const Packet& packet, double mass, const Boost& b) {
    Packet out = packet;
    for (auto& m : out.modes) {
        const FourVector q = b(m.four_momentum(mass));
        m.p3 = {q.x, q.y, q.z};
    }
    return out;
}

ManyBodyState build_post_measurement(const MeasurementScenario& scenario) {
    if (scenario.branches.empty())
        throw DimensionError("measurement scenario needs at least one branch");
    double csum = 0.0;
    for (const auto& br : scenario.branches) csum += std::norm(br.amplitude);
    if (std::abs(csum - 1.0) > 1e-12)
        throw DimensionError("branch amplitudes must satisfy sum |c_b|^2 = 1");

    std::vector<Packet> pointers;
    for (const auto& br : scenario.branches) pointers.push_back(br.pointer);
    check_pointer_overlap(pointers, scenario.pointer_mass, scenario.box);

    std::vector<const Packet*> sys_packets, ptr_packets;
    for (const auto& br : scenario.branches) {
        sys_packets.push_back(&br.system);
        ptr_packets.push_back(&br.pointer);
    }
    std::vector<std::vector<std::size_t>> sys_map, ptr_map;
    const auto sys_modes = merge_modes(sys_packets, sys_map);
    const auto ptr_modes = merge_modes(ptr_packets, ptr_map);

    std::vector<Complex> amps(sys_modes.size() * ptr_modes.size(), Complex{0.0, 0.0});
    for (std::size_t b = 0; b < scenario.branches.size(); ++b) {
        const auto& br = scenario.branches[b];
        for (std::size_t i = 0; i < br.system.amps.size(); ++i)
            for (std::size_t j = 0; j < br.pointer.amps.size(); ++j)
                amps[sys_map[b][i] * ptr_modes.size() + ptr_map[b][j]] +=
                    br.amplitude * br.system.amps[i] * br.pointer.amps[j];
    }
    const double sys_mass = scenario.system_massless ? 0.0 : scenario.system_mass;
    ManyBodyState state({ParticleSpec{sys_mass, 1}, ParticleSpec{scenario.pointer_mass, 1}},
                        {sys_modes, ptr_modes}, std::move(amps), scenario.box);

    // Decoherence probe: the joint density must equal the incoherent branch
    // sum at random points, i.e. the interference terms are absent.
    std::vector<ManyBodyState> sys_states, ptr_states;
    for (const auto& br : scenario.branches) {
        sys_states.push_back(packet_state(br.system, sys_mass, scenario.box));
        ptr_states.push_back(packet_state(br.pointer, scenario.pointer_mass, scenario.box));
    }
    CounterRng rng(0xdec0de, 0);
    double max_density = 0.0, max_cross = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        std::array<FourVector, 2> xs;
        for (auto& x : xs) {
            x.t = rng.next_in(-scenario.box.T / 2, scenario.box.T / 2);
            x.x = rng.next_in(-scenario.box.L / 2, scenario.box.L / 2);
        }
        const double full = density_at(state, xs);
        double branch_sum = 0.0;
        for (std::size_t b = 0; b < scenario.branches.size(); ++b)
            branch_sum += std::norm(scenario.branches[b].amplitude) *
                          density_at(sys_states[b], {&xs[0], 1}) *
                          density_at(ptr_states[b], {&xs[1], 1});
        max_density = std::max(max_density, full);
        max_cross = std::max(max_cross, std::abs(full - branch_sum));
    }
    if (max_cross > kCrossDensityTolerance * max_density)
        throw OverlapError("cross-branch interference density exceeds tolerance");

    return state.normalized();
}

ManyBodyState branch_state(const MeasurementScenario& scenario, std::size_t b) {
    if (b >= scenario.branches.size()) throw DimensionError("branch_state: bad branch index");
    MeasurementScenario single = scenario;
    single.branches = {scenario.branches[b]};
    single.branches[0].amplitude = 1.0;
    return build_post_measurement(single);
}

ManyBodyState build_correlation_state(const CorrelationScenario& scenario) {
    const std::size_t n1 = scenario.amplitudes.size();
    if (n1 == 0 || scenario.system1.size() != n1 || scenario.pointer1.size() != n1)
        throw DimensionError("correlation scenario: side-1 packet count mismatch");
    const std::size_t n2 = scenario.amplitudes[0].size();
    for (const auto& row : scenario.amplitudes)
        if (row.size() != n2) throw DimensionError("correlation amplitude matrix is ragged");
    if (scenario.system2.size() != n2 || scenario.pointer2.size() != n2)
        throw DimensionError("correlation scenario: side-2 packet count mismatch");

    auto side_packets = [](const std::vector<Packet>& ps, double mass,
                           const std::optional<Boost>& b) {
        std::vector<Packet> out = ps;
        if (b)
            for (auto& p : out) p = boost_packet(p, mass, *b);
        return out;
    };
    const auto sys1 = side_packets(scenario.system1, scenario.system_mass, scenario.boost1);
    const auto ptr1 = side_packets(scenario.pointer1, scenario.pointer_mass, scenario.boost1);
    const auto sys2 = side_packets(scenario.system2, scenario.system_mass, scenario.boost2);
    const auto ptr2 = side_packets(scenario.pointer2, scenario.pointer_mass, scenario.boost2);

    check_pointer_overlap(ptr1, scenario.pointer_mass, scenario.box);
    check_pointer_overlap(ptr2, scenario.pointer_mass, scenario.box);

    auto ptrs = [](const std::vector<Packet>& v) {
        std::vector<const Packet*> out;
        for (const auto& p : v) out.push_back(&p);
        return out;
    };
    std::vector<std::vector<std::size_t>> m_s1, m_p1, m_s2, m_p2;
    const auto modes_s1 = merge_modes(ptrs(sys1), m_s1);
    const auto modes_p1 = merge_modes(ptrs(ptr1), m_p1);
    const auto modes_s2 = merge_modes(ptrs(sys2), m_s2);
    const auto modes_p2 = merge_modes(ptrs(ptr2), m_p2);

    const std::size_t N1 = modes_s1.size(), N2 = modes_p1.size(), N3 = modes_s2.size(),
                      N4 = modes_p2.size();
    std::vector<Complex> amps(N1 * N2 * N3 * N4, Complex{0.0, 0.0});
    for (std::size_t b1 = 0; b1 < n1; ++b1)
        for (std::size_t b2 = 0; b2 < n2; ++b2) {
            const Complex c = scenario.amplitudes[b1][b2];
            if (c == Complex{0.0, 0.0}) continue;
            for (std::size_t i = 0; i < sys1[b1].amps.size(); ++i)
                for (std::size_t j = 0; j < ptr1[b1].amps.size(); ++j)
                    for (std::size_t k = 0; k < sys2[b2].amps.size(); ++k)
                        for (std::size_t l = 0; l < ptr2[b2].amps.size(); ++l) {
                            const std::size_t idx =
                                ((m_s1[b1][i] * N2 + m_p1[b1][j]) * N3 + m_s2[b2][k]) * N4 +
                                m_p2[b2][l];
                            amps[idx] += c * sys1[b1].amps[i] * ptr1[b1].amps[j] *
                                         sys2[b2].amps[k] * ptr2[b2].amps[l];
                        }
        }
    ManyBodyState state(
        {ParticleSpec{scenario.system_mass, 1}, ParticleSpec{scenario.pointer_mass, 1},
         ParticleSpec{scenario.system_mass, 1}, ParticleSpec{scenario.pointer_mass, 1}},
        {modes_s1, modes_p1, modes_s2, modes_p2}, std::move(amps), scenario.box);
    return state.normalized();
}

BranchClassifier::BranchClassifier(std::vector<Packet> packets, double mass, const BoxSpec& box) {
    double peak = 0.0;
    for (const auto& p : packets) {
        states_.push_back(rbm::packet_state(p, mass, box));
        peak = std::max(peak, states_.back().peak_density_estimate());
    }
    floor_ = kClassifierFloor * peak;
}

std::optional<std::size_t> BranchClassifier::operator()(const FourVector& y) const {
    double best = -1.0, runner = 0.0;
    std::size_t best_b = 0;
    for (std::size_t b = 0; b < states_.size(); ++b) {
        const double d = density_at(states_[b], {&y, 1});
        if (d > best) {
            runner = best < 0.0 ? 0.0 : best;
            best = d;
            best_b = b;
        } else {
            runner = std::max(runner, d);
        }
    }
    if (best <= floor_) return std::nullopt;
    if (states_.size() > 1 && best < kDominance * runner) return std::nullopt;
    return best_b;
}

std::optional<std::size_t> classify_branch(const MeasurementScenario& scenario,
                                           const FourVector& pointer_event) {
    std::vector<Packet> pointers;
    for (const auto& br : scenario.branches) pointers.push_back(br.pointer);
    return BranchClassifier(std::move(pointers), scenario.pointer_mass, scenario.box)(
        pointer_event);
}

double MeasurementReport::max_sigma() const {
    double worst = 0.0;
    for (const auto& b : branches) {
        const double floor = classified ? 2.0 / static_cast<double>(classified) : 1e-12;
        worst = std::max(worst, std::abs(b.empirical - b.expected) / std::max(b.stderr_, floor));
    }
    return worst;
}

MeasurementReport run_measurement(const MeasurementScenario& scenario) {
    const ManyBodyState state = build_post_measurement(scenario);
    const ManyBodyState effective =
        state.massless_count() > 0 ? traced_state(state) : state;

    EnsembleSpec spec = scenario.ensemble;
    if (spec.region.empty())
        spec.region = default_region(scenario.box, effective.particle_count());
    const SampleSet set = sample(effective, spec);

    const GuidanceField field(effective);
    std::vector<Packet> pointers;
    for (const auto& br : scenario.branches) pointers.push_back(br.pointer);
    const BranchClassifier classify(std::move(pointers), scenario.pointer_mass, scenario.box);
    const std::size_t ptr_index = effective.particle_count() - 1;

    std::vector<int> outcome(set.configs.size(), -2);
    parallel_for(set.configs.size(), spec.workers, [&](std::size_t i) {
        try {
            const Trajectory traj = integrate(field, set.configs[i], {0.0, scenario.s_final},
                                              scenario.integrator);
            if (traj.reason != TerminationReason::complete) return;
            outcome[i] = classify_code(classify(traj.samples.back().X[ptr_index]));
        } catch (const NodeError&) {
        }
    });

    MeasurementReport report;
    report.count = set.configs.size();
    std::vector<std::size_t> tally(scenario.branches.size(), 0);
    for (int o : outcome) {
        if (o >= 0)
            ++tally[static_cast<std::size_t>(o)];
        else
            ++report.unclassified;
    }
    report.classified = report.count - report.unclassified;
    if (report.unclassified >
        kUnclassifiedBudget * static_cast<double>(report.count))
        throw UnclassifiedError("more than 1% of ensemble members unclassified");

    for (std::size_t b = 0; b < scenario.branches.size(); ++b) {
        BranchStat stat;
        stat.expected = std::norm(scenario.branches[b].amplitude);
        stat.empirical = static_cast<double>(tally[b]) / static_cast<double>(report.classified);
        stat.stderr_ = binomial_stderr(stat.expected, report.classified);
        report.branches.push_back(stat);
    }
    return report;
}

double CorrelationReport::max_sigma() const {
    double worst = 0.0;
    for (const auto& row : table)
        for (const auto& b : row) {
            const double floor = classified ? 2.0 / static_cast<double>(classified) : 1e-12;
            worst =
                std::max(worst, std::abs(b.empirical - b.expected) / std::max(b.stderr_, floor));
        }
    return worst;
}

double CorrelationReport::correlator() const {
    double e = 0.0;
    for (std::size_t b1 = 0; b1 < table.size(); ++b1)
        for (std::size_t b2 = 0; b2 < table[b1].size(); ++b2)
            e += ((b1 + b2) % 2 == 0 ? 1.0 : -1.0) * table[b1][b2].empirical;
    return e;
}

double CorrelationReport::correlator_stderr() const {
    const double e = correlator();
    if (classified == 0) return 1.0;
    return std::sqrt(std::max(1.0 - e * e, 0.0) / static_cast<double>(classified));
}

CorrelationReport run_correlation(const CorrelationScenario& scenario) {
    const ManyBodyState state = build_correlation_state(scenario);

    EnsembleSpec spec = scenario.ensemble;
    if (spec.region.empty()) spec.region = default_region(scenario.box, 4);
    const SampleSet set = sample(state, spec);

    const GuidanceField field(state);
    auto boosted = [](const std::vector<Packet>& ps, double mass,
                      const std::optional<Boost>& b) {
        std::vector<Packet> out = ps;
        if (b)
            for (auto& p : out) p = boost_packet(p, mass, *b);
        return out;
    };
    const BranchClassifier classify1(
        boosted(scenario.pointer1, scenario.pointer_mass, scenario.boost1),
        scenario.pointer_mass, scenario.box);
    const BranchClassifier classify2(
        boosted(scenario.pointer2, scenario.pointer_mass, scenario.boost2),
        scenario.pointer_mass, scenario.box);

    const std::size_t n1 = scenario.amplitudes.size();
    const std::size_t n2 = scenario.amplitudes[0].size();
    std::vector<int> outcome(set.configs.size(), -1);
    parallel_for(set.configs.size(), spec.workers, [&](std::size_t i) {
        try {
            const Trajectory traj = integrate(field, set.configs[i], {0.0, scenario.s_final},
                                              scenario.integrator);
            if (traj.reason != TerminationReason::complete) return;
            const auto b1 = classify1(traj.samples.back().X[1]);
            const auto b2 = classify2(traj.samples.back().X[3]);
            if (b1 && b2) outcome[i] = static_cast<int>(*b1 * n2 + *b2);
        } catch (const NodeError&) {
        }
    });

    CorrelationReport report;
    report.count = set.configs.size();
    std::vector<std::size_t> tally(n1 * n2, 0);
    for (int o : outcome) {
        if (o >= 0)
            ++tally[static_cast<std::size_t>(o)];
        else
            ++report.unclassified;
    }
    report.classified = report.count - report.unclassified;
    if (report.unclassified >
        kUnclassifiedBudget * static_cast<double>(report.count))
        throw UnclassifiedError("more than 1% of ensemble members unclassified");

    double csum = 0.0;
    for (const auto& row : scenario.amplitudes)
        for (const auto& c : row) csum += std::norm(c);
    report.table.resize(n1, std::vector<BranchStat>(n2));
    for (std::size_t b1 = 0; b1 < n1; ++b1)
        for (std::size_t b2 = 0; b2 < n2; ++b2) {
            BranchStat& stat = report.table[b1][b2];
            stat.expected = std::norm(scenario.amplitudes[b1][b2]) / csum;
            stat.empirical =
                static_cast<double>(tally[b1 * n2 + b2]) / static_cast<double>(report.classified);
            stat.stderr_ = binomial_stderr(stat.expected, report.classified);
        }
    return report;
}

void set_singlet_amplitudes(CorrelationScenario& scenario, double angle_a, double angle_b) {
    const double half = (angle_a - angle_b) / 2.0;
    const double s = std::sin(half) / std::sqrt(2.0);
    const double c = std::cos(half) / std::sqrt(2.0);
    scenario.amplitudes = {{Complex{s, 0.0}, Complex{c, 0.0}},
                           {Complex{-c, 0.0}, Complex{s, 0.0}}};
}

ChshResult run_chsh(const CorrelationScenario& base, std::array<double, 2> a_angles,
                    std::array<double, 2> b_angles) {
    ChshResult result;
    const std::array<std::pair<int, int>, 4> order = {{{0, 0}, {0, 1}, {1, 0}, {1, 1}}};
    const std::array<double, 4> sign = {1.0, -1.0, 1.0, 1.0};
    double var = 0.0;
    for (std::size_t k = 0; k < 4; ++k) {
        CorrelationScenario scenario = base;
        set_singlet_amplitudes(scenario, a_angles[static_cast<std::size_t>(order[k].first)],
                               b_angles[static_cast<std::size_t>(order[k].second)]);
        scenario.ensemble.seed = base.ensemble.seed + 7919 * (k + 1);
        result.settings[k] = run_correlation(scenario);
        result.value += sign[k] * result.settings[k].correlator();
        const double se = result.settings[k].correlator_stderr();
        var += se * se;
    }
    result.stderr_ = std::sqrt(var);
    return result;
}

FrameMixReport frame_mix_check(const CorrelationScenario& scenario) {
    CorrelationScenario rest = scenario;
    rest.boost1.reset();
    rest.boost2.reset();
    FrameMixReport report;
    report.rest = run_correlation(rest);
    report.boosted = run_correlation(scenario);
    for (std::size_t b1 = 0; b1 < report.rest.table.size(); ++b1)
        for (std::size_t b2 = 0; b2 < report.rest.table[b1].size(); ++b2) {
            const auto& r = report.rest.table[b1][b2];
            const auto& m = report.boosted.table[b1][b2];
            const double se =
                std::sqrt(r.stderr_ * r.stderr_ + m.stderr_ * m.stderr_) + 1e-12;
            report.max_sigma_gap =
                std::max(report.max_sigma_gap, std::abs(r.empirical - m.empirical) / se);
        }
    return report;
}

}  // namespace rbm
