#include "rbm/scenario.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "rbm/classical.hpp"
#include "rbm/dynamics.hpp"
#include "rbm/ensemble.hpp"
#include "rbm/measurement.hpp"
#include "rbm/rng.hpp"
#include "rbm/wavefunction.hpp"

namespace rbm {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::string join(const std::string& base, const char* key) { return base + "." + key; }

const json& require(const json& j, const std::string& path, const char* key) {
    if (!j.is_object() || !j.contains(key))
        throw ScenarioError(join(path, key), "required field missing");
    return j.at(key);
}

double as_number(const json& v, const std::string& field) {
    if (!v.is_number()) throw ScenarioError(field, "expected a number");
    return v.get<double>();
}

double number_or(const json& j, const std::string& path, const char* key, double def) {
    if (!j.is_object() || !j.contains(key)) return def;
    return as_number(j.at(key), join(path, key));
}

Complex parse_complex(const json& v, const std::string& field) {
    if (v.is_number()) return Complex{v.get<double>(), 0.0};
    if (v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number())
        return Complex{v[0].get<double>(), v[1].get<double>()};
    throw ScenarioError(field, "expected a number or [re, im]");
}

FourVector parse_four(const json& v, const std::string& field) {
    if (!v.is_array() || v.size() != 4)
        throw ScenarioError(field, "expected [t, x, y, z]");
    return {as_number(v[0], field), as_number(v[1], field), as_number(v[2], field),
            as_number(v[3], field)};
}

std::array<double, 3> parse_three(const json& v, const std::string& field) {
    if (!v.is_array() || v.size() != 3)
        throw ScenarioError(field, "expected [x, y, z]");
    return {as_number(v[0], field), as_number(v[1], field), as_number(v[2], field)};
}

BoxSpec parse_box(const json& j, const std::string& path) {
    BoxSpec box;
    box.L = number_or(j, path, "L", box.L);
    box.T = number_or(j, path, "T", box.T);
    if (box.L <= 0.0 || box.T <= 0.0) throw ScenarioError(path, "box extents must be positive");
    return box;
}

IntegratorConfig parse_integrator(const json& parent, const std::string& parent_path) {
    IntegratorConfig cfg;
    if (!parent.contains("integrator")) return cfg;
    const json& j = parent.at("integrator");
    const std::string path = join(parent_path, "integrator");
    if (j.contains("method")) {
        const std::string m = j.at("method").get<std::string>();
        if (m == "rk4_fixed")
            cfg.method = IntegratorMethod::rk4_fixed;
        else if (m == "rk4_adaptive")
            cfg.method = IntegratorMethod::rk4_adaptive;
        else
            throw ScenarioError(join(path, "method"), "unknown method '" + m + "'");
    }
    cfg.step = number_or(j, path, "step", cfg.step);
    cfg.tolerance = number_or(j, path, "tolerance", cfg.tolerance);
    cfg.max_steps = static_cast<std::size_t>(
        number_or(j, path, "max_steps", static_cast<double>(cfg.max_steps)));
    if (cfg.step <= 0.0) throw ScenarioError(join(path, "step"), "step must be positive");
    return cfg;
}

ManyBodyState parse_state(const json& j, const std::string& path) {
    const BoxSpec box = j.contains("box") ? parse_box(j.at("box"), join(path, "box")) : BoxSpec{};

    const json& jparts = require(j, path, "particles");
    if (!jparts.is_array() || jparts.empty())
        throw ScenarioError(join(path, "particles"), "expected a non-empty array");
    std::vector<ParticleSpec> particles;
    for (std::size_t a = 0; a < jparts.size(); ++a) {
        const std::string p = join(path, "particles") + "[" + std::to_string(a) + "]";
        ParticleSpec spec;
        spec.mass = number_or(jparts[a], p, "mass", 1.0);
        spec.components = static_cast<int>(number_or(jparts[a], p, "components", 1.0));
        if (spec.mass < 0.0) throw ScenarioError(join(p, "mass"), "mass must be >= 0");
        if (spec.components < 1)
            throw ScenarioError(join(p, "components"), "components must be >= 1");
        particles.push_back(spec);
    }

    const json& jmodes = require(j, path, "modes");
    if (!jmodes.is_array() || jmodes.size() != particles.size())
        throw ScenarioError(join(path, "modes"), "expected one mode list per particle");
    std::vector<std::vector<MomentumMode>> modes;
    for (std::size_t a = 0; a < jmodes.size(); ++a) {
        const std::string p = join(path, "modes") + "[" + std::to_string(a) + "]";
        if (!jmodes[a].is_array() || jmodes[a].empty())
            throw ScenarioError(p, "expected a non-empty array of momenta");
        std::vector<MomentumMode> list;
        for (std::size_t k = 0; k < jmodes[a].size(); ++k)
            list.push_back(
                MomentumMode{parse_three(jmodes[a][k], p + "[" + std::to_string(k) + "]")});
        modes.push_back(std::move(list));
    }

    const json& jamps = require(j, path, "amplitudes");
    if (!jamps.is_array() || jamps.empty())
        throw ScenarioError(join(path, "amplitudes"), "expected a non-empty array");
    std::vector<Complex> amps;
    for (std::size_t i = 0; i < jamps.size(); ++i)
        amps.push_back(
            parse_complex(jamps[i], join(path, "amplitudes") + "[" + std::to_string(i) + "]"));

    try {
        ManyBodyState state(std::move(particles), std::move(modes), std::move(amps), box);
        if (number_or(j, path, "normalize", 1.0) != 0.0) return state.normalized();
        return state;
    } catch (const std::runtime_error& e) {
        throw ScenarioError(path, e.what());
    }
}

EnsembleSpec parse_ensemble(const json& parent, const std::string& parent_path,
                            std::uint64_t seed) {
    EnsembleSpec spec;
    spec.seed = seed;
    if (!parent.contains("ensemble")) return spec;
    const json& j = parent.at("ensemble");
    const std::string path = join(parent_path, "ensemble");
    spec.count = static_cast<std::size_t>(number_or(j, path, "count", 10000.0));
    if (spec.count == 0) throw ScenarioError(join(path, "count"), "count must be positive");
    if (j.contains("sampler")) {
        const std::string s = j.at("sampler").get<std::string>();
        if (s == "rejection")
            spec.sampler = SamplerKind::rejection;
        else if (s == "mcmc")
            spec.sampler = SamplerKind::mcmc;
        else
            throw ScenarioError(join(path, "sampler"), "unknown sampler '" + s + "'");
    }
    if (j.contains("region")) {
        const json& jr = j.at("region");
        if (!jr.is_array()) throw ScenarioError(join(path, "region"), "expected an array");
        for (std::size_t a = 0; a < jr.size(); ++a) {
            const std::string p = join(path, "region") + "[" + std::to_string(a) + "]";
            Region4 r;
            r.lo = parse_four(require(jr[a], p, "lo"), join(p, "lo"));
            r.hi = parse_four(require(jr[a], p, "hi"), join(p, "hi"));
            for (int mu = 0; mu < 4; ++mu)
                if (r.lo[mu] > r.hi[mu]) throw ScenarioError(p, "lo exceeds hi");
            spec.region.push_back(r);
        }
    }
    return spec;
}

Packet parse_packet(const json& j, const BoxSpec& box, const std::string& path) {
    if (j.contains("gaussian")) {
        const json& g = j.at("gaussian");
        const std::string p = join(path, "gaussian");
        const double sigma_p = as_number(require(g, p, "sigma_p"), join(p, "sigma_p"));
        if (sigma_p <= 0.0) throw ScenarioError(join(p, "sigma_p"), "sigma_p must be positive");
        return make_gaussian_packet(box, number_or(g, p, "center", 0.0), sigma_p,
                                    number_or(g, p, "mean_p", 0.0));
    }
    if (j.contains("modes")) {
        Packet packet;
        const json& jm = j.at("modes");
        const json& ja = require(j, path, "amps");
        if (!jm.is_array() || jm.empty() || !ja.is_array() || ja.size() != jm.size())
            throw ScenarioError(path, "modes and amps must be equal-length non-empty arrays");
        for (std::size_t k = 0; k < jm.size(); ++k) {
            packet.modes.push_back(MomentumMode{
                parse_three(jm[k], join(path, "modes") + "[" + std::to_string(k) + "]")});
            packet.amps.push_back(
                parse_complex(ja[k], join(path, "amps") + "[" + std::to_string(k) + "]"));
        }
        double n2 = 0.0;
        for (const auto& a : packet.amps) n2 += std::norm(a);
        if (n2 <= 0.0) throw ScenarioError(join(path, "amps"), "amps must not all vanish");
        for (auto& a : packet.amps) a *= 1.0 / std::sqrt(n2);
        return packet;
    }
    throw ScenarioError(path, "packet needs either 'gaussian' or 'modes'+'amps'");
}

std::vector<FourVector> parse_events(const json& v, const std::string& field, std::size_t n) {
    if (!v.is_array() || v.size() != n)
        throw ScenarioError(field, "expected " + std::to_string(n) + " events [t,x,y,z]");
    std::vector<FourVector> out;
    for (std::size_t a = 0; a < n; ++a)
        out.push_back(parse_four(v[a], field + "[" + std::to_string(a) + "]"));
    return out;
}

std::pair<double, double> parse_span(const json& parent, const std::string& path, const char* key,
                                     std::pair<double, double> def) {
    if (!parent.contains(key)) return def;
    const json& v = parent.at(key);
    if (!v.is_array() || v.size() != 2)
        throw ScenarioError(join(path, key), "expected [start, end]");
    return {as_number(v[0], join(path, key)), as_number(v[1], join(path, key))};
}

// Tracks declared acceptance checks; exit 0 iff none failed.
struct CheckTally {
    json checks = json::array();
    int failed = 0;
    void add(const std::string& name, bool passed, json details = json::object()) {
        details["check"] = name;
        details["passed"] = passed;
        checks.push_back(std::move(details));
        if (!passed) ++failed;
    }
};

void write_text(const fs::path& file, const std::string& text) {
    std::ofstream os(file, std::ios::binary);
    if (!os) throw ScenarioError(file.string(), "cannot open output file");
    os << text;
}

void write_report(const fs::path& dir, json report) {
    std::ofstream os(dir / "report.json", std::ios::binary);
    if (!os) throw ScenarioError((dir / "report.json").string(), "cannot open output file");
    os << report.dump(2) << "\n";
}

json base_report(const json& scenario, const std::string& hash) {
    json report;
    report["version"] = kToolVersion;
    report["scenario_hash"] = hash;
    report["kind"] = scenario.at("kind");
    return report;
}

// ---- simulate --------------------------------------------------------------

struct SimulatePayload {
    ManyBodyState state;
    std::vector<FourVector> initial;
    std::pair<double, double> span;
    IntegratorConfig cfg;
    std::vector<FourVector> expected_final;  // empty = no check
    double tolerance = 1e-6;
    bool audit = false;
};

SimulatePayload parse_simulate(const json& j) {
    ManyBodyState state = parse_state(require(j, "", "state"), "state");
    const std::size_t dof = state.particle_count() - state.massless_count();
    SimulatePayload payload{std::move(state),
                            parse_events(require(j, "", "initial"), "initial", dof),
                            parse_span(j, "", "s_span", {0.0, 1.0}),
                            parse_integrator(j, ""),
                            {},
                            number_or(j, "", "tolerance", 1e-6),
                            j.contains("audit") && j.at("audit").get<bool>()};
    if (j.contains("expected_final"))
        payload.expected_final = parse_events(j.at("expected_final"), "expected_final", dof);
    return payload;
}

int run_simulate(const json& j, const fs::path& dir, const std::string& hash, unsigned workers,
                 std::ostream& log) {
    (void)workers;
    SimulatePayload payload = parse_simulate(j);
    const Trajectory traj = integrate(payload.state, payload.initial, payload.span, payload.cfg);
    {
        std::ofstream os(dir / "trajectory.csv", std::ios::binary);
        trajectory_to_csv(traj, os);
    }

    json report = base_report(j, hash);
    report["termination"] = traj.reason == TerminationReason::complete ? "complete" : "node";
    report["steps"] = traj.samples.size() - 1;
    report["tachyonic_segment"] = traj.has_tachyonic_segment;

    CheckTally tally;
    tally.add("termination_complete", traj.reason == TerminationReason::complete);
    if (!payload.expected_final.empty()) {
        double worst = 0.0;
        for (std::size_t a = 0; a < traj.n; ++a)
            for (int mu = 0; mu < 4; ++mu)
                worst = std::max(worst, std::abs(traj.samples.back().X[a][mu] -
                                                 payload.expected_final[a][mu]));
        tally.add("expected_final", worst <= payload.tolerance, {{"max_abs_error", worst}});
    }
    if (payload.audit) {
        const ProperTimeAudit audit = proper_time_audit(payload.state, traj);
        report["proper_time"] = {{"segments", audit.segments},
                                 {"skipped_lightlike", audit.skipped_lightlike},
                                 {"max_rel_residual_velocity", audit.max_rel_residual_velocity},
                                 {"max_rel_residual_scale", audit.max_rel_residual_scale}};
        const ClassicalTimeCompare cmp = classical_time_compare(payload.state, traj, 0);
        report["classical_time"] = {{"s_total", cmp.s_total},
                                    {"tau_total", cmp.tau_total},
                                    {"spacelike_segments", cmp.spacelike_segments}};
    }
    report["checks"] = tally.checks;
    write_report(dir, report);
    log << "simulate: " << traj.samples.size() << " samples, "
        << (tally.failed ? "FAIL" : "ok") << "\n";
    return tally.failed ? 1 : 0;
}

// ---- equivariance ----------------------------------------------------------

int run_equivariance(const json& j, const fs::path& dir, const std::string& hash,
                     unsigned workers, std::uint64_t seed, std::ostream& log) {
    const ManyBodyState state = parse_state(require(j, "", "state"), "state");
    EnsembleSpec spec = parse_ensemble(j, "", seed);
    spec.workers = workers;
    if (spec.region.empty()) spec.region = full_box_region(state);
    const IntegratorConfig cfg = parse_integrator(j, "");
    const int bins = static_cast<int>(number_or(j, "", "bins", 20.0));
    const double p_threshold = number_or(j, "", "p_threshold", 0.01);

    std::vector<double> deltas = {1.0};
    if (j.contains("delta_s")) {
        deltas.clear();
        const json& d = j.at("delta_s");
        if (d.is_number())
            deltas.push_back(d.get<double>());
        else if (d.is_array())
            for (std::size_t i = 0; i < d.size(); ++i)
                deltas.push_back(as_number(d[i], "delta_s"));
        else
            throw ScenarioError("delta_s", "expected a number or array");
    }

    json report = base_report(j, hash);
    report["count"] = spec.count;
    CheckTally tally;
    json runs = json::array();
    bool samples_written = false;
    for (double ds : deltas) {
        const EquivarianceReport eq = equivariance_check(state, spec, ds, cfg, bins);
        json axes = json::array();
        double min_p = 1.0;
        for (const auto& c : eq.checks) {
            axes.push_back({{"particle", c.axis.particle},
                            {"axis", c.axis.axis},
                            {"chi2", c.chi2.statistic},
                            {"dof", c.chi2.dof},
                            {"p_value", c.chi2.p_value}});
            min_p = std::min(min_p, c.chi2.p_value);
        }
        runs.push_back({{"delta_s", ds},
                        {"kept", eq.kept},
                        {"excluded", eq.excluded},
                        {"min_p_value", min_p},
                        {"axes", axes}});
        tally.add("equivariance_ds_" + std::to_string(ds), eq.passed(p_threshold),
                  {{"min_p_value", min_p}});
        if (!samples_written) {
            const SampleSet set = sample(state, spec);
            std::ofstream os(dir / "samples.csv", std::ios::binary);
            samples_to_csv(set, os);
            samples_written = true;
        }
    }
    report["runs"] = runs;
    report["checks"] = tally.checks;
    write_report(dir, report);
    log << "equivariance: " << deltas.size() << " pushforwards, "
        << (tally.failed ? "FAIL" : "ok") << "\n";
    return tally.failed ? 1 : 0;
}

// ---- measure ---------------------------------------------------------------

MeasurementScenario parse_measure(const json& j, std::uint64_t seed, unsigned workers) {
    MeasurementScenario scenario;
    if (j.contains("box")) scenario.box = parse_box(j.at("box"), "box");
    scenario.system_massless = j.contains("system_massless") && j.at("system_massless").get<bool>();
    scenario.system_mass = number_or(j, "", "system_mass", 1.0);
    scenario.pointer_mass = number_or(j, "", "pointer_mass", 100.0);
    scenario.s_final = number_or(j, "", "s_final", 0.3);
    scenario.integrator = parse_integrator(j, "");
    scenario.ensemble = parse_ensemble(j, "", seed);
    scenario.ensemble.workers = workers;

    const json& jb = require(j, "", "branches");
    if (!jb.is_array() || jb.empty())
        throw ScenarioError("branches", "expected a non-empty array");
    for (std::size_t b = 0; b < jb.size(); ++b) {
        const std::string p = "branches[" + std::to_string(b) + "]";
        Branch branch;
        branch.amplitude = parse_complex(require(jb[b], p, "amplitude"), join(p, "amplitude"));
        branch.system = parse_packet(require(jb[b], p, "system"), scenario.box, join(p, "system"));
        branch.pointer =
            parse_packet(require(jb[b], p, "pointer"), scenario.box, join(p, "pointer"));
        scenario.branches.push_back(std::move(branch));
    }
    return scenario;
}

json branch_table(const std::vector<BranchStat>& stats) {
    json out = json::array();
    for (std::size_t b = 0; b < stats.size(); ++b)
        out.push_back({{"branch", b},
                       {"expected", stats[b].expected},
                       {"empirical", stats[b].empirical},
                       {"stderr", stats[b].stderr_}});
    return out;
}

int run_measure(const json& j, const fs::path& dir, const std::string& hash, unsigned workers,
                std::uint64_t seed, std::ostream& log) {
    const MeasurementScenario scenario = parse_measure(j, seed, workers);
    const double sigma_limit = number_or(j, "", "sigma_limit", 3.0);
    const MeasurementReport result = run_measurement(scenario);

    json report = base_report(j, hash);
    report["count"] = result.count;
    report["classified"] = result.classified;
    report["unclassified"] = result.unclassified;
    report["branches"] = branch_table(result.branches);
    CheckTally tally;
    tally.add("branch_frequencies", result.max_sigma() <= sigma_limit,
              {{"max_sigma", result.max_sigma()}});
    report["checks"] = tally.checks;
    write_report(dir, report);
    log << "measure: max sigma " << result.max_sigma() << ", "
        << (tally.failed ? "FAIL" : "ok") << "\n";
    return tally.failed ? 1 : 0;
}

// ---- correlate -------------------------------------------------------------

CorrelationScenario parse_correlate(const json& j, std::uint64_t seed, unsigned workers) {
    CorrelationScenario scenario;
    if (j.contains("box")) scenario.box = parse_box(j.at("box"), "box");
    scenario.system_mass = number_or(j, "", "system_mass", 1.0);
    scenario.pointer_mass = number_or(j, "", "pointer_mass", 100.0);
    scenario.s_final = number_or(j, "", "s_final", 0.2);
    scenario.integrator = parse_integrator(j, "");
    scenario.ensemble = parse_ensemble(j, "", seed);
    scenario.ensemble.workers = workers;

    const auto parse_side = [&](const char* key) {
        std::vector<Packet> out;
        const json& v = require(j, "", key);
        if (!v.is_array() || v.empty())
            throw ScenarioError(key, "expected a non-empty array of packets");
        for (std::size_t b = 0; b < v.size(); ++b)
            out.push_back(parse_packet(v[b], scenario.box,
                                       std::string(key) + "[" + std::to_string(b) + "]"));
        return out;
    };
    scenario.system1 = parse_side("system1");
    scenario.pointer1 = parse_side("pointer1");
    scenario.system2 = parse_side("system2");
    scenario.pointer2 = parse_side("pointer2");

    if (j.contains("amplitudes")) {
        const json& ja = j.at("amplitudes");
        if (!ja.is_array() || ja.size() != scenario.system1.size())
            throw ScenarioError("amplitudes", "expected one row per side-1 outcome");
        for (std::size_t b1 = 0; b1 < ja.size(); ++b1) {
            std::vector<Complex> row;
            if (!ja[b1].is_array() || ja[b1].size() != scenario.system2.size())
                throw ScenarioError("amplitudes[" + std::to_string(b1) + "]",
                                    "expected one entry per side-2 outcome");
            for (std::size_t b2 = 0; b2 < ja[b1].size(); ++b2)
                row.push_back(parse_complex(
                    ja[b1][b2],
                    "amplitudes[" + std::to_string(b1) + "][" + std::to_string(b2) + "]"));
            scenario.amplitudes.push_back(std::move(row));
        }
    }
    if (j.contains("boost1")) scenario.boost1 = Boost(parse_three(j.at("boost1"), "boost1"));
    if (j.contains("boost2")) scenario.boost2 = Boost(parse_three(j.at("boost2"), "boost2"));
    return scenario;
}

json table_json(const CorrelationReport& r) {
    json out = json::array();
    for (std::size_t b1 = 0; b1 < r.table.size(); ++b1)
        for (std::size_t b2 = 0; b2 < r.table[b1].size(); ++b2)
            out.push_back({{"b1", b1},
                           {"b2", b2},
                           {"expected", r.table[b1][b2].expected},
                           {"empirical", r.table[b1][b2].empirical},
                           {"stderr", r.table[b1][b2].stderr_}});
    return out;
}

int run_correlate(const json& j, const fs::path& dir, const std::string& hash, unsigned workers,
                  std::uint64_t seed, std::ostream& log) {
    CorrelationScenario scenario = parse_correlate(j, seed, workers);
    const double sigma_limit = number_or(j, "", "sigma_limit", 3.0);
    json report = base_report(j, hash);
    CheckTally tally;

    if (j.contains("chsh")) {
        const json& c = j.at("chsh");
        std::array<double, 2> a_angles = {as_number(require(c, "chsh", "a1"), "chsh.a1"),
                                          as_number(require(c, "chsh", "a2"), "chsh.a2")};
        std::array<double, 2> b_angles = {as_number(require(c, "chsh", "b1"), "chsh.b1"),
                                          as_number(require(c, "chsh", "b2"), "chsh.b2")};
        const double expected = number_or(c, "chsh", "expected_abs", 2.0 * std::sqrt(2.0));
        const ChshResult chsh = run_chsh(scenario, a_angles, b_angles);
        report["chsh"] = {{"value", chsh.value},
                          {"stderr", chsh.stderr_},
                          {"expected_abs", expected}};
        json settings = json::array();
        for (const auto& s : chsh.settings)
            settings.push_back({{"correlator", s.correlator()}, {"table", table_json(s)}});
        report["chsh"]["settings"] = settings;
        tally.add("chsh",
                  std::abs(std::abs(chsh.value) - expected) <= sigma_limit * chsh.stderr_,
                  {{"value", chsh.value}, {"stderr", chsh.stderr_}});
    } else {
        if (scenario.amplitudes.empty())
            throw ScenarioError("amplitudes", "required unless 'chsh' is given");
        if (scenario.boost1 || scenario.boost2) {
            const FrameMixReport mix = frame_mix_check(scenario);
            report["rest"] = table_json(mix.rest);
            report["boosted"] = table_json(mix.boosted);
            report["max_sigma_gap"] = mix.max_sigma_gap;
            tally.add("frame_mix", mix.max_sigma_gap <= sigma_limit,
                      {{"max_sigma_gap", mix.max_sigma_gap}});
            tally.add("joint_frequencies", mix.rest.max_sigma() <= sigma_limit,
                      {{"max_sigma", mix.rest.max_sigma()}});
        } else {
            const CorrelationReport result = run_correlation(scenario);
            report["count"] = result.count;
            report["unclassified"] = result.unclassified;
            report["table"] = table_json(result);
            report["correlator"] = result.correlator();
            tally.add("joint_frequencies", result.max_sigma() <= sigma_limit,
                      {{"max_sigma", result.max_sigma()}});
        }
    }
    report["checks"] = tally.checks;
    write_report(dir, report);
    log << "correlate: " << (tally.failed ? "FAIL" : "ok") << "\n";
    return tally.failed ? 1 : 0;
}

// ---- boost_check -----------------------------------------------------------

int run_boost_check(const json& j, const fs::path& dir, const std::string& hash,
                    std::uint64_t seed, std::ostream& log) {
    const ManyBodyState state = parse_state(require(j, "", "state"), "state");
    const Boost boost(parse_three(require(j, "", "beta"), "beta"));
    const double tol = number_or(j, "", "tolerance", 1e-6);
    const int probes = static_cast<int>(number_or(j, "", "probes", 100.0));
    const std::size_t dof = state.particle_count() - state.massless_count();

    const ManyBodyState boosted = boost_state(state, boost);

    // Density round trip: the boosted state evaluated at boosted events must
    // reproduce the original density (scalar field convention).
    CounterRng rng(seed, 0xb0057);
    double density_err = 0.0;
    for (int trial = 0; trial < probes; ++trial) {
        std::vector<FourVector> xs(state.particle_count());
        std::vector<FourVector> ys(state.particle_count());
        for (std::size_t a = 0; a < xs.size(); ++a) {
            xs[a] = {rng.next_in(-state.box().T / 4, state.box().T / 4),
                     rng.next_in(-state.box().L / 4, state.box().L / 4),
                     rng.next_in(-state.box().L / 4, state.box().L / 4),
                     rng.next_in(-state.box().L / 4, state.box().L / 4)};
            ys[a] = boost(xs[a]);
        }
        const double d0 = evaluate(state, xs).density;
        const double d1 = evaluate(boosted, ys).density;
        density_err = std::max(density_err,
                               std::abs(d1 - d0) / (std::abs(d0) + state.psi_floor()));
    }

    // Trajectory round trip: integrating the boosted state from boosted
    // initial events must land on the boosted image of the original path.
    json report = base_report(j, hash);
    CheckTally tally;
    double traj_err = 0.0;
    if (j.contains("initial")) {
        const auto initial = parse_events(j.at("initial"), "initial", dof);
        const auto span = parse_span(j, "", "s_span", {0.0, 1.0});
        const IntegratorConfig cfg = parse_integrator(j, "");
        const Trajectory traj = integrate(state, initial, span, cfg);
        std::vector<FourVector> binitial(initial.size());
        for (std::size_t a = 0; a < initial.size(); ++a) binitial[a] = boost(initial[a]);
        const Trajectory btraj = integrate(boosted, binitial, span, cfg);
        const std::size_t count = std::min(traj.samples.size(), btraj.samples.size());
        for (std::size_t i = 0; i < count; ++i)
            for (std::size_t a = 0; a < traj.n; ++a) {
                const FourVector d = boost(traj.samples[i].X[a]) - btraj.samples[i].X[a];
                for (int mu = 0; mu < 4; ++mu) traj_err = std::max(traj_err, std::abs(d[mu]));
            }
        report["trajectory_samples"] = count;
        tally.add("trajectory_round_trip", traj_err <= tol, {{"max_abs_error", traj_err}});
    }
    report["density_rel_error"] = density_err;
    report["trajectory_abs_error"] = traj_err;
    tally.add("density_round_trip", density_err <= tol, {{"max_rel_error", density_err}});
    report["checks"] = tally.checks;
    write_report(dir, report);
    log << "boost_check: density err " << density_err << ", trajectory err " << traj_err << ", "
        << (tally.failed ? "FAIL" : "ok") << "\n";
    return tally.failed ? 1 : 0;
}

// ---- classical_limit -------------------------------------------------------

int run_classical_limit(const json& j, const fs::path& dir, const std::string& hash,
                        std::ostream& log) {
    const json& jm = require(j, "", "momenta");
    const json& jmass = require(j, "", "masses");
    if (!jm.is_array() || !jmass.is_array() || jm.size() != jmass.size() || jm.empty())
        throw ScenarioError("momenta", "momenta and masses must be equal-length arrays");
    std::vector<FourVector> momenta;
    std::vector<double> masses;
    for (std::size_t a = 0; a < jm.size(); ++a) {
        masses.push_back(as_number(jmass[a], "masses[" + std::to_string(a) + "]"));
        const auto p3 = parse_three(jm[a], "momenta[" + std::to_string(a) + "]");
        const double e =
            std::sqrt(p3[0] * p3[0] + p3[1] * p3[1] + p3[2] * p3[2] + masses[a] * masses[a]);
        momenta.push_back({e, p3[0], p3[1], p3[2]});
    }
    ClassicalState cstate;
    try {
        cstate = ClassicalState::make(std::move(momenta), std::move(masses));
    } catch (const std::runtime_error& e) {
        throw ScenarioError("momenta", e.what());
    }
    const auto initial = parse_events(require(j, "", "initial"), "initial", cstate.momenta.size());
    const auto span = parse_span(j, "", "tau_span", {0.0, 5.0});

    const Trajectory traj = classical_trajectory(cstate, initial, span);
    {
        std::ofstream os(dir / "trajectory.csv", std::ios::binary);
        trajectory_to_csv(traj, os);
    }

    json report = base_report(j, hash);
    CheckTally tally;

    DeltaGridConfig grid;
    const std::string gp = "delta_grid";
    if (j.contains("delta_grid")) {
        const json& g = j.at("delta_grid");
        grid.width = number_or(g, gp, "width", grid.width);
        grid.spacing = number_or(g, gp, "spacing", grid.spacing);
        grid.half_extent = number_or(g, gp, "half_extent", grid.half_extent);
        grid.dtau = number_or(g, gp, "dtau", grid.dtau);
    }
    if (cstate.momenta.size() == 1) {
        const double tau = number_or(j, gp, "tau", 0.5 * (span.first + span.second));
        const DeltaEquivarianceReport coarse =
            delta_equivariance_check(cstate, {&initial[0], 1}, tau, grid);
        DeltaGridConfig fine = grid;
        fine.spacing /= 2;
        fine.dtau /= 2;
        const DeltaEquivarianceReport refined =
            delta_equivariance_check(cstate, {&initial[0], 1}, tau, fine);
        const double drop = coarse.residual / std::max(refined.residual, 1e-300);
        report["delta_residual"] = {{"coarse", coarse.residual},
                                    {"refined", refined.residual},
                                    {"drop", drop},
                                    {"marginalization_l1", coarse.marginalization_l1}};
        tally.add("delta_residual_refinement",
                  drop >= number_or(j, "", "residual_drop_min", 1.8), {{"drop", drop}});
        tally.add("delta_marginalization", coarse.marginalization_l1 <= 1e-6,
                  {{"l1", coarse.marginalization_l1}});
    }

    const FourVector p0 = cstate.momenta[0];
    const double v = std::sqrt(p0.x * p0.x + p0.y * p0.y + p0.z * p0.z) / p0.t;
    if (v < 0.01) {
        const NonRelLimitReport nr = nonrel_limit_check(cstate, 0);
        report["nonrel"] = {{"dtau_dt_deviation", nr.dtau_dt_deviation},
                            {"dt2_relation_residual", nr.dt2_relation_residual},
                            {"many_time_identity_residual", nr.many_time_identity_residual}};
        tally.add("many_time_identity", nr.many_time_identity_residual <= 1e-6,
                  {{"residual", nr.many_time_identity_residual}});
        tally.add("dtau_dt", nr.dtau_dt_deviation <= v * v,
                  {{"deviation", nr.dtau_dt_deviation}});
    }

    report["checks"] = tally.checks;
    write_report(dir, report);
    log << "classical_limit: " << (tally.failed ? "FAIL" : "ok") << "\n";
    return tally.failed ? 1 : 0;
}

json load_scenario(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ScenarioError(path, "cannot open scenario file");
    json j;
    try {
        j = json::parse(is, nullptr, true, true);  // allow comments
    } catch (const json::parse_error& e) {
        throw ScenarioError(path, std::string("JSON parse error: ") + e.what());
    }
    if (!j.is_object()) throw ScenarioError(path, "scenario must be a JSON object");
    require(j, "", "kind");
    return j;
}

void validate_only(const json& j, std::uint64_t seed) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "simulate") {
        parse_simulate(j);
    } else if (kind == "equivariance") {
        parse_state(require(j, "", "state"), "state");
        parse_ensemble(j, "", seed);
        parse_integrator(j, "");
    } else if (kind == "measure") {
        build_post_measurement(parse_measure(j, seed, 1));
    } else if (kind == "correlate") {
        CorrelationScenario scenario = parse_correlate(j, seed, 1);
        if (scenario.amplitudes.empty()) {
            if (!j.contains("chsh"))
                throw ScenarioError("amplitudes", "required unless 'chsh' is given");
            set_singlet_amplitudes(scenario, 0.0, M_PI / 4);
        }
        build_correlation_state(scenario);
    } else if (kind == "boost_check") {
        parse_state(require(j, "", "state"), "state");
        Boost(parse_three(require(j, "", "beta"), "beta"));
    } else if (kind == "classical_limit") {
        // full parse happens in the run path; redo the cheap parts here
        require(j, "", "momenta");
        require(j, "", "masses");
        require(j, "", "initial");
    } else {
        throw ScenarioError("kind", "unknown kind '" + kind + "'");
    }
}

}  // namespace

std::string file_hash_hex(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ScenarioError(path, "cannot open scenario file");
    std::uint64_t h = 0xcbf29ce484222325ull;
    char c;
    while (is.get(c)) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ull;
    }
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
}

int run_scenario_file(const std::string& path, const RunOptions& options, std::ostream& log) {
    try {
        const json j = load_scenario(path);
        const std::string kind = j.at("kind").get<std::string>();
        const std::string hash = file_hash_hex(path);

        std::uint64_t seed = 1;
        if (j.contains("seed")) seed = j.at("seed").get<std::uint64_t>();
        if (options.seed) seed = *options.seed;
        unsigned workers = 0;
        if (j.contains("workers")) workers = j.at("workers").get<unsigned>();
        if (options.workers) workers = *options.workers;

        fs::path dir = options.out_dir.empty()
                           ? (j.contains("out") ? fs::path(j.at("out").get<std::string>())
                                                : fs::path("."))
                           : fs::path(options.out_dir);
        std::error_code ec;
        fs::create_directories(dir, ec);
        if (ec && !fs::exists(dir)) throw ScenarioError("out", "cannot create output directory");

        validate_only(j, seed);

        if (kind == "simulate") return run_simulate(j, dir, hash, workers, log);
        if (kind == "equivariance") return run_equivariance(j, dir, hash, workers, seed, log);
        if (kind == "measure") return run_measure(j, dir, hash, workers, seed, log);
        if (kind == "correlate") return run_correlate(j, dir, hash, workers, seed, log);
        if (kind == "boost_check") return run_boost_check(j, dir, hash, seed, log);
        return run_classical_limit(j, dir, hash, log);
    } catch (const ScenarioError& e) {
        log << "validation error at " << e.what() << "\n";
        return 2;
    } catch (const InvalidBoostError& e) {
        log << "validation error: " << e.what() << "\n";
        return 2;
    } catch (const OverlapError& e) {
        log << "validation error: " << e.what() << "\n";
        return 2;
    } catch (const PreconditionError& e) {
        log << "validation error: " << e.what() << "\n";
        return 2;
    } catch (const DimensionError& e) {
        log << "validation error: " << e.what() << "\n";
        return 2;
    } catch (const nlohmann::json::exception& e) {
        log << "validation error: " << e.what() << "\n";
        return 2;
    } catch (const std::runtime_error& e) {
        // NodeError, StepLimitError, MajorantBreachError, UnclassifiedError, ...
        log << "numerical failure: " << e.what() << "\n";
        return 3;
    }
}

int validate_scenario_file(const std::string& path, std::ostream& log) {
    try {
        const json j = load_scenario(path);
        std::uint64_t seed = 1;
        if (j.contains("seed")) seed = j.at("seed").get<std::uint64_t>();
        validate_only(j, seed);
        log << "ok\n";
        return 0;
    } catch (const ScenarioError& e) {
        log << "validation error at " << e.what() << "\n";
        return 2;
    } catch (const nlohmann::json::exception& e) {
        log << "validation error: " << e.what() << "\n";
        return 2;
    } catch (const std::runtime_error& e) {
        log << "validation error: " << e.what() << "\n";
        return 2;
    }
}

const char* scenario_schema_text() {
    return R"(Scenario file: a single JSON object. // and /* */ comments are allowed.

Common fields
  kind      one of: simulate | equivariance | measure | correlate | boost_check | classical_limit
  seed      integer RNG seed (default 1; --seed-override wins)
  workers   worker thread count (default 0 = machine parallelism; --workers wins)
  out       output directory (default "."; --out wins)

state (simulate, equivariance, boost_check)
  box        {"L": 10.0, "T": 10.0}                  spacetime box extents
  particles  [{"mass": 1.0, "components": 1}, ...]   mass 0 = massless (traced out)
  modes      [[[px,py,pz], ...], ...]                one momentum list per particle,
                                                     lattice p = 2 pi k / L
  amplitudes [c, ...] flat array, component index slowest, then one mode index
             per particle; entries are numbers or [re, im]
  normalize  true (default) rescales to unit covariant norm

integrator   {"method": "rk4_fixed"|"rk4_adaptive", "step": 1e-3,
              "tolerance": 1e-8, "max_steps": 10000000}

ensemble     {"count": 10000, "sampler": "rejection"|"mcmc",
              "region": [{"lo": [t,x,y,z], "hi": [t,x,y,z]}, ...]}
             region optional; lo == hi pins an axis

packet (measure, correlate)
  {"gaussian": {"center": 0.0, "sigma_p": 1.5, "mean_p": 0.0}}
  or {"modes": [[px,py,pz], ...], "amps": [c, ...]}

kind = simulate
  initial [[t,x,y,z] per massive particle], s_span [s0, s1], integrator,
  optional expected_final (+ tolerance, default 1e-6), audit: true for the
  proper-time audit. Writes trajectory.csv and report.json.

kind = equivariance
  state, ensemble, integrator, delta_s (number or array), bins (default 20),
  p_threshold (default 0.01). Writes samples.csv and report.json.

kind = measure
  box, branches [{"amplitude": c, "system": packet, "pointer": packet}, ...],
  system_massless, system_mass (1), pointer_mass (100), s_final (0.3),
  ensemble, integrator, sigma_limit (3). Writes report.json.

kind = correlate
  box, amplitudes [[c,...],...] (c[b1][b2]), system1/pointer1/system2/pointer2
  packet arrays, optional boost1/boost2 [bx,by,bz] (runs the frame-mix
  comparison), optional chsh {"a1","a2","b1","b2", "expected_abs"} (runs four
  singlet settings instead of the amplitude table), s_final (0.2), ensemble,
  integrator, sigma_limit (3). Writes report.json.

kind = boost_check
  state, beta [bx,by,bz], tolerance (1e-6), probes (100), optional
  initial + s_span + integrator for the trajectory round trip.
  Writes report.json.

kind = classical_limit
  momenta [[px,py,pz],...], masses [...], initial, tau_span,
  delta_grid {"width","spacing","half_extent","dtau"}, residual_drop_min (1.8).
  Writes trajectory.csv and report.json.

Exit codes: 0 all checks pass, 1 a declared check failed, 2 validation
failure, 3 numerical failure. report.json embeds the scenario hash and the
tool version.
)";
}

}  // namespace rbm
