#pragma once

#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "lbp/discrete_process.hpp"
#include "lbp/mechanism.hpp"
#include "lbp/process_types.hpp"
#include "lbp/riccati.hpp"

namespace lbp::io {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Mechanism document schema (see README):
//   {"setting": "discrete",   "d": .., "c": .., "pi": {"1": rate, ...}}
//   {"setting": "continuous", "c": .., "alpha": .., "gamma": ..,
//    "atoms": [[r, rate], ...], "exp_jumps": {"rate": .., "mean": ..}}
// ---------------------------------------------------------------------------

struct ProblemConfig {
    Setting setting = Setting::discrete;
    std::optional<DiscreteMechanism> discrete;
    std::optional<LevyMechanism> levy;
    RunConfig run;
    json raw; // full document, for echoing and overrides
};

inline json mechanism_to_json(const DiscreteMechanism& m) {
    json pi = json::object();
    for (const auto& [k, rate] : m.pi()) pi[std::to_string(k)] = rate;
    return json{{"setting", "discrete"}, {"d", m.d()}, {"c", m.c()}, {"pi", pi}};
}

inline json mechanism_to_json(const LevyMechanism& m) {
    json atoms = json::array();
    for (const auto& [r, rate] : m.atoms()) atoms.push_back(json::array({r, rate}));
    json doc{{"setting", "continuous"},
             {"c", m.c()},
             {"alpha", m.alpha()},
             {"gamma", m.gamma()},
             {"atoms", atoms}};
    if (m.exp_jumps().rate > 0)
        doc["exp_jumps"] = json{{"rate", m.exp_jumps().rate}, {"mean", m.exp_jumps().mean}};
    return doc;
}

inline DiscreteMechanism discrete_mechanism_from_json(const json& j) {
    std::map<int, double> pi;
    if (j.contains("pi")) {
        for (const auto& [key, val] : j.at("pi").items()) pi[std::stoi(key)] = val.get<double>();
    }
    return DiscreteMechanism(j.value("d", 0.0), j.value("c", 1.0), pi);
}

inline LevyMechanism levy_mechanism_from_json(const json& j) {
    std::vector<std::pair<double, double>> atoms;
    if (j.contains("atoms"))
        for (const auto& a : j.at("atoms")) atoms.emplace_back(a.at(0).get<double>(), a.at(1).get<double>());
    ExpJumpComponent ej;
    if (j.contains("exp_jumps")) {
        ej.rate = j.at("exp_jumps").value("rate", 0.0);
        ej.mean = j.at("exp_jumps").value("mean", 1.0);
    }
    const double c = j.value("c", 1.0);
    const double gamma = j.value("gamma", 0.0);
    if (j.contains("b") && j.contains("alpha"))
        throw std::invalid_argument("mechanism: give either b (uncompensated) or alpha, not both");
    if (j.contains("b"))
        return LevyMechanism::from_uncompensated(j.at("b").get<double>(), gamma, c, atoms, ej);
    return LevyMechanism::from_compensated(j.value("alpha", 0.0), gamma, c, atoms, ej);
}

inline void run_config_from_json(const json& j, RunConfig& run) {
    run.seed = j.value("seed", run.seed);
    run.replicas = j.value("replicas", run.replicas);
    run.t_max = j.value("t_max", run.t_max);
    run.z_cap = j.value("z_cap", run.z_cap);
    run.dt = j.value("dt", run.dt);
    run.x_inf = j.value("x_inf", run.x_inf);
    run.burn_in = j.value("burn_in", run.burn_in);
    run.threads = j.value("threads", run.threads);
    run.tol = j.value("tol", run.tol);
    run.tol_phi = j.value("tol_phi", run.tol_phi);
    run.tol_res = j.value("tol_res", run.tol_res);
    run.tol_w = j.value("tol_w", run.tol_w);
}

inline json run_config_to_json(const RunConfig& r) {
    return json{{"seed", r.seed},       {"replicas", r.replicas}, {"t_max", r.t_max},
                {"z_cap", r.z_cap},     {"dt", r.dt},             {"x_inf", r.x_inf},
                {"burn_in", r.burn_in}, {"threads", r.threads},   {"tol", r.tol},
                {"tol_phi", r.tol_phi}, {"tol_res", r.tol_res},   {"tol_w", r.tol_w}};
}

// "--key=value" overrides with dotted paths into the document, e.g.
// run.seed=7 or mechanism.d=0.5.
inline void apply_override(json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos)
        throw std::invalid_argument("override must look like key=value: " + assignment);
    const std::string path = assignment.substr(0, eq);
    const std::string value = assignment.substr(eq + 1);
    json* node = &doc;
    std::size_t pos = 0;
    while (true) {
        const auto dot = path.find('.', pos);
        const std::string key = path.substr(pos, dot == std::string::npos ? dot : dot - pos);
        if (dot == std::string::npos) {
            json parsed;
            try {
                parsed = json::parse(value);
            } catch (...) {
                parsed = value; // plain string
            }
            (*node)[key] = parsed;
            return;
        }
        node = &(*node)[key];
        pos = dot + 1;
    }
}

inline ProblemConfig parse_config(const json& doc) {
    ProblemConfig cfg;
    cfg.raw = doc;
    if (!doc.contains("mechanism")) throw std::invalid_argument("config: missing 'mechanism'");
    const json& mj = doc.at("mechanism");
    const std::string setting = mj.value("setting", "");
    static const char* known_mech[] = {"setting", "d", "c", "pi", "alpha", "b",
                                       "gamma", "atoms", "exp_jumps"};
    for (const auto& [key, val] : mj.items()) {
        (void)val;
        bool ok = false;
        for (const char* k : known_mech) ok = ok || key == k;
        if (!ok) throw std::invalid_argument("config: unknown mechanism field '" + key + "'");
    }
    if (setting == "discrete") {
        cfg.setting = Setting::discrete;
        cfg.discrete = discrete_mechanism_from_json(mj);
    } else if (setting == "continuous") {
        cfg.setting = Setting::continuous;
        cfg.levy = levy_mechanism_from_json(mj);
    } else {
        throw std::invalid_argument("config: mechanism.setting must be 'discrete' or 'continuous'");
    }
    if (doc.contains("run")) run_config_from_json(doc.at("run"), cfg.run);
    return cfg;
}

inline ProblemConfig load_config(const std::string& path,
                                 const std::vector<std::string>& overrides = {}) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw std::runtime_error("config parse error in " + path + ": " + e.what());
    }
    for (const auto& ov : overrides) apply_override(doc, ov);
    return parse_config(doc);
}

// ---------------------------------------------------------------------------
// CSV exports
// ---------------------------------------------------------------------------

inline void write_trajectory_csv(const std::string& path, const Trajectory& traj,
                                 std::uint64_t seed) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "t,z\n";
    out.precision(17);
    for (std::size_t i = 0; i < traj.t.size(); ++i)
        out << traj.t[i] << "," << traj.z[i] << "\n";
    if (traj.absorbed_at) out << "# absorbed_at=" << *traj.absorbed_at << "\n";
    out << "# seed=" << seed << "\n";
    if (traj.cap_hit) out << "# cap_hit=1\n";
}

inline void write_samples_csv(const std::string& path,
                              const std::vector<ExtinctionSample>& samples) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "replica,T_a,censored\n";
    out.precision(17);
    for (std::size_t i = 0; i < samples.size(); ++i)
        out << i << "," << samples[i].T_a << "," << (samples[i].censored ? 1 : 0) << "\n";
}

inline void write_riccati_csv(const std::string& path, const RiccatiSolution& sol) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "# q=" << sol.q << "\n";
    out << "# xi=" << sol.xi << "\n";
    out << "# max_residual=" << sol.max_residual << "\n";
    out << "s,w,W\n";
    out.precision(17);
    for (std::size_t i = 0; i < sol.grid.size(); ++i)
        out << sol.grid[i] << "," << sol.w[i] << "," << sol.W[i] << "\n";
}

inline void write_table_csv(const std::string& path, const std::string& header,
                            const std::vector<std::vector<double>>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << header << "\n";
    out.precision(17);
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
        out << "\n";
    }
}

} // namespace lbp::io
