// Batch front end: simulation, closed-form analysis, and the MC-vs-closed-form
// validation suites for the logistic branching process toolkit.
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lbp/continuous_process.hpp"
#include "lbp/discrete_process.hpp"
#include "lbp/io.hpp"
#include "lbp/mechanism.hpp"
#include "lbp/riccati.hpp"
#include "lbp/svg.hpp"
#include "lbp/validate.hpp"

namespace fs = std::filesystem;
using lbp::io::json;

namespace {

struct CommandReport {
    std::string command;
    json config_echo;
    std::vector<std::string> outputs;
    double wall_time_s = 0;
    std::vector<lbp::validate::CheckResult> checks;

    bool pass() const {
        for (const auto& c : checks)
            if (!c.pass) return false;
        return true;
    }

    json to_json() const {
        json jchecks = json::array();
        for (const auto& c : checks)
            jchecks.push_back(json{{"name", c.name},
                                   {"tolerance", c.tolerance},
                                   {"measured", c.measured},
                                   {"pass", c.pass},
                                   {"detail", c.detail}});
        return json{{"command", command},      {"config", config_echo},
                    {"outputs", outputs},      {"wall_time_s", wall_time_s},
                    {"checks", jchecks},       {"pass", pass()}};
    }
};

struct CliCommon {
    std::string config_path;
    std::string out_dir = "out";
    std::optional<std::uint64_t> seed;
    std::optional<long> replicas;
    bool plot = false;
    std::vector<std::string> overrides;
};

lbp::io::ProblemConfig load(const CliCommon& common) {
    auto cfg = lbp::io::load_config(common.config_path, common.overrides);
    if (common.seed) cfg.run.seed = *common.seed;
    if (common.replicas) cfg.run.replicas = *common.replicas;
    return cfg;
}

void finish(CommandReport& report, const std::chrono::steady_clock::time_point& t0,
            const std::string& out_dir) {
    report.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    fs::create_directories(out_dir);
    const std::string path = out_dir + "/report.json";
    std::ofstream out(path);
    out << report.to_json().dump(2) << "\n";
    std::printf("report: %s (%.2fs)\n", path.c_str(), report.wall_time_s);
    for (const auto& c : report.checks)
        std::printf("  %-40s measured=%-12.6g tol=%-10.4g %s\n", c.name.c_str(), c.measured,
                    c.tolerance, c.pass ? "ok" : "FAILED");
    for (const auto& o : report.outputs) std::printf("  wrote %s\n", o.c_str());
}

void plot_trajectory(const lbp::Trajectory& traj, const std::string& path) {
    lbp::svg::Series s;
    s.x = traj.t;
    s.y = traj.z;
    lbp::svg::write_lines(path, {s}, "t", "z");
}

int cmd_simulate(const CliCommon& common, const std::string& route) {
    const auto t0 = std::chrono::steady_clock::now();
    auto cfg = load(common);
    CommandReport report;
    report.command = "simulate-" + route;
    report.config_echo = cfg.raw;
    fs::create_directories(common.out_dir);

    lbp::num::RandomStream root(cfg.run.seed);
    lbp::Trajectory traj;
    if (route == "discrete") {
        if (!cfg.discrete) throw std::runtime_error("simulate-discrete needs a discrete mechanism");
        auto stream = root.split(0);
        traj = lbp::simulate_discrete(*cfg.discrete, static_cast<long>(cfg.run.x_inf), cfg.run,
                                      stream);
        if (cfg.run.replicas > 1 && cfg.discrete->d() > 0) {
            // batch of absorption times alongside the single exported path
            auto samples = lbp::extinction_samples(*cfg.discrete,
                                                   static_cast<long>(cfg.run.x_inf), cfg.run);
            const std::string spath = common.out_dir + "/samples.csv";
            lbp::io::write_samples_csv(spath, samples);
            report.outputs.push_back(spath);
        }
    } else if (route == "sde") {
        if (!cfg.levy) throw std::runtime_error("simulate-sde needs a continuous mechanism");
        if (!(cfg.levy->gamma() > 0) || cfg.levy->rho() > 0)
            throw std::runtime_error(
                "simulate-sde integrates the diffusion equation: needs gamma > 0 and no jumps "
                "(use simulate-lamperti for jump mechanisms)");
        auto stream = root.split(0);
        traj = lbp::simulate_feller_logistic(cfg.levy->drift(), cfg.levy->c(), cfg.levy->gamma(),
                                             cfg.run.x_inf, cfg.run, stream);
    } else { // lamperti
        if (!cfg.levy) throw std::runtime_error("simulate-lamperti needs a continuous mechanism");
        auto stream = root.split(0);
        lbp::RunConfig rcfg = cfg.run;
        rcfg.t_max = cfg.run.t_max * 8.0; // R-path horizon for the time change
        auto path = lbp::simulate_ou(*cfg.levy, cfg.run.x_inf, rcfg, stream);
        traj = lbp::lamperti_forward(path, cfg.run.dt, cfg.run.t_max);
        const std::string jpath = common.out_dir + "/jumps.csv";
        std::vector<std::vector<double>> rows;
        for (const auto& [t, sz] : path.jumps) rows.push_back({t, sz});
        lbp::io::write_table_csv(jpath, "t,size", rows);
        report.outputs.push_back(jpath);
    }
    const std::string csv = common.out_dir + "/trajectory.csv";
    lbp::io::write_trajectory_csv(csv, traj, cfg.run.seed);
    report.outputs.push_back(csv);
    if (common.plot) {
        const std::string svg = common.out_dir + "/trajectory.svg";
        plot_trajectory(traj, svg);
        report.outputs.push_back(svg);
    }
    finish(report, t0, common.out_dir);
    return 0;
}

int cmd_analyze(const CliCommon& common, const std::string& what) {
    const auto t0 = std::chrono::steady_clock::now();
    auto cfg = load(common);
    CommandReport report;
    report.command = "analyze " + what;
    report.config_echo = cfg.raw;
    fs::create_directories(common.out_dir);
    const json analyze = cfg.raw.value("analyze", json::object());
    const double q = analyze.value("q", 1.0);

    if (what == "stationary") {
        if (cfg.setting == lbp::Setting::discrete) {
            if (cfg.discrete->d() != 0.0)
                throw std::runtime_error(
                    "analyze stationary: requires d = 0 (with natural deaths the process goes "
                    "extinct and no stationary law exists)");
            const int n = analyze.value("n", 30);
            auto mu = lbp::mu_discrete(*cfg.discrete, n, cfg.run.tol);
            std::vector<std::vector<double>> rows;
            for (int i = 1; i <= n; ++i)
                rows.push_back({static_cast<double>(i), mu[static_cast<std::size_t>(i - 1)]});
            const std::string path = common.out_dir + "/stationary.csv";
            lbp::io::write_table_csv(path, "i,mu", rows);
            report.outputs.push_back(path);
            if (common.plot) {
                std::vector<double> centers, freqs;
                for (int i = 1; i <= n; ++i) {
                    centers.push_back(i);
                    freqs.push_back(mu[static_cast<std::size_t>(i - 1)]);
                }
                const std::string svg = common.out_dir + "/stationary.svg";
                lbp::svg::write_histogram(svg, centers, freqs, {}, "i", "mu_i");
                report.outputs.push_back(svg);
            }
        } else {
            if (!cfg.levy->is_subordinator() || !lbp::condition_partial(*cfg.levy))
                throw std::runtime_error(
                    "analyze stationary: requires a subordinator mechanism in the "
                    "positive-recurrent regime (nonzero drift, or jump mass above c)");
            std::vector<std::vector<double>> rows;
            for (double lam = 0.0; lam <= 5.0 + 1e-9; lam += 0.25)
                rows.push_back({lam, lbp::nu_laplace(*cfg.levy, lam, cfg.run.tol),
                                lbp::stationary_law_laplace(*cfg.levy, lam, cfg.run.tol)});
            const std::string path = common.out_dir + "/stationary_laplace.csv";
            lbp::io::write_table_csv(path, "lambda,nu_laplace,mu_laplace", rows);
            report.outputs.push_back(path);
            report.checks.push_back({"stationary_mean", lbp::stationary_mean(*cfg.levy), 0.0,
                                     true, ""});
        }
    } else if (what == "extinction") {
        std::vector<std::vector<double>> rows;
        if (cfg.setting == lbp::Setting::discrete) {
            if (!(cfg.discrete->d() > 0))
                throw std::runtime_error(
                    "analyze extinction: requires d > 0 (without natural deaths the process is "
                    "positive-recurrent and never absorbed)");
            auto sol = lbp::solve_wq(*cfg.discrete, q);
            for (double x : {1.0, 2.0, 5.0, 10.0, 100.0})
                rows.push_back({x, lbp::laplace_Ta_from_x(sol, x)});
            const std::string path = common.out_dir + "/extinction_laplace.csv";
            lbp::io::write_table_csv(path, "x,laplace_Ta", rows);
            report.outputs.push_back(path);
            report.checks.push_back({"laplace_Ta_infinity", lbp::laplace_Ta_infinity(sol), 0.0,
                                     true, ""});
            report.checks.push_back(
                {"expected_Ta_infinity",
                 lbp::expected_Ta(*cfg.discrete, std::numeric_limits<double>::infinity()), 0.0,
                 true, ""});
        } else {
            if (lbp::absorption_regime(*cfg.levy) !=
                lbp::AbsorptionRegime::extinction_with_absorption)
                throw std::runtime_error(
                    "analyze extinction: requires the absorption regime (Gaussian part present; "
                    "otherwise the process dies out without ever hitting 0)");
            auto sol = lbp::solve_wq(*cfg.levy, q);
            for (double x : {0.5, 1.0, 2.0, 5.0, 10.0})
                rows.push_back({x, lbp::laplace_Ta_from_x(sol, x), lbp::expected_Ta(*cfg.levy, x)});
            const std::string path = common.out_dir + "/extinction.csv";
            lbp::io::write_table_csv(path, "x,laplace_Ta,expected_Ta", rows);
            report.outputs.push_back(path);
            report.checks.push_back({"laplace_Ta_infinity", lbp::laplace_Ta_infinity(sol), 0.0,
                                     true, ""});
        }
    } else if (what == "riccati") {
        lbp::RiccatiSolution sol;
        if (cfg.setting == lbp::Setting::discrete) sol = lbp::solve_wq(*cfg.discrete, q);
        else sol = lbp::solve_wq(*cfg.levy, q);
        const std::string path = common.out_dir + "/riccati.csv";
        lbp::io::write_riccati_csv(path, sol);
        report.outputs.push_back(path);
        if (common.plot) {
            lbp::svg::Series s;
            for (std::size_t i = 0; i < sol.grid.size(); ++i) {
                s.x.push_back(std::log10(sol.grid[i]));
                s.y.push_back(sol.w[i]);
            }
            const std::string svg = common.out_dir + "/riccati.svg";
            lbp::svg::write_lines(svg, {s}, "log10 s", "w_q");
            report.outputs.push_back(svg);
        }
        report.checks.push_back({"max_residual", sol.max_residual, cfg.run.tol_res,
                                 sol.max_residual < cfg.run.tol_res, ""});
    } else if (what == "resolvent") {
        if (cfg.setting != lbp::Setting::continuous)
            throw std::runtime_error("analyze resolvent: continuous setting only");
        auto sol = lbp::solve_wq(*cfg.levy, q);
        const double x = analyze.value("x", 1.0);
        std::vector<std::vector<double>> rows;
        for (double lam = 0.0; lam <= 4.0 + 1e-9; lam += 0.2)
            rows.push_back({lam, q * lbp::resolvent_G(sol, x, lam)});
        const std::string path = common.out_dir + "/resolvent.csv";
        lbp::io::write_table_csv(path, "lambda,qG", rows);
        report.outputs.push_back(path);
    } else {
        throw std::runtime_error("unknown analysis: " + what);
    }
    finish(report, t0, common.out_dir);
    return 0;
}

int cmd_validate(const CliCommon& common, const std::string& suite) {
    const auto t0 = std::chrono::steady_clock::now();
    CommandReport report;
    report.command = "validate " + suite;
    lbp::validate::ValidateOptions opts;
    if (!common.config_path.empty()) {
        auto cfg = load(common);
        opts.seed = cfg.run.seed;
        opts.threads = cfg.run.threads;
        report.config_echo = cfg.raw;
    }
    if (common.seed) opts.seed = *common.seed;
    lbp::validate::Session session(opts);
    for (int id : lbp::validate::suite_criteria(suite)) {
        auto r = session.run(id);
        std::printf("[%s] criterion %2d: %s (%.1fs)\n", r.pass ? "PASS" : "FAIL", id,
                    r.name.c_str(), r.seconds);
        for (auto& c : r.checks) {
            c.name = "criterion " + std::to_string(id) + ": " + c.name;
            report.checks.push_back(c);
        }
    }
    finish(report, t0, common.out_dir);
    return report.pass() ? 0 : 1;
}

int cmd_converge(const CliCommon& common, std::vector<long> n_list) {
    const auto t0 = std::chrono::steady_clock::now();
    auto cfg = load(common);
    CommandReport report;
    report.command = "converge";
    report.config_echo = cfg.raw;
    const json cj = cfg.raw.value("converge", json::object());
    const double lambda = cj.value("lambda", 1.0);
    const double delta = cj.value("delta", 0.5);
    const double gamma = cj.value("gamma", 1.0);
    const double c = cj.value("c", 1.0);
    const double x = cj.value("x", 1.0);
    const double t1 = cj.value("t", 1.0);
    if (n_list.empty()) n_list = {10, 30, 100};

    lbp::num::RandomStream root_e(cfg.run.seed + 1);
    auto euler = lbp::num::parallel_replicas<double>(
        cfg.run.replicas, root_e,
        [&](long, lbp::num::RandomStream& s) {
            return lbp::feller_endpoint(lambda - delta, c, gamma, x, t1, cfg.run.dt, s);
        },
        cfg.run.threads);
    std::vector<std::vector<double>> rows;
    double prev = 2.0;
    bool decreasing = true;
    for (std::size_t i = 0; i < n_list.size(); ++i) {
        auto fam = lbp::scaled_family(n_list[i], lambda, delta, gamma, c);
        lbp::num::RandomStream root(cfg.run.seed + 2 + i);
        auto zs = lbp::num::parallel_replicas<double>(
            cfg.run.replicas, root,
            [&](long, lbp::num::RandomStream& s) {
                return lbp::scaled_family_endpoint(fam, x, t1, s);
            },
            cfg.run.threads);
        const double ks = lbp::num::ks_two_sample(zs, euler);
        rows.push_back({static_cast<double>(n_list[i]), ks});
        decreasing = decreasing && ks < prev;
        prev = ks;
    }
    const std::string path = common.out_dir + "/converge.csv";
    fs::create_directories(common.out_dir);
    lbp::io::write_table_csv(path, "n,ks_distance", rows);
    report.outputs.push_back(path);
    report.checks.push_back({"ks decreasing over n", decreasing ? 1.0 : 0.0, 1.0, decreasing, ""});
    finish(report, t0, common.out_dir);
    return report.pass() ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"logistic branching process simulation and analysis"};
    app.require_subcommand(1);

    CliCommon common;
    auto add_common = [&](CLI::App* sub, bool config_required = true) {
        sub->add_option("--config", common.config_path, "JSON config file")
            ->required(config_required);
        sub->add_option("--out-dir", common.out_dir, "output directory");
        sub->add_option("--seed", common.seed, "override run.seed");
        sub->add_option("--replicas", common.replicas, "override run.replicas");
        sub->add_flag("--plot", common.plot, "emit SVG plots");
        sub->add_option("--set", common.overrides,
                        "config override key=value (dotted paths, repeatable)");
        sub->allow_extras(); // bare --key=value overrides
    };

    auto* sim_d = app.add_subcommand("simulate-discrete", "exact event-driven simulation");
    add_common(sim_d);
    auto* sim_s = app.add_subcommand("simulate-sde", "Euler-Maruyama on the diffusion equation");
    add_common(sim_s);
    auto* sim_l = app.add_subcommand("simulate-lamperti",
                                     "Ornstein-Uhlenbeck path plus time change");
    add_common(sim_l);

    std::string what;
    auto* analyze = app.add_subcommand("analyze", "closed-form tables");
    analyze->add_option("--what", what, "stationary|extinction|riccati|resolvent")->required();
    add_common(analyze);

    std::string suite = "all";
    auto* validate = app.add_subcommand("validate", "MC-vs-closed-form suites");
    validate->add_option("--suite", suite, "stationary|extinction|lamperti|scaling|all");
    add_common(validate, false);

    std::vector<long> n_list;
    auto* converge = app.add_subcommand("converge", "scaling convergence study");
    converge->add_option("--n-list", n_list, "sequence of n values");
    add_common(converge);

    CLI11_PARSE(app, argc, argv);

    auto* sub = app.get_subcommands().front();
    for (const auto& extra : sub->remaining()) {
        if (extra.rfind("--", 0) == 0 && extra.find('=') != std::string::npos)
            common.overrides.push_back(extra.substr(2));
        else {
            std::fprintf(stderr, "unrecognized argument: %s\n", extra.c_str());
            return 2;
        }
    }

    try {
        if (sub == sim_d) return cmd_simulate(common, "discrete");
        if (sub == sim_s) return cmd_simulate(common, "sde");
        if (sub == sim_l) return cmd_simulate(common, "lamperti");
        if (sub == analyze) return cmd_analyze(common, what);
        if (sub == validate) return cmd_validate(common, suite);
        if (sub == converge) return cmd_converge(common, n_list);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 2;
}
