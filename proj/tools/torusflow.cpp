#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "torusflow/checks.hpp"
#include "torusflow/json_io.hpp"

namespace tf = torusflow;
using tf::json;
namespace fs = std::filesystem;

namespace {

constexpr int kExitPass = 0;
constexpr int kExitTolerance = 2;
constexpr int kExitInput = 3;
constexpr int kExitBlowUp = 4;

struct Params {
    double nu = 0.1;
    int alpha = 3;
    int N = 1;
    int k_max = 3;
    double dt = 1e-3;
    double T = 0.25;
    double t = 0.0;
    int M = 2000;
    int G = 16;
    uint64_t seed = 1;
    double amplitude = 1.0;
    int workers = 1;
    int steps = 0;
    int coarse_steps = 16;
    int substeps = 8;
    int max_iters = 8;
    int k_out = -1;
    double tol = -1.0;
    std::string terminal = "taylor-green";
    std::string which;
    std::string output_dir;
    std::string input;

    std::set<std::string> given;
    bool has(const std::string& key) const { return given.count(key) != 0; }
};

const std::set<std::string> kConfigKeys{
    "command", "nu",    "alpha",        "N",        "K_max",     "dt",    "T",
    "t",       "M",     "G",            "seed",     "amplitude", "workers",
    "steps",   "tol",   "coarse_steps", "substeps", "max_iters", "k_out",
    "terminal", "which", "output_dir",  "input"};

std::string apply_config(Params& p, const json& cfg) {
    if (!cfg.is_object()) throw std::invalid_argument("config: must be a JSON object");
    for (const auto& [key, value] : cfg.items()) {
        if (!kConfigKeys.count(key)) throw std::invalid_argument("config: unknown key " + key);
        try {
            if (key == "nu") p.nu = value.get<double>();
            else if (key == "alpha") p.alpha = value.get<int>();
            else if (key == "N") p.N = value.get<int>();
            else if (key == "K_max") p.k_max = value.get<int>();
            else if (key == "dt") p.dt = value.get<double>();
            else if (key == "T") p.T = value.get<double>();
            else if (key == "t") p.t = value.get<double>();
            else if (key == "M") p.M = value.get<int>();
            else if (key == "G") p.G = value.get<int>();
            else if (key == "seed") p.seed = value.get<uint64_t>();
            else if (key == "amplitude") p.amplitude = value.get<double>();
            else if (key == "workers") p.workers = value.get<int>();
            else if (key == "steps") p.steps = value.get<int>();
            else if (key == "tol") p.tol = value.get<double>();
            else if (key == "coarse_steps") p.coarse_steps = value.get<int>();
            else if (key == "substeps") p.substeps = value.get<int>();
            else if (key == "max_iters") p.max_iters = value.get<int>();
            else if (key == "k_out") p.k_out = value.get<int>();
            else if (key == "terminal") p.terminal = value.get<std::string>();
            else if (key == "which") p.which = value.get<std::string>();
            else if (key == "output_dir") p.output_dir = value.get<std::string>();
            else if (key == "input") p.input = value.get<std::string>();
        } catch (const json::exception&) {
            throw std::invalid_argument("config: bad value for key " + key);
        }
        if (key != "command") p.given.insert(key);
    }
    return cfg.value("command", "");
}

std::string iso_now() {
    const std::time_t tt = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&tt, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

json config_echo(const Params& p, const std::string& command) {
    json j{{"command", command}, {"nu", p.nu},       {"alpha", p.alpha},
           {"N", p.N},           {"K_max", p.k_max}, {"dt", p.dt},
           {"T", p.T},           {"t", p.t},         {"M", p.M},
           {"G", p.G},           {"seed", p.seed},   {"amplitude", p.amplitude},
           {"workers", p.workers}};
    if (command == "picard") {
        j["coarse_steps"] = p.coarse_steps;
        j["substeps"] = p.substeps;
        j["max_iters"] = p.max_iters;
        j["k_out"] = p.k_out;
        j["tol"] = p.tol;
    }
    if (p.has("steps")) j["steps"] = p.steps;
    if (p.has("tol") && command != "picard") j["tol"] = p.tol;
    if (!p.terminal.empty()) j["terminal"] = p.terminal;
    if (!p.which.empty()) j["which"] = p.which;
    if (!p.output_dir.empty()) j["output_dir"] = p.output_dir;
    if (!p.input.empty()) j["input"] = p.input;
    return j;
}

json base_report(const std::string& command, const Params& p, const tf::NoiseSpec2& spec) {
    return json{{"command", command},
                {"config", config_echo(p, command)},
                {"calibration", tf::calibration_json(spec)},
                {"generated_at", iso_now()}};
}

void emit(const json& report, const Params& p, const char* filename = "report.json") {
    std::cout << report.dump(2) << '\n';
    if (!p.output_dir.empty()) {
        fs::create_directories(p.output_dir);
        tf::write_json(fs::path(p.output_dir) / filename, report);
    }
}

int resolve_steps(const Params& p) {
    if (p.has("steps")) {
        if (p.steps < 1) throw std::invalid_argument("steps must be positive");
        return p.steps;
    }
    if (!(p.T > p.t)) throw std::invalid_argument("T must exceed t");
    if (!(p.dt > 0)) throw std::invalid_argument("dt must be positive");
    return std::max(1, int(std::lround((p.T - p.t) / p.dt)));
}

/// Terminal data: a named preset or a snapshot file. Snapshots carry their own alpha,
/// which then drives the run.
tf::DivFreeField terminal_field(Params& p) {
    if (p.terminal == "taylor-green")
        return tf::taylor_green_velocity(p.amplitude, p.nu, p.T, p.T, p.alpha);
    if (p.terminal == "zero") return tf::DivFreeField::zero(p.alpha, std::max(1, p.k_max));
    auto f = tf::field_from_json(tf::read_json(p.terminal));
    p.alpha = f.alpha;
    return f;
}

int run_solve_ns(Params& p) {
    const auto h = terminal_field(p);
    const int steps = resolve_steps(p);
    const auto traj = tf::solve_backward_ns(h, p.nu, p.t, p.T, steps);
    const tf::NoiseSpec2 spec{p.N, p.alpha, p.nu};

    if (!p.output_dir.empty()) tf::write_trajectory(p.output_dir, traj, spec);

    json rep = base_report("solve-ns", p, spec);
    json values{{"steps", steps},
                {"dt", traj.dt()},
                {"k_max", traj.k_max},
                {"ns_residual", tf::ns_residual(traj)},
                {"energy_defect", tf::energy_defect(traj)},
                {"y_start_l2_sq", traj.y.front().norms().l2_sq},
                {"y_end_l2_sq", traj.y.back().norms().l2_sq}};
    if (p.terminal == "taylor-green") {
        const auto oracle = tf::taylor_green_velocity(p.amplitude, p.nu, p.T, p.t, p.alpha);
        values["sup_error_vs_oracle"] = tf::sup_difference(traj.y.front(), oracle);
        values["y_l2_sq_defect"] =
            std::abs(traj.y.front().norms().l2_sq - oracle.norms().l2_sq);
    }
    rep["values"] = values;
    emit(rep, p);
    return kExitPass;
}

int run_simulate(Params& p) {
    const tf::NoiseSpec2 spec{p.N, p.alpha, p.nu};
    const int steps = resolve_steps(p);
    const double dt = (p.T - p.t) / steps;
    if (p.G < 2) throw std::invalid_argument("G must be at least 2");

    std::optional<tf::NSTrajectory> traj;
    tf::DriftFn drift = nullptr;
    if (!p.input.empty()) {
        traj = tf::read_trajectory(p.input);
        drift = [&traj](double s) { return tf::interpolate_field(*traj, s); };
    }

    tf::BrownianDriver driver{tf::CounterRng{p.seed}, tf::stream_id(30, 0), dt, 1,
                              int(spec.channels().size())};
    const auto flowed =
        tf::simulate_flow(spec, drift, p.t, steps, tf::identity_grid(p.G), driver);
    const auto stats = tf::volume_distortion(flowed, p.G);

    json rep = base_report("simulate", p, spec);
    rep["values"] = json{{"steps", steps},
                         {"dt", dt},
                         {"points", flowed.size()},
                         {"max_volume_defect", stats.max_abs},
                         {"mean_volume_defect", stats.mean_abs}};
    if (!p.output_dir.empty()) {
        fs::create_directories(p.output_dir);
        tf::write_flow_csv(fs::path(p.output_dir) / "flow.csv", flowed);
    }
    emit(rep, p, "manifest.json");
    return kExitPass;
}

int run_verify(Params& p) {
    if (p.which.empty()) throw std::invalid_argument("verify: needs a check name");
    tf::CheckReport check;
    if (p.which == "basis") {
        tf::BasisOptions o;
        if (p.has("K_max")) o.k_limit = p.k_max;
        if (p.has("G")) o.grid = p.G;
        if (p.has("tol")) o.tol = p.tol;
        check = tf::check_basis(o);
    } else if (p.which == "laplacian") {
        tf::LaplacianOptions o;
        if (p.has("M")) o.fields = p.M;
        if (p.has("seed")) o.seed = p.seed;
        if (p.has("tol")) o.tol = p.tol;
        check = tf::check_laplacian(o);
    } else if (p.which == "strat") {
        tf::StratOptions o;
        if (p.has("tol")) o.tol = p.tol;
        check = tf::check_strat(o);
    } else if (p.which == "energy") {
        tf::EnergyOptions o;
        o.nu = p.nu;
        o.amplitude = p.amplitude;
        o.alpha = p.alpha;
        o.cutoff = p.N;
        if (p.has("T")) o.horizon = p.T;
        if (p.has("steps")) o.steps = p.steps;
        if (p.has("tol")) o.det_tol = p.tol;
        check = tf::check_energy(o);
    } else if (p.which == "bsde") {
        tf::BsdeOptions o;
        o.nu = p.nu;
        o.amplitude = p.amplitude;
        o.alpha = p.alpha;
        o.cutoff = p.N;
        o.dt = p.dt;
        o.seed = p.seed;
        if (p.has("T")) o.horizon = p.T;
        if (p.has("G")) o.grid = p.G;
        if (p.has("tol")) o.tol = p.tol;
        check = tf::check_bsde(o);
    } else if (p.which == "representation") {
        tf::RepresentationOptions o;
        o.nu = p.nu;
        o.amplitude = p.amplitude;
        o.alpha = p.alpha;
        o.cutoff = p.N;
        o.dt = p.dt;
        o.seed = p.seed;
        o.workers = p.workers;
        if (p.has("T")) o.horizon = p.T;
        if (p.has("M")) o.samples = p.M;
        if (p.has("G")) o.grid = p.G;
        if (p.has("tol")) o.tol = p.tol;
        check = tf::check_representation(o);
    } else if (p.which == "volume") {
        tf::VolumeOptions o;
        o.cutoff = p.N;
        o.alpha = p.alpha;
        o.nu = p.nu;
        o.dt = p.dt;
        o.seed = p.seed;
        if (p.has("steps")) o.steps = p.steps;
        if (p.has("G")) o.grid = p.G;
        if (p.has("M")) o.paths = p.M;
        if (p.has("tol")) o.tol = p.tol;
        check = tf::check_volume(o);
    } else if (p.which == "translation") {
        tf::TranslationOptions o;
        o.cutoff = p.N;
        o.alpha = p.alpha;
        o.nu = p.nu;
        o.dt = p.dt;
        if (p.has("steps")) o.steps = p.steps;
        if (p.has("seed")) o.seed = p.seed;
        if (p.has("G")) {
            if (p.G < 8) throw std::invalid_argument("verify translation: G must be >= 8");
            o.grids = {p.G / 4, p.G / 2, p.G};
        }
        if (p.has("tol")) o.tol = p.tol;
        check = tf::check_translation(o);
    } else {
        throw std::invalid_argument("verify: unknown check " + p.which);
    }

    json rep = base_report("verify", p, check.spec);
    rep["check"] = check.check;
    json values, tolerances;
    for (const auto& row : check.rows) {
        values[row.name] = row.value;
        if (!std::isnan(row.tolerance)) tolerances[row.name] = row.tolerance;
    }
    rep["values"] = values;
    rep["tolerances"] = tolerances;
    rep["pass"] = check.pass();
    emit(rep, p);
    return check.pass() ? kExitPass : kExitTolerance;
}

int run_picard(Params& p) {
    const auto h = terminal_field(p);
    const tf::NoiseSpec2 spec{p.N, p.alpha, p.nu};

    std::optional<tf::NSTrajectory> ref;
    tf::PressureFn pressure = nullptr;
    if (!p.input.empty()) {
        ref = tf::read_trajectory(p.input);
        pressure = [&ref](double s) { return tf::interpolate_pressure(*ref, s); };
    } else if (p.terminal == "taylor-green") {
        const double A = p.amplitude, nu = p.nu, T = p.T;
        pressure = [A, nu, T](double s) { return tf::taylor_green_pressure(A, nu, T, s); };
    }

    tf::PicardOptions po;
    po.coarse_steps = p.coarse_steps;
    po.substeps = p.substeps;
    po.samples = p.M;
    po.grid = p.G;
    po.max_iters = p.max_iters;
    po.tol = p.has("tol") ? p.tol : 1e-2;
    po.seed = p.seed;
    po.workers = p.workers;
    po.k_out = p.k_out;
    p.tol = po.tol;
    const auto st = tf::picard_solve(h, pressure, spec, p.t, p.T, po);

    json rep = base_report("picard", p, spec);
    json values{{"iterations", st.iterations},
                {"diverged", st.diverged},
                {"history", st.history},
                {"final_update", st.history.empty() ? 0.0 : st.history.back()}};
    if (ref) values["error_vs_reference"] = tf::picard_error(st, *ref, 32);
    rep["values"] = values;

    if (!p.output_dir.empty()) {
        fs::create_directories(fs::path(p.output_dir) / "y");
        tf::write_history_csv(fs::path(p.output_dir) / "history.csv", st.history);
        for (size_t i = 0; i < st.y.size(); ++i)
            tf::write_json(fs::path(p.output_dir) / "y" / tf::detail::node_name(i),
                           tf::field_to_json(st.y[i]));
    }
    emit(rep, p);
    return st.diverged ? kExitBlowUp : kExitPass;
}

int run_report(Params& p) {
    if (p.input.empty()) throw std::invalid_argument("report: needs an input trajectory");
    const auto traj = tf::read_trajectory(p.input);
    const tf::NoiseSpec2 spec{p.N, traj.alpha, traj.nu};
    const auto energy = tf::energy_identities(traj, spec);

    json rep = base_report("report", p, spec);
    rep["values"] = json{{"steps", traj.steps()},
                         {"dt", traj.dt()},
                         {"k_max", traj.k_max},
                         {"alpha", traj.alpha},
                         {"nu", traj.nu},
                         {"t_start", traj.times.front()},
                         {"t_end", traj.times.back()},
                         {"ns_residual", tf::ns_residual(traj)},
                         {"energy_defect", energy.deterministic_defect},
                         {"x_norm_defect", energy.x_norm_defect},
                         {"y_start_l2_sq", traj.y.front().norms().l2_sq},
                         {"y_end_l2_sq", traj.y.back().norms().l2_sq}};
    if (!p.output_dir.empty() && p.has("G")) {
        fs::create_directories(p.output_dir);
        tf::write_field_csv(fs::path(p.output_dir) / "y_start.csv", traj.y.front(), p.G);
        tf::write_field_csv(fs::path(p.output_dir) / "y_end.csv", traj.y.back(), p.G);
    }
    emit(rep, p);
    return kExitPass;
}

int fail(const std::string& kind, const std::string& message, int code) {
    std::cout << json{{"error", message}, {"kind", kind}}.dump(2) << '\n';
    std::cerr << "torusflow: " << message << '\n';
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);

    // the config file is applied before flag parsing so flags can override it
    std::string config_path;
    for (size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) config_path = args[i + 1];
        else if (args[i].rfind("--config=", 0) == 0) config_path = args[i].substr(9);
    }

    Params p;
    std::string config_command;
    if (!config_path.empty()) {
        try {
            config_command = apply_config(p, tf::read_json(config_path));
        } catch (const std::exception& e) {
            return fail("input", e.what(), kExitInput);
        }
    }

    const std::set<std::string> commands{"solve-ns", "simulate", "verify", "picard", "report"};
    std::string argv_command;
    for (const auto& a : args)
        if (commands.count(a)) {
            argv_command = a;
            break;
        }
    if (!config_command.empty()) {
        if (!commands.count(config_command))
            return fail("input", "config: unknown command " + config_command, kExitInput);
        if (argv_command.empty()) args.insert(args.begin(), config_command);
        else if (argv_command != config_command)
            return fail("input",
                        "config command " + config_command + " conflicts with " + argv_command,
                        kExitInput);
    }

    CLI::App app{
        "Spectral backward Navier-Stokes on the 2-torus, noisy volume-preserving flows,\n"
        "and the forward-backward system connecting them. The environment variable\n"
        "TORUSFLOW_SEED overrides the RNG seed from any config or flag."};
    app.require_subcommand(1);

    std::vector<std::pair<CLI::Option*, std::string>> tracked;
    std::string config_sink;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_sink, "JSON config file (already applied)");
        tracked.emplace_back(sub->add_option("--nu", p.nu, "viscosity"), "nu");
        tracked.emplace_back(sub->add_option("--alpha", p.alpha, "basis decay exponent"),
                             "alpha");
        tracked.emplace_back(sub->add_option("--N", p.N, "noise mode cutoff"), "N");
        tracked.emplace_back(sub->add_option("--seed", p.seed, "RNG seed"), "seed");
        tracked.emplace_back(sub->add_option("--workers", p.workers, "worker thread count"),
                             "workers");
        tracked.emplace_back(
            sub->add_option("--output-dir", p.output_dir, "directory for artifacts"),
            "output_dir");
    };
    auto add_time = [&](CLI::App* sub) {
        tracked.emplace_back(sub->add_option("--dt", p.dt, "time step"), "dt");
        tracked.emplace_back(sub->add_option("--T", p.T, "terminal time"), "T");
        tracked.emplace_back(sub->add_option("--t", p.t, "start time"), "t");
        tracked.emplace_back(sub->add_option("--steps", p.steps, "step count (overrides dt)"),
                             "steps");
    };

    auto* solve = app.add_subcommand("solve-ns", "Solve the backward equation spectrally");
    add_common(solve);
    add_time(solve);
    tracked.emplace_back(solve->add_option("--k-max", p.k_max, "solver mode ball"), "K_max");
    tracked.emplace_back(solve->add_option("--amplitude", p.amplitude, "preset amplitude"),
                         "amplitude");
    tracked.emplace_back(
        solve->add_option("--terminal", p.terminal, "taylor-green | zero | snapshot file"),
        "terminal");

    auto* simulate = app.add_subcommand("simulate", "Flow a particle grid under the noise");
    add_common(simulate);
    add_time(simulate);
    tracked.emplace_back(simulate->add_option("--G", p.G, "particle grid size"), "G");
    tracked.emplace_back(
        simulate->add_option("--input", p.input, "trajectory directory supplying the drift"),
        "input");

    auto* verify = app.add_subcommand("verify", "Run one named check against its tolerances");
    add_common(verify);
    add_time(verify);
    verify->add_option("which", p.which, "check name")
        ->check(CLI::IsMember({"basis", "laplacian", "strat", "energy", "bsde",
                               "representation", "volume", "translation"}));
    tracked.emplace_back(verify->add_option("--k-max", p.k_max, "mode limit"), "K_max");
    tracked.emplace_back(verify->add_option("--M", p.M, "samples / fields / paths"), "M");
    tracked.emplace_back(verify->add_option("--G", p.G, "grid size"), "G");
    tracked.emplace_back(verify->add_option("--amplitude", p.amplitude, "preset amplitude"),
                         "amplitude");
    tracked.emplace_back(verify->add_option("--tol", p.tol, "headline tolerance override"),
                         "tol");

    auto* picard = app.add_subcommand("picard", "Fixed-point recovery of the drift");
    add_common(picard);
    add_time(picard);
    tracked.emplace_back(picard->add_option("--M", p.M, "Monte Carlo samples per restart"),
                         "M");
    tracked.emplace_back(picard->add_option("--G", p.G, "sampling grid"), "G");
    tracked.emplace_back(picard->add_option("--amplitude", p.amplitude, "preset amplitude"),
                         "amplitude");
    tracked.emplace_back(
        picard->add_option("--terminal", p.terminal, "taylor-green | zero | snapshot file"),
        "terminal");
    tracked.emplace_back(
        picard->add_option("--input", p.input,
                           "trajectory directory supplying pressure and reference"),
        "input");
    tracked.emplace_back(
        picard->add_option("--coarse-steps", p.coarse_steps, "restart nodes"), "coarse_steps");
    tracked.emplace_back(picard->add_option("--substeps", p.substeps, "flow steps per node"),
                         "substeps");
    tracked.emplace_back(picard->add_option("--max-iters", p.max_iters, "sweep limit"),
                         "max_iters");
    tracked.emplace_back(picard->add_option("--tol", p.tol, "stopping threshold"), "tol");
    tracked.emplace_back(picard->add_option("--k-out", p.k_out, "output mode ball"), "k_out");

    auto* report = app.add_subcommand("report", "Recompute diagnostics for a stored trajectory");
    add_common(report);
    report->add_option("--input", p.input, "trajectory directory");
    tracked.emplace_back(report->add_option("--G", p.G, "grid for CSV export"), "G");

    try {
        std::reverse(args.begin(), args.end());
        app.parse(args);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return fail("input", std::string("argument error: ") + e.what(), kExitInput);
    }

    for (const auto& [opt, key] : tracked)
        if (opt->count() > 0) p.given.insert(key);

    if (const char* env = std::getenv("TORUSFLOW_SEED")) {
        uint64_t v = 0;
        const auto res = std::from_chars(env, env + std::strlen(env), v);
        if (res.ec != std::errc{} || *res.ptr != '\0')
            return fail("input", "TORUSFLOW_SEED must be an unsigned integer", kExitInput);
        p.seed = v;
        p.given.insert("seed");
    }

    try {
        if (solve->parsed()) return run_solve_ns(p);
        if (simulate->parsed()) return run_simulate(p);
        if (verify->parsed()) return run_verify(p);
        if (picard->parsed()) return run_picard(p);
        if (report->parsed()) return run_report(p);
    } catch (const tf::BlowUpError& e) {
        return fail("blow_up", e.what(), kExitBlowUp);
    } catch (const std::invalid_argument& e) {
        return fail("input", e.what(), kExitInput);
    } catch (const json::exception& e) {
        return fail("input", e.what(), kExitInput);
    } catch (const std::exception& e) {
        return fail("runtime", e.what(), kExitInput);
    }
    return kExitInput;
}
