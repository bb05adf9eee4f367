#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "torusflow/flow.hpp"
#include "torusflow/ns.hpp"

namespace torusflow {

using nlohmann::json;

inline json field_to_json(const DivFreeField& f) {
    json modes = json::array();
    for (const auto& e : f.entries)
        modes.push_back({{"k", {e.k[0], e.k[1]}}, {"aA", e.a_cos}, {"aB", e.a_sin}});
    return json{{"alpha", f.alpha}, {"mean", {f.mean[0], f.mean[1]}}, {"modes", modes}};
}

inline DivFreeField field_from_json(const json& j) {
    if (!j.is_object() || !j.contains("alpha") || !j.contains("mean") || !j.contains("modes"))
        throw std::invalid_argument("field snapshot: needs alpha, mean and modes");
    if (!j["alpha"].is_number_integer() || j["alpha"].get<int>() < 1)
        throw std::invalid_argument("field snapshot: alpha must be a positive integer");
    const auto& mean = j["mean"];
    if (!mean.is_array() || mean.size() != 2)
        throw std::invalid_argument("field snapshot: mean must hold two components");
    const auto& modes = j["modes"];
    if (!modes.is_array()) throw std::invalid_argument("field snapshot: modes must be a list");

    int km = 1;
    for (const auto& m : modes) {
        if (!m.contains("k") || !m["k"].is_array() || m["k"].size() != 2)
            throw std::invalid_argument("field snapshot: each mode needs k = [k1, k2]");
        const Mode2 k{m["k"][0].get<int>(), m["k"][1].get<int>()};
        km = std::max(km, int(std::ceil(norm<2>(k))));
    }
    DivFreeField f = DivFreeField::zero(j["alpha"].get<int>(), km);
    f.mean = {mean[0].get<double>(), mean[1].get<double>()};
    for (const auto& m : modes)
        f.set({m["k"][0].get<int>(), m["k"][1].get<int>()}, m.value("aA", 0.0),
              m.value("aB", 0.0));
    return f;
}

inline json scalar_to_json(const ScalarField& p) {
    json modes = json::array();
    for (const auto& e : p.entries)
        modes.push_back({{"k", {e.k[0], e.k[1]}}, {"cos", e.c_cos}, {"sin", e.c_sin}});
    return json{{"mean", p.mean}, {"modes", modes}};
}

inline ScalarField scalar_from_json(const json& j) {
    if (!j.is_object() || !j.contains("modes"))
        throw std::invalid_argument("scalar snapshot: needs a modes list");
    ScalarField p;
    p.mean = j.value("mean", 0.0);
    for (const auto& m : j["modes"]) {
        if (!m.contains("k") || !m["k"].is_array() || m["k"].size() != 2)
            throw std::invalid_argument("scalar snapshot: each mode needs k = [k1, k2]");
        p.set({m["k"][0].get<int>(), m["k"][1].get<int>()}, m.value("cos", 0.0),
              m.value("sin", 0.0));
    }
    return p;
}

/// The noise amplitude and everything that went into it; attached to every manifest
/// and report so a run can be audited without rerunning it.
inline json calibration_json(const NoiseSpec2& spec) {
    return json{{"cutoff", spec.cutoff},
                {"alpha", spec.alpha},
                {"nu", spec.nu},
                {"dim_factor", 0.5},
                {"inv_norm_sum", spec.inv_norm_sum()},
                {"epsilon", spec.epsilon()}};
}

inline void write_json(const std::filesystem::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

inline json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot read " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(path.string() + ": " + e.what());
    }
}

namespace detail {

inline std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string node_name(size_t i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%05zu.json", i);
    return buf;
}

}  // namespace detail

/// Writes one trajectory as a directory: manifest.json, y/ and p/ snapshots per
/// node, and a per-node summary.csv with norms and defect diagnostics.
inline void write_trajectory(const std::filesystem::path& dir, const NSTrajectory& traj,
                             const NoiseSpec2& spec) {
    namespace fs = std::filesystem;
    fs::create_directories(dir / "y");
    fs::create_directories(dir / "p");

    json manifest{{"kind", "trajectory"},
                  {"alpha", traj.alpha},
                  {"k_max", traj.k_max},
                  {"nu", traj.nu},
                  {"t_start", traj.times.front()},
                  {"t_end", traj.times.back()},
                  {"steps", traj.steps()},
                  {"dt", traj.dt()},
                  {"calibration", calibration_json(spec)}};
    write_json(dir / "manifest.json", manifest);

    for (size_t i = 0; i < traj.times.size(); ++i) {
        write_json(dir / "y" / detail::node_name(i), field_to_json(traj.y[i]));
        write_json(dir / "p" / detail::node_name(i), scalar_to_json(traj.p[i]));
    }

    const auto energy = energy_defect_series(traj);
    const auto residual = ns_residual_series(traj);
    std::ofstream csv(dir / "summary.csv");
    csv << "s,y_l2_sq,grad_y_l2_sq,energy_defect,ns_residual\n";
    for (size_t i = 0; i < traj.times.size(); ++i) {
        const auto nm = traj.y[i].norms();
        csv << detail::num(traj.times[i]) << ',' << detail::num(nm.l2_sq) << ','
            << detail::num(nm.grad_l2_sq) << ',' << detail::num(energy[i]) << ','
            << detail::num(residual[i]) << '\n';
    }
}

inline NSTrajectory read_trajectory(const std::filesystem::path& dir) {
    const json manifest = read_json(dir / "manifest.json");
    if (manifest.value("kind", "") != "trajectory")
        throw std::invalid_argument(dir.string() + ": not a trajectory directory");
    NSTrajectory traj;
    traj.nu = manifest.at("nu").get<double>();
    traj.alpha = manifest.at("alpha").get<int>();
    traj.k_max = manifest.at("k_max").get<int>();
    const auto steps = manifest.at("steps").get<size_t>();
    const double t0 = manifest.at("t_start").get<double>();
    const double t1 = manifest.at("t_end").get<double>();
    traj.times.resize(steps + 1);
    for (size_t i = 0; i <= steps; ++i)
        traj.times[i] = t0 + (t1 - t0) * double(i) / double(steps);
    traj.times.back() = t1;
    for (size_t i = 0; i <= steps; ++i) {
        traj.y.push_back(field_from_json(read_json(dir / "y" / detail::node_name(i))));
        traj.p.push_back(scalar_from_json(read_json(dir / "p" / detail::node_name(i))));
    }
    return traj;
}

/// Grid samples of a velocity field, one row per point.
inline void write_field_csv(const std::filesystem::path& path, const DivFreeField& f, int grid) {
    const auto vals = sample_grid(f, grid);
    std::ofstream csv(path);
    if (!csv) throw std::runtime_error("cannot write " + path.string());
    csv << "theta1,theta2,v1,v2\n";
    const double h = two_pi / grid;
    for (int i = 0; i < grid; ++i)
        for (int j = 0; j < grid; ++j) {
            const size_t p = size_t(i) * grid + j;
            csv << detail::num(i * h) << ',' << detail::num(j * h) << ','
                << detail::num(vals[0][p]) << ',' << detail::num(vals[1][p]) << '\n';
        }
}

inline void write_flow_csv(const std::filesystem::path& path, const PointSet& pts) {
    std::ofstream csv(path);
    if (!csv) throw std::runtime_error("cannot write " + path.string());
    csv << "particle,theta1,theta2\n";
    for (size_t p = 0; p < pts.size(); ++p)
        csv << p << ',' << detail::num(pts.x0[p]) << ',' << detail::num(pts.x1[p]) << '\n';
}

inline void write_history_csv(const std::filesystem::path& path,
                              const std::vector<double>& history) {
    std::ofstream csv(path);
    if (!csv) throw std::runtime_error("cannot write " + path.string());
    csv << "iteration,sup_update\n";
    for (size_t i = 0; i < history.size(); ++i)
        csv << (i + 1) << ',' << detail::num(history[i]) << '\n';
}

}  // namespace torusflow
