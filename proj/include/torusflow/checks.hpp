#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "torusflow/fbsde.hpp"

namespace torusflow {

/// One measured quantity with the bound it was held to. Rows with a NaN tolerance
/// are informational and never fail the check.
struct CheckRow {
    std::string name;
    double value = 0;
    double tolerance = std::numeric_limits<double>::quiet_NaN();
    bool pass = true;
};

struct CheckReport {
    std::string check;
    NoiseSpec2 spec;
    std::vector<CheckRow> rows;

    void bound(const std::string& name, double value, double tol) {
        rows.push_back({name, value, tol, value <= tol});
    }
    void info(const std::string& name, double value) { rows.push_back({name, value}); }
    bool pass() const {
        for (const auto& r : rows)
            if (!r.pass) return false;
        return true;
    }
};

// ---- basis geometry ----

struct BasisOptions {
    int k_limit = 4;
    int grid = 64;
    double tol = 1e-10;
};

/// Rectangle-rule quadrature of every basis field against the closed-form norms,
/// plus the uniform two-sided bound on the strong norm.
inline CheckReport check_basis(const BasisOptions& opt = {}) {
    CheckReport rep;
    rep.check = "basis";
    rep.spec = NoiseSpec2{opt.k_limit, 3, 0.1};

    double worst = 0, lo = std::numeric_limits<double>::infinity(), hi = 0;
    const double cell = (two_pi / opt.grid) * (two_pi / opt.grid);
    for (int alpha : {2, 3, 4})
        for (const auto& k : modes_up_to<2>(opt.k_limit, true))
            for (Kind kind : {Kind::A, Kind::B}) {
                const Channel<2> ch{k, kind, 1};
                double quad = 0;
                for (int i = 0; i < opt.grid; ++i)
                    for (int j = 0; j < opt.grid; ++j) {
                        const auto v = basis_value<2>(
                            ch, alpha, {two_pi * i / opt.grid, two_pi * j / opt.grid});
                        quad += v[0] * v[0] + v[1] * v[1];
                    }
                quad *= cell;
                if (!is_zero<2>(k)) quad *= 1.0 + std::pow(double(norm_sq<2>(k)), double(alpha));
                const double exact = basis_norm_alpha_sq<2>(k, alpha);
                worst = std::max(worst, std::abs(quad - exact) / exact);
                lo = std::min(lo, quad);
                hi = std::max(hi, quad);
            }
    rep.bound("max_rel_defect", worst, opt.tol);
    rep.bound("lower_bound_violation", std::max(0.0, (2 * pi * pi - lo) / (2 * pi * pi)), 1e-12);
    rep.bound("upper_bound_violation", std::max(0.0, (hi - 4 * pi * pi) / (4 * pi * pi)), 1e-12);
    rep.info("min_norm_sq", lo);
    rep.info("max_norm_sq", hi);
    return rep;
}

// ---- noise channel sum vs viscous term ----

struct LaplacianOptions {
    int fields = 20;
    int box3_half = 10;
    double tol = 1e-10;
    uint64_t seed = 2000;
};

inline CheckReport check_laplacian(const LaplacianOptions& opt = {}) {
    CheckReport rep;
    rep.check = "laplacian";
    rep.spec = NoiseSpec2{1, 3, 0.1};

    double worst2d = 0;
    uint64_t seed = opt.seed;
    int produced = 0;
    while (produced < opt.fields)
        for (int cutoff : {0, 1, 2, 3}) {
            for (int alpha : {2, 3, 4}) {
                if (produced++ >= opt.fields) break;
                const NoiseSpec2 spec{cutoff, alpha, 0.05};
                const auto f = random_divfree(3, alpha, 1.0, seed++, true);
                worst2d = std::max(worst2d, laplacian_identity_defect(f, spec));
            }
            if (produced >= opt.fields) break;
        }
    rep.bound("max_defect_2d", worst2d, opt.tol);

    const NoiseSpec3 spec3{1, 2, 0.1};
    std::array<CoeffBox3, 3> v{CoeffBox3::square(opt.box3_half), CoeffBox3::square(opt.box3_half),
                               CoeffBox3::square(opt.box3_half)};
    const CounterRng rng{opt.seed};
    uint64_t ctr = 0;
    for (int comp = 0; comp < 3; ++comp) {
        Mode3 m = v[comp].first_mode();
        do {
            Mode3 neg{-m[0], -m[1], -m[2]};
            if (m < neg) {
                const double re = 2 * rng.uniform(4, 0, 0, ctr++) - 1;
                const double im = 2 * rng.uniform(4, 0, 0, ctr++) - 1;
                v[comp].at(m) = {re, im};
                v[comp].at(neg) = {re, -im};
            } else if (m == neg) {
                v[comp].at(m) = 2 * rng.uniform(4, 0, 0, ctr++) - 1;
            }
        } while (v[comp].next_mode(m));
    }
    rep.bound("defect_3d", laplacian_identity_defect<3>(v, spec3), opt.tol);
    return rep;
}

// ---- transport noise carries no Ito-Stratonovich drift ----

struct StratOptions {
    double tol = 1e-12;
};

inline CheckReport check_strat(const StratOptions& opt = {}) {
    CheckReport rep;
    rep.check = "strat";
    rep.spec = NoiseSpec2{3, 3, 0.1};

    double worst2d = 0;
    for (int cutoff : {1, 2, 3})
        worst2d = std::max(worst2d, strat_ito_correction(NoiseSpec2{cutoff, 3, 0.1}));
    rep.bound("max_correction_2d", worst2d, opt.tol);
    rep.bound("correction_3d", strat_ito_correction(NoiseSpec3{1, 2, 0.1}), opt.tol);
    return rep;
}

// ---- energy identities along a solved trajectory ----

struct EnergyOptions {
    double nu = 0.1;
    double amplitude = 1.0;
    double horizon = 0.5;
    int steps = 500;
    int alpha = 3;
    int cutoff = 1;
    double det_tol = 1e-8;
    double xnorm_tol = 1e-10;
};

inline CheckReport check_energy(const EnergyOptions& opt = {}) {
    CheckReport rep;
    rep.check = "energy";
    rep.spec = NoiseSpec2{opt.cutoff, opt.alpha, opt.nu};

    const auto h =
        taylor_green_velocity(opt.amplitude, opt.nu, opt.horizon, opt.horizon, opt.alpha);
    const auto traj = solve_backward_ns(h, opt.nu, 0.0, opt.horizon, opt.steps);
    const auto e = energy_identities(traj, rep.spec);
    rep.bound("deterministic_defect", e.deterministic_defect, opt.det_tol);
    rep.bound("x_norm_defect", e.x_norm_defect, opt.xnorm_tol);
    return rep;
}

// ---- single-path backward identity ----

struct BsdeOptions {
    double nu = 0.1;
    double amplitude = 1.0;
    double horizon = 0.25;
    double dt = 1e-3;
    int grid = 16;
    int alpha = 3;
    int cutoff = 1;
    uint64_t seed = 1;
    double tol = 5e-2;
};

inline CheckReport check_bsde(const BsdeOptions& opt = {}) {
    CheckReport rep;
    rep.check = "bsde";
    rep.spec = NoiseSpec2{opt.cutoff, opt.alpha, opt.nu};

    const auto h =
        taylor_green_velocity(opt.amplitude, opt.nu, opt.horizon, opt.horizon, opt.alpha);
    const int steps = int(std::lround(opt.horizon / opt.dt));
    const auto traj = solve_backward_ns(h, opt.nu, 0.0, opt.horizon, steps);
    const DriftFn drift = [&traj](double s) { return interpolate_field(traj, s); };

    BrownianDriver driver{CounterRng{opt.seed}, 5, opt.dt, 1, int(rep.spec.channels().size())};
    const auto triple = build_triple(
        traj, record_flow(rep.spec, drift, 0.0, steps, identity_grid(opt.grid), driver),
        rep.spec);
    rep.bound("residual", bsde_residual(triple), opt.tol);
    return rep;
}

// ---- ensemble average vs the drift ----

struct RepresentationOptions {
    double nu = 0.1;
    double amplitude = 1.0;
    double horizon = 0.5;
    double dt = 1e-3;
    int samples = 2000;
    int grid = 32;
    int alpha = 3;
    int cutoff = 1;
    uint64_t seed = 1;
    uint64_t family = 10;
    int workers = 1;
    double tol = 5e-2;
};

inline CheckReport check_representation(const RepresentationOptions& opt = {}) {
    CheckReport rep;
    rep.check = "representation";
    rep.spec = NoiseSpec2{opt.cutoff, opt.alpha, opt.nu};

    const auto h =
        taylor_green_velocity(opt.amplitude, opt.nu, opt.horizon, opt.horizon, opt.alpha);
    const int steps = int(std::lround(opt.horizon / opt.dt));
    const auto traj = solve_backward_ns(h, opt.nu, 0.0, opt.horizon, steps);

    McOptions mo;
    mo.samples = opt.samples;
    mo.grid = opt.grid;
    mo.seed = opt.seed;
    mo.family = opt.family;
    mo.workers = opt.workers;
    const auto res = representation_formula(traj, rep.spec, mo);
    rep.bound("sup_error", res.sup_error, opt.tol);
    rep.info("l2_error", res.l2_error);
    return rep;
}

// ---- volume preservation of noisy flows ----

struct VolumeOptions {
    int cutoff = 1;
    int alpha = 3;
    double nu = 0.1;
    double dt = 1e-3;
    int steps = 100;
    int grid = 64;
    int paths = 100;
    uint64_t seed = 1;
    double tol = 1e-2;
};

inline CheckReport check_volume(const VolumeOptions& opt = {}) {
    CheckReport rep;
    rep.check = "volume";
    rep.spec = NoiseSpec2{opt.cutoff, opt.alpha, opt.nu};
    const int nch = int(rep.spec.channels().size());

    // the same underlying increments at both steps isolate the dt effect
    double defect[2] = {0, 0};
    int idx = 0;
    for (int agg : {2, 1}) {
        double worst = 0;
        for (int m = 0; m < opt.paths; ++m) {
            BrownianDriver driver{CounterRng{opt.seed}, stream_id(20, uint64_t(m)), opt.dt, agg,
                                  nch};
            const auto flowed = simulate_flow(rep.spec, nullptr, 0.0, opt.steps / agg,
                                              identity_grid(opt.grid), driver);
            worst = std::max(worst, volume_distortion(flowed, opt.grid).max_abs);
        }
        defect[idx++] = worst;
    }
    rep.info("max_defect_coarse", defect[0]);
    rep.bound("max_defect", defect[1], opt.tol);
    rep.bound("refinement_gain", defect[1] - defect[0], 0.0);
    return rep;
}

// ---- right translation invariance ----

struct TranslationOptions {
    int cutoff = 1;
    int alpha = 3;
    double nu = 0.1;
    double dt = 1e-3;
    int steps = 100;
    std::vector<int> grids{16, 32, 64};
    std::array<double, 2> xi{1.0, 0.5};
    uint64_t seed = 31;
    double tol = 2e-2;
};

inline CheckReport check_translation(const TranslationOptions& opt = {}) {
    CheckReport rep;
    rep.check = "translation";
    rep.spec = NoiseSpec2{opt.cutoff, opt.alpha, opt.nu};

    std::vector<double> defects;
    for (int g : opt.grids)
        defects.push_back(right_translation_defect(rep.spec, nullptr, 0.0, opt.steps, g, opt.xi,
                                                   opt.seed, 2, opt.dt));
    for (size_t i = 0; i + 1 < defects.size(); ++i) {
        rep.info("defect_grid_" + std::to_string(opt.grids[i]), defects[i]);
        rep.bound("refinement_gain_" + std::to_string(opt.grids[i + 1]),
                  defects[i + 1] - defects[i], 0.0);
    }
    rep.bound("defect", defects.back(), opt.tol);
    return rep;
}

}  // namespace torusflow
