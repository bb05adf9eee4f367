#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct CliResult {
    int code = -1;
    json report;
    std::string raw;
};

CliResult run_cli(const std::string& args, const std::string& env = "") {
    std::string cmd = env.empty() ? "" : env + " ";
    cmd += std::string(TORUSFLOW_CLI_PATH) + " " + args + " 2>/dev/null";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    CliResult res;
    char buf[4096];
    size_t n;
    while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) res.raw.append(buf, n);
    const int rc = pclose(pipe);
    res.code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    if (!res.raw.empty()) res.report = json::parse(res.raw, nullptr, false);
    return res;
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("solve-ns writes a trajectory and matches the closed form", "[cli]") {
    const auto dir = fresh_dir("tfcli_solve");
    const auto res =
        run_cli("solve-ns --T 0.25 --output-dir " + (dir / "traj").string());
    REQUIRE(res.code == 0);
    const auto& v = res.report.at("values");
    CHECK(v.at("sup_error_vs_oracle").get<double>() <= 1e-8);
    CHECK(v.at("y_l2_sq_defect").get<double>() <= 1e-8);
    CHECK(v.at("steps").get<int>() == 250);
    CHECK(res.report.at("calibration").contains("epsilon"));
    CHECK(res.report.at("config").at("command") == "solve-ns");

    CHECK(fs::exists(dir / "traj" / "manifest.json"));
    CHECK(fs::exists(dir / "traj" / "summary.csv"));
    CHECK(fs::exists(dir / "traj" / "y" / "00000.json"));
    CHECK(fs::exists(dir / "traj" / "p" / "00250.json"));

    // the stored field snapshot uses the documented schema
    std::ifstream in(dir / "traj" / "y" / "00250.json");
    const json snap = json::parse(in);
    CHECK(snap.contains("alpha"));
    CHECK(snap.at("mean").size() == 2);
    CHECK(snap.at("modes").at(0).contains("k"));
    CHECK(snap.at("modes").at(0).contains("aA"));
    CHECK(snap.at("modes").at(0).contains("aB"));

    SECTION("report loads it back bit-for-bit") {
        const auto back = run_cli("report --input " + (dir / "traj").string());
        REQUIRE(back.code == 0);
        const auto& w = back.report.at("values");
        CHECK(w.at("ns_residual") == v.at("ns_residual"));
        CHECK(w.at("energy_defect") == v.at("energy_defect"));
        CHECK(w.at("y_start_l2_sq") == v.at("y_start_l2_sq"));
        CHECK(w.at("x_norm_defect").get<double>() <= 1e-12);
    }

    SECTION("report exports plot-ready grid samples") {
        const auto back = run_cli("report --G 8 --output-dir " + (dir / "plots").string() +
                                  " --input " + (dir / "traj").string());
        REQUIRE(back.code == 0);
        std::ifstream csv(dir / "plots" / "y_start.csv");
        std::string header;
        std::getline(csv, header);
        CHECK(header == "theta1,theta2,v1,v2");
    }

    SECTION("simulate can take its drift from the stored trajectory") {
        const auto flow = run_cli("simulate --G 8 --T 0.25 --input " + (dir / "traj").string());
        REQUIRE(flow.code == 0);
        CHECK(flow.report.at("values").at("max_volume_defect").get<double>() < 5e-2);
    }
}

TEST_CASE("solve-ns zero preset yields an all-zero summary", "[cli]") {
    const auto res = run_cli("solve-ns --terminal zero --T 0.1 --steps 20");
    REQUIRE(res.code == 0);
    const auto& v = res.report.at("values");
    CHECK(v.at("y_start_l2_sq").get<double>() == 0.0);
    CHECK(v.at("y_end_l2_sq").get<double>() == 0.0);
    CHECK(v.at("energy_defect").get<double>() == 0.0);
}

TEST_CASE("solve-ns rejects an unstable step", "[cli]") {
    const auto res = run_cli("solve-ns --dt 0.9 --T 2.0 --amplitude 9");
    CHECK(res.code == 3);
    CHECK(res.report.at("kind") == "input");
    CHECK(res.report.contains("error"));
}

TEST_CASE("verify checks pass at their default tolerances", "[cli]") {
    for (const std::string which : {"basis", "strat"}) {
        const auto res = run_cli("verify " + which);
        INFO(which);
        REQUIRE(res.code == 0);
        CHECK(res.report.at("pass").get<bool>());
        CHECK(res.report.at("check") == which);
    }

    const auto lap = run_cli("verify laplacian --M 6");
    REQUIRE(lap.code == 0);
    CHECK(lap.report.at("values").at("max_defect_2d").get<double>() <= 1e-10);

    const auto energy = run_cli("verify energy --T 0.2 --steps 100");
    REQUIRE(energy.code == 0);

    const auto vol = run_cli("verify volume --G 16 --M 5 --steps 50");
    REQUIRE(vol.code == 0);
    CHECK(vol.report.at("values").at("max_defect").get<double>() <= 1e-2);

    const auto trans = run_cli("verify translation --G 32 --steps 50");
    REQUIRE(trans.code == 0);

    const auto rep = run_cli("verify representation --M 400 --G 8 --T 0.25");
    REQUIRE(rep.code == 0);
    CHECK(rep.report.at("values").at("sup_error").get<double>() <= 5e-2);
}

TEST_CASE("verify signals tolerance failures with exit 2", "[cli]") {
    const auto res = run_cli("verify bsde --tol 1e-9");
    CHECK(res.code == 2);
    CHECK_FALSE(res.report.at("pass").get<bool>());
    CHECK(res.report.at("values").at("residual").get<double>() > 1e-9);
    CHECK(res.report.at("tolerances").at("residual").get<double>() == 1e-9);
}

TEST_CASE("verify rejects unknown checks", "[cli]") {
    const auto res = run_cli("verify bogus");
    CHECK(res.code == 3);
}

TEST_CASE("simulate is reproducible and seed-overridable", "[cli]") {
    const auto a = run_cli("simulate --G 16 --T 0.1 --seed 7");
    const auto b = run_cli("simulate --G 16 --T 0.1 --seed 7");
    const auto c = run_cli("simulate --G 16 --T 0.1", "TORUSFLOW_SEED=7");
    const auto d = run_cli("simulate --G 16 --T 0.1 --seed 1");
    REQUIRE(a.code == 0);
    CHECK(a.report.at("values") == b.report.at("values"));
    CHECK(a.report.at("values") == c.report.at("values"));
    CHECK(a.report.at("values") != d.report.at("values"));
    CHECK(a.report.at("values").at("max_volume_defect").get<double>() < 1e-2);

    const auto bad = run_cli("simulate", "TORUSFLOW_SEED=xyz");
    CHECK(bad.code == 3);
}

TEST_CASE("config file drives a run and flags override it", "[cli]") {
    const auto dir = fresh_dir("tfcli_cfg");
    {
        std::ofstream cfg(dir / "run.json");
        cfg << R"({"command":"verify","which":"energy","T":0.2,"steps":100})";
    }
    const auto res = run_cli("--config " + (dir / "run.json").string());
    REQUIRE(res.code == 0);
    CHECK(res.report.at("check") == "energy");
    CHECK(res.report.at("config").at("T").get<double>() == 0.2);

    const auto over = run_cli("--config " + (dir / "run.json").string() + " --T 0.3");
    REQUIRE(over.code == 0);
    CHECK(over.report.at("config").at("T").get<double>() == 0.3);

    const auto clash = run_cli("picard --config " + (dir / "run.json").string());
    CHECK(clash.code == 3);

    {
        std::ofstream cfg(dir / "bad.json");
        cfg << R"({"command":"verify","typo_key":1})";
    }
    const auto bad = run_cli("--config " + (dir / "bad.json").string());
    CHECK(bad.code == 3);
}

TEST_CASE("picard converges on a constant terminal value", "[cli]") {
    const auto dir = fresh_dir("tfcli_picard");
    {
        std::ofstream snap(dir / "const.json");
        snap << R"({"alpha":3,"mean":[0.25,-0.4],"modes":[]})";
    }
    const auto res = run_cli("picard --terminal " + (dir / "const.json").string() +
                             " --T 0.4 --coarse-steps 4 --substeps 5 --M 3 --G 8" +
                             " --max-iters 3 --output-dir " + (dir / "run").string());
    REQUIRE(res.code == 0);
    const auto& v = res.report.at("values");
    CHECK_FALSE(v.at("diverged").get<bool>());
    REQUIRE(v.at("history").size() == 2);
    CHECK(v.at("history").at(1).get<double>() < 1e-12);
    CHECK(fs::exists(dir / "run" / "history.csv"));
    CHECK(fs::exists(dir / "run" / "y" / "00004.json"));
}

TEST_CASE("picard contracts on short horizons and flags long ones", "[cli]") {
    const auto small = run_cli(
        "picard --T 0.25 --amplitude 0.5 --coarse-steps 8 --substeps 4"
        " --M 200 --G 8 --tol 3e-2 --max-iters 5 --seed 3");
    REQUIRE(small.code == 0);
    const auto& v = small.report.at("values");
    CHECK_FALSE(v.at("diverged").get<bool>());
    const double h0 = v.at("history").at(0).get<double>();
    const double h1 = v.at("history").at(1).get<double>();
    CHECK(h1 / h0 < 0.5);

    const auto large = run_cli(
        "picard --T 4 --amplitude 2 --coarse-steps 8 --substeps 25"
        " --M 30 --G 8 --tol 1e-2 --max-iters 3 --seed 3");
    CHECK(large.code == 4);
    CHECK(large.report.at("values").at("diverged").get<bool>());
}
