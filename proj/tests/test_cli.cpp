#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "kwc/config.hpp"

namespace fs = std::filesystem;
using namespace kwc;

namespace {

const fs::path kRoot = "cli_out";

std::string config(const std::string& name) { return std::string(KWC_SOURCE_DIR) + "/configs/" + name + ".json"; }

int cli(const std::string& args) {
    fs::create_directories(kRoot);
    const std::string cmd = std::string(KWC_CLI_PATH) + " " + args + " >/dev/null 2>>" + (kRoot / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

/// Fresh output directory for one run.
std::string out(const std::string& name) {
    const fs::path d = kRoot / name;
    fs::remove_all(d);
    return d.string();
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

std::string write_config(const std::string& name, const json& j) {
    fs::create_directories(kRoot);
    const fs::path p = kRoot / (name + ".json");
    std::ofstream(p) << j.dump(2);
    return p.string();
}

/// Rows of a CSV file without the header, split on commas.
std::vector<std::vector<double>> csv_rows(const fs::path& p) {
    std::ifstream in(p);
    std::string line;
    std::getline(in, line);
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        std::vector<double> r;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) r.push_back(std::stod(cell));
        rows.push_back(r);
    }
    return rows;
}

std::string header(const fs::path& p) {
    std::ifstream in(p);
    std::string line;
    std::getline(in, line);
    return line;
}

} // namespace

TEST_CASE("solve-state writes snapshots, audit and manifest") {
    const std::string o = out("solve");
    REQUIRE(cli("--config " + config("default") + " --out " + o + " solve-state") == 0);
    CHECK(header(fs::path(o) / "snapshot_000000.csv") == "x,eta,theta");
    CHECK(fs::exists(fs::path(o) / "snapshot_000200.csv"));
    CHECK(header(fs::path(o) / "energy_audit.csv") == "step,t,phi,ghat,total,dissipation_residual");
    CHECK(csv_rows(fs::path(o) / "energy_audit.csv").size() == 201);
    CHECK(csv_rows(fs::path(o) / "snapshot_000100.csv").size() == 101);
    const json m = read_json(fs::path(o) / "manifest.json");
    CHECK(m.at("command") == "solve-state");
    CHECK(m.at("report").at("steps").size() == 200);
    CHECK(fs::exists(fs::path(o) / "report.json"));

    SUBCASE("manifest config reproduces the loaded config") {
        RunConfig loaded = load_config(config("default"));
        loaded.output.directory = o;
        CHECK(config_from_json(m.at("config")) == loaded);
    }
    SUBCASE("identical configs give byte-identical outputs") {
        const std::string o2 = out("solve_again");
        REQUIRE(cli("--config " + config("default") + " --out " + o2 + " solve-state") == 0);
        for (const char* f : {"snapshot_000050.csv", "snapshot_000200.csv", "energy_audit.csv", "report.json"})
            CHECK(slurp(fs::path(o) / f) == slurp(fs::path(o2) / f));
    }
}

TEST_CASE("equilibrium config: every snapshot is the initial one") {
    const std::string o = out("equilibrium");
    REQUIRE(cli("--config " + config("equilibrium") + " solve-state --out " + o) == 0);
    const std::string first = slurp(fs::path(o) / "snapshot_000000.csv");
    int count = 0;
    for (const auto& e : fs::directory_iterator(o))
        if (e.path().filename().string().starts_with("snapshot_")) {
            CHECK(slurp(e.path()) == first);
            ++count;
        }
    CHECK(count == 9);
    for (const auto& r : csv_rows(fs::path(o) / "energy_audit.csv")) CHECK(std::abs(r[5]) <= 1e-12);
}

TEST_CASE("facet config at small eps: total energy does not increase") {
    const std::string o = out("facet");
    REQUIRE(cli("--config " + config("facet") + " --out " + o + " solve-state") == 0);
    const auto rows = csv_rows(fs::path(o) / "energy_audit.csv");
    for (std::size_t j = 1; j < rows.size(); ++j) CHECK(rows[j][4] <= rows[j - 1][4]);
}

TEST_CASE("exit codes") {
    SUBCASE("validation: delta_star outside (0,1)") {
        const std::string cfg = write_config("bad_delta", {{"problem", {{"delta_star", 1.5}}}});
        CHECK(cli("--config " + cfg + " --out " + out("bad_delta") + " solve-state") == 2);
        CHECK(slurp(kRoot / "stderr.txt").find("(0,1)") != std::string::npos);
    }
    SUBCASE("validation: unknown key, missing file, bad subcommand") {
        const std::string cfg = write_config("bad_key", {{"grid", {{"n_spaces", 10}}}});
        CHECK(cli("--config " + cfg + " solve-state") == 2);
        CHECK(cli("--config /nonexistent.json solve-state") == 2);
        CHECK(cli("--config " + config("default") + " fly") == 2);
        CHECK(cli("--config " + config("default")) == 2);
    }
    SUBCASE("validation: minmove step-size condition on the default config") {
        CHECK(cli("--config " + config("default") + " --out " + out("mm_bad") + " solve-state --scheme minmove") == 2);
    }
    SUBCASE("solver failure") {
        const std::string cfg =
            write_config("stall", {{"problem", {{"eps", 0.0}}}, {"solver", {{"m_max", 1}, {"inner_tol", 1e-15}, {"max_halvings", 2}}}});
        CHECK(cli("--config " + cfg + " --out " + out("stall") + " solve-state") == 3);
    }
    SUBCASE("threshold exceeded") {
        const std::string cfg = write_config("tight", {{"checks", {{"grad_scheme", "forward"}, {"grad_threshold", 1e-12}}},
                                                       {"problem", {{"u", {{"profile", {{"kind", "cosine"}, {"amplitude", 2.0}}}}}}}});
        CHECK(cli("--config " + cfg + " --out " + out("tight") + " grad-check") == 4);
        CHECK(fs::exists(kRoot / "tight" / "gradcheck.csv"));
    }
}

TEST_CASE("grad-check") {
    SUBCASE("default config") {
        const std::string o = out("gc_default");
        CHECK(cli("--config " + config("default") + " --out " + o + " grad-check") == 0);
        CHECK(header(fs::path(o) / "gradcheck.csv") == "delta,fd_value,adjoint_value,rel_error");
        CHECK(read_json(fs::path(o) / "report.json").at("max_rel_error").get<double>() <= 1e-3);
    }
    SUBCASE("forward differences at a nonzero control") {
        const std::string o = out("gc_forward");
        CHECK(cli("--config " + config("gradcheck") + " --out " + o + " grad-check") == 0);
        const auto rows = csv_rows(fs::path(o) / "gradcheck.csv");
        REQUIRE(rows.size() == 1);
        CHECK(rows[0][0] == 1e-4);
        CHECK(rows[0][3] <= 1e-3);
    }
    SUBCASE("no tracking: the cost is quadratic in the control") {
        const std::string o = out("gc_notrack");
        CHECK(cli("--config " + config("gradcheck_notrack") + " --out " + o + " grad-check") == 0);
        CHECK(read_json(fs::path(o) / "report.json").at("max_rel_error").get<double>() <= 1e-10);
    }
    SUBCASE("random direction is seeded") {
        const std::string a = out("gc_rand_a"), b = out("gc_rand_b");
        const std::string cfg = write_config("rand", {{"checks", {{"grad_direction", "random"}}}, {"grid", {{"n_space", 30}, {"n_time", 30}}}});
        REQUIRE(cli("--config " + cfg + " --seed 5 --out " + a + " grad-check") == 0);
        REQUIRE(cli("--config " + cfg + " --seed 5 --out " + b + " grad-check") == 0);
        CHECK(slurp(fs::path(a) / "gradcheck.csv") == slurp(fs::path(b) / "gradcheck.csv"));
    }
}

TEST_CASE("conjugacy and residuals on the default config") {
    const std::string o = out("conj");
    CHECK(cli("--config " + config("default") + " --out " + o + " conjugacy") == 0);
    const json r = read_json(fs::path(o) / "report.json");
    CHECK(r.at("max_relative_defect").get<double>() <= 1e-10);
    CHECK(r.at("trials") == 20);

    const std::string o2 = out("residuals");
    CHECK(cli("--config " + config("default") + " --out " + o2 + " residuals") == 0);
    const json s = read_json(fs::path(o2) / "report.json");
    for (const char* k : {"stationarity", "p_equation", "z_equation"}) CHECK(s.at(k).get<double>() >= 0.0);
}

TEST_CASE("linear-solve heat mode follows the analytic decay") {
    const std::string o = out("heat");
    REQUIRE(cli("--config " + config("heat") + " --out " + o + " linear-solve") == 0);
    const auto rows = csv_rows(fs::path(o) / "linear_solve.csv");
    REQUIRE(rows.size() == 401);
    double worst = 0.0;
    for (const auto& r : rows) worst = std::max({worst, std::abs(r[1] - r[2]), std::abs(r[3] - r[4])});
    CHECK(worst <= 1e-3);
    CHECK(worst > 0.0);
}

TEST_CASE("minmove config") {
    const std::string o = out("minmove");
    REQUIRE(cli("--config " + config("minmove") + " --out " + o + " solve-state") == 0);
    const json r = read_json(fs::path(o) / "report.json");
    CHECK(r.at("scheme") == "minmove");
    CHECK(r.at("step_inequality_holds") == true);
    CHECK(r.at("steps").size() == 500);
}

TEST_CASE("optimize and continuation") {
    SUBCASE("reachable target") {
        const std::string o = out("reachable");
        CHECK(cli("--config " + config("reachable") + " --out " + o + " optimize") == 0);
        const json r = read_json(fs::path(o) / "report.json");
        CHECK(r.at("report").at("converged") == true);
        CHECK(header(fs::path(o) / "optimize_history.csv") == "iteration,cost,residual,step");
    }
    SUBCASE("one-entry continuation equals optimize") {
        const json j = {{"problem", {{"M_u", 0.01}, {"M_v", 0.01}, {"eps", 0.03}}},
                        {"grid", {{"n_space", 40}, {"n_time", 40}}},
                        {"optimize", {{"tol", 1e-8}, {"eps_list", {0.03}}}}};
        const std::string cfg = write_config("one_entry", j);
        const std::string a = out("one_opt"), b = out("one_cont");
        REQUIRE(cli("--config " + cfg + " --out " + a + " optimize") == 0);
        REQUIRE(cli("--config " + cfg + " --out " + b + " continuation") == 0);
        CHECK(read_json(fs::path(a) / "report.json").at("report").dump() ==
              read_json(fs::path(b) / "report.json").at("reports").at(0).dump());
    }
    SUBCASE("continuation config") {
        const std::string o = out("continuation");
        CHECK(cli("--config " + config("continuation") + " --out " + o + " continuation") == 0);
        const json c = read_json(fs::path(o) / "report.json").at("certificate");
        CHECK(c.at("eps_sequence").size() == 5);
        CHECK(c.at("control_drift").size() == 4);
        CHECK(header(fs::path(o) / "continuation.csv") == "eps,iterations,converged,facet_fraction,control_drift");
    }
}
