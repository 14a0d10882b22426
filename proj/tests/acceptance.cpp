// One PASS/FAIL line per acceptance criterion. Runs the shipped configs in-process.
// Usage: acceptance <configs dir> <output dir>

#include "bubblespectra/experiment.hpp"
#include "bubblespectra/forms.hpp"
#include "bubblespectra/maps.hpp"
#include "bubblespectra/mesh.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace bubblespectra;
using json = nlohmann::json;

namespace {

struct Run {
    RunResult result;
    double seconds = 0.0;
};

std::string config_dir, out_dir;
std::map<std::string, Run> runs;

const Run& run(const std::string& config) {
    if (auto it = runs.find(config); it != runs.end()) return it->second;
    std::ifstream f(config_dir + "/" + config + ".json");
    if (!f) throw std::runtime_error("missing config " + config);
    const json user = json::parse(f);
    const std::string command = user.at("command").get<std::string>();
    const auto t0 = std::chrono::steady_clock::now();
    Run r;
    r.result = run_experiment(command, resolve_config(command, user), out_dir + "/" + config);
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << "# " << config << ": " << to_string(r.result.overall()) << " in " << r.seconds << " s\n";
    return runs.emplace(config, std::move(r)).first->second;
}

/// Collects the status of named assertions; any missing assertion counts as a failure.
struct Check {
    bool ok = true;
    std::vector<std::string> notes;

    void status(const std::string& config, const std::string& name, bool allow_ambiguous = false) {
        const Assertion* a = run(config).result.find(name);
        if (!a) {
            ok = false;
            notes.push_back(config + "/" + name + " missing");
            return;
        }
        const bool good = a->status == Status::pass || (allow_ambiguous && a->status == Status::ambiguous);
        if (!good) {
            ok = false;
            notes.push_back(config + "/" + name + " " + to_string(a->status) + " (" + a->detail + ")");
        }
    }
    void not_failed(const std::string& config, const std::string& name) { status(config, name, true); }
    void require(bool cond, const std::string& what) {
        if (!cond) {
            ok = false;
            notes.push_back(what);
        }
    }
    void note(const std::string& s) { notes.push_back(s); }
};

std::string fmt(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", x);
    return buf;
}

std::string join(const std::vector<std::string>& v) {
    std::string s;
    for (const auto& x : v) s += (s.empty() ? "" : "; ") + x;
    return s;
}

const std::vector<std::string> spectrum_configs = {"spectrum_identity", "spectrum_constant"};
const std::vector<std::string> bubble_configs = {"bubble_identity", "bubble_two"};

Check criterion_1() {
    Check c;
    for (const auto& s : spectrum_configs) {
        c.status(s, "eigenvalue_lower_bound");
        c.status(s, "w12_identity");
        c.status(s, "residuals");
        c.note(s + " smallest eigenvalue " +
               fmt(run(s).result.find("eigenvalue_lower_bound")->data["lowest"].get<double>()));
    }
    for (const auto& b : bubble_configs) c.status(b, "apriori_bounds");
    return c;
}

Check criterion_2() {
    Check c;
    for (const auto& s : spectrum_configs) {
        c.status(s, "w12_bound");
        c.note(s + " max excess " + fmt(run(s).result.find("w12_bound")->data["max_excess"].get<double>()));
    }
    for (const auto& b : bubble_configs) c.status(b, "apriori_bounds");
    return c;
}

Check criterion_3() {
    Check c;
    const Run& r = run("embedding");
    c.status("embedding", "unaugmented_degeneracy");
    c.status("embedding", "augmented_positivity");
    c.status("embedding", "pullback_isometry");
    c.require(r.seconds < 10.0, "runtime " + fmt(r.seconds) + " s >= 10 s");
    return c;
}

Check criterion_4() {
    Check c;
    const Run& r = run("sylvester");
    for (const auto& a : r.result.assertions) c.status("sylvester", a.name);
    for (const auto& s : spectrum_configs) c.status(s, "sylvester_invariance");
    c.require(r.seconds < 30.0, "runtime " + fmt(r.seconds) + " s >= 30 s");
    c.note("100 triples and " + std::to_string(r.result.assertions.size() - 1) + " PDE spectra in " + fmt(r.seconds) +
           " s");
    return c;
}

Check criterion_5() {
    Check c;
    for (const auto& s : spectrum_configs) {
        c.status(s, "expected_inertia");
        c.status(s, "refinement_near_null_decrease");
        c.status(s, "refinement_gap");
        c.status(s, "classification");
    }
    c.note(run("spectrum_identity").result.find("refinement_near_null_decrease")->detail);
    return c;
}

Check criterion_6() {
    Check c;
    c.status("spectrum_identity", "conformal_energy");
    c.status("bubble_identity", "inertia_constant_in_k");
    c.not_failed("bubble_two", "inertia_constant_in_k");
    c.note(run("spectrum_identity").result.find("conformal_energy")->detail);
    return c;
}

Check criterion_7() {
    Check c;
    for (const auto& b : bubble_configs)
        for (const char* s : {"null", "positive", "mixed"}) {
            c.status(b, std::string("lower_bound_") + s);
            const Assertion* a = run(b).result.find(std::string("lower_bound_") + s);
            if (a && a->data.contains("final_gap") && a->data["final_gap"].is_number())
                c.note(b + " " + s + " gap " + fmt(a->data["final_gap"].get<double>()));
        }
    return c;
}

Check criterion_8() {
    Check c;
    c.status("bubble_identity", "index_nullity_upper_bound");
    c.status("bubble_two", "index_nullity_upper_bound");
    const json& ub = run("bubble_identity").result.results["upper_bound"];
    c.require(ub["rhs"].get<int>() == 8, "identity rhs " + ub["rhs"].dump() + " != 8");
    int included = 0;
    for (const auto& row : ub["rows"])
        if (row["included"].get<bool>()) {
            ++included;
            c.require(row["lhs"].get<int>() == 6, "identity k=" + row["k"].dump() + " lhs " + row["lhs"].dump());
        }
    c.require(included > 0, "no refinement-converged identity rows");
    for (const auto& b : bubble_configs) {
        c.not_failed(b, "index_lower_bound");
        c.not_failed(b, "index_nullity_upper_bound");
    }
    c.note("identity lhs = 6 <= rhs = 8 on " + std::to_string(included) + " converged scales");
    return c;
}

Check criterion_9() {
    Check c;
    const Run& r = run("neck");
    for (const auto& a : r.result.assertions) c.status("neck", a.name);
    for (const auto& b : bubble_configs) c.status(b, "neck_decay");
    c.require(r.seconds < 60.0, "runtime " + fmt(r.seconds) + " s >= 60 s");
    c.note(r.result.find("bubble_neck_exponent")->detail);
    return c;
}

Check criterion_10() {
    Check c;
    const DirichletFunctional dirichlet;
    auto mesh = std::make_shared<const SurfaceMesh>(icosphere(2));
    struct Case {
        std::string name;
        MapField u;
    };
    const std::vector<Case> cases = {
        {"identity", parse_map_spec("rational:[0,1]/[1]", mesh, make_manifold("sphere2"))},
        {"degree two", parse_map_spec("rational:[0,0,1]/[1]", mesh, make_manifold("sphere2"))},
        {"identity into augmented sphere", parse_map_spec("rational:[0,1]/[1]", mesh, make_manifold("sphere2+aug:4"))},
        {"constant", parse_map_spec("constant:0.6,0,0.8", mesh, make_manifold("sphere2"))},
        {"torus", torus_map(0.7, 1.3, mesh, make_manifold("clifford+aug:4"))},
    };
    double worst = 0.0;
    std::mt19937_64 rng(2024);
    for (const auto& tc : cases) {
        const AssembledForms f = assemble(tc.u);
        for (int k = 0; k < 20; ++k) {
            const Vec x = random_section(*f.basis, rng);
            const double exact = cross_form(f, x, x, FormKind::index);
            const double fd = fd_second_variation(dirichlet, tc.u, f.basis->to_ambient(x)).value;
            const double err = std::abs(fd - exact);
            const double allowed = std::max(1e-5 * std::abs(exact), 1e-8);
            worst = std::max(worst, err / allowed);
            if (err > allowed) {
                c.require(false, tc.name + ": |fd - assembled| = " + fmt(err) + " > " + fmt(allowed));
                break;
            }
        }
    }
    c.note("worst error / allowed " + fmt(worst) + " over 5 maps x 20 sections");

    auto max_abs = [](const Mat& a) { return a.cwiseAbs().maxCoeff(); };
    const auto small = std::make_shared<const SurfaceMesh>(icosphere(1));
    const MapField id = parse_map_spec("rational:[0,1]/[1]", small, make_manifold("sphere2"));
    const GeneralForms g0 = assemble_general(id, TwoFormFunctional(volume_calibration_form(0.0, 3)));
    const double scale = max_abs(Mat(g0.dirichlet.index_form()));
    const double r0 = max_abs(g0.deviation()) / scale;
    c.require(r0 <= 1e-6, "two-form at zero: deviation " + fmt(r0) + " > 1e-6");

    const MapField cst = parse_map_spec("constant:0,0.6,0.8", small, make_manifold("sphere2"));
    const GeneralForms gc = assemble_general(cst, TwoFormFunctional(volume_calibration_form(1.0, 3)));
    const double rc = max_abs(gc.deviation()) / max_abs(Mat(gc.dirichlet.K));
    c.require(rc <= 1e-6, "constant map: deviation " + fmt(rc) + " > 1e-6");

    const GeneralForms g1 = assemble_general(id, TwoFormFunctional(volume_calibration_form(0.5, 3)));
    const DeviationBound b = deviation_bound(g1, id, 20, 1);
    c.require(std::isfinite(b.max_ratio), "deviation bound constant is not finite");
    c.note("general form at zero " + fmt(r0) + ", constant-map deviation " + fmt(rc) + ", deviation bound constant " +
           fmt(b.max_ratio));
    return c;
}

Check criterion_11() {
    Check c;
    for (const auto& b : bubble_configs) {
        c.status(b, "accounting_partition");
        c.status(b, "accounting_neck_share");
        c.status(b, "accounting_bubble_share");
        c.note(b + " " + run(b).result.find("accounting_neck_share")->detail);
    }
    return c;
}

}  // namespace

int main(int argc, char** argv) {
    if (argc != 3) {
        std::cerr << "usage: acceptance <configs dir> <output dir>\n";
        return 2;
    }
    config_dir = argv[1];
    out_dir = argv[2];

    // Known failure: the coordinate-frame augmentation of the Clifford torus at
    // lambda = 2 does not reach c >= 1; see the README.
    const std::map<int, std::string> expected_failures = {
        {3, "coordinate-frame augmentation at lambda = 2 gives c near 0, not >= 1"}};

    const std::vector<Check (*)()> criteria = {criterion_1, criterion_2, criterion_3, criterion_4,
                                               criterion_5, criterion_6, criterion_7, criterion_8,
                                               criterion_9, criterion_10, criterion_11};
    int unexpected = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int n = static_cast<int>(i) + 1;
        Check c;
        try {
            c = criteria[i]();
        } catch (const std::exception& e) {
            c.ok = false;
            c.note(std::string("error: ") + e.what());
        }
        std::string line = "criterion " + std::to_string(n) + (c.ok ? " PASS" : " FAIL") + ": " + join(c.notes);
        const auto xf = expected_failures.find(n);
        if (xf != expected_failures.end()) {
            line += c.ok ? " [unexpected pass]" : " [expected failure: " + xf->second + "]";
            if (c.ok) ++unexpected;
        } else if (!c.ok) {
            ++unexpected;
        }
        std::cout << line << std::endl;
    }
    std::cout << (unexpected == 0 ? "acceptance: all criteria as expected" : "acceptance: unexpected results") << "\n";
    return unexpected == 0 ? 0 : 1;
}
