#include "bubblespectra/experiment.hpp"

#include "bubblespectra/bubblelab.hpp"
#include "bubblespectra/errors.hpp"
#include "bubblespectra/forms.hpp"
#include "bubblespectra/manifold.hpp"
#include "bubblespectra/maps.hpp"
#include "bubblespectra/mesh.hpp"
#include "bubblespectra/neck.hpp"
#include "bubblespectra/spectra.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <sstream>

namespace bubblespectra {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// ------------------------------------------------------------------ schema

json solver_defaults() {
    return {{"path", "auto"}, {"dense_limit", 3000}, {"tolerance", 1e-10}, {"max_iterations", 2000}, {"shift", -1.1}};
}

json mesh_defaults(int level, double factor, double transition) {
    return {{"level", level},
            {"grading", {{"factor", factor}, {"transition", transition}, {"center", {0.0, 0.0, -1.0}},
                         {"antipodal", false}}},
            {"cache_dir", ""}};
}

json common_defaults(const std::string& command) {
    return {{"command", command}, {"output_dir", ""}, {"seed", 0}};
}

json spectrum_defaults() {
    json j = common_defaults("spectrum");
    j["manifold"] = "sphere2";
    j["map"] = "rational:[0,1]/[1]";
    j["mesh"] = mesh_defaults(4, 1.0, 0.5);
    j["eigenpairs"] = 12;
    j["solver"] = solver_defaults();
    j["threshold"] = {{"policy", "pde"}, {"c_h", 0.5}, {"tau", 1e-8}};
    j["curvature_rule"] = "nodal";
    j["inertia_check"] = true;
    j["expect"] = {{"index", -1}, {"nullity", -1}};
    j["refinement"] = {{"levels", json::array()}, {"decrease", 2.0}, {"gap", 1.0}};
    j["conformal"] = {{"charts", json::array()}, {"tolerance", 0.02}};
    j["limits"] = {{"max_dof", 250000}};
    return j;
}

json bubble_defaults() {
    json j = common_defaults("bubble-run");
    j["family"] = "single";
    j["omega"] = "rational:[0,1]/[1]";
    j["center"] = {0.0, 0.0};
    j["centers"] = {{1.0, 0.0}, {-1.0, 0.0}};
    j["schedule"] = {{"base", 4.0}, {"k_min", 1}, {"k_max", 5}};
    j["mesh"] = {{"level", 5}, {"grading", {{"factor", 0.01}, {"transition", 2.0}}}, {"cache_dir", ""}};
    j["comparison_level"] = 4;
    j["bubble_mesh"] = {{"level", 4}};
    j["min_cells"] = 6.0;
    j["energy_tolerance"] = 0.02;
    j["threshold"] = {{"c_h", 0.5}};
    j["solver"] = solver_defaults();
    j["lower_bound"] = {{"enabled", true},
                        {"delta", 0.5},
                        {"tolerance", 0.05},
                        {"monotone_slack", 0.005},
                        {"sections", {"null", "positive", "mixed"}}};
    j["upper_bound"] = {{"enabled", true}, {"eigenpairs", 24}};
    j["accounting"] = {{"enabled", true},
                       {"mesh", {{"level", 6}, {"grading", {{"factor", 0.003}, {"transition", 1.0}}}, {"cache_dir", ""}}},
                       {"k_max", 5},
                       {"radii", {0.3, 0.2, 0.1, 0.05}},
                       {"neck_share_max", 0.05},
                       {"bubble_tolerance", 0.05},
                       {"sections", {{"count", 8}, {"radius", 0.1}}}};
    j["neck"] = {{"enabled", true}, {"scales", {1e-10, 1e-11, 1e-12}}, {"margin", 3.0}, {"min_exponent", 0.1}};
    j["limits"] = {{"max_dof", 250000}};
    return j;
}

json neck_defaults() {
    json j = common_defaults("neck-test");
    j["lengths"] = {8.0, 16.0, 32.0};
    j["nodes_per_unit"] = 16;
    j["n_theta"] = 16;
    j["growth_max"] = 2.0;
    j["min_exponent"] = 1.0 / 9.0;
    j["bubble"] = {{"lengths", {4.0, 6.0, 8.0}}, {"n_theta", 32}, {"margin", 3.0}, {"min_exponent", 0.1}};
    j["balance_tolerance"] = 0.01;
    return j;
}

json sylvester_defaults() {
    json j = common_defaults("sylvester-test");
    j["trials"] = 100;
    j["min_dim"] = 2;
    j["max_dim"] = 200;
    j["min_abs_eigenvalue"] = 0.1;
    j["tau"] = 1e-8;
    j["manifold"] = "sphere2";
    j["mesh"] = mesh_defaults(3, 1.0, 0.5);
    j["maps"] = {"rational:[0,1]/[1]", "constant:0,0,1", "rational:[0,0,1]/[1]"};
    j["c_h"] = 0.5;
    return j;
}

json embedding_defaults() {
    json j = common_defaults("embedding-test");
    j["manifold"] = "clifford";
    j["lambda"] = 2.0;
    j["frame"] = "coordinate";
    j["samples"] = 10000;
    j["required_constant"] = 1.0;
    j["isometry_samples"] = 1000;
    j["isometry_tolerance"] = 1e-10;
    j["energy_level"] = 2;
    j["energy_tolerance"] = 1e-12;
    j["iso"] = {{"enabled", true}, {"lambda", 4.0}, {"required_constant", 4.0 / 3.0}};
    return j;
}

/// Element type of arrays whose default is empty.
const std::map<std::string, json>& empty_array_elements() {
    static const std::map<std::string, json> m = {{"/refinement/levels", 0}, {"/conformal/charts", ""}};
    return m;
}

[[noreturn]] void config_error(const std::string& path, const std::string& msg) {
    throw ConfigError((path.empty() ? std::string("/") : path) + ": " + msg);
}

void validate(const json& user, const json& schema, const std::string& path) {
    if (schema.is_object()) {
        if (!user.is_object()) config_error(path, "expected an object");
        for (auto it = user.begin(); it != user.end(); ++it) {
            const std::string p = path + "/" + it.key();
            if (!schema.contains(it.key())) config_error(p, "unknown key");
            validate(it.value(), schema.at(it.key()), p);
        }
    } else if (schema.is_array()) {
        if (!user.is_array()) config_error(path, "expected an array");
        json element;
        if (!schema.empty())
            element = schema.front();
        else if (auto it = empty_array_elements().find(path); it != empty_array_elements().end())
            element = it->second;
        else
            return;
        for (std::size_t i = 0; i < user.size(); ++i) validate(user[i], element, path + "/" + std::to_string(i));
    } else if (schema.is_boolean()) {
        if (!user.is_boolean()) config_error(path, "expected a boolean");
    } else if (schema.is_number_integer()) {
        if (!user.is_number_integer()) config_error(path, "expected an integer");
    } else if (schema.is_number()) {
        if (!user.is_number()) config_error(path, "expected a number");
    } else if (schema.is_string()) {
        if (!user.is_string()) config_error(path, "expected a string");
    }
}

void require(bool ok, const std::string& path, const std::string& msg) {
    if (!ok) config_error(path, msg);
}

void require_one_of(const json& c, const std::string& path, std::initializer_list<const char*> options) {
    const std::string v = c.at(json::json_pointer(path)).get<std::string>();
    std::string list;
    for (const char* o : options) {
        if (v == o) return;
        list += (list.empty() ? "" : ", ") + std::string(o);
    }
    config_error(path, "expected one of " + list + ", got '" + v + "'");
}

template <class F>
auto with_path(const std::string& path, F&& f) {
    try {
        return f();
    } catch (const ConfigError& e) {
        config_error(path, e.what());
    }
}

ManifoldPtr manifold_at(const json& c, const std::string& path) {
    return with_path(path, [&] { return make_manifold(c.at(json::json_pointer(path)).get<std::string>()); });
}

void check_mesh(const json& c, const std::string& path, int max_level) {
    const json& m = c.at(json::json_pointer(path));
    require(m["level"].get<int>() >= 0 && m["level"].get<int>() <= max_level, path + "/level",
            "must lie in [0, " + std::to_string(max_level) + "]");
    if (m.contains("grading")) {
        const double g = m["grading"]["factor"].get<double>();
        require(g > 0.0 && g <= 1.0, path + "/grading/factor", "must lie in (0, 1]");
        require(m["grading"]["transition"].get<double>() > 0.0, path + "/grading/transition", "must be positive");
    }
}

void check_solver(const json& c) {
    require_one_of(c, "/solver/path", {"auto", "dense", "iterative"});
    require(c["solver"]["dense_limit"].get<int>() >= 0, "/solver/dense_limit", "must be non-negative");
    require(c["solver"]["tolerance"].get<double>() > 0.0, "/solver/tolerance", "must be positive");
    require(c["solver"]["max_iterations"].get<int>() > 0, "/solver/max_iterations", "must be positive");
    require(c["solver"]["shift"].get<double>() < -1.0, "/solver/shift", "must lie below -1");
}

void check_map_spec(const std::string& spec, const ManifoldPtr& target, const std::string& path) {
    static const auto probe = std::make_shared<const SurfaceMesh>(icosphere(0));
    with_path(path, [&] { return parse_map_spec(spec, probe, target); });
}

void check_semantics(const std::string& command, const json& c) {
    require(c["command"].get<std::string>() == command, "/command", "config is for '" +
            c["command"].get<std::string>() + "', not '" + command + "'");
    require(c["seed"].get<long long>() >= 0, "/seed", "must be non-negative");
    if (command == "spectrum") {
        const ManifoldPtr target = manifold_at(c, "/manifold");
        check_mesh(c, "/mesh", 7);
        check_map_spec(c["map"].get<std::string>(), target, "/map");
        require(c["eigenpairs"].get<int>() >= 1, "/eigenpairs", "must be positive");
        check_solver(c);
        require_one_of(c, "/threshold/policy", {"pde", "fixed"});
        require(c["threshold"]["c_h"].get<double>() > 0.0, "/threshold/c_h", "must be positive");
        require(c["threshold"]["tau"].get<double>() > 0.0, "/threshold/tau", "must be positive");
        require_one_of(c, "/curvature_rule", {"nodal", "quadrature"});
        for (std::size_t i = 0; i < c["refinement"]["levels"].size(); ++i) {
            const int l = c["refinement"]["levels"][i].get<int>();
            require(l >= 0 && l <= 7, "/refinement/levels/" + std::to_string(i), "must lie in [0, 7]");
        }
        require(c["refinement"]["decrease"].get<double>() > 1.0, "/refinement/decrease", "must exceed 1");
        for (std::size_t i = 0; i < c["conformal"]["charts"].size(); ++i)
            with_path("/conformal/charts/" + std::to_string(i),
                      [&] { return parse_chart_spec(c["conformal"]["charts"][i].get<std::string>()); });
        require(c["limits"]["max_dof"].get<long long>() > 0, "/limits/max_dof", "must be positive");
    } else if (command == "bubble-run") {
        require_one_of(c, "/family", {"single", "two-bubble"});
        check_mesh(c, "/mesh", 7);
        check_mesh(c, "/bubble_mesh", 7);
        check_mesh(c, "/accounting/mesh", 7);
        require(c["comparison_level"].get<int>() >= -1 && c["comparison_level"].get<int>() <= 7, "/comparison_level",
                "must be -1 (off) or a level in [0, 7]");
        check_map_spec(c["omega"].get<std::string>(), make_manifold("sphere2"), "/omega");
        require(c["center"].size() == 2, "/center", "expected [re, im]");
        require(c["centers"].size() == 2, "/centers", "expected two centres");
        for (int i = 0; i < 2; ++i)
            require(c["centers"][i].size() == 2, "/centers/" + std::to_string(i), "expected [re, im]");
        require(c["schedule"]["base"].get<double>() > 1.0, "/schedule/base", "must exceed 1");
        require(c["schedule"]["k_min"].get<int>() >= 0, "/schedule/k_min", "must be non-negative");
        require(c["schedule"]["k_max"].get<int>() >= c["schedule"]["k_min"].get<int>(), "/schedule/k_max",
                "must be at least k_min");
        require(c["accounting"]["k_max"].get<int>() >= c["schedule"]["k_min"].get<int>(), "/accounting/k_max",
                "must be at least /schedule/k_min");
        const double delta = c["lower_bound"]["delta"].get<double>();
        require(delta > 0.0 && delta < 1.0, "/lower_bound/delta", "must lie in (0, 1)");
        for (std::size_t i = 0; i < c["lower_bound"]["sections"].size(); ++i)
            require_one_of(c, "/lower_bound/sections/" + std::to_string(i), {"null", "positive", "mixed"});
        require(c["upper_bound"]["eigenpairs"].get<int>() >= 1, "/upper_bound/eigenpairs", "must be positive");
        for (std::size_t i = 0; i < c["accounting"]["radii"].size(); ++i) {
            const double r = c["accounting"]["radii"][i].get<double>();
            require(r > 0.0 && r < 2.0, "/accounting/radii/" + std::to_string(i), "must lie in (0, 2)");
        }
        for (std::size_t i = 0; i < c["neck"]["scales"].size(); ++i) {
            const double r = c["neck"]["scales"][i].get<double>();
            require(r > 0.0 && r < 1.0, "/neck/scales/" + std::to_string(i), "must lie in (0, 1)");
            if (c["neck"]["enabled"].get<bool>())
                require(BubbleSequence::neck_half_length(r, c["neck"]["margin"].get<double>()) >= 2.0,
                        "/neck/scales/" + std::to_string(i), "neck half-length log(1/r)/4 - margin is below 2");
            // the chart's inner circle |z - p| = r e^margin must stay above roundoff around p
            double reach = std::hypot(c["center"][0].get<double>(), c["center"][1].get<double>());
            if (c["family"].get<std::string>() == "two-bubble")
                for (int s = 0; s < 2; ++s)
                    reach = std::max(reach, std::hypot(c["centers"][s][0].get<double>(), c["centers"][s][1].get<double>()));
            if (c["neck"]["enabled"].get<bool>())
                require(r * std::exp(c["neck"]["margin"].get<double>()) >= 1e-12 * std::max(1.0, reach),
                        "/neck/scales/" + std::to_string(i),
                        "scale is below the double-precision floor of the neck chart about its centre");
        }
        check_solver(c);
        require(c["threshold"]["c_h"].get<double>() > 0.0, "/threshold/c_h", "must be positive");
        require(c["limits"]["max_dof"].get<long long>() > 0, "/limits/max_dof", "must be positive");
    } else if (command == "neck-test") {
        for (std::size_t i = 0; i < c["lengths"].size(); ++i)
            require(c["lengths"][i].get<double>() >= 2.0, "/lengths/" + std::to_string(i), "must be at least 2");
        for (std::size_t i = 0; i < c["bubble"]["lengths"].size(); ++i)
            require(c["bubble"]["lengths"][i].get<double>() >= 2.0, "/bubble/lengths/" + std::to_string(i),
                    "must be at least 2");
        require(c["nodes_per_unit"].get<int>() >= 2, "/nodes_per_unit", "must be at least 2");
        require(c["n_theta"].get<int>() >= 4 && c["n_theta"].get<int>() % 2 == 0, "/n_theta",
                "must be even and at least 4");
        require(c["bubble"]["n_theta"].get<int>() >= 4 && c["bubble"]["n_theta"].get<int>() % 2 == 0,
                "/bubble/n_theta", "must be even and at least 4");
    } else if (command == "sylvester-test") {
        require(c["trials"].get<int>() >= 0, "/trials", "must be non-negative");
        require(c["min_dim"].get<int>() >= 1, "/min_dim", "must be positive");
        require(c["max_dim"].get<int>() >= c["min_dim"].get<int>(), "/max_dim", "must be at least min_dim");
        require(c["min_abs_eigenvalue"].get<double>() > 0.0, "/min_abs_eigenvalue", "must be positive");
        const ManifoldPtr target = manifold_at(c, "/manifold");
        check_mesh(c, "/mesh", 5);
        for (std::size_t i = 0; i < c["maps"].size(); ++i)
            check_map_spec(c["maps"][i].get<std::string>(), target, "/maps/" + std::to_string(i));
    } else if (command == "embedding-test") {
        manifold_at(c, "/manifold");
        require_one_of(c, "/frame", {"coordinate", "isotropic"});
        require(c["lambda"].get<double>() > 0.0, "/lambda", "must be positive");
        require(c["iso"]["lambda"].get<double>() > 0.0, "/iso/lambda", "must be positive");
        require(c["samples"].get<int>() >= 1, "/samples", "must be positive");
        require(c["isometry_samples"].get<int>() >= 1, "/isometry_samples", "must be positive");
        require(c["energy_level"].get<int>() >= 0 && c["energy_level"].get<int>() <= 5, "/energy_level",
                "must lie in [0, 5]");
    }
}

// ------------------------------------------------------------------ helpers

std::string num(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", x);
    return buf;
}

Assertion make_assertion(std::string name, Status s, std::string detail, json data = json::object()) {
    return {std::move(name), s, std::move(detail), std::move(data)};
}

Status pass_if(bool ok) { return ok ? Status::pass : Status::fail; }

SolveOptions solve_options(const json& s, std::uint64_t seed) {
    SolveOptions o;
    const std::string path = s["path"].get<std::string>();
    o.path = path == "dense" ? SolverPath::dense : path == "iterative" ? SolverPath::iterative : SolverPath::automatic;
    o.dense_limit = s["dense_limit"].get<int>();
    o.tolerance = s["tolerance"].get<double>();
    o.max_iterations = s["max_iterations"].get<int>();
    o.shift = s["shift"].get<double>();
    o.seed = seed;
    return o;
}

std::optional<MeshGrading> grading_of(const json& g, std::optional<Eigen::Vector3d> center = {}, bool antipodal = false) {
    MeshGrading out;
    out.factor = g["factor"].get<double>();
    out.transition = g["transition"].get<double>();
    if (center) {
        out.center = *center;
        out.antipodal = antipodal;
    } else {
        out.center = Eigen::Vector3d(g["center"][0].get<double>(), g["center"][1].get<double>(),
                                     g["center"][2].get<double>());
        const double n = out.center.norm();
        if (!(n > 0.0)) config_error("/mesh/grading/center", "must be non-zero");
        out.center /= n;
        out.antipodal = g["antipodal"].get<bool>();
    }
    if (out.factor == 1.0) return std::nullopt;
    return out;
}

std::shared_ptr<const SurfaceMesh> build_mesh(int level, const std::optional<MeshGrading>& grading,
                                              const std::string& cache_dir) {
    if (!cache_dir.empty()) return std::make_shared<const SurfaceMesh>(cached_icosphere(level, grading, cache_dir));
    return std::make_shared<const SurfaceMesh>(grading ? icosphere(level, *grading) : icosphere(level));
}

void check_dof(long long dof, const json& c, const std::string& what) {
    const long long limit = c["limits"]["max_dof"].get<long long>();
    if (dof > limit)
        throw ResourceLimit(what + " has " + std::to_string(dof) + " degrees of freedom, above /limits/max_dof = " +
                            std::to_string(limit));
}

std::string out_file(const fs::path& dir, const std::string& name) { return (dir / name).string(); }

void write_json_file(const fs::path& dir, const std::string& name, const json& j) {
    write_file_atomic(out_file(dir, name), j.dump(2) + "\n");
}

/// Writes rows of a CSV; every value goes through the same formatting.
class CsvTable {
public:
    explicit CsvTable(std::string header) { out_ << header << "\n"; out_.precision(12); }
    template <class... T>
    void row(const T&... values) {
        bool first = true;
        ((out_ << (first ? "" : ",") << values, first = false), ...);
        out_ << "\n";
    }
    std::string str() const { return out_.str(); }

private:
    std::ostringstream out_;
};

// ------------------------------------------------------------------ spectrum

struct LevelSpectrum {
    int level = 0;
    double h = 0.0;
    double energy = 0.0;
    SpectrumReport report;
    std::optional<Classification> mass_inertia;  ///< classification against B2 = M0
};

LevelSpectrum spectrum_at(const json& c, int level, const ManifoldPtr& target) {
    const std::uint64_t seed = c["seed"].get<std::uint64_t>();
    const auto mesh = build_mesh(level, grading_of(c["mesh"]["grading"]), c["mesh"]["cache_dir"].get<std::string>());
    const MapField u = parse_map_spec(c["map"].get<std::string>(), mesh, target);
    check_dof(static_cast<long long>(target->intrinsic_dim()) * mesh->vertex_count(), c,
              "level " + std::to_string(level) + " mesh");
    const CurvatureRule rule =
        c["curvature_rule"].get<std::string>() == "quadrature" ? CurvatureRule::quadrature : CurvatureRule::nodal;
    const AssembledForms f = assemble(u, rule);
    const SolveOptions opts = solve_options(c["solver"], seed);
    const int k = std::min(c["eigenpairs"].get<int>(), f.dof());
    const double tau = c["threshold"]["policy"].get<std::string>() == "pde"
                           ? pde_threshold(mesh->h, c["threshold"]["c_h"].get<double>())
                           : c["threshold"]["tau"].get<double>();
    LevelSpectrum out;
    out.level = level;
    out.h = mesh->h;
    out.energy = dirichlet_energy(u);
    out.report = solve(f.index_form(), f.scalar_product(), k, opts);
    classify(out.report, tau);
    if (c["inertia_check"].get<bool>()) {
        SpectrumReport m = solve(f.index_form(), f.M0, k, opts);
        out.mass_inertia = classify(m, tau);
    }
    return out;
}

void run_spectrum(const json& c, const fs::path& out, RunResult& res) {
    const ManifoldPtr target = manifold_at(c, "/manifold");
    const int main_level = c["mesh"]["level"].get<int>();
    std::vector<int> levels = c["refinement"]["levels"].get<std::vector<int>>();
    std::sort(levels.begin(), levels.end());
    levels.erase(std::unique(levels.begin(), levels.end()), levels.end());

    std::map<int, LevelSpectrum> spectra;
    spectra.emplace(main_level, spectrum_at(c, main_level, target));
    for (int l : levels)
        if (!spectra.count(l)) spectra.emplace(l, spectrum_at(c, l, target));
    const LevelSpectrum& main = spectra.at(main_level);
    const Classification& cls = main.report.classification;

    // a priori bounds over every computed spectrum
    double lowest = std::numeric_limits<double>::infinity(), worst_identity = 0.0, worst_w12 = -1.0,
           worst_residual = 0.0, worst_normalization = 0.0;
    for (const auto& [level, s] : spectra) {
        const SpectrumReport& r = s.report;
        for (int j = 0; j < r.eigenvalues.size(); ++j) {
            const double lambda = r.eigenvalues[j];
            const PairDiagnostics& p = r.pairs[j];
            lowest = std::min(lowest, lambda);
            const double scale = (1.0 + std::abs(lambda)) * p.normalization;
            worst_identity = std::max(worst_identity, std::abs(p.w12 - (1.0 + lambda) * p.normalization) / scale);
            worst_w12 = std::max(worst_w12, p.w12 / scale - 1.0);
            worst_normalization = std::max(worst_normalization, std::abs(p.normalization - 1.0));
        }
        worst_residual = std::max(worst_residual, r.max_residual / r.b_norm);
    }
    res.assertions.push_back(make_assertion("eigenvalue_lower_bound", pass_if(lowest >= -1.0 - 1e-8),
                                            "smallest eigenvalue " + num(lowest) + " against -1 - 1e-8",
                                            {{"lowest", lowest}}));
    res.assertions.push_back(make_assertion(
        "w12_identity", pass_if(worst_identity <= 1e-8),
        "max relative |x(K+M0)x - (1+lambda)xBx| = " + num(worst_identity), {{"max_relative", worst_identity}}));
    res.assertions.push_back(make_assertion(
        "w12_bound", pass_if(worst_w12 <= 1e-8 && worst_normalization <= 1e-8),
        "max x(K+M0)x / (1+|lambda|) - 1 = " + num(worst_w12) + " for B-normalized pairs (|xBx - 1| <= " +
            num(worst_normalization) + ")",
        {{"max_excess", worst_w12}, {"max_normalization_error", worst_normalization}}));
    res.assertions.push_back(make_assertion("residuals", pass_if(worst_residual <= 1e-8),
                                            "max residual / |B| = " + num(worst_residual),
                                            {{"max_relative_residual", worst_residual}}));

    {
        Status s = Status::pass;
        std::string detail = "index " + std::to_string(cls.index) + ", nullity " + std::to_string(cls.nullity) +
                             " at tau " + num(cls.tau);
        if (cls.ambiguous) {
            s = Status::ambiguous;
            detail += "; eigenvalues within 1e-3 tau of tau";
        }
        if (!cls.complete) {
            s = Status::ambiguous;
            detail += "; every computed eigenvalue is at or below tau, raise /eigenpairs";
        }
        res.assertions.push_back(make_assertion("classification", s, detail, to_json(cls)));
    }

    if (c["inertia_check"].get<bool>()) {
        Status s = Status::pass;
        json rows = json::array();
        std::string detail;
        for (const auto& [level, ls] : spectra) {
            const Classification& a = ls.report.classification;
            const Classification& b = *ls.mass_inertia;
            rows.push_back({{"level", level},
                            {"index", a.index},
                            {"nullity", a.nullity},
                            {"index_mass", b.index},
                            {"nullity_mass", b.nullity}});
            detail += (detail.empty() ? "" : "; ") + std::string("level ") + std::to_string(level) + ": (" +
                      std::to_string(a.index) + "," + std::to_string(a.nullity) + ") vs (" + std::to_string(b.index) +
                      "," + std::to_string(b.nullity) + ")";
            if (a.index != b.index || a.nullity != b.nullity) s = Status::fail;
            if (s == Status::pass && (!a.complete || !b.complete)) s = Status::ambiguous;
        }
        res.assertions.push_back(make_assertion("sylvester_invariance", s, detail, {{"levels", rows}}));
    }

    const int want_index = c["expect"]["index"].get<int>();
    const int want_nullity = c["expect"]["nullity"].get<int>();
    if (want_index >= 0 || want_nullity >= 0) {
        bool ok = true;
        std::string detail;
        for (const auto& [level, ls] : spectra) {
            const Classification& a = ls.report.classification;
            if (want_index >= 0 && a.index != want_index) ok = false;
            if (want_nullity >= 0 && a.nullity != want_nullity) ok = false;
            detail += (detail.empty() ? "" : "; ") + std::string("level ") + std::to_string(level) + ": (" +
                      std::to_string(a.index) + "," + std::to_string(a.nullity) + ")";
        }
        detail += " against expected (" + std::to_string(want_index) + "," + std::to_string(want_nullity) + ")";
        res.assertions.push_back(make_assertion("expected_inertia", pass_if(ok), detail));
    }

    json refinement = json::array();
    CsvTable table("level,h,tau,index,nullity,near_null_max,gap_eigenvalue");
    if (levels.size() >= 2) {
        const Classification& finest = spectra.at(levels.back()).report.classification;
        const int n = want_nullity >= 0 ? want_nullity : finest.nullity;
        const double factor = c["refinement"]["decrease"].get<double>();
        const double gap = c["refinement"]["gap"].get<double>();
        bool decrease_ok = true, gap_ok = true, sizes_ok = true;
        std::vector<std::vector<double>> near(levels.size());
        std::vector<double> gap_values;
        for (std::size_t i = 0; i < levels.size(); ++i) {
            const SpectrumReport& r = spectra.at(levels[i]).report;
            const Classification& a = r.classification;
            std::vector<double> mags(r.eigenvalues.data(), r.eigenvalues.data() + r.eigenvalues.size());
            for (double& m : mags) m = std::abs(m);
            std::sort(mags.begin(), mags.end());
            const int idx = a.index + n;
            if (static_cast<int>(mags.size()) <= n || idx >= r.eigenvalues.size()) {
                sizes_ok = false;
                continue;
            }
            near[i].assign(mags.begin(), mags.begin() + n);
            gap_values.push_back(r.eigenvalues[idx]);
            if (r.eigenvalues[idx] < gap) gap_ok = false;
            table.row(levels[i], spectra.at(levels[i]).h, a.tau, a.index, a.nullity, n > 0 ? near[i].back() : 0.0,
                      r.eigenvalues[idx]);
            refinement.push_back({{"level", levels[i]},
                                  {"h", spectra.at(levels[i]).h},
                                  {"tau", a.tau},
                                  {"index", a.index},
                                  {"nullity", a.nullity},
                                  {"near_null", near[i]},
                                  {"gap_eigenvalue", r.eigenvalues[idx]}});
        }
        double worst_ratio = std::numeric_limits<double>::infinity();
        for (std::size_t i = 1; sizes_ok && i < levels.size(); ++i)
            for (int j = 0; j < n; ++j) {
                const double prev = near[i - 1][j], cur = near[i][j];
                if (prev < 1e-12 && cur < 1e-12) continue;  // exact zero modes of the discrete problem
                const double ratio = prev / std::max(cur, 1e-300);
                worst_ratio = std::min(worst_ratio, ratio);
                if (ratio < factor) decrease_ok = false;
            }
        const Status ds = !sizes_ok ? Status::ambiguous : pass_if(decrease_ok);
        res.assertions.push_back(make_assertion(
            "refinement_near_null_decrease", ds,
            std::isfinite(worst_ratio)
                ? "the " + std::to_string(n) + " smallest |lambda| shrink by at least " + num(worst_ratio) +
                      "x per level (required " + num(factor) + "x)"
                : "the " + std::to_string(n) + " smallest |lambda| are exact zeros (< 1e-12) at every level",
            {{"worst_ratio", std::isfinite(worst_ratio) ? json(worst_ratio) : json(nullptr)}}));
        double min_gap = gap_values.empty() ? 0.0 : *std::min_element(gap_values.begin(), gap_values.end());
        res.assertions.push_back(make_assertion(
            "refinement_gap", !sizes_ok ? Status::ambiguous : pass_if(gap_ok),
            "first eigenvalue above the near-null cluster is at least " + num(min_gap) + " at every level (gap " +
                num(gap) + ")",
            {{"values", gap_values}}));
        write_file_atomic(out_file(out, "refinement.csv"), table.str());
    }

    json conformal = json::array();
    if (!c["conformal"]["charts"].empty()) {
        const double tol = c["conformal"]["tolerance"].get<double>();
        const auto mesh = build_mesh(main_level, grading_of(c["mesh"]["grading"]), c["mesh"]["cache_dir"]);
        const MapField u = parse_map_spec(c["map"].get<std::string>(), mesh, target);
        const double e0 = dirichlet_energy(u);
        CsvTable ct("chart,energy,relative_change");
        double worst = 0.0;
        for (const auto& spec : c["conformal"]["charts"]) {
            const ConformalChart m = parse_chart_spec(spec.get<std::string>());
            const double e = dirichlet_energy(compose(u, m));
            const double rel = e0 > 1e-12 ? std::abs(e - e0) / e0 : std::abs(e - e0);
            worst = std::max(worst, rel);
            ct.row("\"" + spec.get<std::string>() + "\"", e, rel);
            conformal.push_back({{"chart", spec}, {"energy", e}, {"relative_change", rel}});
        }
        res.assertions.push_back(make_assertion(
            "conformal_energy", pass_if(worst <= tol),
            "max |E(u o m) - E(u)| / E(u) = " + num(worst) + " over " +
                std::to_string(c["conformal"]["charts"].size()) + " charts (tolerance " + num(tol) + ")",
            {{"max_relative_change", worst}}));
        write_file_atomic(out_file(out, "conformal.csv"), ct.str());
    }

    write_atomic(out_file(out, "eigenvalues.csv"), [&](const std::string& p) { write_eigen_csv(main.report, p); });
    json spec_json = to_json(main.report);
    spec_json["level"] = main_level;
    spec_json["h"] = main.h;
    spec_json["energy"] = main.energy;
    write_json_file(out, "spectrum.json", spec_json);

    std::vector<double> eig(main.report.eigenvalues.data(), main.report.eigenvalues.data() + main.report.eigenvalues.size());
    res.results = {{"level", main_level},
                   {"h", main.h},
                   {"tau", cls.tau},
                   {"dof", main.report.dof},
                   {"solver", main.report.solver},
                   {"energy", main.energy},
                   {"index", cls.index},
                   {"nullity", cls.nullity},
                   {"eigenvalues", eig},
                   {"refinement", refinement},
                   {"conformal", conformal}};
}

// ------------------------------------------------------------------ bubble-run

cplx complex_at(const json& a) { return {a[0].get<double>(), a[1].get<double>()}; }

SphereMap omega_of(const json& c) {
    static const auto probe = std::make_shared<const SurfaceMesh>(icosphere(0));
    const MapField f = parse_map_spec(c["omega"].get<std::string>(), probe, make_manifold("sphere2"));
    if (!f.family) config_error("/omega", "must be a rational map (optionally composed with a chart)");
    return *f.family;
}

struct Family {
    bool two = false;
    SphereMap omega{{0.0, 1.0}, {1.0}};
    cplx p1 = 0.0, p2 = 0.0;

    std::optional<MeshGrading> grading(const json& g) const {
        const Eigen::Vector3d center = inverse_stereographic(p1);
        return grading_of(g, center, two);
    }
    BubbleSequence sequence(const std::vector<double>& scales, std::shared_ptr<const SurfaceMesh> mesh,
                            double min_cells) const {
        const ManifoldPtr n = make_manifold("sphere2");
        return two ? make_two_bubble_sequence(p1, p2, scales, std::move(mesh), n, min_cells)
                   : make_sequence(omega, scales, p1, std::move(mesh), n, min_cells);
    }
};

Family family_of(const json& c) {
    Family f;
    if (c["family"].get<std::string>() == "two-bubble") {
        f.two = true;
        f.p1 = complex_at(c["centers"][0]);
        f.p2 = complex_at(c["centers"][1]);
        // the graded mesh refines about p1 and its antipode -1/conj(p1)
        require(std::abs(f.p1) > 0.0 && std::abs(f.p2 + 1.0 / std::conj(f.p1)) <= 1e-12 * (1.0 + std::abs(f.p2)),
                "/centers", "the two centres must be antipodal, p2 = -1/conj(p1)");
    } else {
        f.omega = omega_of(c);
        f.p1 = complex_at(c["center"]);
    }
    return f;
}

std::shared_ptr<const SurfaceMesh> family_mesh(const Family& fam, const json& m, int level) {
    return build_mesh(level, fam.grading(m["grading"]), m["cache_dir"].get<std::string>());
}

void run_bubble(const json& c, const fs::path& out, RunResult& res) {
    const Family fam = family_of(c);
    const ManifoldPtr n = make_manifold("sphere2");
    const std::uint64_t seed = c["seed"].get<std::uint64_t>();
    const SolveOptions opts = solve_options(c["solver"], seed);
    const double c_h = c["threshold"]["c_h"].get<double>();
    const double min_cells = c["min_cells"].get<double>();
    const auto& sched = c["schedule"];
    const std::vector<double> scales =
        geometric_schedule(sched["base"].get<double>(), sched["k_min"].get<int>(), sched["k_max"].get<int>());

    const auto mesh = family_mesh(fam, c["mesh"], c["mesh"]["level"].get<int>());
    check_dof(2LL * mesh->vertex_count(), c, "sequence mesh");
    BubbleSequence seq = fam.sequence(scales, mesh, min_cells);
    for (auto& e : seq.entries) e.k += sched["k_min"].get<int>() - 1;  // schedule starts at k_min
    const auto bubble_mesh = std::make_shared<const SurfaceMesh>(icosphere(c["bubble_mesh"]["level"].get<int>()));
    std::shared_ptr<const SurfaceMesh> comparison;
    if (c["comparison_level"].get<int>() >= 0) comparison = family_mesh(fam, c["mesh"], c["comparison_level"].get<int>());

    json results;
    results["sequence"] = to_json(seq);
    write_atomic(out_file(out, "sequence.csv"), [&](const std::string& p) { write_sequence_csv(seq, p); });

    // sequence: energy and resolution
    {
        const std::vector<int> resolved = seq.resolved_entries();
        const double e_omega = seq.bubble_energy();
        double worst = 0.0;
        for (int e : resolved) worst = std::max(worst, std::abs(seq.entries[e].energy - e_omega) / e_omega);
        std::string truncated;
        for (const auto& e : seq.entries)
            if (!e.resolved) truncated += (truncated.empty() ? "" : ", ") + std::to_string(e.k);
        res.assertions.push_back(make_assertion(
            "sequence_resolved", resolved.empty() ? Status::fail : Status::pass,
            std::to_string(resolved.size()) + " of " + std::to_string(seq.entries.size()) + " scales resolved" +
                (truncated.empty() ? "" : "; truncated k = " + truncated),
            {{"warnings", seq.warnings}}));
        res.assertions.push_back(make_assertion(
            "energy_conformal_invariance",
            resolved.empty() ? Status::ambiguous : pass_if(worst <= c["energy_tolerance"].get<double>()),
            "max |E(u_k) - E(bubbles)| / E(bubbles) = " + num(worst) + " over resolved k",
            {{"max_relative_deviation", worst}}));
        if (comparison) {
            bool ok = true;
            int compared = 0;
            json rows = json::array();
            for (int e : resolved) {
                if (bubble_cells(seq, seq.entries[e].scale, *comparison) < min_cells) continue;
                const double fine = harmonic_residual(seq.sampled(e));
                const double coarse = harmonic_residual(sample_map(*seq.entries[e].map, comparison, n));
                rows.push_back({{"k", seq.entries[e].k}, {"coarse", coarse}, {"fine", fine}});
                ++compared;
                if (!(fine < coarse)) ok = false;
            }
            res.assertions.push_back(make_assertion(
                "harmonic_residual_refinement", compared == 0 ? Status::ambiguous : pass_if(ok),
                "harmonic residual decreases from level " + std::to_string(c["comparison_level"].get<int>()) +
                    " to level " + std::to_string(c["mesh"]["level"].get<int>()) + " at " + std::to_string(compared) +
                    " scales",
                {{"rows", rows}}));
        }
    }

    // lower bound: transferred sections
    if (c["lower_bound"]["enabled"].get<bool>() && !seq.resolved_entries().empty()) {
        const double delta = c["lower_bound"]["delta"].get<double>();
        LowerBoundOptions lo;
        lo.bubble_mesh = bubble_mesh;
        lo.tolerance = c["lower_bound"]["tolerance"].get<double>();
        lo.monotone_slack = c["lower_bound"]["monotone_slack"].get<double>();
        lo.compute_index = false;
        lo.solve = opts;
        lo.c_h = c_h;

        Mat base;
        auto positive_base = [&]() -> const Mat& {
            if (base.size() == 0) {
                const AssembledForms f0 = assemble(seq.limit());
                const SpectrumReport s0 = solve(f0.index_form(), f0.scalar_product(), 4, opts);
                // columns 0, 1 span the constant null directions; 2 is the first positive eigen-section
                base = f0.basis->to_ambient(s0.eigenvectors.col(2));
            }
            return base;
        };
        auto jacobi = [&](cplx c0, cplx c1) {
            std::vector<BubbleField> z;
            for (const auto& site : seq.bubbles)
                z.push_back(normalize_bubble_field(site.omega, jacobi_field(site.omega, c0, c1, 0.0), delta,
                                                   bubble_mesh, n));
            return z;
        };
        json lower = json::object();
        CsvTable table("section,k,scale,lhs,rhs,gap,disjoint");
        for (const auto& name_j : c["lower_bound"]["sections"]) {
            const std::string name = name_j.get<std::string>();
            TransferPlan plan;
            plan.delta = delta;
            if (name == "null") plan.bubble = jacobi(1.0, 0.0);
            if (name == "positive") plan.base = positive_base();
            if (name == "mixed") {
                plan.base = positive_base();
                plan.bubble = jacobi(0.0, cplx(0.0, 1.0));
            }
            const LowerBoundReport r = verify_lower_bound(seq, plan, lo);
            for (const auto& row : r.rows) table.row(name, row.k, row.scale, row.lhs, r.rhs, row.gap, row.disjoint);
            lower[name] = to_json(r);
            const bool any_disjoint =
                std::any_of(r.rows.begin(), r.rows.end(), [](const LowerBoundRow& row) { return row.disjoint; });
            res.assertions.push_back(make_assertion(
                "lower_bound_" + name, !any_disjoint ? Status::ambiguous : pass_if(r.pass),
                "gap " + num(r.final_gap) + " at the largest resolved k with disjoint supports (tolerance " +
                    num(lo.tolerance) + "), rhs " + num(r.rhs),
                {{"final_gap", any_disjoint ? json(r.final_gap) : json(nullptr)}, {"rhs", r.rhs}}));
            res.assertions.push_back(make_assertion(
                "lower_bound_" + name + "_monotone", r.rows.size() < 3 ? Status::ambiguous : pass_if(r.monotone),
                "gaps non-increasing in k beyond the first resolved scale (slack " + num(lo.monotone_slack) + ")"));
        }
        results["lower_bound"] = lower;
        write_file_atomic(out_file(out, "lower_bound.csv"), table.str());
    }

    // upper bound and index inequality
    if (c["upper_bound"]["enabled"].get<bool>() && !seq.resolved_entries().empty()) {
        UpperBoundOptions uo;
        uo.bubble_mesh = bubble_mesh;
        uo.comparison_mesh = comparison;
        uo.min_cells = min_cells;
        uo.eigenpairs = c["upper_bound"]["eigenpairs"].get<int>();
        uo.solve = opts;
        uo.c_h = c_h;
        const UpperBoundReport r = verify_upper_bound(seq, uo);
        results["upper_bound"] = to_json(r);
        write_atomic(out_file(out, "upper_bound.csv"), [&](const std::string& p) { write_upper_bound_csv(r, p); });

        std::vector<const UpperBoundRow*> included;
        for (const auto& row : r.rows)
            if (row.included) included.push_back(&row);
        const bool sides_ambiguous =
            r.limit.ambiguous || std::any_of(r.bubbles.begin(), r.bubbles.end(), [](auto& b) { return b.ambiguous; });

        std::string rows_text;
        for (const auto* row : included)
            rows_text += (rows_text.empty() ? "" : ", ") + std::string("k=") + std::to_string(row->k) + ": " +
                         std::to_string(row->lhs);
        Status us = r.pass ? Status::pass : Status::fail;
        if (!r.pass && (included.empty() || sides_ambiguous)) us = Status::ambiguous;
        for (const auto* row : included)
            if (!row->holds) us = Status::fail;
        res.assertions.push_back(make_assertion(
            "index_nullity_upper_bound", us,
            "Ind+Nul(u_k) {" + rows_text + "} <= rhs " + std::to_string(r.rhs) + " (limit (" +
                std::to_string(r.limit.index) + "," + std::to_string(r.limit.nullity) + "))",
            {{"rhs", r.rhs},
             {"lhs", [&] {
                  json a = json::array();
                  for (const auto* row : included) a.push_back(row->lhs);
                  return a;
              }()}}));

        int rhs_index = r.limit.index;
        for (const auto& b : r.bubbles) rhs_index += b.index;
        bool index_ok = true;
        for (const auto* row : included)
            if (row->coarse.index < rhs_index) index_ok = false;
        res.assertions.push_back(make_assertion(
            "index_lower_bound", included.empty() || sides_ambiguous ? Status::ambiguous : pass_if(index_ok),
            "Ind(u_0) + sum Ind(bubbles) = " + std::to_string(rhs_index) + " <= Ind(u_k) at every included k"));

        bool constant = true;
        for (const auto* row : included)
            if (row->coarse.index != included.front()->coarse.index ||
                row->coarse.nullity != included.front()->coarse.nullity)
                constant = false;
        res.assertions.push_back(make_assertion(
            "inertia_constant_in_k", included.size() < 2 ? Status::ambiguous : pass_if(constant && r.cross_check),
            std::string("(Ind, Nul)(u_k) ") + (constant ? "constant" : "varies") + " over " +
                std::to_string(included.size()) + " refinement-checked scales" +
                (seq.bubbles.size() == 1 ? std::string(r.cross_check ? ", equal to the bubble's"
                                                                      : ", differs from the bubble's")
                                         : std::string())));

        bool bounds = r.limit.bounds_ok && r.limit.lowest >= -1.0 - 1e-8;
        double lowest = r.limit.lowest;
        auto take = [&](const InertiaCount& x) {
            bounds = bounds && x.bounds_ok && x.lowest >= -1.0 - 1e-8;
            lowest = std::min(lowest, x.lowest);
        };
        for (const auto& b : r.bubbles) take(b);
        for (const auto& row : r.rows) {
            take(row.coarse);
            if (row.comparison) take(*row.comparison);
        }
        res.assertions.push_back(make_assertion(
            "apriori_bounds", pass_if(bounds),
            "every computed pair has lambda >= -1 (smallest " + num(lowest) +
                ") and x(K+M0)x = (1+lambda)xBx <= 1+|lambda| to 1e-8",
            {{"lowest", lowest}}));
    }

    // energy accounting
    if (c["accounting"]["enabled"].get<bool>()) {
        const json& a = c["accounting"];
        const auto amesh = family_mesh(fam, a["mesh"], a["mesh"]["level"].get<int>());
        const std::vector<double> ascales =
            geometric_schedule(sched["base"].get<double>(), sched["k_min"].get<int>(), a["k_max"].get<int>());
        BubbleSequence aseq = fam.sequence(ascales, amesh, min_cells);
        for (auto& e : aseq.entries) e.k += sched["k_min"].get<int>() - 1;
        const int last = aseq.last_resolved();
        std::vector<AccountingReport> rows;
        if (last >= 0) {
            for (int e : aseq.resolved_entries())
                for (const auto& rad : a["radii"]) rows.push_back(energy_accounting(aseq, e, rad.get<double>()));
        }
        json acc = json::object();
        acc["k_max_resolved"] = last >= 0 ? json(aseq.entries[last].k) : json(nullptr);
        acc["rows"] = json::array();
        double worst_partition = 0.0;
        for (const auto& r : rows) {
            acc["rows"].push_back(to_json(r));
            worst_partition = std::max(worst_partition, r.energy.partition_error());
        }
        // (largest resolved k, smallest radius whose regions do not overlap)
        const AccountingReport* pick = nullptr;
        std::vector<const AccountingReport*> at_last;
        for (const auto& r : rows)
            if (last >= 0 && r.k == aseq.entries[last].k && !r.overlap) {
                at_last.push_back(&r);
                if (!pick || r.radius < pick->radius) pick = &r;
            }

        // eigen-section shares on the sequence mesh at its largest resolved k
        const int scount = a["sections"]["count"].get<int>();
        double worst_section_partition = 0.0;
        if (scount > 0 && seq.last_resolved() >= 0) {
            const AccountingReport sr =
                energy_accounting(seq, seq.last_resolved(), a["sections"]["radius"].get<double>(), scount, opts);
            acc["sections"] = to_json(sr);
            for (const auto& s : sr.sections) {
                const double scale = std::abs(s.base) + std::abs(s.bubble) + std::abs(s.neck) + 1.0;
                worst_section_partition = std::max(worst_section_partition, s.partition_error() / scale);
            }
            worst_partition = std::max(worst_partition, sr.energy.partition_error());
        }
        results["accounting"] = acc;
        write_atomic(out_file(out, "accounting.csv"), [&](const std::string& p) { write_accounting_csv(rows, p); });

        res.assertions.push_back(make_assertion(
            "accounting_partition",
            rows.empty() ? Status::ambiguous : pass_if(worst_partition <= 1e-10 && worst_section_partition <= 1e-10),
            "max |base + bubble + neck - total| = " + num(worst_partition) + " (energy), " +
                num(worst_section_partition) + " (eigen-sections, relative)"));
        if (!pick) {
            res.assertions.push_back(make_assertion("accounting_neck_share", Status::ambiguous,
                                                    "no resolved scale with separated regions"));
            res.assertions.push_back(make_assertion("accounting_bubble_share", Status::ambiguous,
                                                    "no resolved scale with separated regions"));
        } else {
            const std::string where = "k = " + std::to_string(pick->k) + ", r = " + num(pick->radius);
            res.assertions.push_back(make_assertion(
                "accounting_neck_share", pass_if(pick->neck_share <= a["neck_share_max"].get<double>()),
                "neck share " + num(pick->neck_share) + " at " + where,
                {{"k", pick->k}, {"radius", pick->radius}, {"neck_share", pick->neck_share}}));
            res.assertions.push_back(make_assertion(
                "accounting_bubble_share", pass_if(pick->bubble_deviation <= a["bubble_tolerance"].get<double>()),
                "|bubble share - E(bubbles)| / E(bubbles) = " + num(pick->bubble_deviation) + " at " + where,
                {{"bubble_deviation", pick->bubble_deviation}}));
            std::sort(at_last.begin(), at_last.end(), [](auto* x, auto* y) { return x->radius > y->radius; });
            bool trend = true;
            for (std::size_t i = 1; i < at_last.size(); ++i)
                if (at_last[i]->neck_share > at_last[i - 1]->neck_share) trend = false;
            res.assertions.push_back(make_assertion("accounting_neck_trend",
                                                    at_last.size() < 2 ? Status::ambiguous : pass_if(trend),
                                                    "neck share non-increasing as r decreases at k = " +
                                                        std::to_string(pick->k)));
        }
    }

    // neck profiles at small scales (evaluated analytically on the cylinder)
    if (c["neck"]["enabled"].get<bool>() && !c["neck"]["scales"].empty()) {
        std::vector<double> nscales = c["neck"]["scales"].get<std::vector<double>>();
        const auto tiny = std::make_shared<const SurfaceMesh>(icosphere(0));
        const BubbleSequence nseq = fam.sequence(nscales, tiny, 0.0);
        const double margin = c["neck"]["margin"].get<double>();
        const double min_exp = c["neck"]["min_exponent"].get<double>();
        bool ok = true;
        double worst = std::numeric_limits<double>::infinity();
        json profiles = json::array();
        for (std::size_t e = 0; e < nscales.size(); ++e)
            for (int site = 0; site < static_cast<int>(nseq.bubbles.size()); ++site) {
                const NoNeckReport r = with_path("/neck/scales/" + std::to_string(e),
                                                 [&] { return neck_profile(nseq, static_cast<int>(e), site, margin); });
                worst = std::min(worst, r.decay.exponent);
                if (!r.applicable || r.decay.trivial || r.decay.exponent < min_exp) ok = false;
                profiles.push_back({{"scale", nscales[e]},
                                    {"site", site},
                                    {"half_length", BubbleSequence::neck_half_length(nscales[e], margin)},
                                    {"exponent", r.decay.exponent},
                                    {"applicable", r.applicable},
                                    {"admissible_constant", r.admissible_constant},
                                    {"mid_oscillation", r.mid_oscillation}});
                char name[64];
                std::snprintf(name, sizeof name, "neck_profile_%zu_site%d.csv", e, site);
                write_atomic(out_file(out, name), [&](const std::string& p) { write_profile_csv(r, p); });
            }
        results["neck"] = profiles;
        res.assertions.push_back(make_assertion(
            "neck_decay", pass_if(ok),
            "fitted gradient-decay exponent >= " + num(min_exp) + " on every neck (smallest " + num(worst) + ")",
            {{"smallest_exponent", worst}}));
    }
    res.results = results;
}

// ------------------------------------------------------------------ neck-test

Eigen::VectorXd boundary_values(const CylinderGrid& g, const std::function<double(double)>& fn) {
    Eigen::VectorXd b(g.n_theta());
    for (int j = 0; j < g.n_theta(); ++j) b[j] = fn(g.theta(j));
    return b;
}

bool growth_ok(const std::vector<double>& c, double factor) {
    if (c.empty()) return true;
    const double mx = *std::max_element(c.begin(), c.end());
    if (c.front() == 0.0) return mx == 0.0;
    return mx < factor * c.front();
}

void run_neck(const json& c, const fs::path& out, RunResult& res) {
    const int npu = c["nodes_per_unit"].get<int>();
    const int nth = c["n_theta"].get<int>();
    const double growth = c["growth_max"].get<double>();
    const double min_exp = c["min_exponent"].get<double>();
    struct Field {
        std::string name;
        std::function<double(double, double)> source;
        std::function<double(double)> boundary;
    };
    const std::vector<Field> fields = {
        {"harmonic", [](double, double) { return 0.0; }, [](double th) { return std::cos(th); }},
        {"sourced", [](double t, double th) { return std::exp(-4 * t * t) * std::cos(th); }, [](double) { return 0.0; }}};

    CsvTable table("field,L,tangential_constant,linfty_constant,tangential_exponent,trivial_fit");
    json rows = json::array();
    std::map<std::string, std::vector<double>> tang, linf;
    bool exponents_ok = true;
    std::string floor_note;
    for (const auto& fd : fields)
        for (const auto& Lj : c["lengths"]) {
            const double L = Lj.get<double>();
            const CylinderGrid g = cylinder(L, static_cast<int>(npu * L) + 1, nth);
            const Eigen::MatrixXd f = g.sample(fd.source);
            const Eigen::VectorXd b = boundary_values(g, fd.boundary);
            const Eigen::MatrixXd phi = poisson_solve(g, f, b, b);
            const TangentialReport t = tangential_estimate_check(g, phi, f);
            const LinftyReport l = linfty_check(g, phi, f);
            tang[fd.name].push_back(t.admissible_constant);
            linf[fd.name].push_back(l.admissible_constant);
            if (t.decay.trivial)
                floor_note += " " + fd.name + "@L=" + num(L);
            else if (t.decay.exponent < min_exp)
                exponents_ok = false;
            table.row(fd.name, L, t.admissible_constant, l.admissible_constant,
                      t.decay.trivial ? 0.0 : t.decay.exponent, t.decay.trivial ? 1 : 0);
            rows.push_back({{"field", fd.name},
                            {"L", L},
                            {"tangential_constant", t.admissible_constant},
                            {"linfty_constant", l.admissible_constant},
                            {"linfty_holds_without_constant", l.holds_without_constant},
                            {"tangential_exponent", t.decay.trivial ? json(nullptr) : json(t.decay.exponent)}});
            char name[96];
            std::snprintf(name, sizeof name, "tangential_%s_L%g.csv", fd.name.c_str(), L);
            write_atomic(out_file(out, name), [&](const std::string& p) { write_profile_csv(t, p); });
        }
    bool tang_ok = true, linf_ok = true;
    std::string tang_text, linf_text;
    for (const auto& fd : fields) {
        tang_ok = tang_ok && growth_ok(tang[fd.name], growth);
        linf_ok = linf_ok && growth_ok(linf[fd.name], growth);
        auto join = [](const std::vector<double>& v) {
            std::string s;
            for (double x : v) s += (s.empty() ? "" : ", ") + num(x);
            return s;
        };
        tang_text += (tang_text.empty() ? "" : "; ") + fd.name + " {" + join(tang[fd.name]) + "}";
        linf_text += (linf_text.empty() ? "" : "; ") + fd.name + " {" + join(linf[fd.name]) + "}";
    }
    res.assertions.push_back(make_assertion("tangential_constant_growth", pass_if(tang_ok),
                                            "admissible constants over L: " + tang_text + " (growth < " + num(growth) +
                                                "x)"));
    res.assertions.push_back(make_assertion("linfty_constant_growth", pass_if(linf_ok),
                                            "admissible constants over L: " + linf_text + " (growth < " + num(growth) +
                                                "x)"));
    res.assertions.push_back(make_assertion(
        "tangential_decay_exponent", pass_if(exponents_ok),
        "slice-energy decay exponent >= " + num(min_exp) +
            (floor_note.empty() ? std::string() : "; below the roundoff floor, not fitted:" + floor_note)));

    // bubble seen through a neck chart
    const json& bc = c["bubble"];
    bool bubble_ok = true, balance_ok = true;
    double worst_exp = std::numeric_limits<double>::infinity(), worst_balance = 0.0;
    json bubble_rows = json::array();
    for (const auto& Lj : bc["lengths"]) {
        const double L = Lj.get<double>();
        const double margin = bc["margin"].get<double>();
        const double r = std::exp(-2.0 * (L + margin));
        const CylinderGrid g = cylinder(L, static_cast<int>(npu * L) + 1, bc["n_theta"].get<int>());
        const SphereMap bubble({0.0, 1.0 / r}, {1.0});
        const CylinderField v = pull_to_neck(bubble, ConformalChart::neck(0.0, std::sqrt(r)), g);
        const NoNeckReport nr = no_neck_decay_check(v);
        const SliceBalanceReport sb = slice_balance_check(v, c["balance_tolerance"].get<double>());
        worst_exp = std::min(worst_exp, nr.decay.exponent);
        worst_balance = std::max(worst_balance, sb.max_relative_imbalance);
        if (!nr.applicable || nr.decay.trivial || nr.decay.exponent < bc["min_exponent"].get<double>())
            bubble_ok = false;
        if (!sb.pass) balance_ok = false;
        bubble_rows.push_back({{"L", L},
                               {"exponent", nr.decay.exponent},
                               {"applicable", nr.applicable},
                               {"mid_oscillation", nr.mid_oscillation},
                               {"slice_imbalance", sb.max_relative_imbalance}});
        char name[64];
        std::snprintf(name, sizeof name, "bubble_neck_L%g.csv", L);
        write_atomic(out_file(out, name), [&](const std::string& p) { write_profile_csv(nr, p); });
    }
    res.assertions.push_back(make_assertion(
        "bubble_neck_exponent", pass_if(bubble_ok),
        "fitted gradient-decay exponent of the bubble in neck coordinates: min " + num(worst_exp) + " (required >= " +
            num(bc["min_exponent"].get<double>()) + ")",
        {{"smallest_exponent", worst_exp}}));
    res.assertions.push_back(make_assertion(
        "slice_balance", pass_if(balance_ok),
        "max relative |int|v_t|^2 - int|v_theta|^2| per slice = " + num(worst_balance) + " (tolerance " +
            num(c["balance_tolerance"].get<double>()) + ")",
        {{"max_relative_imbalance", worst_balance}}));

    // control: a non-harmonic field must show imbalance
    {
        const CylinderGrid g = cylinder(3.0, 97, 32);
        const CylinderField v = cylinder_field(g, [](double t, double th) {
            const double a = 0.3 * t, b = 2 * th;
            return Eigen::Vector3d(std::cos(a) * std::cos(b), std::cos(a) * std::sin(b), std::sin(a));
        });
        const SliceBalanceReport sb = slice_balance_check(v, c["balance_tolerance"].get<double>());
        res.assertions.push_back(make_assertion("slice_balance_control", pass_if(!sb.pass),
                                                "non-harmonic control field imbalance " +
                                                    num(sb.max_relative_imbalance) + " exceeds the tolerance"));
    }
    write_file_atomic(out_file(out, "neck.csv"), table.str());
    res.results = {{"fields", rows}, {"bubble", bubble_rows}};
}

// ------------------------------------------------------------------ sylvester-test

SpMat random_spd_matrix(int n, std::mt19937_64& rng) {
    std::normal_distribution<double> g;
    Mat a(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) a(i, j) = g(rng);
    Mat b = a * a.transpose() / n + 0.5 * Mat::Identity(n, n);
    return SpMat(b.sparseView());
}

void run_sylvester(const json& c, const fs::path& out, RunResult& res) {
    std::mt19937_64 rng(c["seed"].get<std::uint64_t>());
    const int trials = c["trials"].get<int>();
    const int dmin = c["min_dim"].get<int>(), dmax = c["max_dim"].get<int>();
    const double dmag = c["min_abs_eigenvalue"].get<double>();
    const double tau = c["tau"].get<double>();
    std::uniform_int_distribution<int> dim(dmin, dmax);
    std::uniform_real_distribution<double> mag(dmag, 3.0);
    std::normal_distribution<double> g;

    CsvTable table("trial,dim,index,nullity,index_b1,nullity_b1,index_b2,nullity_b2,agree");
    int agree = 0, truth = 0;
    for (int t = 0; t < trials; ++t) {
        const int n = dim(rng);
        std::uniform_int_distribution<int> count(0, n);
        const int zeros = count(rng);
        const int negatives = std::uniform_int_distribution<int>(0, n - zeros)(rng);
        Vec d(n);
        for (int i = 0; i < n; ++i)
            d[i] = i < zeros ? 0.0 : i < zeros + negatives ? -mag(rng) : mag(rng);
        Mat q(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) q(i, j) = g(rng);
        const Mat orth = Eigen::HouseholderQR<Mat>(q).householderQ();
        Mat a = orth * d.asDiagonal() * orth.transpose();
        a = 0.5 * (a + a.transpose());
        const SpMat b1 = random_spd_matrix(n, rng), b2 = random_spd_matrix(n, rng);
        SolveOptions o;
        o.path = SolverPath::dense;
        o.dense_limit = std::max(o.dense_limit, n);
        const InertiaReport r = inertia_invariance(SpMat(a.sparseView(0.0)), b1, b2, tau, n, o);
        const bool right = r.first.index == negatives && r.first.nullity == zeros;
        agree += r.agree;
        truth += right;
        table.row(t, n, negatives, zeros, r.first.index, r.first.nullity, r.second.index, r.second.nullity,
                  r.agree && right ? 1 : 0);
    }
    res.assertions.push_back(make_assertion(
        "random_triples", pass_if(agree == trials && truth == trials),
        std::to_string(agree) + "/" + std::to_string(trials) + " triples agree between B1 and B2, " +
            std::to_string(truth) + "/" + std::to_string(trials) + " match the constructed (index, nullity)"));

    const ManifoldPtr target = manifold_at(c, "/manifold");
    const auto mesh = build_mesh(c["mesh"]["level"].get<int>(), grading_of(c["mesh"]["grading"]),
                                 c["mesh"]["cache_dir"].get<std::string>());
    CsvTable pde("map,index,nullity,index_mass,nullity_mass,agree");
    json maps = json::array();
    for (const auto& spec : c["maps"]) {
        const MapField u = parse_map_spec(spec.get<std::string>(), mesh, target);
        const AssembledForms f = assemble(u);
        const double t = pde_threshold(mesh->h, c["c_h"].get<double>());
        const InertiaReport r = inertia_invariance(f.index_form(), f.scalar_product(), f.M0, t);
        pde.row("\"" + spec.get<std::string>() + "\"", r.first.index, r.first.nullity, r.second.index,
                r.second.nullity, r.agree ? 1 : 0);
        maps.push_back({{"map", spec},
                        {"index", r.first.index},
                        {"nullity", r.first.nullity},
                        {"index_mass", r.second.index},
                        {"nullity_mass", r.second.nullity}});
        Status s = pass_if(r.agree);
        if (r.agree && (!r.first.complete || !r.second.complete)) s = Status::ambiguous;
        res.assertions.push_back(make_assertion(
            "pde_inertia " + spec.get<std::string>(), s,
            "(Ind, Nul) = (" + std::to_string(r.first.index) + "," + std::to_string(r.first.nullity) +
                ") with B, (" + std::to_string(r.second.index) + "," + std::to_string(r.second.nullity) +
                ") with M0"));
    }
    write_file_atomic(out_file(out, "triples.csv"), table.str());
    write_file_atomic(out_file(out, "pde.csv"), pde.str());
    res.results = {{"trials", trials}, {"agree", agree}, {"match_constructed", truth}, {"pde", maps}};
}

// ------------------------------------------------------------------ embedding-test

void run_embedding(const json& c, const fs::path& out, RunResult& res) {
    const ManifoldPtr base = manifold_at(c, "/manifold");
    const std::uint64_t seed = c["seed"].get<std::uint64_t>();
    const int samples = c["samples"].get<int>();
    json results;
    CsvTable table("check,value,required");

    if (base->key() == "clifford") {
        const Vec p = CliffordTorus::point(0.0, 0.0);
        const auto [v, w] = CliffordTorus::circle_tangents(p);
        const double ratio = positivity_ratio(*base, p, v, w);
        res.assertions.push_back(make_assertion("unaugmented_degeneracy", pass_if(std::abs(ratio) <= 1e-12),
                                                "<A(v,v),A(w,w)> = " + num(ratio) +
                                                    " for unit tangents along the two circles",
                                                {{"ratio", ratio}}));
        table.row("unaugmented_crafted_ratio", ratio, 0.0);
        results["unaugmented_crafted_ratio"] = ratio;
    }

    auto measure = [&](double lambda, AugmentFrame frame) {
        const auto aug = std::make_shared<AugmentedEmbedding>(base, lambda, frame);
        const PositivitySample s = measure_positivity(*aug, samples, seed);
        aug->set_positivity_constant(s.min_ratio);
        return std::make_pair(aug, s);
    };
    const AugmentFrame frame =
        c["frame"].get<std::string>() == "isotropic" ? AugmentFrame::isotropic : AugmentFrame::coordinate;
    const double lambda = c["lambda"].get<double>();
    const double required = c["required_constant"].get<double>();
    const auto [aug, sample] = measure(lambda, frame);
    res.assertions.push_back(make_assertion(
        "augmented_positivity", pass_if(sample.min_ratio >= required),
        "measured c = " + num(sample.min_ratio) + " over " + std::to_string(sample.samples) + " samples at lambda " +
            num(lambda) + " (" + c["frame"].get<std::string>() + " frame), required " + num(required),
        {{"measured", sample.min_ratio}, {"required", required}}));
    table.row("augmented_min_ratio", sample.min_ratio, required);
    results["augmented_min_ratio"] = sample.min_ratio;

    // isometry of the augmentation on random tangent vectors
    {
        std::mt19937_64 rng(seed + 1);
        double worst = 0.0;
        for (int i = 0; i < c["isometry_samples"].get<int>(); ++i) {
            const Vec x = base->sample_point(rng);
            const Vec v = base->random_tangent(x, rng);
            const double nv = v.squaredNorm();
            worst = std::max(worst, std::abs(aug->pushforward(x, v).squaredNorm() - nv) / nv);
        }
        const double tol = c["isometry_tolerance"].get<double>();
        res.assertions.push_back(make_assertion("pullback_isometry", pass_if(worst <= tol),
                                                "max relative | |di v|^2 - |v|^2 | = " + num(worst),
                                                {{"max_relative", worst}}));
        table.row("isometry_max_relative", worst, tol);
        results["isometry_max_relative"] = worst;
    }

    // the energy of a map does not see the augmentation
    {
        const auto mesh = std::make_shared<const SurfaceMesh>(icosphere(c["energy_level"].get<int>()));
        MapField u, ua;
        if (base->key() == "clifford") {
            u = torus_map(0.7, 1.3, mesh, base);
            ua = torus_map(0.7, 1.3, mesh, aug);
        } else {
            u = sample_map(SphereMap({0.0, 1.0}, {1.0}), mesh, base);
            ua = sample_map(SphereMap({0.0, 1.0}, {1.0}), mesh, aug);
        }
        const double e = dirichlet_energy(u), ea = dirichlet_energy(ua);
        const double rel = std::abs(e - ea) / std::max(e, 1e-300);
        res.assertions.push_back(make_assertion(
            "energy_invariance", pass_if(rel <= c["energy_tolerance"].get<double>()),
            "energy " + num(e) + " (base) vs " + num(ea) + " (augmented), relative difference " + num(rel)));
        results["energy_relative_difference"] = rel;
    }

    if (c["iso"]["enabled"].get<bool>()) {
        const double il = c["iso"]["lambda"].get<double>();
        const double ireq = c["iso"]["required_constant"].get<double>();
        const auto [iaug, isample] = measure(il, AugmentFrame::isotropic);
        res.assertions.push_back(make_assertion(
            "isotropic_frame_positivity", pass_if(isample.min_ratio >= ireq),
            "measured c = " + num(isample.min_ratio) + " at lambda " + num(il) + " (isotropic frame), required " +
                num(ireq),
            {{"measured", isample.min_ratio}, {"required", ireq}}));
        table.row("isotropic_min_ratio", isample.min_ratio, ireq);
        results["isotropic_min_ratio"] = isample.min_ratio;
    }
    write_file_atomic(out_file(out, "embedding.csv"), table.str());
    res.results = results;
}

}  // namespace

// ------------------------------------------------------------------ public

std::string to_string(Status s) {
    switch (s) {
        case Status::pass: return "PASS";
        case Status::fail: return "FAIL";
        case Status::ambiguous: return "AMBIGUOUS";
    }
    return "FAIL";
}

Status RunResult::overall() const {
    bool ambiguous = false;
    for (const auto& a : assertions) {
        if (a.status == Status::fail) return Status::fail;
        if (a.status == Status::ambiguous) ambiguous = true;
    }
    return ambiguous ? Status::ambiguous : Status::pass;
}

const Assertion* RunResult::find(const std::string& name) const {
    for (const auto& a : assertions)
        if (a.name == name) return &a;
    return nullptr;
}

const std::vector<std::string>& experiment_commands() {
    static const std::vector<std::string> c = {"spectrum", "bubble-run", "neck-test", "sylvester-test",
                                               "embedding-test"};
    return c;
}

json default_config(const std::string& command) {
    if (command == "spectrum") return spectrum_defaults();
    if (command == "bubble-run") return bubble_defaults();
    if (command == "neck-test") return neck_defaults();
    if (command == "sylvester-test") return sylvester_defaults();
    if (command == "embedding-test") return embedding_defaults();
    throw ConfigError("unknown command '" + command + "'");
}

json resolve_config(const std::string& command, const json& user) {
    json resolved = default_config(command);
    validate(user, resolved, "");
    resolved.merge_patch(user);
    check_semantics(command, resolved);
    return resolved;
}

json summary_json(const RunResult& r) {
    json a = json::array();
    for (const auto& x : r.assertions)
        a.push_back({{"name", x.name}, {"status", to_string(x.status)}, {"detail", x.detail}, {"data", x.data}});
    return {{"schema_version", 1},
            {"command", r.command},
            {"status", to_string(r.overall())},
            {"assertions", a},
            {"results", r.results}};
}

int exit_code(const RunResult& r) { return r.overall() == Status::fail ? 1 : 0; }

void write_file_atomic(const std::string& path, const std::string& content) {
    write_atomic(path, [&](const std::string& tmp) {
        std::ofstream f(tmp, std::ios::binary);
        if (!f) throw Error("cannot write " + tmp);
        f << content;
        if (!f) throw Error("write failed for " + tmp);
    });
}

void write_atomic(const std::string& path, const std::function<void(const std::string&)>& writer) {
    const std::string tmp = path + ".tmp";
    writer(tmp);
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw Error("cannot move " + tmp + " to " + path);
    }
}

RunResult run_experiment(const std::string& command, const json& resolved, const std::string& out_dir) {
    const fs::path out(out_dir);
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw Error("cannot create output directory " + out_dir + ": " + ec.message());
    write_json_file(out, "resolved_config.json", resolved);

    RunResult res;
    res.command = command;
    if (command == "spectrum")
        run_spectrum(resolved, out, res);
    else if (command == "bubble-run")
        run_bubble(resolved, out, res);
    else if (command == "neck-test")
        run_neck(resolved, out, res);
    else if (command == "sylvester-test")
        run_sylvester(resolved, out, res);
    else if (command == "embedding-test")
        run_embedding(resolved, out, res);
    else
        throw ConfigError("unknown command '" + command + "'");
    write_json_file(out, "summary.json", summary_json(res));
    return res;
}

}  // namespace bubblespectra
