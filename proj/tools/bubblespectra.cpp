#include "bubblespectra/errors.hpp"
#include "bubblespectra/experiment.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <optional>

namespace bs = bubblespectra;
using json = nlohmann::json;

namespace {

enum Exit { ok = 0, failed = 1, config = 2, resource = 3 };

json read_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw bs::ConfigError(path + ": cannot open config file");
    try {
        return json::parse(f);
    } catch (const json::parse_error& e) {
        throw bs::ConfigError(path + ": " + e.what());
    }
}

int run(const std::string& command, const std::string& config_path, std::string out_dir,
        std::optional<int> mesh_level, std::optional<long long> seed) {
    json user = config_path.empty() ? json::object() : read_config(config_path);
    if (!user.is_object()) throw bs::ConfigError("/: expected an object");
    if (mesh_level) {
        if (!bs::default_config(command).contains("mesh") || !bs::default_config(command)["mesh"].contains("level"))
            throw bs::ConfigError("--mesh-level: '" + command + "' has no /mesh/level");
        user["mesh"]["level"] = *mesh_level;
    }
    if (seed) user["seed"] = *seed;
    const json resolved = bs::resolve_config(command, user);
    if (out_dir.empty()) out_dir = resolved["output_dir"].get<std::string>();
    if (out_dir.empty()) out_dir = "out/" + command;

    const bs::RunResult r = bs::run_experiment(command, resolved, out_dir);
    for (const auto& a : r.assertions) std::cout << bs::to_string(a.status) << "  " << a.name << ": " << a.detail << "\n";
    std::cout << command << " " << bs::to_string(r.overall()) << " (" << out_dir << "/summary.json)\n";
    return bs::exit_code(r);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Spectra of harmonic maps and bubble-tree experiments"};
    app.require_subcommand(1);

    std::string config_path, out_dir;
    std::optional<int> mesh_level;
    std::optional<long long> seed;
    for (const auto& name : bs::experiment_commands()) {
        CLI::App* sub = app.add_subcommand(name);
        sub->add_option("--config", config_path, "JSON config; defaults apply to missing keys");
        sub->add_option("--out", out_dir, "output directory (default: output_dir or out/<command>)");
        sub->add_option("--mesh-level", mesh_level, "override /mesh/level");
        sub->add_option("--seed", seed, "override /seed")->check(CLI::NonNegativeNumber);
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? ok : config;
    }
    const std::string command = app.get_subcommands().front()->get_name();
    try {
        return run(command, config_path, out_dir, mesh_level, seed);
    } catch (const bs::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return config;
    } catch (const bs::ResourceLimit& e) {
        std::cerr << "resource limit: " << e.what() << "\n";
        return resource;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return failed;
    }
}
