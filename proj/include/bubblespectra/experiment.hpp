#pragma once

#include <json.hpp>

#include <functional>
#include <string>
#include <vector>

namespace bubblespectra {

enum class Status { pass, fail, ambiguous };

std::string to_string(Status s);

struct Assertion {
    std::string name;
    Status status = Status::pass;
    std::string detail;
    nlohmann::json data = nlohmann::json::object();
};

struct RunResult {
    std::string command;
    std::vector<Assertion> assertions;
    nlohmann::json results = nlohmann::json::object();

    /// fail if any assertion fails, otherwise ambiguous if any is ambiguous.
    Status overall() const;
    const Assertion* find(const std::string& name) const;
};

/// spectrum, bubble-run, neck-test, sylvester-test, embedding-test.
const std::vector<std::string>& experiment_commands();

/// Every key the command accepts, with its default value.
nlohmann::json default_config(const std::string& command);

/// Defaults overlaid with `user`. Throws ConfigError naming the JSON pointer of
/// the first unknown key, type mismatch or out-of-range value.
nlohmann::json resolve_config(const std::string& command, const nlohmann::json& user);

/// Runs a resolved config and writes resolved_config.json, the command's CSV
/// tables and summary.json into `out_dir` (created if missing). Reruns of the
/// same config produce identical files.
RunResult run_experiment(const std::string& command, const nlohmann::json& resolved, const std::string& out_dir);

nlohmann::json summary_json(const RunResult& r);

/// 0 when no assertion fails, 1 otherwise.
int exit_code(const RunResult& r);

/// Writes to a temporary file in the same directory and renames it over `path`.
void write_file_atomic(const std::string& path, const std::string& content);
void write_atomic(const std::string& path, const std::function<void(const std::string&)>& writer);

}  // namespace bubblespectra
