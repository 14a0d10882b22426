#include <doctest.h>

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

const fs::path work = fs::temp_directory_path() / "bubblespectra_cli_test";

int run_cli(const std::string& args, const std::string& log) {
    const std::string cmd = std::string(BUBBLESPECTRA_CLI) + " " + args + " > " + (work / log).string() + " 2>&1";
    const int raw = std::system(cmd.c_str());
    return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream s;
    s << f.rdbuf();
    return s.str();
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

}  // namespace

TEST_CASE("sylvester-test runs clean from the shipped config") {
    fs::create_directories(work);
    const std::string out = (work / "sylvester").string();
    CHECK(run_cli("sylvester-test --config " BUBBLESPECTRA_CONFIGS "/sylvester.json --out " + out, "syl.log") == 0);
    const json s = json::parse(slurp(fs::path(out) / "summary.json"));
    CHECK(s["status"] == "PASS");
    CHECK(s["schema_version"] == 1);
    CHECK(fs::exists(fs::path(out) / "resolved_config.json"));
    CHECK(fs::exists(fs::path(out) / "triples.csv"));
}

TEST_CASE("unknown keys and bad types exit 2 with the offending path") {
    fs::create_directories(work);
    write(work / "bad.json", R"({"command": "spectrum", "foo": 1})");
    CHECK(run_cli("spectrum --config " + (work / "bad.json").string() + " --out " + (work / "bad").string(),
                  "bad.log") == 2);
    CHECK(slurp(work / "bad.log").find("/foo") != std::string::npos);

    write(work / "bad2.json", R"({"command": "spectrum", "mesh": {"level": "four"}})");
    CHECK(run_cli("spectrum --config " + (work / "bad2.json").string(), "bad2.log") == 2);
    CHECK(slurp(work / "bad2.log").find("/mesh/level") != std::string::npos);

    write(work / "bad3.json", R"({"command": "neck-test", "lengths": [8, 1]})");
    CHECK(run_cli("neck-test --config " + (work / "bad3.json").string(), "bad3.log") == 2);
    CHECK(slurp(work / "bad3.log").find("/lengths/1") != std::string::npos);

    write(work / "broken.json", "{\"command\": ");
    CHECK(run_cli("spectrum --config " + (work / "broken.json").string(), "broken.log") == 2);
    CHECK(run_cli("neck-test --mesh-level 3", "nomesh.log") == 2);
}

TEST_CASE("a run above the degree-of-freedom limit exits 3 before assembling") {
    fs::create_directories(work);
    write(work / "big.json", R"({"command": "spectrum", "mesh": {"level": 6}, "limits": {"max_dof": 1000}})");
    CHECK(run_cli("spectrum --config " + (work / "big.json").string() + " --out " + (work / "big").string(),
                  "big.log") == 3);
}

TEST_CASE("identity spectrum at level 4 and byte-identical reruns") {
    fs::create_directories(work);
    write(work / "id.json", R"({"command": "spectrum", "map": "rational:[0,1]/[1]", "mesh": {"level": 4}})");
    const fs::path a = work / "id_a", b = work / "id_b";
    REQUIRE(run_cli("spectrum --config " + (work / "id.json").string() + " --out " + a.string(), "id_a.log") == 0);
    REQUIRE(run_cli("spectrum --config " + (work / "id.json").string() + " --out " + b.string(), "id_b.log") == 0);
    const json s = json::parse(slurp(a / "summary.json"));
    CHECK(s["results"]["index"] == 0);
    CHECK(s["results"]["nullity"] == 6);
    int near_zero = 0;
    for (const auto& l : s["results"]["eigenvalues"])
        if (std::abs(l.get<double>()) < s["results"]["tau"].get<double>()) ++near_zero;
    CHECK(near_zero == 6);
    for (const char* f : {"summary.json", "resolved_config.json", "eigenvalues.csv", "spectrum.json"})
        CHECK_MESSAGE(slurp(a / f) == slurp(b / f), f);
}

TEST_CASE("seed override lands in the resolved config") {
    fs::create_directories(work);
    const fs::path out = work / "seeded";
    REQUIRE(run_cli("embedding-test --seed 7 --out " + out.string(), "seed.log") <= 1);
    CHECK(json::parse(slurp(out / "resolved_config.json"))["seed"] == 7);
}
