#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>
#include <unistd.h>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;

namespace {

const char* kCli = DQM_CLI_PATH;

struct Workspace {
    fs::path root;
    Workspace() {
        root = fs::temp_directory_path() /
               ("dqm_cli_test_" + std::to_string(::getpid()));
        fs::create_directories(root);
    }
    ~Workspace() { fs::remove_all(root); }
    std::string path(const std::string& name) const { return (root / name).string(); }
};

int run_cli(const std::string& args, const std::string& capture_file = "/dev/null") {
    std::string cmd = std::string(kCli) + " " + args + " > " + capture_file + " 2>&1";
    int rc = std::system(cmd.c_str());
    REQUIRE(rc != -1);
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

// one shared config: small synthetic corpora so every subcommand stays fast
std::string write_config(const Workspace& ws) {
    std::string path = ws.path("config.json");
    std::ofstream out(path);
    out << R"({
  "seed": 7,
  "dataset": {"synthetic": {"records": 1200, "attack_fraction": 0.5}},
  "sim_dataset": {"synthetic": {"records": 1500, "attack_fraction": 0.4}},
  "partition": {
    "attacker_ratio": 0.3,
    "records_per_device": 15,
    "attacker_attack_fraction": 0.8
  },
  "classifier": {"models": ["lda"], "max_iters": 100},
  "sim": {
    "n_devices": 12,
    "emission_interval_s": 1.0,
    "duration_s": 30.0,
    "n_destinations": 3,
    "p_home_destination": 0.2
  },
  "quarantine": {"quarantine_ttl": 6.0},
  "sweep": {"device_counts": [6, 12], "models": ["lda"]}
})";
    return path;
}

}  // namespace

TEST_CASE("train writes model, schema and summary artifacts") {
    Workspace ws;
    std::string cfg = write_config(ws);
    std::string out = ws.path("out");

    int rc = run_cli("train --config " + cfg + " --out " + out, ws.path("stdout.txt"));
    CHECK(rc == 0);
    CHECK(fs::exists(out + "/model_lda.json"));
    CHECK(fs::exists(out + "/train_lda.json"));
    CHECK(fs::exists(out + "/schema.json"));
    CHECK(fs::exists(out + "/train_summary.csv"));

    auto csv = slurp(out + "/train_summary.csv");
    CHECK(csv.rfind("kind,train_time_s,train_accuracy\n", 0) == 0);
    CHECK(csv.find("\nlda,") != std::string::npos);

    auto j = nlohmann::json::parse(slurp(out + "/train_lda.json"));
    CHECK(j.at("kind") == "lda");
    CHECK(j.at("train_accuracy").get<double>() > 0.5);
}

TEST_CASE("simulate produces a verified run and is reproducible byte for byte") {
    Workspace ws;
    std::string cfg = write_config(ws);
    std::string out_a = ws.path("a");
    std::string out_b = ws.path("b");

    int rc = run_cli("simulate --config " + cfg + " --out " + out_a + " --train-first",
                     ws.path("stdout_a.txt"));
    CHECK(rc == 0);
    CHECK(fs::exists(out_a + "/trace.ndjson"));
    CHECK(fs::exists(out_a + "/report.json"));
    CHECK(fs::exists(out_a + "/episodes.ndjson"));
    CHECK(slurp(ws.path("stdout_a.txt")).find("devices_quarantined=") != std::string::npos);

    auto j = nlohmann::json::parse(slurp(out_a + "/report.json"));
    CHECK(j.at("n_devices") == 12);
    CHECK(j.at("model") == "lda");
    long generated = j.at("packets_generated").get<long>();
    CHECK(generated == j.at("packets_delivered").get<long>() +
                           j.at("packets_quarantined").get<long>() +
                           j.at("packets_dropped_blacklist").get<long>());

    rc = run_cli("simulate --config " + cfg + " --out " + out_b + " --train-first",
                 ws.path("stdout_b.txt"));
    CHECK(rc == 0);
    CHECK(slurp(out_a + "/trace.ndjson") == slurp(out_b + "/trace.ndjson"));
    CHECK(slurp(out_a + "/report.json") == slurp(out_b + "/report.json"));
    CHECK(slurp(out_a + "/episodes.ndjson") == slurp(out_b + "/episodes.ndjson"));
}

TEST_CASE("report checks the run invariants and fails on tampered output") {
    Workspace ws;
    std::string cfg = write_config(ws);
    std::string out = ws.path("out");
    REQUIRE(run_cli("simulate --config " + cfg + " --out " + out + " --train-first") == 0);

    std::string log = ws.path("report.txt");
    int rc = run_cli("report --out " + out, log);
    CHECK(rc == 0);
    auto text = slurp(log);
    CHECK(text.find("PASS accuracy-identity") != std::string::npos);
    CHECK(text.find("PASS packet-conservation") != std::string::npos);
    CHECK(text.find("PASS quarantine-conservation") != std::string::npos);
    CHECK(text.find("FAIL") == std::string::npos);

    // corrupt one counter: the conservation check must turn into a FAIL
    auto j = nlohmann::json::parse(slurp(out + "/report.json"));
    j["packets_delivered"] = j["packets_delivered"].get<long>() + 1;
    std::ofstream(out + "/report.json") << j.dump(2) << "\n";
    rc = run_cli("report --out " + out, log);
    CHECK(rc == 2);
    CHECK(slurp(log).find("FAIL packet-conservation") != std::string::npos);
}

TEST_CASE("sweep emits the per-point csv and the summary json") {
    Workspace ws;
    std::string cfg = write_config(ws);
    std::string out = ws.path("out");

    int rc = run_cli("sweep --config " + cfg + " --out " + out + " --train-first",
                     ws.path("stdout.txt"));
    CHECK(rc == 0);
    auto csv = slurp(out + "/sweep.csv");
    CHECK(csv.rfind("n_devices,model,devices_quarantined,packets_quarantined,"
                    "quarantine_accuracy\n", 0) == 0);
    CHECK(csv.find("\n6,lda,") != std::string::npos);
    CHECK(csv.find("\n12,lda,") != std::string::npos);

    auto j = nlohmann::json::parse(slurp(out + "/sweep_summary.json"));
    REQUIRE(j.contains("lda"));
    CHECK(j["lda"].contains("mean_accuracy"));
    CHECK(j["lda"]["spread"].get<double>() >=
          0.0);  // spread is max - min by construction
}

TEST_CASE("dataset inspect prints the schema cardinalities") {
    Workspace ws;
    std::string cfg = write_config(ws);
    std::string log = ws.path("inspect.txt");
    int rc = run_cli("dataset inspect --config " + cfg, log);
    CHECK(rc == 0);
    auto j = nlohmann::json::parse(slurp(log));
    CHECK(j.at("records") == 1200);
    CHECK(j.at("output_dim").get<int>() > 38);
    CHECK(j.at("protocol_cardinality").get<int>() >= 1);
}

TEST_CASE("usage errors exit with code 1") {
    Workspace ws;
    std::string cfg = write_config(ws);

    CHECK(run_cli("") == 1);                      // a subcommand is required
    CHECK(run_cli("defragment") == 1);            // unknown subcommand
    CHECK(run_cli("train --config " + ws.path("missing.json")) == 1);
    CHECK(run_cli("train --config " + cfg + " --models forest --out " + ws.path("o")) == 1);
    // simulating without a trained model and without --train-first is refused
    CHECK(run_cli("simulate --config " + cfg + " --out " + ws.path("fresh")) == 1);
    // report over a directory with none of the expected inputs
    fs::create_directories(ws.path("empty"));
    CHECK(run_cli("report --out " + ws.path("empty")) == 1);
}
