// dqm — edge data-quarantine experiment runner.
//
// Subcommands: train, simulate, sweep, report, dataset inspect.
// Exit codes: 0 success, 1 usage/config error, 2 runtime invariant violation.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dqm/classify.hpp"
#include "dqm/config.hpp"
#include "dqm/dataset.hpp"
#include "dqm/quarantine.hpp"
#include "dqm/rng.hpp"
#include "dqm/sim.hpp"
#include "dqm/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitInvariant = 2;

struct CliOverrides {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string models_csv;
    std::string devices_csv;
    std::string out_dir;
    bool train_first = false;
};

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

dqm::config::ExperimentConfig resolve_config(const CliOverrides& o) {
    dqm::config::ExperimentConfig cfg;
    if (!o.config_path.empty()) cfg = dqm::config::load_config(o.config_path);
    if (o.seed) {
        cfg.seed = *o.seed;
        cfg.seed_set = true;
    }
    if (!cfg.seed_set)
        throw std::runtime_error("a seed is required (config key \"seed\" or --seed); "
                                 "runs must be reproducible");
    if (!o.out_dir.empty()) cfg.out_dir = o.out_dir;
    if (!o.models_csv.empty()) {
        cfg.models.clear();
        for (const auto& name : split_csv(o.models_csv))
            cfg.models.push_back(dqm::classify::kind_from_name(name));
        cfg.sweep_models = cfg.models;
    }
    if (!o.devices_csv.empty()) {
        auto parts = split_csv(o.devices_csv);
        std::vector<int> counts;
        for (const auto& p : parts) counts.push_back(std::stoi(p));
        if (counts.empty()) throw std::runtime_error("--devices: no device counts given");
        cfg.sim.n_devices = counts.front();
        cfg.sweep_device_counts = counts;
    }
    cfg.mlp.seed = dqm::derive_seed(cfg.seed, "mlp");
    fs::create_directories(cfg.out_dir);
    return cfg;
}

std::string model_path(const dqm::config::ExperimentConfig& cfg, dqm::classify::ModelKind kind) {
    return cfg.out_dir + "/model_" + dqm::classify::kind_name(kind) + ".json";
}

std::string schema_path(const dqm::config::ExperimentConfig& cfg) {
    return cfg.out_dir + "/schema.json";
}

json confusion_json(const dqm::classify::ConfusionMatrix& c) {
    return json{{"tp", c.tp}, {"fp", c.fp}, {"tn", c.tn}, {"fn", c.fn}};
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write: " + path);
    out << content;
}

dqm::dataset::EncodingSchema train_models(const dqm::config::ExperimentConfig& cfg,
                                          const std::vector<dqm::classify::ModelKind>& kinds,
                                          bool write_reports) {
    auto rows = dqm::config::load_source(cfg.dataset, cfg.seed, "dataset");
    auto schema = dqm::dataset::build_schema(rows);
    auto encoded = dqm::dataset::encode_all(rows, schema);
    dqm::dataset::save_schema(schema, schema_path(cfg));

    std::ostringstream csv;
    csv << "kind,train_time_s,train_accuracy\n";
    for (auto kind : kinds) {
        auto rep = dqm::classify::train_with_report(kind, encoded, cfg.optimizer, cfg.mlp);
        dqm::classify::save_model(rep.model, model_path(cfg, kind));
        std::string name = dqm::classify::kind_name(kind);
        if (write_reports) {
            json j{{"kind", name},
                   {"train_time_s", rep.train_time_s},
                   {"train_accuracy", rep.train_accuracy},
                   {"converged", rep.model.converged},
                   {"confusion", confusion_json(rep.confusion)}};
            write_text(cfg.out_dir + "/train_" + name + ".json", j.dump(2) + "\n");
        }
        csv << name << ',' << rep.train_time_s << ',' << rep.train_accuracy << '\n';
        std::cout << "trained " << name << ": accuracy=" << rep.train_accuracy
                  << " time=" << rep.train_time_s << "s\n";
    }
    if (write_reports) write_text(cfg.out_dir + "/train_summary.csv", csv.str());
    return schema;
}

struct SimInputs {
    dqm::dataset::EncodingSchema schema;
    std::vector<dqm::dataset::EncodedRecord> records;
};

SimInputs prepare_sim_inputs(const dqm::config::ExperimentConfig& cfg) {
    SimInputs in;
    if (fs::exists(schema_path(cfg))) {
        in.schema = dqm::dataset::load_schema(schema_path(cfg));
    } else {
        auto rows = dqm::config::load_source(cfg.dataset, cfg.seed, "dataset");
        in.schema = dqm::dataset::build_schema(rows);
    }
    const auto& src = cfg.sim_dataset ? *cfg.sim_dataset : cfg.dataset;
    auto rows = dqm::config::load_source(src, cfg.seed, "sim_dataset");
    in.records = dqm::dataset::encode_all(rows, in.schema);
    return in;
}

dqm::classify::TrainedModel obtain_model(const dqm::config::ExperimentConfig& cfg,
                                         dqm::classify::ModelKind kind, bool train_first,
                                         std::size_t expected_dim) {
    std::string path = model_path(cfg, kind);
    if (!fs::exists(path)) {
        if (!train_first)
            throw std::runtime_error("model file missing: " + path +
                                     " (run `dqm train` or pass --train-first)");
        train_models(cfg, {kind}, false);
    }
    return dqm::classify::load_model(path, expected_dim);
}

int cmd_train(const CliOverrides& o) {
    auto cfg = resolve_config(o);
    train_models(cfg, cfg.models, true);
    std::cout << "reports written to " << cfg.out_dir << "\n";
    return kExitOk;
}

int cmd_dataset_inspect(const CliOverrides& o) {
    auto cfg = resolve_config(o);
    auto rows = dqm::config::load_source(cfg.dataset, cfg.seed, "dataset");
    auto schema = dqm::dataset::build_schema(rows);
    json j{{"records", rows.size()},
           {"protocol_cardinality", schema.categorical_maps[0].size()},
           {"service_cardinality", schema.categorical_maps[1].size()},
           {"flag_cardinality", schema.categorical_maps[2].size()},
           {"output_dim", schema.output_dim}};
    std::cout << j.dump(2) << "\n";
    return kExitOk;
}

int run_one_simulation(const dqm::config::ExperimentConfig& cfg, bool train_first) {
    auto inputs = prepare_sim_inputs(cfg);
    auto kind = cfg.models.empty() ? dqm::classify::ModelKind::LDA : cfg.models.front();
    auto model = obtain_model(cfg, kind, train_first, inputs.schema.output_dim);

    auto pp = cfg.partition;
    pp.n_devices = cfg.sim.n_devices;
    pp.seed = dqm::derive_seed(cfg.seed, "partition");
    auto streams = dqm::dataset::partition_streams(inputs.records, pp);

    auto sim_cfg = cfg.sim;
    sim_cfg.seed = dqm::derive_seed(cfg.seed, "emission");
    auto result = dqm::sim::run(sim_cfg, model, streams);

    write_text(cfg.out_dir + "/trace.ndjson", dqm::sim::trace_to_ndjson(result.trace));
    write_text(cfg.out_dir + "/report.json", dqm::sim::report_to_json(result.report));
    std::ostringstream episodes;
    for (const auto& e : result.episodes) episodes << dqm::quarantine::episode_to_json(e) << '\n';
    write_text(cfg.out_dir + "/episodes.ndjson", episodes.str());

    std::cout << "devices_quarantined=" << result.report.devices_quarantined
              << " packets_quarantined=" << result.report.packets_quarantined
              << " quarantine_accuracy=" << result.report.quarantine_accuracy << "\n";

    auto violations = dqm::sim::verify_run(result.report, result.trace);
    for (const auto& v : violations) std::cerr << "invariant violated: " << v << "\n";
    return violations.empty() ? kExitOk : kExitInvariant;
}

int cmd_simulate(const CliOverrides& o) {
    auto cfg = resolve_config(o);
    return run_one_simulation(cfg, o.train_first);
}

int cmd_sweep(const CliOverrides& o) {
    auto cfg = resolve_config(o);
    auto inputs = prepare_sim_inputs(cfg);

    std::vector<dqm::classify::TrainedModel> models;
    std::vector<std::pair<dqm::classify::ModelKind, const dqm::classify::TrainedModel*>> refs;
    models.reserve(cfg.sweep_models.size());
    for (auto kind : cfg.sweep_models)
        models.push_back(obtain_model(cfg, kind, o.train_first, inputs.schema.output_dim));
    for (std::size_t i = 0; i < models.size(); ++i)
        refs.emplace_back(cfg.sweep_models[i], &models[i]);

    auto sim_cfg = cfg.sim;
    sim_cfg.seed = cfg.seed;
    auto points = dqm::sim::sweep(sim_cfg, cfg.partition, inputs.records, refs,
                                  cfg.sweep_device_counts);

    std::ostringstream csv;
    csv << "n_devices,model,devices_quarantined,packets_quarantined,quarantine_accuracy\n";
    std::map<std::string, std::vector<double>> acc_by_model;
    for (const auto& p : points) {
        std::string name = dqm::classify::kind_name(p.kind);
        csv << p.n_devices << ',' << name << ',' << p.report.devices_quarantined << ','
            << p.report.packets_quarantined << ',' << p.report.quarantine_accuracy << '\n';
        acc_by_model[name].push_back(p.report.quarantine_accuracy);
    }
    write_text(cfg.out_dir + "/sweep.csv", csv.str());

    json summary = json::object();
    for (const auto& [name, accs] : acc_by_model) {
        double mean = 0.0, lo = accs.front(), hi = accs.front();
        for (double a : accs) {
            mean += a;
            lo = std::min(lo, a);
            hi = std::max(hi, a);
        }
        mean /= static_cast<double>(accs.size());
        summary[name] = {{"mean_accuracy", mean}, {"min_accuracy", lo}, {"max_accuracy", hi},
                         {"spread", hi - lo}};
    }
    write_text(cfg.out_dir + "/sweep_summary.json", summary.dump(2) + "\n");
    std::cout << "sweep complete: " << points.size() << " points -> " << cfg.out_dir
              << "/sweep.csv\n";
    return kExitOk;
}

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("missing input file: " + path);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) rows.push_back(split_csv(line));
    return rows;
}

void print_table(const std::string& title, const std::vector<std::vector<std::string>>& rows) {
    std::cout << "\n== " << title << " ==\n";
    if (rows.empty()) return;
    std::vector<std::size_t> widths;
    for (const auto& row : rows)
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (widths.size() <= i) widths.push_back(0);
            widths[i] = std::max(widths[i], row[i].size());
        }
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i)
            std::cout << std::left << std::setw(static_cast<int>(widths[i]) + 2) << row[i];
        std::cout << "\n";
    }
}

int cmd_report(const CliOverrides& o) {
    std::string dir = o.out_dir.empty() ? "out" : o.out_dir;
    bool all_pass = true;
    bool any_input = false;

    std::string train_csv = dir + "/train_summary.csv";
    if (fs::exists(train_csv)) {
        any_input = true;
        auto rows = read_csv(train_csv);
        std::vector<std::vector<std::string>> time_tbl{{"model", "train_time_s"}};
        std::vector<std::vector<std::string>> acc_tbl{{"model", "train_accuracy"}};
        for (std::size_t i = 1; i < rows.size(); ++i) {
            time_tbl.push_back({rows[i][0], rows[i][1]});
            acc_tbl.push_back({rows[i][0], rows[i][2]});
        }
        print_table("Training time", time_tbl);
        print_table("Training accuracy", acc_tbl);
    }

    std::string report_path = dir + "/report.json";
    if (fs::exists(report_path)) {
        any_input = true;
        std::ifstream in(report_path);
        json j;
        in >> j;
        print_table("Quarantine run",
                    {{"metric", "value"},
                     {"n_devices", std::to_string(j.value("n_devices", 0))},
                     {"devices_quarantined", std::to_string(j.value("devices_quarantined", 0L))},
                     {"packets_quarantined", std::to_string(j.value("packets_quarantined", 0L))},
                     {"quarantine_accuracy", std::to_string(j.value("quarantine_accuracy", 0.0))}});

        const auto& c = j.at("quarantine_confusion");
        long tp = c.value("tp", 0L), fp = c.value("fp", 0L), tn = c.value("tn", 0L),
             fn = c.value("fn", 0L);
        double expected = static_cast<double>(tp + tn) / static_cast<double>(tp + tn + fp + fn);
        bool acc_ok = std::abs(expected - j.value("quarantine_accuracy", -1.0)) < 1e-9;
        std::cout << (acc_ok ? "PASS" : "FAIL") << " accuracy-identity\n";

        long generated = j.value("packets_generated", 0L);
        long delivered = j.value("packets_delivered", 0L);
        long quarantined = j.value("packets_quarantined", 0L);
        long dropped_bl = j.value("packets_dropped_blacklist", 0L);
        bool cons1 = generated == delivered + quarantined + dropped_bl;
        std::cout << (cons1 ? "PASS" : "FAIL") << " packet-conservation\n";
        long released = j.value("records_released", 0L);
        long scrubbed = j.value("records_dropped_scrub", 0L);
        long discarded = j.value("records_discarded", 0L);
        bool cons2 = quarantined == released + scrubbed + discarded;
        std::cout << (cons2 ? "PASS" : "FAIL") << " quarantine-conservation\n";
        all_pass = all_pass && acc_ok && cons1 && cons2;
    }

    std::string sweep_csv = dir + "/sweep.csv";
    if (fs::exists(sweep_csv)) {
        any_input = true;
        auto rows = read_csv(sweep_csv);
        std::vector<std::vector<std::string>> dev_tbl{{"n_devices", "model", "devices_quarantined"}};
        std::vector<std::vector<std::string>> pkt_tbl{{"n_devices", "model", "packets_quarantined"}};
        std::vector<std::vector<std::string>> acc_tbl{{"n_devices", "model", "quarantine_accuracy"}};
        for (std::size_t i = 1; i < rows.size(); ++i) {
            dev_tbl.push_back({rows[i][0], rows[i][1], rows[i][2]});
            pkt_tbl.push_back({rows[i][0], rows[i][1], rows[i][3]});
            acc_tbl.push_back({rows[i][0], rows[i][1], rows[i][4]});
        }
        print_table("Devices quarantined", dev_tbl);
        print_table("Packets quarantined", pkt_tbl);
        print_table("Quarantine accuracy by device count", acc_tbl);
    }

    if (!any_input)
        throw std::runtime_error("no inputs found under " + dir +
                                 " (expected train_summary.csv, report.json or sweep.csv)");
    return all_pass ? kExitOk : kExitInvariant;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Data quarantine model experiment runner"};
    app.require_subcommand(1);

    CliOverrides o;
    app.add_option("--config", o.config_path, "experiment config file (JSON)");
    auto* seed_opt = app.add_option("--seed", "seed for all randomness")
                         ->check(CLI::NonNegativeNumber);
    app.add_option("--models", o.models_csv, "comma-separated model kinds (lda,lr,svm,mlp)");
    app.add_option("--devices", o.devices_csv, "device count, or comma list for sweep");
    app.add_option("--out", o.out_dir, "output directory");
    app.add_flag("--train-first", o.train_first, "train missing models before simulating");

    auto* train = app.add_subcommand("train", "train classifiers, emit reports");
    auto* simulate = app.add_subcommand("simulate", "run one simulation");
    auto* sweep_cmd = app.add_subcommand("sweep", "simulate across device counts and models");
    auto* report = app.add_subcommand("report", "render comparison tables, verify invariants");
    auto* ds = app.add_subcommand("dataset", "dataset utilities");
    auto* inspect = ds->add_subcommand("inspect", "print encoding schema cardinalities");
    ds->require_subcommand(1);
    for (CLI::App* sub : {train, simulate, sweep_cmd, report, ds, inspect}) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    if (seed_opt->count() > 0) o.seed = seed_opt->as<std::uint64_t>();

    try {
        if (*train) return cmd_train(o);
        if (*simulate) return cmd_simulate(o);
        if (*sweep_cmd) return cmd_sweep(o);
        if (*report) return cmd_report(o);
        if (*inspect) return cmd_dataset_inspect(o);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}
