#include "dqm/config.hpp"

#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "dqm/rng.hpp"

namespace dqm::config {

namespace {

using nlohmann::json;

DatasetSource parse_source(const json& j) {
    DatasetSource src;
    if (j.contains("train_path") && !j.at("train_path").get<std::string>().empty()) {
        src.train_path = j.at("train_path").get<std::string>();
        src.use_synthetic = false;
    }
    if (j.contains("synthetic")) {
        const auto& s = j.at("synthetic");
        src.synthetic.n_records = s.value("records", src.synthetic.n_records);
        src.synthetic.attack_fraction = s.value("attack_fraction", src.synthetic.attack_fraction);
        src.synthetic.hard_fraction_normal =
            s.value("hard_fraction_normal", src.synthetic.hard_fraction_normal);
        src.synthetic.hard_fraction_attack =
            s.value("hard_fraction_attack", src.synthetic.hard_fraction_attack);
    }
    return src;
}

std::vector<classify::ModelKind> parse_models(const json& j) {
    std::vector<classify::ModelKind> out;
    for (const auto& name : j) out.push_back(classify::kind_from_name(name.get<std::string>()));
    return out;
}

}  // namespace

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw std::runtime_error("config parse error in " + path + ": " + e.what());
    }

    ExperimentConfig cfg;
    if (j.contains("seed")) {
        cfg.seed = j.at("seed").get<std::uint64_t>();
        cfg.seed_set = true;
    }
    cfg.out_dir = j.value("out_dir", cfg.out_dir);

    if (j.contains("dataset")) cfg.dataset = parse_source(j.at("dataset"));
    if (j.contains("sim_dataset")) cfg.sim_dataset = parse_source(j.at("sim_dataset"));

    if (j.contains("partition")) {
        const auto& p = j.at("partition");
        auto& pp = cfg.partition;
        pp.attacker_ratio = p.value("attacker_ratio", pp.attacker_ratio);
        pp.attacker_threshold = p.value("attacker_threshold", pp.attacker_threshold);
        pp.records_per_device = p.value("records_per_device", pp.records_per_device);
        pp.attacker_attack_fraction =
            p.value("attacker_attack_fraction", pp.attacker_attack_fraction);
        pp.normal_attack_fraction = p.value("normal_attack_fraction", pp.normal_attack_fraction);
        pp.contaminated_normal_ratio =
            p.value("contaminated_normal_ratio", pp.contaminated_normal_ratio);
        pp.contamination_fraction = p.value("contamination_fraction", pp.contamination_fraction);
    }

    if (j.contains("classifier")) {
        const auto& c = j.at("classifier");
        if (c.contains("models")) cfg.models = parse_models(c.at("models"));
        cfg.optimizer.learning_rate = c.value("learning_rate", cfg.optimizer.learning_rate);
        cfg.optimizer.l2_lambda = c.value("l2_lambda", cfg.optimizer.l2_lambda);
        cfg.optimizer.max_iters = c.value("max_iters", cfg.optimizer.max_iters);
        cfg.optimizer.tolerance = c.value("tolerance", cfg.optimizer.tolerance);
        if (c.contains("mlp")) {
            const auto& m = c.at("mlp");
            cfg.mlp.hidden_units = m.value("hidden_units", cfg.mlp.hidden_units);
            cfg.mlp.epochs = m.value("epochs", cfg.mlp.epochs);
            cfg.mlp.learning_rate = m.value("learning_rate", cfg.mlp.learning_rate);
        }
    }
    if (cfg.models.empty())
        cfg.models = {classify::ModelKind::LDA, classify::ModelKind::LR, classify::ModelKind::SVM,
                      classify::ModelKind::MLP};

    if (j.contains("sim")) {
        const auto& s = j.at("sim");
        auto& sc = cfg.sim;
        sc.n_devices = s.value("n_devices", sc.n_devices);
        sc.n_workers = s.value("n_workers", sc.n_workers);
        sc.packet_size_bytes = s.value("packet_size_bytes", sc.packet_size_bytes);
        sc.emission_interval_s = s.value("emission_interval_s", sc.emission_interval_s);
        sc.duration_s = s.value("duration_s", sc.duration_s);
        sc.n_destinations = s.value("n_destinations", sc.n_destinations);
        sc.p_home_destination = s.value("p_home_destination", sc.p_home_destination);
        sc.service_time_s = s.value("service_time_s", sc.service_time_s);
        sc.bandwidth_min_mbits = s.value("bandwidth_min_mbits", sc.bandwidth_min_mbits);
        sc.bandwidth_max_mbits = s.value("bandwidth_max_mbits", sc.bandwidth_max_mbits);
    }

    if (j.contains("quarantine")) {
        const auto& q = j.at("quarantine");
        auto& qp = cfg.sim.quarantine;
        qp.si_min = q.value("si_min", qp.si_min);
        qp.si_init = q.value("si_init", qp.si_init);
        qp.alpha = q.value("alpha", qp.alpha);
        qp.ss_threshold = q.value("ss_threshold", qp.ss_threshold);
        qp.blacklist_cut = q.value("blacklist_cut", qp.blacklist_cut);
        qp.quarantine_ttl = q.value("quarantine_ttl", qp.quarantine_ttl);
        qp.scrub_threshold = q.value("scrub_threshold", qp.scrub_threshold);
    }

    if (j.contains("sweep")) {
        const auto& s = j.at("sweep");
        if (s.contains("device_counts"))
            cfg.sweep_device_counts = s.at("device_counts").get<std::vector<int>>();
        if (s.contains("models")) cfg.sweep_models = parse_models(s.at("models"));
    }
    if (cfg.sweep_models.empty())
        cfg.sweep_models = {classify::ModelKind::LDA, classify::ModelKind::LR};

    cfg.sim.attacker_ratio = cfg.partition.attacker_ratio;
    return cfg;
}

std::vector<dataset::RawRecord> load_source(const DatasetSource& src, std::uint64_t seed,
                                            const std::string& tag) {
    if (!src.use_synthetic) return dataset::load_nslkdd(src.train_path);
    synth::SynthParams p = src.synthetic;
    p.seed = derive_seed(seed, tag);
    return synth::generate(p);
}

}  // namespace dqm::config
