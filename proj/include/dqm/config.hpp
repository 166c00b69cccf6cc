#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dqm/classify.hpp"
#include "dqm/dataset.hpp"
#include "dqm/sim.hpp"
#include "dqm/synth.hpp"

namespace dqm::config {

struct DatasetSource {
    std::string train_path;  // empty -> synthetic
    synth::SynthParams synthetic;
    bool use_synthetic = true;
};

struct ExperimentConfig {
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string out_dir = "out";

    DatasetSource dataset;                 // training corpus
    std::optional<DatasetSource> sim_dataset;  // simulation corpus; defaults to dataset

    dataset::PartitionParams partition;
    std::vector<classify::ModelKind> models;
    classify::OptimizerConfig optimizer;
    classify::MlpConfig mlp;

    sim::SimConfig sim;
    std::vector<int> sweep_device_counts = {50, 100, 150, 200, 250, 300, 350, 400};
    std::vector<classify::ModelKind> sweep_models;
};

ExperimentConfig load_config(const std::string& path);

// resolves a dataset source to raw records (file load or deterministic synth);
// the tag keeps independently-drawn corpora on distinct sub-seeds
std::vector<dataset::RawRecord> load_source(const DatasetSource& src, std::uint64_t seed,
                                            const std::string& tag = "dataset");

}  // namespace dqm::config
