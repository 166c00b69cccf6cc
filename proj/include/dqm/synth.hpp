#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dqm/dataset.hpp"

namespace dqm::synth {

struct SynthParams {
    std::size_t n_records = 20000;
    std::uint64_t seed = 1;
    double attack_fraction = 0.5;
    // fraction of rows whose linear cue is neutral; only the nonlinear
    // parity cue separates them, so linear models plateau below 1.0
    double hard_fraction_normal = 0.025;
    double hard_fraction_attack = 0.05;
};

// Deterministic NSL-KDD-format traffic generator: 41 features in the official
// column layout (categorical protocol/service/flag at positions 2-4), attack
// labels drawn from the NSL-KDD attack names. Used as a stand-in corpus when
// the real dataset files are not on disk.
std::vector<dataset::RawRecord> generate(const SynthParams& params);

// Writes records in the official comma-separated 43-field wire format.
void write_file(const std::string& path, const std::vector<dataset::RawRecord>& rows);

}  // namespace dqm::synth
