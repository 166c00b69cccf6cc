#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace dqm::dataset {

inline constexpr std::size_t kFeatureCount = 41;
inline constexpr std::size_t kFieldsPerLine = 43;  // 41 features + label + difficulty
// 0-based indices of the categorical columns (protocol_type, service, flag)
inline constexpr std::array<std::size_t, 3> kCategoricalColumns{1, 2, 3};
inline constexpr std::size_t kNumericColumnCount = kFeatureCount - kCategoricalColumns.size();

struct RawRecord {
    std::vector<std::string> features;  // exactly 41, official column order
    std::string label;                  // attack name or "normal"
    int difficulty = 0;                 // retained, unused
};

struct EncodingSchema {
    // per categorical column: observed category -> one-hot index
    std::array<std::map<std::string, std::size_t>, 3> categorical_maps;
    // per numeric column (in column order, categorical columns skipped): train min/max
    std::vector<double> numeric_min;
    std::vector<double> numeric_max;
    std::size_t output_dim = 0;
};

struct EncodedRecord {
    std::vector<double> x;
    int y = 0;  // 1 = attack, 0 = normal
    std::size_t source_index = 0;
};

struct DeviceStream {
    int device_id = 0;
    std::vector<EncodedRecord> records;
    double attack_fraction = 0.0;
    bool is_attacker = false;
};

struct PartitionParams {
    int n_devices = 1;
    double attacker_ratio = 0.0;
    std::uint64_t seed = 0;
    double attacker_threshold = 0.5;   // ground-truth attacker if attack_fraction >= this
    std::size_t records_per_device = 64;
    double attacker_attack_fraction = 0.8;     // attack mix on attack-heavy devices
    double normal_attack_fraction = 0.0;       // attack mix on normal-heavy devices
    double contaminated_normal_ratio = 0.0;    // fraction of normal devices that carry attacks
    double contamination_fraction = 0.1;       // attack mix on those contaminated devices
};

std::vector<RawRecord> load_nslkdd(const std::string& path);

EncodingSchema build_schema(const std::vector<RawRecord>& train);

EncodedRecord encode(const RawRecord& r, const EncodingSchema& schema,
                     std::size_t source_index = 0);

std::vector<EncodedRecord> encode_all(const std::vector<RawRecord>& rows,
                                      const EncodingSchema& schema);

std::vector<DeviceStream> partition_streams(const std::vector<EncodedRecord>& records,
                                            const PartitionParams& params);

void save_schema(const EncodingSchema& schema, const std::string& path);
EncodingSchema load_schema(const std::string& path);

}  // namespace dqm::dataset
