#include "dqm/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "dqm/rng.hpp"

namespace dqm::dataset {

namespace {

bool is_categorical_column(std::size_t col) {
    return col == kCategoricalColumns[0] || col == kCategoricalColumns[1] ||
           col == kCategoricalColumns[2];
}

std::size_t categorical_slot(std::size_t col) {
    for (std::size_t i = 0; i < kCategoricalColumns.size(); ++i)
        if (kCategoricalColumns[i] == col) return i;
    throw std::logic_error("not a categorical column");
}

double parse_numeric(const std::string& s, std::size_t col) {
    std::size_t pos = 0;
    double v;
    try {
        v = std::stod(s, &pos);
    } catch (const std::exception&) {
        throw std::runtime_error("non-numeric value '" + s + "' in numeric column " +
                                 std::to_string(col + 1));
    }
    if (pos != s.size())
        throw std::runtime_error("non-numeric value '" + s + "' in numeric column " +
                                 std::to_string(col + 1));
    return v;
}

void shuffle_stream(std::vector<EncodedRecord>& v, std::uint64_t seed) {
    Rng rng(seed);
    for (std::size_t i = v.size(); i > 1; --i)
        std::swap(v[i - 1], v[rng.below(i)]);
}

}  // namespace

std::vector<RawRecord> load_nslkdd(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open NSL-KDD file: " + path);

    std::vector<RawRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;

        std::vector<std::string> fields;
        fields.reserve(kFieldsPerLine);
        std::size_t start = 0;
        while (true) {
            std::size_t comma = line.find(',', start);
            if (comma == std::string::npos) {
                fields.push_back(line.substr(start));
                break;
            }
            fields.push_back(line.substr(start, comma - start));
            start = comma + 1;
        }
        if (fields.size() != kFieldsPerLine)
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected " +
                                     std::to_string(kFieldsPerLine) + " fields, got " +
                                     std::to_string(fields.size()));

        RawRecord r;
        r.features.assign(fields.begin(), fields.begin() + kFeatureCount);
        r.label = fields[kFeatureCount];
        if (r.label.empty())
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": empty label");
        try {
            r.difficulty = std::stoi(fields[kFeatureCount + 1]);
        } catch (const std::exception&) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": bad difficulty field");
        }
        out.push_back(std::move(r));
    }
    return out;
}

EncodingSchema build_schema(const std::vector<RawRecord>& train) {
    if (train.empty())
        throw std::runtime_error("build_schema: empty training set");

    EncodingSchema schema;
    schema.numeric_min.assign(kNumericColumnCount, 0.0);
    schema.numeric_max.assign(kNumericColumnCount, 0.0);

    bool first = true;
    for (const RawRecord& r : train) {
        if (r.features.size() != kFeatureCount)
            throw std::runtime_error("build_schema: record with wrong feature count");
        std::size_t num_idx = 0;
        for (std::size_t col = 0; col < kFeatureCount; ++col) {
            if (is_categorical_column(col)) {
                auto& m = schema.categorical_maps[categorical_slot(col)];
                m.emplace(r.features[col], 0);  // index assigned after the scan
            } else {
                double v = parse_numeric(r.features[col], col);
                if (first) {
                    schema.numeric_min[num_idx] = v;
                    schema.numeric_max[num_idx] = v;
                } else {
                    schema.numeric_min[num_idx] = std::min(schema.numeric_min[num_idx], v);
                    schema.numeric_max[num_idx] = std::max(schema.numeric_max[num_idx], v);
                }
                ++num_idx;
            }
        }
        first = false;
    }

    std::size_t cat_dim = 0;
    for (auto& m : schema.categorical_maps) {
        std::size_t idx = 0;
        for (auto& [key, slot] : m) slot = idx++;  // map order is lexicographic, frozen
        cat_dim += m.size();
    }
    schema.output_dim = kNumericColumnCount + cat_dim;
    return schema;
}

EncodedRecord encode(const RawRecord& r, const EncodingSchema& schema, std::size_t source_index) {
    if (r.features.size() != kFeatureCount)
        throw std::runtime_error("encode: record with wrong feature count");

    EncodedRecord e;
    e.x.reserve(schema.output_dim);
    e.source_index = source_index;

    std::size_t num_idx = 0;
    for (std::size_t col = 0; col < kFeatureCount; ++col) {
        if (is_categorical_column(col)) {
            const auto& m = schema.categorical_maps[categorical_slot(col)];
            std::size_t base = e.x.size();
            e.x.resize(base + m.size(), 0.0);
            auto it = m.find(r.features[col]);
            if (it != m.end()) e.x[base + it->second] = 1.0;
            // unseen category: all-zeros block
        } else {
            double v = parse_numeric(r.features[col], col);
            double lo = schema.numeric_min[num_idx];
            double hi = schema.numeric_max[num_idx];
            double scaled = (hi > lo) ? (v - lo) / (hi - lo) : 0.0;
            e.x.push_back(std::clamp(scaled, 0.0, 1.0));
            ++num_idx;
        }
    }
    e.y = (r.label == "normal") ? 0 : 1;
    return e;
}

std::vector<EncodedRecord> encode_all(const std::vector<RawRecord>& rows,
                                      const EncodingSchema& schema) {
    std::vector<EncodedRecord> out;
    out.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) out.push_back(encode(rows[i], schema, i));
    return out;
}

std::vector<DeviceStream> partition_streams(const std::vector<EncodedRecord>& records,
                                            const PartitionParams& p) {
    if (p.n_devices < 1)
        throw std::runtime_error("partition_streams: n_devices must be >= 1");
    if (p.attacker_ratio < 0.0 || p.attacker_ratio > 1.0)
        throw std::runtime_error("partition_streams: attacker_ratio must lie in [0,1]");

    std::vector<std::size_t> attack_pool, normal_pool;
    for (std::size_t i = 0; i < records.size(); ++i)
        (records[i].y == 1 ? attack_pool : normal_pool).push_back(i);

    Rng rng(derive_seed(p.seed, "partition"));
    auto shuffle = [&rng](std::vector<std::size_t>& v) {
        for (std::size_t i = v.size(); i > 1; --i)
            std::swap(v[i - 1], v[rng.below(i)]);
    };
    shuffle(attack_pool);
    shuffle(normal_pool);

    int n_attackers = static_cast<int>(std::ceil(p.attacker_ratio * p.n_devices));
    n_attackers = std::min(n_attackers, p.n_devices);
    int n_normals = p.n_devices - n_attackers;
    int n_contaminated = static_cast<int>(std::round(p.contaminated_normal_ratio * n_normals));

    const std::size_t len = std::max<std::size_t>(1, p.records_per_device);
    auto mix_counts = [&](double attack_frac) {
        auto a = static_cast<std::size_t>(std::round(attack_frac * static_cast<double>(len)));
        return std::pair<std::size_t, std::size_t>{a, len - a};
    };

    // demand check up front so the error can name the shortfall
    std::size_t need_attack = 0, need_normal = 0;
    for (int d = 0; d < p.n_devices; ++d) {
        double frac;
        if (d < n_attackers)
            frac = p.attacker_attack_fraction;
        else if (d < n_attackers + n_contaminated)
            frac = p.contamination_fraction;
        else
            frac = p.normal_attack_fraction;
        auto [a, n] = mix_counts(frac);
        need_attack += a;
        need_normal += n;
    }
    if (need_attack > attack_pool.size() || need_normal > normal_pool.size())
        throw std::runtime_error(
            "partition_streams: insufficient records (attack: need " +
            std::to_string(need_attack) + ", have " + std::to_string(attack_pool.size()) +
            "; normal: need " + std::to_string(need_normal) + ", have " +
            std::to_string(normal_pool.size()) + ")");

    std::vector<DeviceStream> streams;
    streams.reserve(p.n_devices);
    std::size_t ai = 0, ni = 0;
    for (int d = 0; d < p.n_devices; ++d) {
        double frac;
        if (d < n_attackers)
            frac = p.attacker_attack_fraction;
        else if (d < n_attackers + n_contaminated)
            frac = p.contamination_fraction;
        else
            frac = p.normal_attack_fraction;
        auto [a, n] = mix_counts(frac);

        DeviceStream s;
        s.device_id = d;
        s.records.reserve(len);
        for (std::size_t k = 0; k < a; ++k) s.records.push_back(records[attack_pool[ai++]]);
        for (std::size_t k = 0; k < n; ++k) s.records.push_back(records[normal_pool[ni++]]);
        // interleave deterministically so attacks are spread over the stream
        shuffle_stream(s.records, derive_seed(p.seed, "stream" + std::to_string(d)));

        std::size_t attacks = 0;
        for (const auto& r : s.records) attacks += static_cast<std::size_t>(r.y);
        s.attack_fraction = static_cast<double>(attacks) / static_cast<double>(s.records.size());
        s.is_attacker = s.attack_fraction >= p.attacker_threshold;
        streams.push_back(std::move(s));
    }
    return streams;
}

void save_schema(const EncodingSchema& schema, const std::string& path) {
    nlohmann::json j;
    j["version"] = 1;
    j["output_dim"] = schema.output_dim;
    j["numeric_min"] = schema.numeric_min;
    j["numeric_max"] = schema.numeric_max;
    for (std::size_t i = 0; i < schema.categorical_maps.size(); ++i) {
        nlohmann::json m = nlohmann::json::object();
        for (const auto& [cat, idx] : schema.categorical_maps[i]) m[cat] = idx;
        j["categorical_maps"].push_back(m);
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write schema file: " + path);
    out << j.dump(2) << '\n';
}

EncodingSchema load_schema(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open schema file: " + path);
    nlohmann::json j;
    in >> j;
    if (j.value("version", 0) != 1)
        throw std::runtime_error("unsupported schema file version in " + path);
    EncodingSchema s;
    s.output_dim = j.at("output_dim").get<std::size_t>();
    s.numeric_min = j.at("numeric_min").get<std::vector<double>>();
    s.numeric_max = j.at("numeric_max").get<std::vector<double>>();
    const auto& maps = j.at("categorical_maps");
    if (maps.size() != s.categorical_maps.size())
        throw std::runtime_error("schema file must hold 3 categorical maps: " + path);
    for (std::size_t i = 0; i < s.categorical_maps.size(); ++i)
        for (const auto& [cat, idx] : maps[i].items())
            s.categorical_maps[i][cat] = idx.get<std::size_t>();
    return s;
}

}  // namespace dqm::dataset
