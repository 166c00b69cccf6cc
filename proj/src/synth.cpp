#include "dqm/synth.hpp"

#include <array>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "dqm/rng.hpp"

namespace dqm::synth {

namespace {

const std::array<const char*, 12> kAttackLabels = {
    "neptune", "smurf",    "back",     "teardrop",     "pod",         "land",
    "satan",   "ipsweep",  "portsweep", "nmap",        "guess_passwd", "warezclient"};

const std::array<const char*, 13> kServices = {
    "http", "smtp", "ftp", "ftp_data", "telnet", "domain_u", "private",
    "ecr_i", "eco_i", "other", "pop_3", "auth", "finger"};

const std::array<const char*, 10> kFlags = {"SF",  "S0", "REJ", "RSTO", "RSTR",
                                            "SH",  "S1", "S2",  "S3",   "OTH"};

std::string fmt_int(long v) { return std::to_string(v); }

std::string fmt_rate(double v) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

}  // namespace

std::vector<dataset::RawRecord> generate(const SynthParams& p) {
    Rng rng(derive_seed(p.seed, "synth"));
    std::vector<dataset::RawRecord> rows;
    rows.reserve(p.n_records);

    for (std::size_t i = 0; i < p.n_records; ++i) {
        bool attack = rng.next_double() < p.attack_fraction;
        bool hard = rng.next_double() <
                    (attack ? p.hard_fraction_attack : p.hard_fraction_normal);
        // the linear cues follow the apparent class; hard rows masquerade as
        // the other class and only the parity pair gives them away
        bool apparent = attack != hard;

        dataset::RawRecord r;
        r.features.assign(dataset::kFeatureCount, "0");

        // duration
        r.features[0] = fmt_int(static_cast<long>(rng.uniform(0, apparent ? 30 : 300)));
        // protocol_type / service / flag
        double up = rng.next_double();
        r.features[1] = apparent ? (up < 0.5 ? "tcp" : (up < 0.7 ? "udp" : "icmp"))
                                 : (up < 0.7 ? "tcp" : (up < 0.9 ? "udp" : "icmp"));
        r.features[2] = kServices[rng.below(kServices.size())];
        double uf = rng.next_double();
        r.features[3] = apparent ? (uf < 0.5 ? "S0" : (uf < 0.8 ? "REJ" : "SF"))
                                 : (uf < 0.85 ? "SF" : kFlags[rng.below(kFlags.size())]);

        // linear cues: byte volumes and connection counts shifted by apparent class
        double mu = apparent ? 0.72 : 0.28;
        auto cue = [&](double scale) {
            double v = (mu + 0.08 * rng.gaussian()) * scale;
            return v < 0 ? 0.0 : v;
        };
        r.features[4] = fmt_int(static_cast<long>(cue(5000)));   // src_bytes
        r.features[5] = fmt_int(static_cast<long>(cue(3000)));   // dst_bytes
        r.features[9] = fmt_int(static_cast<long>(cue(30)));     // hot
        r.features[22] = fmt_int(static_cast<long>(cue(511)));   // count
        r.features[23] = fmt_int(static_cast<long>(cue(511)));   // srv_count
        r.features[31] = fmt_int(static_cast<long>(cue(255)));   // dst_host_count

        // parity pair: a xor b equals the true class for every row
        bool a = rng.next_double() < 0.5;
        bool b = a != attack;
        r.features[24] = fmt_rate((a ? 1.0 : 0.0) + 0.02 * rng.gaussian());  // serror_rate
        r.features[25] = fmt_rate((b ? 1.0 : 0.0) + 0.02 * rng.gaussian());  // srv_serror_rate

        // background columns: sparse counts and uninformative rates
        r.features[7] = fmt_int(static_cast<long>(rng.next_double() < 0.02 ? rng.below(3) : 0));
        r.features[11] = fmt_int(rng.next_double() < 0.6 ? 1 : 0);  // logged_in
        for (std::size_t col : {26u, 27u, 33u, 34u, 35u, 36u})
            r.features[col] = fmt_rate(rng.next_double());
        r.features[32] = fmt_int(static_cast<long>(rng.below(256)));

        r.label = attack ? kAttackLabels[rng.below(kAttackLabels.size())] : "normal";
        r.difficulty = static_cast<int>(1 + rng.below(21));
        rows.push_back(std::move(r));
    }
    return rows;
}

void write_file(const std::string& path, const std::vector<dataset::RawRecord>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write: " + path);
    for (const auto& r : rows) {
        for (const auto& f : r.features) out << f << ',';
        out << r.label << ',' << r.difficulty << '\n';
    }
}

}  // namespace dqm::synth
