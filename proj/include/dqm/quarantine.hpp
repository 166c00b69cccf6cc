#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dqm/dataset.hpp"

namespace dqm::quarantine {

using dataset::EncodedRecord;

struct QuarantineParams {
    double si_min = 0.001;        // clamp for the spam interval
    double si_init = 1.0;         // SI before a second attack exists
    double alpha = 0.7;           // reputation smoothing
    double ss_threshold = 9.0;    // spam score at which a device is untrustworthy
    double blacklist_cut = 0.3;   // reputation below this at resolve -> blacklist
    double quarantine_ttl = 30.0; // simulated seconds
    double scrub_threshold = 0.75;
};

struct SpamStats {
    long nsd = 0;  // attacks to the device's modal destination
    long nmd = 0;  // attacks to other destinations
    long nss = 0;  // total attacks from this device
    std::optional<double> last_attack_at;
    double si = 1.0;  // interval between the two most recent attacks
    std::map<int, long> destination_attacks;

    // modal destination observed so far; ties break to the smallest id
    std::optional<int> modal_destination() const;
};

struct SpamScore {
    double value = 0.0;
    double computed_at = 0.0;
};

SpamScore spam_score(const SpamStats& stats, const QuarantineParams& params,
                     double now = 0.0);

enum class ListStatus { pending, whitelist, blacklist };

std::string status_name(ListStatus s);

struct ReputationEntry {
    int device_id = 0;
    double score = 0.5;
    ListStatus status = ListStatus::pending;
    std::vector<std::pair<double, double>> history;  // (time, spam score)
};

// score <- alpha*score + (1-alpha)*(1 - min(ss/ss_threshold, 1))
void update_reputation(ReputationEntry& rep, const SpamScore& ss,
                       const QuarantineParams& params);

struct TimedRecord {
    double arrived_at = 0.0;
    EncodedRecord record;
    bool predicted_attack = false;
};

struct QuarantineEntry {
    int device_id = 0;
    std::string device_location;
    int worker_id = 0;
    std::vector<TimedRecord> buffered;
    double admitted_at = 0.0;
    double expires_at = 0.0;
    SpamStats spam_stats;
    ReputationEntry reputation;
    double max_ss = 0.0;
};

struct ScrubContext {
    const std::vector<const TimedRecord*>& released_so_far;
};

struct ScrubRule {
    std::string rule_id;
    double weight = 0.0;
    std::function<bool(const TimedRecord&, const ScrubContext&)> check;
};

// finite features / scaled range / no exact duplicates / monotone timestamps,
// equal weights
std::vector<ScrubRule> default_scrub_rules();

struct ScrubReport {
    long records_in = 0;
    long records_released = 0;
    long records_dropped = 0;
    double mean_scrub_score = 0.0;
};

std::pair<std::vector<TimedRecord>, ScrubReport> scrub(const std::vector<TimedRecord>& records,
                                                       const std::vector<ScrubRule>& rules,
                                                       double scrub_threshold);

enum class ArrivalResult { buffered, expired, blacklisted_now };

struct Resolution {
    int device_id = 0;
    ListStatus outcome = ListStatus::whitelist;
    std::vector<TimedRecord> released;
    ScrubReport scrub_report;
    long records_discarded = 0;  // blacklisted buffer, counted before discard
    double max_ss = 0.0;
    double final_reputation = 0.0;
};

struct EpisodeRecord {
    int device_id = 0;
    double admitted_at = 0.0;
    double resolved_at = 0.0;
    ListStatus outcome = ListStatus::whitelist;
    double max_ss = 0.0;
    double final_reputation = 0.0;
    long records_buffered = 0;
    long records_released = 0;
    long records_dropped = 0;
};

std::string episode_to_json(const EpisodeRecord& e);

// Short-time quarantine storage. Single-writer: owned by the simulation loop.
class QuarantineStore {
public:
    explicit QuarantineStore(QuarantineParams params,
                             std::vector<ScrubRule> rules = default_scrub_rules());

    QuarantineEntry& admit(int device_id, const std::string& device_location, int worker_id,
                           double now);

    ArrivalResult record_arrival(int device_id, const EncodedRecord& record,
                                 bool predicted_attack, int destination_id, double now);

    Resolution resolve(int device_id, double now);

    // resolves and removes every entry with expires_at <= now
    std::vector<Resolution> evict_expired(double now);

    bool is_pending(int device_id) const { return pending_.count(device_id) > 0; }
    bool is_blacklisted(int device_id) const { return blacklist_.count(device_id) > 0; }
    const QuarantineEntry& entry(int device_id) const;
    std::size_t pending_count() const { return pending_.size(); }
    const std::vector<EpisodeRecord>& episodes() const { return episodes_; }
    const QuarantineParams& params() const { return params_; }
    std::vector<int> pending_ids() const;

private:
    QuarantineParams params_;
    std::vector<ScrubRule> rules_;
    std::map<int, QuarantineEntry> pending_;
    std::set<int> blacklist_;
    std::vector<EpisodeRecord> episodes_;
};

}  // namespace dqm::quarantine
