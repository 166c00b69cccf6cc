#include "dqm/quarantine.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace dqm::quarantine {

std::optional<int> SpamStats::modal_destination() const {
    std::optional<int> best;
    long best_count = 0;
    for (const auto& [dest, count] : destination_attacks) {
        if (count > best_count) {  // map order gives smallest id on ties
            best = dest;
            best_count = count;
        }
    }
    return best;
}

SpamScore spam_score(const SpamStats& stats, const QuarantineParams& params, double now) {
    SpamScore ss;
    ss.computed_at = now;
    if (stats.nss == 0) return ss;  // no attacks observed
    double si = std::max(stats.si, params.si_min);
    ss.value = (static_cast<double>(stats.nsd) +
                static_cast<double>(stats.nmd) * static_cast<double>(stats.nss)) /
               si;
    return ss;
}

std::string status_name(ListStatus s) {
    switch (s) {
        case ListStatus::pending: return "pending";
        case ListStatus::whitelist: return "whitelist";
        case ListStatus::blacklist: return "blacklist";
    }
    throw std::logic_error("bad list status");
}

void update_reputation(ReputationEntry& rep, const SpamScore& ss,
                       const QuarantineParams& params) {
    double penalty = std::min(ss.value / params.ss_threshold, 1.0);
    rep.score = params.alpha * rep.score + (1.0 - params.alpha) * (1.0 - penalty);
    rep.score = std::clamp(rep.score, 0.0, 1.0);
    rep.history.emplace_back(ss.computed_at, ss.value);
}

std::vector<ScrubRule> default_scrub_rules() {
    std::vector<ScrubRule> rules;
    rules.push_back({"finite", 0.25, [](const TimedRecord& r, const ScrubContext&) {
                         for (double v : r.record.x)
                             if (!std::isfinite(v)) return false;
                         return true;
                     }});
    rules.push_back({"range", 0.25, [](const TimedRecord& r, const ScrubContext&) {
                         for (double v : r.record.x)
                             if (v < -0.05 || v > 1.05) return false;
                         return true;
                     }});
    rules.push_back({"no_duplicate", 0.25, [](const TimedRecord& r, const ScrubContext& ctx) {
                         for (const TimedRecord* rel : ctx.released_so_far)
                             if (rel->record.x == r.record.x && rel->record.y == r.record.y)
                                 return false;
                         return true;
                     }});
    rules.push_back({"monotone_time", 0.25, [](const TimedRecord& r, const ScrubContext& ctx) {
                         if (ctx.released_so_far.empty()) return true;
                         return r.arrived_at >= ctx.released_so_far.back()->arrived_at;
                     }});
    return rules;
}

std::pair<std::vector<TimedRecord>, ScrubReport> scrub(const std::vector<TimedRecord>& records,
                                                       const std::vector<ScrubRule>& rules,
                                                       double scrub_threshold) {
    if (rules.empty()) throw std::runtime_error("scrub: empty rule set");
    double weight_sum = 0.0;
    for (const auto& r : rules) {
        if (r.weight <= 0.0) throw std::runtime_error("scrub: rule weight must be positive");
        weight_sum += r.weight;
    }
    if (std::abs(weight_sum - 1.0) > 1e-9)
        throw std::runtime_error("scrub: rule weights must sum to 1");

    std::vector<TimedRecord> released;
    released.reserve(records.size());  // keeps released_ptrs stable
    std::vector<const TimedRecord*> released_ptrs;
    ScrubReport report;
    report.records_in = static_cast<long>(records.size());
    double score_sum = 0.0;

    for (const auto& rec : records) {
        ScrubContext ctx{released_ptrs};
        double score = 0.0;
        bool duplicate = false;
        for (const auto& rule : rules) {
            bool pass = rule.check(rec, ctx);
            if (pass)
                score += rule.weight;
            else if (rule.rule_id == "no_duplicate")
                duplicate = true;
        }
        score_sum += score;
        if (score >= scrub_threshold && !duplicate) {
            released.push_back(rec);
            released_ptrs.push_back(&released.back());
        } else {
            report.records_dropped++;
        }
    }
    report.records_released = static_cast<long>(released.size());
    report.mean_scrub_score =
        records.empty() ? 0.0 : score_sum / static_cast<double>(records.size());
    return {std::move(released), report};
}

std::string episode_to_json(const EpisodeRecord& e) {
    std::ostringstream os;
    os << "{\"device_id\":" << e.device_id << ",\"admitted_at\":" << e.admitted_at
       << ",\"resolved_at\":" << e.resolved_at << ",\"outcome\":\"" << status_name(e.outcome)
       << "\",\"max_ss\":" << e.max_ss << ",\"final_reputation\":" << e.final_reputation
       << ",\"records_buffered\":" << e.records_buffered
       << ",\"records_released\":" << e.records_released
       << ",\"records_dropped\":" << e.records_dropped << "}";
    return os.str();
}

QuarantineStore::QuarantineStore(QuarantineParams params, std::vector<ScrubRule> rules)
    : params_(params), rules_(std::move(rules)) {}

const QuarantineEntry& QuarantineStore::entry(int device_id) const {
    auto it = pending_.find(device_id);
    if (it == pending_.end())
        throw std::runtime_error("no pending quarantine entry for device " +
                                 std::to_string(device_id));
    return it->second;
}

std::vector<int> QuarantineStore::pending_ids() const {
    std::vector<int> ids;
    ids.reserve(pending_.size());
    for (const auto& [id, _] : pending_) ids.push_back(id);
    return ids;
}

QuarantineEntry& QuarantineStore::admit(int device_id, const std::string& device_location,
                                        int worker_id, double now) {
    if (pending_.count(device_id))
        throw std::runtime_error("admit: device " + std::to_string(device_id) +
                                 " already pending");
    if (blacklist_.count(device_id))
        throw std::runtime_error("admit: device " + std::to_string(device_id) +
                                 " is blacklisted");
    QuarantineEntry e;
    e.device_id = device_id;
    e.device_location = device_location;
    e.worker_id = worker_id;
    e.admitted_at = now;
    e.expires_at = now + params_.quarantine_ttl;
    e.spam_stats.si = params_.si_init;
    e.reputation.device_id = device_id;
    return pending_.emplace(device_id, std::move(e)).first->second;
}

ArrivalResult QuarantineStore::record_arrival(int device_id, const EncodedRecord& record,
                                              bool predicted_attack, int destination_id,
                                              double now) {
    auto it = pending_.find(device_id);
    if (it == pending_.end())
        throw std::runtime_error("record_arrival: device " + std::to_string(device_id) +
                                 " is not pending");
    QuarantineEntry& e = it->second;
    if (now >= e.expires_at) return ArrivalResult::expired;

    e.buffered.push_back({now, record, predicted_attack});
    if (!predicted_attack) return ArrivalResult::buffered;

    SpamStats& s = e.spam_stats;
    auto modal = s.modal_destination();
    if (!modal || destination_id == *modal)
        s.nsd++;
    else
        s.nmd++;
    s.nss++;
    s.destination_attacks[destination_id]++;
    if (s.last_attack_at)
        s.si = std::max(now - *s.last_attack_at, params_.si_min);
    s.last_attack_at = now;

    SpamScore ss = spam_score(s, params_, now);
    e.max_ss = std::max(e.max_ss, ss.value);
    update_reputation(e.reputation, ss, params_);

    // early exit: a single score past the threshold blacklists immediately
    if (ss.value >= params_.ss_threshold) return ArrivalResult::blacklisted_now;
    return ArrivalResult::buffered;
}

Resolution QuarantineStore::resolve(int device_id, double now) {
    auto it = pending_.find(device_id);
    if (it == pending_.end())
        throw std::runtime_error("resolve: device " + std::to_string(device_id) +
                                 " is not pending");
    QuarantineEntry e = std::move(it->second);
    pending_.erase(it);

    Resolution res;
    res.device_id = device_id;
    res.max_ss = e.max_ss;
    res.final_reputation = e.reputation.score;

    bool blacklist =
        e.max_ss >= params_.ss_threshold || e.reputation.score < params_.blacklist_cut;
    EpisodeRecord ep;
    ep.device_id = device_id;
    ep.admitted_at = e.admitted_at;
    ep.resolved_at = now;
    ep.max_ss = e.max_ss;
    ep.final_reputation = e.reputation.score;
    ep.records_buffered = static_cast<long>(e.buffered.size());

    if (blacklist) {
        res.outcome = ListStatus::blacklist;
        res.records_discarded = static_cast<long>(e.buffered.size());
        blacklist_.insert(device_id);
        ep.outcome = ListStatus::blacklist;
    } else {
        res.outcome = ListStatus::whitelist;
        auto [released, report] = scrub(e.buffered, rules_, params_.scrub_threshold);
        res.released = std::move(released);
        res.scrub_report = report;
        ep.outcome = ListStatus::whitelist;
        ep.records_released = report.records_released;
        ep.records_dropped = report.records_dropped;
    }
    episodes_.push_back(ep);
    return res;
}

std::vector<Resolution> QuarantineStore::evict_expired(double now) {
    std::vector<int> expired;
    for (const auto& [id, e] : pending_)
        if (e.expires_at <= now) expired.push_back(id);
    std::vector<Resolution> out;
    out.reserve(expired.size());
    for (int id : expired) out.push_back(resolve(id, now));
    return out;
}

}  // namespace dqm::quarantine
