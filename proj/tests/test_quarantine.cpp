#include <doctest.h>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "dqm/quarantine.hpp"
#include "dqm/rng.hpp"

using namespace dqm;
using quarantine::ArrivalResult;
using quarantine::ListStatus;
using quarantine::QuarantineParams;
using quarantine::QuarantineStore;
using quarantine::SpamStats;
using quarantine::TimedRecord;

namespace {

dataset::EncodedRecord enc(std::vector<double> x, int y = 1) {
    dataset::EncodedRecord e;
    e.x = std::move(x);
    e.y = y;
    return e;
}

TimedRecord timed(double t, std::vector<double> x, int y = 0, bool attack = false) {
    return TimedRecord{t, enc(std::move(x), y), attack};
}

}  // namespace

TEST_CASE("spam score matches hand-worked values") {
    QuarantineParams p;
    SpamStats s;

    // 3 attacks to the modal destination, 2 elsewhere, 4 total, 1s apart:
    // (3 + 2*4) / 1 = 11
    s.nsd = 3;
    s.nmd = 2;
    s.nss = 4;
    s.si = 1.0;
    CHECK(quarantine::spam_score(s, p, 2.5).value == doctest::Approx(11.0));
    CHECK(quarantine::spam_score(s, p, 2.5).computed_at == 2.5);

    // doubling the interval halves the score: (3 + 8) / 2 = 5.5
    s.si = 2.0;
    CHECK(quarantine::spam_score(s, p).value == doctest::Approx(5.5));

    // a single attack has no cross-destination term: (1 + 0) / 1 = 1
    SpamStats first;
    first.nsd = 1;
    first.nss = 1;
    first.si = p.si_init;
    CHECK(quarantine::spam_score(first, p).value == doctest::Approx(1.0));
}

TEST_CASE("spam score clamps the interval and handles zero attacks") {
    QuarantineParams p;
    SpamStats s;
    CHECK(quarantine::spam_score(s, p).value == 0.0);  // nss == 0

    s.nsd = 1;
    s.nmd = 0;
    s.nss = 1;
    s.si = 0.0;  // degenerate interval clamps to si_min
    CHECK(quarantine::spam_score(s, p).value == doctest::Approx(1.0 / p.si_min));
}

TEST_CASE("modal destination tracks the running mode with smallest-id ties") {
    SpamStats s;
    CHECK_FALSE(s.modal_destination().has_value());
    s.destination_attacks[4] = 2;
    s.destination_attacks[1] = 2;  // tie: smaller id wins
    CHECK(s.modal_destination() == 1);
    s.destination_attacks[4] = 3;
    CHECK(s.modal_destination() == 4);
}

TEST_CASE("reputation smoothing matches hand-worked values and stays in [0,1]") {
    QuarantineParams p;  // alpha 0.7, threshold 9
    quarantine::ReputationEntry rep;
    rep.score = 0.5;

    // harmless episode: 0.7*0.5 + 0.3*1 = 0.65
    quarantine::update_reputation(rep, {0.0, 1.0}, p);
    CHECK(rep.score == doctest::Approx(0.65));

    // saturated spam score: 0.7*0.65 + 0.3*0 = 0.455; penalty caps at 1
    quarantine::update_reputation(rep, {27.0, 2.0}, p);
    CHECK(rep.score == doctest::Approx(0.455));

    CHECK(rep.history.size() == 2);
    CHECK(rep.history[1].first == 2.0);
    CHECK(rep.history[1].second == 27.0);

    // fuzz: arbitrary ss sequences must keep the score in [0,1]
    Rng rng(12345);
    for (int trial = 0; trial < 200; ++trial) {
        quarantine::ReputationEntry r;
        r.score = rng.next_double();
        for (int step = 0; step < 50; ++step) {
            quarantine::update_reputation(r, {rng.uniform(0.0, 40.0), 0.0}, p);
            CHECK(r.score >= 0.0);
            CHECK(r.score <= 1.0);
        }
    }
}

TEST_CASE("scrub releases clean batches untouched") {
    auto rules = quarantine::default_scrub_rules();
    std::vector<TimedRecord> batch{timed(1.0, {0.1, 0.2}), timed(2.0, {0.3, 0.4}),
                                   timed(3.0, {0.5, 0.6})};
    auto [released, report] = quarantine::scrub(batch, rules, 0.75);
    CHECK(released.size() == 3);
    CHECK(report.records_in == 3);
    CHECK(report.records_released == 3);
    CHECK(report.records_dropped == 0);
    CHECK(report.mean_scrub_score == doctest::Approx(1.0));
}

TEST_CASE("scrub drops non-finite and out-of-range records") {
    auto rules = quarantine::default_scrub_rules();
    std::vector<TimedRecord> batch{
        // non-finite and out of range at once: two failed rules, score 0.5
        timed(1.0, {2.0, std::numeric_limits<double>::quiet_NaN()}),
        timed(2.0, {0.2, 0.3}),
        timed(3.0, {1.5, 0.0}),   // outside the scaled range only
        timed(4.0, {-0.04, 1.04}) // inside the tolerance band
    };
    // the default threshold tolerates one failed 0.25-weight rule
    auto [released, report] = quarantine::scrub(batch, rules, 0.75);
    REQUIRE(released.size() == 3);
    CHECK(released[0].arrived_at == 2.0);
    CHECK(report.records_dropped == 1);
    CHECK(report.mean_scrub_score == doctest::Approx((0.5 + 1.0 + 0.75 + 1.0) / 4.0));

    // a stricter threshold censors every violation
    auto [strict, strict_report] = quarantine::scrub(batch, rules, 0.9);
    REQUIRE(strict.size() == 2);
    CHECK(strict[0].arrived_at == 2.0);
    CHECK(strict[1].arrived_at == 4.0);
    CHECK(strict_report.records_dropped == 2);
}

TEST_CASE("scrub enforces the duplicate rule as a hard filter") {
    auto rules = quarantine::default_scrub_rules();
    std::vector<TimedRecord> batch{timed(1.0, {0.5, 0.5}), timed(2.0, {0.5, 0.5}),
                                   timed(3.0, {0.6, 0.6})};
    // the duplicate still passes 3 of 4 rules (score 0.75 >= threshold),
    // but an exact duplicate may never be released
    auto [released, report] = quarantine::scrub(batch, rules, 0.75);
    REQUIRE(released.size() == 2);
    CHECK(released[0].arrived_at == 1.0);
    CHECK(released[1].arrived_at == 3.0);
    // identical features with a different label is not a duplicate
    std::vector<TimedRecord> mixed{timed(1.0, {0.5, 0.5}, 0), timed(2.0, {0.5, 0.5}, 1)};
    CHECK(quarantine::scrub(mixed, rules, 0.75).first.size() == 2);
}

TEST_CASE("scrub flags timestamp regressions against the released prefix") {
    auto rules = quarantine::default_scrub_rules();
    std::vector<TimedRecord> batch{timed(5.0, {0.1, 0.1}), timed(3.0, {0.2, 0.2}),
                                   timed(6.0, {0.3, 0.3})};
    // the regressed record fails one 0.25-weight rule: score 0.75 passes at
    // the default threshold, so order alone does not censor it
    auto [released, report] = quarantine::scrub(batch, rules, 0.75);
    CHECK(released.size() == 3);
    // a stricter threshold turns the same failure into a drop
    auto [strict, strict_report] = quarantine::scrub(batch, rules, 0.9);
    REQUIRE(strict.size() == 2);
    CHECK(strict[0].arrived_at == 5.0);
    CHECK(strict[1].arrived_at == 6.0);
}

TEST_CASE("scrub conserves records and validates the rule set") {
    auto rules = quarantine::default_scrub_rules();
    Rng rng(777);
    std::vector<TimedRecord> batch;
    double t = 0.0;
    for (int i = 0; i < 300; ++i) {
        t += rng.next_double();
        std::vector<double> x{rng.uniform(-0.2, 1.2), rng.next_double()};
        batch.push_back(timed(t, std::move(x)));
    }
    auto [released, report] = quarantine::scrub(batch, rules, 0.75);
    CHECK(report.records_in == 300);
    CHECK(report.records_released + report.records_dropped == report.records_in);
    CHECK(static_cast<long>(released.size()) == report.records_released);

    CHECK_THROWS_AS(quarantine::scrub(batch, {}, 0.75), std::runtime_error);
    auto bad = rules;
    bad[0].weight = 0.5;  // weights no longer sum to 1
    CHECK_THROWS_AS(quarantine::scrub(batch, bad, 0.75), std::runtime_error);
    bad[0].weight = -0.25;
    CHECK_THROWS_AS(quarantine::scrub(batch, bad, 0.75), std::runtime_error);
}

TEST_CASE("store admits once and rejects blacklisted devices") {
    QuarantineParams p;
    p.quarantine_ttl = 10.0;
    QuarantineStore store(p);

    auto& e = store.admit(3, "edge-a", 2, 5.0);
    CHECK(e.admitted_at == 5.0);
    CHECK(e.expires_at == 15.0);
    CHECK(store.is_pending(3));
    CHECK(store.pending_count() == 1);
    CHECK_THROWS_WITH_AS(store.admit(3, "edge-a", 2, 6.0), doctest::Contains("already pending"),
                         std::runtime_error);

    // drive device 3 over the threshold so it lands on the blacklist
    for (int i = 0; i < 5; ++i)
        store.record_arrival(3, enc({0.5}), true, i % 2, 5.0 + 0.1 * i);
    auto res = store.resolve(3, 7.0);
    CHECK(res.outcome == ListStatus::blacklist);
    CHECK(store.is_blacklisted(3));
    CHECK_THROWS_WITH_AS(store.admit(3, "edge-a", 2, 8.0), doctest::Contains("blacklisted"),
                         std::runtime_error);
    CHECK_THROWS_AS(store.resolve(3, 9.0), std::runtime_error);  // no longer pending
    CHECK_THROWS_AS(store.entry(3), std::runtime_error);
}

TEST_CASE("record_arrival walks NSD/NMD/NSS exactly as the running mode dictates") {
    QuarantineParams p;
    p.quarantine_ttl = 100.0;
    p.ss_threshold = 1e9;  // keep the early exit out of this test
    QuarantineStore store(p);
    store.admit(1, "edge-a", 2, 0.0);

    // benign arrivals buffer without touching the stats
    CHECK(store.record_arrival(1, enc({0.0}, 0), false, 0, 1.0) == ArrivalResult::buffered);
    CHECK(store.entry(1).spam_stats.nss == 0);

    // 1st attack, dest 2: no mode yet -> NSD
    store.record_arrival(1, enc({0.1}), true, 2, 2.0);
    // 2nd attack, dest 0: mode is {2} -> NMD
    store.record_arrival(1, enc({0.2}), true, 0, 4.0);
    // 3rd attack, dest 0: tie 0/2 broke to 0 at the lookup, hit -> NSD
    store.record_arrival(1, enc({0.3}), true, 0, 5.0);
    // 4th attack, dest 2: mode is now {0} -> NMD
    store.record_arrival(1, enc({0.4}), true, 2, 9.0);

    const auto& s = store.entry(1).spam_stats;
    CHECK(s.nsd == 2);
    CHECK(s.nmd == 2);
    CHECK(s.nss == 4);
    CHECK(s.si == doctest::Approx(4.0));  // the last two attacks are 4s apart
    CHECK(s.destination_attacks.at(0) == 2);
    CHECK(s.destination_attacks.at(2) == 2);
    // running score: (2 + 2*4) / 4 = 2.5
    double expected = (2.0 + 2.0 * 4.0) / 4.0;
    CHECK(store.entry(1).max_ss >= expected);

    CHECK(store.record_arrival(1, enc({0.5}, 0), false, 0, 200.0) == ArrivalResult::expired);
    CHECK_THROWS_WITH_AS(store.record_arrival(9, enc({0.5}), true, 0, 1.0),
                         doctest::Contains("not pending"), std::runtime_error);
}

TEST_CASE("a single spam score past the threshold blacklists immediately") {
    QuarantineParams p;
    p.quarantine_ttl = 100.0;
    QuarantineStore store(p);
    store.admit(5, "edge-b", 3, 0.0);

    // two attacks 0.1s apart to different destinations:
    // score = (1 + 1*2) / 0.1 = 30 >= 9
    CHECK(store.record_arrival(5, enc({0.1}), true, 0, 1.0) == ArrivalResult::buffered);
    CHECK(store.record_arrival(5, enc({0.2}), true, 1, 1.1) == ArrivalResult::blacklisted_now);
    auto res = store.resolve(5, 1.1);
    CHECK(res.outcome == ListStatus::blacklist);
    CHECK(res.max_ss == doctest::Approx(30.0));
    CHECK(res.records_discarded == 2);
    CHECK(res.released.empty());
}

TEST_CASE("a quiet device whitelists and its buffer is scrubbed out") {
    QuarantineParams p;
    p.quarantine_ttl = 10.0;
    QuarantineStore store(p);
    store.admit(4, "edge-a", 2, 0.0);
    store.record_arrival(4, enc({0.1, 0.2}, 0), false, 0, 1.0);
    store.record_arrival(4, enc({0.3, 0.4}, 0), false, 1, 2.0);

    auto res = store.resolve(4, 10.0);
    CHECK(res.outcome == ListStatus::whitelist);
    CHECK(res.released.size() == 2);
    CHECK(res.scrub_report.records_in == 2);
    CHECK(res.records_discarded == 0);
    CHECK_FALSE(store.is_blacklisted(4));
    CHECK_FALSE(store.is_pending(4));

    REQUIRE(store.episodes().size() == 1);
    const auto& ep = store.episodes()[0];
    CHECK(ep.device_id == 4);
    CHECK(ep.outcome == ListStatus::whitelist);
    CHECK(ep.records_buffered == 2);
    CHECK(ep.records_released == 2);
}

TEST_CASE("a collapsed reputation blacklists even below the score threshold") {
    QuarantineParams p;
    p.quarantine_ttl = 1000.0;
    p.ss_threshold = 9.0;
    QuarantineStore store(p);
    store.admit(6, "edge-b", 3, 0.0);

    // repeated sub-threshold scores still bleed reputation below the cut:
    // each attack lands score ~8.5 -> penalty ~0.94
    double t = 10.0;
    for (int i = 0; i < 12; ++i) {
        auto r = store.record_arrival(6, enc({0.1 * i}), true, 0, t);
        REQUIRE(r == ArrivalResult::buffered);
        // same destination keeps NMD at 0: score = nsd/si
        t += static_cast<double>(i + 2) / 8.5;  // spaced so nsd/si stays at 8.5
    }
    CHECK(store.entry(6).max_ss < 9.0);
    CHECK(store.entry(6).reputation.score < p.blacklist_cut);
    auto res = store.resolve(6, t);
    CHECK(res.outcome == ListStatus::blacklist);
}

TEST_CASE("evict_expired resolves exactly the entries at or past their deadline") {
    QuarantineParams p;
    p.quarantine_ttl = 10.0;
    QuarantineStore store(p);
    store.admit(1, "edge-a", 2, 0.0);   // expires at 10
    store.admit(2, "edge-a", 2, 4.0);   // expires at 14
    store.record_arrival(1, enc({0.2}, 0), false, 0, 1.0);

    CHECK(store.evict_expired(9.999).empty());
    auto evicted = store.evict_expired(10.0);  // boundary: expires_at <= now
    REQUIRE(evicted.size() == 1);
    CHECK(evicted[0].device_id == 1);
    CHECK(evicted[0].outcome == ListStatus::whitelist);
    CHECK(store.pending_count() == 1);
    CHECK(store.pending_ids() == std::vector<int>{2});

    auto rest = store.evict_expired(100.0);
    REQUIRE(rest.size() == 1);
    CHECK(rest[0].device_id == 2);
    CHECK(store.pending_count() == 0);
}

TEST_CASE("episode json carries the resolution fields") {
    quarantine::EpisodeRecord ep;
    ep.device_id = 12;
    ep.admitted_at = 1.5;
    ep.resolved_at = 9.5;
    ep.outcome = ListStatus::blacklist;
    ep.max_ss = 42.0;
    ep.records_buffered = 7;
    auto j = quarantine::episode_to_json(ep);
    CHECK(j.find("\"device_id\":12") != std::string::npos);
    CHECK(j.find("\"outcome\":\"blacklist\"") != std::string::npos);
    CHECK(j.find("\"records_buffered\":7") != std::string::npos);
}
