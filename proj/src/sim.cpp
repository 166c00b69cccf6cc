#include "dqm/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <queue>
#include <set>
#include <sstream>
#include <stdexcept>

#include "dqm/rng.hpp"

namespace dqm::sim {

std::string event_kind_name(EventKind k) {
    switch (k) {
        case EventKind::emit: return "emit";
        case EventKind::arrive_worker: return "arrive_worker";
        case EventKind::classify: return "classify";
        case EventKind::route: return "route";
        case EventKind::quarantine_arrival: return "quarantine_arrival";
        case EventKind::quarantine_resolve: return "quarantine_resolve";
        case EventKind::deliver_analytics: return "deliver_analytics";
    }
    throw std::logic_error("bad event kind");
}

namespace {

std::string fmt_time(double t) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", t);
    return buf;
}

}  // namespace

std::string trace_to_ndjson(const std::vector<TraceEvent>& trace) {
    std::ostringstream os;
    for (const auto& e : trace) {
        os << "{\"t\":" << fmt_time(e.t) << ",\"kind\":\"" << event_kind_name(e.kind)
           << "\",\"device\":" << e.device << ",\"worker\":" << e.worker
           << ",\"record_idx\":" << e.record_idx << ",\"decision\":\"" << e.decision
           << "\"}\n";
    }
    return os.str();
}

std::string report_to_json(const SimReport& r) {
    std::ostringstream os;
    os.precision(17);  // the accuracy must survive a parse round-trip exactly
    os << "{\n"
       << "  \"n_devices\": " << r.n_devices << ",\n"
       << "  \"model\": \"" << r.model_kind << "\",\n"
       << "  \"devices_quarantined\": " << r.devices_quarantined << ",\n"
       << "  \"packets_generated\": " << r.packets_generated << ",\n"
       << "  \"packets_quarantined\": " << r.packets_quarantined << ",\n"
       << "  \"packets_delivered\": " << r.packets_delivered << ",\n"
       << "  \"packets_dropped_blacklist\": " << r.packets_dropped_blacklist << ",\n"
       << "  \"records_released\": " << r.records_released << ",\n"
       << "  \"records_dropped_scrub\": " << r.records_dropped_scrub << ",\n"
       << "  \"records_discarded\": " << r.records_discarded << ",\n"
       << "  \"episodes_whitelist\": " << r.episodes_whitelist << ",\n"
       << "  \"episodes_blacklist\": " << r.episodes_blacklist << ",\n"
       << "  \"quarantine_confusion\": {\"tp\": " << r.quarantine_confusion.tp
       << ", \"fp\": " << r.quarantine_confusion.fp << ", \"tn\": " << r.quarantine_confusion.tn
       << ", \"fn\": " << r.quarantine_confusion.fn << "},\n"
       << "  \"quarantine_accuracy\": " << r.quarantine_accuracy << "\n"
       << "}\n";
    return os.str();
}

Topology build_topology(const SimConfig& config) {
    if (config.n_devices < 1) throw std::runtime_error("build_topology: n_devices must be >= 1");
    if (config.n_workers < 1) throw std::runtime_error("build_topology: n_workers must be >= 1");

    Topology t;
    Rng rng(derive_seed(config.seed, "topology"));
    auto bandwidth = [&] {
        return rng.uniform(config.bandwidth_min_mbits, config.bandwidth_max_mbits);
    };
    const double capacity = 100e8;

    t.cloud_id = 0;
    t.nodes.push_back({0, NodeRole::cloud, 10240, 16.0, capacity});
    t.broker_id = 1;
    t.nodes.push_back({1, NodeRole::broker, 2048, 3.0, capacity});
    for (int w = 0; w < config.n_workers; ++w) {
        int id = 2 + w;
        t.worker_ids.push_back(id);
        t.nodes.push_back({id, NodeRole::edge_worker, 2048, 3.0, capacity});
    }
    int device_base = 2 + config.n_workers;
    for (int d = 0; d < config.n_devices; ++d) {
        int id = device_base + d;
        t.device_ids.push_back(id);
        t.nodes.push_back({id, NodeRole::device, 500, 1.0, capacity});
        t.device_worker[id] = t.worker_ids[d % config.n_workers];
    }

    auto add_link = [&](int src, int dst) {
        LinkSpec l{src, dst, bandwidth(), 0.0};
        t.links.push_back(l);
        t.link_by_endpoints[{src, dst}] = l;
    };
    for (int d = 0; d < config.n_devices; ++d)
        add_link(t.device_ids[d], t.device_worker[t.device_ids[d]]);
    for (int w : t.worker_ids) add_link(w, t.broker_id);
    add_link(t.broker_id, t.cloud_id);
    return t;
}

double transmission_delay(long packet_size_bytes, const LinkSpec& link) {
    if (packet_size_bytes <= 0) throw std::runtime_error("transmission_delay: size must be > 0");
    return 8.0 * static_cast<double>(packet_size_bytes) / (link.bandwidth_mbits * 1e6) +
           link.latency_s;
}

namespace {

struct SimEvent {
    double t = 0.0;
    long seq = 0;
    EventKind kind = EventKind::emit;
    int device = -1;       // logical device index 0..n_devices-1
    long record_idx = -1;  // index into the device's stream
    bool released = false; // deliver_analytics: released from quarantine vs direct
};

struct EventOrder {
    bool operator()(const SimEvent& a, const SimEvent& b) const {
        if (a.t != b.t) return a.t > b.t;
        return a.seq > b.seq;
    }
};

class Simulation {
public:
    Simulation(const SimConfig& cfg, const classify::TrainedModel& model,
               const std::vector<dataset::DeviceStream>& streams)
        : cfg_(cfg),
          model_(model),
          streams_(streams),
          topo_(build_topology(cfg)),
          store_(cfg.quarantine) {
        if (static_cast<int>(streams.size()) != cfg.n_devices)
            throw std::runtime_error("run: stream count " + std::to_string(streams.size()) +
                                     " does not match n_devices " +
                                     std::to_string(cfg.n_devices));
        for (const auto& s : streams)
            if (!s.records.empty() && s.records[0].x.size() != model.feature_dim)
                throw std::runtime_error("run: model feature_dim does not match stream records");
        predictions_.resize(streams.size());
        destinations_.resize(streams.size());
    }

    RunResult execute() {
        for (int d = 0; d < cfg_.n_devices; ++d) {
            Rng phase_rng(derive_seed(cfg_.seed, "phase" + std::to_string(d)));
            double phase = phase_rng.uniform(0.0, cfg_.emission_interval_s);
            if (phase <= cfg_.duration_s && !streams_[d].records.empty())
                push(phase, EventKind::emit, d, 0);
        }
        while (true) {
            while (!queue_.empty()) {
                SimEvent ev = queue_.top();
                queue_.pop();
                now_ = ev.t;
                dispatch(ev);
            }
            // normally every entry resolved via its scheduled event; this
            // drains anything admitted by a same-time re-route at the end
            auto pending = store_.pending_ids();
            if (pending.empty()) break;
            double t_end = std::max(now_, cfg_.duration_s);
            for (int id : pending) handle_resolution(store_.resolve(id, t_end), t_end);
        }

        RunResult result;
        std::vector<bool> gt;
        gt.reserve(streams_.size());
        for (const auto& s : streams_) gt.push_back(s.is_attacker);
        result.report = collect_metrics(trace_, gt);
        result.report.model_kind = classify::kind_name(model_.kind);
        result.trace = std::move(trace_);
        result.episodes = store_.episodes();
        return result;
    }

private:
    void push(double t, EventKind kind, int device, long record_idx, bool released = false) {
        queue_.push({t, seq_++, kind, device, record_idx, released});
    }

    void record(double t, EventKind kind, int device, int worker, long record_idx,
                std::string decision) {
        trace_.push_back({t, kind, device, worker, record_idx, std::move(decision)});
    }

    int worker_of(int device) const { return topo_.device_worker.at(topo_.device_ids[device]); }

    const LinkSpec& link(int src, int dst) const { return topo_.link_by_endpoints.at({src, dst}); }

    int pick_destination(int device) {
        auto& rng_ptr = destinations_[device];
        if (!rng_ptr) rng_ptr = std::make_unique<Rng>(
                derive_seed(cfg_.seed, "dest" + std::to_string(device)));
        int home = device % cfg_.n_destinations;
        if (rng_ptr->next_double() < cfg_.p_home_destination) return home;
        return static_cast<int>(rng_ptr->below(cfg_.n_destinations));
    }

    void dispatch(const SimEvent& ev) {
        switch (ev.kind) {
            case EventKind::emit: return on_emit(ev);
            case EventKind::arrive_worker: return on_arrive_worker(ev);
            case EventKind::classify: return on_classify(ev);
            case EventKind::route: return on_route(ev);
            case EventKind::quarantine_resolve: return on_scheduled_resolve(ev);
            case EventKind::deliver_analytics:
                record(ev.t, EventKind::deliver_analytics, ev.device, -1, ev.record_idx,
                       ev.released ? "released" : "direct");
                return;
            default:
                throw std::runtime_error("malformed trace: unexpected queued event kind");
        }
    }

    void on_emit(const SimEvent& ev) {
        const auto& stream = streams_[ev.device];
        record(ev.t, EventKind::emit, ev.device, -1, ev.record_idx, "packet");
        // destination decided at emission so it is queue-order independent
        dest_of_[{ev.device, ev.record_idx}] = pick_destination(ev.device);

        double delay = transmission_delay(
            cfg_.packet_size_bytes, link(topo_.device_ids[ev.device], worker_of(ev.device)));
        push(ev.t + delay, EventKind::arrive_worker, ev.device, ev.record_idx);

        long next = ev.record_idx + 1;
        double t_next = ev.t + cfg_.emission_interval_s;
        if (next < static_cast<long>(stream.records.size()) && t_next <= cfg_.duration_s)
            push(t_next, EventKind::emit, ev.device, next);
    }

    void on_arrive_worker(const SimEvent& ev) {
        record(ev.t, EventKind::arrive_worker, ev.device, worker_of(ev.device), ev.record_idx,
               "");
        push(ev.t + cfg_.service_time_s, EventKind::classify, ev.device, ev.record_idx);
    }

    void on_classify(const SimEvent& ev) {
        const auto& rec = streams_[ev.device].records[ev.record_idx];
        if (model_.kind == classify::ModelKind::LDA)
            classify::project_lda(model_, rec.x);  // the 1-D stream sent on to the broker
        int pred = classify::predict(model_, rec.x);
        predictions_[ev.device][ev.record_idx] = pred;
        record(ev.t, EventKind::classify, ev.device, worker_of(ev.device), ev.record_idx,
               pred == 1 ? "attack" : "normal");
        double delay =
            transmission_delay(cfg_.packet_size_bytes, link(worker_of(ev.device), topo_.broker_id));
        push(ev.t + delay, EventKind::route, ev.device, ev.record_idx);
    }

    void on_route(const SimEvent& ev) { route_record(ev.t, ev.device, ev.record_idx); }

    void route_record(double t, int device, long record_idx) {
        const auto& rec = streams_[device].records[record_idx];
        bool pred_attack = predictions_[device].at(record_idx) == 1;
        int dest = dest_of_.at({device, record_idx});

        if (store_.is_blacklisted(device)) {
            record(t, EventKind::route, device, -1, record_idx, "drop_blacklist");
            return;
        }
        if (store_.is_pending(device)) {
            record(t, EventKind::route, device, -1, record_idx, "quarantine");
            auto result = store_.record_arrival(device, rec, pred_attack, dest, t);
            if (result == quarantine::ArrivalResult::expired) {
                handle_resolution(store_.resolve(device, t), t);
                route_record(t, device, record_idx);  // re-route under the new status
                return;
            }
            buffered_idx_[{device, t}] = record_idx;
            record(t, EventKind::quarantine_arrival, device, -1, record_idx,
                   pred_attack ? "buffer_attack" : "buffer");
            if (result == quarantine::ArrivalResult::blacklisted_now)
                handle_resolution(store_.resolve(device, t), t);
            return;
        }
        if (pred_attack) {
            record(t, EventKind::route, device, -1, record_idx, "quarantine");
            store_.admit(device, "loc-" + std::to_string(device), worker_of(device), t);
            auto result = store_.record_arrival(device, rec, pred_attack, dest, t);
            buffered_idx_[{device, t}] = record_idx;
            record(t, EventKind::quarantine_arrival, device, -1, record_idx, "admit");
            if (result == quarantine::ArrivalResult::blacklisted_now)
                handle_resolution(store_.resolve(device, t), t);
            else
                push(store_.entry(device).expires_at, EventKind::quarantine_resolve, device, -1);
            return;
        }
        record(t, EventKind::route, device, -1, record_idx, "direct");
        double delay =
            transmission_delay(cfg_.packet_size_bytes, link(topo_.broker_id, topo_.cloud_id));
        push(t + delay, EventKind::deliver_analytics, device, record_idx);
    }

    void on_scheduled_resolve(const SimEvent& ev) {
        // stale if the entry was already resolved early
        if (!store_.is_pending(ev.device)) return;
        if (store_.entry(ev.device).expires_at > ev.t) return;
        handle_resolution(store_.resolve(ev.device, ev.t), ev.t);
    }

    void handle_resolution(const quarantine::Resolution& res, double t) {
        if (res.outcome == quarantine::ListStatus::blacklist) {
            record(t, EventKind::quarantine_resolve, res.device_id, -1, -1, "blacklist");
            for (long i = 0; i < res.records_discarded; ++i)
                record(t, EventKind::quarantine_resolve, res.device_id, -1, -1, "discard");
            return;
        }
        record(t, EventKind::quarantine_resolve, res.device_id, -1, -1, "whitelist");
        for (long i = 0; i < res.scrub_report.records_dropped; ++i)
            record(t, EventKind::quarantine_resolve, res.device_id, -1, -1, "scrub_drop");
        double delay =
            transmission_delay(cfg_.packet_size_bytes, link(topo_.broker_id, topo_.cloud_id));
        for (const auto& rel : res.released)
            push(t + delay, EventKind::deliver_analytics, res.device_id,
                 buffered_idx_.at({res.device_id, rel.arrived_at}), true);
    }

    const SimConfig& cfg_;
    const classify::TrainedModel& model_;
    const std::vector<dataset::DeviceStream>& streams_;
    Topology topo_;
    quarantine::QuarantineStore store_;

    std::priority_queue<SimEvent, std::vector<SimEvent>, EventOrder> queue_;
    long seq_ = 0;
    double now_ = 0.0;
    std::vector<TraceEvent> trace_;
    std::vector<std::map<long, int>> predictions_;
    std::vector<std::unique_ptr<Rng>> destinations_;
    std::map<std::pair<int, long>, int> dest_of_;
    std::map<std::pair<int, double>, long> buffered_idx_;
};

}  // namespace

RunResult run(const SimConfig& config, const classify::TrainedModel& model,
              const std::vector<dataset::DeviceStream>& streams) {
    Simulation sim(config, model, streams);
    return sim.execute();
}

SimReport collect_metrics(const std::vector<TraceEvent>& trace,
                          const std::vector<bool>& is_attacker) {
    SimReport r;
    r.n_devices = static_cast<int>(is_attacker.size());
    std::set<int> quarantined;
    for (const auto& e : trace) {
        if (e.device < -1 || e.record_idx < -1)
            throw std::runtime_error("malformed trace event");
        switch (e.kind) {
            case EventKind::emit:
                r.packets_generated++;
                break;
            case EventKind::quarantine_arrival:
                r.packets_quarantined++;
                quarantined.insert(e.device);
                break;
            case EventKind::route:
                if (e.decision == "drop_blacklist") r.packets_dropped_blacklist++;
                break;
            case EventKind::deliver_analytics:
                if (e.decision == "released")
                    r.records_released++;
                else
                    r.packets_delivered++;
                break;
            case EventKind::quarantine_resolve:
                if (e.decision == "whitelist") r.episodes_whitelist++;
                else if (e.decision == "blacklist") r.episodes_blacklist++;
                else if (e.decision == "scrub_drop") r.records_dropped_scrub++;
                else if (e.decision == "discard") r.records_discarded++;
                break;
            default:
                break;
        }
    }
    r.devices_quarantined = static_cast<long>(quarantined.size());
    for (std::size_t d = 0; d < is_attacker.size(); ++d) {
        bool positive = quarantined.count(static_cast<int>(d)) > 0;
        if (is_attacker[d])
            (positive ? r.quarantine_confusion.tp : r.quarantine_confusion.fn)++;
        else
            (positive ? r.quarantine_confusion.fp : r.quarantine_confusion.tn)++;
    }
    if (r.quarantine_confusion.total() > 0)
        r.quarantine_accuracy = classify::accuracy(r.quarantine_confusion);
    return r;
}

std::vector<std::string> verify_run(const SimReport& report,
                                    const std::vector<TraceEvent>& trace) {
    std::vector<std::string> violations;
    if (report.packets_generated != report.packets_delivered + report.packets_quarantined +
                                        report.packets_dropped_blacklist)
        violations.push_back("packet_conservation");
    if (report.packets_quarantined != report.records_released + report.records_dropped_scrub +
                                          report.records_discarded)
        violations.push_back("quarantine_conservation");
    if (report.quarantine_confusion.total() > 0 &&
        std::abs(report.quarantine_accuracy - classify::accuracy(report.quarantine_confusion)) >
            1e-12)
        violations.push_back("accuracy_identity");

    double prev_t = -1.0;
    bool ordered = true;
    std::map<int, double> blacklisted_at;
    for (const auto& e : trace) {
        if (e.t < prev_t) ordered = false;
        prev_t = e.t;
        if (e.kind == EventKind::quarantine_resolve && e.decision == "blacklist")
            blacklisted_at.emplace(e.device, e.t);
    }
    if (!ordered) violations.push_back("trace_ordering");

    bool firewall_ok = true;
    for (const auto& e : trace) {
        auto it = blacklisted_at.find(e.device);
        if (it == blacklisted_at.end() || e.t <= it->second) continue;
        if (e.kind == EventKind::deliver_analytics || e.kind == EventKind::quarantine_arrival)
            firewall_ok = false;
    }
    if (!firewall_ok) violations.push_back("blacklist_firewall");
    return violations;
}

std::vector<SweepPoint> sweep(const SimConfig& base, const dataset::PartitionParams& partition,
                              const std::vector<dataset::EncodedRecord>& records,
                              const std::vector<std::pair<classify::ModelKind,
                                                          const classify::TrainedModel*>>& models,
                              const std::vector<int>& device_counts) {
    std::vector<SweepPoint> out;
    for (auto [kind, model] : models) {
        for (int n : device_counts) {
            SimConfig cfg = base;
            cfg.n_devices = n;
            cfg.seed = derive_seed(base.seed,
                                   "sweep-" + classify::kind_name(kind) + "-" + std::to_string(n));
            dataset::PartitionParams pp = partition;
            pp.n_devices = n;
            pp.seed = cfg.seed;
            auto streams = dataset::partition_streams(records, pp);
            auto result = run(cfg, *model, streams);
            out.push_back({n, kind, std::move(result.report)});
        }
    }
    return out;
}

}  // namespace dqm::sim
