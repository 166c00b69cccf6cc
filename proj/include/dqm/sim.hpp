#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dqm/classify.hpp"
#include "dqm/dataset.hpp"
#include "dqm/quarantine.hpp"

namespace dqm::sim {

enum class NodeRole { cloud, edge_worker, broker, device };

struct NodeSpec {
    int node_id = 0;
    NodeRole role = NodeRole::device;
    int ram_mb = 0;
    double cpu_ghz = 0.0;
    double packet_capacity = 0.0;  // "packets per instructions"; carried, unused
};

struct LinkSpec {
    int src = 0;
    int dst = 0;
    double bandwidth_mbits = 0.0;
    double latency_s = 0.0;
};

struct Topology {
    std::vector<NodeSpec> nodes;
    std::vector<LinkSpec> links;
    int cloud_id = 0;
    int broker_id = 0;
    std::vector<int> worker_ids;
    std::vector<int> device_ids;
    std::map<int, int> device_worker;            // device node id -> worker node id
    std::map<std::pair<int, int>, LinkSpec> link_by_endpoints;
};

struct SimConfig {
    int n_devices = 400;
    int n_workers = 2;
    double attacker_ratio = 0.0;           // forwarded to stream partitioning by callers
    int packet_size_bytes = 200;
    double emission_interval_s = 5.0;
    double duration_s = 120.0;
    std::uint64_t seed = 0;
    int n_destinations = 5;
    double p_home_destination = 0.6;
    double service_time_s = 0.0;           // classification compute delay at the worker
    double bandwidth_min_mbits = 3.0;
    double bandwidth_max_mbits = 10.0;
    quarantine::QuarantineParams quarantine;
};

enum class EventKind {
    emit,
    arrive_worker,
    classify,
    route,
    quarantine_arrival,
    quarantine_resolve,
    deliver_analytics
};

std::string event_kind_name(EventKind k);

struct TraceEvent {
    double t = 0.0;
    EventKind kind = EventKind::emit;
    int device = -1;
    int worker = -1;
    long record_idx = -1;
    std::string decision;
};

std::string trace_to_ndjson(const std::vector<TraceEvent>& trace);

struct SimReport {
    int n_devices = 0;
    std::string model_kind;
    long devices_quarantined = 0;
    long packets_generated = 0;
    long packets_quarantined = 0;       // packets buffered in quarantine
    long packets_delivered = 0;         // direct broker -> analytics deliveries
    long packets_dropped_blacklist = 0; // broker drops from blacklisted devices
    long records_released = 0;          // quarantined packets released after scrub
    long records_dropped_scrub = 0;
    long records_discarded = 0;         // buffered packets of blacklisted episodes
    long episodes_whitelist = 0;
    long episodes_blacklist = 0;
    classify::ConfusionMatrix quarantine_confusion;  // device-level decisions
    double quarantine_accuracy = 0.0;
};

std::string report_to_json(const SimReport& r);

Topology build_topology(const SimConfig& config);

double transmission_delay(long packet_size_bytes, const LinkSpec& link);

struct RunResult {
    SimReport report;
    std::vector<TraceEvent> trace;
    std::vector<quarantine::EpisodeRecord> episodes;
};

RunResult run(const SimConfig& config, const classify::TrainedModel& model,
              const std::vector<dataset::DeviceStream>& streams);

// Recomputes the report from the trace; ground-truth attacker flags are input
// data, not trace content, so they are passed alongside.
SimReport collect_metrics(const std::vector<TraceEvent>& trace,
                          const std::vector<bool>& is_attacker);

// Invariant verification over a finished run; returns the names of violated
// invariants (empty when clean).
std::vector<std::string> verify_run(const SimReport& report,
                                    const std::vector<TraceEvent>& trace);

struct SweepPoint {
    int n_devices = 0;
    classify::ModelKind kind = classify::ModelKind::LDA;
    SimReport report;
};

std::vector<SweepPoint> sweep(const SimConfig& base, const dataset::PartitionParams& partition,
                              const std::vector<dataset::EncodedRecord>& records,
                              const std::vector<std::pair<classify::ModelKind,
                                                          const classify::TrainedModel*>>& models,
                              const std::vector<int>& device_counts);

}  // namespace dqm::sim
