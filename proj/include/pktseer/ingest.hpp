#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pktseer/common.hpp"

namespace pktseer {

// Unidirectional 5-tuple. Equality is exact field equality; packets in the
// reverse direction form a different flow.
struct FlowKey {
    std::string src_addr;
    std::string dst_addr;
    uint16_t src_port = 0;
    uint16_t dst_port = 0;
    uint8_t protocol = 0;

    friend bool operator==(const FlowKey&, const FlowKey&) = default;
    friend auto operator<=>(const FlowKey&, const FlowKey&) = default;
};

struct Label {
    bool malicious = false;
    std::string attack_name;  // empty for normal traffic

    static Label normal() { return {false, {}}; }
    static Label attack(std::string name) { return {true, std::move(name)}; }
    friend bool operator==(const Label&, const Label&) = default;
};

struct PacketRecord {
    FlowKey flow_key;
    int64_t timestamp_us = 0;
    std::vector<std::pair<std::string, double>> features;  // ordered, finite values
    std::optional<Label> label;

    const double* find_feature(const std::string& name) const {
        for (const auto& [n, v] : features)
            if (n == name) return &v;
        return nullptr;
    }
};

enum class PairLabel { Successive, NonSuccessive };

struct PairExample {
    PacketRecord first;
    PacketRecord second;
    PairLabel label = PairLabel::Successive;
};

struct IngestReport {
    size_t rows_read = 0;      // data rows seen (CSV) / packet records seen (capture)
    size_t rows_skipped = 0;   // rows or frames dropped with a counted reason
    size_t missing_cells = 0;  // empty numeric cells defaulted to 0.0
    size_t truncated = 0;      // capture ended mid-record
};

// Column-name bindings for the feature CSV contract. Every column not bound
// here (and not `label`) is treated as a numeric feature.
struct CsvSchema {
    std::string src_addr = "srcIP";
    std::string dst_addr = "dstIP";
    std::string src_port = "srcPort";
    std::string dst_port = "dstPort";
    std::string protocol = "proto";
    std::string timestamp = "ts";
    std::string label = "label";
};

struct CsvParseResult {
    std::vector<PacketRecord> records;
    std::vector<std::string> feature_names;  // header order, key/ts/label removed
    IngestReport report;
};

// Parses the feature CSV contract. Missing key columns are fatal; a
// non-numeric cell skips that row and bumps the skip counter; an empty
// numeric cell becomes 0.0 and is counted.
CsvParseResult parse_feature_csv(std::istream& in, const CsvSchema& schema = {});

struct CaptureParseResult {
    std::vector<PacketRecord> records;
    std::vector<std::string> feature_names;
    IngestReport report;
};

// Feature names extracted from a raw capture, layers 2-4 only. Payload bytes
// are never read.
const std::vector<std::string>& capture_feature_names();

// Parses a classic capture container (magic 0xa1b2c3d4, microsecond
// timestamps, byte-swapped variant accepted) of Ethernet/IPv4/TCP-or-UDP
// frames. Anything else is skipped and counted; a truncated record stops the
// parse with partial results.
CaptureParseResult parse_raw_capture(std::istream& in);

using FlowMap = std::map<FlowKey, std::vector<PacketRecord>>;

// Groups by FlowKey and sorts each flow by timestamp ascending, stable on ties.
FlowMap assemble_flows(const std::vector<PacketRecord>& records);

// Adjacent in-flow pairs; a flow of length n contributes n-1 pairs and pairs
// never cross flow boundaries.
std::vector<std::pair<PacketRecord, PacketRecord>> make_next_packet_pairs(const FlowMap& flows);

// All adjacent pairs labeled Successive plus ceil(negative_ratio * positives)
// sampled negatives; fully deterministic from the seed.
std::vector<PairExample> make_pair_dataset(const FlowMap& flows, double negative_ratio,
                                           uint64_t seed);

// Serializes records back to the feature CSV contract (the dataset artifact
// format). Inverse of parse_feature_csv for finite inputs.
void write_feature_csv(std::ostream& out, const std::vector<std::string>& feature_names,
                       const std::vector<PacketRecord>& records, const CsvSchema& schema = {});

// Shortest round-trip decimal; integral values print without a decimal point.
std::string format_value(double v);

}  // namespace pktseer
