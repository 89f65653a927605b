#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pktseer/ingest.hpp"

namespace pktseer {

// Benign flows are smooth deterministic progressions so the next packet is a
// function of the current one:
//   frame_len[i] = len_base + len_step * i
//   tcp_win[i]   = win_base - win_step * i
//   tcp_flags[0] = SYN(2), then PSH+ACK(24) / ACK(16) alternating
//   ip_ttl, iat_us constant per flow
struct BenignParams {
    std::vector<double> len_bases{120, 180, 240, 300};
    double len_step = 2;
    std::vector<double> ttl_choices{64, 128};
    std::vector<double> win_bases{8192, 16384, 32768};
    double win_step = 16;
    std::vector<double> iat_choices{1000, 2000, 5000};
};

// Malicious flows are regime breaks: per-packet TTL jitter, small/burst frame
// alternation, SYN/RST-heavy flags, collapsed windows, sub-millisecond
// inter-arrivals.
struct MaliciousParams {
    double small_len_min = 40, small_len_max = 80;
    double burst_len_min = 1200, burst_len_max = 1500;
    double win_min = 64, win_max = 1024;
    double benign_win_prob = 0.10;  // fraction of packets with a benign-looking window
    double ttl_min = 30, ttl_max = 250;
    double attack_flag_prob = 0.85;  // else a benign-looking ACK/PSH+ACK
    std::vector<double> iat_choices{50, 100};
    std::string attack_name = "flood";
};

struct SynthScenario {
    size_t n_flows = 0;      // generate exactly this many flows, or
    size_t target_rows = 0;  // generate flows until this many packets exist
    size_t flow_len_min = 4;
    size_t flow_len_max = 12;
    double malicious_fraction = 0.3;
    uint64_t seed = 0;
    BenignParams benign;
    MaliciousParams malicious;
};

struct SynthResult {
    std::vector<std::string> feature_names;
    std::vector<PacketRecord> records;  // labeled, timestamp-ordered per flow
    size_t malicious_rows = 0;
    size_t flows_emitted = 0;
};

// Deterministic from the scenario seed; the malicious row count lands within
// one row of malicious_fraction * total.
SynthResult generate_synthetic_traffic(const SynthScenario& scenario);

}  // namespace pktseer
