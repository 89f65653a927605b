#include "pktseer/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "pktseer/det_rng.hpp"

namespace pktseer {

namespace {

const std::vector<std::string> kSynthFeatures = {
    "frame_len", "ip_hdr_len", "ip_ttl",    "ip_proto",  "ip_flags", "ip_frag_off",
    "l4_hdr_len", "tcp_flags", "tcp_win",   "payload_len", "iat_us"};

double pick(const std::vector<double>& choices, DetRng& rng) {
    if (choices.empty()) throw UsageError("synth: empty choice list");
    return choices[rng.index(choices.size())];
}

double uniform_in(double lo, double hi, DetRng& rng) {
    return std::floor(lo + rng.uniform_real() * (hi - lo + 1));
}

FlowKey fresh_key(DetRng& rng, std::set<FlowKey>& used) {
    for (;;) {
        FlowKey k;
        k.src_addr = "10." + std::to_string(rng.uniform_u64(256)) + "." +
                     std::to_string(rng.uniform_u64(256)) + "." +
                     std::to_string(1 + rng.uniform_u64(254));
        k.dst_addr = "192.168." + std::to_string(rng.uniform_u64(256)) + "." +
                     std::to_string(1 + rng.uniform_u64(254));
        k.src_port = static_cast<uint16_t>(1024 + rng.uniform_u64(64511));
        static const uint16_t dst_ports[] = {80, 443, 1883, 8080, 8883};
        k.dst_port = dst_ports[rng.index(5)];
        k.protocol = 6;
        if (used.insert(k).second) return k;
    }
}

PacketRecord make_record(const FlowKey& key, int64_t ts, std::vector<double> values,
                         const Label& label) {
    PacketRecord rec;
    rec.flow_key = key;
    rec.timestamp_us = ts;
    rec.features.reserve(kSynthFeatures.size());
    for (size_t i = 0; i < kSynthFeatures.size(); ++i)
        rec.features.emplace_back(kSynthFeatures[i], values[i]);
    rec.label = label;
    return rec;
}

void emit_benign_flow(const FlowKey& key, size_t len, int64_t start_ts,
                      const BenignParams& p, DetRng& rng,
                      std::vector<PacketRecord>& out) {
    double len_base = pick(p.len_bases, rng);
    double ttl = pick(p.ttl_choices, rng);
    double win_base = pick(p.win_bases, rng);
    double iat = pick(p.iat_choices, rng);
    int64_t ts = start_ts;
    for (size_t i = 0; i < len; ++i) {
        double frame = len_base + p.len_step * static_cast<double>(i);
        double flags = i == 0 ? 2 : (i % 2 == 1 ? 24 : 16);
        double l4 = i == 0 ? 32 : 20;
        double win = win_base - p.win_step * static_cast<double>(i);
        out.push_back(make_record(
            key, ts,
            {frame, 20, ttl, 6, 2, 0, l4, flags, win, frame - 34 - l4, iat},
            Label::normal()));
        ts += static_cast<int64_t>(iat);
    }
}

void emit_malicious_flow(const FlowKey& key, size_t len, int64_t start_ts,
                         const MaliciousParams& p, DetRng& rng,
                         std::vector<PacketRecord>& out) {
    int64_t ts = start_ts;
    for (size_t i = 0; i < len; ++i) {
        double frame = i % 2 == 0 ? uniform_in(p.small_len_min, p.small_len_max, rng)
                                  : uniform_in(p.burst_len_min, p.burst_len_max, rng);
        double ttl = uniform_in(p.ttl_min, p.ttl_max, rng);
        double win = rng.bernoulli(p.benign_win_prob) ? uniform_in(4096, 16384, rng)
                                                      : uniform_in(p.win_min, p.win_max, rng);
        static const double attack_flags[] = {2, 4, 6};
        static const double quiet_flags[] = {16, 24};
        double flags = rng.bernoulli(p.attack_flag_prob) ? attack_flags[rng.index(3)]
                                                         : quiet_flags[rng.index(2)];
        double ip_flags = rng.bernoulli(0.5) ? 0 : 2;
        double iat = pick(p.iat_choices, rng);
        double payload = std::max(0.0, frame - 54);
        out.push_back(make_record(key, ts,
                                  {frame, 20, ttl, 6, ip_flags, 0, 20, flags, win, payload, iat},
                                  Label::attack(p.attack_name)));
        ts += static_cast<int64_t>(iat);
    }
}

}  // namespace

SynthResult generate_synthetic_traffic(const SynthScenario& sc) {
    if (sc.malicious_fraction < 0 || sc.malicious_fraction > 1)
        throw UsageError("synth: malicious_fraction must be in [0,1]");
    if (sc.n_flows == 0 && sc.target_rows == 0)
        throw UsageError("synth: one of n_flows or target_rows must be set");
    if (sc.flow_len_min < 1 || sc.flow_len_max < sc.flow_len_min)
        throw UsageError("synth: bad flow length range");

    DetRng rng(mix_seed(sc.seed, 0x73796e7468));  // "synth"

    // flow lengths first, so the malicious row budget is exact
    std::vector<size_t> lengths;
    size_t total = 0;
    if (sc.n_flows > 0) {
        for (size_t i = 0; i < sc.n_flows; ++i) {
            size_t len = sc.flow_len_min + rng.index(sc.flow_len_max - sc.flow_len_min + 1);
            lengths.push_back(len);
            total += len;
        }
    } else {
        while (total < sc.target_rows) {
            size_t len = sc.flow_len_min + rng.index(sc.flow_len_max - sc.flow_len_min + 1);
            len = std::min(len, sc.target_rows - total);
            lengths.push_back(len);
            total += len;
        }
    }

    size_t budget = static_cast<size_t>(
        std::llround(sc.malicious_fraction * static_cast<double>(total)));

    std::vector<size_t> order(lengths.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);

    std::vector<bool> is_malicious(lengths.size(), false);
    size_t assigned = 0;
    for (size_t idx : order) {
        if (assigned + lengths[idx] <= budget) {
            is_malicious[idx] = true;
            assigned += lengths[idx];
        }
    }
    // Remaining deficit is smaller than every unflipped flow, so splitting one
    // benign flow closes the budget exactly.
    size_t deficit = budget - assigned;
    if (deficit > 0) {
        for (size_t idx : order) {
            if (!is_malicious[idx] && lengths[idx] > deficit) {
                lengths[idx] -= deficit;
                lengths.push_back(deficit);
                is_malicious.push_back(true);
                break;
            }
        }
    }

    SynthResult result;
    result.feature_names = kSynthFeatures;
    std::set<FlowKey> used_keys;
    int64_t start = 1000000;
    for (size_t f = 0; f < lengths.size(); ++f) {
        FlowKey key = fresh_key(rng, used_keys);
        int64_t flow_start = start + static_cast<int64_t>(rng.uniform_u64(1000));
        if (is_malicious[f]) {
            emit_malicious_flow(key, lengths[f], flow_start, sc.malicious, rng, result.records);
            result.malicious_rows += lengths[f];
        } else {
            emit_benign_flow(key, lengths[f], flow_start, sc.benign, rng, result.records);
        }
        start += 7919;  // stagger flow starts so flows interleave in time
    }
    result.flows_emitted = lengths.size();
    return result;
}

}  // namespace pktseer
