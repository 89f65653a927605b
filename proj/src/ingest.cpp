#include "pktseer/ingest.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "pktseer/det_rng.hpp"

namespace pktseer {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            cells.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    cells.push_back(cur);
    return cells;
}

bool parse_double(const std::string& s, double& out) {
    const char* b = s.data();
    const char* e = b + s.size();
    while (b < e && (*b == ' ' || *b == '\t')) ++b;
    while (e > b && (*(e - 1) == ' ' || *(e - 1) == '\t')) --e;
    if (b == e) return false;
    auto [ptr, ec] = std::from_chars(b, e, out);
    return ec == std::errc() && ptr == e && std::isfinite(out);
}

bool iequals(const std::string& a, const char* b) {
    size_t n = std::strlen(b);
    if (a.size() != n) return false;
    for (size_t i = 0; i < n; ++i)
        if (std::tolower(static_cast<unsigned char>(a[i])) != b[i]) return false;
    return true;
}

}  // namespace

std::string format_value(double v) {
    if (std::floor(v) == v && std::abs(v) < 9007199254740992.0) {  // 2^53
        char buf[32];
        auto [p, ec] = std::to_chars(buf, buf + sizeof buf, static_cast<long long>(v));
        return std::string(buf, p);
    }
    char buf[40];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

CsvParseResult parse_feature_csv(std::istream& in, const CsvSchema& schema) {
    std::string line;
    if (!std::getline(in, line))
        throw UsageError("feature CSV: empty input, header row required");
    std::vector<std::string> header = split_csv_line(line);

    auto col_of = [&](const std::string& name) -> int {
        for (size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<int>(i);
        return -1;
    };

    const int c_src = col_of(schema.src_addr);
    const int c_dst = col_of(schema.dst_addr);
    const int c_sport = col_of(schema.src_port);
    const int c_dport = col_of(schema.dst_port);
    const int c_proto = col_of(schema.protocol);
    const int c_ts = col_of(schema.timestamp);
    const int c_label = col_of(schema.label);

    for (auto [idx, name] : {std::pair{c_src, schema.src_addr},
                             {c_dst, schema.dst_addr},
                             {c_sport, schema.src_port},
                             {c_dport, schema.dst_port},
                             {c_proto, schema.protocol},
                             {c_ts, schema.timestamp}}) {
        if (idx < 0) throw UsageError("feature CSV: required column missing: " + name);
    }

    CsvParseResult result;
    std::set<int> reserved{c_src, c_dst, c_sport, c_dport, c_proto, c_ts};
    if (c_label >= 0) reserved.insert(c_label);
    std::vector<int> feature_cols;
    for (size_t i = 0; i < header.size(); ++i) {
        if (!reserved.count(static_cast<int>(i))) {
            feature_cols.push_back(static_cast<int>(i));
            result.feature_names.push_back(header[i]);
        }
    }

    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        ++result.report.rows_read;
        std::vector<std::string> cells = split_csv_line(line);
        if (cells.size() != header.size()) {
            ++result.report.rows_skipped;
            continue;
        }

        PacketRecord rec;
        double port_s, port_d, proto, ts;
        bool key_ok = parse_double(cells[c_sport], port_s) && parse_double(cells[c_dport], port_d) &&
                      parse_double(cells[c_proto], proto) && parse_double(cells[c_ts], ts) &&
                      !cells[c_src].empty() && !cells[c_dst].empty();
        if (!key_ok || port_s < 0 || port_s > 65535 || port_d < 0 || port_d > 65535 || proto < 0 ||
            proto > 255) {
            ++result.report.rows_skipped;
            continue;
        }
        rec.flow_key = {cells[c_src], cells[c_dst], static_cast<uint16_t>(port_s),
                        static_cast<uint16_t>(port_d), static_cast<uint8_t>(proto)};
        rec.timestamp_us = static_cast<int64_t>(std::llround(ts));

        size_t missing_here = 0;
        bool row_ok = true;
        rec.features.reserve(feature_cols.size());
        for (size_t fi = 0; fi < feature_cols.size(); ++fi) {
            const std::string& cell = cells[feature_cols[fi]];
            double v = 0.0;
            if (cell.empty()) {
                ++missing_here;
            } else if (!parse_double(cell, v)) {
                row_ok = false;
                break;
            }
            rec.features.emplace_back(result.feature_names[fi], v);
        }
        if (!row_ok) {
            ++result.report.rows_skipped;
            continue;
        }
        result.report.missing_cells += missing_here;

        if (c_label >= 0 && !cells[c_label].empty()) {
            const std::string& raw = cells[c_label];
            if (iequals(raw, "normal") || iequals(raw, "benign"))
                rec.label = Label::normal();
            else
                rec.label = Label::attack(raw);
        }
        result.records.push_back(std::move(rec));
    }
    return result;
}

void write_feature_csv(std::ostream& out, const std::vector<std::string>& feature_names,
                       const std::vector<PacketRecord>& records, const CsvSchema& schema) {
    out << schema.src_addr << ',' << schema.dst_addr << ',' << schema.src_port << ','
        << schema.dst_port << ',' << schema.protocol << ',' << schema.timestamp;
    for (const auto& n : feature_names) out << ',' << n;
    bool any_label = std::any_of(records.begin(), records.end(),
                                 [](const PacketRecord& r) { return r.label.has_value(); });
    if (any_label) out << ',' << schema.label;
    out << '\n';

    for (const auto& r : records) {
        if (r.features.size() != feature_names.size())
            throw DataError("write_feature_csv: record feature count mismatch");
        out << r.flow_key.src_addr << ',' << r.flow_key.dst_addr << ',' << r.flow_key.src_port
            << ',' << r.flow_key.dst_port << ',' << static_cast<int>(r.flow_key.protocol) << ','
            << r.timestamp_us;
        for (const auto& [name, v] : r.features) out << ',' << format_value(v);
        if (any_label) {
            out << ',';
            if (r.label) out << (r.label->malicious ? r.label->attack_name : "Normal");
        }
        out << '\n';
    }
}

// ---------------------------------------------------------------------------
// raw capture parsing

namespace {

constexpr uint32_t kCaptureMagic = 0xa1b2c3d4;
constexpr uint32_t kCaptureMagicSwapped = 0xd4c3b2a1;

uint16_t rd16be(const uint8_t* p) { return static_cast<uint16_t>((p[0] << 8) | p[1]); }
uint32_t rd32le(const uint8_t* p, bool swap) {
    uint32_t v = static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
                 (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
    if (swap) v = __builtin_bswap32(v);
    return v;
}

std::string ipv4_to_string(const uint8_t* p) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%u.%u.%u.%u", p[0], p[1], p[2], p[3]);
    return buf;
}

}  // namespace

const std::vector<std::string>& capture_feature_names() {
    static const std::vector<std::string> names = {
        "frame_len", "ip_hdr_len", "ip_ttl",    "ip_proto", "ip_flags",
        "ip_frag_off", "l4_hdr_len", "tcp_flags", "tcp_win",  "payload_len"};
    return names;
}

CaptureParseResult parse_raw_capture(std::istream& in) {
    CaptureParseResult result;
    result.feature_names = capture_feature_names();

    std::array<uint8_t, 24> global{};
    in.read(reinterpret_cast<char*>(global.data()), global.size());
    if (in.gcount() != static_cast<std::streamsize>(global.size()))
        throw DataError("capture: truncated global header");

    uint32_t magic = rd32le(global.data(), false);
    bool swap;
    if (magic == kCaptureMagic)
        swap = false;
    else if (magic == kCaptureMagicSwapped)
        swap = true;
    else
        throw DataError("capture: bad magic");

    uint32_t linktype = rd32le(global.data() + 20, swap);
    if (linktype != 1) throw DataError("capture: only Ethernet link type supported");

    std::vector<uint8_t> frame;
    for (;;) {
        std::array<uint8_t, 16> rech{};
        in.read(reinterpret_cast<char*>(rech.data()), rech.size());
        if (in.gcount() == 0) break;
        if (in.gcount() != static_cast<std::streamsize>(rech.size())) {
            ++result.report.truncated;
            break;
        }
        uint32_t ts_sec = rd32le(rech.data(), swap);
        uint32_t ts_usec = rd32le(rech.data() + 4, swap);
        uint32_t caplen = rd32le(rech.data() + 8, swap);
        uint32_t origlen = rd32le(rech.data() + 12, swap);
        if (caplen > 1u << 26) {
            ++result.report.truncated;
            break;
        }
        frame.resize(caplen);
        in.read(reinterpret_cast<char*>(frame.data()), caplen);
        if (in.gcount() != static_cast<std::streamsize>(caplen)) {
            ++result.report.truncated;
            break;
        }
        ++result.report.rows_read;

        // Ethernet
        if (caplen < 14) {
            ++result.report.rows_skipped;
            continue;
        }
        uint16_t ethertype = rd16be(frame.data() + 12);
        if (ethertype != 0x0800) {  // IPv4 only
            ++result.report.rows_skipped;
            continue;
        }
        const uint8_t* ip = frame.data() + 14;
        size_t ip_avail = caplen - 14;
        if (ip_avail < 20 || (ip[0] >> 4) != 4) {
            ++result.report.rows_skipped;
            continue;
        }
        size_t ihl = static_cast<size_t>(ip[0] & 0x0f) * 4;
        uint16_t tot_len = rd16be(ip + 2);
        uint16_t flags_frag = rd16be(ip + 6);
        uint8_t ttl = ip[8];
        uint8_t proto = ip[9];
        if (ihl < 20 || ip_avail < ihl || tot_len < ihl) {
            ++result.report.rows_skipped;
            continue;
        }
        if (proto != 6 && proto != 17) {
            ++result.report.rows_skipped;
            continue;
        }
        const uint8_t* l4 = ip + ihl;
        size_t l4_avail = ip_avail - ihl;

        uint16_t src_port = 0, dst_port = 0, tcp_win = 0;
        uint8_t tcp_flags = 0;
        size_t l4_hdr_len = 0;
        if (proto == 6) {
            if (l4_avail < 20) {
                ++result.report.rows_skipped;
                continue;
            }
            src_port = rd16be(l4);
            dst_port = rd16be(l4 + 2);
            l4_hdr_len = static_cast<size_t>(l4[12] >> 4) * 4;
            tcp_flags = l4[13];
            tcp_win = rd16be(l4 + 14);
            if (l4_hdr_len < 20 || l4_avail < l4_hdr_len) {
                ++result.report.rows_skipped;
                continue;
            }
        } else {
            if (l4_avail < 8) {
                ++result.report.rows_skipped;
                continue;
            }
            src_port = rd16be(l4);
            dst_port = rd16be(l4 + 2);
            l4_hdr_len = 8;
        }

        double payload_len = static_cast<double>(tot_len) - static_cast<double>(ihl) -
                             static_cast<double>(l4_hdr_len);
        if (payload_len < 0) payload_len = 0;

        PacketRecord rec;
        rec.flow_key = {ipv4_to_string(ip + 12), ipv4_to_string(ip + 16), src_port, dst_port,
                        proto};
        rec.timestamp_us = static_cast<int64_t>(ts_sec) * 1000000 + ts_usec;
        rec.features = {{"frame_len", static_cast<double>(origlen)},
                        {"ip_hdr_len", static_cast<double>(ihl)},
                        {"ip_ttl", static_cast<double>(ttl)},
                        {"ip_proto", static_cast<double>(proto)},
                        {"ip_flags", static_cast<double>(flags_frag >> 13)},
                        {"ip_frag_off", static_cast<double>(flags_frag & 0x1fff)},
                        {"l4_hdr_len", static_cast<double>(l4_hdr_len)},
                        {"tcp_flags", static_cast<double>(tcp_flags)},
                        {"tcp_win", static_cast<double>(tcp_win)},
                        {"payload_len", payload_len}};
        result.records.push_back(std::move(rec));
    }
    return result;
}

// ---------------------------------------------------------------------------
// flow assembly and pair datasets

FlowMap assemble_flows(const std::vector<PacketRecord>& records) {
    FlowMap flows;
    for (const auto& r : records) flows[r.flow_key].push_back(r);
    for (auto& [key, pkts] : flows) {
        std::stable_sort(pkts.begin(), pkts.end(),
                         [](const PacketRecord& a, const PacketRecord& b) {
                             return a.timestamp_us < b.timestamp_us;
                         });
    }
    return flows;
}

std::vector<std::pair<PacketRecord, PacketRecord>> make_next_packet_pairs(const FlowMap& flows) {
    std::vector<std::pair<PacketRecord, PacketRecord>> pairs;
    for (const auto& [key, pkts] : flows)
        for (size_t i = 0; i + 1 < pkts.size(); ++i) pairs.emplace_back(pkts[i], pkts[i + 1]);
    return pairs;
}

std::vector<PairExample> make_pair_dataset(const FlowMap& flows, double negative_ratio,
                                           uint64_t seed) {
    if (negative_ratio <= 0) throw UsageError("make_pair_dataset: negative_ratio must be > 0");

    // flat index over all packets, plus each packet's in-flow successor index
    std::vector<const PacketRecord*> all;
    std::vector<ptrdiff_t> successor;  // -1 when last in flow
    for (const auto& [key, pkts] : flows) {
        for (size_t i = 0; i < pkts.size(); ++i) {
            all.push_back(&pkts[i]);
            successor.push_back(i + 1 < pkts.size() ? static_cast<ptrdiff_t>(all.size()) : -1);
        }
    }
    if (all.size() < 2) throw DataError("make_pair_dataset: insufficient data");

    std::vector<PairExample> out;
    for (const auto& [key, pkts] : flows)
        for (size_t i = 0; i + 1 < pkts.size(); ++i)
            out.push_back({pkts[i], pkts[i + 1], PairLabel::Successive});

    size_t n_pos = out.size();
    size_t n_neg = static_cast<size_t>(std::ceil(negative_ratio * static_cast<double>(n_pos)));

    DetRng rng(mix_seed(seed, 0x70616972));  // "pair"
    for (size_t k = 0; k < n_neg; ++k) {
        for (int attempt = 0;; ++attempt) {
            size_t a = rng.index(all.size());
            size_t b = rng.index(all.size());
            bool adjacent = successor[a] == static_cast<ptrdiff_t>(b);
            if (!adjacent && a != b) {
                out.push_back({*all[a], *all[b], PairLabel::NonSuccessive});
                break;
            }
            if (attempt > 10000)
                throw DataError("make_pair_dataset: could not sample a non-successive pair");
        }
    }
    rng.shuffle(out);
    return out;
}

}  // namespace pktseer
