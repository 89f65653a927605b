#include "pktseer/tokenizer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <unordered_map>

#include "pktseer/det_rng.hpp"

namespace pktseer {

BpeVocab::BpeVocab() {
    token_bytes_.resize(kNumSpecials);
    for (int b = 0; b < 256; ++b) {
        std::string s(1, static_cast<char>(b));
        token_to_id_[s] = static_cast<TokenId>(token_bytes_.size());
        token_bytes_.push_back(s);
    }
}

const std::string& BpeVocab::token_bytes(TokenId id) const {
    if (id < 0 || id >= size()) throw UsageError("token id out of range");
    return token_bytes_[id];
}

std::optional<TokenId> BpeVocab::id_of(const std::string& bytes) const {
    auto it = token_to_id_.find(bytes);
    if (it == token_to_id_.end()) return std::nullopt;
    return it->second;
}

TokenId BpeVocab::add_merge(TokenId left, TokenId right) {
    if (is_special(left) || is_special(right))
        throw UsageError("merges may not involve special tokens");
    std::string bytes = token_bytes(left) + token_bytes(right);
    TokenId merged;
    auto it = token_to_id_.find(bytes);
    if (it != token_to_id_.end()) {
        merged = it->second;  // surface collision with an earlier token
    } else {
        merged = static_cast<TokenId>(token_bytes_.size());
        token_bytes_.push_back(bytes);
        token_to_id_[bytes] = merged;
    }
    merges_.push_back({left, right, merged});
    return merged;
}

// ---------------------------------------------------------------------------
// packet text

std::string serialize_packet(const PacketRecord& p,
                             const std::vector<std::string>& kept_features) {
    std::string out;
    for (size_t i = 0; i < kept_features.size(); ++i) {
        const double* v = p.find_feature(kept_features[i]);
        if (!v) throw DataError("serialize_packet: missing feature: " + kept_features[i]);
        if (i) out += ' ';
        out += kept_features[i];
        out += '=';
        out += format_value(*v);
    }
    return out;
}

PacketParseResult parse_packet_text(const std::string& text,
                                    const std::vector<std::string>& kept_features) {
    std::vector<std::string> fields;
    size_t pos = 0;
    while (pos < text.size()) {
        size_t next = text.find(' ', pos);
        if (next == std::string::npos) next = text.size();
        if (next > pos) fields.push_back(text.substr(pos, next - pos));
        pos = next + 1;
    }

    PacketParseResult res;
    if (fields.size() != kept_features.size()) {
        res.error = {PacketParseErrorKind::WrongFieldCount, fields.size(),
                     "got " + std::to_string(fields.size()) + " fields, want " +
                         std::to_string(kept_features.size())};
        return res;
    }

    PacketRecord rec;
    for (size_t i = 0; i < fields.size(); ++i) {
        size_t eq = fields[i].find('=');
        std::string name = eq == std::string::npos ? fields[i] : fields[i].substr(0, eq);
        if (eq == std::string::npos || name != kept_features[i]) {
            res.error = {PacketParseErrorKind::UnknownName, i,
                         "field " + std::to_string(i) + " is '" + name + "', expected '" +
                             kept_features[i] + "'"};
            return res;
        }
        std::string value = fields[i].substr(eq + 1);
        double v = 0.0;
        auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
        if (ec != std::errc() || p != value.data() + value.size() || !std::isfinite(v)) {
            res.error = {PacketParseErrorKind::UnparseableValue, i,
                         "field '" + name + "' has unparseable value '" + value + "'"};
            return res;
        }
        rec.features.emplace_back(name, v);
    }
    res.record = std::move(rec);
    return res;
}

// ---------------------------------------------------------------------------
// BPE training

namespace {

struct PairHash {
    size_t operator()(const std::pair<TokenId, TokenId>& p) const {
        return std::hash<uint64_t>{}((static_cast<uint64_t>(p.first) << 32) ^
                                     static_cast<uint64_t>(static_cast<uint32_t>(p.second)));
    }
};

void apply_merge_inplace(std::vector<TokenId>& seq, const BpeMerge& m) {
    size_t w = 0;
    for (size_t r = 0; r < seq.size();) {
        if (r + 1 < seq.size() && seq[r] == m.left && seq[r + 1] == m.right) {
            seq[w++] = m.merged;
            r += 2;
        } else {
            seq[w++] = seq[r++];
        }
    }
    seq.resize(w);
}

}  // namespace

BpeVocab train_bpe(const std::vector<std::string>& corpus, TokenId vocab_size) {
    if (corpus.empty()) throw DataError("train_bpe: empty corpus");
    if (vocab_size <= kBaseVocabSize)
        throw UsageError("train_bpe: vocab_size must exceed " + std::to_string(kBaseVocabSize));

    BpeVocab vocab;

    // identical packet texts are common; train on unique lines with counts
    std::map<std::string, uint64_t> line_counts;
    for (const auto& line : corpus) ++line_counts[line];

    std::vector<std::vector<TokenId>> seqs;
    std::vector<uint64_t> counts;
    seqs.reserve(line_counts.size());
    for (const auto& [line, count] : line_counts) {
        std::vector<TokenId> ids;
        ids.reserve(line.size());
        for (unsigned char c : line) ids.push_back(kFirstByteId + c);
        seqs.push_back(std::move(ids));
        counts.push_back(count);
    }

    while (vocab.size() < vocab_size) {
        std::unordered_map<std::pair<TokenId, TokenId>, uint64_t, PairHash> freq;
        for (size_t s = 0; s < seqs.size(); ++s) {
            const auto& seq = seqs[s];
            for (size_t i = 0; i + 1 < seq.size(); ++i)
                freq[{seq[i], seq[i + 1]}] += counts[s];
        }

        std::pair<TokenId, TokenId> best{0, 0};
        uint64_t best_count = 0;
        for (const auto& [pair, count] : freq) {
            if (count < best_count) continue;
            if (count > best_count) {
                best = pair;
                best_count = count;
                continue;
            }
            // tie: lexicographically smallest (left bytes, right bytes)
            const auto& bl = vocab.token_bytes(best.first);
            const auto& br = vocab.token_bytes(best.second);
            const auto& cl = vocab.token_bytes(pair.first);
            const auto& cr = vocab.token_bytes(pair.second);
            if (std::tie(cl, cr) < std::tie(bl, br)) best = pair;
        }
        if (best_count < 2) break;

        TokenId merged = vocab.add_merge(best.first, best.second);
        BpeMerge m{best.first, best.second, merged};
        for (auto& seq : seqs) apply_merge_inplace(seq, m);
    }
    return vocab;
}

TokenSequence encode(const std::string& text, const BpeVocab& vocab, bool add_bos_eos) {
    std::vector<TokenId> ids;
    ids.reserve(text.size());
    for (unsigned char c : text) ids.push_back(kFirstByteId + c);
    for (const auto& m : vocab.merges()) apply_merge_inplace(ids, m);

    TokenSequence seq;
    if (add_bos_eos) {
        seq.ids.reserve(ids.size() + 2);
        seq.ids.push_back(BOS);
        seq.ids.insert(seq.ids.end(), ids.begin(), ids.end());
        seq.ids.push_back(EOS);
        seq.segment_marks = {0, seq.ids.size() - 1};
    } else {
        seq.ids = std::move(ids);
    }
    return seq;
}

std::string decode(const TokenSequence& seq, const BpeVocab& vocab) {
    std::string out;
    for (TokenId id : seq.ids) {
        if (id < 0 || id >= vocab.size()) throw UsageError("decode: token id out of range");
        if (vocab.is_special(id)) continue;
        out += vocab.token_bytes(id);
    }
    return out;
}

// ---------------------------------------------------------------------------
// corruptions

MaskedBatch make_mlm_corruption(const TokenSequence& seq, double mask_prob, const BpeVocab& vocab,
                                uint64_t seed) {
    if (mask_prob <= 0 || mask_prob >= 1)
        throw UsageError("make_mlm_corruption: mask_prob must be in (0,1)");

    DetRng rng(mix_seed(seed, 0x6d6c6d));  // "mlm"
    MaskedBatch batch;
    batch.corrupted = seq;
    for (size_t i = 0; i < seq.ids.size(); ++i) {
        if (vocab.is_special(seq.ids[i])) continue;
        if (!rng.bernoulli(mask_prob)) continue;
        batch.masked_positions.push_back(i);
        batch.target_ids.push_back(seq.ids[i]);
        double branch = rng.uniform_real();
        if (branch < 0.8) {
            batch.corrupted.ids[i] = MASK;
        } else if (branch < 0.9) {
            batch.corrupted.ids[i] =
                kNumSpecials + static_cast<TokenId>(rng.uniform_u64(
                                   static_cast<uint64_t>(vocab.size() - kNumSpecials)));
        }  // else leave unchanged
    }
    return batch;
}

std::pair<TokenSequence, TokenSequence> make_denoising_corruption(const TokenSequence& seq,
                                                                  const BpeVocab& vocab,
                                                                  uint64_t seed,
                                                                  double span_lambda) {
    if (seq.ids.empty()) throw UsageError("make_denoising_corruption: empty sequence");

    // maskable region excludes special tokens (BOS/EOS stay in place)
    std::vector<size_t> maskable;
    for (size_t i = 0; i < seq.ids.size(); ++i)
        if (!vocab.is_special(seq.ids[i])) maskable.push_back(i);

    DetRng rng(mix_seed(seed, 0x696e66696c6c));  // "infill"
    std::vector<int> span_id(seq.ids.size(), -1);
    size_t covered = 0;
    size_t target = static_cast<size_t>(std::llround(0.30 * static_cast<double>(maskable.size())));
    int next_span = 0;
    int stall = 0;
    while (covered < target && stall < 200) {
        size_t len = std::max<uint64_t>(1, rng.poisson(span_lambda));
        len = std::min(len, maskable.size());
        if (maskable.empty()) break;
        size_t start_slot = rng.index(maskable.size() - len + 1);
        bool free = true;
        for (size_t k = 0; k < len; ++k)
            if (span_id[maskable[start_slot + k]] >= 0) free = false;
        if (!free) {
            ++stall;
            continue;
        }
        for (size_t k = 0; k < len; ++k) span_id[maskable[start_slot + k]] = next_span;
        ++next_span;
        covered += len;
    }

    TokenSequence corrupted;
    int emitted_span = -1;
    for (size_t i = 0; i < seq.ids.size(); ++i) {
        if (span_id[i] < 0) {
            corrupted.ids.push_back(seq.ids[i]);
            if (seq.ids[i] < kNumSpecials) corrupted.segment_marks.push_back(corrupted.ids.size() - 1);
            emitted_span = -1;
        } else if (span_id[i] != emitted_span) {
            corrupted.ids.push_back(MASK);
            corrupted.segment_marks.push_back(corrupted.ids.size() - 1);
            emitted_span = span_id[i];
        }
    }
    return {corrupted, seq};
}

TokenSequence make_pair_input(const std::string& first_text, const std::string& second_text,
                              const BpeVocab& vocab, size_t max_len) {
    if (max_len < 8) throw UsageError("make_pair_input: max_len must be at least 8");

    std::vector<TokenId> a = encode(first_text, vocab, false).ids;
    std::vector<TokenId> b = encode(second_text, vocab, false).ids;

    // longest-first truncation; ties truncate the second segment
    while (a.size() + b.size() + 3 > max_len) {
        if (a.size() > b.size())
            a.pop_back();
        else
            b.pop_back();
    }

    TokenSequence seq;
    seq.ids.reserve(max_len);
    seq.ids.push_back(CLS);
    seq.segment_marks.push_back(0);
    seq.ids.insert(seq.ids.end(), a.begin(), a.end());
    seq.ids.push_back(SEP);
    seq.segment_marks.push_back(seq.ids.size() - 1);
    seq.ids.insert(seq.ids.end(), b.begin(), b.end());
    seq.ids.push_back(SEP);
    seq.segment_marks.push_back(seq.ids.size() - 1);
    while (seq.ids.size() < max_len) {
        seq.ids.push_back(PAD);
        seq.segment_marks.push_back(seq.ids.size() - 1);
    }
    return seq;
}

// ---------------------------------------------------------------------------
// vocabulary file

namespace {

constexpr const char* kVocabMagic = "pktseer-bpe v1";
constexpr const char* kSpecialNames[kNumSpecials] = {"<pad>", "<bos>", "<eos>",
                                                     "<sep>", "<cls>", "<mask>"};

std::string escape_bytes(const std::string& bytes) {
    std::string out;
    for (unsigned char c : bytes) {
        if (c > 0x20 && c < 0x7f && c != '\\') {
            out += static_cast<char>(c);
        } else {
            char buf[5];
            std::snprintf(buf, sizeof buf, "\\x%02x", c);
            out += buf;
        }
    }
    return out;
}

std::string unescape_bytes(const std::string& s) {
    std::string out;
    for (size_t i = 0; i < s.size();) {
        if (s[i] == '\\') {
            if (i + 3 >= s.size() || s[i + 1] != 'x')
                throw DataError("vocab file: bad escape in token: " + s);
            unsigned v = 0;
            auto [p, ec] = std::from_chars(s.data() + i + 2, s.data() + i + 4, v, 16);
            if (ec != std::errc() || p != s.data() + i + 4)
                throw DataError("vocab file: bad escape in token: " + s);
            out += static_cast<char>(v);
            i += 4;
        } else {
            out += s[i++];
        }
    }
    return out;
}

}  // namespace

void save_vocab(std::ostream& out, const BpeVocab& vocab) {
    out << kVocabMagic << '\n';
    for (TokenId i = 0; i < kNumSpecials; ++i)
        out << "special " << i << ' ' << kSpecialNames[i] << '\n';
    for (const auto& m : vocab.merges())
        out << escape_bytes(vocab.token_bytes(m.left)) << ' '
            << escape_bytes(vocab.token_bytes(m.right)) << '\n';
}

BpeVocab load_vocab(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != kVocabMagic)
        throw DataError("vocab file: bad magic line");
    for (TokenId i = 0; i < kNumSpecials; ++i) {
        if (!std::getline(in, line))
            throw DataError("vocab file: truncated special-token table");
        std::string expect = "special " + std::to_string(i) + " " + kSpecialNames[i];
        if (line != expect)
            throw DataError("vocab file: bad special-token line: " + line);
    }
    BpeVocab vocab;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        size_t sp = line.find(' ');
        if (sp == std::string::npos) throw DataError("vocab file: bad merge line: " + line);
        std::string lb = unescape_bytes(line.substr(0, sp));
        std::string rb = unescape_bytes(line.substr(sp + 1));
        auto li = vocab.id_of(lb);
        auto ri = vocab.id_of(rb);
        if (!li || !ri) throw DataError("vocab file: merge references unknown token: " + line);
        vocab.add_merge(*li, *ri);
    }
    return vocab;
}

}  // namespace pktseer
