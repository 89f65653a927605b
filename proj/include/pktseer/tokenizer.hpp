#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pktseer/common.hpp"
#include "pktseer/ingest.hpp"

namespace pktseer {

using TokenId = int32_t;

// Reserved special-token ids. Byte tokens occupy [6, 262); merges follow.
enum Special : TokenId { PAD = 0, BOS = 1, EOS = 2, SEP = 3, CLS = 4, MASK = 5 };
constexpr TokenId kNumSpecials = 6;
constexpr TokenId kFirstByteId = kNumSpecials;
constexpr TokenId kBaseVocabSize = kNumSpecials + 256;

struct BpeMerge {
    TokenId left = 0;
    TokenId right = 0;
    TokenId merged = 0;  // may reuse an existing id when the byte strings collide
};

class BpeVocab {
public:
    BpeVocab();

    TokenId size() const { return static_cast<TokenId>(token_bytes_.size()); }
    const std::vector<BpeMerge>& merges() const { return merges_; }

    // byte string of a token; empty for specials
    const std::string& token_bytes(TokenId id) const;
    std::optional<TokenId> id_of(const std::string& bytes) const;
    bool is_special(TokenId id) const { return id >= 0 && id < kNumSpecials; }

    // Registers the merge (and its surface form if new). Used by training and
    // by the vocabulary-file reader.
    TokenId add_merge(TokenId left, TokenId right);

    friend bool operator==(const BpeVocab&, const BpeVocab&) = default;

private:
    std::vector<std::string> token_bytes_;       // id -> bytes ("" for specials)
    std::map<std::string, TokenId> token_to_id_;  // bytes -> id, byte tokens only
    std::vector<BpeMerge> merges_;
};

struct TokenSequence {
    std::vector<TokenId> ids;
    std::vector<size_t> segment_marks;  // positions holding special tokens

    size_t size() const { return ids.size(); }
    friend bool operator==(const TokenSequence&, const TokenSequence&) = default;
};

struct MaskedBatch {
    TokenSequence corrupted;
    std::vector<TokenId> target_ids;      // original ids at masked positions
    std::vector<size_t> masked_positions;
};

// --- packet text serialization ---------------------------------------------

// `name=value` fields joined by single spaces in kept-feature order.
std::string serialize_packet(const PacketRecord& p, const std::vector<std::string>& kept_features);

enum class PacketParseErrorKind { WrongFieldCount, UnknownName, UnparseableValue };

struct PacketParseError {
    PacketParseErrorKind kind;
    size_t position = 0;  // field index the error was detected at
    std::string detail;
};

struct PacketParseResult {
    std::optional<PacketRecord> record;
    std::optional<PacketParseError> error;
    bool ok() const { return record.has_value(); }
};

// Inverse of serialize_packet; never throws on malformed text (the error kind
// is the rejection signal for model generations).
PacketParseResult parse_packet_text(const std::string& text,
                                    const std::vector<std::string>& kept_features);

// --- BPE --------------------------------------------------------------------

// Byte-level BPE. Repeatedly merges the most frequent adjacent pair until the
// vocabulary is full or no pair occurs at least twice; frequency ties go to
// the lexicographically smallest (left bytes, right bytes).
BpeVocab train_bpe(const std::vector<std::string>& corpus, TokenId vocab_size);

TokenSequence encode(const std::string& text, const BpeVocab& vocab, bool add_bos_eos);
std::string decode(const TokenSequence& seq, const BpeVocab& vocab);

// --- corruptions -------------------------------------------------------------

// BERT-style masking: each non-special position is selected with mask_prob;
// selected positions become MASK 80% of the time, a random non-special token
// 10%, and stay unchanged 10%.
MaskedBatch make_mlm_corruption(const TokenSequence& seq, double mask_prob, const BpeVocab& vocab,
                                uint64_t seed);

// Span infilling: spans with Poisson(span_lambda) lengths covering about 30%
// of the maskable tokens are each replaced by a single MASK.
std::pair<TokenSequence, TokenSequence> make_denoising_corruption(const TokenSequence& seq,
                                                                  const BpeVocab& vocab,
                                                                  uint64_t seed,
                                                                  double span_lambda = 3.0);

// [CLS] first [SEP] second [SEP], longest-first truncation to max_len, then
// PAD to exactly max_len.
TokenSequence make_pair_input(const std::string& first_text, const std::string& second_text,
                              const BpeVocab& vocab, size_t max_len);

// --- vocabulary file ----------------------------------------------------------

void save_vocab(std::ostream& out, const BpeVocab& vocab);
BpeVocab load_vocab(std::istream& in);

}  // namespace pktseer
