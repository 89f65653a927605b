#include <doctest.h>

#include <map>
#include <sstream>

#include "pktseer/det_rng.hpp"
#include "pktseer/tokenizer.hpp"

using namespace pktseer;

namespace {

PacketRecord record_with(std::vector<std::pair<std::string, double>> feats) {
    PacketRecord r;
    r.features = std::move(feats);
    return r;
}

// Brute-force BPE oracle: re-tokenizes the raw corpus from scratch and
// recounts every pair at every step, working purely on byte strings.
std::vector<std::pair<std::string, std::string>> oracle_bpe(
    const std::vector<std::string>& corpus, size_t max_merges) {
    std::vector<std::pair<std::string, std::string>> merges;
    while (merges.size() < max_merges) {
        std::map<std::pair<std::string, std::string>, uint64_t> freq;
        for (const auto& line : corpus) {
            std::vector<std::string> toks;
            for (char c : line) toks.emplace_back(1, c);
            for (const auto& m : merges) {
                std::vector<std::string> next;
                for (size_t i = 0; i < toks.size();) {
                    if (i + 1 < toks.size() && toks[i] == m.first && toks[i + 1] == m.second) {
                        next.push_back(m.first + m.second);
                        i += 2;
                    } else {
                        next.push_back(toks[i++]);
                    }
                }
                toks = std::move(next);
            }
            for (size_t i = 0; i + 1 < toks.size(); ++i) freq[{toks[i], toks[i + 1]}] += 1;
        }
        std::pair<std::string, std::string> best;
        uint64_t best_count = 0;
        for (const auto& [pair, count] : freq) {
            if (count > best_count || (count == best_count && count > 0 && pair < best)) {
                best = pair;
                best_count = count;
            }
        }
        if (best_count < 2) break;
        merges.push_back(best);
    }
    return merges;
}

std::vector<std::pair<std::string, std::string>> merges_as_bytes(const BpeVocab& v) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& m : v.merges())
        out.emplace_back(v.token_bytes(m.left), v.token_bytes(m.right));
    return out;
}

}  // namespace

TEST_CASE("serialize_packet canonical form") {
    PacketRecord p = record_with({{"ttl", 64}, {"win", 1024}});
    CHECK(serialize_packet(p, {"ttl", "win"}) == "ttl=64 win=1024");
    CHECK(serialize_packet(record_with({{"x", 3.50}}), {"x"}) == "x=3.5");
    CHECK_THROWS_AS(serialize_packet(p, {"ttl", "missing"}), DataError);
}

TEST_CASE("parse_packet_text inverse and structured errors") {
    auto ok = parse_packet_text("ttl=64 win=1024", {"ttl", "win"});
    REQUIRE(ok.ok());
    CHECK(ok.record->features[0].second == 64.0);
    CHECK(ok.record->features[1].second == 1024.0);

    auto wrong_count = parse_packet_text("ttl=64", {"ttl", "win"});
    REQUIRE_FALSE(wrong_count.ok());
    CHECK(wrong_count.error->kind == PacketParseErrorKind::WrongFieldCount);

    auto unknown = parse_packet_text("ttl=64 bogus=3", {"ttl", "win"});
    REQUIRE_FALSE(unknown.ok());
    CHECK(unknown.error->kind == PacketParseErrorKind::UnknownName);

    auto reordered = parse_packet_text("win=1024 ttl=64", {"ttl", "win"});
    REQUIRE_FALSE(reordered.ok());
    CHECK(reordered.error->kind == PacketParseErrorKind::UnknownName);

    auto bad_value = parse_packet_text("ttl=sixty win=1024", {"ttl", "win"});
    REQUIRE_FALSE(bad_value.ok());
    CHECK(bad_value.error->kind == PacketParseErrorKind::UnparseableValue);
}

TEST_CASE("serialize -> parse -> serialize is a fixed point on random records") {
    std::vector<std::string> kept{"a", "b", "c", "d"};
    DetRng rng(2024);
    for (int i = 0; i < 1000; ++i) {
        PacketRecord p = record_with({{"a", std::floor(rng.normal(0, 1000))},
                                      {"b", rng.normal(0, 5)},
                                      {"c", rng.uniform_real() * 1e9},
                                      {"d", -rng.uniform_real()}});
        std::string text = serialize_packet(p, kept);
        auto parsed = parse_packet_text(text, kept);
        REQUIRE(parsed.ok());
        CHECK(serialize_packet(*parsed.record, kept) == text);
    }
}

TEST_CASE("parse_packet_text fuzz never crashes, errors stay structured") {
    std::vector<std::string> kept{"ttl", "win"};
    DetRng rng(999);
    const std::string base = "ttl=64 win=1024";
    size_t ok_count = 0;
    for (int i = 0; i < 2000; ++i) {
        std::string mutated = base;
        size_t n_mut = 1 + rng.index(4);
        for (size_t k = 0; k < n_mut; ++k) {
            size_t pos = rng.index(mutated.size());
            switch (rng.index(3)) {
                case 0: mutated[pos] = static_cast<char>(rng.index(256)); break;
                case 1: mutated.erase(pos, 1); break;
                default: mutated.insert(pos, 1, static_cast<char>(32 + rng.index(95))); break;
            }
            if (mutated.empty()) mutated = "x";
        }
        auto res = parse_packet_text(mutated, kept);
        if (res.ok()) {
            ++ok_count;
            CHECK(res.record->features.size() == kept.size());
        } else {
            bool known = res.error->kind == PacketParseErrorKind::WrongFieldCount ||
                         res.error->kind == PacketParseErrorKind::UnknownName ||
                         res.error->kind == PacketParseErrorKind::UnparseableValue;
            CHECK(known);
        }
    }
    CHECK(ok_count < 2000);  // mutations do break parses
}

TEST_CASE("train_bpe on `aaaa`: one merge then the remaining pair is too rare") {
    // hand simulation: "aaaa" has pair (a,a) three times -> merge. The merged
    // line "aa aa" has pair (aa,aa) only once, below the >=2 occurrence rule,
    // so training stops regardless of the remaining vocabulary budget.
    BpeVocab v = train_bpe({"aaaa"}, 264);
    auto merges = merges_as_bytes(v);
    REQUIRE(merges.size() == 1);
    CHECK(merges[0] == std::pair<std::string, std::string>{"a", "a"});

    // with the line twice, (aa,aa) occurs twice and the second merge happens
    BpeVocab v2 = train_bpe({"aaaa", "aaaa"}, 264);
    auto merges2 = merges_as_bytes(v2);
    REQUIRE(merges2.size() == 2);
    CHECK(merges2[0] == std::pair<std::string, std::string>{"a", "a"});
    CHECK(merges2[1] == std::pair<std::string, std::string>{"aa", "aa"});
}

TEST_CASE("train_bpe corner cases") {
    CHECK_THROWS_AS(train_bpe({}, 300), DataError);
    CHECK_THROWS_AS(train_bpe({"ab"}, 262), UsageError);
    // all-unique characters: no repeated pair anywhere
    BpeVocab v = train_bpe({"abcdef"}, 300);
    CHECK(v.merges().empty());
}

TEST_CASE("train_bpe matches the recount-every-step oracle") {
    std::vector<std::string> corpus;
    DetRng rng(31337);
    const char* words[] = {"ttl=64", "ttl=128", "win=1024", "win=512", "len=60", "len=1500"};
    for (int i = 0; i < 50; ++i) {
        std::string line;
        size_t n = 1 + rng.index(4);
        for (size_t k = 0; k < n; ++k) {
            if (k) line += ' ';
            line += words[rng.index(6)];
        }
        corpus.push_back(line);
    }
    BpeVocab v = train_bpe(corpus, 262 + 40);
    auto expect = oracle_bpe(corpus, 40);
    CHECK(merges_as_bytes(v) == expect);
}

TEST_CASE("encode/decode round trip and specials") {
    BpeVocab v = train_bpe({"ttl=64 win=1024", "ttl=64 win=512"}, 300);

    SUBCASE("empty text") {
        TokenSequence with = encode("", v, true);
        CHECK(with.ids == std::vector<TokenId>{BOS, EOS});
        TokenSequence without = encode("", v, false);
        CHECK(without.ids.empty());
    }
    SUBCASE("round trip on random packet texts") {
        DetRng rng(77);
        for (int i = 0; i < 10000; ++i) {
            std::string text = "ttl=" + std::to_string(rng.index(256)) +
                               " win=" + std::to_string(rng.index(65536));
            TokenSequence seq = encode(text, v, rng.bernoulli(0.5));
            CHECK(decode(seq, v) == text);
        }
    }
    SUBCASE("vocabulary closure") {
        TokenSequence seq = encode("ttl=64 win=1024", v, true);
        for (TokenId id : seq.ids) {
            CHECK(id >= 0);
            CHECK(id < v.size());
        }
    }
    SUBCASE("decode rejects out-of-range ids") {
        TokenSequence bad;
        bad.ids = {v.size()};
        CHECK_THROWS_AS(decode(bad, v), UsageError);
    }
}

TEST_CASE("vocabulary file round-trips bit-exactly") {
    std::vector<std::string> corpus{"flags=2 win=8192", "flags=16 win=8192",
                                    "flags=24 win=8176", "x=\x01\x02 y=3"};
    BpeVocab v = train_bpe(corpus, 300);
    std::ostringstream os;
    save_vocab(os, v);
    std::string bytes = os.str();

    std::istringstream in(bytes);
    BpeVocab loaded = load_vocab(in);
    CHECK(loaded == v);

    std::ostringstream os2;
    save_vocab(os2, loaded);
    CHECK(os2.str() == bytes);

    // encoding with the loaded vocabulary is identical
    TokenSequence a = encode("flags=24 win=8192", v, true);
    TokenSequence b = encode("flags=24 win=8192", loaded, true);
    CHECK(a.ids == b.ids);

    SUBCASE("corrupt files are rejected") {
        std::istringstream bad1("wrong magic\n");
        CHECK_THROWS_AS(load_vocab(bad1), DataError);
        std::istringstream bad2("pktseer-bpe v1\nspecial 0 <pad>\n");
        CHECK_THROWS_AS(load_vocab(bad2), DataError);
    }
}

TEST_CASE("mlm corruption: determinism, saturation and rate") {
    BpeVocab v = train_bpe({"ttl=64 win=1024"}, 280);
    TokenSequence seq = encode("ttl=64 win=1024", v, true);

    SUBCASE("determinism") {
        MaskedBatch a = make_mlm_corruption(seq, 0.15, v, 42);
        MaskedBatch b = make_mlm_corruption(seq, 0.15, v, 42);
        CHECK(a.corrupted.ids == b.corrupted.ids);
        CHECK(a.masked_positions == b.masked_positions);
        CHECK(a.target_ids == b.target_ids);
    }
    SUBCASE("corrupted equals original away from masked positions") {
        MaskedBatch mb = make_mlm_corruption(seq, 0.4, v, 7);
        REQUIRE(mb.corrupted.ids.size() == seq.ids.size());
        std::set<size_t> masked(mb.masked_positions.begin(), mb.masked_positions.end());
        for (size_t i = 0; i < seq.ids.size(); ++i)
            if (!masked.count(i)) CHECK(mb.corrupted.ids[i] == seq.ids[i]);
        CHECK(mb.target_ids.size() == mb.masked_positions.size());
        for (size_t k = 0; k < mb.masked_positions.size(); ++k)
            CHECK(mb.target_ids[k] == seq.ids[mb.masked_positions[k]]);
        // specials are never selected
        for (size_t pos : mb.masked_positions) CHECK_FALSE(v.is_special(seq.ids[pos]));
    }
    SUBCASE("selected fraction concentrates near mask_prob") {
        size_t total = 0, selected = 0;
        for (uint64_t s = 0; total < 10000; ++s) {
            MaskedBatch mb = make_mlm_corruption(seq, 0.15, v, s);
            size_t non_special = 0;
            for (TokenId id : seq.ids)
                if (!v.is_special(id)) ++non_special;
            total += non_special;
            selected += mb.masked_positions.size();
        }
        double rate = static_cast<double>(selected) / static_cast<double>(total);
        CHECK(rate == doctest::Approx(0.15).epsilon(0.067));  // 0.15 +- 0.01
    }
    SUBCASE("bad mask_prob rejected") {
        CHECK_THROWS_AS(make_mlm_corruption(seq, 0.0, v, 1), UsageError);
        CHECK_THROWS_AS(make_mlm_corruption(seq, 1.0, v, 1), UsageError);
    }
}

TEST_CASE("denoising corruption: total infill, determinism and coverage") {
    BpeVocab v = train_bpe({"ttl=64 win=1024 len=60"}, 280);

    SUBCASE("a span covering everything leaves [BOS, MASK, EOS]") {
        TokenSequence seq = encode("ttl=64", v, true);
        // huge lambda forces one whole-sequence span
        auto [corrupted, original] = make_denoising_corruption(seq, v, 3, 1000.0);
        CHECK(corrupted.ids == std::vector<TokenId>{BOS, MASK, EOS});
        CHECK(original.ids == seq.ids);
    }
    SUBCASE("determinism") {
        TokenSequence seq = encode("ttl=64 win=1024 len=60", v, true);
        auto a = make_denoising_corruption(seq, v, 9);
        auto b = make_denoising_corruption(seq, v, 9);
        CHECK(a.first.ids == b.first.ids);
    }
    SUBCASE("coverage statistic near 30%") {
        TokenSequence seq = encode("ttl=64 win=1024 len=60 flags=16 ttlB=128", v, true);
        size_t maskable = 0;
        for (TokenId id : seq.ids)
            if (!v.is_special(id)) ++maskable;
        size_t covered_total = 0, denom = 0;
        for (uint64_t s = 0; s < 1000; ++s) {
            auto [corrupted, original] = make_denoising_corruption(seq, v, s);
            size_t kept = 0;
            for (TokenId id : corrupted.ids)
                if (!v.is_special(id)) ++kept;
            covered_total += maskable - kept;
            denom += maskable;
        }
        double coverage = static_cast<double>(covered_total) / static_cast<double>(denom);
        CHECK(coverage > 0.25);
        CHECK(coverage < 0.35);
    }
    SUBCASE("empty sequence rejected") {
        TokenSequence empty;
        CHECK_THROWS_AS(make_denoising_corruption(empty, v, 0), UsageError);
    }
}

TEST_CASE("make_pair_input structure, padding and truncation") {
    BpeVocab v = train_bpe({"ttl=64 win=1024"}, 280);

    SUBCASE("short texts pad to max_len") {
        TokenSequence seq = make_pair_input("ttl=1", "ttl=2", v, 64);
        CHECK(seq.ids.size() == 64);
        CHECK(seq.ids[0] == CLS);
        CHECK(seq.ids.back() == PAD);
    }
    SUBCASE("max_len below 8 is rejected") {
        CHECK_THROWS_AS(make_pair_input("a", "b", v, 7), UsageError);
    }
    SUBCASE("oversized first segment leaves the second its floor share") {
        std::string huge(500, 'x');
        size_t max_len = 32;
        TokenSequence seq = make_pair_input(huge, "ttl=64", v, max_len);
        CHECK(seq.ids.size() == max_len);
        size_t first_sep = 0;
        std::vector<size_t> seps;
        for (size_t i = 0; i < seq.ids.size(); ++i)
            if (seq.ids[i] == SEP) seps.push_back(i);
        REQUIRE(seps.size() == 2);
        first_sep = seps[0];
        size_t second_len = seps[1] - seps[0] - 1;
        size_t second_encoded = encode("ttl=64", v, false).ids.size();
        CHECK(second_len >= std::min(second_encoded, (max_len - 3) / 2));
        (void)first_sep;
    }
    SUBCASE("structural scan over random pairs") {
        DetRng rng(55);
        for (int i = 0; i < 1000; ++i) {
            std::string a = "ttl=" + std::to_string(rng.index(1000));
            std::string b = "win=" + std::to_string(rng.index(100000));
            TokenSequence seq = make_pair_input(a, b, v, 48);
            CHECK(seq.ids.size() == 48);
            CHECK(seq.ids[0] == CLS);
            size_t seps = 0, clss = 0;
            bool after_content_pad_only = true;
            bool seen_pad = false;
            for (size_t k = 0; k < seq.ids.size(); ++k) {
                if (seq.ids[k] == SEP) ++seps;
                if (seq.ids[k] == CLS) ++clss;
                if (seq.ids[k] == PAD) seen_pad = true;
                else if (seen_pad) after_content_pad_only = false;
            }
            CHECK(seps == 2);
            CHECK(clss == 1);
            CHECK(after_content_pad_only);  // padding is a suffix
        }
    }
}

TEST_CASE("BpeVocab bijection: merge surface collisions reuse the existing id") {
    // merges (a,aa) and (aa,a) would both produce "aaa"; the second must map
    // to the same id so token_to_id stays a bijection
    BpeVocab v;
    auto a = *v.id_of("a");
    TokenId aa = v.add_merge(a, a);
    TokenId aaa_1 = v.add_merge(a, aa);
    TokenId aaa_2 = v.add_merge(aa, a);
    CHECK(aaa_1 == aaa_2);
    CHECK(v.token_bytes(aaa_1) == "aaa");
    CHECK(v.id_of("aaa") == aaa_1);
}
