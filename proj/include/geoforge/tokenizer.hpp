#pragma once

#include <cstdint>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace geoforge::corpus {

using TokenId = std::uint32_t;

struct TokenSpan {
    TokenId id = 0;
    std::size_t start = 0;  // byte range of the token in the source text
    std::size_t end = 0;
};

// Tokenization boundary: the production model tokenizer plugs in behind this
// interface; every numeric test in the suite runs against the bundled
// reference tokenizer.
class Tokenizer {
public:
    virtual ~Tokenizer() = default;

    virtual std::vector<TokenSpan> encode_spans(std::string_view text) = 0;
    virtual std::string decode(std::span<const TokenId> ids) = 0;
    virtual TokenId eos_id() const = 0;

    std::vector<TokenId> encode(std::string_view text);
};

// Deterministic reference tokenizer: splits into word runs (alnum, '_', and
// any non-ASCII byte) and single punctuation characters, assigning ids in
// first-appearance order starting after the reserved range. decode(encode(s))
// equals s once whitespace is stripped. Ids 0/1/2 are reserved (pad/bos/eos)
// and never produced for text.
class ReferenceTokenizer : public Tokenizer {
public:
    static constexpr TokenId kPadId = 0;
    static constexpr TokenId kBosId = 1;
    static constexpr TokenId kEosId = 2;
    static constexpr TokenId kFirstTextId = 3;

    std::vector<TokenSpan> encode_spans(std::string_view text) override;
    std::string decode(std::span<const TokenId> ids) override;
    TokenId eos_id() const override { return kEosId; }

    std::size_t vocab_size() const;

private:
    TokenId intern(std::string_view token);

    mutable std::mutex mutex_;
    std::unordered_map<std::string, TokenId> vocab_;
    std::vector<std::string> id_to_token_;
};

}  // namespace geoforge::corpus
