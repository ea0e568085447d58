#include "geoforge/tokenizer.hpp"

#include <cctype>

namespace geoforge::corpus {

std::vector<TokenId> Tokenizer::encode(std::string_view text) {
    std::vector<TokenSpan> spans = encode_spans(text);
    std::vector<TokenId> ids;
    ids.reserve(spans.size());
    for (const TokenSpan& span : spans) {
        ids.push_back(span.id);
    }
    return ids;
}

namespace {

bool is_word_byte(unsigned char c) {
    return std::isalnum(c) != 0 || c == '_' || c >= 0x80;
}

bool is_space_byte(unsigned char c) {
    return std::isspace(c) != 0;
}

}  // namespace

TokenId ReferenceTokenizer::intern(std::string_view token) {
    auto it = vocab_.find(std::string(token));
    if (it != vocab_.end()) {
        return it->second;
    }
    TokenId id = kFirstTextId + static_cast<TokenId>(id_to_token_.size());
    id_to_token_.emplace_back(token);
    vocab_.emplace(id_to_token_.back(), id);
    return id;
}

std::vector<TokenSpan> ReferenceTokenizer::encode_spans(std::string_view text) {
    std::lock_guard<std::mutex> lock(mutex_);
    std::vector<TokenSpan> out;
    std::size_t i = 0;
    while (i < text.size()) {
        unsigned char c = static_cast<unsigned char>(text[i]);
        if (is_space_byte(c)) {
            ++i;
            continue;
        }
        std::size_t start = i;
        if (is_word_byte(c)) {
            while (i < text.size() && is_word_byte(static_cast<unsigned char>(text[i]))) {
                ++i;
            }
        } else {
            ++i;  // punctuation: one byte per token
        }
        out.push_back({intern(text.substr(start, i - start)), start, i});
    }
    return out;
}

std::string ReferenceTokenizer::decode(std::span<const TokenId> ids) {
    std::lock_guard<std::mutex> lock(mutex_);
    std::string out;
    for (TokenId id : ids) {
        if (id < kFirstTextId) {
            continue;  // reserved markers carry no text
        }
        std::size_t idx = id - kFirstTextId;
        if (idx >= id_to_token_.size()) {
            continue;
        }
        const std::string& token = id_to_token_[idx];
        bool punct = token.size() == 1 && !is_word_byte(static_cast<unsigned char>(token[0]));
        if (!out.empty() && !punct) {
            out.push_back(' ');
        }
        out += token;
    }
    return out;
}

std::size_t ReferenceTokenizer::vocab_size() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return id_to_token_.size();
}

}  // namespace geoforge::corpus
