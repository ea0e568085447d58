#include "geoforge/caption_linker.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>

#include "geoforge/md_emitter.hpp"
#include "geoforge/util.hpp"

namespace geoforge::link {

std::string RefMatch::referring_text() const {
    if (!continuation) {
        return sentence.text;
    }
    return sentence.text + " " + continuation->text;
}

namespace {

bool is_space(char c) {
    return std::isspace(static_cast<unsigned char>(c)) != 0;
}

bool is_digit(char c) {
    return c >= '0' && c <= '9';
}

bool is_letter(char c) {
    return std::isalpha(static_cast<unsigned char>(c)) != 0;
}

// Marks every byte covered by an abbreviation occurrence so the periods
// inside (both dots of "e.g.") are protected from splitting.
std::vector<bool> protected_bytes(std::string_view text, const SentenceSplitOptions& options) {
    std::vector<bool> protect(text.size(), false);
    for (const auto& abbrev : options.abbreviations) {
        if (abbrev.empty()) {
            continue;
        }
        std::size_t pos = 0;
        while ((pos = text.find(abbrev, pos)) != std::string_view::npos) {
            bool boundary = pos == 0 || !std::isalnum(static_cast<unsigned char>(text[pos - 1]));
            if (boundary) {
                for (std::size_t i = pos; i < pos + abbrev.size(); ++i) {
                    protect[i] = true;
                }
            }
            pos += 1;
        }
    }
    return protect;
}

}  // namespace

std::vector<Sentence> split_sentences(std::string_view text, const SentenceSplitOptions& options) {
    std::vector<Sentence> sentences;
    if (text.empty()) {
        return sentences;
    }
    std::vector<bool> protect = protected_bytes(text, options);

    std::size_t cursor = 0;
    while (cursor < text.size()) {
        while (cursor < text.size() && is_space(text[cursor])) {
            ++cursor;
        }
        if (cursor >= text.size()) {
            break;
        }
        std::size_t start = cursor;
        std::size_t end = text.size();
        for (std::size_t i = cursor; i < text.size(); ++i) {
            char c = text[i];
            if (c == '?' || c == '!') {
                end = i + 1;
                break;
            }
            if (c == '.') {
                if (protect[i]) {
                    continue;
                }
                if (i > 0 && i + 1 < text.size() && is_digit(text[i - 1]) &&
                    is_digit(text[i + 1])) {
                    continue;
                }
                end = i + 1;
                break;
            }
        }
        // Trailing unpunctuated text still forms a sentence.
        std::size_t trimmed_end = end;
        while (trimmed_end > start && is_space(text[trimmed_end - 1])) {
            --trimmed_end;
        }
        if (trimmed_end > start) {
            sentences.push_back(
                {std::string(text.substr(start, trimmed_end - start)), start, trimmed_end});
        }
        cursor = end;
    }
    return sentences;
}

namespace {

std::vector<std::string_view> keywords_for(doc::ObjectKind kind, bool extended) {
    if (kind == doc::ObjectKind::Figure) {
        std::vector<std::string_view> keys = {"fig", "Fig", "FIG"};
        if (extended) {
            keys.insert(keys.end(), {"figure", "Figure", "FIGURE"});
        }
        return keys;
    }
    std::vector<std::string_view> keys = {"table", "Table", "TABLE"};
    if (extended) {
        keys.insert(keys.end(), {"tab", "Tab", "TAB"});
    }
    return keys;
}

// Index of the sentence whose byte range contains `offset`, or npos.
std::size_t sentence_at(const std::vector<Sentence>& sentences, std::size_t offset) {
    for (std::size_t i = 0; i < sentences.size(); ++i) {
        if (offset >= sentences[i].start && offset < sentences[i].end) {
            return i;
        }
    }
    return static_cast<std::size_t>(-1);
}

std::string clean_token(std::string_view token) {
    std::size_t begin = 0;
    std::size_t finish = token.size();
    while (begin < finish && !std::isalnum(static_cast<unsigned char>(token[begin]))) {
        ++begin;
    }
    while (finish > begin && !std::isalnum(static_cast<unsigned char>(token[finish - 1]))) {
        --finish;
    }
    std::string out(token.substr(begin, finish - begin));
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

bool of_follows(std::string_view text, std::size_t from, std::size_t until, std::size_t window) {
    std::size_t i = from;
    std::size_t seen = 0;
    while (i < until && seen < window) {
        while (i < until && is_space(text[i])) {
            ++i;
        }
        std::size_t token_start = i;
        while (i < until && !is_space(text[i])) {
            ++i;
        }
        if (i == token_start) {
            break;
        }
        ++seen;
        if (clean_token(text.substr(token_start, i - token_start)) == "of") {
            return true;
        }
    }
    return false;
}

}  // namespace

std::vector<RefMatch> scan_references(const std::vector<Sentence>& sentences,
                                      std::string_view source_text, doc::ObjectKind kind,
                                      std::size_t total_count, const LinkOptions& options) {
    std::vector<RefMatch> matches;
    const auto keywords = keywords_for(kind, options.extended_keywords);

    for (std::size_t pos = 0; pos < source_text.size(); ++pos) {
        for (std::string_view keyword : keywords) {
            if (source_text.substr(pos, keyword.size()) != keyword) {
                continue;
            }
            if (pos > 0 && std::isalnum(static_cast<unsigned char>(source_text[pos - 1]))) {
                continue;
            }
            std::size_t after = pos + keyword.size();
            if (after < source_text.size() && is_letter(source_text[after])) {
                continue;  // keyword is a prefix of a longer word
            }
            // Optional whitespace/punctuation between keyword and number; a
            // letter in between means this is not an object mention.
            std::size_t digit_start = after;
            while (digit_start < source_text.size() && !is_digit(source_text[digit_start]) &&
                   !is_letter(source_text[digit_start])) {
                ++digit_start;
            }
            if (digit_start >= source_text.size() || !is_digit(source_text[digit_start])) {
                continue;
            }
            // The whole digit run: Fig1 never matches inside Fig11.
            std::size_t digit_end = digit_start;
            std::uint64_t number = 0;
            while (digit_end < source_text.size() && is_digit(source_text[digit_end])) {
                if (number < 1000000000ULL) {
                    number = number * 10 + static_cast<std::uint64_t>(source_text[digit_end] - '0');
                }
                ++digit_end;
            }
            if (number == 0) {
                continue;
            }

            std::size_t sentence_idx = sentence_at(sentences, pos);
            if (sentence_idx == static_cast<std::size_t>(-1)) {
                continue;
            }

            RefMatch match;
            match.kind = kind;
            match.index = static_cast<std::size_t>(number);
            match.sentence = sentences[sentence_idx];
            // Keyword ends its sentence: this sentence plus the next one form
            // the referring text.
            if (digit_start >= sentences[sentence_idx].end &&
                sentence_idx + 1 < sentences.size()) {
                match.continuation = sentences[sentence_idx + 1];
            }

            std::size_t reach = match.continuation ? match.continuation->end
                                                   : sentences[sentence_idx].end;
            bool external = match.index > total_count ||
                            of_follows(source_text, after, reach, options.of_window_tokens);
            match.classification = external ? RefClass::External : RefClass::Internal;
            matches.push_back(std::move(match));
            break;
        }
    }
    return matches;
}

std::vector<RefMatch> find_referring_sentences(const std::vector<Sentence>& sentences,
                                               std::string_view source_text, doc::ObjectKind kind,
                                               std::size_t index, std::size_t total_count,
                                               const LinkOptions& options) {
    if (total_count < 1) {
        throw std::invalid_argument("total_count must be at least 1");
    }
    if (index < 1) {
        throw std::invalid_argument("object index must be at least 1");
    }
    std::vector<RefMatch> all = scan_references(sentences, source_text, kind, total_count, options);
    std::vector<RefMatch> out;
    for (auto& match : all) {
        if (match.index == index) {
            out.push_back(std::move(match));
        }
    }
    return out;
}

bool counterpart_acceptable(std::string_view text, std::size_t min_len) {
    if (text.size() < min_len) {
        return false;
    }
    // Control bytes, broken UTF-8, or replacement characters mean the
    // extraction upstream garbled the text.
    std::size_t i = 0;
    while (i < text.size()) {
        unsigned char c = static_cast<unsigned char>(text[i]);
        if (c < 0x20 && c != '\n' && c != '\t' && c != '\r') {
            return false;
        }
        if (c < 0x80) {
            ++i;
            continue;
        }
        std::size_t extra = 0;
        if ((c & 0xE0) == 0xC0) {
            extra = 1;
        } else if ((c & 0xF0) == 0xE0) {
            extra = 2;
        } else if ((c & 0xF8) == 0xF0) {
            extra = 3;
        } else {
            return false;
        }
        if (i + extra >= text.size()) {
            return false;
        }
        for (std::size_t k = 1; k <= extra; ++k) {
            if ((static_cast<unsigned char>(text[i + k]) & 0xC0) != 0x80) {
                return false;
            }
        }
        if (extra == 2 && c == 0xEF && static_cast<unsigned char>(text[i + 1]) == 0xBF &&
            static_cast<unsigned char>(text[i + 2]) == 0xBD) {
            return false;  // U+FFFD
        }
        i += extra + 1;
    }
    return true;
}

std::string document_text(const doc::StructuredDocument& document) {
    std::string out;
    for (const auto& section : document.sections) {
        for (const auto& paragraph : section.paragraphs) {
            if (!out.empty()) {
                out += '\n';
            }
            out += paragraph.text;
        }
    }
    return out;
}

namespace {

void emit_pairs_for_kind(const doc::StructuredDocument& document, doc::ObjectKind kind,
                         const LinkOptions& options, const std::vector<Sentence>& sentences,
                         const std::string& text, LinkResult& result) {
    std::size_t total =
        kind == doc::ObjectKind::Figure ? document.figures.size() : document.tables.size();
    std::vector<RefMatch> matches = scan_references(sentences, text, kind, total, options);

    auto caption_of = [&](std::size_t index) -> const std::string* {
        if (kind == doc::ObjectKind::Figure) {
            return index >= 1 && index <= document.figures.size()
                       ? &document.figures[index - 1].caption
                       : nullptr;
        }
        return index >= 1 && index <= document.tables.size() ? &document.tables[index - 1].caption
                                                             : nullptr;
    };

    for (auto& match : matches) {
        if (match.classification != RefClass::Internal) {
            continue;
        }
        const std::string* caption = caption_of(match.index);
        std::string counterpart = match.referring_text();
        if (caption == nullptr || caption->empty() ||
            !counterpart_acceptable(counterpart, options.min_counterpart_len)) {
            match.classification = RefClass::AmbiguousDiscarded;
            continue;
        }
        result.pairs.push_back({document.doc_id, kind, match.index, *caption,
                                std::move(counterpart), PairKind::CaptionReferringSentence});
    }

    // Content pairs: image metadata for figures, the Markdown grid for tables.
    if (kind == doc::ObjectKind::Figure) {
        for (const auto& figure : document.figures) {
            if (figure.caption.empty() || !figure.image_ref) {
                continue;
            }
            if (counterpart_acceptable(*figure.image_ref, options.min_counterpart_len)) {
                result.pairs.push_back({document.doc_id, kind, figure.index, figure.caption,
                                        *figure.image_ref, PairKind::CaptionContent});
            }
        }
    } else {
        for (const auto& table : document.tables) {
            if (table.caption.empty() || table.grid.empty() || table.grid.front().empty()) {
                continue;
            }
            std::string content = md::table_to_markdown(table);
            if (counterpart_acceptable(content, options.min_counterpart_len)) {
                result.pairs.push_back({document.doc_id, kind, table.index, table.caption,
                                        std::move(content), PairKind::CaptionContent});
            }
        }
    }

    auto& sink =
        kind == doc::ObjectKind::Figure ? result.figure_matches : result.table_matches;
    sink = std::move(matches);
}

}  // namespace

LinkResult link_captions_detailed(const doc::StructuredDocument& document,
                                  const LinkOptions& options) {
    LinkResult result;
    std::string text = document_text(document);
    std::vector<Sentence> sentences = split_sentences(text, options.sentences);
    emit_pairs_for_kind(document, doc::ObjectKind::Figure, options, sentences, text, result);
    emit_pairs_for_kind(document, doc::ObjectKind::Table, options, sentences, text, result);
    return result;
}

std::vector<CaptionPair> link_captions(const doc::StructuredDocument& document,
                                       std::size_t min_counterpart_len) {
    LinkOptions options;
    options.min_counterpart_len = min_counterpart_len;
    return link_captions_detailed(document, options).pairs;
}

nlohmann::ordered_json pair_to_json(const CaptionPair& pair) {
    return nlohmann::ordered_json{
        {"doc_id", pair.doc_id},
        {"kind", pair.kind == doc::ObjectKind::Figure ? "figure" : "table"},
        {"index", pair.index},
        {"caption", pair.caption},
        {"counterpart", pair.counterpart},
        {"pair_kind", pair.pair_kind == PairKind::CaptionReferringSentence
                          ? "caption-referring-sentence"
                          : "caption-content"}};
}

}  // namespace geoforge::link
