#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "geoforge/doc_model.hpp"

namespace geoforge::md {

enum class SpanKind { Figure, Table, Ref, Formula };

std::string_view start_token(SpanKind kind);
std::string_view end_token(SpanKind kind);
std::string_view span_kind_name(SpanKind kind);

struct Span {
    SpanKind kind = SpanKind::Figure;
    std::size_t start = 0;  // byte offset of '[' of the start token
    std::size_t end = 0;    // byte offset one past ']' of the end token
};

struct SpecialTokenText {
    std::string text;
    std::vector<Span> spans;
};

class EmitError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// "[START_K]" + payload + "[END_K]". Rejects payloads that already contain a
// special-token literal; callers sanitize first with escape_special_tokens.
std::string wrap_segment(SpanKind kind, std::string_view payload);

// Breaks any embedded special-token literal with a zero-width space after its
// leading '[' so span invariants hold unconditionally (documented in
// docs/formats.md).
std::string escape_special_tokens(std::string_view text);
bool contains_special_token(std::string_view text);

// Pipe-delimited Markdown: header row, `---` separator row, data rows.
// Cell escapes: `\` -> `\\`, `|` -> `\|`, newline -> `\n`.
std::string table_to_markdown(const doc::Table& table);
std::string table_to_markdown(const std::vector<std::vector<std::string>>& grid);

// Inverse reader for the format above; the round-trip counterpart of
// table_to_markdown.
std::vector<std::vector<std::string>> table_from_markdown(std::string_view markdown);

struct CitationOutcome {
    std::string text;      // REF-wrapped replacement
    bool fallback = false;  // surface kept because no usable title resolved
};

CitationOutcome resolve_citation(const doc::CitationAnchor& anchor,
                                 const std::vector<doc::BibEntry>& bibliography);

struct EmitResult {
    SpecialTokenText output;
    std::size_t citation_fallbacks = 0;
};

// Renders the whole document: headings, paragraphs with resolved citations,
// figure captions (captions only, never image content), tables as caption +
// Markdown grid inside one TABLE span, formulas inline in FORMULA spans.
EmitResult emit_markdown(const doc::StructuredDocument& document);

// Checks the SpecialTokenText invariants: every span wraps matching tokens,
// same-kind spans do not nest or partially overlap, start/end token counts
// balance. Returns problem descriptions, empty when valid.
std::vector<std::string> validate_spans(const SpecialTokenText& stt);

nlohmann::json spans_to_json(const SpecialTokenText& stt);
std::vector<Span> spans_from_json(const nlohmann::json& j);

}  // namespace geoforge::md
