#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace geoforge::doc {

struct CitationAnchor {
    std::string surface;               // as it appeared in the text, e.g. "[12]"
    std::optional<std::string> bib_key;  // absent = unresolved
    std::size_t start = 0;             // byte offsets into the owning paragraph text
    std::size_t end = 0;
};

enum class ObjectKind { Figure, Table };

struct ObjectRef {
    ObjectKind kind = ObjectKind::Figure;
    std::size_t index = 0;  // 1-based document object index
};

struct Paragraph {
    std::string text;
    std::vector<CitationAnchor> anchors;
    std::vector<ObjectRef> object_refs;  // filled by the caption linker
};

struct Section {
    int level = 0;  // nesting depth, 0 = top level
    std::string heading;
    std::vector<Paragraph> paragraphs;
};

struct Figure {
    std::size_t index = 0;  // 1-based, contiguous
    std::string caption;
    std::optional<std::string> image_ref;
    bool caption_missing = false;
};

struct Table {
    std::size_t index = 0;
    std::string caption;
    std::vector<std::vector<std::string>> grid;  // rows x columns, rectangular
    bool caption_missing = false;
    bool empty = false;
};

struct Formula {
    std::size_t index = 0;
    std::string source_text;  // normalized math markup, braces balanced
};

struct BibEntry {
    std::string key;
    std::string title;
    std::string raw;
};

struct StructuredDocument {
    std::string doc_id;
    std::string title;
    std::vector<Section> sections;
    std::vector<BibEntry> bibliography;
    std::vector<Figure> figures;
    std::vector<Table> tables;
    std::vector<Formula> formulas;

    const BibEntry* find_bib(std::string_view key) const;
};

struct ParseWarning {
    std::string element;       // local element name that was skipped
    std::size_t line = 0;
    std::size_t element_count = 0;  // elements in the skipped subtree
    std::string message;
};

struct ParseResult {
    StructuredDocument document;
    std::vector<ParseWarning> warnings;
    // Reconciliation counters over the <body> subtree: every element is
    // either handled or accounted for by a warning.
    std::size_t handled_elements = 0;
    std::size_t skipped_elements = 0;
};

class DocumentError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Ingests the TEI-flavored XML subset emitted by structural PDF extractors:
// body divs with heads and paragraphs, bibr refs, figure/table elements,
// formulas, and a back-matter listBibl. Unknown elements are skipped with a
// warning. Throws geoforge::xml::ParseError on malformed XML and
// DocumentError when the body element is missing.
ParseResult parse_structured_xml(std::string_view xml_text, std::string_view doc_id = "");

struct Violation {
    std::string invariant;
    std::string element;
    std::string detail;
};

// Total check of every type invariant; empty result means the document is
// well formed.
std::vector<Violation> validate_document(const StructuredDocument& doc);

struct DocStats {
    std::size_t sections = 0;
    std::size_t paragraphs = 0;
    std::size_t figures = 0;
    std::size_t tables = 0;
    std::size_t formulas = 0;
    std::size_t anchors_resolved = 0;
    std::size_t anchors_unresolved = 0;
};

DocStats document_stats(const StructuredDocument& doc);

nlohmann::json stats_to_json(const DocStats& stats);
nlohmann::json violations_to_json(const std::vector<Violation>& violations);

// Removes unmatched braces so the text satisfies the formula invariant;
// exposed for tests.
std::string balance_braces(std::string_view text);

}  // namespace geoforge::doc
