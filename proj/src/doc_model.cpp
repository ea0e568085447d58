#include "geoforge/doc_model.hpp"

#include <algorithm>

#include "geoforge/util.hpp"
#include "geoforge/xml.hpp"

namespace geoforge::doc {

using util::normalize_ws;

const BibEntry* StructuredDocument::find_bib(std::string_view key) const {
    for (const auto& entry : bibliography) {
        if (entry.key == key) {
            return &entry;
        }
    }
    return nullptr;
}

std::string balance_braces(std::string_view text) {
    std::vector<std::size_t> open_stack;
    std::vector<bool> drop(text.size(), false);
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] == '{') {
            open_stack.push_back(i);
        } else if (text[i] == '}') {
            if (open_stack.empty()) {
                drop[i] = true;
            } else {
                open_stack.pop_back();
            }
        }
    }
    for (std::size_t pos : open_stack) {
        drop[pos] = true;
    }
    std::string out;
    out.reserve(text.size());
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (!drop[i]) {
            out.push_back(text[i]);
        }
    }
    return out;
}

namespace {

const xml::Element* find_descendant(const xml::Element& root, std::string_view name) {
    if (root.local_name() == name) {
        return &root;
    }
    for (const auto& child : root.children) {
        if (const auto* e = std::get_if<xml::Element>(&child)) {
            if (const auto* found = find_descendant(*e, name)) {
                return found;
            }
        }
    }
    return nullptr;
}

void find_descendants(const xml::Element& root, std::string_view name,
                      std::vector<const xml::Element*>& out) {
    if (root.local_name() == name) {
        out.push_back(&root);
    }
    for (const auto& child : root.children) {
        if (const auto* e = std::get_if<xml::Element>(&child)) {
            find_descendants(*e, name, out);
        }
    }
}

std::string extract_title(const xml::Element& root) {
    const auto* header = find_descendant(root, "teiHeader");
    if (header == nullptr) {
        return {};
    }
    const auto* title_stmt = find_descendant(*header, "titleStmt");
    const auto* title = title_stmt != nullptr ? title_stmt->first_child("title") : nullptr;
    if (title == nullptr) {
        title = find_descendant(*header, "title");
    }
    return title != nullptr ? normalize_ws(title->text()) : std::string{};
}

std::string bib_entry_title(const xml::Element& bibl) {
    std::vector<const xml::Element*> titles;
    find_descendants(bibl, "title", titles);
    for (const auto* t : titles) {
        const std::string* level = t->attr("level");
        const std::string* type = t->attr("type");
        if ((level != nullptr && *level == "a") || (type != nullptr && *type == "main")) {
            return normalize_ws(t->text());
        }
    }
    return titles.empty() ? std::string{} : normalize_ws(titles.front()->text());
}

std::vector<BibEntry> extract_bibliography(const xml::Element& root,
                                           std::vector<ParseWarning>& warnings) {
    std::vector<BibEntry> entries;
    std::vector<const xml::Element*> lists;
    find_descendants(root, "listBibl", lists);
    for (const auto* list : lists) {
        for (const auto* bibl : list->children_named("biblStruct")) {
            BibEntry entry;
            const std::string* id = bibl->attr("xml:id");
            if (id == nullptr) {
                id = bibl->attr("id");
            }
            if (id == nullptr) {
                warnings.push_back({"biblStruct", bibl->line, 0, "bibliography entry without id"});
                continue;
            }
            entry.key = *id;
            entry.title = bib_entry_title(*bibl);
            entry.raw = normalize_ws(bibl->text());
            entries.push_back(std::move(entry));
        }
    }
    return entries;
}

class BodyWalker {
public:
    BodyWalker(StructuredDocument& doc, std::vector<ParseWarning>& warnings)
        : doc_(doc), warnings_(warnings) {}

    std::size_t handled() const { return handled_; }
    std::size_t skipped() const { return skipped_; }

    void walk_body(const xml::Element& body) {
        ++handled_;  // <body> itself
        for (const auto* child : body.child_elements()) {
            dispatch_block(*child, 0);
        }
    }

private:
    void skip(const xml::Element& element, const std::string& reason) {
        std::size_t count = xml::count_elements(element);
        warnings_.push_back({std::string(element.local_name()), element.line, count, reason});
        skipped_ += count;
    }

    void dispatch_block(const xml::Element& element, int level) {
        std::string_view name = element.local_name();
        if (name == "div") {
            walk_div(element, level);
        } else if (name == "figure") {
            const std::string* type = element.attr("type");
            if (type != nullptr && *type == "table") {
                walk_table(element);
            } else {
                walk_figure(element);
            }
        } else if (name == "formula") {
            walk_formula(element);
        } else if (name == "p") {
            // Paragraph outside any div: keep it in an implicit section.
            if (doc_.sections.empty() || !implicit_section_open_) {
                doc_.sections.push_back(Section{0, "", {}});
                implicit_section_open_ = true;
            }
            doc_.sections.back().paragraphs.push_back(walk_paragraph(element));
        } else {
            skip(element, "unsupported element");
        }
    }

    void walk_div(const xml::Element& div, int level) {
        ++handled_;
        implicit_section_open_ = false;
        doc_.sections.push_back(Section{level, "", {}});
        std::size_t section_index = doc_.sections.size() - 1;
        for (const auto* child : div.child_elements()) {
            std::string_view name = child->local_name();
            if (name == "head") {
                handled_ += xml::count_elements(*child);
                doc_.sections[section_index].heading = normalize_ws(child->text());
            } else if (name == "p") {
                doc_.sections[section_index].paragraphs.push_back(walk_paragraph(*child));
            } else if (name == "div") {
                walk_div(*child, level + 1);
            } else if (name == "figure" || name == "formula") {
                dispatch_block(*child, level);
            } else {
                skip(*child, "unsupported element in div");
            }
        }
    }

    Paragraph walk_paragraph(const xml::Element& p) {
        ++handled_;
        Paragraph paragraph;
        bool pending_space = false;
        append_inline(p, paragraph, pending_space, true);
        return paragraph;
    }

    // Appends mixed content, collapsing whitespace as it goes so anchor byte
    // offsets stay valid in the final text.
    void append_inline(const xml::Element& element, Paragraph& paragraph, bool& pending_space,
                       bool is_paragraph_root) {
        for (const auto& child : element.children) {
            if (const auto* text = std::get_if<std::string>(&child)) {
                append_text(*text, paragraph, pending_space);
                continue;
            }
            const auto& e = std::get<xml::Element>(child);
            std::string_view name = e.local_name();
            if (name == "ref") {
                const std::string* type = e.attr("type");
                if (type != nullptr && *type == "bibr") {
                    append_anchor(e, paragraph, pending_space);
                } else {
                    // Figure/table/formula references stay as plain text so
                    // downstream sentence matching can see them.
                    handled_ += 1;
                    bool inner_root = false;
                    append_inline(e, paragraph, pending_space, inner_root);
                }
            } else if (!is_paragraph_root && name != "") {
                // Nested unexpected markup inside a transparent ref: keep text.
                handled_ += 1;
                append_inline(e, paragraph, pending_space, false);
            } else {
                skip(e, "unsupported inline element");
            }
        }
    }

    void append_text(const std::string& text, Paragraph& paragraph, bool& pending_space) {
        for (unsigned char c : text) {
            if (std::isspace(c)) {
                pending_space = true;
                continue;
            }
            if (pending_space && !paragraph.text.empty()) {
                paragraph.text.push_back(' ');
            }
            pending_space = false;
            paragraph.text.push_back(static_cast<char>(c));
        }
    }

    void append_anchor(const xml::Element& ref, Paragraph& paragraph, bool& pending_space) {
        handled_ += xml::count_elements(ref);
        std::string surface = normalize_ws(ref.text());
        if (pending_space && !paragraph.text.empty()) {
            paragraph.text.push_back(' ');
        }
        pending_space = false;

        CitationAnchor anchor;
        anchor.surface = surface;
        anchor.start = paragraph.text.size();
        paragraph.text += surface;
        anchor.end = paragraph.text.size();

        const std::string* target = ref.attr("target");
        if (target != nullptr && !target->empty()) {
            std::string key = (*target)[0] == '#' ? target->substr(1) : *target;
            if (doc_.find_bib(key) != nullptr) {
                anchor.bib_key = key;
            } else {
                warnings_.push_back({"ref", ref.line, 0,
                                     "citation target '" + key + "' not in bibliography"});
            }
        }
        paragraph.anchors.push_back(std::move(anchor));
    }

    void walk_figure(const xml::Element& figure) {
        ++handled_;
        Figure fig;
        fig.index = doc_.figures.size() + 1;
        for (const auto* child : figure.child_elements()) {
            std::string_view name = child->local_name();
            if (name == "figDesc") {
                handled_ += xml::count_elements(*child);
                if (!fig.caption.empty()) {
                    fig.caption += ' ';
                }
                fig.caption += normalize_ws(child->text());
            } else if (name == "graphic") {
                handled_ += xml::count_elements(*child);
                const std::string* url = child->attr("url");
                if (url != nullptr) {
                    fig.image_ref = *url;
                }
            } else if (name == "head" || name == "label") {
                handled_ += xml::count_elements(*child);
            } else {
                skip(*child, "unsupported element in figure");
            }
        }
        fig.caption = normalize_ws(fig.caption);
        if (fig.caption.empty()) {
            fig.caption_missing = true;
            warnings_.push_back({"figure", figure.line, 0,
                                 "figure " + std::to_string(fig.index) + " has no caption"});
        }
        doc_.figures.push_back(std::move(fig));
    }

    void walk_table(const xml::Element& figure) {
        ++handled_;
        Table table;
        table.index = doc_.tables.size() + 1;
        for (const auto* child : figure.child_elements()) {
            std::string_view name = child->local_name();
            if (name == "figDesc") {
                handled_ += xml::count_elements(*child);
                if (!table.caption.empty()) {
                    table.caption += ' ';
                }
                table.caption += normalize_ws(child->text());
            } else if (name == "table") {
                walk_grid(*child, table);
            } else if (name == "head" || name == "label" || name == "graphic") {
                handled_ += xml::count_elements(*child);
            } else {
                skip(*child, "unsupported element in table");
            }
        }
        table.caption = normalize_ws(table.caption);
        if (table.caption.empty()) {
            table.caption_missing = true;
        }
        if (table.grid.empty()) {
            table.empty = true;
            warnings_.push_back({"figure", figure.line, 0,
                                 "table " + std::to_string(table.index) + " has no cells"});
        }
        doc_.tables.push_back(std::move(table));
    }

    void walk_grid(const xml::Element& grid, Table& table) {
        ++handled_;
        std::size_t max_cols = 0;
        for (const auto* row : grid.child_elements()) {
            if (row->local_name() != "row") {
                skip(*row, "unsupported element in table grid");
                continue;
            }
            ++handled_;
            std::vector<std::string> cells;
            for (const auto* cell : row->child_elements()) {
                if (cell->local_name() != "cell") {
                    skip(*cell, "unsupported element in table row");
                    continue;
                }
                handled_ += xml::count_elements(*cell);
                cells.push_back(normalize_ws(cell->text()));
            }
            max_cols = std::max(max_cols, cells.size());
            table.grid.push_back(std::move(cells));
        }
        // Ragged extraction happens with merged PDF cells; pad so the
        // rectangularity invariant holds.
        bool padded = false;
        for (auto& row : table.grid) {
            while (row.size() < max_cols) {
                row.emplace_back();
                padded = true;
            }
        }
        if (padded) {
            warnings_.push_back({"table", grid.line, 0,
                                 "table " + std::to_string(table.index) +
                                     " had ragged rows; padded with empty cells"});
        }
    }

    void walk_formula(const xml::Element& formula) {
        handled_ += xml::count_elements(formula);
        Formula f;
        f.index = doc_.formulas.size() + 1;
        // Equation labels like "(1)" are layout, not math.
        std::string text;
        for (const auto& child : formula.children) {
            if (const auto* s = std::get_if<std::string>(&child)) {
                text += *s;
            } else {
                const auto& e = std::get<xml::Element>(child);
                if (e.local_name() != "label") {
                    text += e.text();
                }
            }
        }
        f.source_text = balance_braces(normalize_ws(text));
        doc_.formulas.push_back(std::move(f));
    }

    StructuredDocument& doc_;
    std::vector<ParseWarning>& warnings_;
    std::size_t handled_ = 0;
    std::size_t skipped_ = 0;
    bool implicit_section_open_ = false;
};

}  // namespace

ParseResult parse_structured_xml(std::string_view xml_text, std::string_view doc_id) {
    xml::Element root = xml::parse(xml_text);

    ParseResult result;
    result.document.doc_id = std::string(doc_id);
    result.document.title = extract_title(root);

    const xml::Element* body = find_descendant(root, "body");
    if (body == nullptr) {
        throw DocumentError("structural error: no <body> element in document");
    }

    // Bibliography first so in-text anchors can resolve during the body walk.
    result.document.bibliography = extract_bibliography(root, result.warnings);

    BodyWalker walker(result.document, result.warnings);
    walker.walk_body(*body);
    result.handled_elements = walker.handled();
    result.skipped_elements = walker.skipped();
    return result;
}

namespace {

void check_anchor(const StructuredDocument& doc, const Paragraph& paragraph,
                  const std::string& where, std::vector<Violation>& out) {
    std::vector<std::pair<std::size_t, std::size_t>> spans;
    for (std::size_t a = 0; a < paragraph.anchors.size(); ++a) {
        const auto& anchor = paragraph.anchors[a];
        std::string element = where + " anchor " + std::to_string(a);
        if (anchor.bib_key && doc.find_bib(*anchor.bib_key) == nullptr) {
            out.push_back({"anchor-bib-key-exists", element,
                           "bib_key '" + *anchor.bib_key + "' not in bibliography"});
        }
        if (anchor.start > anchor.end || anchor.end > paragraph.text.size()) {
            out.push_back({"anchor-offsets-in-bounds", element,
                           "offsets [" + std::to_string(anchor.start) + "," +
                               std::to_string(anchor.end) + ") outside text of size " +
                               std::to_string(paragraph.text.size())});
        } else {
            spans.emplace_back(anchor.start, anchor.end);
        }
    }
    std::sort(spans.begin(), spans.end());
    for (std::size_t i = 1; i < spans.size(); ++i) {
        if (spans[i].first < spans[i - 1].second) {
            out.push_back({"anchor-offsets-non-overlapping", where, "overlapping anchor spans"});
            break;
        }
    }
}

}  // namespace

std::vector<Violation> validate_document(const StructuredDocument& doc) {
    std::vector<Violation> out;

    for (std::size_t i = 0; i < doc.sections.size(); ++i) {
        int level = doc.sections[i].level;
        if (level < 0) {
            out.push_back({"section-level-non-negative", "section " + std::to_string(i), ""});
        }
        int prev = i == 0 ? -1 : doc.sections[i - 1].level;
        if (level > prev + 1) {
            out.push_back({"section-level-nesting", "section " + std::to_string(i),
                           "level " + std::to_string(level) + " after level " +
                               std::to_string(prev)});
        }
        for (std::size_t p = 0; p < doc.sections[i].paragraphs.size(); ++p) {
            check_anchor(doc, doc.sections[i].paragraphs[p],
                         "section " + std::to_string(i) + " paragraph " + std::to_string(p), out);
        }
    }

    for (std::size_t i = 0; i < doc.figures.size(); ++i) {
        const auto& fig = doc.figures[i];
        if (fig.index != i + 1) {
            out.push_back({"figure-indices-contiguous", "figure " + std::to_string(i),
                           "index " + std::to_string(fig.index) + " at position " +
                               std::to_string(i + 1)});
        }
        if (normalize_ws(fig.caption).empty() && !fig.caption_missing) {
            out.push_back({"figure-caption-present-or-flagged",
                           "figure " + std::to_string(fig.index), ""});
        }
    }

    for (std::size_t i = 0; i < doc.tables.size(); ++i) {
        const auto& table = doc.tables[i];
        std::string element = "table " + std::to_string(table.index);
        if (table.index != i + 1) {
            out.push_back({"table-indices-contiguous", element,
                           "index " + std::to_string(table.index) + " at position " +
                               std::to_string(i + 1)});
        }
        bool has_cells = !table.grid.empty() && !table.grid.front().empty();
        if (!has_cells && !table.empty) {
            out.push_back({"table-nonempty-or-flagged", element, ""});
        }
        for (const auto& row : table.grid) {
            if (row.size() != table.grid.front().size()) {
                out.push_back({"table-grid-rectangular", element, "ragged rows"});
                break;
            }
        }
    }

    for (const auto& formula : doc.formulas) {
        std::string balanced = balance_braces(formula.source_text);
        if (balanced != formula.source_text) {
            out.push_back({"formula-braces-balanced",
                           "formula " + std::to_string(formula.index), ""});
        }
    }

    for (std::size_t i = 0; i < doc.bibliography.size(); ++i) {
        for (std::size_t j = i + 1; j < doc.bibliography.size(); ++j) {
            if (doc.bibliography[i].key == doc.bibliography[j].key) {
                out.push_back({"bib-key-unique", "bib entry " + doc.bibliography[i].key, ""});
            }
        }
    }

    return out;
}

DocStats document_stats(const StructuredDocument& doc) {
    DocStats stats;
    stats.sections = doc.sections.size();
    stats.figures = doc.figures.size();
    stats.tables = doc.tables.size();
    stats.formulas = doc.formulas.size();
    for (const auto& section : doc.sections) {
        stats.paragraphs += section.paragraphs.size();
        for (const auto& paragraph : section.paragraphs) {
            for (const auto& anchor : paragraph.anchors) {
                if (anchor.bib_key) {
                    ++stats.anchors_resolved;
                } else {
                    ++stats.anchors_unresolved;
                }
            }
        }
    }
    return stats;
}

nlohmann::json stats_to_json(const DocStats& stats) {
    return nlohmann::json{{"sections", stats.sections},
                          {"paragraphs", stats.paragraphs},
                          {"figures", stats.figures},
                          {"tables", stats.tables},
                          {"formulas", stats.formulas},
                          {"anchors_resolved", stats.anchors_resolved},
                          {"anchors_unresolved", stats.anchors_unresolved}};
}

nlohmann::json violations_to_json(const std::vector<Violation>& violations) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& v : violations) {
        out.push_back({{"invariant", v.invariant}, {"element", v.element}, {"detail", v.detail}});
    }
    return out;
}

}  // namespace geoforge::doc
