#include "geoforge/md_emitter.hpp"

#include <algorithm>
#include <array>

#include "geoforge/util.hpp"

namespace geoforge::md {

namespace {

constexpr std::array<SpanKind, 4> kAllKinds = {SpanKind::Figure, SpanKind::Table, SpanKind::Ref,
                                               SpanKind::Formula};

// U+200B ZERO WIDTH SPACE, inserted after '[' to break forged token literals.
constexpr std::string_view kZeroWidthBreak = "\xe2\x80\x8b";

}  // namespace

std::string_view start_token(SpanKind kind) {
    switch (kind) {
        case SpanKind::Figure: return "[START_FIGURE]";
        case SpanKind::Table: return "[START_TABLE]";
        case SpanKind::Ref: return "[START_REF]";
        case SpanKind::Formula: return "[START_FORMULA]";
    }
    return {};
}

std::string_view end_token(SpanKind kind) {
    switch (kind) {
        case SpanKind::Figure: return "[END_FIGURE]";
        case SpanKind::Table: return "[END_TABLE]";
        case SpanKind::Ref: return "[END_REF]";
        case SpanKind::Formula: return "[END_FORMULA]";
    }
    return {};
}

std::string_view span_kind_name(SpanKind kind) {
    switch (kind) {
        case SpanKind::Figure: return "FIGURE";
        case SpanKind::Table: return "TABLE";
        case SpanKind::Ref: return "REF";
        case SpanKind::Formula: return "FORMULA";
    }
    return {};
}

bool contains_special_token(std::string_view text) {
    for (SpanKind kind : kAllKinds) {
        if (text.find(start_token(kind)) != std::string_view::npos ||
            text.find(end_token(kind)) != std::string_view::npos) {
            return true;
        }
    }
    return false;
}

std::string escape_special_tokens(std::string_view text) {
    std::string out(text);
    for (SpanKind kind : kAllKinds) {
        for (std::string_view token : {start_token(kind), end_token(kind)}) {
            std::size_t pos = 0;
            while ((pos = out.find(token, pos)) != std::string::npos) {
                out.insert(pos + 1, kZeroWidthBreak);
                pos += 1 + kZeroWidthBreak.size();
            }
        }
    }
    return out;
}

std::string wrap_segment(SpanKind kind, std::string_view payload) {
    if (contains_special_token(payload)) {
        throw EmitError("payload contains a special-token literal");
    }
    std::string out;
    out.reserve(payload.size() + 32);
    out += start_token(kind);
    out += payload;
    out += end_token(kind);
    return out;
}

namespace {

std::string escape_cell(std::string_view cell) {
    std::string out;
    out.reserve(cell.size());
    for (char c : cell) {
        switch (c) {
            case '\\': out += "\\\\"; break;
            case '|': out += "\\|"; break;
            case '\n': out += "\\n"; break;
            case '\r': out += "\\r"; break;
            default: out.push_back(c);
        }
    }
    return out;
}

std::string render_row(const std::vector<std::string>& cells) {
    std::string out = "|";
    for (const auto& cell : cells) {
        out += ' ';
        out += escape_cell(cell);
        out += " |";
    }
    return out;
}

bool is_separator_cell(std::string_view cell) {
    std::size_t dashes = 0;
    for (char c : cell) {
        if (c == '-') {
            ++dashes;
        } else if (c != ' ' && c != ':') {
            return false;
        }
    }
    return dashes > 0;
}

}  // namespace

std::string table_to_markdown(const std::vector<std::vector<std::string>>& grid) {
    if (grid.empty() || grid.front().empty()) {
        throw EmitError("cannot render an empty table grid");
    }
    const std::size_t cols = grid.front().size();
    for (const auto& row : grid) {
        if (row.size() != cols) {
            throw EmitError("table grid is not rectangular");
        }
    }
    std::string out = render_row(grid.front());
    out += '\n';
    out += "|";
    for (std::size_t c = 0; c < cols; ++c) {
        out += " --- |";
    }
    for (std::size_t r = 1; r < grid.size(); ++r) {
        out += '\n';
        out += render_row(grid[r]);
    }
    return out;
}

std::string table_to_markdown(const doc::Table& table) {
    return table_to_markdown(table.grid);
}

std::vector<std::vector<std::string>> table_from_markdown(std::string_view markdown) {
    std::vector<std::vector<std::string>> rows;
    std::size_t line_start = 0;
    std::size_t line_index = 0;
    while (line_start <= markdown.size()) {
        std::size_t line_end = markdown.find('\n', line_start);
        if (line_end == std::string_view::npos) {
            line_end = markdown.size();
        }
        std::string_view line = markdown.substr(line_start, line_end - line_start);
        if (line.empty()) {
            if (line_end == markdown.size()) {
                break;
            }
            throw EmitError("blank line inside a Markdown table");
        }
        if (line.front() != '|' || line.back() != '|' || line.size() < 2) {
            throw EmitError("Markdown table line must start and end with '|'");
        }

        std::vector<std::string> cells;
        std::string cell;
        for (std::size_t i = 1; i < line.size(); ++i) {
            char c = line[i];
            if (c == '\\' && i + 1 < line.size()) {
                char esc = line[i + 1];
                ++i;
                switch (esc) {
                    case '\\': cell.push_back('\\'); break;
                    case '|': cell.push_back('|'); break;
                    case 'n': cell.push_back('\n'); break;
                    case 'r': cell.push_back('\r'); break;
                    default:
                        cell.push_back('\\');
                        cell.push_back(esc);
                }
            } else if (c == '|') {
                // Trim the single padding space the writer adds on each side.
                std::string_view v = cell;
                if (!v.empty() && v.front() == ' ') {
                    v.remove_prefix(1);
                }
                if (!v.empty() && v.back() == ' ') {
                    v.remove_suffix(1);
                }
                cells.emplace_back(v);
                cell.clear();
            } else {
                cell.push_back(c);
            }
        }
        if (!cell.empty()) {
            throw EmitError("Markdown table line has content after the final '|'");
        }

        if (line_index == 1) {
            bool separator = !cells.empty() &&
                             std::all_of(cells.begin(), cells.end(),
                                         [](const std::string& c) { return is_separator_cell(c); });
            if (!separator) {
                throw EmitError("missing '---' separator row");
            }
        } else {
            rows.push_back(std::move(cells));
        }
        ++line_index;
        if (line_end == markdown.size()) {
            break;
        }
        line_start = line_end + 1;
    }
    if (rows.empty()) {
        throw EmitError("Markdown table has no rows");
    }
    const std::size_t cols = rows.front().size();
    for (const auto& row : rows) {
        if (row.size() != cols) {
            throw EmitError("Markdown table rows have uneven cell counts");
        }
    }
    return rows;
}

CitationOutcome resolve_citation(const doc::CitationAnchor& anchor,
                                 const std::vector<doc::BibEntry>& bibliography) {
    if (anchor.bib_key) {
        for (const auto& entry : bibliography) {
            if (entry.key != *anchor.bib_key) {
                continue;
            }
            std::string title = util::normalize_ws(entry.title);
            while (!title.empty() && title.back() == '.') {
                title.pop_back();
            }
            title = util::normalize_ws(title);
            if (!title.empty()) {
                return {wrap_segment(SpanKind::Ref, escape_special_tokens(title)), false};
            }
            break;
        }
    }
    return {wrap_segment(SpanKind::Ref, escape_special_tokens(anchor.surface)), true};
}

namespace {

class Builder {
public:
    void begin_block() {
        if (!text_.empty()) {
            text_ += "\n\n";
        }
    }

    void append(std::string_view s) { text_ += s; }

    // Appends a complete wrapped segment and records its span.
    void append_span(SpanKind kind, std::string_view wrapped) {
        Span span;
        span.kind = kind;
        span.start = text_.size();
        text_ += wrapped;
        span.end = text_.size();
        spans_.push_back(span);
    }

    SpecialTokenText finish() {
        if (!text_.empty()) {
            text_ += '\n';
        }
        return {std::move(text_), std::move(spans_)};
    }

private:
    std::string text_;
    std::vector<Span> spans_;
};

}  // namespace

EmitResult emit_markdown(const doc::StructuredDocument& document) {
    Builder builder;
    EmitResult result;

    if (!document.title.empty()) {
        builder.begin_block();
        builder.append("# ");
        builder.append(escape_special_tokens(document.title));
    }

    for (const auto& section : document.sections) {
        if (!section.heading.empty()) {
            builder.begin_block();
            builder.append(std::string(static_cast<std::size_t>(section.level) + 1, '#'));
            builder.append(" ");
            builder.append(escape_special_tokens(section.heading));
        }
        for (const auto& paragraph : section.paragraphs) {
            builder.begin_block();
            std::vector<doc::CitationAnchor> anchors = paragraph.anchors;
            std::sort(anchors.begin(), anchors.end(),
                      [](const auto& a, const auto& b) { return a.start < b.start; });
            std::size_t cursor = 0;
            for (const auto& anchor : anchors) {
                builder.append(escape_special_tokens(
                    std::string_view(paragraph.text).substr(cursor, anchor.start - cursor)));
                CitationOutcome outcome = resolve_citation(anchor, document.bibliography);
                if (outcome.fallback) {
                    ++result.citation_fallbacks;
                }
                builder.append_span(SpanKind::Ref, outcome.text);
                cursor = anchor.end;
            }
            builder.append(
                escape_special_tokens(std::string_view(paragraph.text).substr(cursor)));
        }
    }

    for (const auto& figure : document.figures) {
        // Captions only: image bytes are never part of the corpus.
        builder.begin_block();
        builder.append_span(SpanKind::Figure,
                            wrap_segment(SpanKind::Figure, escape_special_tokens(figure.caption)));
    }

    for (const auto& table : document.tables) {
        builder.begin_block();
        std::string payload = escape_special_tokens(table.caption);
        if (!table.grid.empty() && !table.grid.front().empty()) {
            payload += "\n\n";
            payload += escape_special_tokens(table_to_markdown(table));
        }
        builder.append_span(SpanKind::Table, wrap_segment(SpanKind::Table, payload));
    }

    for (const auto& formula : document.formulas) {
        builder.begin_block();
        builder.append_span(
            SpanKind::Formula,
            wrap_segment(SpanKind::Formula, escape_special_tokens(formula.source_text)));
    }

    result.output = builder.finish();
    return result;
}

std::vector<std::string> validate_spans(const SpecialTokenText& stt) {
    std::vector<std::string> problems;

    for (std::size_t i = 0; i < stt.spans.size(); ++i) {
        const Span& span = stt.spans[i];
        std::string label = "span " + std::to_string(i);
        if (span.start > span.end || span.end > stt.text.size()) {
            problems.push_back(label + ": out of bounds");
            continue;
        }
        std::string_view body = std::string_view(stt.text).substr(span.start, span.end - span.start);
        if (!util::starts_with(body, start_token(span.kind))) {
            problems.push_back(label + ": does not begin with " +
                               std::string(start_token(span.kind)));
        }
        if (!util::ends_with(body, end_token(span.kind))) {
            problems.push_back(label + ": does not end with " + std::string(end_token(span.kind)));
        }
    }

    for (SpanKind kind : kAllKinds) {
        std::vector<std::pair<std::size_t, std::size_t>> ranges;
        for (const Span& span : stt.spans) {
            if (span.kind == kind) {
                ranges.emplace_back(span.start, span.end);
            }
        }
        std::sort(ranges.begin(), ranges.end());
        for (std::size_t i = 1; i < ranges.size(); ++i) {
            if (ranges[i].first < ranges[i - 1].second) {
                problems.push_back(std::string(span_kind_name(kind)) +
                                   " spans nest or overlap");
                break;
            }
        }

        std::size_t starts = 0;
        std::size_t ends = 0;
        for (std::size_t pos = stt.text.find(start_token(kind)); pos != std::string::npos;
             pos = stt.text.find(start_token(kind), pos + 1)) {
            ++starts;
        }
        for (std::size_t pos = stt.text.find(end_token(kind)); pos != std::string::npos;
             pos = stt.text.find(end_token(kind), pos + 1)) {
            ++ends;
        }
        if (starts != ends) {
            problems.push_back(std::string(span_kind_name(kind)) + ": " + std::to_string(starts) +
                               " start tokens vs " + std::to_string(ends) + " end tokens");
        }
        if (starts != ranges.size()) {
            problems.push_back(std::string(span_kind_name(kind)) +
                               ": token occurrences do not match recorded spans");
        }
    }

    return problems;
}

nlohmann::json spans_to_json(const SpecialTokenText& stt) {
    nlohmann::json spans = nlohmann::json::array();
    for (const Span& span : stt.spans) {
        spans.push_back({{"kind", std::string(span_kind_name(span.kind))},
                         {"start", span.start},
                         {"end", span.end}});
    }
    return nlohmann::json{{"spans", spans}};
}

std::vector<Span> spans_from_json(const nlohmann::json& j) {
    std::vector<Span> out;
    for (const auto& item : j.at("spans")) {
        Span span;
        std::string kind = item.at("kind").get<std::string>();
        if (kind == "FIGURE") {
            span.kind = SpanKind::Figure;
        } else if (kind == "TABLE") {
            span.kind = SpanKind::Table;
        } else if (kind == "REF") {
            span.kind = SpanKind::Ref;
        } else if (kind == "FORMULA") {
            span.kind = SpanKind::Formula;
        } else {
            throw EmitError("unknown span kind '" + kind + "'");
        }
        span.start = item.at("start").get<std::size_t>();
        span.end = item.at("end").get<std::size_t>();
        out.push_back(span);
    }
    return out;
}

}  // namespace geoforge::md
