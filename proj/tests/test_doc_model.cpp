#include "doctest.h"

#include <nlohmann/json.hpp>

#include "geoforge/doc_model.hpp"
#include "geoforge/util.hpp"
#include "geoforge/xml.hpp"
#include "test_paths.hpp"

using namespace geoforge;

namespace {

doc::ParseResult parse_fixture(const std::string& name) {
    return doc::parse_structured_xml(util::read_file(fixture("tei/" + name)), name);
}

}  // namespace

TEST_CASE("minimal TEI: one section, heading Intro, one paragraph") {
    auto result = parse_fixture("minimal.xml");
    const auto& d = result.document;
    REQUIRE(d.sections.size() == 1);
    CHECK(d.sections[0].heading == "Intro");
    CHECK(d.sections[0].level == 0);
    REQUIRE(d.sections[0].paragraphs.size() == 1);
    CHECK(d.sections[0].paragraphs[0].text == "Text.");
    CHECK(doc::validate_document(d).empty());
}

TEST_CASE("golden fixture: anchors resolve against the bibliography") {
    auto result = parse_fixture("golden_01.xml");
    const auto& d = result.document;
    CHECK(d.title == "Seismic Mapping of the Atlas Basin");

    REQUIRE(d.sections.size() == 2);
    CHECK(d.sections[0].level == 0);
    CHECK(d.sections[1].level == 1);
    CHECK(d.sections[1].heading == "Data");

    const auto& p0 = d.sections[0].paragraphs[0];
    REQUIRE(p0.anchors.size() == 2);
    CHECK(p0.anchors[0].surface == "[1]");
    REQUIRE(p0.anchors[0].bib_key.has_value());
    const doc::BibEntry* entry = d.find_bib(*p0.anchors[0].bib_key);
    REQUIRE(entry != nullptr);
    CHECK(entry->title == "Deep learning for earthquake detection.");
    // anchor offsets address the surface inside the paragraph text
    CHECK(p0.text.substr(p0.anchors[0].start, p0.anchors[0].end - p0.anchors[0].start) == "[1]");

    // dangling target stays as an unresolved anchor
    const auto& p1 = d.sections[0].paragraphs[1];
    REQUIRE(p1.anchors.size() == 1);
    CHECK(!p1.anchors[0].bib_key.has_value());
    CHECK(p1.anchors[0].surface == "[7]");

    CHECK(doc::validate_document(d).empty());
}

TEST_CASE("golden fixture: figure captions and table grid") {
    auto result = parse_fixture("golden_01.xml");
    const auto& d = result.document;
    REQUIRE(d.figures.size() == 2);
    CHECK(d.figures[0].index == 1);
    CHECK(d.figures[0].caption == "Map of study area");
    REQUIRE(d.figures[0].image_ref.has_value());
    CHECK(*d.figures[0].image_ref == "images/fig1.png");

    REQUIRE(d.tables.size() == 1);
    CHECK(d.tables[0].caption == "Sampling sites and depths");
    REQUIRE(d.tables[0].grid.size() == 3);
    CHECK(d.tables[0].grid[0] == std::vector<std::string>{"Site", "Depth"});
    CHECK(d.tables[0].grid[2] == std::vector<std::string>{"B-2", "85"});

    REQUIRE(d.formulas.size() == 1);
    CHECK(d.formulas[0].source_text == "v = d / t");
}

TEST_CASE("document_stats matches the hand tally for the golden fixture") {
    auto expected = nlohmann::json::parse(util::read_file(fixture("expected/golden_01.counts.json")));
    auto stats = doc::document_stats(parse_fixture("golden_01.xml").document);
    CHECK(stats.sections == expected["sections"].get<std::size_t>());
    CHECK(stats.paragraphs == expected["paragraphs"].get<std::size_t>());
    CHECK(stats.figures == expected["figures"].get<std::size_t>());
    CHECK(stats.tables == expected["tables"].get<std::size_t>());
    CHECK(stats.formulas == expected["formulas"].get<std::size_t>());
    CHECK(stats.anchors_resolved == expected["anchors_resolved"].get<std::size_t>());
    CHECK(stats.anchors_unresolved == expected["anchors_unresolved"].get<std::size_t>());
}

TEST_CASE("document_stats on the minimal document") {
    auto stats = doc::document_stats(parse_fixture("minimal.xml").document);
    CHECK(stats.sections == 1);
    CHECK(stats.paragraphs == 1);
    CHECK(stats.figures == 0);
    CHECK(stats.anchors_resolved == 0);
}

TEST_CASE("document_stats on an empty document is all zeros") {
    doc::StructuredDocument d;
    auto stats = doc::document_stats(d);
    CHECK(stats.sections == 0);
    CHECK(stats.paragraphs == 0);
    CHECK(stats.figures == 0);
    CHECK(stats.tables == 0);
    CHECK(stats.formulas == 0);
    CHECK(stats.anchors_resolved == 0);
    CHECK(stats.anchors_unresolved == 0);
}

TEST_CASE("unknown elements are skipped with warnings, never silently") {
    const char* tei =
        "<TEI><teiHeader/><text><body>"
        "<div><head>H</head><p>Body text.</p><note>side <hi>x</hi> note</note></div>"
        "<weird><inner/></weird>"
        "</body></text></TEI>";
    auto result = doc::parse_structured_xml(tei);
    CHECK(result.warnings.size() == 2);
    CHECK(result.skipped_elements == 4);  // note+hi, weird+inner

    // reconciliation: handled + skipped covers every element under <body>
    auto root = xml::parse(tei);
    const xml::Element* body = root.first_child("text")->first_child("body");
    REQUIRE(body != nullptr);
    CHECK(result.handled_elements + result.skipped_elements == xml::count_elements(*body));
}

TEST_CASE("reconciliation holds on the fixture corpus") {
    for (const char* name : {"minimal.xml", "golden_01.xml"}) {
        std::string text = util::read_file(fixture(std::string("tei/") + name));
        auto result = doc::parse_structured_xml(text, name);
        auto root = xml::parse(text);
        const xml::Element* body = root.first_child("text")->first_child("body");
        REQUIRE(body != nullptr);
        std::size_t skipped_from_warnings = 0;
        for (const auto& w : result.warnings) {
            skipped_from_warnings += w.element_count;
        }
        CHECK(result.handled_elements + result.skipped_elements == xml::count_elements(*body));
        CHECK(result.skipped_elements == skipped_from_warnings);
    }
}

TEST_CASE("missing body is a structural error; bad XML carries position") {
    CHECK_THROWS_AS(doc::parse_structured_xml("<TEI><text/></TEI>"), doc::DocumentError);
    CHECK_THROWS_AS(doc::parse_structured_xml("<TEI><text><body><div></body></text></TEI>"),
                    xml::ParseError);
}

TEST_CASE("validate flags dangling anchor keys") {
    doc::StructuredDocument d;
    doc::Paragraph p;
    p.text = "See [9].";
    p.anchors.push_back({"[9]", "b9", 4, 7});
    d.sections.push_back({0, "S", {p}});
    auto violations = doc::validate_document(d);
    REQUIRE(violations.size() == 1);
    CHECK(violations[0].invariant == "anchor-bib-key-exists");
    CHECK(violations[0].element.find("anchor 0") != std::string::npos);
}

TEST_CASE("validate flags ragged table grids by index") {
    doc::StructuredDocument d;
    doc::Table t;
    t.index = 1;
    t.caption = "C";
    t.grid = {{"a", "b"}, {"c"}};
    d.tables.push_back(t);
    auto violations = doc::validate_document(d);
    REQUIRE(violations.size() == 1);
    CHECK(violations[0].invariant == "table-grid-rectangular");
    CHECK(violations[0].element == "table 1");
}

TEST_CASE("validate flags non-contiguous object indices and level jumps") {
    doc::StructuredDocument d;
    d.figures.push_back({2, "cap", std::nullopt, false});
    d.sections.push_back({1, "deep first", {}});
    auto violations = doc::validate_document(d);
    bool saw_figure = false;
    bool saw_level = false;
    for (const auto& v : violations) {
        saw_figure |= v.invariant == "figure-indices-contiguous";
        saw_level |= v.invariant == "section-level-nesting";
    }
    CHECK(saw_figure);
    CHECK(saw_level);
}

TEST_CASE("parse pads ragged rows so output always satisfies invariants") {
    const char* tei =
        "<TEI><text><body>"
        "<figure type=\"table\"><figDesc>T</figDesc>"
        "<table><row><cell>a</cell><cell>b</cell></row><row><cell>c</cell></row></table>"
        "</figure></body></text></TEI>";
    auto result = doc::parse_structured_xml(tei);
    REQUIRE(result.document.tables.size() == 1);
    CHECK(result.document.tables[0].grid[1] == std::vector<std::string>{"c", ""});
    CHECK(doc::validate_document(result.document).empty());
    CHECK(!result.warnings.empty());
}

TEST_CASE("figure without caption is flagged, not dropped") {
    const char* tei = "<TEI><text><body><figure><graphic url=\"x.png\"/></figure></body></text></TEI>";
    auto result = doc::parse_structured_xml(tei);
    REQUIRE(result.document.figures.size() == 1);
    CHECK(result.document.figures[0].caption_missing);
    CHECK(doc::validate_document(result.document).empty());
}

TEST_CASE("multi-part captions join in document order") {
    const char* tei =
        "<TEI><text><body><figure>"
        "<figDesc>First part.</figDesc><figDesc>Second part.</figDesc>"
        "</figure></body></text></TEI>";
    auto result = doc::parse_structured_xml(tei);
    REQUIRE(result.document.figures.size() == 1);
    CHECK(result.document.figures[0].caption == "First part. Second part.");
}

TEST_CASE("balance_braces strips unmatched braces only") {
    CHECK(doc::balance_braces("{a}") == "{a}");
    CHECK(doc::balance_braces("{a") == "a");
    CHECK(doc::balance_braces("a}") == "a");
    CHECK(doc::balance_braces("{{x}_y}") == "{{x}_y}");
    CHECK(doc::balance_braces("}{") == "");
}

TEST_CASE("parse is deterministic") {
    std::string text = util::read_file(fixture("tei/golden_01.xml"));
    auto a = doc::parse_structured_xml(text, "g");
    auto b = doc::parse_structured_xml(text, "g");
    CHECK(doc::stats_to_json(doc::document_stats(a.document)) ==
          doc::stats_to_json(doc::document_stats(b.document)));
    CHECK(a.document.sections[0].paragraphs[0].text == b.document.sections[0].paragraphs[0].text);
    CHECK(a.warnings.size() == b.warnings.size());
}
