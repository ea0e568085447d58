#include "doctest.h"

#include <nlohmann/json.hpp>
#include <regex>

#include "geoforge/caption_linker.hpp"
#include "geoforge/doc_model.hpp"
#include "geoforge/md_emitter.hpp"
#include "geoforge/util.hpp"
#include "test_paths.hpp"

using namespace geoforge;

TEST_CASE("split_sentences: abbreviation and digit rules") {
    auto s = link::split_sentences("We see Fig. 3 here. Next sentence.");
    REQUIRE(s.size() == 2);
    CHECK(s[0].text == "We see Fig. 3 here.");
    CHECK(s[0].text.find("Fig. 3") != std::string::npos);
    CHECK(s[1].text == "Next sentence.");

    CHECK(link::split_sentences("").empty());

    s = link::split_sentences("pH 7.4 was used. Done.");
    REQUIRE(s.size() == 2);
    CHECK(s[0].text == "pH 7.4 was used.");
}

TEST_CASE("split_sentences reproduces the hand-segmented fixture") {
    auto cases = nlohmann::json::parse(util::read_file(fixture("sentences.json")));
    std::size_t total = 0;
    for (const auto& item : cases) {
        std::string text = item["text"].get<std::string>();
        auto expected = item["sentences"].get<std::vector<std::string>>();
        auto got = link::split_sentences(text);
        std::vector<std::string> got_text;
        for (const auto& sentence : got) {
            got_text.push_back(sentence.text);
        }
        CAPTURE(text);
        REQUIRE(got_text == expected);
        total += expected.size();
    }
    CHECK(total >= 50);
}

TEST_CASE("sentence offsets reconstruct the source") {
    util::SplitMix64 rng(5);
    const std::vector<std::string> chunks = {"One two",  "pH 7.4",   "Fig. 3",  "end",
                                             "et al.",   "No. 9",    "x y z",   "42"};
    for (int trial = 0; trial < 100; ++trial) {
        std::string text;
        std::size_t parts = 1 + rng.bounded(8);
        for (std::size_t i = 0; i < parts; ++i) {
            text += chunks[rng.bounded(chunks.size())];
            switch (rng.bounded(4)) {
                case 0: text += ". "; break;
                case 1: text += "? "; break;
                case 2: text += "! "; break;
                default: text += " "; break;
            }
        }
        auto sentences = link::split_sentences(text);
        std::size_t cursor = 0;
        std::string rebuilt;
        for (const auto& s : sentences) {
            REQUIRE(s.start >= cursor);
            // gaps between sentences are whitespace only
            for (std::size_t i = cursor; i < s.start; ++i) {
                REQUIRE(std::isspace(static_cast<unsigned char>(text[i])));
            }
            REQUIRE(text.substr(s.start, s.end - s.start) == s.text);
            rebuilt += text.substr(cursor, s.start - cursor);
            rebuilt += s.text;
            cursor = s.end;
        }
        rebuilt += text.substr(cursor);
        REQUIRE(rebuilt == text);
    }
}

namespace {

std::vector<link::RefMatch> run_find(const std::string& text, doc::ObjectKind kind,
                                     std::size_t index, std::size_t total) {
    auto sentences = link::split_sentences(text);
    return link::find_referring_sentences(sentences, text, kind, index, total);
}

}  // namespace

TEST_CASE("Fig1 does not match inside Fig11") {
    std::string text = "Results in Fig1. Fig11 shows noise.";
    auto matches = run_find(text, doc::ObjectKind::Figure, 1, 12);
    REQUIRE(matches.size() == 1);
    CHECK(matches[0].classification == link::RefClass::Internal);
    CHECK(matches[0].sentence.text == "Results in Fig1.");

    auto eleven = run_find(text, doc::ObjectKind::Figure, 11, 12);
    REQUIRE(eleven.size() == 1);
    CHECK(eleven[0].sentence.text == "Fig11 shows noise.");
}

TEST_CASE("'of' close after the keyword marks an external reference") {
    auto matches = run_find("see Fig 3 of Smith et al.", doc::ObjectKind::Figure, 3, 5);
    REQUIRE(matches.size() == 1);
    CHECK(matches[0].classification == link::RefClass::External);

    // beyond the 3-token window "of" no longer triggers
    auto far = run_find("see Fig 3 in the area of Smith.", doc::ObjectKind::Figure, 3, 5);
    REQUIRE(far.size() == 1);
    CHECK(far[0].classification == link::RefClass::Internal);
}

TEST_CASE("index above the document total marks an external reference") {
    auto matches = run_find("shown in Fig 7.", doc::ObjectKind::Figure, 7, 4);
    REQUIRE(matches.size() == 1);
    CHECK(matches[0].classification == link::RefClass::External);
}

TEST_CASE("keyword at sentence end pulls in the following sentence") {
    std::string text = "Sites are given in the following table. 3 lists all sites. Unrelated.";
    auto sentences = link::split_sentences(text);
    auto matches = link::find_referring_sentences(sentences, text, doc::ObjectKind::Table, 3, 4);
    REQUIRE(matches.size() == 1);
    REQUIRE(matches[0].continuation.has_value());
    CHECK(matches[0].referring_text() ==
          "Sites are given in the following table. 3 lists all sites.");
}

TEST_CASE("case variants match; embedded words do not") {
    for (const char* text : {"See fig 2 now and here.", "See Fig 2 now and here.",
                             "See FIG 2 now and here."}) {
        auto matches = run_find(text, doc::ObjectKind::Figure, 2, 3);
        REQUIRE(matches.size() == 1);
    }
    // "config 2" must not match "fig"
    CHECK(run_find("Adjust config 2 now.", doc::ObjectKind::Figure, 2, 3).empty());
    // "Figure" only matches behind the extended flag
    std::string text = "Figure 2 shows the fault.";
    CHECK(run_find(text, doc::ObjectKind::Figure, 2, 3).empty());
    link::LinkOptions extended;
    extended.extended_keywords = true;
    auto sentences = link::split_sentences(text);
    CHECK(link::find_referring_sentences(sentences, text, doc::ObjectKind::Figure, 2, 3, extended)
              .size() == 1);
}

TEST_CASE("digit-run property: matched numbers are never digit-extended") {
    util::SplitMix64 rng(17);
    for (int trial = 0; trial < 200; ++trial) {
        std::string text;
        std::size_t mentions = 1 + rng.bounded(6);
        for (std::size_t i = 0; i < mentions; ++i) {
            text += "Fig";
            if (rng.bounded(2) == 0) {
                text += ". ";
            }
            text += std::to_string(1 + rng.bounded(30));
            text += " shows data. ";
        }
        auto sentences = link::split_sentences(text);
        for (std::size_t index = 1; index <= 3; ++index) {
            auto matches = link::find_referring_sentences(sentences, text,
                                                          doc::ObjectKind::Figure, index, 30);
            for (const auto& match : matches) {
                CHECK(match.index == index);
            }
        }
        // reconciliation against a naive regex oracle over the raw text
        std::regex oracle("(fig|Fig|FIG)[^A-Za-z0-9]*([0-9]+)");
        std::map<std::size_t, std::size_t> oracle_counts;
        for (std::sregex_iterator it(text.begin(), text.end(), oracle), end; it != end; ++it) {
            oracle_counts[static_cast<std::size_t>(std::stoul((*it)[2].str()))] += 1;
        }
        auto all = link::scan_references(sentences, text, doc::ObjectKind::Figure, 30);
        std::map<std::size_t, std::size_t> got_counts;
        for (const auto& match : all) {
            got_counts[match.index] += 1;
        }
        REQUIRE(got_counts == oracle_counts);
    }
}

TEST_CASE("link_captions emits referring-sentence and content pairs") {
    doc::StructuredDocument d;
    d.doc_id = "t";
    doc::Paragraph p;
    p.text = "Table 1 lists sites.";
    d.sections.push_back({0, "S", {p}});
    d.tables.push_back({1, "Data summary", {{"Site", "Depth"}, {"A", "2"}}, false, false});

    auto pairs = link::link_captions(d, 20);
    REQUIRE(pairs.size() == 2);
    CHECK(pairs[0].pair_kind == link::PairKind::CaptionReferringSentence);
    CHECK(pairs[0].caption == "Data summary");
    CHECK(pairs[0].counterpart == "Table 1 lists sites.");
    CHECK(pairs[1].pair_kind == link::PairKind::CaptionContent);
    CHECK(pairs[1].counterpart == md::table_to_markdown(d.tables[0]));
}

TEST_CASE("figure image metadata yields a caption-content pair when long enough") {
    doc::StructuredDocument d;
    d.doc_id = "t";
    d.sections.push_back({0, "S", {{"No mentions at all here.", {}, {}}}});
    d.figures.push_back({1, "Station layout map",
                         std::string("images/station_layout_over_basement.png"), false});
    auto pairs = link::link_captions(d, 20);
    REQUIRE(pairs.size() == 1);
    CHECK(pairs[0].pair_kind == link::PairKind::CaptionContent);
    CHECK(pairs[0].counterpart == "images/station_layout_over_basement.png");
}

TEST_CASE("external-only mentions produce no referring pair") {
    doc::StructuredDocument d;
    d.doc_id = "t";
    doc::Paragraph p;
    p.text = "Compare with Fig 2 of Jones for the full interpretation there.";
    d.sections.push_back({0, "S", {p}});
    d.figures.push_back({1, "Local map", std::nullopt, false});
    d.figures.push_back({2, "Other caption", std::nullopt, false});
    auto pairs = link::link_captions(d, 20);
    CHECK(pairs.empty());

    auto detailed = link::link_captions_detailed(d);
    REQUIRE(detailed.figure_matches.size() == 1);
    CHECK(detailed.figure_matches[0].classification == link::RefClass::External);
}

TEST_CASE("short counterparts are discarded, not emitted empty") {
    doc::StructuredDocument d;
    d.doc_id = "t";
    doc::Paragraph p;
    p.text = "See Fig 1 now.";
    d.sections.push_back({0, "S", {p}});
    d.figures.push_back({1, "A caption long enough", std::nullopt, false});
    auto pairs = link::link_captions(d, 20);
    CHECK(pairs.empty());  // "See Fig 1 now." is under the 20-char floor

    auto detailed = link::link_captions_detailed(d);
    REQUIRE(detailed.figure_matches.size() == 1);
    CHECK(detailed.figure_matches[0].classification == link::RefClass::AmbiguousDiscarded);

    for (const auto& pair : link::link_captions(d, 5)) {
        CHECK(pair.counterpart.size() >= 5);
    }
}

TEST_CASE("document with no figures or tables yields no pairs") {
    doc::StructuredDocument d;
    d.sections.push_back({0, "S", {{"Plain text only here.", {}, {}}}});
    CHECK(link::link_captions(d, 20).empty());
}

TEST_CASE("counterpart quality gate rejects garbled text") {
    CHECK(link::counterpart_acceptable("a perfectly fine sentence", 10));
    CHECK(!link::counterpart_acceptable("short", 10));
    CHECK(!link::counterpart_acceptable("bad \x01 control characters here", 10));
    CHECK(!link::counterpart_acceptable("broken utf8 \xC3 alone in the text", 10));
    std::string replacement = "text with the \xEF\xBF\xBD replacement char";
    CHECK(!link::counterpart_acceptable(replacement, 10));
}

TEST_CASE("determinism and reconciliation on the golden fixture") {
    auto parsed = doc::parse_structured_xml(util::read_file(fixture("tei/golden_01.xml")), "g");
    auto a = link::link_captions_detailed(parsed.document);
    auto b = link::link_captions_detailed(parsed.document);
    REQUIRE(a.pairs.size() == b.pairs.size());
    for (std::size_t i = 0; i < a.pairs.size(); ++i) {
        CHECK(link::pair_to_json(a.pairs[i]) == link::pair_to_json(b.pairs[i]));
    }

    // golden doc: fig1 referring pair, table referring pair, table content pair
    REQUIRE(a.pairs.size() == 3);
    CHECK(a.pairs[0].kind == doc::ObjectKind::Figure);
    CHECK(a.pairs[0].counterpart == "Fig. 1 shows the study region.");
    CHECK(a.pairs[1].kind == doc::ObjectKind::Table);
    CHECK(a.pairs[1].counterpart == "Sampling sites are listed in Table 1.");
    CHECK(a.pairs[2].pair_kind == link::PairKind::CaptionContent);

    // every keyword-number hit is accounted for
    std::string text = link::document_text(parsed.document);
    std::regex fig_oracle("(fig|Fig|FIG)[^A-Za-z0-9]*([0-9]+)");
    std::size_t oracle_hits = 0;
    for (std::sregex_iterator it(text.begin(), text.end(), fig_oracle), end; it != end; ++it) {
        ++oracle_hits;
    }
    CHECK(a.figure_matches.size() == oracle_hits);
}
