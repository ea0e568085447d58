#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "geoforge/doc_model.hpp"

namespace geoforge::link {

struct Sentence {
    std::string text;
    std::size_t start = 0;  // byte offsets into the source stream
    std::size_t end = 0;
};

struct SentenceSplitOptions {
    // A trailing '.' of any of these never ends a sentence.
    std::vector<std::string> abbreviations = {"Fig.", "et al.", "e.g.", "i.e.", "No."};
};

// Splits on sentence-final '.', '?', '!'. A period inside a known
// abbreviation or between two digits does not split.
std::vector<Sentence> split_sentences(std::string_view text,
                                      const SentenceSplitOptions& options = {});

enum class RefClass { Internal, External, AmbiguousDiscarded };

struct RefMatch {
    doc::ObjectKind kind = doc::ObjectKind::Figure;
    std::size_t index = 0;       // object number found after the keyword
    Sentence sentence;           // sentence containing the keyword
    std::optional<Sentence> continuation;  // set when the keyword ended its sentence
    RefClass classification = RefClass::Internal;

    std::string referring_text() const;
};

struct LinkOptions {
    SentenceSplitOptions sentences;
    // "of" within this many whitespace tokens after the keyword marks the
    // mention as citing another paper.
    std::size_t of_window_tokens = 3;
    // Off by default: only the keyword variants named by the extraction rules.
    bool extended_keywords = false;
    std::size_t min_counterpart_len = 20;
};

// All keyword-number mentions of `kind` in the sentence stream, classified.
// External iff the number exceeds total_count or "of" follows the keyword
// within the window; a number is never read out of a longer digit run
// (Fig1 does not match inside Fig11).
std::vector<RefMatch> scan_references(const std::vector<Sentence>& sentences,
                                      std::string_view source_text, doc::ObjectKind kind,
                                      std::size_t total_count, const LinkOptions& options = {});

// Mentions of one specific object index.
std::vector<RefMatch> find_referring_sentences(const std::vector<Sentence>& sentences,
                                               std::string_view source_text, doc::ObjectKind kind,
                                               std::size_t index, std::size_t total_count,
                                               const LinkOptions& options = {});

enum class PairKind { CaptionReferringSentence, CaptionContent };

struct CaptionPair {
    std::string doc_id;
    doc::ObjectKind kind = doc::ObjectKind::Figure;
    std::size_t index = 0;
    std::string caption;
    std::string counterpart;
    PairKind pair_kind = PairKind::CaptionReferringSentence;
};

struct LinkResult {
    std::vector<CaptionPair> pairs;
    // Every keyword-number hit, with its final disposition (quality failures
    // re-classified AmbiguousDiscarded); lets callers reconcile against a raw
    // scan of the text.
    std::vector<RefMatch> figure_matches;
    std::vector<RefMatch> table_matches;
};

LinkResult link_captions_detailed(const doc::StructuredDocument& document,
                                  const LinkOptions& options = {});

std::vector<CaptionPair> link_captions(const doc::StructuredDocument& document,
                                       std::size_t min_counterpart_len = 20);

// Concatenated paragraph stream the sentence offsets refer to.
std::string document_text(const doc::StructuredDocument& document);

nlohmann::ordered_json pair_to_json(const CaptionPair& pair);

// Counterpart quality gate shared with tests: too-short or garbled text is
// discarded rather than emitted.
bool counterpart_acceptable(std::string_view text, std::size_t min_len);

}  // namespace geoforge::link
