#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "geoforge/tokenizer.hpp"

namespace geoforge::trace {

class TraceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Transcript ended before "Final Answer:".
class IncompleteTraceError : public TraceError {
public:
    using TraceError::TraceError;
};

// Labels appeared in an order the scaffold grammar does not allow.
class TraceGrammarError : public TraceError {
public:
    TraceGrammarError(const std::string& message, std::size_t line)
        : TraceError("line " + std::to_string(line) + ": " + message), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

struct ToolDescriptor {
    std::string name;
    std::string description;
    std::string input_schema_note;
};

struct TraceStep {
    std::string thought;
    std::string action;
    std::string action_input;
    std::string observation;
};

inline constexpr std::string_view kCanonicalClosingThought = "I now know the final answer";

struct ToolTrace {
    std::string question;
    std::vector<TraceStep> steps;
    std::string final_thought;  // empty renders the canonical closing sentence
    std::string final_answer;
};

// The fixed instruction scaffold with the given tools spliced in, ending with
// "Question: <question>\nThought:" as the generation cue. Requires at least
// one tool; duplicate or multi-line tool names are rejected.
std::string render_tool_prompt(const std::vector<ToolDescriptor>& tools,
                               const std::string& question);

// Serializes the transcript: optional "Question:" line, one
// Thought/Action/Action Input/Observation block per step, then the closing
// thought and "Final Answer:".
std::string render_trace(const ToolTrace& trace);

struct ParseOptions {
    // Accept prefix transcripts that stop before Observation / Final Answer.
    bool allow_incomplete = false;
};

// Inverse of render_trace. Label lines anchor fields; payloads run until the
// next label. A single-line payload wrapped in double quotes is unquoted.
ToolTrace parse_trace(std::string_view text, const ParseOptions& options = {});

// Field-level checks: no literal scaffold labels inside payloads, actions
// (when tools are given) name declared tools, final answer present.
std::vector<std::string> validate_trace(const ToolTrace& trace,
                                        const std::vector<ToolDescriptor>& tools = {});

struct MaskOptions {
    std::size_t max_length = 2048;
    // Loss on the "Thought:"/"Action:"/... label tokens themselves; default
    // is payloads only.
    bool label_loss = false;
    // Loss on the closing "I now know the final answer" thought.
    bool closing_thought_loss = true;
};

struct PayloadRange {
    std::size_t start = 0;
    std::size_t end = 0;
    std::string role;  // thought | action | action_input | final_answer
};

struct RenderedSample {
    std::string text;
    std::vector<PayloadRange> payloads;  // byte ranges that carry loss
};

// prompt + trace continuation with loss-bearing byte ranges recorded. When
// the prompt ends with the "Thought:" cue the first thought continues that
// line; when the prompt is empty the trace's own Question line is included.
RenderedSample render_sample(const std::string& prompt, const ToolTrace& trace,
                             const MaskOptions& options = {});

struct MaskedSample {
    std::vector<corpus::TokenId> ids;
    std::vector<int> mask;  // 0/1, same length as ids
    bool truncated = false;
};

// Tokenizes the rendered sample and marks exactly the payload tokens (a token
// straddling a payload edge counts iff the majority of its bytes are inside),
// truncating at max_length.
MaskedSample compute_loss_mask(const std::string& prompt, const ToolTrace& trace,
                               corpus::Tokenizer& tokenizer, const MaskOptions& options = {});

nlohmann::ordered_json trace_to_json(const ToolTrace& trace);
ToolTrace trace_from_json(const nlohmann::json& j);
nlohmann::ordered_json masked_to_json(const MaskedSample& sample);

std::vector<ToolDescriptor> tools_from_json(const nlohmann::json& j);

}  // namespace geoforge::trace
