#include "geoforge/tool_trace.hpp"

#include <algorithm>
#include <array>
#include <set>

#include "geoforge/util.hpp"

namespace geoforge::trace {

namespace {

constexpr std::string_view kScaffoldHead =
    "Answer the following questions as best you can. In this level, you are calling the tools in "
    "natural language format, since the tools are actually an intelligent agent like you, but "
    "they expert only in one area. Several things to remember.\n"
    "\n"
    "(1) Remember to follow the format of passing natural language as the Action Input.\n"
    "(2) DO NOT use your imagination, only use concrete information given by the tools.\n"
    "(3) If the observation contains images or urls which has useful information, YOU MUST "
    "INCLUDE ALL USEFUL IMAGES and links in your Answer and Final Answers using format "
    "![img](url). BUT DO NOT provide any imaginary links.\n"
    "(4) The information in your Final Answer should include ALL the information returned by the "
    "tools.\n"
    "(5) If a user's query is a language other than English, please translate it to English "
    "without tools, and translate it back to the source language in Final Answer. You have "
    "access to the following tools (Only use these tools we provide you):\n";

constexpr std::string_view kFormatHead = "Use the following format:\n";

constexpr std::array<std::string_view, 6> kLabels = {"Question:",     "Thought:",
                                                     "Action Input:", "Action:",
                                                     "Observation:",  "Final Answer:"};

}  // namespace

std::string render_tool_prompt(const std::vector<ToolDescriptor>& tools,
                               const std::string& question) {
    if (tools.empty()) {
        throw TraceError("at least one tool is required");
    }
    std::set<std::string> seen;
    for (const ToolDescriptor& tool : tools) {
        if (tool.name.empty() || tool.name.find('\n') != std::string::npos) {
            throw TraceError("tool name must be a non-empty single line");
        }
        if (!seen.insert(tool.name).second) {
            throw TraceError("duplicate tool name '" + tool.name + "'");
        }
    }

    std::string out(kScaffoldHead);
    for (const ToolDescriptor& tool : tools) {
        out += '\n';
        out += tool.name;
        out += ": ";
        out += tool.description;
        if (!tool.input_schema_note.empty()) {
            out += ' ';
            out += tool.input_schema_note;
        }
        out += '\n';
    }
    out += '\n';
    out += kFormatHead;
    out += '\n';
    out += "Question: the input question you must answer\n";
    out += "Thought: you should always think about what to do\n";
    out += "Action: the action to take, should be one of [";
    for (std::size_t i = 0; i < tools.size(); ++i) {
        if (i != 0) {
            out += ", ";
        }
        out += tools[i].name;
    }
    out += "]\n";
    out += "Action Input: the input to the action\n";
    out += "Observation: the result of the action\n";
    out += "... (this Thought/Action/Action Input/Observation can repeat N times)\n";
    out += "Thought: ";
    out += kCanonicalClosingThought;
    out += '\n';
    out += "Final Answer: the final answer to the original input question\n";
    out += '\n';
    out += "Question: ";
    out += question;
    out += "\nThought:";
    return out;
}

std::string render_trace(const ToolTrace& trace) {
    std::string out;
    if (!trace.question.empty()) {
        out += "Question: ";
        out += trace.question;
        out += '\n';
    }
    for (const TraceStep& step : trace.steps) {
        out += "Thought: ";
        out += step.thought;
        out += "\nAction: ";
        out += step.action;
        out += "\nAction Input: ";
        out += step.action_input;
        out += "\nObservation: ";
        out += step.observation;
        out += '\n';
    }
    out += "Thought: ";
    out += trace.final_thought.empty() ? std::string(kCanonicalClosingThought)
                                       : trace.final_thought;
    out += "\nFinal Answer: ";
    out += trace.final_answer;
    return out;
}

namespace {

struct Line {
    std::string_view text;
    std::size_t number;
};

std::vector<Line> split_lines(std::string_view text) {
    // A file-final newline is a storage convention, not payload content.
    if (!text.empty() && text.back() == '\n') {
        text.remove_suffix(1);
    }
    std::vector<Line> lines;
    std::size_t start = 0;
    std::size_t number = 1;
    while (start <= text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string_view::npos) {
            lines.push_back({text.substr(start), number});
            break;
        }
        lines.push_back({text.substr(start, end - start), number});
        start = end + 1;
        ++number;
    }
    return lines;
}

std::string_view label_of(std::string_view line) {
    for (std::string_view label : kLabels) {
        if (util::starts_with(line, label)) {
            return label;
        }
    }
    return {};
}

// The naive transcripts wrap every field value in double quotes; unwrap
// single-line payloads so parsed fields carry the bare value.
std::string finalize_payload(std::string payload) {
    while (!payload.empty() && (payload.back() == ' ' || payload.back() == '\r')) {
        payload.pop_back();
    }
    if (payload.size() >= 2 && payload.front() == '"' && payload.back() == '"' &&
        payload.find('\n') == std::string::npos) {
        payload = payload.substr(1, payload.size() - 2);
    }
    return payload;
}

}  // namespace

ToolTrace parse_trace(std::string_view text, const ParseOptions& options) {
    enum class State { Start, AfterQuestion, AfterThought, AfterAction, AfterInput, AfterObservation, Done };

    ToolTrace trace;
    State state = State::Start;
    std::string pending_thought;
    TraceStep step;
    std::string payload;
    std::string_view current_label;
    std::size_t current_line = 0;

    auto commit = [&](std::size_t at_line) {
        std::string value = finalize_payload(std::move(payload));
        payload.clear();
        if (current_label == "Question:") {
            trace.question = value;
            state = State::AfterQuestion;
        } else if (current_label == "Thought:") {
            pending_thought = value;
            state = State::AfterThought;
        } else if (current_label == "Action:") {
            step.thought = pending_thought;
            step.action = value;
            state = State::AfterAction;
        } else if (current_label == "Action Input:") {
            step.action_input = value;
            state = State::AfterInput;
        } else if (current_label == "Observation:") {
            step.observation = value;
            trace.steps.push_back(std::move(step));
            step = TraceStep{};
            state = State::AfterObservation;
        } else if (current_label == "Final Answer:") {
            trace.final_thought = pending_thought;
            trace.final_answer = value;
            state = State::Done;
        }
        (void)at_line;
    };

    for (const Line& line : split_lines(text)) {
        std::string_view label = label_of(line.text);
        if (label.empty()) {
            if (current_label.empty()) {
                std::string_view trimmed = line.text;
                while (!trimmed.empty() && std::isspace(static_cast<unsigned char>(trimmed.front()))) {
                    trimmed.remove_prefix(1);
                }
                if (trimmed.empty()) {
                    continue;  // leading blank lines
                }
                throw TraceGrammarError("expected a label line", line.number);
            }
            payload += '\n';
            payload += line.text;
            continue;
        }

        // A new label closes the previous field.
        if (!current_label.empty()) {
            commit(line.number);
        }

        bool ok = false;
        switch (state) {
            case State::Start:
                ok = label == "Question:" || label == "Thought:";
                break;
            case State::AfterQuestion:
                ok = label == "Thought:";
                break;
            case State::AfterThought:
                ok = label == "Action:" || label == "Final Answer:";
                break;
            case State::AfterAction:
                ok = label == "Action Input:";
                break;
            case State::AfterInput:
                ok = label == "Observation:";
                break;
            case State::AfterObservation:
                ok = label == "Thought:";
                break;
            case State::Done:
                ok = false;
                break;
        }
        if (!ok) {
            throw TraceGrammarError("unexpected label '" + std::string(label) + "'", line.number);
        }

        current_label = label;
        current_line = line.number;
        std::string_view rest = line.text.substr(label.size());
        if (!rest.empty() && rest.front() == ' ') {
            rest.remove_prefix(1);
        }
        payload = std::string(rest);
    }

    if (!current_label.empty()) {
        commit(current_line + 1);
    }

    if (state != State::Done) {
        if (!options.allow_incomplete) {
            throw IncompleteTraceError("transcript has no 'Final Answer:'");
        }
        switch (state) {
            case State::AfterAction:
            case State::AfterInput:
                trace.steps.push_back(std::move(step));
                break;
            case State::AfterThought:
                trace.final_thought = pending_thought;
                break;
            default:
                break;
        }
    }
    return trace;
}

std::vector<std::string> validate_trace(const ToolTrace& trace,
                                        const std::vector<ToolDescriptor>& tools) {
    std::vector<std::string> problems;
    std::set<std::string> names;
    for (const ToolDescriptor& tool : tools) {
        names.insert(tool.name);
    }

    auto check_field = [&problems](std::string_view field, const std::string& value,
                                   const std::string& where) {
        for (std::string_view label : kLabels) {
            if (value.find(label) != std::string::npos) {
                problems.push_back(where + " " + std::string(field) + " contains the literal '" +
                                   std::string(label) + "'");
            }
        }
    };

    for (std::size_t i = 0; i < trace.steps.size(); ++i) {
        const TraceStep& step = trace.steps[i];
        std::string where = "step " + std::to_string(i);
        check_field("thought", step.thought, where);
        check_field("action", step.action, where);
        check_field("action_input", step.action_input, where);
        check_field("observation", step.observation, where);
        if (step.action.find('\n') != std::string::npos) {
            problems.push_back(where + " action contains a newline");
        }
        if (!names.empty() && names.count(step.action) == 0) {
            problems.push_back(where + " action '" + step.action + "' is not a declared tool");
        }
    }
    check_field("question", trace.question, "trace");
    check_field("final_thought", trace.final_thought, "trace");
    check_field("final_answer", trace.final_answer, "trace");
    if (trace.final_answer.empty()) {
        problems.push_back("trace final_answer is empty");
    }
    return problems;
}

namespace {

class SampleBuilder {
public:
    explicit SampleBuilder(const MaskOptions& options) : options_(options) {}

    void raw(std::string_view text) { text_ += text; }

    void field(std::string_view label, std::string_view value, const std::string& role) {
        bool loss = !role.empty();
        std::size_t start = text_.size();
        text_ += label;
        if (!options_.label_loss || !loss) {
            start = text_.size();  // payload only
        }
        text_ += value;
        if (loss && text_.size() > start) {
            payloads_.push_back({start, text_.size(), role});
        }
    }

    RenderedSample finish() { return {std::move(text_), std::move(payloads_)}; }

private:
    MaskOptions options_;
    std::string text_;
    std::vector<PayloadRange> payloads_;
};

}  // namespace

RenderedSample render_sample(const std::string& prompt, const ToolTrace& trace,
                             const MaskOptions& options) {
    SampleBuilder builder(options);
    builder.raw(prompt);

    // The prompt's trailing "Thought:" cue already opens the first thought.
    bool cue = util::ends_with(prompt, "Thought:");
    if (prompt.empty() && !trace.question.empty()) {
        builder.field("Question: ", trace.question, "");
        builder.raw("\n");
    }

    bool first = true;
    auto thought_label = [&]() -> std::string_view {
        if (first && cue) {
            first = false;
            return " ";
        }
        first = false;
        return "Thought: ";
    };

    for (const TraceStep& step : trace.steps) {
        builder.field(thought_label(), step.thought, "thought");
        builder.raw("\n");
        builder.field("Action: ", step.action, "action");
        builder.raw("\n");
        builder.field("Action Input: ", step.action_input, "action_input");
        builder.raw("\n");
        builder.field("Observation: ", step.observation, "");
        builder.raw("\n");
    }

    const std::string closing = trace.final_thought.empty()
                                    ? std::string(kCanonicalClosingThought)
                                    : trace.final_thought;
    builder.field(thought_label(), closing, options.closing_thought_loss ? "thought" : "");
    builder.raw("\n");
    builder.field("Final Answer: ", trace.final_answer, "final_answer");
    return builder.finish();
}

MaskedSample compute_loss_mask(const std::string& prompt, const ToolTrace& trace,
                               corpus::Tokenizer& tokenizer, const MaskOptions& options) {
    RenderedSample sample = render_sample(prompt, trace, options);
    std::vector<corpus::TokenSpan> spans = tokenizer.encode_spans(sample.text);

    MaskedSample out;
    std::size_t keep = std::min(spans.size(), options.max_length);
    out.truncated = spans.size() > options.max_length;
    out.ids.reserve(keep);
    out.mask.reserve(keep);

    std::size_t p = 0;
    for (std::size_t i = 0; i < keep; ++i) {
        const corpus::TokenSpan& token = spans[i];
        while (p < sample.payloads.size() && sample.payloads[p].end <= token.start) {
            ++p;
        }
        // Majority rule: a token straddling a payload edge carries loss iff
        // more than half of its bytes are payload bytes.
        std::size_t inside = 0;
        for (std::size_t q = p; q < sample.payloads.size(); ++q) {
            const PayloadRange& range = sample.payloads[q];
            if (range.start >= token.end) {
                break;
            }
            std::size_t lo = std::max(range.start, token.start);
            std::size_t hi = std::min(range.end, token.end);
            if (hi > lo) {
                inside += hi - lo;
            }
        }
        std::size_t len = token.end - token.start;
        out.ids.push_back(token.id);
        out.mask.push_back(inside * 2 > len ? 1 : 0);
    }
    return out;
}

nlohmann::ordered_json trace_to_json(const ToolTrace& trace) {
    nlohmann::ordered_json steps = nlohmann::ordered_json::array();
    for (const TraceStep& step : trace.steps) {
        steps.push_back({{"thought", step.thought},
                         {"action", step.action},
                         {"action_input", step.action_input},
                         {"observation", step.observation}});
    }
    return nlohmann::ordered_json{{"question", trace.question},
                                  {"steps", steps},
                                  {"final_thought", trace.final_thought},
                                  {"final_answer", trace.final_answer}};
}

ToolTrace trace_from_json(const nlohmann::json& j) {
    ToolTrace trace;
    trace.question = j.value("question", "");
    trace.final_thought = j.value("final_thought", "");
    trace.final_answer = j.value("final_answer", "");
    if (j.contains("steps")) {
        for (const auto& s : j["steps"]) {
            TraceStep step;
            step.thought = s.value("thought", "");
            step.action = s.value("action", "");
            step.action_input = s.value("action_input", "");
            step.observation = s.value("observation", "");
            trace.steps.push_back(std::move(step));
        }
    }
    return trace;
}

nlohmann::ordered_json masked_to_json(const MaskedSample& sample) {
    return nlohmann::ordered_json{
        {"ids", sample.ids}, {"mask", sample.mask}, {"truncated", sample.truncated}};
}

std::vector<ToolDescriptor> tools_from_json(const nlohmann::json& j) {
    std::vector<ToolDescriptor> tools;
    for (const auto& item : j) {
        ToolDescriptor tool;
        tool.name = item.at("name").get<std::string>();
        tool.description = item.value("description", "");
        tool.input_schema_note = item.value("input_schema_note", "");
        tools.push_back(std::move(tool));
    }
    return tools;
}

}  // namespace geoforge::trace
