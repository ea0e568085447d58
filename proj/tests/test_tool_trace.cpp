#include "doctest.h"

#include <nlohmann/json.hpp>

#include "geoforge/tool_trace.hpp"
#include "geoforge/util.hpp"
#include "test_paths.hpp"

using namespace geoforge;

namespace {

std::vector<trace::ToolDescriptor> bundled_tools() {
    return trace::tools_from_json(
        nlohmann::json::parse(util::read_file(fixture("traces/tools.json"))));
}

trace::ToolTrace make_trace(std::size_t steps, const std::string& final_answer) {
    trace::ToolTrace t;
    t.question = "What is the question?";
    for (std::size_t i = 0; i < steps; ++i) {
        t.steps.push_back({"think " + std::to_string(i), "Geo_search",
                           "input " + std::to_string(i), "observed " + std::to_string(i)});
    }
    t.final_answer = final_answer;
    return t;
}

}  // namespace

TEST_CASE("render_tool_prompt ends with the question and generation cue") {
    auto tools = bundled_tools();
    std::string prompt = trace::render_tool_prompt(tools, "Q");
    CHECK(util::ends_with(prompt, "Question: Q\nThought:"));
    CHECK(prompt.find("Answer the following questions as best you can.") == 0);
    CHECK(prompt.find("Use the following format:") != std::string::npos);
    CHECK(prompt.find("... (this Thought/Action/Action Input/Observation can repeat N times)") !=
          std::string::npos);
}

TEST_CASE("the format line lists every declared tool") {
    std::vector<trace::ToolDescriptor> two = {{"alpha_tool", "does a", ""},
                                              {"beta_tool", "does b", ""}};
    std::string prompt = trace::render_tool_prompt(two, "Q");
    CHECK(prompt.find("should be one of [alpha_tool, beta_tool]") != std::string::npos);
    CHECK(prompt.find("alpha_tool: does a") != std::string::npos);
    CHECK(prompt.find("beta_tool: does b") != std::string::npos);
}

TEST_CASE("prompt rejects zero tools and duplicate names") {
    CHECK_THROWS_AS(trace::render_tool_prompt({}, "Q"), trace::TraceError);
    std::vector<trace::ToolDescriptor> dup = {{"t", "a", ""}, {"t", "b", ""}};
    CHECK_THROWS_AS(trace::render_tool_prompt(dup, "Q"), trace::TraceError);
    std::vector<trace::ToolDescriptor> multiline = {{"bad\nname", "a", ""}};
    CHECK_THROWS_AS(trace::render_tool_prompt(multiline, "Q"), trace::TraceError);
}

TEST_CASE("scaffold stability: frozen digest over the bundled toolset") {
    std::string prompt =
        trace::render_tool_prompt(bundled_tools(), "What is the weather in New York 3M years ago?");
    CHECK(util::sha256_hex(prompt) ==
          "b94e79e8ba0d0ab0e8df030d911edd458f7fcc61fdb24b2ba389308184adc48b");
}

TEST_CASE("render_trace of a bare answer uses the canonical closing") {
    trace::ToolTrace t;
    t.final_answer = "42";
    CHECK(trace::render_trace(t) == "Thought: I now know the final answer\nFinal Answer: 42");
}

TEST_CASE("render_trace lays out steps like the transcripts") {
    trace::ToolTrace t;
    t.question = "What is the definition of plate tectonics?";
    t.steps.push_back({"arxiv", "search", "query: plate tectonics", "Title: Plate tectonics."});
    t.final_answer = "Plate tectonics is the theory of moving plates.";
    std::string rendered = trace::render_trace(t);
    CHECK(rendered ==
          "Question: What is the definition of plate tectonics?\n"
          "Thought: arxiv\n"
          "Action: search\n"
          "Action Input: query: plate tectonics\n"
          "Observation: Title: Plate tectonics.\n"
          "Thought: I now know the final answer\n"
          "Final Answer: Plate tectonics is the theory of moving plates.");
    CHECK(trace::validate_trace(t).empty());
}

TEST_CASE("parse_trace inverts render_trace on fixtures") {
    for (std::size_t steps : {std::size_t{0}, std::size_t{1}, std::size_t{3}}) {
        auto t = make_trace(steps, "the answer");
        auto back = trace::parse_trace(trace::render_trace(t));
        CHECK(back.question == t.question);
        REQUIRE(back.steps.size() == t.steps.size());
        for (std::size_t i = 0; i < t.steps.size(); ++i) {
            CHECK(back.steps[i].thought == t.steps[i].thought);
            CHECK(back.steps[i].action == t.steps[i].action);
            CHECK(back.steps[i].action_input == t.steps[i].action_input);
            CHECK(back.steps[i].observation == t.steps[i].observation);
        }
        CHECK(back.final_answer == t.final_answer);
    }
}

TEST_CASE("round-trip property on generated traces") {
    util::SplitMix64 rng(211);
    const std::vector<std::string> words = {"basalt", "query", "search", "result",
                                            "weather", "geo",  "rock",   "layer"};
    auto payload = [&](bool multiline) {
        std::string out = words[rng.bounded(words.size())];
        std::size_t extra = rng.bounded(4);
        for (std::size_t i = 0; i < extra; ++i) {
            out += (multiline && rng.bounded(3) == 0) ? "\n" : " ";
            out += words[rng.bounded(words.size())];
        }
        return out;
    };
    for (int trial = 0; trial < 200; ++trial) {
        trace::ToolTrace t;
        if (rng.bounded(2) == 0) {
            t.question = payload(false);
        }
        std::size_t steps = rng.bounded(4);
        for (std::size_t i = 0; i < steps; ++i) {
            t.steps.push_back({payload(true), payload(false), payload(true), payload(true)});
        }
        if (rng.bounded(2) == 0) {
            t.final_thought = payload(false);
        }
        t.final_answer = payload(true);

        auto back = trace::parse_trace(trace::render_trace(t));
        REQUIRE(back.question == t.question);
        REQUIRE(back.steps.size() == t.steps.size());
        for (std::size_t i = 0; i < steps; ++i) {
            REQUIRE(back.steps[i].thought == t.steps[i].thought);
            REQUIRE(back.steps[i].action == t.steps[i].action);
            REQUIRE(back.steps[i].action_input == t.steps[i].action_input);
            REQUIRE(back.steps[i].observation == t.steps[i].observation);
        }
        std::string expected_closing =
            t.final_thought.empty() ? std::string(trace::kCanonicalClosingThought)
                                    : t.final_thought;
        REQUIRE(back.final_thought == expected_closing);
        REQUIRE(back.final_answer == t.final_answer);
    }
}

TEST_CASE("the naive weather transcript parses to action geo_search") {
    std::string transcript = util::read_file(fixture("traces/example1.txt"));
    trace::ParseOptions options;
    options.allow_incomplete = true;
    auto t = trace::parse_trace(transcript, options);
    CHECK(t.question == "What is the weather in New York 3M years ago?");
    REQUIRE(t.steps.size() == 1);
    CHECK(t.steps[0].thought == "weather");
    CHECK(t.steps[0].action == "geo_search");
    CHECK(t.steps[0].action_input == "New York, Weather, 3M years");
    CHECK(t.final_answer.empty());
}

TEST_CASE("strict parsing requires Final Answer and valid label order") {
    CHECK_THROWS_AS(trace::parse_trace("Question: q\nThought: t\nAction: a\nAction Input: i\n"),
                    trace::IncompleteTraceError);
    try {
        trace::parse_trace("Question: q\nAction: a\n");
        FAIL("expected grammar error");
    } catch (const trace::TraceGrammarError& e) {
        CHECK(e.line() == 2);
    }
    CHECK_THROWS_AS(trace::parse_trace("free text without any label"),
                    trace::TraceGrammarError);
}

TEST_CASE("validate_trace flags label payloads and undeclared actions") {
    trace::ToolTrace t = make_trace(1, "ok");
    t.steps[0].thought = "contains Observation: label";
    auto problems = trace::validate_trace(t, bundled_tools());
    CHECK(!problems.empty());

    t = make_trace(1, "ok");
    t.steps[0].action = "not_a_tool";
    CHECK(!trace::validate_trace(t, bundled_tools()).empty());
    CHECK(trace::validate_trace(make_trace(2, "ok"), bundled_tools()).empty());

    t = make_trace(0, "");
    CHECK(!trace::validate_trace(t).empty());  // empty final answer
}

TEST_CASE("mask covers exactly the payload tokens of a bare answer") {
    corpus::ReferenceTokenizer tok;
    trace::ToolTrace t;
    t.final_answer = "alpha beta gamma";  // 3 reference tokens

    // closing thought carries loss by default ("I now know the final answer" = 6 tokens)
    auto sample = trace::compute_loss_mask("", t, tok);
    std::size_t ones = 0;
    for (int m : sample.mask) {
        ones += static_cast<std::size_t>(m);
    }
    CHECK(ones == 3 + 6);

    trace::MaskOptions no_closing;
    no_closing.closing_thought_loss = false;
    sample = trace::compute_loss_mask("", t, tok, no_closing);
    ones = 0;
    for (int m : sample.mask) {
        ones += static_cast<std::size_t>(m);
    }
    CHECK(ones == 3);
}

TEST_CASE("observation tokens never carry loss") {
    corpus::ReferenceTokenizer tok;
    auto t = make_trace(2, "final words here");
    std::string prompt = trace::render_tool_prompt(bundled_tools(), t.question);
    auto rendered = trace::render_sample(prompt, t, {});
    auto sample = trace::compute_loss_mask(prompt, t, tok);
    auto spans = tok.encode_spans(rendered.text);
    REQUIRE(spans.size() == sample.mask.size());

    for (const auto& step : t.steps) {
        std::size_t at = rendered.text.find("Observation: " + step.observation);
        REQUIRE(at != std::string::npos);
        std::size_t obs_end = at + std::string("Observation: ").size() + step.observation.size();
        for (std::size_t i = 0; i < spans.size(); ++i) {
            if (spans[i].start >= at && spans[i].end <= obs_end) {
                CHECK(sample.mask[i] == 0);
            }
        }
    }
}

TEST_CASE("mask equals the independent per-payload tokenization oracle") {
    corpus::ReferenceTokenizer tok;
    util::SplitMix64 rng(55);
    for (int trial = 0; trial < 50; ++trial) {
        auto t = make_trace(rng.bounded(3), "answer tokens " + std::to_string(trial));
        std::string prompt = trace::render_tool_prompt(bundled_tools(), t.question);
        auto rendered = trace::render_sample(prompt, t, {});
        auto sample = trace::compute_loss_mask(prompt, t, tok);
        auto spans = tok.encode_spans(rendered.text);
        REQUIRE(spans.size() == sample.mask.size());

        for (const auto& payload : rendered.payloads) {
            std::string text = rendered.text.substr(payload.start, payload.end - payload.start);
            auto expected = tok.encode(text);
            std::vector<corpus::TokenId> got;
            for (std::size_t i = 0; i < spans.size(); ++i) {
                if (spans[i].start >= payload.start && spans[i].end <= payload.end) {
                    REQUIRE(sample.mask[i] == 1);
                    got.push_back(spans[i].id);
                }
            }
            REQUIRE(got == expected);
        }
        // and nothing outside payloads is masked
        std::size_t ones = 0;
        for (int m : sample.mask) {
            ones += static_cast<std::size_t>(m);
        }
        std::size_t expected_ones = 0;
        for (const auto& payload : rendered.payloads) {
            expected_ones +=
                tok.encode(rendered.text.substr(payload.start, payload.end - payload.start))
                    .size();
        }
        REQUIRE(ones == expected_ones);
    }
}

TEST_CASE("an oversized prompt truncates to exactly max_length") {
    corpus::ReferenceTokenizer tok;
    trace::ToolTrace t;
    t.final_answer = "x";
    std::string prompt;
    for (int i = 0; i < 3000; ++i) {
        prompt += "tok" + std::to_string(i) + " ";
    }
    auto sample = trace::compute_loss_mask(prompt, t, tok);
    CHECK(sample.truncated);
    CHECK(sample.ids.size() == 2048);
    CHECK(sample.mask.size() == 2048);

    trace::MaskOptions small;
    small.max_length = 64;
    sample = trace::compute_loss_mask(prompt, t, tok, small);
    CHECK(sample.truncated);
    CHECK(sample.ids.size() == 64);
}

TEST_CASE("label_loss extends the mask to the label tokens") {
    corpus::ReferenceTokenizer tok;
    trace::ToolTrace t;
    t.final_answer = "only answer";
    trace::MaskOptions with_labels;
    with_labels.label_loss = true;
    with_labels.closing_thought_loss = false;
    auto rendered = trace::render_sample("", t, with_labels);
    // final-answer label is loss-bearing, the (non-loss) closing thought label is not
    bool has_label_payload = false;
    for (const auto& payload : rendered.payloads) {
        std::string text = rendered.text.substr(payload.start, payload.end - payload.start);
        if (text.rfind("Final Answer: ", 0) == 0) {
            has_label_payload = true;
        }
    }
    CHECK(has_label_payload);
}

TEST_CASE("trace JSON round-trips") {
    auto t = make_trace(2, "done");
    auto back = trace::trace_from_json(trace::trace_to_json(t));
    CHECK(back.question == t.question);
    REQUIRE(back.steps.size() == 2);
    CHECK(back.steps[1].observation == t.steps[1].observation);
    CHECK(back.final_answer == "done");

    trace::MaskedSample sample;
    sample.ids = {1, 2, 3};
    sample.mask = {0, 1, 0};
    sample.truncated = true;
    auto j = trace::masked_to_json(sample);
    CHECK(j["ids"].get<std::vector<int>>() == std::vector<int>{1, 2, 3});
    CHECK(j["mask"].get<std::vector<int>>() == std::vector<int>{0, 1, 0});
    CHECK(j["truncated"].get<bool>() == true);
    CHECK(j.dump() == "{\"ids\":[1,2,3],\"mask\":[0,1,0],\"truncated\":true}");
}
