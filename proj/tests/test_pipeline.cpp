#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "geoforge/pipeline.hpp"
#include "geoforge/util.hpp"
#include "test_paths.hpp"

using namespace geoforge;

namespace {

pipeline::Manifest fixture_manifest(const std::string& out_name) {
    auto m = pipeline::load_manifest(fixture("pipeline/manifest.json"));
    m.out_dir = std::filesystem::temp_directory_path() / "geoforge_pipeline" / out_name;
    std::filesystem::remove_all(m.out_dir);
    return m;
}

std::size_t line_count(const std::filesystem::path& path) {
    std::ifstream in(path);
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        if (!line.empty()) {
            ++n;
        }
    }
    return n;
}

}  // namespace

TEST_CASE("manifest loads with resolved paths and validates") {
    auto m = pipeline::load_manifest(fixture("pipeline/manifest.json"));
    CHECK(m.block_size == 32);
    CHECK(m.seed == 42);
    REQUIRE(m.sources.size() == 3);
    CHECK(m.sources[0].name == "geocorpus");
    CHECK(m.sources[0].ratio == 8.0);
    CHECK(std::filesystem::exists(m.sources[0].path));
    CHECK(std::filesystem::exists(m.signals.template_bank));
    CHECK_NOTHROW(pipeline::validate_manifest(m));
}

TEST_CASE("negative ratio fails validation before any work") {
    auto m = fixture_manifest("invalid");
    m.sources[1].ratio = -1.0;
    CHECK_THROWS_AS(pipeline::validate_manifest(m), pipeline::ManifestError);
    CHECK_THROWS_AS(pipeline::run_pipeline(m), pipeline::ManifestError);
    CHECK(!std::filesystem::exists(m.out_dir / "report.json"));
}

TEST_CASE("unknown stage and missing inputs are manifest errors") {
    auto m = fixture_manifest("invalid2");
    m.stages = {"warp"};
    CHECK_THROWS_AS(pipeline::validate_manifest(m), pipeline::ManifestError);

    m = fixture_manifest("invalid3");
    m.stages = {"mask"};
    m.traces.configured = false;
    CHECK_THROWS_AS(pipeline::validate_manifest(m), pipeline::ManifestError);
}

TEST_CASE("ingest+emit subset writes one .md per document") {
    auto m = fixture_manifest("subset");
    m.stages = {"ingest", "emit"};
    auto report = pipeline::run_pipeline(m);
    CHECK(report.counts.at("documents") == 3);
    CHECK(std::filesystem::exists(m.out_dir / "md" / "minimal.md"));
    CHECK(std::filesystem::exists(m.out_dir / "md" / "golden_01.md"));
    CHECK(std::filesystem::exists(m.out_dir / "md" / "basin_survey.md"));
    CHECK(std::filesystem::exists(m.out_dir / "md" / "golden_01.spans.json"));
    CHECK(std::filesystem::exists(m.out_dir / "ingest" / "golden_01.json"));
    CHECK(!std::filesystem::exists(m.out_dir / "link"));
    CHECK(std::filesystem::exists(m.out_dir / "report.json"));
}

TEST_CASE("full fixture run: stats identity and all outputs present") {
    auto m = fixture_manifest("full");
    auto report = pipeline::run_pipeline(m);

    REQUIRE(report.source_stats.size() == 3);
    for (const auto& stats : report.source_stats) {
        CHECK(stats.block_num * m.block_size + stats.dropped_tokens == stats.token_num);
        CHECK(stats.dropped_tokens < m.block_size);
    }
    CHECK(report.source_stats[0].source == "geocorpus");
    CHECK(report.source_stats[0].item_num == 3);

    CHECK(std::filesystem::exists(m.out_dir / "blocks" / "geocorpus.jsonl"));
    CHECK(std::filesystem::exists(m.out_dir / "plan.json"));
    CHECK(std::filesystem::exists(m.out_dir / "masks.jsonl"));
    CHECK(std::filesystem::exists(m.out_dir / "signals" / "pairs.jsonl"));
    CHECK(std::filesystem::exists(m.out_dir / "link" / "pairs.jsonl"));

    CHECK(line_count(m.out_dir / "masks.jsonl") == 3);
    CHECK(report.counts.at("masked_samples") == 3);
    CHECK(report.counts.at("signal_pairs") > 0);
    CHECK(report.counts.at("caption_pairs") > 0);

    // the plan respects the 8:1:1 apportionment at global_batch 10
    auto plan = nlohmann::json::parse(util::read_file(m.out_dir / "plan.json"));
    CHECK(plan["schedule"][0]["counts"]["geocorpus"] == 8);
    CHECK(plan["schedule"][0]["counts"]["arxiv"] == 1);
    CHECK(plan["schedule"][0]["counts"]["code"] == 1);

    // report.json carries no timings, so reruns can be byte-identical
    CHECK(util::read_file(m.out_dir / "report.json").find("milliseconds") == std::string::npos);
}

TEST_CASE("stage failure aborts with the stage name and removes its outputs") {
    auto m = fixture_manifest("fail");
    m.stages = {"signals"};
    m.signals.template_bank = m.signals.template_bank.parent_path() / "missing_bank.json";
    try {
        pipeline::run_pipeline(m);
        FAIL("expected PipelineError");
    } catch (const pipeline::PipelineError& e) {
        CHECK(e.stage() == "signals");
    }
    CHECK(!std::filesystem::exists(m.out_dir / "signals" / "tuples.jsonl"));
}

TEST_CASE("plan errors when a source exhausts its blocks") {
    auto m = fixture_manifest("exhaust");
    m.num_batches = 100000;
    try {
        pipeline::run_pipeline(m);
        FAIL("expected PipelineError");
    } catch (const pipeline::PipelineError& e) {
        CHECK(e.stage() == "plan");
        CHECK(std::string(e.what()).find("exhausted") != std::string::npos);
    }
}

TEST_CASE("parallel ingest produces the same report as serial") {
    auto serial = fixture_manifest("jobs1");
    serial.stages = {"ingest", "emit", "link"};
    auto parallel = fixture_manifest("jobs4");
    parallel.stages = {"ingest", "emit", "link"};
    parallel.jobs = 4;
    auto a = pipeline::run_pipeline(serial);
    auto b = pipeline::run_pipeline(parallel);
    CHECK(util::read_file(serial.out_dir / "link" / "pairs.jsonl") ==
          util::read_file(parallel.out_dir / "link" / "pairs.jsonl"));
    CHECK(util::read_file(serial.out_dir / "md" / "golden_01.md") ==
          util::read_file(parallel.out_dir / "md" / "golden_01.md"));
}

TEST_CASE("stats table renders the reported scale numbers") {
    std::vector<corpus::SourceStats> stats = {
        {"geocorpus", 5548479, 52721798004ULL, 25743070, 0, 2048},
        {"arxiv", 742835, 13704981558ULL, 6691886, 0, 2048},
        {"code", 3456887, 12424652670ULL, 6066725, 0, 2048},
    };
    std::string table = pipeline::format_stats_table(stats, {8, 1, 1});
    CHECK(table.find("38,501,681") != std::string::npos);
    CHECK(table.find("78,851,432,232") != std::string::npos);
    CHECK(table.find("9,748,201") != std::string::npos);
    CHECK(table.find("80%") != std::string::npos);
    CHECK(table.find("10%") != std::string::npos);
    CHECK(table.find("#blockNum") != std::string::npos);

    // single empty source renders a zero row; totals equal column sums
    std::string zeros = pipeline::format_stats_table({{"geocorpus", 0, 0, 0, 0, 0}}, {1});
    CHECK(zeros.find("geocorpus") != std::string::npos);
    std::string two = pipeline::format_stats_table(
        {{"a", 1, 10, 2, 0, 4}, {"b", 2, 20, 3, 0, 4}}, {1, 1});
    CHECK(two.find("30") != std::string::npos);  // token total
    CHECK(two.find("5") != std::string::npos);   // block total
}

TEST_CASE("estimate_emissions is the three-way product with domain checks") {
    CHECK(pipeline::estimate_emissions(0.0, 123.0, 456.0) == 0.0);
    CHECK(pipeline::estimate_emissions(10.0, 0.5, 0.4) == doctest::Approx(2.0));
    CHECK_THROWS_AS(pipeline::estimate_emissions(-1.0, 1.0, 1.0), std::invalid_argument);

    // the reported total back-solves to a combined factor near 0.14246 kg/h
    double combined = 212000.0 / 1488137.26;
    CHECK(combined == doctest::Approx(0.14246).epsilon(0.001));
    double kg = pipeline::estimate_emissions(1488137.26, 1.0, 0.14246);
    CHECK(kg == doctest::Approx(212000.0).epsilon(0.005));
}
