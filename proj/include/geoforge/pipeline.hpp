#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "geoforge/corpus_builder.hpp"

namespace geoforge::pipeline {

class PipelineError : public std::runtime_error {
public:
    PipelineError(const std::string& stage, const std::string& message)
        : std::runtime_error("stage '" + stage + "': " + message), stage_(stage) {}
    const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

class ManifestError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct SourceSpec {
    std::string name;
    std::string kind;  // tei | text | jsonl
    std::filesystem::path path;
    double ratio = 0.0;
};

struct SignalsSpec {
    bool configured = false;
    std::filesystem::path template_bank;
    std::filesystem::path knowledge_dir;
    std::filesystem::path wiki_dir;
};

struct TracesSpec {
    bool configured = false;
    std::filesystem::path traces_path;
    std::filesystem::path tools_path;
    std::size_t max_length = 2048;
};

inline const std::vector<std::string>& all_stages() {
    static const std::vector<std::string> stages = {"ingest", "emit",  "link", "signals",
                                                    "blocks", "plan", "mask"};
    return stages;
}

struct Manifest {
    std::filesystem::path out_dir;
    std::uint64_t seed = 0;
    std::size_t block_size = 2048;
    std::uint64_t global_batch = 10;
    std::uint64_t num_batches = 1;
    std::size_t min_counterpart_len = 20;
    unsigned jobs = 1;
    std::vector<std::string> stages = all_stages();
    std::vector<SourceSpec> sources;
    SignalsSpec signals;
    TracesSpec traces;
    nlohmann::ordered_json echo;  // the manifest as loaded, for the report

    bool stage_enabled(const std::string& name) const;
};

// Reads a manifest JSON; relative paths resolve against the manifest's
// directory. Throws ManifestError on structural problems.
Manifest load_manifest(const std::filesystem::path& path);

// Full validation before any work: positive ratios, block_size >= 2, every
// enabled stage's inputs declared.
void validate_manifest(const Manifest& manifest);

struct StageOutcome {
    std::string name;
    double milliseconds = 0.0;  // console only, never serialized
    std::uint64_t outputs = 0;
};

struct RunReport {
    nlohmann::ordered_json config_echo;
    std::vector<corpus::SourceStats> source_stats;
    std::vector<double> source_ratios;
    std::map<std::string, std::uint64_t> counts;
    std::vector<std::string> warnings;
    std::vector<StageOutcome> stages;
};

// Executes the enabled stages in dependency order, writing outputs atomically
// under out_dir. A stage failure removes that stage's partial outputs and
// surfaces as PipelineError naming the stage.
RunReport run_pipeline(const Manifest& manifest);

// Deterministic serialization: wall-clock timings are deliberately excluded
// so identical runs produce identical bytes.
nlohmann::ordered_json report_to_json(const RunReport& report);

// Human-readable run summary including per-stage timings.
std::string report_table(const RunReport& report);

// The per-source corpus table: #blockNum, #tokenNum, #itemNum, #batchRatio
// columns plus a totals row of exact column sums.
std::string format_stats_table(const std::vector<corpus::SourceStats>& stats,
                               const std::vector<double>& ratios);

// accelerator_hours * tdp_kw * intensity_kg_per_kwh, in kg CO2.
double estimate_emissions(double accelerator_hours, double tdp_kw, double intensity_kg_per_kwh);

}  // namespace geoforge::pipeline
