#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "geoforge/pipeline.hpp"
#include "geoforge/util.hpp"

namespace {

struct CommonArgs {
    std::string manifest;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> jobs;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--manifest", args.manifest, "Pipeline manifest (JSON)")->required();
    cmd->add_option("--out", args.out, "Override the manifest's output directory");
    cmd->add_option("--seed", args.seed, "Override the manifest's seed");
    cmd->add_option("--jobs", args.jobs, "Worker threads for document stages");
}

int run_stages(const CommonArgs& args, const std::vector<std::string>& stages) {
    geoforge::pipeline::Manifest manifest =
        geoforge::pipeline::load_manifest(args.manifest);
    if (!stages.empty()) {
        manifest.stages = stages;
    }
    if (!args.out.empty()) {
        manifest.out_dir = args.out;
    }
    if (args.seed) {
        manifest.seed = *args.seed;
    }
    if (args.jobs) {
        manifest.jobs = *args.jobs;
    }
    geoforge::pipeline::RunReport report = geoforge::pipeline::run_pipeline(manifest);
    std::cout << geoforge::pipeline::report_table(report);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Deterministic training-data pipeline: special-token Markdown, caption pairs, "
                 "token blocks, batch plans, instruction pairs, and loss-masked tool traces"};
    app.require_subcommand(1);

    CommonArgs run_args;
    CLI::App* run_cmd = app.add_subcommand("run", "Run every stage enabled in the manifest");
    add_common(run_cmd, run_args);

    std::map<std::string, CommonArgs> stage_args;
    std::map<std::string, CLI::App*> stage_cmds;
    for (const std::string& stage : geoforge::pipeline::all_stages()) {
        CLI::App* cmd = app.add_subcommand(stage, "Run only the '" + stage + "' stage");
        add_common(cmd, stage_args[stage]);
        stage_cmds[stage] = cmd;
    }

    std::string report_path;
    double hours = -1.0;
    double tdp = -1.0;
    double intensity = -1.0;
    CLI::App* stats_cmd =
        app.add_subcommand("stats", "Print the per-source corpus table from a run report");
    stats_cmd->add_option("--report", report_path, "report.json produced by a pipeline run");
    stats_cmd->add_option("--emissions-hours", hours, "Accelerator hours consumed");
    stats_cmd->add_option("--emissions-tdp", tdp, "Accelerator TDP in kW");
    stats_cmd->add_option("--emissions-intensity", intensity, "Carbon intensity in kg/kWh");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run_cmd->parsed()) {
            return run_stages(run_args, {});
        }
        for (const auto& [stage, cmd] : stage_cmds) {
            if (cmd->parsed()) {
                return run_stages(stage_args[stage], {stage});
            }
        }
        if (stats_cmd->parsed()) {
            if (!report_path.empty()) {
                nlohmann::json report =
                    nlohmann::json::parse(geoforge::util::read_file(report_path));
                std::vector<geoforge::corpus::SourceStats> stats;
                std::vector<double> ratios;
                for (const auto& s : report.at("sources")) {
                    stats.push_back(geoforge::corpus::stats_from_json(s));
                    ratios.push_back(s.value("ratio", 0.0));
                }
                std::cout << geoforge::pipeline::format_stats_table(stats, ratios);
            }
            if (hours >= 0.0 || tdp >= 0.0 || intensity >= 0.0) {
                double kg = geoforge::pipeline::estimate_emissions(hours, tdp, intensity);
                std::cout << "emissions: " << kg << " kg CO2 (" << kg / 1000.0 << " tCO2eq)\n";
            }
            return 0;
        }
    } catch (const geoforge::pipeline::PipelineError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
