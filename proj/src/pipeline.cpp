#include "geoforge/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include "geoforge/caption_linker.hpp"
#include "geoforge/doc_model.hpp"
#include "geoforge/md_emitter.hpp"
#include "geoforge/signal_forge.hpp"
#include "geoforge/tool_trace.hpp"
#include "geoforge/util.hpp"

namespace geoforge::pipeline {

bool Manifest::stage_enabled(const std::string& name) const {
    return std::find(stages.begin(), stages.end(), name) != stages.end();
}

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& value) {
    std::filesystem::path p(value);
    return p.is_absolute() ? p : base / p;
}

}  // namespace

Manifest load_manifest(const std::filesystem::path& path) {
    nlohmann::ordered_json j;
    try {
        j = nlohmann::ordered_json::parse(util::read_file(path));
    } catch (const std::exception& e) {
        throw ManifestError("cannot read manifest " + path.string() + ": " + e.what());
    }
    const std::filesystem::path base = path.has_parent_path()
                                           ? path.parent_path()
                                           : std::filesystem::path(".");

    Manifest m;
    m.echo = j;
    if (!j.contains("out_dir") || !j["out_dir"].is_string()) {
        throw ManifestError("manifest needs an 'out_dir' string");
    }
    m.out_dir = resolve(base, j["out_dir"].get<std::string>());
    m.seed = j.value("seed", std::uint64_t{0});
    m.block_size = j.value("block_size", std::size_t{2048});
    m.global_batch = j.value("global_batch", std::uint64_t{10});
    m.num_batches = j.value("num_batches", std::uint64_t{1});
    m.min_counterpart_len = j.value("min_counterpart_len", std::size_t{20});
    m.jobs = j.value("jobs", 1u);
    if (j.contains("stages")) {
        m.stages = j["stages"].get<std::vector<std::string>>();
    }

    std::map<std::string, double> ratios;
    if (j.contains("ratios")) {
        for (const auto& [name, value] : j["ratios"].items()) {
            ratios[name] = value.get<double>();
        }
    } else {
        // default mixing weights for the canonical sources
        ratios = {{corpus::kSourceGeocorpus, 8.0},
                  {corpus::kSourceArxiv, 1.0},
                  {corpus::kSourceCode, 1.0}};
    }
    if (j.contains("sources")) {
        for (const auto& s : j["sources"]) {
            SourceSpec spec;
            spec.name = s.at("name").get<std::string>();
            spec.kind = s.at("kind").get<std::string>();
            spec.path = resolve(base, s.at("path").get<std::string>());
            auto it = ratios.find(spec.name);
            spec.ratio = it != ratios.end() ? it->second : 0.0;
            m.sources.push_back(std::move(spec));
        }
    }
    if (j.contains("signals")) {
        const auto& s = j["signals"];
        m.signals.configured = true;
        m.signals.template_bank = resolve(base, s.at("template_bank").get<std::string>());
        if (s.contains("knowledge_dir")) {
            m.signals.knowledge_dir = resolve(base, s["knowledge_dir"].get<std::string>());
        }
        if (s.contains("wiki_dir")) {
            m.signals.wiki_dir = resolve(base, s["wiki_dir"].get<std::string>());
        }
    }
    if (j.contains("traces")) {
        const auto& t = j["traces"];
        m.traces.configured = true;
        m.traces.traces_path = resolve(base, t.at("traces_path").get<std::string>());
        m.traces.tools_path = resolve(base, t.at("tools_path").get<std::string>());
        m.traces.max_length = t.value("max_length", std::size_t{2048});
    }
    return m;
}

void validate_manifest(const Manifest& manifest) {
    if (manifest.block_size < 2) {
        throw ManifestError("block_size must be at least 2");
    }
    for (const std::string& stage : manifest.stages) {
        if (std::find(all_stages().begin(), all_stages().end(), stage) == all_stages().end()) {
            throw ManifestError("unknown stage '" + stage + "'");
        }
    }
    bool needs_docs = manifest.stage_enabled("ingest") || manifest.stage_enabled("emit") ||
                      manifest.stage_enabled("link");
    bool has_tei = std::any_of(manifest.sources.begin(), manifest.sources.end(),
                               [](const SourceSpec& s) { return s.kind == "tei"; });
    if (needs_docs && !has_tei) {
        throw ManifestError("ingest/emit/link stages need a source with kind 'tei'");
    }
    if ((manifest.stage_enabled("blocks") || manifest.stage_enabled("plan")) &&
        manifest.sources.empty()) {
        throw ManifestError("blocks/plan stages need declared sources");
    }
    for (const SourceSpec& source : manifest.sources) {
        if (source.kind != "tei" && source.kind != "text" && source.kind != "jsonl") {
            throw ManifestError("source '" + source.name + "' has unknown kind '" + source.kind +
                                "'");
        }
        if (manifest.stage_enabled("plan") && !(source.ratio > 0.0)) {
            throw ManifestError("source '" + source.name +
                                "' needs a positive ratio for batch planning");
        }
    }
    if (manifest.stage_enabled("plan") && manifest.global_batch < manifest.sources.size()) {
        throw ManifestError("global_batch must be at least the number of sources");
    }
    if (manifest.stage_enabled("signals") && !manifest.signals.configured) {
        throw ManifestError("signals stage enabled but no signals inputs declared");
    }
    if (manifest.stage_enabled("mask") && !manifest.traces.configured) {
        throw ManifestError("mask stage enabled but no traces inputs declared");
    }
}

namespace {

std::vector<std::filesystem::path> list_files(const std::filesystem::path& dir,
                                              std::string_view extension) {
    std::vector<std::filesystem::path> files;
    if (!std::filesystem::exists(dir)) {
        return files;
    }
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == extension) {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    return files;
}

// Tracks the files a stage writes so a failure can remove partial output.
class StageGuard {
public:
    explicit StageGuard(std::string name) : name_(std::move(name)) {}

    void write(const std::filesystem::path& path, std::string_view content) {
        std::filesystem::create_directories(path.parent_path());
        util::write_file_atomic(path, content);
        written_.push_back(path);
    }

    void rollback() {
        for (const auto& path : written_) {
            std::error_code ec;
            std::filesystem::remove(path, ec);
        }
    }

    std::uint64_t outputs() const { return written_.size(); }
    const std::string& name() const { return name_; }

private:
    std::string name_;
    std::vector<std::filesystem::path> written_;
};

struct IngestedDoc {
    std::string source;
    std::string doc_id;
    doc::StructuredDocument document;
    std::vector<doc::ParseWarning> warnings;
    std::vector<doc::Violation> violations;
    md::EmitResult emitted;
};

// Document-level fan-out; results land at their input index so output order
// never depends on scheduling.
template <typename Fn>
void parallel_for(std::size_t count, unsigned jobs, Fn&& fn) {
    if (count == 0) {
        return;
    }
    unsigned workers = std::max(1u, jobs);
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, count));
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) {
            fn(i);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                while (true) {
                    std::size_t i = next.fetch_add(1);
                    if (i >= count) {
                        return;
                    }
                    fn(i);
                }
            } catch (...) {
                errors[w] = std::current_exception();
                next.store(count);
            }
        });
    }
    for (auto& t : pool) {
        t.join();
    }
    for (const auto& error : errors) {
        if (error) {
            std::rethrow_exception(error);
        }
    }
}

class Runner {
public:
    Runner(const Manifest& manifest) : manifest_(manifest) {}

    RunReport run() {
        validate_manifest(manifest_);
        std::filesystem::create_directories(manifest_.out_dir);

        report_.config_echo = manifest_.echo;

        bool needs_docs = manifest_.stage_enabled("ingest") || manifest_.stage_enabled("emit") ||
                          manifest_.stage_enabled("link") || needs_geocorpus_records();
        if (needs_docs) {
            load_documents();
        }

        stage("ingest", [this](StageGuard& guard) { run_ingest(guard); });
        stage("emit", [this](StageGuard& guard) { run_emit(guard); });
        stage("link", [this](StageGuard& guard) { run_link(guard); });
        stage("signals", [this](StageGuard& guard) { run_signals(guard); });
        stage("blocks", [this](StageGuard& guard) { run_blocks(guard); });
        stage("plan", [this](StageGuard& guard) { run_plan(guard); });
        stage("mask", [this](StageGuard& guard) { run_mask(guard); });

        write_report();
        return report_;
    }

private:
    bool needs_geocorpus_records() const {
        if (!manifest_.stage_enabled("blocks") && !manifest_.stage_enabled("plan")) {
            return false;
        }
        return std::any_of(manifest_.sources.begin(), manifest_.sources.end(),
                           [](const SourceSpec& s) { return s.kind == "tei"; });
    }

    template <typename Fn>
    void stage(const std::string& name, Fn&& body) {
        if (!manifest_.stage_enabled(name)) {
            return;
        }
        StageGuard guard(name);
        auto begin = std::chrono::steady_clock::now();
        try {
            body(guard);
        } catch (const std::exception& e) {
            guard.rollback();
            throw PipelineError(name, e.what());
        }
        auto end = std::chrono::steady_clock::now();
        double ms = std::chrono::duration<double, std::milli>(end - begin).count();
        report_.stages.push_back({name, ms, guard.outputs()});
    }

    void load_documents() {
        for (const SourceSpec& source : manifest_.sources) {
            if (source.kind != "tei") {
                continue;
            }
            std::vector<std::filesystem::path> files = list_files(source.path, ".xml");
            std::size_t offset = docs_.size();
            docs_.resize(offset + files.size());
            parallel_for(files.size(), manifest_.jobs, [&](std::size_t i) {
                IngestedDoc item;
                item.source = source.name;
                item.doc_id = files[i].stem().string();
                doc::ParseResult parsed =
                    doc::parse_structured_xml(util::read_file(files[i]), item.doc_id);
                item.document = std::move(parsed.document);
                item.warnings = std::move(parsed.warnings);
                item.violations = doc::validate_document(item.document);
                if (item.violations.empty()) {
                    item.emitted = md::emit_markdown(item.document);
                }
                docs_[offset + i] = std::move(item);
            });
        }
        for (const IngestedDoc& item : docs_) {
            for (const auto& warning : item.warnings) {
                report_.warnings.push_back(item.doc_id + ": skipped <" + warning.element +
                                           "> (line " + std::to_string(warning.line) + "): " +
                                           warning.message);
            }
            for (const auto& violation : item.violations) {
                report_.warnings.push_back(item.doc_id + ": invariant " + violation.invariant +
                                           " violated at " + violation.element);
            }
        }
        report_.counts["documents"] = docs_.size();
    }

    void run_ingest(StageGuard& guard) {
        for (const IngestedDoc& item : docs_) {
            nlohmann::ordered_json j;
            j["doc_id"] = item.doc_id;
            j["stats"] = doc::stats_to_json(doc::document_stats(item.document));
            j["violations"] = doc::violations_to_json(item.violations);
            nlohmann::json warnings = nlohmann::json::array();
            for (const auto& w : item.warnings) {
                warnings.push_back({{"element", w.element},
                                    {"line", w.line},
                                    {"element_count", w.element_count},
                                    {"message", w.message}});
            }
            j["warnings"] = warnings;
            guard.write(manifest_.out_dir / "ingest" / (item.doc_id + ".json"),
                        j.dump(2) + "\n");
        }
    }

    void run_emit(StageGuard& guard) {
        std::uint64_t fallbacks = 0;
        std::uint64_t written = 0;
        for (const IngestedDoc& item : docs_) {
            if (!item.violations.empty()) {
                report_.warnings.push_back(item.doc_id + ": not emitted (validation failed)");
                continue;
            }
            guard.write(manifest_.out_dir / "md" / (item.doc_id + ".md"), item.emitted.output.text);
            guard.write(manifest_.out_dir / "md" / (item.doc_id + ".spans.json"),
                        md::spans_to_json(item.emitted.output).dump(2) + "\n");
            fallbacks += item.emitted.citation_fallbacks;
            ++written;
        }
        report_.counts["md_files"] = written;
        report_.counts["citation_fallbacks"] = fallbacks;
    }

    void run_link(StageGuard& guard) {
        link::LinkOptions options;
        options.min_counterpart_len = manifest_.min_counterpart_len;
        std::string out;
        std::uint64_t pairs = 0;
        for (const IngestedDoc& item : docs_) {
            link::LinkResult result = link::link_captions_detailed(item.document, options);
            for (const auto& pair : result.pairs) {
                out += link::pair_to_json(pair).dump();
                out += '\n';
                ++pairs;
            }
        }
        guard.write(manifest_.out_dir / "link" / "pairs.jsonl", out);
        report_.counts["caption_pairs"] = pairs;
    }

    void run_signals(StageGuard& guard) {
        signal::TemplateBank bank = signal::load_template_bank(manifest_.signals.template_bank);

        std::vector<signal::SignalTuple> tuples;
        for (const auto& file : list_files(manifest_.signals.knowledge_dir, ".json")) {
            nlohmann::json raw = nlohmann::json::parse(util::read_file(file));
            signal::SchemaKind kind =
                signal::schema_kind_from_string(raw.at("schema_kind").get<std::string>());
            signal::KnowledgeRecord record = signal::normalize_knowledge(raw, kind);
            for (auto& tuple : signal::record_to_tuples(record)) {
                tuples.push_back(std::move(tuple));
            }
        }
        for (const auto& file : list_files(manifest_.signals.wiki_dir, ".json")) {
            nlohmann::json raw = nlohmann::json::parse(util::read_file(file));
            std::vector<signal::WikiSectionTriple> triples;
            for (const auto& s : raw.value("sections", nlohmann::json::array())) {
                triples.push_back({s.at("level").get<int>(), s.at("title").get<std::string>(),
                                   s.at("paragraph").get<std::string>()});
            }
            signal::WikiTuples wiki = signal::wiki_sections_to_tuples(
                triples, raw.value("abstract", ""), raw.value("title", ""));
            for (const auto& warning : wiki.warnings) {
                report_.warnings.push_back("signals: " + warning);
            }
            for (auto& tuple : wiki.tuples) {
                tuples.push_back(std::move(tuple));
            }
        }

        std::string tuples_out;
        for (const auto& tuple : tuples) {
            nlohmann::ordered_json j;
            j["family"] = tuple.family;
            j["bindings"] = tuple.bindings;
            j["provenance"] = tuple.provenance;
            tuples_out += j.dump();
            tuples_out += '\n';
        }
        guard.write(manifest_.out_dir / "signals" / "tuples.jsonl", tuples_out);

        // Families without bundled templates (e.g. the wiki summary row) stay
        // tuples-only.
        std::vector<signal::SignalTuple> renderable;
        std::uint64_t unrendered = 0;
        for (const auto& tuple : tuples) {
            if (bank.families.count(tuple.family) != 0) {
                renderable.push_back(tuple);
            } else {
                ++unrendered;
            }
        }
        signal::DatasetResult dataset =
            signal::generate_signal_dataset(renderable, bank, manifest_.seed);
        for (const auto& error : dataset.errors) {
            report_.warnings.push_back("signals: tuple " + std::to_string(error.tuple_index) +
                                       ": " + error.message);
        }
        guard.write(manifest_.out_dir / "signals" / "pairs.jsonl",
                    signal::dataset_to_jsonl(dataset.pairs));
        report_.counts["signal_tuples"] = tuples.size();
        report_.counts["signal_pairs"] = dataset.pairs.size();
        report_.counts["signal_tuples_unrendered"] = unrendered;
    }

    std::vector<std::string> source_records(const SourceSpec& source) {
        std::vector<std::string> records;
        if (source.kind == "tei") {
            for (const IngestedDoc& item : docs_) {
                if (item.source == source.name && item.violations.empty()) {
                    records.push_back(item.emitted.output.text);
                }
            }
        } else if (source.kind == "text") {
            for (const auto& file : list_files(source.path, ".txt")) {
                records.push_back(util::read_file(file));
            }
        } else {
            for (const auto& file : list_files(source.path, ".jsonl")) {
                std::ifstream in(file);
                std::string line;
                while (std::getline(in, line)) {
                    if (line.empty()) {
                        continue;
                    }
                    records.push_back(
                        nlohmann::json::parse(line).at("text").get<std::string>());
                }
            }
        }
        return records;
    }

    void run_blocks(StageGuard& guard) {
        // One shared vocabulary, sources in manifest order, records in file
        // order: the block stream is a pure function of the inputs.
        corpus::ReferenceTokenizer tokenizer;
        std::uint64_t total_blocks = 0;
        for (const SourceSpec& source : manifest_.sources) {
            corpus::BuildResult built = corpus::build_blocks(
                source_records(source), source.name, tokenizer, manifest_.block_size);
            guard.write(manifest_.out_dir / "blocks" / (source.name + ".jsonl"),
                        corpus::blocks_to_jsonl(built.blocks));
            guard.write(manifest_.out_dir / "blocks" / (source.name + ".stats.json"),
                        corpus::stats_to_json(built.stats).dump(2) + "\n");
            report_.source_stats.push_back(built.stats);
            report_.source_ratios.push_back(source.ratio);
            total_blocks += built.stats.block_num;
        }
        report_.counts["blocks"] = total_blocks;
    }

    void run_plan(StageGuard& guard) {
        if (report_.source_stats.empty()) {
            // plan without the blocks stage enabled: compute stats in memory
            corpus::ReferenceTokenizer tokenizer;
            for (const SourceSpec& source : manifest_.sources) {
                corpus::BuildResult built = corpus::build_blocks(
                    source_records(source), source.name, tokenizer, manifest_.block_size);
                report_.source_stats.push_back(built.stats);
                report_.source_ratios.push_back(source.ratio);
            }
        }
        std::vector<double> weights;
        for (const SourceSpec& source : manifest_.sources) {
            weights.push_back(source.ratio);
        }
        corpus::BatchPlan plan =
            corpus::plan_batches(report_.source_stats, weights, manifest_.global_batch,
                                 manifest_.num_batches, manifest_.seed);
        guard.write(manifest_.out_dir / "plan.json", corpus::serialize_plan(plan));
        report_.counts["planned_batches"] = plan.num_batches;
    }

    void run_mask(StageGuard& guard) {
        std::vector<trace::ToolDescriptor> tools = trace::tools_from_json(
            nlohmann::json::parse(util::read_file(manifest_.traces.tools_path)));
        corpus::ReferenceTokenizer tokenizer;
        trace::MaskOptions options;
        options.max_length = manifest_.traces.max_length;

        std::ifstream in(manifest_.traces.traces_path);
        if (!in) {
            throw std::runtime_error("cannot open traces file: " +
                                     manifest_.traces.traces_path.string());
        }
        std::string line;
        std::string out;
        std::uint64_t samples = 0;
        while (std::getline(in, line)) {
            if (line.empty()) {
                continue;
            }
            trace::ToolTrace t = trace::trace_from_json(nlohmann::json::parse(line));
            std::string prompt = trace::render_tool_prompt(tools, t.question);
            trace::MaskedSample sample = trace::compute_loss_mask(prompt, t, tokenizer, options);
            out += trace::masked_to_json(sample).dump();
            out += '\n';
            ++samples;
        }
        guard.write(manifest_.out_dir / "masks.jsonl", out);
        report_.counts["masked_samples"] = samples;
    }

    void write_report() {
        util::write_file_atomic(manifest_.out_dir / "report.json",
                                report_to_json(report_).dump(2) + "\n");
    }

    const Manifest& manifest_;
    std::vector<IngestedDoc> docs_;
    RunReport report_;
};

}  // namespace

RunReport run_pipeline(const Manifest& manifest) {
    Runner runner(manifest);
    return runner.run();
}

nlohmann::ordered_json report_to_json(const RunReport& report) {
    nlohmann::ordered_json j;
    j["config"] = report.config_echo;
    j["sources"] = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < report.source_stats.size(); ++i) {
        nlohmann::ordered_json s;
        const auto& stats = report.source_stats[i];
        s["source"] = stats.source;
        s["item_num"] = stats.item_num;
        s["token_num"] = stats.token_num;
        s["block_num"] = stats.block_num;
        s["dropped_tokens"] = stats.dropped_tokens;
        s["block_size"] = stats.block_size;
        s["ratio"] = i < report.source_ratios.size() ? report.source_ratios[i] : 0.0;
        j["sources"].push_back(std::move(s));
    }
    j["counts"] = report.counts;
    j["warnings"] = report.warnings;
    nlohmann::ordered_json stages = nlohmann::ordered_json::array();
    for (const StageOutcome& stage : report.stages) {
        stages.push_back({{"name", stage.name}, {"outputs", stage.outputs}});
    }
    j["stages"] = stages;
    return j;
}

namespace {

std::string format_ratio(double ratio, double total) {
    if (!(total > 0.0)) {
        return "-";
    }
    double pct = ratio / total * 100.0;
    double rounded = std::round(pct);
    std::ostringstream out;
    if (std::abs(pct - rounded) < 1e-9) {
        out << static_cast<long long>(rounded) << "%";
    } else {
        out.setf(std::ios::fixed);
        out.precision(1);
        out << pct << "%";
    }
    return out.str();
}

}  // namespace

std::string format_stats_table(const std::vector<corpus::SourceStats>& stats,
                               const std::vector<double>& ratios) {
    std::vector<std::vector<std::string>> rows;
    rows.push_back({"Dataset", "#blockNum", "#tokenNum", "#itemNum", "#batchRatio"});

    double ratio_total = 0.0;
    for (double r : ratios) {
        ratio_total += r;
    }

    std::uint64_t blocks = 0;
    std::uint64_t tokens = 0;
    std::uint64_t items = 0;
    for (std::size_t i = 0; i < stats.size(); ++i) {
        const auto& s = stats[i];
        blocks += s.block_num;
        tokens += s.token_num;
        items += s.item_num;
        rows.push_back({s.source, util::with_commas(s.block_num), util::with_commas(s.token_num),
                        util::with_commas(s.item_num),
                        i < ratios.size() ? format_ratio(ratios[i], ratio_total) : "-"});
    }
    rows.push_back({"Total", util::with_commas(blocks), util::with_commas(tokens),
                    util::with_commas(items), "-"});

    std::vector<std::size_t> widths(rows.front().size(), 0);
    for (const auto& row : rows) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            widths[c] = std::max(widths[c], row[c].size());
        }
    }
    std::string out;
    for (const auto& row : rows) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (c != 0) {
                out += "  ";
            }
            out += row[c];
            out.append(widths[c] - row[c].size(), ' ');
        }
        while (!out.empty() && out.back() == ' ') {
            out.pop_back();
        }
        out += '\n';
    }
    return out;
}

std::string report_table(const RunReport& report) {
    std::string out;
    if (!report.source_stats.empty()) {
        out += format_stats_table(report.source_stats, report.source_ratios);
        out += '\n';
    }
    out += "Stages:\n";
    for (const StageOutcome& stage : report.stages) {
        std::ostringstream line;
        line.setf(std::ios::fixed);
        line.precision(1);
        line << "  " << stage.name << ": " << stage.outputs << " outputs, "
             << stage.milliseconds << " ms\n";
        out += line.str();
    }
    out += "Counts:\n";
    for (const auto& [key, value] : report.counts) {
        out += "  " + key + ": " + std::to_string(value) + "\n";
    }
    if (!report.warnings.empty()) {
        out += "Warnings: " + std::to_string(report.warnings.size()) + "\n";
    }
    return out;
}

double estimate_emissions(double accelerator_hours, double tdp_kw, double intensity_kg_per_kwh) {
    if (accelerator_hours < 0.0 || tdp_kw < 0.0 || intensity_kg_per_kwh < 0.0) {
        throw std::invalid_argument("emission factors must be non-negative");
    }
    return accelerator_hours * tdp_kw * intensity_kg_per_kwh;
}

}  // namespace geoforge::pipeline
