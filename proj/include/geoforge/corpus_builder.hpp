#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "geoforge/tokenizer.hpp"

namespace geoforge::corpus {

// Canonical source order; ties in apportionment break in this order.
inline constexpr const char* kSourceGeocorpus = "geocorpus";
inline constexpr const char* kSourceArxiv = "arxiv";
inline constexpr const char* kSourceCode = "code";

struct TokenBlock {
    std::string source;
    std::vector<TokenId> ids;       // exactly block_size entries
    std::size_t first_record = 0;   // records contributing tokens to this block
    std::size_t last_record = 0;
};

struct SourceStats {
    std::string source;
    std::uint64_t item_num = 0;
    std::uint64_t token_num = 0;  // includes the per-record eos markers
    std::uint64_t block_num = 0;
    std::uint64_t dropped_tokens = 0;
    std::uint64_t block_size = 0;
};

class CorpusError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// encode(text) with the eos id appended; every record ends with eos.
std::vector<TokenId> tokenize_record(std::string_view text, Tokenizer& tokenizer);

struct BuildResult {
    std::vector<TokenBlock> blocks;
    SourceStats stats;
    std::vector<TokenId> stream;  // the concatenated token stream the blocks slice
};

// Concatenates per-record token streams in order and slices consecutive
// non-overlapping block_size windows; the final partial window is dropped.
BuildResult build_blocks(const std::vector<std::string>& records, const std::string& source,
                         Tokenizer& tokenizer, std::size_t block_size);

// True iff the blocks reproduce a prefix of the stream and the leftover is
// shorter than one block.
bool verify_blocks(const std::vector<TokenBlock>& blocks, std::span<const TokenId> stream,
                   std::size_t block_size);

// Largest-remainder apportionment of `total` seats over the weights; ties on
// equal remainders go to the earlier source.
std::vector<std::uint64_t> apportion(const std::vector<double>& weights, std::uint64_t total);

struct PlanSource {
    std::string name;
    double weight = 0.0;
    std::uint64_t per_batch = 0;
    std::uint64_t available_blocks = 0;
    std::uint64_t order_seed = 0;  // seeds the within-source shuffle
};

struct BatchCounts {
    std::uint64_t batch_index = 0;
    std::vector<std::uint64_t> counts;  // aligned with BatchPlan::sources
};

struct BatchPlan {
    std::uint64_t global_batch = 0;
    std::uint64_t num_batches = 0;
    std::uint64_t seed = 0;
    std::vector<PlanSource> sources;
    std::vector<BatchCounts> schedule;
};

// Fails when a source would run out of blocks before num_batches, naming the
// source and the first batch it cannot fill.
BatchPlan plan_batches(const std::vector<SourceStats>& stats, const std::vector<double>& weights,
                       std::uint64_t global_batch, std::uint64_t num_batches, std::uint64_t seed);

// Materializes the seeded within-source consumption order (a permutation of
// the source's block indices). Pure function of the plan.
std::vector<std::uint32_t> source_block_order(const BatchPlan& plan, const std::string& source);

nlohmann::ordered_json plan_to_json(const BatchPlan& plan);
std::string serialize_plan(const BatchPlan& plan);

nlohmann::json stats_to_json(const SourceStats& stats);
SourceStats stats_from_json(const nlohmann::json& j);

// Block files: JSONL (one object per block) or raw little-endian u32 frames
// with a JSON sidecar; bit-exact layouts in docs/formats.md.
std::string blocks_to_jsonl(const std::vector<TokenBlock>& blocks);
void write_blocks_jsonl(const std::filesystem::path& path, const std::vector<TokenBlock>& blocks);
std::vector<TokenBlock> read_blocks_jsonl(const std::filesystem::path& path);
void write_blocks_binary(const std::filesystem::path& bin_path,
                         const std::filesystem::path& sidecar_path,
                         const std::vector<TokenBlock>& blocks, std::size_t block_size);
std::vector<TokenBlock> read_blocks_binary(const std::filesystem::path& bin_path,
                                           const std::filesystem::path& sidecar_path);

}  // namespace geoforge::corpus
