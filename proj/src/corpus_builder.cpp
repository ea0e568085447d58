#include "geoforge/corpus_builder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "geoforge/util.hpp"

namespace geoforge::corpus {

std::vector<TokenId> tokenize_record(std::string_view text, Tokenizer& tokenizer) {
    std::vector<TokenId> ids = tokenizer.encode(text);
    ids.push_back(tokenizer.eos_id());
    return ids;
}

BuildResult build_blocks(const std::vector<std::string>& records, const std::string& source,
                         Tokenizer& tokenizer, std::size_t block_size) {
    if (block_size < 2) {
        throw CorpusError("block_size must be at least 2");
    }

    BuildResult result;
    result.stats.source = source;
    result.stats.block_size = block_size;
    result.stats.item_num = records.size();

    // record_of[i] = index of the record that produced stream token i.
    std::vector<std::size_t> record_of;
    for (std::size_t r = 0; r < records.size(); ++r) {
        std::vector<TokenId> ids = tokenize_record(records[r], tokenizer);
        record_of.insert(record_of.end(), ids.size(), r);
        result.stream.insert(result.stream.end(), ids.begin(), ids.end());
    }
    result.stats.token_num = result.stream.size();

    std::size_t full_blocks = result.stream.size() / block_size;
    for (std::size_t b = 0; b < full_blocks; ++b) {
        TokenBlock block;
        block.source = source;
        std::size_t begin = b * block_size;
        block.ids.assign(result.stream.begin() + static_cast<std::ptrdiff_t>(begin),
                         result.stream.begin() + static_cast<std::ptrdiff_t>(begin + block_size));
        block.first_record = record_of[begin];
        block.last_record = record_of[begin + block_size - 1];
        result.blocks.push_back(std::move(block));
    }
    result.stats.block_num = full_blocks;
    result.stats.dropped_tokens = result.stream.size() - full_blocks * block_size;
    return result;
}

bool verify_blocks(const std::vector<TokenBlock>& blocks, std::span<const TokenId> stream,
                   std::size_t block_size) {
    std::size_t cursor = 0;
    for (const TokenBlock& block : blocks) {
        if (block.ids.size() != block_size) {
            return false;
        }
        if (cursor + block_size > stream.size()) {
            return false;
        }
        if (!std::equal(block.ids.begin(), block.ids.end(), stream.begin() + cursor)) {
            return false;
        }
        cursor += block_size;
    }
    return stream.size() - cursor < block_size;
}

std::vector<std::uint64_t> apportion(const std::vector<double>& weights, std::uint64_t total) {
    if (weights.empty()) {
        throw CorpusError("apportionment needs at least one weight");
    }
    double sum = 0.0;
    for (double w : weights) {
        if (!(w > 0.0)) {
            throw CorpusError("weights must be positive");
        }
        sum += w;
    }

    std::vector<std::uint64_t> counts(weights.size(), 0);
    std::vector<std::pair<double, std::size_t>> remainders;
    std::uint64_t assigned = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        double quota = static_cast<double>(total) * weights[i] / sum;
        auto floor_part = static_cast<std::uint64_t>(std::floor(quota));
        counts[i] = floor_part;
        assigned += floor_part;
        remainders.emplace_back(quota - static_cast<double>(floor_part), i);
    }
    // Larger remainder first; equal remainders resolve in source order.
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    std::uint64_t seats = total - assigned;
    for (std::size_t k = 0; seats > 0; k = (k + 1) % remainders.size()) {
        counts[remainders[k].second] += 1;
        --seats;
    }
    return counts;
}

BatchPlan plan_batches(const std::vector<SourceStats>& stats, const std::vector<double>& weights,
                       std::uint64_t global_batch, std::uint64_t num_batches, std::uint64_t seed) {
    if (stats.empty() || stats.size() != weights.size()) {
        throw CorpusError("stats and weights must align and be non-empty");
    }
    if (global_batch < stats.size()) {
        throw CorpusError("global_batch must be at least the number of sources");
    }

    std::vector<std::uint64_t> per_batch = apportion(weights, global_batch);

    BatchPlan plan;
    plan.global_batch = global_batch;
    plan.num_batches = num_batches;
    plan.seed = seed;
    for (std::size_t i = 0; i < stats.size(); ++i) {
        PlanSource source;
        source.name = stats[i].source;
        source.weight = weights[i];
        source.per_batch = per_batch[i];
        source.available_blocks = stats[i].block_num;
        source.order_seed = util::mix_seed(seed, util::hash_string(stats[i].source));
        plan.sources.push_back(std::move(source));
    }

    for (const PlanSource& source : plan.sources) {
        std::uint64_t needed = source.per_batch * num_batches;
        if (needed > source.available_blocks) {
            std::uint64_t fillable =
                source.per_batch == 0 ? num_batches : source.available_blocks / source.per_batch;
            throw CorpusError("source '" + source.name + "' exhausted at batch " +
                              std::to_string(fillable + 1) + ": needs " + std::to_string(needed) +
                              " blocks, has " + std::to_string(source.available_blocks));
        }
    }

    plan.schedule.reserve(num_batches);
    for (std::uint64_t b = 0; b < num_batches; ++b) {
        plan.schedule.push_back({b, per_batch});
    }
    return plan;
}

std::vector<std::uint32_t> source_block_order(const BatchPlan& plan, const std::string& source) {
    for (const PlanSource& s : plan.sources) {
        if (s.name != source) {
            continue;
        }
        std::vector<std::uint32_t> order(s.available_blocks);
        std::iota(order.begin(), order.end(), 0u);
        util::SplitMix64 rng(s.order_seed);
        rng.shuffle(order);
        return order;
    }
    throw CorpusError("unknown source '" + source + "' in plan");
}

nlohmann::ordered_json plan_to_json(const BatchPlan& plan) {
    nlohmann::ordered_json j;
    j["global_batch"] = plan.global_batch;
    j["num_batches"] = plan.num_batches;
    j["seed"] = plan.seed;
    j["sources"] = nlohmann::ordered_json::array();
    for (const PlanSource& s : plan.sources) {
        j["sources"].push_back({{"name", s.name},
                                {"weight", s.weight},
                                {"per_batch", s.per_batch},
                                {"available_blocks", s.available_blocks},
                                {"order_seed", s.order_seed}});
    }
    j["schedule"] = nlohmann::ordered_json::array();
    for (const BatchCounts& batch : plan.schedule) {
        nlohmann::ordered_json counts = nlohmann::ordered_json::object();
        for (std::size_t i = 0; i < plan.sources.size(); ++i) {
            counts[plan.sources[i].name] = batch.counts[i];
        }
        j["schedule"].push_back({{"batch", batch.batch_index}, {"counts", counts}});
    }
    return j;
}

std::string serialize_plan(const BatchPlan& plan) {
    return plan_to_json(plan).dump(2) + "\n";
}

nlohmann::json stats_to_json(const SourceStats& stats) {
    return nlohmann::json{{"source", stats.source},
                          {"item_num", stats.item_num},
                          {"token_num", stats.token_num},
                          {"block_num", stats.block_num},
                          {"dropped_tokens", stats.dropped_tokens},
                          {"block_size", stats.block_size}};
}

SourceStats stats_from_json(const nlohmann::json& j) {
    SourceStats stats;
    stats.source = j.at("source").get<std::string>();
    stats.item_num = j.at("item_num").get<std::uint64_t>();
    stats.token_num = j.at("token_num").get<std::uint64_t>();
    stats.block_num = j.at("block_num").get<std::uint64_t>();
    stats.dropped_tokens = j.at("dropped_tokens").get<std::uint64_t>();
    stats.block_size = j.value("block_size", std::uint64_t{0});
    return stats;
}

std::string blocks_to_jsonl(const std::vector<TokenBlock>& blocks) {
    std::string out;
    for (const TokenBlock& block : blocks) {
        nlohmann::ordered_json j;
        j["source"] = block.source;
        j["origin"] = {block.first_record, block.last_record};
        j["ids"] = block.ids;
        out += j.dump();
        out += '\n';
    }
    return out;
}

void write_blocks_jsonl(const std::filesystem::path& path, const std::vector<TokenBlock>& blocks) {
    util::write_file_atomic(path, blocks_to_jsonl(blocks));
}

std::vector<TokenBlock> read_blocks_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw CorpusError("cannot open block file: " + path.string());
    }
    std::vector<TokenBlock> blocks;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        nlohmann::json j = nlohmann::json::parse(line);
        TokenBlock block;
        block.source = j.at("source").get<std::string>();
        block.first_record = j.at("origin").at(0).get<std::size_t>();
        block.last_record = j.at("origin").at(1).get<std::size_t>();
        block.ids = j.at("ids").get<std::vector<TokenId>>();
        blocks.push_back(std::move(block));
    }
    return blocks;
}

void write_blocks_binary(const std::filesystem::path& bin_path,
                         const std::filesystem::path& sidecar_path,
                         const std::vector<TokenBlock>& blocks, std::size_t block_size) {
    std::string bytes;
    bytes.reserve(blocks.size() * block_size * 4);
    nlohmann::ordered_json index;
    index["block_size"] = block_size;
    index["blocks"] = nlohmann::ordered_json::array();
    for (const TokenBlock& block : blocks) {
        if (block.ids.size() != block_size) {
            throw CorpusError("binary block frames require uniform block_size");
        }
        for (TokenId id : block.ids) {
            // little-endian u32, independent of host byte order
            bytes.push_back(static_cast<char>(id & 0xff));
            bytes.push_back(static_cast<char>((id >> 8) & 0xff));
            bytes.push_back(static_cast<char>((id >> 16) & 0xff));
            bytes.push_back(static_cast<char>((id >> 24) & 0xff));
        }
        index["blocks"].push_back({{"source", block.source},
                                   {"origin", {block.first_record, block.last_record}}});
    }
    util::write_file_atomic(bin_path, bytes);
    util::write_file_atomic(sidecar_path, index.dump(2) + "\n");
}

std::vector<TokenBlock> read_blocks_binary(const std::filesystem::path& bin_path,
                                           const std::filesystem::path& sidecar_path) {
    nlohmann::json index = nlohmann::json::parse(util::read_file(sidecar_path));
    std::string bytes = util::read_file(bin_path);
    const std::size_t block_size = index.at("block_size").get<std::size_t>();
    const auto& entries = index.at("blocks");
    if (bytes.size() != entries.size() * block_size * 4) {
        throw CorpusError("binary block file size does not match its sidecar");
    }
    std::vector<TokenBlock> blocks;
    std::size_t offset = 0;
    for (const auto& entry : entries) {
        TokenBlock block;
        block.source = entry.at("source").get<std::string>();
        block.first_record = entry.at("origin").at(0).get<std::size_t>();
        block.last_record = entry.at("origin").at(1).get<std::size_t>();
        block.ids.reserve(block_size);
        for (std::size_t i = 0; i < block_size; ++i) {
            const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + offset);
            block.ids.push_back(static_cast<TokenId>(p[0]) | (static_cast<TokenId>(p[1]) << 8) |
                                (static_cast<TokenId>(p[2]) << 16) |
                                (static_cast<TokenId>(p[3]) << 24));
            offset += 4;
        }
        blocks.push_back(std::move(block));
    }
    return blocks;
}

}  // namespace geoforge::corpus
