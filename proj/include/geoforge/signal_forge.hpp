#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace geoforge::signal {

class SignalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct SignalTuple {
    std::string family;
    std::map<std::string, std::string> bindings;
    std::string provenance;
};

struct PromptTemplate {
    std::string family;
    int variant = 0;  // 1..5
    std::string input_pattern;
    std::string output_pattern;
};

struct TemplateBank {
    // family -> variants ordered 1..5
    std::map<std::string, std::vector<PromptTemplate>> families;

    const PromptTemplate& variant(const std::string& family, int variant) const;
    // Union of the placeholders used across a family's variants.
    std::set<std::string> family_placeholders(const std::string& family) const;
};

// The 19 families the bundled bank must carry, in bank order.
const std::vector<std::string>& expected_families();

// Placeholder names that may appear in patterns.
const std::set<std::string>& known_placeholders();

// Slot names used by a single pattern string.
std::set<std::string> pattern_placeholders(std::string_view pattern);

// Loads and validates a bank file: all 19 families, 5 variants each, only
// known placeholders. Errors name the missing family or variant.
TemplateBank load_template_bank(const std::filesystem::path& path);

struct InstructionPair {
    std::string instruction;
    std::string output;
    std::string family;
    int variant = 0;
    std::string provenance;
};

// Substitutes bindings into one specific variant; errors name any missing or
// empty required binding.
InstructionPair render_with_variant(const TemplateBank& bank, const SignalTuple& tuple,
                                    int variant);

// Uniform seeded draw over the five variants, then render.
InstructionPair render_pair(const TemplateBank& bank, const SignalTuple& tuple,
                            std::uint64_t seed);

enum class SchemaKind { Mineral, Earthquake, Sediment, FossilOntology, FossilCalibration };

SchemaKind schema_kind_from_string(std::string_view name);
std::string_view schema_kind_name(SchemaKind kind);

// Value filled in for absent properties, verbatim from the record schemas.
inline constexpr std::string_view kNoInformation = "No corresponding information";

struct PropertyValue {
    bool is_list = false;
    std::string text;                 // scalar value
    std::vector<std::string> items;   // list value

    std::string joined() const;
    bool informative() const;
};

struct KnowledgeRecord {
    SchemaKind schema_kind = SchemaKind::Mineral;
    std::string name;
    // Ordered per the schema's property list.
    std::vector<std::pair<std::string, PropertyValue>> entries;

    const PropertyValue* property(std::string_view key) const;
};

// Schema property keys (name excluded; it lives in KnowledgeRecord::name).
const std::vector<std::string>& schema_properties(SchemaKind kind);

// Maps a raw snapshot into the schema: flattens mineral chemistry to an
// element list, keeps only >= 1% elements for sediment chemistry, synthesizes
// the sediment Location from latitude/longitude, and fills absent properties
// with the no-information literal.
KnowledgeRecord normalize_knowledge(const nlohmann::json& raw, SchemaKind kind);

// Element symbols appearing in a chemical formula, first appearance order.
std::vector<std::string> elements_from_formula(std::string_view formula);

// One metaearth tuple per informative property, object = record name.
std::vector<SignalTuple> record_to_tuples(const KnowledgeRecord& record);

struct WikiSectionTriple {
    int level = 0;
    std::string title;
    std::string paragraph;
};

struct WikiTuples {
    std::vector<SignalTuple> tuples;
    std::vector<std::string> warnings;
};

// One gso.wikipedia.title tuple per section triple plus one summary tuple
// (family "wikipedia.summary": full text -> abstract). page_keyword is the
// article subject bound to [keyword]; empty derives it from the first triple.
WikiTuples wiki_sections_to_tuples(const std::vector<WikiSectionTriple>& triples,
                                   const std::string& abstract,
                                   const std::string& page_keyword = "");

struct DatasetError {
    std::size_t tuple_index = 0;
    std::string message;
};

struct DatasetResult {
    std::vector<InstructionPair> pairs;
    std::vector<DatasetError> errors;
};

// Maps render_pair over the tuples with a per-tuple seeded variant draw;
// output order equals input order, invalid tuples are reported and skipped.
DatasetResult generate_signal_dataset(const std::vector<SignalTuple>& tuples,
                                      const TemplateBank& bank, std::uint64_t seed);

nlohmann::ordered_json pair_to_json(const InstructionPair& pair);
std::string dataset_to_jsonl(const std::vector<InstructionPair>& pairs);

}  // namespace geoforge::signal
