#include "geoforge/signal_forge.hpp"

#include <algorithm>
#include <array>

#include "geoforge/util.hpp"

namespace geoforge::signal {

const std::vector<std::string>& expected_families() {
    static const std::vector<std::string> families = {
        "deepliterature.abstract.title",
        "deepliterature.abstract.keyword",
        "deepliterature.reference.resolution",
        "gso.wikipedia.title",
        "gso.wikipedia.entity",
        "gso.wordnet.description",
        "gso.wordnet.synonym",
        "gso.dictionary.definition",
        "gso.dictionary.synonym",
        "gso.dictionary.classification",
        "gso.taxonomy.hyponymy.child",
        "gso.taxonomy.hyponymy.parent",
        "gso.taxonomy.hyponymy.judgment.parent",
        "gso.taxonomy.hyponymy.judgment.child",
        "metaearth",
        "gakg.qa",
        "ner",
        "gakg.illustration",
        "gakg.table",
    };
    return families;
}

const std::set<std::string>& known_placeholders() {
    static const std::set<std::string> names = {"input",  "output",  "key",      "value",
                                                "object", "parent",  "child",    "title",
                                                "keyword", "paragraph", "word",  "term",
                                                "Answer"};
    return names;
}

std::set<std::string> pattern_placeholders(std::string_view pattern) {
    std::set<std::string> out;
    std::size_t pos = 0;
    while ((pos = pattern.find('[', pos)) != std::string_view::npos) {
        std::size_t close = pattern.find(']', pos + 1);
        if (close == std::string_view::npos) {
            break;
        }
        std::string name(pattern.substr(pos + 1, close - pos - 1));
        if (known_placeholders().count(name) != 0) {
            out.insert(name);
        }
        pos = close + 1;
    }
    return out;
}

const PromptTemplate& TemplateBank::variant(const std::string& family, int variant) const {
    auto it = families.find(family);
    if (it == families.end()) {
        throw SignalError("unknown template family '" + family + "'");
    }
    for (const PromptTemplate& t : it->second) {
        if (t.variant == variant) {
            return t;
        }
    }
    throw SignalError("family '" + family + "' has no variant " + std::to_string(variant));
}

std::set<std::string> TemplateBank::family_placeholders(const std::string& family) const {
    auto it = families.find(family);
    if (it == families.end()) {
        throw SignalError("unknown template family '" + family + "'");
    }
    std::set<std::string> out;
    for (const PromptTemplate& t : it->second) {
        for (const auto& p : pattern_placeholders(t.input_pattern)) {
            out.insert(p);
        }
        for (const auto& p : pattern_placeholders(t.output_pattern)) {
            out.insert(p);
        }
    }
    return out;
}

TemplateBank load_template_bank(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(util::read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw SignalError("cannot parse template bank " + path.string() + ": " + e.what());
    }

    TemplateBank bank;
    if (!j.contains("families") || !j["families"].is_object()) {
        throw SignalError("template bank has no 'families' object");
    }
    for (const auto& [family, variants] : j["families"].items()) {
        std::vector<PromptTemplate> list;
        for (const auto& entry : variants) {
            PromptTemplate t;
            t.family = family;
            t.variant = entry.at("variant").get<int>();
            t.input_pattern = entry.at("input").get<std::string>();
            t.output_pattern = entry.at("output").get<std::string>();
            list.push_back(std::move(t));
        }
        bank.families.emplace(family, std::move(list));
    }

    for (const std::string& family : expected_families()) {
        auto it = bank.families.find(family);
        if (it == bank.families.end()) {
            throw SignalError("template bank is missing family '" + family + "'");
        }
        const auto& variants = it->second;
        for (int v = 1; v <= 5; ++v) {
            auto found = std::count_if(variants.begin(), variants.end(),
                                       [v](const PromptTemplate& t) { return t.variant == v; });
            if (found == 0) {
                throw SignalError("family '" + family + "' is missing variant " +
                                  std::to_string(v));
            }
            if (found > 1) {
                throw SignalError("family '" + family + "' has duplicate variant " +
                                  std::to_string(v));
            }
        }
        if (variants.size() != 5) {
            throw SignalError("family '" + family + "' must have exactly 5 variants");
        }
        for (const PromptTemplate& t : variants) {
            for (std::string_view pattern : {std::string_view(t.input_pattern),
                                             std::string_view(t.output_pattern)}) {
                std::size_t pos = 0;
                while ((pos = pattern.find('[', pos)) != std::string_view::npos) {
                    std::size_t close = pattern.find(']', pos + 1);
                    if (close == std::string_view::npos) {
                        break;
                    }
                    std::string name(pattern.substr(pos + 1, close - pos - 1));
                    if (known_placeholders().count(name) == 0) {
                        throw SignalError("family '" + family + "' variant " +
                                          std::to_string(t.variant) +
                                          " uses unknown placeholder [" + name + "]");
                    }
                    pos = close + 1;
                }
            }
        }
    }
    return bank;
}

namespace {

// One-pass substitution: replaced values are never re-scanned for slots.
std::string substitute(std::string_view pattern,
                       const std::map<std::string, std::string>& bindings,
                       const std::string& family, int variant) {
    std::string out;
    out.reserve(pattern.size());
    std::size_t pos = 0;
    while (pos < pattern.size()) {
        std::size_t open = pattern.find('[', pos);
        if (open == std::string_view::npos) {
            out += pattern.substr(pos);
            break;
        }
        std::size_t close = pattern.find(']', open + 1);
        if (close == std::string_view::npos) {
            out += pattern.substr(pos);
            break;
        }
        std::string name(pattern.substr(open + 1, close - open - 1));
        if (known_placeholders().count(name) == 0) {
            out += pattern.substr(pos, close + 1 - pos);
            pos = close + 1;
            continue;
        }
        out += pattern.substr(pos, open - pos);
        auto it = bindings.find(name);
        if (it == bindings.end()) {
            throw SignalError("family '" + family + "' variant " + std::to_string(variant) +
                              ": missing binding for placeholder [" + name + "]");
        }
        if (it->second.empty()) {
            throw SignalError("family '" + family + "' variant " + std::to_string(variant) +
                              ": empty binding for placeholder [" + name + "]");
        }
        out += it->second;
        pos = close + 1;
    }
    return out;
}

}  // namespace

InstructionPair render_with_variant(const TemplateBank& bank, const SignalTuple& tuple,
                                    int variant) {
    const PromptTemplate& t = bank.variant(tuple.family, variant);
    InstructionPair pair;
    pair.family = tuple.family;
    pair.variant = variant;
    pair.provenance = tuple.provenance;
    pair.instruction = substitute(t.input_pattern, tuple.bindings, tuple.family, variant);
    pair.output = substitute(t.output_pattern, tuple.bindings, tuple.family, variant);
    return pair;
}

InstructionPair render_pair(const TemplateBank& bank, const SignalTuple& tuple,
                            std::uint64_t seed) {
    util::SplitMix64 rng(seed);
    int variant = static_cast<int>(rng.bounded(5)) + 1;
    return render_with_variant(bank, tuple, variant);
}

SchemaKind schema_kind_from_string(std::string_view name) {
    if (name == "mineral") return SchemaKind::Mineral;
    if (name == "earthquake") return SchemaKind::Earthquake;
    if (name == "sediment") return SchemaKind::Sediment;
    if (name == "fossil_ontology") return SchemaKind::FossilOntology;
    if (name == "fossil_calibration") return SchemaKind::FossilCalibration;
    throw SignalError("unknown schema kind '" + std::string(name) + "'");
}

std::string_view schema_kind_name(SchemaKind kind) {
    switch (kind) {
        case SchemaKind::Mineral: return "mineral";
        case SchemaKind::Earthquake: return "earthquake";
        case SchemaKind::Sediment: return "sediment";
        case SchemaKind::FossilOntology: return "fossil_ontology";
        case SchemaKind::FossilCalibration: return "fossil_calibration";
    }
    return {};
}

std::string PropertyValue::joined() const {
    if (!is_list) {
        return text;
    }
    std::string out;
    for (const auto& item : items) {
        if (!out.empty()) {
            out += ", ";
        }
        out += item;
    }
    return out;
}

bool PropertyValue::informative() const {
    if (is_list) {
        return !items.empty();
    }
    return !text.empty() && text != kNoInformation;
}

const PropertyValue* KnowledgeRecord::property(std::string_view key) const {
    for (const auto& [k, v] : entries) {
        if (k == key) {
            return &v;
        }
    }
    return nullptr;
}

const std::vector<std::string>& schema_properties(SchemaKind kind) {
    static const std::vector<std::string> mineral = {
        "Colour",        "Lustre",           "Specific Gravity",
        "Crystal System", "Hardness",        "Chemical Elements",
        "Type Locality", "General Appearance", "Place of Conservation",
        "References"};
    static const std::vector<std::string> earthquake = {
        "Location",       "Origin Time",        "Minimum Distance", "Azimuthal Gap",
        "Moment",         "Magnitude",          "Depth",            "Percent DC",
        "Messages Issued", "Magnitude Estimates", "Nearby Cities"};
    static const std::vector<std::string> sediment = {
        "Lab ID", "Submitter", "Date submitted",    "State",   "Country",
        "Location", "Location Precision", "Source", "Chemical Elements"};
    static const std::vector<std::string> fossil_ontology = {"Lineage", "Age",  "Locality",
                                                             "GPS",     "House", "References"};
    static const std::vector<std::string> fossil_calibration = {
        "Lineage",  "Minimum age",   "Maximum age", "Locality",
        "Geological age", "Calibration", "Reference"};
    switch (kind) {
        case SchemaKind::Mineral: return mineral;
        case SchemaKind::Earthquake: return earthquake;
        case SchemaKind::Sediment: return sediment;
        case SchemaKind::FossilOntology: return fossil_ontology;
        case SchemaKind::FossilCalibration: return fossil_calibration;
    }
    return mineral;
}

namespace {

bool is_known_element(const std::string& symbol) {
    static const std::set<std::string> elements = {
        "H",  "He", "Li", "Be", "B",  "C",  "N",  "O",  "F",  "Ne", "Na", "Mg", "Al", "Si",
        "P",  "S",  "Cl", "Ar", "K",  "Ca", "Sc", "Ti", "V",  "Cr", "Mn", "Fe", "Co", "Ni",
        "Cu", "Zn", "Ga", "Ge", "As", "Se", "Br", "Kr", "Rb", "Sr", "Y",  "Zr", "Nb", "Mo",
        "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In", "Sn", "Sb", "Te", "I",  "Xe", "Cs", "Ba",
        "La", "Ce", "Pr", "Nd", "Pm", "Sm", "Eu", "Gd", "Tb", "Dy", "Ho", "Er", "Tm", "Yb",
        "Lu", "Hf", "Ta", "W",  "Re", "Os", "Ir", "Pt", "Au", "Hg", "Tl", "Pb", "Bi", "Po",
        "At", "Rn", "Fr", "Ra", "Ac", "Th", "Pa", "U",  "Np", "Pu", "Am", "Cm", "Bk", "Cf",
        "Es", "Fm", "Md", "No", "Lr", "Rf", "Db", "Sg", "Bh", "Hs", "Mt", "Ds", "Rg", "Cn",
        "Nh", "Fl", "Mc", "Lv", "Ts", "Og"};
    return elements.count(symbol) != 0;
}

std::string name_key(SchemaKind kind) {
    switch (kind) {
        case SchemaKind::Mineral: return "Mineral";
        case SchemaKind::Sediment: return "Lab ID";
        default: return "Name";
    }
}

PropertyValue value_from_json(const nlohmann::json& value) {
    PropertyValue out;
    if (value.is_array()) {
        out.is_list = true;
        for (const auto& item : value) {
            out.items.push_back(item.is_string() ? item.get<std::string>() : item.dump());
        }
    } else if (value.is_string()) {
        out.text = value.get<std::string>();
    } else if (value.is_number_integer()) {
        out.text = std::to_string(value.get<long long>());
    } else if (value.is_number()) {
        out.text = nlohmann::json(value).dump();
    } else if (!value.is_null()) {
        out.text = value.dump();
    }
    return out;
}

PropertyValue no_information() {
    PropertyValue out;
    out.text = std::string(kNoInformation);
    return out;
}

double parse_percent(const nlohmann::json& value) {
    if (value.is_number()) {
        return value.get<double>();
    }
    if (value.is_string()) {
        std::string s = value.get<std::string>();
        while (!s.empty() && (s.back() == '%' || s.back() == ' ')) {
            s.pop_back();
        }
        try {
            return std::stod(s);
        } catch (...) {
            return -1.0;
        }
    }
    return -1.0;
}

PropertyValue mineral_elements(const nlohmann::json& raw) {
    if (raw.contains("Chemical Elements")) {
        PropertyValue v = value_from_json(raw["Chemical Elements"]);
        if (!v.is_list) {
            PropertyValue list;
            list.is_list = true;
            list.items = elements_from_formula(v.text);
            return list;
        }
        return v;
    }
    for (const char* key : {"Chemical Formula", "Chemistry", "Formula"}) {
        if (raw.contains(key) && raw[key].is_string()) {
            PropertyValue list;
            list.is_list = true;
            list.items = elements_from_formula(raw[key].get<std::string>());
            return list;
        }
    }
    return no_information();
}

// Major elements only: keep entries at >= 1% composition; an oxide entry
// contributes its leading element (SiO2 -> Si).
PropertyValue sediment_elements(const nlohmann::json& raw) {
    const nlohmann::json* analysis = nullptr;
    for (const char* key : {"Chemical analysis", "Chemical Analysis", "chemistry"}) {
        if (raw.contains(key) && raw[key].is_object()) {
            analysis = &raw[key];
            break;
        }
    }
    if (analysis == nullptr) {
        return no_information();
    }
    PropertyValue list;
    list.is_list = true;
    for (const auto& [compound, pct] : analysis->items()) {
        double percent = parse_percent(pct);
        if (percent < 1.0) {
            continue;
        }
        std::vector<std::string> symbols = elements_from_formula(compound);
        if (symbols.empty()) {
            continue;
        }
        const std::string& element = symbols.front();
        if (std::find(list.items.begin(), list.items.end(), element) == list.items.end()) {
            list.items.push_back(element);
        }
    }
    if (list.items.empty()) {
        return no_information();
    }
    return list;
}

PropertyValue sediment_location(const nlohmann::json& raw) {
    if (raw.contains("Location")) {
        return value_from_json(raw["Location"]);
    }
    const char* lat_key = raw.contains("Original Latitude") ? "Original Latitude" : "Latitude";
    const char* lon_key = raw.contains("Original Longitude") ? "Original Longitude" : "Longitude";
    if (!raw.contains(lat_key) || !raw.contains(lon_key)) {
        return no_information();
    }
    PropertyValue lat = value_from_json(raw[lat_key]);
    PropertyValue lon = value_from_json(raw[lon_key]);
    if (lat.text.empty() || lon.text.empty()) {
        return no_information();
    }
    PropertyValue out;
    out.text = lat.text + ", " + lon.text;
    return out;
}

}  // namespace

std::vector<std::string> elements_from_formula(std::string_view formula) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < formula.size()) {
        char c = formula[i];
        if (c < 'A' || c > 'Z') {
            ++i;
            continue;
        }
        std::string symbol(1, c);
        if (i + 1 < formula.size() && formula[i + 1] >= 'a' && formula[i + 1] <= 'z') {
            symbol.push_back(formula[i + 1]);
        }
        // Prefer the two-letter symbol when it is a real element; fall back
        // to the single letter otherwise.
        if (symbol.size() == 2 && !is_known_element(symbol)) {
            symbol.pop_back();
        }
        if (is_known_element(symbol)) {
            if (std::find(out.begin(), out.end(), symbol) == out.end()) {
                out.push_back(symbol);
            }
            i += symbol.size();
        } else {
            ++i;
        }
    }
    return out;
}

KnowledgeRecord normalize_knowledge(const nlohmann::json& raw, SchemaKind kind) {
    if (!raw.is_object()) {
        throw SignalError("knowledge record must be a JSON object");
    }
    const std::string nk = name_key(kind);
    if (!raw.contains(nk) || !raw[nk].is_string() || raw[nk].get<std::string>().empty()) {
        throw SignalError("knowledge record is missing its name key '" + nk + "'");
    }

    KnowledgeRecord record;
    record.schema_kind = kind;
    record.name = raw[nk].get<std::string>();

    for (const std::string& key : schema_properties(kind)) {
        PropertyValue value;
        if (kind == SchemaKind::Mineral && key == "Chemical Elements") {
            value = mineral_elements(raw);
        } else if (kind == SchemaKind::Sediment && key == "Chemical Elements") {
            value = sediment_elements(raw);
        } else if (kind == SchemaKind::Sediment && key == "Location") {
            value = sediment_location(raw);
        } else if (kind == SchemaKind::Sediment && key == "Lab ID") {
            value.text = record.name;
        } else if (raw.contains(key)) {
            value = value_from_json(raw[key]);
            if (!value.is_list && value.text.empty()) {
                value = no_information();
            }
        } else {
            value = no_information();
        }
        record.entries.emplace_back(key, std::move(value));
    }
    return record;
}

std::vector<SignalTuple> record_to_tuples(const KnowledgeRecord& record) {
    std::vector<SignalTuple> out;
    for (const auto& [key, value] : record.entries) {
        if (!value.informative()) {
            continue;
        }
        SignalTuple tuple;
        tuple.family = "metaearth";
        tuple.bindings["key"] = key;
        tuple.bindings["object"] = record.name;
        tuple.bindings["value"] = value.joined();
        tuple.provenance = std::string(schema_kind_name(record.schema_kind)) + ":" + record.name;
        out.push_back(std::move(tuple));
    }
    return out;
}

WikiTuples wiki_sections_to_tuples(const std::vector<WikiSectionTriple>& triples,
                                   const std::string& abstract,
                                   const std::string& page_keyword) {
    WikiTuples result;
    std::string keyword = page_keyword;
    if (keyword.empty() && !triples.empty()) {
        keyword = triples.front().title;
    }

    std::string fulltext;
    for (const auto& triple : triples) {
        if (!fulltext.empty()) {
            fulltext += '\n';
        }
        fulltext += triple.paragraph;

        SignalTuple tuple;
        tuple.family = "gso.wikipedia.title";
        tuple.bindings["title"] = triple.title;
        tuple.bindings["keyword"] = keyword;
        tuple.bindings["paragraph"] = triple.paragraph;
        tuple.provenance = "wikipedia:" + keyword + "#" + triple.title;
        result.tuples.push_back(std::move(tuple));
    }

    SignalTuple summary;
    summary.family = "wikipedia.summary";
    summary.bindings["input"] = fulltext;
    summary.bindings["output"] = abstract;
    summary.provenance = "wikipedia:" + keyword + "#summary";
    if (fulltext.empty()) {
        result.warnings.push_back("summary tuple for '" + keyword + "' has empty full text");
    }
    result.tuples.push_back(std::move(summary));
    return result;
}

DatasetResult generate_signal_dataset(const std::vector<SignalTuple>& tuples,
                                      const TemplateBank& bank, std::uint64_t seed) {
    DatasetResult result;
    for (std::size_t i = 0; i < tuples.size(); ++i) {
        try {
            result.pairs.push_back(render_pair(bank, tuples[i], util::mix_seed(seed, i)));
        } catch (const SignalError& e) {
            result.errors.push_back({i, e.what()});
        }
    }
    return result;
}

nlohmann::ordered_json pair_to_json(const InstructionPair& pair) {
    return nlohmann::ordered_json{{"instruction", pair.instruction},
                                  {"output", pair.output},
                                  {"family", pair.family},
                                  {"variant", pair.variant},
                                  {"provenance", pair.provenance}};
}

std::string dataset_to_jsonl(const std::vector<InstructionPair>& pairs) {
    std::string out;
    for (const InstructionPair& pair : pairs) {
        out += pair_to_json(pair).dump();
        out += '\n';
    }
    return out;
}

}  // namespace geoforge::signal
