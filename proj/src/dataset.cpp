#include "miwv/dataset.hpp"

#include "json.hpp"

#include "miwv/digest.hpp"
#include "miwv/error.hpp"
#include "miwv/json_text.hpp"

namespace miwv {
namespace {

using ordered_json = nlohmann::ordered_json;

std::string required_text(const nlohmann::json& rec, std::size_t index, const char* field) {
    auto it = rec.find(field);
    if (it == rec.end() || !it->is_string()) {
        throw Error(ErrorKind::Schema,
                    "record " + std::to_string(index) + ": missing or non-string \"" + field + "\"",
                    index, field);
    }
    auto value = it->get<std::string>();
    if (trim(value).empty()) {
        throw Error(ErrorKind::Schema,
                    "record " + std::to_string(index) + ": empty \"" + field + "\"", index, field);
    }
    return value;
}

InstructionSample sample_from_json(const nlohmann::json& rec, std::size_t index,
                                   SourceFormat format) {
    if (!rec.is_object()) {
        throw Error(ErrorKind::Schema, "record " + std::to_string(index) + " is not an object",
                    index, "record");
    }
    InstructionSample s;
    s.id = index;
    s.instruction = required_text(rec, index, "instruction");
    if (format != SourceFormat::WizardlmJson) {
        auto it = rec.find("input");
        if (it != rec.end() && !it->is_null()) {
            if (!it->is_string()) {
                throw Error(ErrorKind::Schema,
                            "record " + std::to_string(index) + ": non-string \"input\"", index,
                            "input");
            }
            s.input = it->get<std::string>();
        }
    }
    s.response = required_text(rec, index, "output");
    if (format == SourceFormat::GenericJsonl) {
        auto it = rec.find("id");
        if (it != rec.end()) {
            if (!it->is_number_integer() || it->get<long long>() != static_cast<long long>(index)) {
                throw Error(ErrorKind::Schema,
                            "record " + std::to_string(index) + ": \"id\" must equal its position",
                            index, "id");
            }
        }
    }
    return s;
}

std::vector<InstructionSample> parse_json_array(std::string_view contents, SourceFormat format) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(contents);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorKind::Parse, e.what(), e.byte);
    }
    if (!doc.is_array()) throw Error(ErrorKind::Parse, "top-level value is not an array", 0);
    std::vector<InstructionSample> out;
    out.reserve(doc.size());
    for (std::size_t i = 0; i < doc.size(); ++i) out.push_back(sample_from_json(doc[i], i, format));
    return out;
}

std::vector<InstructionSample> parse_jsonl(std::string_view contents) {
    std::vector<InstructionSample> out;
    std::size_t line_no = 0;
    while (!contents.empty()) {
        auto nl = contents.find('\n');
        auto line = contents.substr(0, nl);
        contents.remove_prefix(nl == std::string_view::npos ? contents.size() : nl + 1);
        ++line_no;
        if (trim(line).empty()) continue;
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw Error(ErrorKind::Parse, "line " + std::to_string(line_no) + ": " + e.what(),
                        line_no);
        }
        out.push_back(sample_from_json(rec, out.size(), SourceFormat::GenericJsonl));
    }
    return out;
}

ordered_json record_json(const InstructionSample& s, SourceFormat format, bool with_id) {
    ordered_json rec;
    if (with_id && format == SourceFormat::GenericJsonl) rec["id"] = s.id;
    rec["instruction"] = s.instruction;
    switch (format) {
        case SourceFormat::AlpacaJson:
            rec["input"] = s.input.value_or("");
            break;
        case SourceFormat::GenericJsonl:
            if (s.input) rec["input"] = *s.input;
            break;
        case SourceFormat::WizardlmJson:
            break;
    }
    rec["output"] = s.response;
    return rec;
}

}  // namespace

std::string_view to_string(SourceFormat format) {
    switch (format) {
        case SourceFormat::AlpacaJson: return "alpaca-json";
        case SourceFormat::WizardlmJson: return "wizardlm-json";
        case SourceFormat::GenericJsonl: return "generic-jsonl";
    }
    return "generic-jsonl";
}

std::optional<SourceFormat> parse_source_format(std::string_view name) {
    if (name == "alpaca-json") return SourceFormat::AlpacaJson;
    if (name == "wizardlm-json") return SourceFormat::WizardlmJson;
    if (name == "generic-jsonl") return SourceFormat::GenericJsonl;
    return std::nullopt;
}

const InstructionSample& Dataset::at(std::size_t id) const {
    if (id >= samples.size()) {
        throw Error(ErrorKind::IdNotFound, "sample id " + std::to_string(id), id);
    }
    return samples[id];
}

Dataset make_dataset(std::vector<InstructionSample> samples, SourceFormat format) {
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        if (s.id != i) {
            throw Error(ErrorKind::Schema, "sample at position " + std::to_string(i) +
                                               " has id " + std::to_string(s.id), i, "id");
        }
        if (trim(s.instruction).empty()) {
            throw Error(ErrorKind::Schema, "record " + std::to_string(i) + ": empty \"instruction\"",
                        i, "instruction");
        }
        if (trim(s.response).empty()) {
            throw Error(ErrorKind::Schema, "record " + std::to_string(i) + ": empty \"output\"", i,
                        "output");
        }
    }
    if (samples.size() < 2) {
        throw Error(ErrorKind::TooSmall, "dataset has " + std::to_string(samples.size()) +
                                             " samples; retrieval needs at least 2");
    }
    Dataset d;
    d.samples = std::move(samples);
    d.source_format = format;
    // empty and absent inputs render the same, so they hash the same
    std::string canonical;
    for (const auto& s : d.samples) {
        InstructionSample c = s;
        if (!c.has_input()) c.input.reset();
        canonical += serialize_record(c, SourceFormat::GenericJsonl, true);
        canonical += '\n';
    }
    d.content_hash = sha256_hex(canonical);
    return d;
}

Dataset parse_dataset(std::string_view contents, SourceFormat format) {
    auto samples = format == SourceFormat::GenericJsonl ? parse_jsonl(contents)
                                                        : parse_json_array(contents, format);
    return make_dataset(std::move(samples), format);
}

Dataset load_dataset(const std::filesystem::path& path, SourceFormat format) {
    if (!std::filesystem::is_regular_file(path)) {
        throw Error(ErrorKind::FileNotFound, path.string());
    }
    return parse_dataset(read_file(path), format);
}

std::string serialize_record(const InstructionSample& sample, SourceFormat format, bool with_id) {
    return record_json(sample, format, with_id).dump();
}

std::string serialize_samples(const std::vector<const InstructionSample*>& samples,
                              SourceFormat format, bool with_id) {
    if (format == SourceFormat::GenericJsonl) {
        std::string out;
        for (const auto* s : samples) {
            out += serialize_record(*s, format, with_id);
            out.push_back('\n');
        }
        return out;
    }
    auto arr = ordered_json::array();
    for (const auto* s : samples) arr.push_back(record_json(*s, format, with_id));
    return arr.dump(4) + "\n";
}

std::string serialize_dataset(const Dataset& dataset, SourceFormat format) {
    std::vector<const InstructionSample*> ptrs;
    ptrs.reserve(dataset.samples.size());
    for (const auto& s : dataset.samples) ptrs.push_back(&s);
    return serialize_samples(ptrs, format, true);
}

}  // namespace miwv
