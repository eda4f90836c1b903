#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace miwv {

enum class SourceFormat { AlpacaJson, WizardlmJson, GenericJsonl };

std::string_view to_string(SourceFormat format);
// Accepts "alpaca-json", "wizardlm-json", "generic-jsonl".
std::optional<SourceFormat> parse_source_format(std::string_view name);

struct InstructionSample {
    std::size_t id = 0;
    std::string instruction;
    // Absent for wizardlm records. An empty string is kept as-is (alpaca "input": "")
    // and renders like an absent input.
    std::optional<std::string> input;
    std::string response;

    bool has_input() const noexcept { return input.has_value() && !input->empty(); }
    friend bool operator==(const InstructionSample&, const InstructionSample&) = default;
};

struct Dataset {
    std::vector<InstructionSample> samples;
    SourceFormat source_format = SourceFormat::GenericJsonl;
    // sha256 of the canonical generic-jsonl serialization
    std::string content_hash;

    std::size_t size() const noexcept { return samples.size(); }
    const InstructionSample& at(std::size_t id) const;
    friend bool operator==(const Dataset&, const Dataset&) = default;
};

// Validates every record (ids == positions, non-blank instruction and response,
// n >= 2) and computes the content hash.
Dataset make_dataset(std::vector<InstructionSample> samples, SourceFormat format);

Dataset load_dataset(const std::filesystem::path& path, SourceFormat format);
Dataset parse_dataset(std::string_view contents, SourceFormat format);

// One record in the given schema. generic-jsonl records carry "id" only when
// `with_id` is set. Compact, key order instruction/input/output.
std::string serialize_record(const InstructionSample& sample, SourceFormat format, bool with_id);

// Whole-file serialization: JSON array (4-space indent) for the two JSON
// formats, one record per line for generic-jsonl.
std::string serialize_samples(const std::vector<const InstructionSample*>& samples,
                              SourceFormat format, bool with_id);
std::string serialize_dataset(const Dataset& dataset, SourceFormat format);

}  // namespace miwv
