#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "miwv/dataset.hpp"

namespace miwv {

enum class PromptKind { ZeroShot, OneShot };

struct PromptText {
    std::string text;
    std::size_t char_len = 0;  // bytes; text is opaque UTF-8
    PromptKind kind = PromptKind::ZeroShot;

    friend bool operator==(const PromptText&, const PromptText&) = default;
};

// A template string with `{name}` slots. Braces that do not spell one of the
// declared slot names are literal text. Substituted values are never rescanned.
class SlotTemplate {
public:
    SlotTemplate() = default;
    // Every `required` slot must occur exactly once, every `optional` slot at most once.
    SlotTemplate(std::string source, std::vector<std::string> required,
                 std::vector<std::string> optional, std::string_view what);

    using Binding = std::pair<std::string_view, std::string_view>;
    std::string render(std::initializer_list<Binding> values) const;

    const std::string& source() const noexcept { return source_; }
    bool ends_with_slot(std::string_view slot) const;

private:
    struct Segment {
        bool is_slot = false;
        std::string text;
    };
    std::string source_;
    std::vector<Segment> segments_;
};

struct TemplateSpec {
    std::string name;
    std::string zero_shot_with_input;
    std::string zero_shot_no_input;
    std::string one_shot_frame;
    std::string example_block;
    std::string separator;
};

class TemplateProfile {
public:
    explicit TemplateProfile(TemplateSpec spec);

    // Default instruction/response section-header layout.
    static TemplateProfile alpaca_style();
    // Either a profile name ("alpaca-style") or an object with the TemplateSpec fields.
    static TemplateProfile from_json(const nlohmann::json& value);

    const std::string& name() const noexcept { return spec_.name; }
    const TemplateSpec& spec() const noexcept { return spec_; }

    std::string zero_shot(const InstructionSample& sample) const;
    std::string example_block(const InstructionSample& example,
                              std::string_view example_response) const;
    std::string one_shot(std::string_view example_block, std::string_view target_block) const;

private:
    TemplateSpec spec_;
    SlotTemplate with_input_;
    SlotTemplate no_input_;
    SlotTemplate frame_;
    SlotTemplate example_;
};

PromptText render_instruction(const InstructionSample& sample, const TemplateProfile& profile);

PromptText render_one_shot_prompt(const InstructionSample& example,
                                  const InstructionSample& target,
                                  const TemplateProfile& profile);

// As above, with the example's response replaced by `example_response`
// (a truncated prefix when the full text would overflow a scorer's context).
PromptText render_one_shot_prompt(const InstructionSample& example,
                                  std::string_view example_response,
                                  const InstructionSample& target,
                                  const TemplateProfile& profile);

}  // namespace miwv
