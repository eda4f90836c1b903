#include "miwv/template_profile.hpp"

#include <algorithm>

#include "miwv/error.hpp"

namespace miwv {

SlotTemplate::SlotTemplate(std::string source, std::vector<std::string> required,
                           std::vector<std::string> optional, std::string_view what)
    : source_(std::move(source)) {
    auto is_declared = [&](std::string_view name) {
        return std::find(required.begin(), required.end(), name) != required.end() ||
               std::find(optional.begin(), optional.end(), name) != optional.end();
    };

    std::string literal;
    std::size_t pos = 0;
    while (pos < source_.size()) {
        if (source_[pos] == '{') {
            auto close = source_.find('}', pos + 1);
            if (close != std::string::npos) {
                std::string_view name(source_.data() + pos + 1, close - pos - 1);
                if (is_declared(name)) {
                    if (!literal.empty()) segments_.push_back({false, std::move(literal)});
                    literal.clear();
                    segments_.push_back({true, std::string(name)});
                    pos = close + 1;
                    continue;
                }
            }
        }
        literal.push_back(source_[pos++]);
    }
    if (!literal.empty()) segments_.push_back({false, std::move(literal)});

    auto occurrences = [&](std::string_view name) {
        return std::count_if(segments_.begin(), segments_.end(),
                             [&](const Segment& s) { return s.is_slot && s.text == name; });
    };
    for (const auto& name : required) {
        if (occurrences(name) != 1) {
            throw Error(ErrorKind::Template, std::string(what) + ": slot {" + name +
                                                 "} must appear exactly once");
        }
    }
    for (const auto& name : optional) {
        if (occurrences(name) > 1) {
            throw Error(ErrorKind::Template, std::string(what) + ": slot {" + name +
                                                 "} may appear at most once");
        }
    }
}

std::string SlotTemplate::render(std::initializer_list<Binding> values) const {
    std::string out;
    for (const auto& seg : segments_) {
        if (!seg.is_slot) {
            out += seg.text;
            continue;
        }
        auto it = std::find_if(values.begin(), values.end(),
                               [&](const Binding& b) { return b.first == seg.text; });
        if (it == values.end()) {
            throw Error(ErrorKind::Template, "slot {" + seg.text + "} left unfilled");
        }
        out += it->second;
    }
    return out;
}

bool SlotTemplate::ends_with_slot(std::string_view slot) const {
    return !segments_.empty() && segments_.back().is_slot && segments_.back().text == slot;
}

TemplateProfile::TemplateProfile(TemplateSpec spec)
    : spec_(std::move(spec)),
      with_input_(spec_.zero_shot_with_input, {"instruction", "input"}, {},
                  "zero_shot_with_input"),
      no_input_(spec_.zero_shot_no_input, {"instruction"}, {}, "zero_shot_no_input"),
      frame_(spec_.one_shot_frame, {"example_block", "target_block"}, {"separator"},
             "one_shot_frame"),
      example_(spec_.example_block, {"example_prompt", "example_response"}, {},
               "example_block") {
    if (spec_.name.empty()) throw Error(ErrorKind::Template, "profile name is empty");
    // the target must come last so its zero-shot text is a suffix of the one-shot text
    if (!frame_.ends_with_slot("target_block")) {
        throw Error(ErrorKind::Template, "one_shot_frame must end with {target_block}");
    }
}

TemplateProfile TemplateProfile::alpaca_style() {
    return TemplateProfile(TemplateSpec{
        .name = "alpaca-style",
        .zero_shot_with_input =
            "Below is an instruction that describes a task, paired with an input that provides "
            "further context. Write a response that appropriately completes the request.\n\n"
            "### Instruction:\n{instruction}\n\n### Input:\n{input}\n\n### Response:\n",
        .zero_shot_no_input =
            "Below is an instruction that describes a task. Write a response that appropriately "
            "completes the request.\n\n### Instruction:\n{instruction}\n\n### Response:\n",
        .one_shot_frame = "{example_block}{separator}{target_block}",
        .example_block = "{example_prompt}{example_response}",
        .separator = "\n\n",
    });
}

TemplateProfile TemplateProfile::from_json(const nlohmann::json& value) {
    if (value.is_string()) {
        if (value.get<std::string>() == "alpaca-style") return alpaca_style();
        throw Error(ErrorKind::Config, "unknown template profile '" + value.get<std::string>() + "'");
    }
    if (!value.is_object()) throw Error(ErrorKind::Config, "template_profile must be a name or object");
    auto field = [&](const char* key) {
        auto it = value.find(key);
        if (it == value.end() || !it->is_string()) {
            throw Error(ErrorKind::Config, std::string("template_profile.") + key + " missing");
        }
        return it->get<std::string>();
    };
    return TemplateProfile(TemplateSpec{
        .name = field("name"),
        .zero_shot_with_input = field("zero_shot_with_input"),
        .zero_shot_no_input = field("zero_shot_no_input"),
        .one_shot_frame = field("one_shot_frame"),
        .example_block = field("example_block"),
        .separator = field("separator"),
    });
}

std::string TemplateProfile::zero_shot(const InstructionSample& sample) const {
    if (sample.has_input()) {
        return with_input_.render({{"instruction", sample.instruction}, {"input", *sample.input}});
    }
    return no_input_.render({{"instruction", sample.instruction}});
}

std::string TemplateProfile::example_block(const InstructionSample& example,
                                           std::string_view example_response) const {
    const auto prompt = zero_shot(example);
    return example_.render({{"example_prompt", prompt}, {"example_response", example_response}});
}

std::string TemplateProfile::one_shot(std::string_view example_block,
                                      std::string_view target_block) const {
    return frame_.render({{"example_block", example_block},
                          {"separator", spec_.separator},
                          {"target_block", target_block}});
}

PromptText render_instruction(const InstructionSample& sample, const TemplateProfile& profile) {
    PromptText p;
    p.text = profile.zero_shot(sample);
    p.char_len = p.text.size();
    p.kind = PromptKind::ZeroShot;
    return p;
}

PromptText render_one_shot_prompt(const InstructionSample& example,
                                  const InstructionSample& target,
                                  const TemplateProfile& profile) {
    return render_one_shot_prompt(example, example.response, target, profile);
}

PromptText render_one_shot_prompt(const InstructionSample& example,
                                  std::string_view example_response,
                                  const InstructionSample& target,
                                  const TemplateProfile& profile) {
    if (example.id == target.id) {
        throw Error(ErrorKind::SameSample,
                    "sample " + std::to_string(target.id) + " cannot be its own example");
    }
    PromptText p;
    p.text = profile.one_shot(profile.example_block(example, example_response),
                              profile.zero_shot(target));
    p.char_len = p.text.size();
    p.kind = PromptKind::OneShot;
    return p;
}

}  // namespace miwv
