#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "hindcast/core/sha256.hpp"
#include "hindcast/core/strings.hpp"

namespace hindcast::prompts {

// The eight renderer rules that travel with the dataset store.
struct PromptTemplateSet {
    std::string agent_role;
    std::string guidance;
    std::string prompt_template;
    std::string outcomes_block_rule;
    std::string yes_no_output_format;
    std::string binary_named_output_format;
    std::string multiple_choice_single_output_format;
    std::string multiple_choice_multi_output_format;

    static constexpr const char* key_names[8] = {
        "agent_role",
        "guidance",
        "prompt_template",
        "outcomes_block_rule",
        "yes_no_output_format",
        "binary_named_output_format",
        "multiple_choice_single_output_format",
        "multiple_choice_multi_output_format",
    };

    std::map<std::string, std::string> as_map() const {
        return {
            {"agent_role", agent_role},
            {"guidance", guidance},
            {"prompt_template", prompt_template},
            {"outcomes_block_rule", outcomes_block_rule},
            {"yes_no_output_format", yes_no_output_format},
            {"binary_named_output_format", binary_named_output_format},
            {"multiple_choice_single_output_format", multiple_choice_single_output_format},
            {"multiple_choice_multi_output_format", multiple_choice_multi_output_format},
        };
    }

    static PromptTemplateSet from_map(const std::map<std::string, std::string>& kv) {
        PromptTemplateSet t;
        auto need = [&](const char* key) -> const std::string& {
            auto it = kv.find(key);
            if (it == kv.end() || it->second.empty())
                throw std::invalid_argument(std::string("prompt template key missing or empty: ") +
                                            key);
            return it->second;
        };
        t.agent_role = need("agent_role");
        t.guidance = need("guidance");
        t.prompt_template = need("prompt_template");
        t.outcomes_block_rule = need("outcomes_block_rule");
        t.yes_no_output_format = need("yes_no_output_format");
        t.binary_named_output_format = need("binary_named_output_format");
        t.multiple_choice_single_output_format = need("multiple_choice_single_output_format");
        t.multiple_choice_multi_output_format = need("multiple_choice_multi_output_format");
        return t;
    }
};

// SHA-256 of the canonical key=value form: keys sorted lexicographically,
// one line per key, backslash/newline escaped so the encoding is injective.
inline std::string template_hash(const PromptTemplateSet& templates) {
    std::string canon;
    for (auto& [key, value] : templates.as_map()) {  // std::map iterates sorted
        canon += key;
        canon += '=';
        for (char c : value) {
            if (c == '\\')
                canon += "\\\\";
            else if (c == '\n')
                canon += "\\n";
            else
                canon += c;
        }
        canon += '\n';
    }
    return sha256_hex(canon);
}

// Named-brace substitution with {{ / }} escaping. Substituted values are
// emitted verbatim, never re-scanned. Unknown placeholders raise, naming the
// key.
inline std::string render_placeholders(std::string_view tmpl,
                                       const std::map<std::string, std::string>& vars) {
    std::string out;
    out.reserve(tmpl.size());
    for (size_t i = 0; i < tmpl.size(); ++i) {
        char c = tmpl[i];
        if (c == '{') {
            if (i + 1 < tmpl.size() && tmpl[i + 1] == '{') {
                out += '{';
                ++i;
                continue;
            }
            size_t close = tmpl.find('}', i + 1);
            if (close == std::string_view::npos)
                throw std::invalid_argument("unterminated placeholder in template");
            std::string key(tmpl.substr(i + 1, close - i - 1));
            auto it = vars.find(key);
            if (it == vars.end())
                throw std::invalid_argument("unresolvable template placeholder: " + key);
            out += it->second;
            i = close;
        } else if (c == '}') {
            if (i + 1 < tmpl.size() && tmpl[i + 1] == '}') {
                out += '}';
                ++i;
                continue;
            }
            throw std::invalid_argument("stray '}' in template");
        } else {
            out += c;
        }
    }
    return out;
}

inline PromptTemplateSet default_templates() {
    PromptTemplateSet t;
    t.agent_role =
        "You are a careful forecasting analyst. You weigh the evidence available to you, "
        "reason about how the situation is likely to resolve, and commit to a discrete "
        "final prediction.";
    t.guidance =
        "Reason step by step. Use the web_search tool when external evidence would change "
        "your view. When you are ready, give your final prediction exactly once inside "
        "\\boxed{...} following the format above, and do not write any further \\boxed{...} "
        "expression after it.";
    t.prompt_template =
        "{agent_role}\n\n"
        "Forecasting task:\n{event}\n\n"
        "Candidate outcomes:\n{outcomes_block}\n\n"
        "Required format for the final prediction:\n{output_format}\n\n"
        "{guidance}";
    t.outcomes_block_rule = "{letter}. {label}";
    t.yes_no_output_format = "Reply with \\boxed{yes} or \\boxed{no}.";
    t.binary_named_output_format =
        "Reply with the exact name of your chosen outcome inside \\boxed{...}: either "
        "\\boxed{<options[0]>} or \\boxed{<options[1]>}.";
    t.multiple_choice_single_output_format =
        "Reply with the single letter of your chosen outcome inside \\boxed{...}, for "
        "example \\boxed{A}.";
    t.multiple_choice_multi_output_format =
        "Reply with every letter you select inside one \\boxed{...}, separated by commas, "
        "for example \\boxed{A, C}.";
    return t;
}

}  // namespace hindcast::prompts
