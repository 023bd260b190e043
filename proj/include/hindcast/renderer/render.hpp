#pragma once

#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>

#include "hindcast/core/sha256.hpp"
#include "hindcast/dataset/question.hpp"
#include "hindcast/renderer/templates.hpp"

namespace hindcast::prompts {

// Six-stage investigation scaffold appended when the reflection protocol is
// enabled. Ships embedded so its fingerprint is stable across builds; a file
// override replaces it wholesale and shifts the recorded hash.
inline constexpr std::string_view kReflectionScaffold =
    "Work through this methodology before committing:\n"
    "1. Decompose the task into the sub-events that determine the outcome.\n"
    "2. List at least three distinct retrieval angles worth investigating.\n"
    "3. After each search, reflect on what the results change about your view.\n"
    "4. Cross-validate load-bearing claims against independent sources.\n"
    "5. Run a contrarian check: argue for the opposite outcome and see whether it survives.\n"
    "6. State your confidence (low / medium / high) before the final prediction.";

// Requested belief block, one probability line per candidate letter.
inline constexpr std::string_view kBeliefRequest =
    "In every reply that states or updates your thinking, include your current probability "
    "estimates in a <belief> block with one line per candidate letter, for example:\n"
    "<belief>\n"
    "A: 0.6\n"
    "B: 0.4\n"
    "</belief>\n"
    "For single-selection tasks the probabilities must sum to 1. For multi-selection tasks "
    "give an independent probability per letter.";

struct ProtocolConfig {
    bool reflection_enabled = false;
    bool belief_enabled = false;
    int step_cap = 6;
    int search_cap = 4;
    int lookahead = 2;
    std::string reflection_text = std::string(kReflectionScaffold);
    std::string belief_text = std::string(kBeliefRequest);

    void validate() const {
        if (step_cap < 1) throw std::invalid_argument("step cap must be >= 1");
        if (search_cap < 0) throw std::invalid_argument("search cap must be >= 0");
        if (lookahead < 1 || lookahead > step_cap)
            throw std::invalid_argument("lookahead must lie in [1, step cap]");
    }
};

inline std::string load_text_resource(const std::string& path, std::string_view builtin,
                                      const char* what) {
    if (path.empty()) return std::string(builtin);
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error(std::string(what) + " resource not readable: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Literal token replacement, single pass; replacement text is never
// re-scanned.
inline std::string replace_token(std::string_view text, std::string_view token,
                                 std::string_view value) {
    std::string out;
    size_t pos = 0;
    while (pos < text.size()) {
        size_t hit = text.find(token, pos);
        if (hit == std::string_view::npos) {
            out.append(text.substr(pos));
            break;
        }
        out.append(text.substr(pos, hit - pos));
        out.append(value);
        pos = hit + token.size();
    }
    return out;
}

inline std::string render_outcomes_block(const dataset::MaskedQuestion& q,
                                         const PromptTemplateSet& templates) {
    std::string block;
    for (size_t i = 0; i < q.options.size(); ++i) {
        if (i) block += '\n';
        block += render_placeholders(templates.outcomes_block_rule,
                                     {{"letter", std::string(1, dataset::option_letter(i))},
                                      {"label", q.options[i]}});
    }
    return block;
}

inline std::string select_output_format(const dataset::MaskedQuestion& q,
                                        const PromptTemplateSet& templates) {
    switch (q.question_type) {
        case dataset::QuestionType::yes_no:
            return templates.yes_no_output_format;
        case dataset::QuestionType::binary_named: {
            if (q.options.size() != 2)
                throw std::invalid_argument(q.id + ": binary question must have two options");
            std::string fmt = replace_token(templates.binary_named_output_format, "<options[0]>",
                                            q.options[0]);
            return replace_token(fmt, "<options[1]>", q.options[1]);
        }
        case dataset::QuestionType::multiple_choice:
            return q.choice_type == dataset::ChoiceType::multi
                       ? templates.multiple_choice_multi_output_format
                       : templates.multiple_choice_single_output_format;
    }
    throw std::invalid_argument("unrecognised question type");
}

// Pure function of (question view, templates). The prediction cutoff is
// harness state and is deliberately not rendered: the temporal boundary is
// enforced at the tool layer, never disclosed in text.
inline std::string render_user_prompt(const dataset::MaskedQuestion& q,
                                      const PromptTemplateSet& templates) {
    return render_placeholders(templates.prompt_template,
                               {{"agent_role", templates.agent_role},
                                {"event", q.event},
                                {"outcomes_block", render_outcomes_block(q, templates)},
                                {"output_format", select_output_format(q, templates)},
                                {"guidance", templates.guidance}});
}

inline std::string budget_footer(int step_cap, int search_cap) {
    std::string text = "[Budget] This task allows at most " + std::to_string(step_cap) +
                       " assistant turns and " + std::to_string(search_cap) +
                       " web_search calls in total";
    if (search_cap == 0) text += " (zero searches available)";
    text += ". You will be notified as limits approach.";
    return text;
}

struct RenderedPrompt {
    std::string text;
    std::optional<std::string> reflection_hash;  // sha256-16
    std::optional<std::string> belief_hash;      // sha256-16
};

// Stacks the runtime protocols onto the static rendered prompt. The budget
// footer is always present; disabled protocols leave the base untouched and
// report absent hashes. Each enabled scaffold is fingerprinted independently
// of the template hash.
inline RenderedPrompt append_protocols(const std::string& base, const ProtocolConfig& cfg) {
    cfg.validate();
    RenderedPrompt out;
    out.text = base;
    if (cfg.reflection_enabled) {
        out.text += "\n\n" + cfg.reflection_text;
        out.reflection_hash = sha256_16(cfg.reflection_text);
    }
    out.text += "\n\n" + budget_footer(cfg.step_cap, cfg.search_cap);
    if (cfg.belief_enabled) {
        out.text += "\n\n" + cfg.belief_text;
        out.belief_hash = sha256_16(cfg.belief_text);
    }
    return out;
}

}  // namespace hindcast::prompts
