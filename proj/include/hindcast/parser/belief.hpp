#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hindcast/core/strings.hpp"
#include "hindcast/dataset/question.hpp"
#include "hindcast/parser/answer.hpp"

namespace hindcast::parser {

// Per-option probabilities, clipped to [eps, 1-eps] after validation.
// Single-answer questions constrain the simplex; multi-answer entries are
// independent Bernoulli values.
struct BeliefVector {
    std::vector<double> probabilities;  // indexed by option position
    dataset::ChoiceType regime = dataset::ChoiceType::single;

    static constexpr double kEpsilon = 1e-3;
    static constexpr double kSimplexTolerance = 1e-3;
};

namespace detail {

// One "<letter>: <value>" line; anything else is not a belief entry.
inline std::optional<std::pair<char, double>> parse_belief_line(std::string_view line) {
    auto t = strip(line);
    if (t.size() < 3) return std::nullopt;
    char letter = t[0];
    if (letter < 'A' || letter > 'Z') return std::nullopt;
    if (t[1] != ':') return std::nullopt;
    std::string rest(strip(t.substr(2)));
    if (rest.empty()) return std::nullopt;
    try {
        size_t consumed = 0;
        double value = std::stod(rest, &consumed);
        if (consumed != rest.size() || !std::isfinite(value)) return std::nullopt;
        return std::make_pair(letter, value);
    } catch (...) {
        return std::nullopt;
    }
}

}  // namespace detail

// Extracts every <belief>...</belief> block in order of appearance. The loop
// uses the per-step sequence as the belief trace; scoring uses the last one.
inline std::vector<std::string> extract_belief_blocks(std::string_view text) {
    std::vector<std::string> blocks;
    constexpr std::string_view open_tag = "<belief>";
    constexpr std::string_view close_tag = "</belief>";
    size_t pos = 0;
    for (;;) {
        size_t open = text.find(open_tag, pos);
        if (open == std::string_view::npos) break;
        size_t close = text.find(close_tag, open + open_tag.size());
        if (close == std::string_view::npos) break;
        blocks.emplace_back(text.substr(open + open_tag.size(), close - open - open_tag.size()));
        pos = close + close_tag.size();
    }
    return blocks;
}

// Validates one belief block against the question shape. Requires exactly one
// entry per option letter; the simplex constraint applies before clipping.
inline std::optional<BeliefVector> parse_belief_block(std::string_view block,
                                                      const QuestionShape& shape) {
    size_t k = shape.options.size();
    std::vector<std::optional<double>> by_index(k);
    size_t entries = 0;
    for (auto& line : split(std::string(block), '\n')) {
        auto entry = detail::parse_belief_line(line);
        if (!entry) continue;
        size_t idx = static_cast<size_t>(entry->first - 'A');
        if (idx >= k) return std::nullopt;  // letter outside the option range
        if (by_index[idx]) return std::nullopt;  // duplicate entry
        if (entry->second < 0.0 || entry->second > 1.0) return std::nullopt;
        by_index[idx] = entry->second;
        ++entries;
    }
    if (entries != k) return std::nullopt;  // wrong arity

    BeliefVector out;
    out.regime = shape.choice_type;
    for (auto& v : by_index) out.probabilities.push_back(*v);

    if (shape.choice_type == dataset::ChoiceType::single) {
        double sum = 0;
        for (double p : out.probabilities) sum += p;
        if (std::abs(sum - 1.0) > BeliefVector::kSimplexTolerance) return std::nullopt;
    }
    for (double& p : out.probabilities)
        p = std::min(1.0 - BeliefVector::kEpsilon, std::max(BeliefVector::kEpsilon, p));
    return out;
}

// Last belief block in the output; a failure here never affects the discrete
// answer path.
inline std::optional<BeliefVector> parse_belief(std::string_view output,
                                                const QuestionShape& shape) {
    auto blocks = extract_belief_blocks(output);
    if (blocks.empty()) return std::nullopt;
    return parse_belief_block(blocks.back(), shape);
}

// Self-reported linguistic confidence bin. Scans for "confidence" followed by
// low / medium / high within the same clause; the last statement wins.
inline std::optional<std::string> extract_linguistic_confidence(std::string_view text) {
    std::string lower = to_lower(text);
    auto is_word_at = [&](std::string_view word, size_t at) {
        if (at + word.size() > lower.size()) return false;
        if (lower.compare(at, word.size(), word) != 0) return false;
        bool left_ok = at == 0 || !std::isalpha(static_cast<unsigned char>(lower[at - 1]));
        size_t end = at + word.size();
        bool right_ok =
            end == lower.size() || !std::isalpha(static_cast<unsigned char>(lower[end]));
        return left_ok && right_ok;
    };
    std::optional<std::string> found;
    size_t pos = 0;
    while ((pos = lower.find("confidence", pos)) != std::string::npos) {
        size_t window_end = std::min(lower.size(), pos + 32);
        size_t best = std::string::npos;
        const char* label = nullptr;
        for (const char* bin : {"low", "medium", "high"}) {
            std::string_view word(bin);
            for (size_t at = pos; at + word.size() <= window_end; ++at) {
                if (is_word_at(word, at)) {
                    if (at < best) {
                        best = at;
                        label = bin;
                    }
                    break;
                }
            }
        }
        if (label) found = label;
        pos += 10;
    }
    return found;
}

// Last line mentioning counterevidence, verbatim; feeds the engagement flag.
inline std::optional<std::string> extract_counterevidence_note(std::string_view text) {
    std::optional<std::string> found;
    for (auto& line : split(std::string(text), '\n'))
        if (contains(to_lower(line), "counterevidence")) found = line;
    return found;
}

}  // namespace hindcast::parser
