#pragma once

#include <cmath>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "hindcast/core/strings.hpp"
#include "hindcast/dataset/question.hpp"

namespace hindcast::parser {

enum class ParseFailure {
    no_box,
    empty_payload,
    unknown_token,
    out_of_range,
    unrecognized_type,
};

inline std::string to_string(ParseFailure f) {
    switch (f) {
        case ParseFailure::no_box: return "no_box";
        case ParseFailure::empty_payload: return "empty_payload";
        case ParseFailure::unknown_token: return "unknown_token";
        case ParseFailure::out_of_range: return "out_of_range";
        case ParseFailure::unrecognized_type: return "unrecognized_type";
    }
    return "no_box";
}

// Letter set on success, a single failure reason otherwise.
struct ParsedAnswer {
    std::optional<std::set<char>> value;
    ParseFailure failure = ParseFailure::no_box;

    bool ok() const { return value.has_value(); }
    static ParsedAnswer fail(ParseFailure f) { return {std::nullopt, f}; }
    static ParsedAnswer success(std::set<char> letters) {
        return {std::move(letters), ParseFailure::no_box};
    }
};

// Payload of the last \boxed{...} occurrence. The marker is
// harness-prescribed, so nested braces in the payload are not supported: a
// '{' before the closing '}' invalidates that occurrence.
inline std::optional<std::string> extract_last_boxed(std::string_view text) {
    constexpr std::string_view marker = "\\boxed{";
    size_t search_end = text.size();
    for (;;) {
        size_t open = text.rfind(marker, search_end == 0 ? 0 : search_end - 1);
        if (open == std::string_view::npos || open + marker.size() > search_end)
            return std::nullopt;
        size_t payload_start = open + marker.size();
        size_t close = std::string_view::npos;
        bool nested = false;
        for (size_t i = payload_start; i < text.size(); ++i) {
            if (text[i] == '{') {
                nested = true;
                break;
            }
            if (text[i] == '}') {
                close = i;
                break;
            }
        }
        if (!nested && close != std::string_view::npos)
            return std::string(text.substr(payload_start, close - payload_start));
        // Malformed last occurrence; earlier ones are not consulted.
        return std::nullopt;
    }
}

// Shape metadata the parser dispatches on; no gold material.
struct QuestionShape {
    dataset::QuestionType question_type = dataset::QuestionType::multiple_choice;
    dataset::ChoiceType choice_type = dataset::ChoiceType::single;
    std::vector<std::string> options;
};

namespace detail {

inline ParsedAnswer parse_yes_no(std::string_view payload) {
    auto p = to_lower(strip(payload));
    if (p == "yes") return ParsedAnswer::success({'A'});
    if (p == "no") return ParsedAnswer::success({'B'});
    return ParsedAnswer::fail(ParseFailure::unknown_token);
}

inline ParsedAnswer parse_binary_named(std::string_view payload,
                                       const std::vector<std::string>& options) {
    auto p = to_lower(strip(payload));
    for (size_t i = 0; i < options.size(); ++i)
        if (to_lower(strip(options[i])) == p)
            return ParsedAnswer::success({dataset::option_letter(i)});
    return ParsedAnswer::fail(ParseFailure::unknown_token);
}

inline ParsedAnswer parse_multiple_choice(std::string_view payload,
                                          const std::vector<std::string>& options) {
    std::vector<std::string> tokens;
    std::string current;
    for (char c : payload) {
        if (c == ',' || std::isspace(static_cast<unsigned char>(c))) {
            if (!current.empty()) tokens.push_back(std::move(current));
            current.clear();
        } else {
            current += c;
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    if (tokens.empty()) return ParsedAnswer::fail(ParseFailure::empty_payload);

    std::set<char> letters;  // duplicates collapse: the contract is a set
    for (auto& raw : tokens) {
        if (raw.size() != 1) return ParsedAnswer::fail(ParseFailure::unknown_token);
        std::string token = to_upper(raw);
        auto idx = dataset::letter_index(token);
        if (!idx) return ParsedAnswer::fail(ParseFailure::unknown_token);
        if (*idx >= options.size()) return ParsedAnswer::fail(ParseFailure::out_of_range);
        letters.insert(dataset::option_letter(*idx));
    }
    return ParsedAnswer::success(std::move(letters));
}

}  // namespace detail

// Deterministic extraction of the discrete prediction. Total over arbitrary
// byte strings; structural defects collapse into a reasoned failure.
inline ParsedAnswer parse_answer(std::string_view output, const QuestionShape& shape) {
    auto payload = extract_last_boxed(output);
    if (!payload) return ParsedAnswer::fail(ParseFailure::no_box);
    if (strip(*payload).empty()) return ParsedAnswer::fail(ParseFailure::empty_payload);
    switch (shape.question_type) {
        case dataset::QuestionType::yes_no:
            return detail::parse_yes_no(*payload);
        case dataset::QuestionType::binary_named:
            return detail::parse_binary_named(*payload, shape.options);
        case dataset::QuestionType::multiple_choice:
            return detail::parse_multiple_choice(*payload, shape.options);
    }
    return ParsedAnswer::fail(ParseFailure::unrecognized_type);
}

}  // namespace hindcast::parser
