#pragma once

#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "hindcast/core/dates.hpp"
#include "hindcast/core/strings.hpp"

namespace hindcast::dataset {

enum class ChoiceType { single, multi };
enum class QuestionType { yes_no, binary_named, multiple_choice };

inline std::string to_string(ChoiceType c) {
    return c == ChoiceType::single ? "single" : "multi";
}
inline std::string to_string(QuestionType q) {
    switch (q) {
        case QuestionType::yes_no: return "yes_no";
        case QuestionType::binary_named: return "binary_named";
        case QuestionType::multiple_choice: return "multiple_choice";
    }
    return "multiple_choice";
}

inline std::optional<ChoiceType> choice_type_from(std::string_view s) {
    if (s == "single") return ChoiceType::single;
    if (s == "multi") return ChoiceType::multi;
    return std::nullopt;
}
inline std::optional<QuestionType> question_type_from(std::string_view s) {
    if (s == "yes_no") return QuestionType::yes_no;
    if (s == "binary_named") return QuestionType::binary_named;
    if (s == "multiple_choice") return QuestionType::multiple_choice;
    return std::nullopt;
}

// Letters are assigned A, B, C, ... by option index.
inline char option_letter(size_t index) {
    if (index >= 26) throw std::out_of_range("option index beyond letter range");
    return static_cast<char>('A' + index);
}

// Index of an uppercase option letter, or nullopt when the token is not a
// single letter.
inline std::optional<size_t> letter_index(std::string_view token) {
    if (token.size() != 1) return std::nullopt;
    char c = token[0];
    if (c >= 'A' && c <= 'Z') return static_cast<size_t>(c - 'A');
    return std::nullopt;
}

// Canonical "A, B" encoding of a letter set.
inline std::string letters_to_string(const std::set<char>& letters) {
    std::string out;
    for (char c : letters) {
        if (!out.empty()) out += ", ";
        out += c;
    }
    return out;
}

inline std::set<char> letters_from_string(std::string_view encoded) {
    std::set<char> out;
    for (auto& tok : split_list(encoded)) {
        if (tok.size() != 1 || tok[0] < 'A' || tok[0] > 'Z')
            throw std::invalid_argument("malformed letter encoding: " + std::string(encoded));
        out.insert(tok[0]);
    }
    return out;
}

// One resolved event. The answer and resolution time are scoring-only; they
// never travel with the masked view handed to inference.
struct Question {
    std::string id;
    ChoiceType choice_type = ChoiceType::single;
    QuestionType question_type = QuestionType::multiple_choice;
    std::string event;
    std::vector<std::string> options;
    std::set<char> answer;
    Date end_time;

    void validate() const {
        if (options.size() < 2) throw std::invalid_argument(id + ": needs at least two options");
        if (answer.empty()) throw std::invalid_argument(id + ": empty answer set");
        if (choice_type == ChoiceType::single && answer.size() != 1)
            throw std::invalid_argument(id + ": single-answer question with multiple letters");
        for (char c : answer)
            if (static_cast<size_t>(c - 'A') >= options.size())
                throw std::invalid_argument(id + ": answer letter outside option range");
    }
};

struct MaskedQuestion {
    std::string id;
    std::string event;
    std::vector<std::string> options;
    QuestionType question_type = QuestionType::multiple_choice;
    ChoiceType choice_type = ChoiceType::single;
    Date prediction_cutoff;
};

// Field projection: drops the gold answer and the resolution time, computes
// chi = tau - delta.
inline MaskedQuestion mask(const Question& q, std::int64_t delta_days) {
    return MaskedQuestion{
        q.id, q.event, q.options, q.question_type, q.choice_type,
        prediction_cutoff(q.end_time, delta_days),
    };
}

enum class AdmissibilityReason { ok, skipped_training_cutoff, invalid_window };

struct AdmissibilityVerdict {
    bool admissible = false;
    AdmissibilityReason reason = AdmissibilityReason::invalid_window;
};

inline std::string to_string(AdmissibilityReason r) {
    switch (r) {
        case AdmissibilityReason::ok: return "ok";
        case AdmissibilityReason::skipped_training_cutoff: return "skipped_training_cutoff";
        case AdmissibilityReason::invalid_window: return "invalid_window";
    }
    return "invalid_window";
}

// kappa <= chi < tau with chi = tau - delta. Total: never throws.
inline AdmissibilityVerdict admissible(const Question& q, const Date& model_cutoff,
                                       std::int64_t delta_days) {
    if (delta_days < 1) return {false, AdmissibilityReason::invalid_window};
    Date chi = q.end_time.minus_days(delta_days);
    if (model_cutoff > chi) return {false, AdmissibilityReason::skipped_training_cutoff};
    return {true, AdmissibilityReason::ok};
}

}  // namespace hindcast::dataset
