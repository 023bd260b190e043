#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hindcast/core/sha256.hpp"
#include "hindcast/dataset/question.hpp"
#include "hindcast/dataset/store.hpp"

namespace hindcast::dataset {

// Source row as it arrives from the upstream corpus. Answers may name options
// by letter ("A") or by full label text.
struct RawRecord {
    std::string id;
    std::string event;
    std::vector<std::string> options;
    std::vector<std::string> answer_labels;
    std::string end_time;
    std::string question_type;  // optional; inferred when empty
    std::string choice_type;    // optional; inferred when empty

    static RawRecord from_json(const nlohmann::json& j) {
        RawRecord r;
        r.id = j.value("id", "");
        r.event = j.value("event", "");
        if (j.contains("options"))
            for (auto& o : j.at("options")) r.options.push_back(o.get<std::string>());
        if (j.contains("answer")) {
            if (j.at("answer").is_array())
                for (auto& a : j.at("answer")) r.answer_labels.push_back(a.get<std::string>());
            else
                r.answer_labels.push_back(j.at("answer").get<std::string>());
        }
        r.end_time = j.value("end_time", "");
        r.question_type = j.value("question_type", "");
        r.choice_type = j.value("choice_type", "");
        return r;
    }
};

enum class AuditAction { keep, rewrite, reject };

struct AuditDecision {
    AuditAction action = AuditAction::keep;
    std::string rewritten_event;  // used when action == rewrite
    std::string note;
};

// Construction-time review hook. The real corpus audit is a human process;
// the harness only exposes the gate.
class AuditGate {
public:
    virtual ~AuditGate() = default;
    virtual AuditDecision review(const Question& q, const std::vector<std::string>& flags) = 0;
};

class PassThroughGate : public AuditGate {
public:
    AuditDecision review(const Question&, const std::vector<std::string>&) override {
        return {AuditAction::keep, "", ""};
    }
};

// Keeps only rows whose id appears in a pre-approved manifest.
class ApprovedIdsGate : public AuditGate {
public:
    explicit ApprovedIdsGate(std::set<std::string> ids) : ids_(std::move(ids)) {}
    AuditDecision review(const Question& q, const std::vector<std::string>&) override {
        if (ids_.count(q.id)) return {AuditAction::keep, "", ""};
        return {AuditAction::reject, "", "not in approved-id manifest"};
    }

private:
    std::set<std::string> ids_;
};

struct RejectedRow {
    size_t source_index;
    std::string id;
    std::string reason;
};

struct BuildReport {
    size_t n_source = 0;
    size_t n_kept = 0;
    std::vector<RejectedRow> rejected;
    std::string source_db_hash;
    std::string metadata_hash;
};

namespace detail {

inline std::optional<std::string> normalize_row(const RawRecord& r, size_t index, Question& out) {
    if (r.event.empty()) return "missing event text";
    if (r.options.size() < 2) return "fewer than two options";
    if (r.options.size() > 26) return "more than 26 options";
    for (auto& o : r.options)
        if (std::string_view(strip(o)).empty()) return "blank option label";
    if (r.answer_labels.empty()) return "empty answer set";
    auto end = Date::parse_iso(r.end_time);
    if (!end) return "unparseable end_time: " + r.end_time;

    out.id = r.id.empty() ? "q" + std::to_string(index) : r.id;
    out.event = r.event;
    out.options = r.options;
    out.end_time = *end;

    // Question type: explicit when given, otherwise inferred from the option
    // surface. The yes/no family is canonicalised to options [yes, no] so the
    // letter mapping yes->A, no->B holds downstream.
    if (!r.question_type.empty()) {
        auto qt = question_type_from(r.question_type);
        if (!qt) return "unrecognised question_type: " + r.question_type;
        out.question_type = *qt;
    } else if (r.options.size() == 2 && to_lower(strip(r.options[0])) == "yes" &&
               to_lower(strip(r.options[1])) == "no") {
        out.question_type = QuestionType::yes_no;
    } else if (r.options.size() == 2) {
        out.question_type = QuestionType::binary_named;
    } else {
        out.question_type = QuestionType::multiple_choice;
    }
    if (out.question_type == QuestionType::yes_no) {
        if (r.options.size() != 2) return "yes/no row without exactly two options";
        out.options = {"yes", "no"};
    }

    // Answers resolve to letters either directly or by label equality.
    for (auto& label : r.answer_labels) {
        std::string t(strip(label));
        if (auto idx = letter_index(t); idx && *idx < out.options.size()) {
            out.answer.insert(option_letter(*idx));
            continue;
        }
        bool matched = false;
        for (size_t i = 0; i < out.options.size(); ++i) {
            if (to_lower(strip(out.options[i])) == to_lower(t)) {
                out.answer.insert(option_letter(i));
                matched = true;
                break;
            }
        }
        if (!matched) return "answer label matches no option: " + t;
    }

    if (!r.choice_type.empty()) {
        auto ct = choice_type_from(r.choice_type);
        if (!ct) return "unrecognised choice_type: " + r.choice_type;
        out.choice_type = *ct;
    } else {
        out.choice_type = out.answer.size() > 1 ? ChoiceType::multi : ChoiceType::single;
    }
    if (out.question_type != QuestionType::multiple_choice &&
        out.choice_type == ChoiceType::multi)
        return "multi-answer mode is only valid for multiple_choice";
    if (out.choice_type == ChoiceType::single && out.answer.size() != 1)
        return "single-answer row with multiple answer letters";
    return std::nullopt;
}

}  // namespace detail

// Materialises the corpus: filters malformed rows (logged, never silently
// dropped), runs the audit gate, writes the three tables, and fingerprints
// the result. Deterministic: byte-identical source yields a byte-identical
// store.
inline BuildReport build_dataset(const std::vector<RawRecord>& source_rows,
                                 const std::string& store_path, AuditGate& gate,
                                 const prompts::PromptTemplateSet& templates =
                                     prompts::default_templates()) {
    BuildReport report;
    report.n_source = source_rows.size();

    std::remove(store_path.c_str());
    std::vector<Question> kept;
    for (size_t i = 0; i < source_rows.size(); ++i) {
        Question q;
        if (auto reason = detail::normalize_row(source_rows[i], i, q)) {
            report.rejected.push_back({i, source_rows[i].id, *reason});
            continue;
        }
        auto decision = gate.review(q, {});
        if (decision.action == AuditAction::reject) {
            report.rejected.push_back({i, q.id, "audit gate: " + decision.note});
            continue;
        }
        if (decision.action == AuditAction::rewrite) q.event = decision.rewritten_event;
        q.validate();
        kept.push_back(std::move(q));
    }

    std::map<std::string, int> qt_counts, ct_counts;
    for (auto& q : kept) {
        ++qt_counts[to_string(q.question_type)];
        ++ct_counts[to_string(q.choice_type)];
    }
    nlohmann::json features = {
        {"format_version", 1},
        {"question_count", kept.size()},
        {"question_type_counts", qt_counts},
        {"choice_type_counts", ct_counts},
        {"prompt_reconstruction", templates.as_map()},
    };
    std::string features_canonical = features.dump();
    report.metadata_hash = sha256_hex(features_canonical);

    {
        Store store = Store::create(store_path);
        for (auto& q : kept) store.insert_question(q);
        store.write_templates(templates);
        store.write_metadata("features_json", features_canonical);
        store.write_metadata("metadata_hash", report.metadata_hash);
    }  // closed before hashing the file

    report.n_kept = kept.size();
    report.source_db_hash = sha256_file(store_path);
    return report;
}

}  // namespace hindcast::dataset
