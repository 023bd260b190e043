#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hindcast/dataset/store.hpp"
#include "hindcast/leakfilter/leakfilter.hpp"
#include "hindcast/metrics/aggregate.hpp"
#include "hindcast/react/loop.hpp"
#include "hindcast/store/run_store.hpp"

namespace hindcast::analysis {

struct ModelRecords {
    std::string model;  // virtual slug
    store::RunSpec spec;
    std::vector<metrics::QuestionRecord> questions;
};

namespace detail {

inline metrics::TrialOutcome to_outcome(const store::TrialDb::TrialRead& t,
                                        const dataset::Question& q) {
    metrics::TrialOutcome out;
    bool created = t.created_at.has_value();
    bool skipped = t.error && *t.error == "skipped_training_cutoff";
    bool transport_error = t.error && !skipped;
    out.counted = created && !skipped && !transport_error;
    if (!out.counted) return out;
    if (t.final_answer_letters) {
        out.parse_valid = true;
        out.predicted = dataset::letters_from_string(*t.final_answer_letters);
    }
    if (t.final_answer_raw) {
        out.linguistic_confidence = parser::extract_linguistic_confidence(*t.final_answer_raw);
        out.counterevidence_note = parser::extract_counterevidence_note(*t.final_answer_raw);
    }
    if (t.belief_final) {
        nlohmann::json p = nlohmann::json::parse(*t.belief_final, nullptr, false);
        if (p.is_array() && p.size() == q.options.size()) {
            parser::BeliefVector b;
            b.regime = q.choice_type;
            for (auto& v : p) b.probabilities.push_back(v.get<double>());
            out.belief = b;
        }
    }
    if (t.belief_trace) {
        nlohmann::json traces = nlohmann::json::parse(*t.belief_trace, nullptr, false);
        if (traces.is_array()) {
            for (auto& step : traces) {
                if (!step.is_array() || step.size() != q.options.size()) continue;
                parser::BeliefVector b;
                b.regime = q.choice_type;
                for (auto& v : step) b.probabilities.push_back(v.get<double>());
                out.belief_trace.push_back(std::move(b));
            }
        }
    }
    nlohmann::json calls = nlohmann::json::parse(t.search_calls_json, nullptr, false);
    if (calls.is_array())
        for (auto& c : calls)
            if (c.value("executed", false)) ++out.search_calls;
    return out;
}

}  // namespace detail

// Joins one model database against the dataset store's gold columns.
inline ModelRecords load_model_records(const std::filesystem::path& db_path,
                                       dataset::Store& ds) {
    int n_trials = 3;
    std::string model = db_path.stem().string();
    store::RunSpec spec;
    {
        store::TrialDb probe(db_path.string(), 1);
        if (auto meta = probe.read_meta("run_spec")) {
            spec = store::RunSpec::from_json(nlohmann::json::parse(*meta));
            n_trials = spec.trials;
        }
        if (auto m = probe.read_meta("model")) model = *m;
    }
    store::TrialDb db(db_path.string(), n_trials);

    std::map<std::string, dataset::Question> by_id;
    for (auto& q : ds.load_questions()) by_id[q.id] = q;

    ModelRecords out;
    out.model = model;
    out.spec = spec;
    for (auto& row : db.read_rows()) {
        auto it = by_id.find(row.q_id);
        if (it == by_id.end()) continue;  // question left the corpus
        const dataset::Question& q = it->second;
        metrics::QuestionRecord rec;
        rec.id = q.id;
        rec.question_type = q.question_type;
        rec.choice_type = q.choice_type;
        rec.k = q.options.size();
        rec.gold = q.answer;
        for (auto& t : row.trials) rec.trials.push_back(detail::to_outcome(t, q));
        out.questions.push_back(std::move(rec));
    }
    return out;
}

inline std::vector<std::filesystem::path> model_db_paths(const std::filesystem::path& run_dir) {
    std::vector<std::filesystem::path> out;
    auto db_dir = run_dir / "db";
    if (!std::filesystem::exists(db_dir)) return out;
    for (auto& entry : std::filesystem::directory_iterator(db_dir))
        if (entry.path().extension() == ".db") out.push_back(entry.path());
    std::sort(out.begin(), out.end());
    return out;
}

// Per-model summaries with leave-one-out crowd baselines where belief data
// exists on at least two models.
inline std::vector<metrics::ModelSummary> summarize_run(
    const std::vector<std::filesystem::path>& run_dirs, dataset::Store& ds,
    const std::map<std::string, double>& costs_by_model = {}) {
    std::vector<ModelRecords> records;
    for (auto& dir : run_dirs)
        for (auto& db_path : model_db_paths(dir)) records.push_back(load_model_records(db_path, ds));
    std::sort(records.begin(), records.end(),
              [](const ModelRecords& a, const ModelRecords& b) { return a.model < b.model; });

    std::map<std::string, std::map<std::string, double>> brier_by_model;
    for (auto& r : records) brier_by_model[r.model] = metrics::per_question_brier(r.questions);

    std::vector<metrics::ModelSummary> out;
    for (auto& r : records) {
        std::map<std::string, double> crowd;
        for (auto& [other, per_q] : brier_by_model) {
            if (other == r.model) continue;
            for (auto& [qid, bs] : per_q) {
                auto [it, inserted] = crowd.try_emplace(qid, 0.0);
                it->second += bs;
            }
        }
        std::map<std::string, int> contributors;
        for (auto& [other, per_q] : brier_by_model) {
            if (other == r.model) continue;
            for (auto& [qid, _] : per_q) ++contributors[qid];
        }
        for (auto& [qid, sum] : crowd) sum /= contributors[qid];

        std::optional<double> cost;
        if (auto it = costs_by_model.find(r.model); it != costs_by_model.end()) cost = it->second;
        if (!cost) {
            auto plain = store::parse_virtual_slug(r.model).real;
            if (auto it = costs_by_model.find(plain); it != costs_by_model.end())
                cost = it->second;
        }
        out.push_back(metrics::summarize_model(r.model, r.questions, cost, r.spec.trials,
                                               crowd.empty() ? nullptr : &crowd));
    }
    return out;
}

namespace detail {

inline std::string cell(const std::optional<double>& v) {
    if (!v) return "";  // absent metrics serialize as empty cells, never 0
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", *v);
    return buf;
}

inline std::string csv_safe(std::string s) {
    for (auto& c : s)
        if (c == ',' || c == '\n') c = ';';
    return s;
}

}  // namespace detail

inline std::string per_model_summary_csv(const std::vector<metrics::ModelSummary>& summaries) {
    std::string out =
        "model,n_questions,n_trials_counted,valid_rate,composite_accuracy,exam_yes_no,"
        "exam_binary,exam_mc,exam_mc_single,exam_mc_multi,pass1_avg,pass_any_at_n,"
        "pass_all_at_n,cohen_kappa,fleiss_kappa,fss,total_cost,per_correct_cost,bi,"
        "abi_uniform,abi_crowd,mean_nll,mean_mbs,hamming,mv_acc,mv_gain,mean_entropy,vci,"
        "entropy_acc_low,entropy_acc_mid,entropy_acc_high,mean_volatility,mean_sigma,"
        "mean_convergence_step,mean_evidence_efficiency,counter_evidence_rate,"
        "calibration_conflict\n";
    for (auto& s : summaries) {
        out += detail::csv_safe(s.model) + "," + std::to_string(s.n_questions) + "," +
               std::to_string(s.n_trials_counted) + "," + detail::cell(s.valid_rate) + "," +
               detail::cell(s.composite_accuracy) + "," + detail::cell(s.exam_yes_no) + "," +
               detail::cell(s.exam_binary) + "," + detail::cell(s.exam_mc) + "," +
               detail::cell(s.exam_mc_single) + "," + detail::cell(s.exam_mc_multi) + "," +
               detail::cell(s.pass1_avg) + "," + detail::cell(s.pass_any) + "," +
               detail::cell(s.pass_all) + "," + detail::cell(s.cohen_kappa) + "," +
               detail::cell(s.fleiss_kappa) + "," + detail::cell(s.fss) + "," +
               detail::cell(s.total_cost) + "," + detail::cell(s.per_correct_cost) + "," +
               detail::cell(s.bi) + "," + detail::cell(s.abi_uniform) + "," +
               detail::cell(s.abi_crowd) + "," + detail::cell(s.mean_nll) + "," +
               detail::cell(s.mean_mbs) + "," + detail::cell(s.hamming) + "," +
               detail::cell(s.mv_acc) + "," + detail::cell(s.mv_gain) + "," +
               detail::cell(s.mean_entropy) + "," + detail::cell(s.vci) + "," +
               detail::cell(s.entropy_acc_low) + "," + detail::cell(s.entropy_acc_mid) + "," +
               detail::cell(s.entropy_acc_high) + "," + detail::cell(s.mean_volatility) + "," +
               detail::cell(s.mean_sigma) + "," + detail::cell(s.mean_convergence_step) + "," +
               detail::cell(s.mean_evidence_efficiency) + "," +
               detail::cell(s.counter_evidence_rate) + "," +
               detail::cell(s.calibration_conflict) + "\n";
    }
    return out;
}

inline std::string bucket_slice_csv(const std::vector<metrics::ModelSummary>& summaries) {
    std::string out = "model,yes_no,binary,mc_single,mc_multi\n";
    for (auto& s : summaries)
        out += detail::csv_safe(s.model) + "," + detail::cell(s.exam_yes_no) + "," +
               detail::cell(s.exam_binary) + "," + detail::cell(s.exam_mc_single) + "," +
               detail::cell(s.exam_mc_multi) + "\n";
    return out;
}

inline std::string consistency_csv(const std::vector<metrics::ModelSummary>& summaries) {
    std::string out = "model,pass1_avg,pass_any_at_n,pass_all_at_n,cohen_kappa,fleiss_kappa,fss\n";
    for (auto& s : summaries)
        out += detail::csv_safe(s.model) + "," + detail::cell(s.pass1_avg) + "," +
               detail::cell(s.pass_any) + "," + detail::cell(s.pass_all) + "," +
               detail::cell(s.cohen_kappa) + "," + detail::cell(s.fleiss_kappa) + "," +
               detail::cell(s.fss) + "\n";
    return out;
}

inline void write_reports(const std::filesystem::path& analysis_dir,
                          const std::vector<metrics::ModelSummary>& summaries) {
    std::filesystem::create_directories(analysis_dir);
    std::ofstream(analysis_dir / "per_model_summary.csv") << per_model_summary_csv(summaries);
    std::ofstream(analysis_dir / "bucket_slice.csv") << bucket_slice_csv(summaries);
    std::ofstream(analysis_dir / "consistency.csv") << consistency_csv(summaries);
}

// --- Leakage-audit sampling ---

struct AuditPlan {
    std::vector<std::string> models;  // virtual slugs; empty = first three found
    int questions_per_model = 30;
    int trials = 3;
    int results_per_item = 1;
    std::uint64_t seed = 0;
};

struct AuditSheetRow {
    std::string model;
    std::string q_id;
    int trial = 0;
    int call_index = 0;
    int result_index = 0;
    std::string published_date;
    std::string detector_verdict;
};

// Uniform, seeded sampling of one search result per (question, trial) item.
// The seed lands in the sheet header so the sample is replayable.
inline std::vector<AuditSheetRow> sample_audit_rows(
    const std::vector<std::filesystem::path>& run_dirs, const AuditPlan& plan,
    std::vector<std::string>* skipped_items = nullptr) {
    std::mt19937_64 rng(plan.seed);
    std::vector<AuditSheetRow> rows;

    std::vector<std::pair<std::string, std::filesystem::path>> model_dbs;
    for (auto& dir : run_dirs) {
        for (auto& db_path : model_db_paths(dir)) {
            store::TrialDb probe(db_path.string(), 1);
            std::string model = probe.read_meta("model").value_or(db_path.stem().string());
            model_dbs.push_back({model, db_path});
        }
    }
    std::sort(model_dbs.begin(), model_dbs.end());
    if (!plan.models.empty()) {
        std::vector<std::pair<std::string, std::filesystem::path>> filtered;
        for (auto& [m, p] : model_dbs)
            if (std::find(plan.models.begin(), plan.models.end(), m) != plan.models.end())
                filtered.push_back({m, p});
        model_dbs = filtered;
    } else if (model_dbs.size() > 3) {
        model_dbs.resize(3);
    }

    for (auto& [model, db_path] : model_dbs) {
        int n_trials = 3;
        {
            store::TrialDb probe(db_path.string(), 1);
            if (auto meta = probe.read_meta("run_spec"))
                n_trials = store::RunSpec::from_json(nlohmann::json::parse(*meta)).trials;
        }
        store::TrialDb db(db_path.string(), n_trials);
        auto all_rows = db.read_rows();

        std::vector<size_t> indices(all_rows.size());
        for (size_t i = 0; i < indices.size(); ++i) indices[i] = i;
        std::shuffle(indices.begin(), indices.end(), rng);
        size_t take = std::min<size_t>(plan.questions_per_model, indices.size());

        for (size_t pick = 0; pick < take; ++pick) {
            const auto& row = all_rows[indices[pick]];
            int trials_to_audit = std::min(plan.trials, static_cast<int>(row.trials.size()));
            for (int j = 0; j < trials_to_audit; ++j) {
                nlohmann::json calls =
                    nlohmann::json::parse(row.trials[j].search_calls_json, nullptr, false);
                struct Candidate {
                    int call_index;
                    int result_index;
                    std::string date;
                    std::string verdict;
                };
                std::vector<Candidate> candidates;
                if (calls.is_array()) {
                    int call_idx = 0;
                    for (auto& c : calls) {
                        ++call_idx;
                        if (!c.value("executed", false) || !c.contains("audit")) continue;
                        auto audit = leakfilter::AuditRecord::from_json(c["audit"]);
                        for (int r = 0; r < audit.n_results_raw; ++r) {
                            std::string date =
                                r < static_cast<int>(audit.published_dates_raw.size()) &&
                                        audit.published_dates_raw[r]
                                    ? *audit.published_dates_raw[r]
                                    : "";
                            std::string verdict =
                                r < static_cast<int>(audit.detector_verdicts.size())
                                    ? audit.detector_verdicts[r]
                                    : "";
                            candidates.push_back({call_idx, r, date, verdict});
                        }
                    }
                }
                if (candidates.empty()) {
                    if (skipped_items)
                        skipped_items->push_back(model + "/" + row.q_id + "/trial" +
                                                 std::to_string(j + 1) + ": no search results");
                    continue;
                }
                for (int l = 0; l < plan.results_per_item; ++l) {
                    std::uniform_int_distribution<size_t> pick_result(0, candidates.size() - 1);
                    const Candidate& c = candidates[pick_result(rng)];
                    rows.push_back({model, row.q_id, j + 1, c.call_index, c.result_index, c.date,
                                    c.verdict});
                }
            }
        }
    }
    return rows;
}

inline std::string audit_sheet_csv(const std::vector<AuditSheetRow>& rows,
                                   const AuditPlan& plan) {
    std::string out = "# audit_sheet seed=" + std::to_string(plan.seed) +
                      " Q=" + std::to_string(plan.questions_per_model) +
                      " K=" + std::to_string(plan.trials) +
                      " L=" + std::to_string(plan.results_per_item) + "\n";
    out += "model,q_id,trial,call_index,result_index,published_date,detector_verdict,human_label\n";
    for (auto& r : rows)
        out += detail::csv_safe(r.model) + "," + detail::csv_safe(r.q_id) + "," +
               std::to_string(r.trial) + "," + std::to_string(r.call_index) + "," +
               std::to_string(r.result_index) + "," + detail::csv_safe(r.published_date) + "," +
               r.detector_verdict + ",\n";
    return out;
}

struct AuditConfusion {
    int tp = 0, tn = 0, fp = 0, fn = 0;
};

// Scores a filled sheet. The detector column claims leak via "drop" (failed
// verdicts also dropped the item, fail-closed); the human column supplies
// leak / no_leak.
inline AuditConfusion score_audit_sheet(std::istream& in) {
    AuditConfusion c;
    std::string line;
    bool header_seen = false;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (!header_seen) {
            header_seen = true;  // column header row
            continue;
        }
        auto fields = split(line, ',');
        if (fields.size() < 8) continue;
        std::string verdict = fields[6];
        std::string human = std::string(strip(fields[7]));
        if (human.empty()) continue;
        bool detector_leak = verdict != "keep";  // drop or failed:<kind>
        bool human_leak = human == "leak";
        if (detector_leak && human_leak) ++c.tp;
        else if (!detector_leak && !human_leak) ++c.tn;
        else if (detector_leak && !human_leak) ++c.fp;
        else ++c.fn;
    }
    return c;
}

}  // namespace hindcast::analysis
