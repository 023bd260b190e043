#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "hindcast/dataset/question.hpp"
#include "hindcast/metrics/diagnostics.hpp"
#include "hindcast/metrics/scores.hpp"
#include "hindcast/parser/belief.hpp"

namespace hindcast::metrics {

// One (question, trial) outcome as scoring sees it. Cutoff-skips and
// transport errors have counted = false and never enter any denominator;
// parse failures are counted with score 0 but stay out of vote tallies.
struct TrialOutcome {
    bool counted = false;
    bool parse_valid = false;
    std::optional<std::set<char>> predicted;
    std::optional<parser::BeliefVector> belief;
    std::vector<parser::BeliefVector> belief_trace;
    int search_calls = 0;
    std::optional<std::string> counterevidence_note;
    std::optional<std::string> linguistic_confidence;  // low | medium | high
};

struct QuestionRecord {
    std::string id;
    dataset::QuestionType question_type = dataset::QuestionType::multiple_choice;
    dataset::ChoiceType choice_type = dataset::ChoiceType::single;
    size_t k = 2;
    std::set<char> gold;
    std::vector<TrialOutcome> trials;
};

struct BucketWeights {
    double yes_no = 0.15;
    double binary = 0.15;
    double mc = 0.70;
};

struct ModelSummary {
    std::string model;
    int n_questions = 0;
    int n_trials_counted = 0;
    int n_cutoff_skipped = 0;
    int n_transport_errors = 0;

    std::optional<double> valid_rate;  // |J^ok| / |J^cnt|
    std::optional<double> composite_accuracy;
    std::optional<double> exam_yes_no;
    std::optional<double> exam_binary;
    std::optional<double> exam_mc;
    std::optional<double> exam_mc_single;
    std::optional<double> exam_mc_multi;

    std::optional<double> pass1_avg;
    std::optional<double> pass_any;
    std::optional<double> pass_all;
    std::optional<double> cohen_kappa;
    std::optional<double> fleiss_kappa;
    std::optional<double> fss;

    std::optional<double> total_cost;
    std::optional<double> per_correct_cost;

    // Probabilistic family; absent wholesale when the belief protocol is off.
    std::optional<double> bi;
    std::optional<double> abi_uniform;
    std::optional<double> abi_crowd;
    std::optional<double> mean_nll;
    std::optional<double> mean_mbs;

    // Discrete-native diagnostics.
    std::optional<double> hamming;
    std::optional<double> mv_acc;
    std::optional<double> mv_gain;
    std::optional<double> mean_entropy;
    std::optional<double> vci;
    std::optional<double> entropy_acc_low;
    std::optional<double> entropy_acc_mid;
    std::optional<double> entropy_acc_high;

    // Behavioural family; gated on the per-step belief trace.
    std::optional<double> mean_volatility;
    std::optional<double> mean_sigma;
    std::optional<double> mean_convergence_step;
    std::optional<double> mean_evidence_efficiency;
    std::optional<double> counter_evidence_rate;
    std::optional<double> calibration_conflict;  // 1.0 when the signals clash

    std::vector<std::string> notes;
};

namespace detail {

inline std::optional<double> mean_of(const std::vector<double>& xs) {
    if (xs.empty()) return std::nullopt;
    double sum = 0;
    for (double x : xs) sum += x;
    return sum / xs.size();
}

}  // namespace detail

// Per-question mean Brier scores for one model, keyed by question id. The
// crowd baseline consumer needs these across models.
inline std::map<std::string, double> per_question_brier(const std::vector<QuestionRecord>& qs) {
    std::map<std::string, double> out;
    for (auto& q : qs) {
        std::vector<double> scores;
        auto outcomes = outcome_vector(q.gold, q.k);
        for (auto& t : q.trials)
            if (t.counted && t.belief) scores.push_back(brier_family(*t.belief, outcomes).bs_label);
        if (auto m = detail::mean_of(scores)) out[q.id] = *m;
    }
    return out;
}

// The full trial -> item -> question -> model chain. crowd_baselines, when
// present, carries the leave-one-out mean Brier per question id across the
// other models; questions without one fall back to the uniform baseline.
inline ModelSummary summarize_model(
    const std::string& model, const std::vector<QuestionRecord>& questions,
    std::optional<double> total_cost = std::nullopt, int planned_trials = 0,
    const std::map<std::string, double>* crowd_baselines = nullptr,
    const BucketWeights& weights = {}) {
    ModelSummary s;
    s.model = model;
    s.total_cost = total_cost;

    std::vector<double> exam_yes_no, exam_binary, exam_mc, exam_mc_single, exam_mc_multi;
    std::vector<std::vector<int>> verdicts;
    std::vector<CohenSample> cohen_samples;
    std::vector<FleissQuestion> fleiss_questions;
    std::vector<QuestionVotes> votes;
    std::vector<double> fss_per_question;
    std::vector<double> bs_per_question, gamma_uni_per_question, gamma_crowd_per_question;
    std::vector<double> nll_all, mbs_all;
    std::vector<double> volatility_all, sigma_all, convergence_all, efficiency_all;
    std::vector<double> counter_flags;
    std::vector<CalibrationCell> calibration_cells;
    int n_ok_total = 0;

    for (auto& q : questions) {
        bool scored = false;
        std::vector<int> q_verdicts;
        std::vector<double> q_exams, q_tversky;
        std::vector<std::set<char>> q_votes;
        std::vector<std::vector<double>> q_final_beliefs;
        std::vector<double> q_bs;
        auto outcomes = outcome_vector(q.gold, q.k);

        for (auto& t : q.trials) {
            if (!t.counted) continue;
            scored = true;
            ++s.n_trials_counted;
            int c = strict_correct(t.predicted, q.gold) ? 1 : 0;
            q_verdicts.push_back(c);
            q_exams.push_back(exam_score(t.predicted, q.gold));
            cohen_samples.push_back(
                {q.k, q.choice_type == dataset::ChoiceType::multi, c == 1});
            if (t.parse_valid && t.predicted) {
                ++n_ok_total;
                q_votes.push_back(*t.predicted);
                q_tversky.push_back(tversky(t.predicted, q.gold));
            }
            if (t.belief) {
                BrierScores b = brier_family(*t.belief, outcomes);
                q_bs.push_back(b.bs_label);
                nll_all.push_back(b.nll);
                if (b.mbs) mbs_all.push_back(*b.mbs);
                q_final_beliefs.push_back(t.belief->probabilities);
                if (t.linguistic_confidence) {
                    double max_prob = 0;
                    for (double p : t.belief->probabilities) max_prob = std::max(max_prob, p);
                    calibration_cells.push_back({*t.linguistic_confidence, max_prob});
                }
            }
            if (!t.belief_trace.empty()) {
                BehavioralScalars bs = behavioral_scalars(
                    t.belief_trace, t.search_calls,
                    t.predicted.value_or(std::set<char>{}), outcomes, t.counterevidence_note);
                if (bs.volatility) volatility_all.push_back(*bs.volatility);
                if (bs.convergence_step) convergence_all.push_back(*bs.convergence_step);
                if (bs.evidence_efficiency) efficiency_all.push_back(*bs.evidence_efficiency);
                if (bs.counter_evidence_flag)
                    counter_flags.push_back(*bs.counter_evidence_flag ? 1.0 : 0.0);
            }
        }
        if (!scored) continue;
        ++s.n_questions;
        verdicts.push_back(q_verdicts);

        if (auto exam_mean = detail::mean_of(q_exams)) {
            switch (q.question_type) {
                case dataset::QuestionType::yes_no:
                    exam_yes_no.push_back(*exam_mean);
                    break;
                case dataset::QuestionType::binary_named:
                    exam_binary.push_back(*exam_mean);
                    break;
                case dataset::QuestionType::multiple_choice:
                    exam_mc.push_back(*exam_mean);
                    (q.choice_type == dataset::ChoiceType::multi ? exam_mc_multi
                                                                 : exam_mc_single)
                        .push_back(*exam_mean);
                    break;
            }
        }

        fleiss_questions.push_back(
            {q.k, q.choice_type == dataset::ChoiceType::multi, q_votes});
        votes.push_back({q.k, q.choice_type == dataset::ChoiceType::multi, q.gold, q_votes,
                         q_verdicts});

        if (!q_tversky.empty()) {
            double chance = q.choice_type == dataset::ChoiceType::multi
                                ? tversky_chance(static_cast<int>(q.gold.size()),
                                                 static_cast<int>(q.k))
                                : 1.0 / static_cast<double>(q.k);
            if (chance < 1.0) {
                double mean_t = *detail::mean_of(q_tversky);
                fss_per_question.push_back((mean_t - chance) / (1.0 - chance));
            }
        }

        if (auto bs_mean = detail::mean_of(q_bs)) {
            bs_per_question.push_back(*bs_mean);
            gamma_uni_per_question.push_back(gamma_uniform(outcomes));
            double crowd = gamma_uniform(outcomes);
            if (crowd_baselines) {
                auto it = crowd_baselines->find(q.id);
                if (it != crowd_baselines->end()) crowd = it->second;
            }
            gamma_crowd_per_question.push_back(crowd);
        }
        if (auto sigma = inter_trial_sigma(q_final_beliefs)) sigma_all.push_back(*sigma);
    }

    s.exam_yes_no = detail::mean_of(exam_yes_no);
    s.exam_binary = detail::mean_of(exam_binary);
    s.exam_mc = detail::mean_of(exam_mc);
    s.exam_mc_single = detail::mean_of(exam_mc_single);
    s.exam_mc_multi = detail::mean_of(exam_mc_multi);
    s.composite_accuracy = composite_accuracy({{s.exam_yes_no, weights.yes_no},
                                               {s.exam_binary, weights.binary},
                                               {s.exam_mc, weights.mc}});

    if (auto pf = pass_family(verdicts)) {
        s.pass1_avg = pf->pass1_avg;
        s.pass_any = pf->pass_any;
        s.pass_all = pf->pass_all;
    }
    s.cohen_kappa = cohen_kappa(cohen_samples);
    FleissResult fleiss = fleiss_kappa(fleiss_questions);
    s.fleiss_kappa = fleiss.kappa;
    s.notes = fleiss.notes;
    s.fss = detail::mean_of(fss_per_question);

    if (s.n_trials_counted > 0)
        s.valid_rate = static_cast<double>(n_ok_total) / s.n_trials_counted;

    if (total_cost && planned_trials > 0 && s.n_questions > 0)
        s.per_correct_cost =
            per_correct_cost(*total_cost, s.n_questions, planned_trials, s.composite_accuracy);

    if (!bs_per_question.empty()) {
        s.bi = brier_index(bs_per_question);
        s.abi_uniform = adjusted_brier_index(bs_per_question, gamma_uni_per_question);
        s.abi_crowd = adjusted_brier_index(bs_per_question, gamma_crowd_per_question);
        s.mean_nll = detail::mean_of(nll_all);
        s.mean_mbs = detail::mean_of(mbs_all);
    }

    DiscreteDiagnostics diag = discrete_diagnostics(votes, s.pass1_avg);
    s.hamming = diag.hamming;
    s.mv_acc = diag.mv_acc;
    s.mv_gain = diag.mv_gain;
    s.mean_entropy = diag.mean_entropy;
    s.vci = diag.vci;
    s.entropy_acc_low = diag.entropy_acc_low;
    s.entropy_acc_mid = diag.entropy_acc_mid;
    s.entropy_acc_high = diag.entropy_acc_high;

    s.mean_volatility = detail::mean_of(volatility_all);
    s.mean_sigma = detail::mean_of(sigma_all);
    s.mean_convergence_step = detail::mean_of(convergence_all);
    s.mean_evidence_efficiency = detail::mean_of(efficiency_all);
    s.counter_evidence_rate = detail::mean_of(counter_flags);
    if (!calibration_cells.empty())
        s.calibration_conflict = calibration_conflict(calibration_cells) ? 1.0 : 0.0;
    return s;
}

}  // namespace hindcast::metrics
