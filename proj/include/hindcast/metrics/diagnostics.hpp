#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "hindcast/dataset/question.hpp"
#include "hindcast/metrics/scores.hpp"
#include "hindcast/parser/belief.hpp"

namespace hindcast::metrics {

// Per-trial overlap between predicted and gold letter sets; aggregated over
// MC-multi only (single-choice partial credit collapses to strict 0/1).
inline double hamming_credit(const std::set<char>& pred, const std::set<char>& gold, size_t k) {
    double mismatches = 0;
    for (size_t i = 0; i < k; ++i) {
        char letter = dataset::option_letter(i);
        if (pred.count(letter) != gold.count(letter)) mismatches += 1;
    }
    return 1.0 - mismatches / static_cast<double>(k);
}

inline double binary_entropy(double p) {
    if (p <= 0.0 || p >= 1.0) return 0.0;
    return -p * std::log2(p) - (1 - p) * std::log2(1 - p);
}

struct QuestionVotes {
    size_t k = 2;
    bool multi = false;
    std::set<char> gold;
    std::vector<std::set<char>> votes;  // parse-valid letter sets
    std::vector<int> counted_verdicts;  // strict verdicts over counted trials
};

struct DiscreteDiagnostics {
    std::optional<double> hamming;       // MC-multi mean
    std::optional<double> mv_acc;        // tied-winner questions dropped
    std::optional<double> mv_gain;       // MV-Acc minus pass@1_avg
    std::optional<double> mean_entropy;
    std::optional<double> vci;
    std::optional<double> entropy_acc_low;
    std::optional<double> entropy_acc_mid;
    std::optional<double> entropy_acc_high;
};

// Vote-distribution entropy: Shannon over letter-set votes for single-answer
// questions, mean per-label binary entropy for multi-answer.
inline double question_entropy(const QuestionVotes& q) {
    if (q.votes.empty()) return 0.0;
    if (!q.multi) {
        std::map<std::string, int> tally;
        for (auto& v : q.votes) ++tally[dataset::letters_to_string(v)];
        double h = 0;
        for (auto& [_, c] : tally) {
            double p = static_cast<double>(c) / q.votes.size();
            h -= p * std::log2(p);
        }
        return h;
    }
    double h = 0;
    for (size_t i = 0; i < q.k; ++i) {
        char letter = dataset::option_letter(i);
        int in = 0;
        for (auto& v : q.votes) in += v.count(letter) ? 1 : 0;
        h += binary_entropy(static_cast<double>(in) / q.votes.size());
    }
    return h / static_cast<double>(q.k);
}

// Fraction of parse-valid trials voting for the modal letter set.
inline double vote_concentration(const QuestionVotes& q) {
    std::map<std::string, int> tally;
    for (auto& v : q.votes) ++tally[dataset::letters_to_string(v)];
    int best = 0;
    for (auto& [_, c] : tally) best = std::max(best, c);
    return static_cast<double>(best) / q.votes.size();
}

// Modal letter set with a winner-uniqueness rule: nullopt on a tied top vote.
inline std::optional<std::set<char>> majority_vote(const QuestionVotes& q) {
    std::map<std::string, int> tally;
    std::map<std::string, std::set<char>> decode;
    for (auto& v : q.votes) {
        auto key = dataset::letters_to_string(v);
        ++tally[key];
        decode[key] = v;
    }
    int best = 0;
    for (auto& [_, c] : tally) best = std::max(best, c);
    std::optional<std::set<char>> winner;
    for (auto& [key, c] : tally) {
        if (c != best) continue;
        if (winner) return std::nullopt;  // tie: dropped from MV denominators
        winner = decode[key];
    }
    return winner;
}

inline DiscreteDiagnostics discrete_diagnostics(const std::vector<QuestionVotes>& questions,
                                                std::optional<double> pass1_avg) {
    DiscreteDiagnostics out;

    double hamming_sum = 0;
    size_t hamming_n = 0;
    double mv_hits = 0;
    size_t mv_n = 0;
    struct EntropyAcc {
        double entropy;
        double accuracy;
    };
    std::vector<EntropyAcc> ea;
    double entropy_sum = 0, vci_sum = 0;
    size_t voted_n = 0;

    for (auto& q : questions) {
        if (!q.votes.empty()) {
            ++voted_n;
            entropy_sum += question_entropy(q);
            vci_sum += vote_concentration(q);
            if (auto winner = majority_vote(q)) {
                ++mv_n;
                mv_hits += (*winner == q.gold) ? 1.0 : 0.0;
            }
            if (q.multi) {
                double mean = 0;
                for (auto& v : q.votes) mean += hamming_credit(v, q.gold, q.k);
                hamming_sum += mean / q.votes.size();
                ++hamming_n;
            }
        }
        if (!q.counted_verdicts.empty() && !q.votes.empty()) {
            double acc = 0;
            for (int c : q.counted_verdicts) acc += c;
            ea.push_back({question_entropy(q), acc / q.counted_verdicts.size()});
        }
    }

    if (hamming_n > 0) out.hamming = hamming_sum / hamming_n;
    if (mv_n > 0) {
        out.mv_acc = mv_hits / mv_n;
        if (pass1_avg) out.mv_gain = *out.mv_acc - *pass1_avg;
    }
    if (voted_n > 0) {
        out.mean_entropy = entropy_sum / voted_n;
        out.vci = vci_sum / voted_n;
    }

    // Tercile cut-points of the per-question entropy distribution; bucket
    // cells are per-model and not cross-model comparable.
    if (ea.size() >= 3) {
        std::sort(ea.begin(), ea.end(),
                  [](const EntropyAcc& a, const EntropyAcc& b) { return a.entropy < b.entropy; });
        size_t third = ea.size() / 3;
        auto bucket_mean = [&](size_t lo, size_t hi) -> std::optional<double> {
            if (hi <= lo) return std::nullopt;
            double sum = 0;
            for (size_t i = lo; i < hi; ++i) sum += ea[i].accuracy;
            return sum / (hi - lo);
        };
        out.entropy_acc_low = bucket_mean(0, third);
        out.entropy_acc_mid = bucket_mean(third, 2 * third);
        out.entropy_acc_high = bucket_mean(2 * third, ea.size());
    }
    return out;
}

// --- Behavioural family (gated on the per-step belief trace) ---

struct BehavioralScalars {
    std::optional<double> volatility;         // mean step-to-step L2 displacement
    std::optional<int> convergence_step;      // first t with ||b_T - b_t|| < 0.05
    std::optional<double> evidence_efficiency;  // NLL drop per search call
    std::optional<bool> counter_evidence_flag;
};

inline double l2_distance(const std::vector<double>& a, const std::vector<double>& b) {
    double sum = 0;
    for (size_t i = 0; i < a.size() && i < b.size(); ++i) {
        double d = a[i] - b[i];
        sum += d * d;
    }
    return std::sqrt(sum);
}

// Trial-level scalars over the belief trace b_0..b_T. The counter-evidence
// flag fires when the last counterevidence note names an option letter
// outside the boxed answer.
inline BehavioralScalars behavioral_scalars(const std::vector<parser::BeliefVector>& trace,
                                            int search_calls,
                                            const std::set<char>& boxed_answer,
                                            const std::vector<double>& outcomes,
                                            const std::optional<std::string>&
                                                last_counterevidence_note) {
    BehavioralScalars out;
    if (trace.empty()) return out;

    if (trace.size() >= 2) {
        double sum = 0;
        for (size_t t = 1; t < trace.size(); ++t)
            sum += l2_distance(trace[t].probabilities, trace[t - 1].probabilities);
        out.volatility = sum / static_cast<double>(trace.size() - 1);
    } else {
        out.volatility = 0.0;
    }

    const auto& final_belief = trace.back();
    for (size_t t = 1; t <= trace.size(); ++t) {
        if (l2_distance(final_belief.probabilities, trace[t - 1].probabilities) < 0.05) {
            out.convergence_step = static_cast<int>(t);
            break;
        }
    }

    BrierScores first = brier_family(trace.front(), outcomes);
    BrierScores last = brier_family(final_belief, outcomes);
    out.evidence_efficiency = (first.nll - last.nll) / std::max(1, search_calls);

    if (last_counterevidence_note) {
        bool outside = false;
        for (char c = 'A'; c <= 'Z'; ++c) {
            if (boxed_answer.count(c)) continue;
            // A letter "mention" is a standalone token, not part of a word.
            const std::string& note = *last_counterevidence_note;
            for (size_t i = 0; i < note.size(); ++i) {
                if (note[i] != c) continue;
                bool left_ok = i == 0 || !std::isalnum(static_cast<unsigned char>(note[i - 1]));
                bool right_ok =
                    i + 1 == note.size() || !std::isalnum(static_cast<unsigned char>(note[i + 1]));
                if (left_ok && right_ok) {
                    outside = true;
                    break;
                }
            }
            if (outside) break;
        }
        out.counter_evidence_flag = outside;
    }
    return out;
}

// Across-trial standard deviation of final beliefs around the valid-final
// centroid. Needs at least two valid finals.
inline std::optional<double> inter_trial_sigma(
    const std::vector<std::vector<double>>& final_beliefs) {
    if (final_beliefs.size() < 2) return std::nullopt;
    size_t k = final_beliefs.front().size();
    std::vector<double> centroid(k, 0.0);
    for (auto& b : final_beliefs)
        for (size_t i = 0; i < k; ++i) centroid[i] += b[i];
    for (auto& c : centroid) c /= final_beliefs.size();
    double sum = 0;
    for (auto& b : final_beliefs) {
        double d = l2_distance(b, centroid);
        sum += d * d;
    }
    return std::sqrt(sum / (final_beliefs.size() - 1));
}

// Linguistic-vs-numeric calibration conflict: linguistic-low answered with
// high numeric confidence, or linguistic-high with low.
struct CalibrationCell {
    std::string linguistic;  // low | medium | high
    double max_prob = 0;
};

inline bool calibration_conflict(const std::vector<CalibrationCell>& cells,
                                 double low_threshold = 0.70, double high_threshold = 0.55) {
    double low_sum = 0, high_sum = 0;
    size_t low_n = 0, high_n = 0;
    for (auto& c : cells) {
        if (c.linguistic == "low") {
            low_sum += c.max_prob;
            ++low_n;
        } else if (c.linguistic == "high") {
            high_sum += c.max_prob;
            ++high_n;
        }
    }
    bool conflict = false;
    if (low_n > 0 && low_sum / low_n > low_threshold) conflict = true;
    if (high_n > 0 && high_sum / high_n < high_threshold) conflict = true;
    return conflict;
}

}  // namespace hindcast::metrics
