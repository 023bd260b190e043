#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "hindcast/dataset/question.hpp"
#include "hindcast/parser/belief.hpp"

namespace hindcast::metrics {

// Exam-style partial credit: any false positive zeroes the trial, otherwise
// the recall fraction. Reduces to strict equality when |gold| = 1. An
// unevaluable prediction scores 0.
inline double exam_score(const std::optional<std::set<char>>& pred, const std::set<char>& gold) {
    if (gold.empty()) throw std::invalid_argument("exam_score: empty gold set");
    if (!pred) return 0.0;
    size_t tp = 0;
    for (char c : *pred) {
        if (gold.count(c))
            ++tp;
        else
            return 0.0;
    }
    return static_cast<double>(tp) / static_cast<double>(gold.size());
}

inline bool strict_correct(const std::optional<std::set<char>>& pred,
                           const std::set<char>& gold) {
    return pred && *pred == gold;
}

// Tversky similarity with asymmetric penalties; (2.0, 0.5) weighs false
// positives four times as heavily as false negatives.
inline double tversky(const std::optional<std::set<char>>& pred, const std::set<char>& gold,
                      double alpha = 2.0, double beta = 0.5) {
    if (!pred || pred->empty()) return 0.0;
    double tp = 0, fp = 0;
    for (char c : *pred) (gold.count(c) ? tp : fp) += 1;
    double fn = static_cast<double>(gold.size()) - tp;
    if (tp == 0) return 0.0;
    return tp / (tp + alpha * fp + beta * fn);
}

namespace detail {

inline double binomial(int n, int k) {
    if (k < 0 || k > n) return 0.0;
    double out = 1.0;
    for (int i = 1; i <= k; ++i) out = out * (n - k + i) / i;
    return out;
}

}  // namespace detail

// Closed-form expected Tversky similarity under a per-label 0.5 reference
// distribution, for a gold set of size m out of k labels. O(m * (k - m)).
inline double tversky_chance(int m, int k, double alpha = 2.0, double beta = 0.5) {
    if (m < 1 || k < m) throw std::invalid_argument("tversky_chance requires 1 <= m <= k");
    double expectation = 0.0;
    double p_in = std::pow(2.0, -m);
    double p_out = std::pow(2.0, -(k - m));
    for (int tp = 1; tp <= m; ++tp) {
        for (int fp = 0; fp <= k - m; ++fp) {
            double weight = detail::binomial(m, tp) * p_in * detail::binomial(k - m, fp) * p_out;
            expectation += weight * tp / (tp + alpha * fp + beta * (m - tp));
        }
    }
    return expectation;
}

struct PassFamily {
    double pass1_avg = 0.0;
    double pass_any = 0.0;
    double pass_all = 0.0;
};

// Equal-weight question averages of the intra-question mean / OR / AND of the
// strict verdicts. Questions with zero counted trials leave the denominator.
inline std::optional<PassFamily> pass_family(const std::vector<std::vector<int>>& verdicts) {
    PassFamily out;
    size_t scored = 0;
    for (auto& q : verdicts) {
        if (q.empty()) continue;
        ++scored;
        double sum = 0;
        int any = 0, all = 1;
        for (int c : q) {
            sum += c;
            any |= c;
            all &= c;
        }
        out.pass1_avg += sum / static_cast<double>(q.size());
        out.pass_any += any;
        out.pass_all += all;
    }
    if (scored == 0) return std::nullopt;
    out.pass1_avg /= scored;
    out.pass_any /= scored;
    out.pass_all /= scored;
    return out;
}

struct CohenSample {
    size_t k = 2;          // |options|
    bool multi = false;    // choice structure
    bool correct = false;  // strict verdict (parse failures count as 0)
};

// Chance-corrects strict accuracy against a question-type-conditional
// baseline: 1/k for single-answer, a per-label coin flip (0.5) for
// multi-answer. p_o and p_e are trial-weighted over the scorable sample set.
inline std::optional<double> cohen_kappa(const std::vector<CohenSample>& samples) {
    if (samples.empty()) return std::nullopt;
    double p_o = 0, p_e = 0;
    for (auto& s : samples) {
        p_o += s.correct ? 1.0 : 0.0;
        p_e += s.multi ? 0.5 : 1.0 / static_cast<double>(s.k);
    }
    p_o /= samples.size();
    p_e /= samples.size();
    if (p_e >= 1.0) return std::nullopt;
    return (p_o - p_e) / (1.0 - p_e);
}

// One question's parse-valid votes, keyed by the category voted for.
struct FleissItem {
    std::map<std::string, int> votes;
    int total() const {
        int n = 0;
        for (auto& [_, c] : votes) n += c;
        return n;
    }
};

// Textbook Fleiss kappa over one stratum with a fixed category space. Items
// need at least two raters; variable rater counts use the per-item pairwise
// agreement form. nullopt when the chance agreement is degenerate.
inline std::optional<double> fleiss_kappa_stratum(const std::vector<FleissItem>& items) {
    double p_bar = 0;
    std::map<std::string, double> category_mass;
    double total_votes = 0;
    size_t usable = 0;
    for (auto& item : items) {
        int n = item.total();
        if (n < 2) continue;
        ++usable;
        double agree = 0;
        for (auto& [cat, c] : item.votes) {
            agree += static_cast<double>(c) * (c - 1);
            category_mass[cat] += c;
            total_votes += c;
        }
        p_bar += agree / (static_cast<double>(n) * (n - 1));
    }
    if (usable == 0 || total_votes == 0) return std::nullopt;
    p_bar /= usable;
    double p_e = 0;
    for (auto& [_, mass] : category_mass) {
        double p = mass / total_votes;
        p_e += p * p;
    }
    if (p_e >= 1.0) return std::nullopt;
    return (p_bar - p_e) / (1.0 - p_e);
}

struct FleissQuestion {
    size_t k = 2;
    bool multi = false;
    // Single-answer: one category string per parse-valid trial (the letter
    // set encoding). Multi-answer: per-trial letter sets.
    std::vector<std::set<char>> votes;
};

struct FleissResult {
    std::optional<double> kappa;
    std::vector<std::string> notes;  // degenerate strata, recorded
};

// Single-answer questions stratify by k (marginals are only well-defined in a
// fixed category space); multi-answer questions reduce to per-candidate-letter
// binary kappa, label-averaged. Strata combine by question count.
inline FleissResult fleiss_kappa(const std::vector<FleissQuestion>& questions) {
    FleissResult out;
    std::map<size_t, std::vector<FleissItem>> single_strata;
    std::vector<const FleissQuestion*> multi_questions;

    for (auto& q : questions) {
        if (q.votes.size() < 2) continue;  // needs repeated trials
        if (q.multi) {
            multi_questions.push_back(&q);
            continue;
        }
        FleissItem item;
        for (auto& v : q.votes) ++item.votes[dataset::letters_to_string(v)];
        single_strata[q.k].push_back(std::move(item));
    }

    double weighted = 0;
    size_t weight_total = 0;
    for (auto& [k, items] : single_strata) {
        auto kappa = fleiss_kappa_stratum(items);
        if (!kappa) {
            out.notes.push_back("single-answer stratum k=" + std::to_string(k) +
                                " degenerate, excluded");
            continue;
        }
        weighted += *kappa * items.size();
        weight_total += items.size();
    }

    if (!multi_questions.empty()) {
        // Per-letter binary kappa across the multi-answer questions carrying
        // that letter, then label-averaged.
        std::map<char, std::vector<FleissItem>> per_letter;
        for (auto* q : multi_questions) {
            for (size_t i = 0; i < q->k; ++i) {
                char letter = dataset::option_letter(i);
                FleissItem item;
                for (auto& v : q->votes) ++item.votes[v.count(letter) ? "in" : "out"];
                per_letter[letter].push_back(std::move(item));
            }
        }
        double label_sum = 0;
        size_t label_count = 0;
        for (auto& [letter, items] : per_letter) {
            auto kappa = fleiss_kappa_stratum(items);
            if (!kappa) {
                out.notes.push_back(std::string("multi-answer label ") + letter +
                                    " degenerate, excluded");
                continue;
            }
            label_sum += *kappa;
            ++label_count;
        }
        if (label_count > 0) {
            weighted += (label_sum / label_count) * multi_questions.size();
            weight_total += multi_questions.size();
        }
    }

    if (weight_total == 0) return out;
    out.kappa = weighted / weight_total;
    return out;
}

// Bucket-weighted mean over the buckets that carry a value; weights
// renormalise over the valid set. All-None input yields nullopt, never 0.
inline std::optional<double> composite_accuracy(
    const std::vector<std::pair<std::optional<double>, double>>& bucket_means_and_weights) {
    double numerator = 0, denominator = 0;
    for (auto& [mean, weight] : bucket_means_and_weights) {
        if (!mean) continue;
        if (weight <= 0) throw std::invalid_argument("bucket weights must be positive");
        numerator += *mean * weight;
        denominator += weight;
    }
    if (denominator == 0) return std::nullopt;
    return numerator / denominator;
}

// Invoice amortised over the difficulty-weighted notional correct count.
inline std::optional<double> per_correct_cost(double total_cost, int n_questions, int n_trials,
                                              std::optional<double> composite) {
    if (!composite || *composite <= 0.0) return std::nullopt;
    return total_cost / (static_cast<double>(n_questions) * n_trials * *composite);
}

// --- Probabilistic family (gated on the belief protocol) ---

struct BrierScores {
    double bs_label = 0;                     // mean per-label squared error
    std::optional<double> bs_decision;       // k * bs_label, single-answer only
    double nll = 0;
    std::optional<double> mbs;               // 100(log2 p_true + 1), single only
};

// Per-label outcome vector o with o[l] = 1 iff letter l is in the gold set.
inline std::vector<double> outcome_vector(const std::set<char>& gold, size_t k) {
    std::vector<double> o(k, 0.0);
    for (char c : gold) {
        size_t idx = static_cast<size_t>(c - 'A');
        if (idx < k) o[idx] = 1.0;
    }
    return o;
}

inline BrierScores brier_family(const parser::BeliefVector& belief,
                                const std::vector<double>& outcomes) {
    size_t k = outcomes.size();
    if (belief.probabilities.size() != k)
        throw std::invalid_argument("belief arity does not match outcome arity");
    BrierScores out;
    for (size_t i = 0; i < k; ++i) {
        double d = belief.probabilities[i] - outcomes[i];
        out.bs_label += d * d;
    }
    out.bs_label /= k;

    if (belief.regime == dataset::ChoiceType::single) {
        out.bs_decision = static_cast<double>(k) * out.bs_label;
        size_t true_idx = 0;
        for (size_t i = 0; i < k; ++i)
            if (outcomes[i] > outcomes[true_idx]) true_idx = i;
        double p_true = belief.probabilities[true_idx];
        out.nll = -std::log(p_true);
        out.mbs = 100.0 * (std::log2(p_true) + 1.0);
    } else {
        double sum = 0;
        for (size_t i = 0; i < k; ++i)
            sum += outcomes[i] * std::log(belief.probabilities[i]) +
                   (1.0 - outcomes[i]) * std::log(1.0 - belief.probabilities[i]);
        out.nll = -sum / static_cast<double>(k);
    }
    return out;
}

// Per-label Brier of the uniform predictor: the abi-uniform baseline.
inline double gamma_uniform(const std::vector<double>& outcomes) {
    size_t k = outcomes.size();
    double sum = 0;
    for (double o : outcomes) {
        double d = 1.0 / static_cast<double>(k) - o;
        sum += d * d;
    }
    return sum / static_cast<double>(k);
}

inline double brier_index(const std::vector<double>& per_question_bs) {
    double mean = 0;
    for (double b : per_question_bs) mean += b;
    mean /= per_question_bs.size();
    return 100.0 * (1.0 - std::sqrt(mean));
}

// Sign-symmetric adjusted Brier index, continuous at mean(ABS) = 0.
inline double adjusted_brier_index(const std::vector<double>& per_question_bs,
                                   const std::vector<double>& baselines) {
    if (per_question_bs.size() != baselines.size())
        throw std::invalid_argument("bi_abi: baseline arity mismatch");
    double mean = 0;
    for (size_t i = 0; i < per_question_bs.size(); ++i)
        mean += per_question_bs[i] - baselines[i];
    mean /= per_question_bs.size();
    return mean >= 0 ? 100.0 * (1.0 - std::sqrt(mean)) : 100.0 * (1.0 + std::sqrt(-mean));
}

// --- Leakage-audit statistics ---

struct AuditStats {
    double per_item_rate = 0;                   // FN / N
    std::optional<double> leak_conditional;     // FN / (TP + FN)
    std::optional<double> recall;
    std::optional<double> specificity;
    double wilson_upper_95 = 0;
};

inline double wilson_upper_bound(double p_hat, double n, double z = 1.96) {
    double z2 = z * z;
    double center = p_hat + z2 / (2 * n);
    double radius = z * std::sqrt(p_hat * (1 - p_hat) / n + z2 / (4 * n * n));
    return (center + radius) / (1 + z2 / n);
}

inline AuditStats audit_stats(int tp, int tn, int fp, int fn) {
    double n = tp + tn + fp + fn;
    if (n <= 0) throw std::invalid_argument("audit_stats: empty confusion matrix");
    AuditStats out;
    out.per_item_rate = fn / n;
    if (tp + fn > 0) {
        out.leak_conditional = static_cast<double>(fn) / (tp + fn);
        out.recall = static_cast<double>(tp) / (tp + fn);
    }
    if (tn + fp > 0) out.specificity = static_cast<double>(tn) / (tn + fp);
    out.wilson_upper_95 = wilson_upper_bound(out.per_item_rate, n);
    return out;
}

}  // namespace hindcast::metrics
