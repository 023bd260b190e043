#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "hindcast/metrics/aggregate.hpp"
#include "hindcast/metrics/diagnostics.hpp"
#include "hindcast/metrics/scores.hpp"

using namespace hindcast;
using namespace hindcast::metrics;

namespace {

std::set<char> L(std::initializer_list<char> cs) { return std::set<char>(cs); }

// Independent oracle: mean Tversky over every subset of k labels, each label
// included with probability 1/2.
double tversky_chance_brute(int m, int k, double alpha, double beta) {
    std::set<char> gold;
    for (int i = 0; i < m; ++i) gold.insert(static_cast<char>('A' + i));
    double total = 0;
    int subsets = 1 << k;
    for (int mask = 0; mask < subsets; ++mask) {
        std::set<char> pred;
        for (int i = 0; i < k; ++i)
            if (mask & (1 << i)) pred.insert(static_cast<char>('A' + i));
        total += tversky(pred, gold, alpha, beta);
    }
    return total / subsets;
}

}  // namespace

TEST_CASE("exam score forces the published examples") {
    CHECK(exam_score(L({'A'}), L({'A', 'B'})) == Catch::Approx(0.5));
    CHECK(exam_score(L({'A', 'C'}), L({'A', 'B'})) == 0.0);
    CHECK(exam_score(L({'A'}), L({'A'})) == 1.0);
    CHECK(exam_score(std::nullopt, L({'A'})) == 0.0);  // parse failure scores 0
    CHECK(exam_score(std::set<char>{}, L({'A'})) == 0.0);
    CHECK_THROWS(exam_score(L({'A'}), {}));
}

TEST_CASE("tversky similarity and its closed-form chance baseline") {
    CHECK(tversky(L({'A'}), L({'A'})) == 1.0);
    CHECK(tversky(L({'A', 'B'}), L({'A'})) == Catch::Approx(1.0 / 3.0));
    CHECK(tversky(std::set<char>{}, L({'A'})) == 0.0);

    CHECK(tversky_chance(1, 2) == Catch::Approx(1.0 / 3.0).margin(1e-12));

    for (int k = 1; k <= 8; ++k)
        for (int m = 1; m <= k; ++m)
            CHECK(std::abs(tversky_chance(m, k) - tversky_chance_brute(m, k, 2.0, 0.5)) < 1e-12);
}

TEST_CASE("pass family examples and chain inequality") {
    auto single = pass_family({{1, 0, 0}});
    REQUIRE(single);
    CHECK(single->pass1_avg == Catch::Approx(1.0 / 3.0));
    CHECK(single->pass_any == 1.0);
    CHECK(single->pass_all == 0.0);

    auto all_correct = pass_family({{1, 1}, {1}, {1, 1, 1}});
    REQUIRE(all_correct);
    CHECK(all_correct->pass1_avg == 1.0);
    CHECK(all_correct->pass_all == 1.0);

    // Questions with zero counted trials leave the denominator.
    auto with_empty = pass_family({{1}, {}});
    REQUIRE(with_empty);
    CHECK(with_empty->pass1_avg == 1.0);

    std::mt19937_64 rng(42);
    std::uniform_int_distribution<int> nq(1, 50), nt(1, 5), bit(0, 1);
    for (int iter = 0; iter < 1000; ++iter) {
        std::vector<std::vector<int>> verdicts(nq(rng));
        for (auto& q : verdicts) {
            q.resize(nt(rng));
            for (auto& v : q) v = bit(rng);
        }
        auto pf = pass_family(verdicts);
        REQUIRE(pf);
        CHECK(pf->pass_all <= pf->pass1_avg + 1e-12);
        CHECK(pf->pass1_avg <= pf->pass_any + 1e-12);
    }
}

TEST_CASE("Cohen kappa chance correction") {
    // All correct: kappa = 1 for any mix.
    std::vector<CohenSample> all_correct = {{4, false, true}, {2, false, true}, {3, true, true}};
    CHECK(*cohen_kappa(all_correct) == Catch::Approx(1.0));

    // Accuracy at chance: k=4 single-answer samples with p_o = 0.25.
    std::vector<CohenSample> at_chance;
    for (int i = 0; i < 4; ++i) at_chance.push_back({4, false, i == 0});
    CHECK(*cohen_kappa(at_chance) == Catch::Approx(0.0).margin(1e-12));

    // Hand enumeration: two singles (k=2) and one multi, p_o = 0.5
    // -> p_e = (0.5 + 0.5 + 0.5)/3 = 0.5, kappa = 0.
    std::vector<CohenSample> mixed = {{2, false, true}, {2, false, false}, {5, true, false}};
    double p_o = 1.0 / 3.0;
    double p_e = 0.5;
    CHECK(*cohen_kappa(mixed) == Catch::Approx((p_o - p_e) / (1 - p_e)));

    // Degenerate: p_e = 1 (single-answer, one option) is undefined, not zero.
    CHECK_FALSE(cohen_kappa({{1, false, true}}).has_value());
    CHECK_FALSE(cohen_kappa({}).has_value());
}

TEST_CASE("Fleiss kappa: unanimity, textbook disagreement, admission rule") {
    // Unanimous raters on every question in one stratum.
    std::vector<FleissQuestion> unanimous;
    for (int i = 0; i < 4; ++i)
        unanimous.push_back({3, false, {L({'A'}), L({'A'}), L({'A'})}});
    unanimous.push_back({3, false, {L({'B'}), L({'B'}), L({'B'})}});
    auto r1 = fleiss_kappa(unanimous);
    REQUIRE(r1.kappa);
    CHECK(*r1.kappa == Catch::Approx(1.0));

    // Two raters always disagreeing on k=2 questions: kappa = -1 under
    // uniform marginals (textbook 2x2 case, hand-checkable).
    std::vector<FleissQuestion> disagree = {
        {2, false, {L({'A'}), L({'B'})}},
        {2, false, {L({'B'}), L({'A'})}},
    };
    auto r2 = fleiss_kappa(disagree);
    REQUIRE(r2.kappa);
    CHECK(*r2.kappa == Catch::Approx(-1.0));

    // Questions with fewer than two parse-valid trials stay out of tallies.
    std::vector<FleissQuestion> thin = {{2, false, {L({'A'})}}};
    CHECK_FALSE(fleiss_kappa(thin).kappa.has_value());

    // Degenerate stratum: everyone always votes A -> excluded with a note.
    std::vector<FleissQuestion> degenerate = {
        {2, false, {L({'A'}), L({'A'})}},
        {2, false, {L({'A'}), L({'A'})}},
    };
    auto r3 = fleiss_kappa(degenerate);
    CHECK_FALSE(r3.kappa.has_value());
    CHECK_FALSE(r3.notes.empty());

    // Multi-answer reduction to per-label binary kappa: perfect agreement.
    std::vector<FleissQuestion> multi = {
        {3, true, {L({'A', 'B'}), L({'A', 'B'})}},
        {3, true, {L({'C'}), L({'C'})}},
    };
    auto r4 = fleiss_kappa(multi);
    REQUIRE(r4.kappa);
    CHECK(*r4.kappa == Catch::Approx(1.0));
}

TEST_CASE("composite accuracy renormalizes over valid buckets") {
    CHECK(*composite_accuracy({{0.5, 0.15}, {0.5, 0.15}, {0.5, 0.70}}) == Catch::Approx(0.5));
    CHECK(*composite_accuracy({{0.6, 0.15}, {std::nullopt, 0.15}, {0.6, 0.70}}) ==
          Catch::Approx(0.6));
    CHECK_FALSE(composite_accuracy({{std::nullopt, 0.15}, {std::nullopt, 0.85}}).has_value());

    // Derived fixture reproducing the published composite from its slices:
    // 0.15*0.6261 + 0.15*0.8889 + 0.70*mc = 0.6016 with mc = 0.53478...
    double mc = (0.6016 - 0.15 * (0.6261 + 0.8889)) / 0.70;
    auto composite = composite_accuracy({{0.6261, 0.15}, {0.8889, 0.15}, {mc, 0.70}});
    REQUIRE(composite);
    CHECK(*composite == Catch::Approx(0.6016).margin(5e-5));

    // Hand-checked renormalization values to 1e-12.
    auto one_missing = composite_accuracy({{0.6, 0.15}, {std::nullopt, 0.15}, {0.9, 0.70}});
    CHECK(*one_missing == Catch::Approx((0.15 * 0.6 + 0.70 * 0.9) / 0.85).margin(1e-12));
    auto two_missing =
        composite_accuracy({{std::nullopt, 0.15}, {0.8889, 0.15}, {std::nullopt, 0.70}});
    CHECK(*two_missing == Catch::Approx(0.8889).margin(1e-12));
}

TEST_CASE("per-correct cost reproduces the published arithmetic") {
    auto qwen = per_correct_cost(0.45, 80, 3, 0.5896);
    REQUIRE(qwen);
    CHECK(*qwen >= 0.0031);
    CHECK(*qwen <= 0.0033);
    CHECK(*qwen == Catch::Approx(0.00318).margin(5e-6));

    auto deepseek = per_correct_cost(3.60, 80, 3, 0.6016);
    REQUIRE(deepseek);
    CHECK(*deepseek >= 0.0248);
    CHECK(*deepseek <= 0.0250);

    CHECK(*per_correct_cost(1.0, 10, 1, 1.0) == Catch::Approx(0.1));
    CHECK_FALSE(per_correct_cost(1.0, 10, 1, 0.0).has_value());
    CHECK_FALSE(per_correct_cost(1.0, 10, 1, std::nullopt).has_value());
}

TEST_CASE("Brier family: label, decision, NLL, MBS") {
    parser::BeliefVector uniform{{0.5, 0.5}, dataset::ChoiceType::single};
    auto outcomes = outcome_vector(L({'A'}), 2);
    auto b = brier_family(uniform, outcomes);
    CHECK(b.bs_label == Catch::Approx(0.25));
    REQUIRE(b.bs_decision);
    CHECK(*b.bs_decision == Catch::Approx(0.5));
    REQUIRE(b.mbs);
    CHECK(*b.mbs == Catch::Approx(0.0).margin(1e-9));  // chance maps to zero

    parser::BeliefVector confident{{1.0 - 1e-3, 1e-3}, dataset::ChoiceType::single};
    auto c = brier_family(confident, outcomes);
    CHECK(c.bs_label == Catch::Approx(1e-6).margin(1e-9));
    CHECK(c.nll == Catch::Approx(-std::log(1.0 - 1e-3)));

    // Multi regime: per-label binary cross-entropy, no decision/MBS columns.
    parser::BeliefVector multi{{0.9, 0.1, 0.8}, dataset::ChoiceType::multi};
    auto outcomes3 = outcome_vector(L({'A', 'C'}), 3);
    auto m = brier_family(multi, outcomes3);
    CHECK_FALSE(m.bs_decision);
    CHECK_FALSE(m.mbs);
    double expect_nll =
        -(std::log(0.9) + std::log(1 - 0.1) + std::log(0.8)) / 3.0;
    CHECK(m.nll == Catch::Approx(expect_nll));
}

TEST_CASE("BI and ABI conventions") {
    CHECK(brier_index({0.0, 0.0}) == Catch::Approx(100.0));
    CHECK(brier_index({0.25}) == Catch::Approx(50.0));

    // gamma_uniform for k=2 one-hot: ((0.5-1)^2 + (0.5-0)^2)/2 = 0.25.
    CHECK(gamma_uniform(outcome_vector(L({'A'}), 2)) == Catch::Approx(0.25));

    // Model matching its baseline exactly: ABI = 100, continuous at 0.
    CHECK(adjusted_brier_index({0.25, 0.1}, {0.25, 0.1}) == Catch::Approx(100.0));
    CHECK(adjusted_brier_index({0.26}, {0.25}) == Catch::Approx(100.0 * (1 - std::sqrt(0.01))));
    CHECK(adjusted_brier_index({0.24}, {0.25}) == Catch::Approx(100.0 * (1 + std::sqrt(0.01))));
    // Continuity at mean(ABS) = 0: both branches approach 100. The square
    // root has unbounded slope there, so the gap scales as 200*sqrt(eps).
    double eps = 1e-12;
    CHECK(std::abs(adjusted_brier_index({0.25 + eps}, {0.25}) -
                   adjusted_brier_index({0.25 - eps}, {0.25})) < 1e-3);
}

TEST_CASE("discrete diagnostics: hamming, votes, entropy") {
    CHECK(hamming_credit(L({'A', 'B'}), L({'A', 'B'}), 4) == 1.0);
    CHECK(hamming_credit(L({'A'}), L({'A', 'B'}), 4) == Catch::Approx(0.75));

    QuestionVotes consistent{4, false, L({'A'}), {L({'A'}), L({'A'}), L({'A'})}, {1, 1, 1}};
    CHECK(vote_concentration(consistent) == 1.0);
    CHECK(question_entropy(consistent) == Catch::Approx(0.0));
    REQUIRE(majority_vote(consistent));

    QuestionVotes split{4, false, L({'A'}), {L({'A'}), L({'B'})}, {1, 0}};
    CHECK(vote_concentration(split) == 0.5);
    CHECK(question_entropy(split) == Catch::Approx(1.0));
    CHECK_FALSE(majority_vote(split));  // tie drops from MV denominators

    auto diag = discrete_diagnostics({consistent, split}, 0.5);
    REQUIRE(diag.mv_acc);
    CHECK(*diag.mv_acc == 1.0);  // tied question dropped, the other hits
    REQUIRE(diag.vci);
    CHECK(*diag.vci == Catch::Approx(0.75));
}

TEST_CASE("behavioural scalars") {
    parser::BeliefVector b1{{0.5, 0.5}, dataset::ChoiceType::single};
    parser::BeliefVector b2{{0.8, 0.2}, dataset::ChoiceType::single};
    auto outcomes = outcome_vector(L({'A'}), 2);

    auto constant = behavioral_scalars({b1, b1, b1}, 2, L({'A'}), outcomes, std::nullopt);
    CHECK(*constant.volatility == Catch::Approx(0.0));
    CHECK(*constant.convergence_step == 1);

    auto moving = behavioral_scalars({b1, b2}, 0, L({'A'}), outcomes, std::nullopt);
    CHECK(*moving.volatility > 0.0);
    // search_calls = 0 divides by one, not zero.
    double expected_eta = -std::log(0.5) - (-std::log(0.8));
    CHECK(*moving.evidence_efficiency == Catch::Approx(expected_eta));

    CHECK_FALSE(inter_trial_sigma({{0.5, 0.5}}).has_value());  // needs >= 2 trials
    auto sigma = inter_trial_sigma({{0.5, 0.5}, {0.7, 0.3}});
    REQUIRE(sigma);
    CHECK(*sigma > 0.0);

    auto flagged = behavioral_scalars({b2}, 1, L({'A'}), outcomes,
                                      std::string("counterevidence: B still plausible"));
    REQUIRE(flagged.counter_evidence_flag);
    CHECK(*flagged.counter_evidence_flag);
    auto unflagged = behavioral_scalars({b2}, 1, L({'A'}), outcomes,
                                        std::string("counterevidence: A weaker than hoped"));
    CHECK_FALSE(*unflagged.counter_evidence_flag);
}

TEST_CASE("calibration conflict thresholds") {
    std::vector<CalibrationCell> consistent = {{"low", 0.4}, {"high", 0.9}};
    CHECK_FALSE(calibration_conflict(consistent));
    std::vector<CalibrationCell> low_but_numeric_high = {{"low", 0.85}};
    CHECK(calibration_conflict(low_but_numeric_high));
    std::vector<CalibrationCell> high_but_numeric_low = {{"high", 0.5}};
    CHECK(calibration_conflict(high_but_numeric_low));
}

TEST_CASE("audit statistics reproduce the published confusion matrix") {
    auto stats = audit_stats(235, 31, 1, 3);
    CHECK(stats.per_item_rate == Catch::Approx(3.0 / 270.0));
    CHECK(std::abs(stats.per_item_rate - 0.011) < 0.0005);
    REQUIRE(stats.recall);
    CHECK(std::abs(*stats.recall - 0.987) < 0.0005);
    REQUIRE(stats.specificity);
    CHECK(std::abs(*stats.specificity - 0.969) < 0.0005);
    REQUIRE(stats.leak_conditional);
    CHECK(std::abs(*stats.leak_conditional - 0.013) < 0.0005);
    CHECK(std::abs(stats.wilson_upper_95 - 0.032) < 0.001);

    auto clean = audit_stats(0, 100, 0, 0);
    CHECK(clean.per_item_rate == 0.0);
    CHECK(clean.wilson_upper_95 > 0.0);  // Wilson never returns 0 for finite N
    CHECK_FALSE(clean.leak_conditional.has_value());

    auto worst = audit_stats(0, 0, 0, 10);
    CHECK(worst.per_item_rate == 1.0);
}

TEST_CASE("kappa ranking matches pass@1 ranking on shared samples") {
    // Three synthetic models on the same question set with the same trial
    // counts; chance correction is a monotone rescaling.
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<int> bit(0, 1);
    const int Q = 30, T = 3;
    std::vector<size_t> ks(Q);
    for (auto& k : ks) k = 2 + rng() % 4;

    struct ModelFix {
        std::vector<std::vector<int>> verdicts;
        std::vector<CohenSample> samples;
    };
    std::vector<ModelFix> models(3);
    for (auto& m : models) {
        m.verdicts.resize(Q);
        for (int q = 0; q < Q; ++q) {
            for (int t = 0; t < T; ++t) {
                int c = bit(rng);
                m.verdicts[q].push_back(c);
                m.samples.push_back({ks[q], false, c == 1});
            }
        }
    }
    std::vector<std::pair<double, double>> scores;  // (pass1, kappa)
    for (auto& m : models) {
        auto pf = pass_family(m.verdicts);
        auto k = cohen_kappa(m.samples);
        REQUIRE(pf);
        REQUIRE(k);
        scores.push_back({pf->pass1_avg, *k});
    }
    for (size_t a = 0; a < scores.size(); ++a)
        for (size_t b = 0; b < scores.size(); ++b)
            if (scores[a].first < scores[b].first) CHECK(scores[a].second < scores[b].second);
}

TEST_CASE("summarize_model surfaces the probabilistic family when beliefs exist") {
    using parser::BeliefVector;
    std::vector<QuestionRecord> questions;
    for (int i = 0; i < 4; ++i) {
        QuestionRecord q;
        q.id = "q" + std::to_string(i);
        q.question_type = dataset::QuestionType::yes_no;
        q.choice_type = dataset::ChoiceType::single;
        q.k = 2;
        q.gold = {'A'};
        for (int t = 0; t < 2; ++t) {
            TrialOutcome trial;
            trial.counted = true;
            trial.parse_valid = true;
            trial.predicted = std::set<char>{'A'};
            trial.belief = BeliefVector{{0.8, 0.2}, dataset::ChoiceType::single};
            trial.belief_trace = {BeliefVector{{0.5, 0.5}, dataset::ChoiceType::single},
                                  BeliefVector{{0.8, 0.2}, dataset::ChoiceType::single}};
            trial.search_calls = 1;
            trial.linguistic_confidence = "high";
            q.trials.push_back(trial);
        }
        questions.push_back(std::move(q));
    }
    auto s = summarize_model("m", questions, std::nullopt, 2, nullptr);

    // BS = ((0.8-1)^2 + (0.2-0)^2)/2 = 0.04 on every trial.
    REQUIRE(s.bi);
    CHECK(*s.bi == Catch::Approx(100.0 * (1 - std::sqrt(0.04))));
    REQUIRE(s.abi_uniform);  // baseline 0.25, ABS = -0.21 < 0 on every question
    CHECK(*s.abi_uniform == Catch::Approx(100.0 * (1 + std::sqrt(0.21))));
    REQUIRE(s.mean_nll);
    CHECK(*s.mean_nll == Catch::Approx(-std::log(0.8)));
    REQUIRE(s.mean_mbs);
    CHECK(*s.mean_mbs == Catch::Approx(100.0 * (std::log2(0.8) + 1)));

    // Crowd baseline: other models exactly at this model's BS -> ABI = 100.
    std::map<std::string, double> crowd;
    for (auto& q : questions) crowd[q.id] = 0.04;
    auto with_crowd = summarize_model("m", questions, std::nullopt, 2, &crowd);
    REQUIRE(with_crowd.abi_crowd);
    CHECK(*with_crowd.abi_crowd == Catch::Approx(100.0));

    // Behavioural columns populate from the trace.
    REQUIRE(s.mean_volatility);
    CHECK(*s.mean_volatility > 0.0);
    REQUIRE(s.mean_convergence_step);
    CHECK(*s.mean_convergence_step == Catch::Approx(2.0));
    // linguistic high with max prob 0.8 >= 0.55: no conflict.
    REQUIRE(s.calibration_conflict);
    CHECK(*s.calibration_conflict == 0.0);
}

TEST_CASE("linguistic confidence and counterevidence extraction") {
    using parser::extract_counterevidence_note;
    using parser::extract_linguistic_confidence;
    CHECK(extract_linguistic_confidence("My confidence: high. \\boxed{A}") == "high");
    CHECK(extract_linguistic_confidence("Confidence is low here") == "low");
    CHECK(extract_linguistic_confidence("confidence: medium") == "medium");
    // Last statement wins; word boundaries respected.
    CHECK(extract_linguistic_confidence("confidence low ... final confidence high") == "high");
    CHECK_FALSE(extract_linguistic_confidence("confidence is well below average"));
    CHECK_FALSE(extract_linguistic_confidence("no signal"));

    auto note = extract_counterevidence_note("reasoning\ncounterevidence: B remains live\nmore");
    REQUIRE(note);
    CHECK(note->find("B remains live") != std::string::npos);
    CHECK_FALSE(extract_counterevidence_note("nothing relevant"));
}

TEST_CASE("FSS of a seeded uniform-random predictor is chance-zero") {
    std::mt19937_64 rng(20260401);
    const int Q = 200, T = 3;
    std::vector<double> skills;
    for (int qi = 0; qi < Q; ++qi) {
        size_t k = 2 + rng() % 5;
        bool multi = (qi % 2) == 0 && k >= 3;
        std::set<char> gold;
        if (multi) {
            size_t m = 1 + rng() % (k - 1);
            while (gold.size() < m) gold.insert(static_cast<char>('A' + rng() % k));
        } else {
            gold.insert(static_cast<char>('A' + rng() % k));
        }
        double chance = multi ? tversky_chance(static_cast<int>(gold.size()), static_cast<int>(k))
                              : 1.0 / static_cast<double>(k);
        double mean_t = 0;
        for (int t = 0; t < T; ++t) {
            std::set<char> pred;
            if (multi) {
                for (size_t i = 0; i < k; ++i)
                    if (rng() % 2) pred.insert(static_cast<char>('A' + i));
            } else {
                pred.insert(static_cast<char>('A' + rng() % k));
            }
            mean_t += tversky(pred, gold);
        }
        mean_t /= T;
        skills.push_back((mean_t - chance) / (1.0 - chance));
    }
    double mean = 0;
    for (double s : skills) mean += s;
    mean /= skills.size();
    double var = 0;
    for (double s : skills) var += (s - mean) * (s - mean);
    double se = std::sqrt(var / skills.size() / skills.size());
    CHECK(std::abs(mean) <= 3.0 * se);
}
