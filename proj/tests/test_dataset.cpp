#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <random>

#include "hindcast/dataset/build.hpp"
#include "hindcast/dataset/question.hpp"
#include "hindcast/dataset/store.hpp"

using namespace hindcast;
using dataset::AdmissibilityReason;
using dataset::ChoiceType;
using dataset::Question;
using dataset::QuestionType;
using dataset::RawRecord;

namespace {

Question sample_question() {
    Question q;
    q.id = "q1";
    q.choice_type = ChoiceType::single;
    q.question_type = QuestionType::yes_no;
    q.event = "Will the launch happen on schedule?";
    q.options = {"yes", "no"};
    q.answer = {'A'};
    q.end_time = Date(2026, 3, 11);
    return q;
}

RawRecord raw(const std::string& id, std::vector<std::string> options,
              std::vector<std::string> answer, const std::string& end_time) {
    RawRecord r;
    r.id = id;
    r.event = "event for " + id;
    r.options = std::move(options);
    r.answer_labels = std::move(answer);
    r.end_time = end_time;
    return r;
}

std::filesystem::path tmp_path(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / "hindcast_tests";
    std::filesystem::create_directories(p);
    return p / name;
}

}  // namespace

TEST_CASE("admissibility window") {
    Question q = sample_question();

    auto ok = dataset::admissible(q, Date(2026, 3, 10), 1);
    CHECK(ok.admissible);
    CHECK(ok.reason == AdmissibilityReason::ok);

    auto late = dataset::admissible(q, Date(2026, 3, 12), 1);
    CHECK_FALSE(late.admissible);
    CHECK(late.reason == AdmissibilityReason::skipped_training_cutoff);

    auto degenerate = dataset::admissible(q, Date(2026, 3, 1), 0);
    CHECK_FALSE(degenerate.admissible);
    CHECK(degenerate.reason == AdmissibilityReason::invalid_window);
}

TEST_CASE("admissibility is monotone in the model cutoff") {
    Question q = sample_question();
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<int> offset(-30, 30);
    for (int i = 0; i < 200; ++i) {
        int a = offset(rng), b = offset(rng);
        Date k1 = q.end_time.minus_days(std::max(a, b));  // k1 <= k2
        Date k2 = q.end_time.minus_days(std::min(a, b));
        if (dataset::admissible(q, k2, 1).admissible)
            CHECK(dataset::admissible(q, k1, 1).admissible);
    }
}

TEST_CASE("masking strips the gold answer and the resolution time") {
    Question q = sample_question();
    auto masked = dataset::mask(q, 1);
    CHECK(masked.id == q.id);
    CHECK(masked.event == q.event);
    CHECK(masked.options == q.options);
    CHECK(masked.prediction_cutoff.to_iso() == "2026-03-10");
    CHECK(masked.prediction_cutoff < q.end_time);
}

TEST_CASE("build pipeline filters, encodes, and fingerprints") {
    auto path = tmp_path("build_basic.db");
    std::vector<RawRecord> rows = {
        raw("q1", {"yes", "no"}, {"yes"}, "2026-03-11"),
        raw("q2", {"Team Alpha", "Team Beta"}, {"Team Beta"}, "2026-03-20"),
        raw("q3", {"red", "green", "blue", "black"}, {"A", "C"}, "2026-04-01T08:00:00Z"),
        raw("bad_options", {"only one"}, {"A"}, "2026-04-01"),
        raw("bad_date", {"a", "b"}, {"A"}, "sometime"),
        raw("bad_answer", {"a", "b"}, {"zebra"}, "2026-04-01"),
    };
    rows[2].choice_type = "multi";
    dataset::PassThroughGate gate;
    auto report = dataset::build_dataset(rows, path.string(), gate);

    CHECK(report.n_source == 6);
    CHECK(report.n_kept == 3);
    REQUIRE(report.rejected.size() == 3);
    for (auto& r : report.rejected) CHECK_FALSE(r.reason.empty());
    CHECK(report.source_db_hash.size() == 64);
    CHECK(report.metadata_hash.size() == 64);

    dataset::Store store(path.string());
    auto questions = store.load_questions();
    REQUIRE(questions.size() == 3);
    CHECK(questions[0].question_type == QuestionType::yes_no);
    CHECK(questions[0].answer == std::set<char>{'A'});
    CHECK(questions[1].question_type == QuestionType::binary_named);
    CHECK(questions[1].answer == std::set<char>{'B'});
    CHECK(questions[2].question_type == QuestionType::multiple_choice);
    CHECK(questions[2].choice_type == ChoiceType::multi);
    CHECK(questions[2].answer == std::set<char>({'A', 'C'}));

    // The store encodes answers as comma-separated letters.
    auto st = store.db().prepare("SELECT answer FROM questions WHERE id='q3'");
    REQUIRE(st.step());
    CHECK(st.column_text(0) == "A, C");
}

TEST_CASE("a corpus with the published type distribution survives intact") {
    // 37 yes/no + 3 binary + 40 multiple-choice (32 single, 8 multi) = 80.
    std::vector<RawRecord> rows;
    int id = 0;
    for (int i = 0; i < 37; ++i)
        rows.push_back(raw("q" + std::to_string(id++), {"yes", "no"}, {"yes"}, "2026-03-11"));
    for (int i = 0; i < 3; ++i)
        rows.push_back(raw("q" + std::to_string(id++), {"Side A", "Side B"}, {"Side B"},
                           "2026-03-20"));
    for (int i = 0; i < 32; ++i)
        rows.push_back(raw("q" + std::to_string(id++), {"w", "x", "y", "z"}, {"C"},
                           "2026-04-01"));
    for (int i = 0; i < 8; ++i) {
        auto r = raw("q" + std::to_string(id++), {"w", "x", "y", "z"}, {"A", "D"}, "2026-04-14");
        r.choice_type = "multi";
        rows.push_back(std::move(r));
    }

    auto path = tmp_path("build_distribution.db");
    dataset::PassThroughGate gate;
    auto report = dataset::build_dataset(rows, path.string(), gate);
    CHECK(report.n_kept == 80);
    CHECK(report.rejected.empty());

    dataset::Store store(path.string());
    int yes_no = 0, binary = 0, mc_single = 0, mc_multi = 0;
    for (auto& q : store.load_questions()) {
        switch (q.question_type) {
            case QuestionType::yes_no: ++yes_no; break;
            case QuestionType::binary_named: ++binary; break;
            case QuestionType::multiple_choice:
                (q.choice_type == ChoiceType::multi ? mc_multi : mc_single)++;
                break;
        }
    }
    CHECK(yes_no == 37);
    CHECK(binary == 3);
    CHECK(mc_single == 32);
    CHECK(mc_multi == 8);
}

TEST_CASE("empty source stream produces an empty store with valid fingerprints") {
    auto path = tmp_path("build_empty.db");
    dataset::PassThroughGate gate;
    auto report = dataset::build_dataset({}, path.string(), gate);
    CHECK(report.n_kept == 0);
    CHECK(report.source_db_hash.size() == 64);
    dataset::Store store(path.string());
    CHECK(store.load_questions().empty());
    CHECK_FALSE(store.load_templates().prompt_template.empty());
}

TEST_CASE("byte-identical input yields byte-identical store and hash") {
    std::vector<RawRecord> rows = {
        raw("q1", {"yes", "no"}, {"no"}, "2026-03-11"),
        raw("q2", {"x", "y", "z"}, {"B"}, "2026-03-12"),
    };
    dataset::PassThroughGate gate;
    auto p1 = tmp_path("det_a.db");
    auto p2 = tmp_path("det_b.db");
    auto r1 = dataset::build_dataset(rows, p1.string(), gate);
    auto r2 = dataset::build_dataset(rows, p2.string(), gate);
    CHECK(r1.source_db_hash == r2.source_db_hash);
    CHECK(r1.metadata_hash == r2.metadata_hash);
}

TEST_CASE("audit gate can reject and rewrite rows") {
    auto path = tmp_path("build_gate.db");
    std::vector<RawRecord> rows = {
        raw("keep_me", {"yes", "no"}, {"yes"}, "2026-03-11"),
        raw("drop_me", {"yes", "no"}, {"no"}, "2026-03-12"),
    };

    dataset::ApprovedIdsGate gate({"keep_me"});
    auto report = dataset::build_dataset(rows, path.string(), gate);
    CHECK(report.n_kept == 1);
    REQUIRE(report.rejected.size() == 1);
    CHECK(report.rejected[0].id == "drop_me");

    struct RewriteGate : dataset::AuditGate {
        dataset::AuditDecision review(const Question& q,
                                      const std::vector<std::string>&) override {
            if (q.id == "keep_me")
                return {dataset::AuditAction::rewrite, "rewritten stem", "tense fix"};
            return {dataset::AuditAction::keep, "", ""};
        }
    } rewriter;
    auto path2 = tmp_path("build_gate2.db");
    dataset::build_dataset(rows, path2.string(), rewriter);
    dataset::Store store(path2.string());
    CHECK(store.load_questions()[0].event == "rewritten stem");
}

TEST_CASE("malformed letters and single/multi constraints reject") {
    auto path = tmp_path("build_constraints.db");
    std::vector<RawRecord> rows = {
        raw("multi_on_binary", {"yes", "no"}, {"yes", "no"}, "2026-03-11"),
        raw("single_with_two", {"a", "b", "c"}, {"A", "B"}, "2026-03-11"),
    };
    rows[1].choice_type = "single";
    dataset::PassThroughGate gate;
    auto report = dataset::build_dataset(rows, path.string(), gate);
    CHECK(report.n_kept == 0);
    CHECK(report.rejected.size() == 2);
}
