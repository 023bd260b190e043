#include <catch2/catch_amalgamated.hpp>

#include <fstream>

#include "hindcast/react/loop.hpp"
#include "hindcast/testkit/play.hpp"
#include "hindcast/testkit/scripted.hpp"

using namespace hindcast;
using react::InjectionPath;
using react::LoopConfig;
using react::LoopState;
using testkit::CorpusDoc;
using testkit::ScriptedReply;

namespace {

dataset::Question mc_question() {
    dataset::Question q;
    q.id = "q17";
    q.choice_type = dataset::ChoiceType::single;
    q.question_type = dataset::QuestionType::multiple_choice;
    q.event = "Which team wins the final?";
    q.options = {"Team Red", "Team Blue", "Team Green"};
    q.answer = {'B'};
    q.end_time = Date(2026, 3, 11);
    return q;
}

std::vector<CorpusDoc> straddling_corpus() {
    return {
        {"pre", "form guide", "https://n/pre", std::string("2026-03-01"),
         "PRE_CUTOFF_EVIDENCE detailed analysis", "raw pre"},
        {"post", "final recap", "https://n/post", std::string("2026-03-12"),
         "POST_CUTOFF_RESULT Team Blue lifted the trophy", "raw post"},
        {"undated_leak", "cached mirror", "https://n/cache", std::nullopt,
         "UNDATED_LEAK the match ended 2-1 to Blue", "raw leak"},
    };
}

std::string serialize_messages(const std::vector<llm::ChatMessage>& messages) {
    nlohmann::json arr = nlohmann::json::array();
    for (auto& m : messages) arr.push_back(m.to_json());
    return arr.dump();
}

}  // namespace

TEST_CASE("status header matches the exact format and parses back") {
    LoopConfig cfg;
    cfg.step_cap = 6;
    cfg.search_cap = 4;
    LoopState state;
    state.step = 3;
    state.searches_used = 1;
    std::string header = react::status_header(state, cfg);
    CHECK(header == "[Harness status] step 3/6 (3 remaining) \xC2\xB7 web_search 1/4 used (3 left).");

    // Parse the counters back out as an independent check of the format.
    int k = 0, n = 0, r = 0, s = 0, c = 0, m = 0;
    int matched = std::sscanf(header.c_str(),
                              "[Harness status] step %d/%d (%d remaining) \xC2\xB7 web_search "
                              "%d/%d used (%d left).",
                              &k, &n, &r, &s, &c, &m);
    REQUIRE(matched == 6);
    CHECK(k == 3);
    CHECK(n == 6);
    CHECK(r == n - k);
    CHECK(s == 1);
    CHECK(c == 4);
    CHECK(m == c - s);
}

TEST_CASE("injection priority table") {
    LoopConfig cfg;
    cfg.step_cap = 6;
    cfg.search_cap = 4;
    cfg.lookahead = 2;

    LoopState fresh;  // step 1, nothing used
    CHECK(react::select_injection(fresh, cfg) == InjectionPath::none);

    LoopState last;
    last.step = 6;
    CHECK(react::select_injection(last, cfg) == InjectionPath::last_step_hard_cutoff);
    CHECK(react::injection_strips_tools(InjectionPath::last_step_hard_cutoff));

    LoopState penultimate;
    penultimate.step = 5;
    CHECK(react::select_injection(penultimate, cfg) == InjectionPath::penultimate_soft_warning);
    CHECK_FALSE(react::injection_strips_tools(InjectionPath::penultimate_soft_warning));

    LoopState spent;
    spent.step = 2;
    spent.searches_used = 4;
    CHECK(react::select_injection(spent, cfg) == InjectionPath::budget_commit_notice);
    CHECK(react::injection_strips_tools(InjectionPath::budget_commit_notice));

    // Spent budget at the penultimate step: commit notice outranks the soft
    // warning because the warning requires unspent budget.
    LoopState spent_late = spent;
    spent_late.step = 5;
    CHECK(react::select_injection(spent_late, cfg) == InjectionPath::budget_commit_notice);

    LoopState unboxed;
    unboxed.step = 2;
    unboxed.last_turn_unboxed = true;
    CHECK(react::select_injection(unboxed, cfg) == InjectionPath::unboxed_continuation);

    // Drop-tools disabled: exhausted budget no longer injects the notice.
    LoopConfig keep_tools = cfg;
    keep_tools.drop_tools_on_budget_exceeded = false;
    CHECK(react::select_injection(spent, keep_tools) == InjectionPath::none);
}

TEST_CASE("immediate answer ends the loop with zero searches") {
    auto played = testkit::play_trial({ScriptedReply::say("confident. \\boxed{B}")},
                                      straddling_corpus(), mc_question());
    REQUIRE(played.trial.final_raw);
    CHECK(played.trial.searches_used == 0);
    CHECK(played.trial.steps_used == 1);
    REQUIRE(played.answer.ok());
    CHECK(*played.answer.value == std::set<char>{'B'});
}

TEST_CASE("over-budget search appends a status payload without an external call") {
    testkit::PlayOptions opts;
    opts.step_cap = 8;
    opts.search_cap = 1;
    std::vector<ScriptedReply> script = {
        ScriptedReply::search("first query"),
        ScriptedReply::search("second query"),  // over budget
        ScriptedReply::say("fine. \\boxed{A}"),
    };
    auto played = testkit::play_trial(script, straddling_corpus(), mc_question(), opts);
    REQUIRE(played.trial.final_raw);
    CHECK(played.search_backend->calls() == 1);  // only the first left the process
    CHECK(played.trial.searches_used == 1);
    REQUIRE(played.trial.search_calls.size() == 2);
    CHECK(played.trial.search_calls[0].executed);
    CHECK_FALSE(played.trial.search_calls[1].executed);

    // The refusal is a tool message whose payload carries the status field.
    bool found_status_tool_message = false;
    for (auto& m : played.trial.messages) {
        if (m.role != "tool") continue;
        auto payload = nlohmann::json::parse(m.content, nullptr, false);
        if (payload.is_object() && payload.contains("status") &&
            payload["results"].empty())
            found_status_tool_message = true;
    }
    CHECK(found_status_tool_message);
}

TEST_CASE("T steps without a box return the invalid marker") {
    testkit::PlayOptions opts;
    opts.step_cap = 3;
    std::vector<ScriptedReply> script = {
        ScriptedReply::say("thinking..."),
        ScriptedReply::say("still thinking..."),
        ScriptedReply::say("no commitment"),
    };
    auto played = testkit::play_trial(script, straddling_corpus(), mc_question(), opts);
    CHECK_FALSE(played.trial.final_raw);
    CHECK(played.trial.steps_used == 3);
    CHECK_FALSE(played.answer.ok());
    CHECK(played.chat->calls() == 3);  // never more than T model calls
}

TEST_CASE("transcript stays a legal chat history with paired tool turns") {
    testkit::PlayOptions opts;
    opts.step_cap = 6;
    opts.search_cap = 2;
    std::vector<ScriptedReply> script = {
        ScriptedReply::search("query one"),
        ScriptedReply::say("unboxed reflection"),
        ScriptedReply::search("query two"),
        ScriptedReply::say("\\boxed{B}"),
    };
    auto played = testkit::play_trial(script, straddling_corpus(), mc_question(), opts);
    REQUIRE(played.trial.final_raw);

    const auto& messages = played.trial.messages;
    for (size_t i = 0; i < messages.size(); ++i) {
        if (messages[i].role == "tool") {
            REQUIRE(i > 0);
            size_t j = i;
            while (j > 0 && messages[j - 1].role == "tool") --j;
            REQUIRE(j > 0);
            CHECK(messages[j - 1].role == "assistant");
            CHECK_FALSE(messages[j - 1].tool_calls.empty());
            CHECK_FALSE(messages[i].tool_call_id.empty());
        }
        // Injections never interleave into an open assistant-tool cycle.
        if (messages[i].role == "user" && i > 0)
            CHECK((messages[i - 1].role != "assistant" || messages[i - 1].tool_calls.empty()));
    }
}

TEST_CASE("the barrier holds: no cutoff, no post-cutoff content in the trace") {
    testkit::PlayOptions opts;
    opts.search_cap = 2;
    opts.detector_drop_needles = {"UNDATED_LEAK"};
    std::vector<ScriptedReply> script = {
        ScriptedReply::search("final result"),
        ScriptedReply::say("\\boxed{B}"),
    };
    auto played = testkit::play_trial(script, straddling_corpus(), mc_question(), opts);
    std::string trace = serialize_messages(played.trial.messages);

    CHECK(trace.find("PRE_CUTOFF_EVIDENCE") != std::string::npos);
    CHECK(trace.find("POST_CUTOFF_RESULT") == std::string::npos);  // date filter
    CHECK(trace.find("UNDATED_LEAK") == std::string::npos);        // detector
    CHECK(trace.find("2026-03-10") == std::string::npos);          // chi itself
    CHECK(trace.find("2026-03-11") == std::string::npos);          // tau
}

TEST_CASE("search tool errors surface as tool payload errors, loop continues") {
    testkit::PlayOptions opts;
    opts.search_cap = 2;
    for (int i = 0; i < 4; ++i) opts.search_failures.push_back({search::KeyFailure::other, 500, "down"});
    std::vector<ScriptedReply> script = {
        ScriptedReply::search("failing query"),
        ScriptedReply::say("\\boxed{A}"),
    };
    auto played = testkit::play_trial(script, straddling_corpus(), mc_question(), opts);
    REQUIRE(played.trial.final_raw);
    REQUIRE(played.trial.search_calls.size() == 1);
    CHECK(played.trial.search_calls[0].executed);
    CHECK_FALSE(played.trial.search_calls[0].ok);

    bool error_tool_message = false;
    for (auto& m : played.trial.messages) {
        if (m.role != "tool") continue;
        auto payload = nlohmann::json::parse(m.content, nullptr, false);
        if (payload.is_object() && payload.contains("error") && payload.contains("status"))
            error_tool_message = true;
    }
    CHECK(error_tool_message);
}

TEST_CASE("per-step content policy failure records the trial error and stops") {
    testkit::PlayOptions opts;
    opts.chat_failures.push_back({1, 400, "blocked by safety", std::nullopt, {}});
    auto played = testkit::play_trial({ScriptedReply::say("\\boxed{A}")}, straddling_corpus(),
                                      mc_question(), opts);
    CHECK_FALSE(played.trial.final_raw);
    CHECK(played.trial.error == llm::ErrorKind::content_policy);
}

TEST_CASE("hard cutoff strips tools at the final step") {
    testkit::PlayOptions opts;
    opts.step_cap = 2;
    opts.search_cap = 4;
    std::vector<ScriptedReply> script = {
        ScriptedReply::say("no answer yet"),
        ScriptedReply::say("\\boxed{C}"),
    };
    auto played = testkit::play_trial(script, straddling_corpus(), mc_question(), opts);
    REQUIRE(played.trial.final_raw);
    auto log = played.chat->request_log();
    REQUIRE(log.size() == 2);
    CHECK(log[0].contains("tools"));
    CHECK_FALSE(log[1].contains("tools"));  // final step: empty tool list
    // The injected directive references the hard cutoff.
    std::string last_user;
    for (auto& m : log[1]["messages"])
        if (m["role"] == "user") last_user = m["content"].get<std::string>();
    CHECK(last_user.find("final step") != std::string::npos);
}

TEST_CASE("bail-out final-answer retry fires only when enabled, and flags itself") {
    auto run_with_retry = [&](bool enabled) {
        auto chat = std::make_shared<testkit::ScriptedChatTransport>();
        chat->push_reply(ScriptedReply::say("no commitment"));
        chat->push_reply(ScriptedReply::say("still nothing"));
        chat->push_reply(ScriptedReply::say("fine: \\boxed{B}"));  // retry turn
        llm::KeyRing keys({"k"});
        llm::GatewayConfig gcfg;
        react::LoopConfig cfg;
        cfg.step_cap = 2;
        cfg.search_cap = 0;
        cfg.final_answer_retry = enabled;
        react::ModelCaller caller = [&](const std::vector<llm::ChatMessage>& messages,
                                        const std::vector<nlohmann::json>& tools) {
            llm::ChatRequest req;
            req.model_slug = "v/m";
            req.messages = messages;
            req.tools = tools;
            return llm::send_chat(req, *chat, keys, gcfg, testkit::no_sleep());
        };
        auto trial = react::run_loop(
            "prompt", cfg, caller,
            [](const std::string&) -> search::SearchResponse {
                throw search::SearchCallError("unused");
            },
            [](const std::vector<search::SearchResultItem>& items) {
                return leakfilter::filter_results(items, Date(2026, 1, 1), nullptr);
            });
        return trial;
    };

    auto without = run_with_retry(false);
    CHECK_FALSE(without.final_raw);
    CHECK_FALSE(without.final_answer_retry_used);

    auto with = run_with_retry(true);
    CHECK(with.final_answer_retry_used);
    REQUIRE(with.final_raw);
    CHECK(with.final_raw->find("\\boxed{B}") != std::string::npos);
}

TEST_CASE("soft minimum-search nudge fires once and does not block the answer") {
    testkit::PlayOptions opts;
    opts.step_cap = 6;
    opts.search_cap = 4;
    std::vector<ScriptedReply> script = {
        ScriptedReply::say("early commitment \\boxed{B}"),
        ScriptedReply::say("after nudge, still \\boxed{B}"),
    };
    auto played = [&] {
        // play_trial uses the default min_search_calls = 0; drive run_loop
        // directly for the nonzero case.
        auto chat = std::make_shared<testkit::ScriptedChatTransport>();
        for (auto& r : script) chat->push_reply(r);
        llm::KeyRing keys({"k"});
        llm::GatewayConfig gcfg;
        react::LoopConfig cfg;
        cfg.step_cap = 6;
        cfg.search_cap = 4;
        cfg.min_search_calls = 1;
        react::ModelCaller caller = [&](const std::vector<llm::ChatMessage>& messages,
                                        const std::vector<nlohmann::json>& tools) {
            llm::ChatRequest req;
            req.model_slug = "v/m";
            req.messages = messages;
            req.tools = tools;
            return llm::send_chat(req, *chat, keys, gcfg, testkit::no_sleep());
        };
        return react::run_loop(
            "prompt", cfg, caller,
            [](const std::string&) -> search::SearchResponse { return {}; },
            [](const std::vector<search::SearchResultItem>& items) {
                return leakfilter::filter_results(items, Date(2026, 1, 1), nullptr);
            });
    }();
    REQUIRE(played.final_raw);
    CHECK(played.nudges_used == 1);  // nudged once, then the answer stands
    CHECK(played.steps_used == 2);
}

TEST_CASE("script and corpus fixtures load from their JSON format") {
    std::ifstream in(std::string(HC_FIXTURE_DIR) + "/trial_script.json");
    REQUIRE(in.good());
    auto fixture = nlohmann::json::parse(in);

    std::vector<ScriptedReply> script;
    for (auto& r : fixture["script"]) script.push_back(ScriptedReply::from_json(r));
    std::vector<CorpusDoc> corpus;
    for (auto& d : fixture["corpus"]) corpus.push_back(CorpusDoc::from_json(d));
    REQUIRE(script.size() == 2);
    REQUIRE(corpus.size() == 3);

    dataset::Question q;
    q.id = "fixture_q";
    q.question_type = dataset::QuestionType::yes_no;
    q.choice_type = dataset::ChoiceType::single;
    q.event = "Will the summit produce a joint statement?";
    q.options = {"yes", "no"};
    q.answer = {'A'};
    q.end_time = Date(2026, 3, 13);  // chi = 2026-03-12

    testkit::PlayOptions opts;
    opts.detector_drop_needles = {"UNDATED_SPOILER"};
    auto played = testkit::play_trial(script, corpus, q, opts);
    REQUIRE(played.answer.ok());
    CHECK(*played.answer.value == std::set<char>{'A'});
    CHECK(played.trial.searches_used == 1);
    std::string trace = serialize_messages(played.trial.messages);
    CHECK(trace.find("steady progress") != std::string::npos);
    CHECK(trace.find("signed joint statement") == std::string::npos);  // post-chi
    CHECK(trace.find("UNDATED_SPOILER") == std::string::npos);         // detector
}

TEST_CASE("belief blocks are collected per step in order") {
    testkit::PlayOptions opts;
    opts.protocol.belief_enabled = true;
    std::vector<ScriptedReply> script = {
        ScriptedReply::say("<belief>\nA: 0.5\nB: 0.3\nC: 0.2\n</belief> hmm"),
        ScriptedReply::say("<belief>\nA: 0.2\nB: 0.7\nC: 0.1\n</belief> \\boxed{B}"),
    };
    auto played = testkit::play_trial(script, straddling_corpus(), mc_question(), opts);
    REQUIRE(played.trial.final_raw);
    REQUIRE(played.trial.belief_blocks.size() == 2);
    CHECK(played.trial.belief_blocks[0].find("0.5") != std::string::npos);
    CHECK(played.trial.belief_blocks[1].find("0.7") != std::string::npos);
}
