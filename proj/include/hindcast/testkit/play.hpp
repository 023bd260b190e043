#pragma once

#include <memory>
#include <string>
#include <vector>

#include "hindcast/gateway/chat.hpp"
#include "hindcast/leakfilter/leakfilter.hpp"
#include "hindcast/parser/answer.hpp"
#include "hindcast/react/loop.hpp"
#include "hindcast/renderer/render.hpp"
#include "hindcast/search/search.hpp"
#include "hindcast/testkit/scripted.hpp"

namespace hindcast::testkit {

struct PlayOptions {
    int step_cap = 6;
    int search_cap = 4;
    int delta_days = 1;
    bool filter_enabled = true;
    std::vector<std::string> detector_drop_needles;
    std::vector<FailureInjection> chat_failures;
    std::vector<SearchFailureInjection> search_failures;  // applied by call index
    prompts::PromptTemplateSet templates = prompts::default_templates();
    prompts::ProtocolConfig protocol;
};

struct PlayedTrial {
    std::string rendered_prompt;
    react::TrialResult trial;
    parser::ParsedAnswer answer;
    std::shared_ptr<ScriptedChatTransport> chat;
    std::shared_ptr<ScriptedSearchBackend> search_backend;
    std::shared_ptr<ScriptedDetectorTransport> detector_transport;
};

// Drives the real renderer -> loop -> parser path against scripted backends.
// Zero network access; byte-stable traces given the same script and corpus.
inline PlayedTrial play_trial(const std::vector<ScriptedReply>& script,
                              const std::vector<CorpusDoc>& corpus,
                              const dataset::Question& question, PlayOptions opts = {}) {
    PlayedTrial played;
    played.chat = std::make_shared<ScriptedChatTransport>();
    for (auto& r : script) played.chat->push_reply(r);
    for (auto& f : opts.chat_failures) played.chat->inject_failure(f);

    played.search_backend = std::make_shared<ScriptedSearchBackend>();
    for (auto& d : corpus) played.search_backend->add_doc(d);
    {
        int idx = 1;
        for (auto& f : opts.search_failures) played.search_backend->inject_failure_at(idx++, f);
    }

    played.detector_transport = std::make_shared<ScriptedDetectorTransport>();
    for (auto& n : opts.detector_drop_needles) played.detector_transport->add_drop_needle(n);

    auto masked = dataset::mask(question, opts.delta_days);
    opts.protocol.step_cap = opts.step_cap;
    opts.protocol.search_cap = opts.search_cap;
    auto rendered = prompts::append_protocols(
        prompts::render_user_prompt(masked, opts.templates), opts.protocol);
    played.rendered_prompt = rendered.text;

    llm::GatewayConfig gateway_cfg;
    auto keys = std::make_shared<llm::KeyRing>(std::vector<std::string>{"test-key"});
    auto pool = std::make_shared<search::KeyPool>(std::vector<std::string>{"tavily-a", "tavily-b"});
    search::SearchGateway search_gateway(played.search_backend, pool, {}, no_sleep());

    leakfilter::DetectorConfig dcfg;
    dcfg.enabled = opts.filter_enabled;
    dcfg.model = "scripted-detector";
    leakfilter::Detector detector(dcfg, played.detector_transport,
                                  std::make_shared<llm::KeyRing>(std::vector<std::string>{"dk"}),
                                  no_sleep());

    react::LoopConfig loop_cfg;
    loop_cfg.step_cap = opts.step_cap;
    loop_cfg.search_cap = opts.search_cap;

    react::ModelCaller caller = [&](const std::vector<llm::ChatMessage>& messages,
                                    const std::vector<nlohmann::json>& tools) {
        llm::ChatRequest req;
        req.model_slug = "scripted/model";
        req.messages = messages;
        req.tools = tools;
        return llm::send_chat(req, *played.chat, *keys, gateway_cfg, no_sleep());
    };
    react::SearchFn search_fn = [&](const std::string& query) {
        return search_gateway.search(query, masked.prediction_cutoff);
    };
    react::FilterFn filter_fn = [&](const std::vector<search::SearchResultItem>& items) {
        return leakfilter::filter_results(items, masked.prediction_cutoff,
                                          opts.filter_enabled ? &detector : nullptr);
    };

    played.trial = react::run_loop(rendered.text, loop_cfg, caller, search_fn, filter_fn);
    if (played.trial.final_raw)
        played.answer = parser::parse_answer(
            *played.trial.final_raw,
            {question.question_type, question.choice_type, question.options});
    else
        played.answer = parser::ParsedAnswer::fail(parser::ParseFailure::no_box);
    return played;
}

}  // namespace hindcast::testkit
