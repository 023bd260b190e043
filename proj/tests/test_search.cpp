#include <catch2/catch_amalgamated.hpp>

#include "hindcast/search/keypool.hpp"
#include "hindcast/search/search.hpp"
#include "hindcast/testkit/scripted.hpp"

using namespace hindcast;
using search::KeyFailure;
using search::KeyPool;

namespace {

std::shared_ptr<testkit::ScriptedSearchBackend> corpus_backend() {
    auto backend = std::make_shared<testkit::ScriptedSearchBackend>();
    backend->add_doc({"d1", "pre-cutoff report", "https://a/1", std::string("2026-03-01"),
                      "before the line", "raw before"});
    backend->add_doc({"d2", "post-cutoff recap", "https://a/2", std::string("2026-03-15"),
                      "after the line", "raw after"});
    backend->add_doc({"d3", "undated page", "https://a/3", std::nullopt, "no date", "raw"});
    return backend;
}

}  // namespace

TEST_CASE("web_search tool schema pins the single query argument") {
    const auto& schema = search::web_search_schema();
    const auto& params = schema["function"]["parameters"];
    CHECK(params["properties"].size() == 1);
    CHECK(params["properties"].contains("query"));
    CHECK(params["required"] == nlohmann::json::array({"query"}));
    CHECK(schema["function"]["name"] == "web_search");
}

TEST_CASE("provider-side date restriction and truncation") {
    auto backend = corpus_backend();
    auto pool = std::make_shared<KeyPool>(std::vector<std::string>{"k1"});
    search::SearchConfig cfg;
    cfg.truncate_chars = 10;
    search::SearchGateway gw(backend, pool, cfg, testkit::no_sleep());

    auto resp = gw.search("anything", Date(2026, 3, 10));
    REQUIRE(resp.items.size() == 2);  // post-cutoff item filtered at serve time
    CHECK(resp.items[0].title == "pre-cutoff report");
    CHECK(resp.items[1].title == "undated page");  // forwarded for the detector
    for (auto& item : resp.items) CHECK(item.content.size() <= 10);
}

TEST_CASE("least-used acquisition with configuration-order ties") {
    KeyPool pool({"a", "b", "c"});
    auto l1 = pool.acquire();
    REQUIRE(l1);
    CHECK(l1->key == "a");
    auto l2 = pool.acquire();
    CHECK(l2->key == "b");
    auto l3 = pool.acquire();
    CHECK(l3->key == "c");
    // All tied again: back to configuration order.
    CHECK(pool.acquire()->key == "a");
}

TEST_CASE("auth blacklists permanently; rate limit cools down and expires") {
    auto now = std::chrono::steady_clock::now();
    auto fake_now = now;
    KeyPool pool({"a", "b"}, 60.0, [&] { return fake_now; });

    auto lease = pool.acquire();
    REQUIRE(lease);
    pool.report_auth_failure(lease->index);
    CHECK(pool.acquire()->key == "b");  // immediate swap
    CHECK(pool.snapshot()[0].status == "blacklisted");

    auto lease_b = pool.acquire();
    pool.report_rate_limit(lease_b->index);
    CHECK_FALSE(pool.acquire());  // a blacklisted, b cooling -> exhausted

    fake_now = now + std::chrono::seconds(61);
    auto recovered = pool.acquire();
    REQUIRE(recovered);
    CHECK(recovered->key == "b");  // cooldown expired; blacklist is absorbing
}

TEST_CASE("key-pool failure semantics through the gateway") {
    SECTION("401 blacklists key A forever and swaps to B without quota use") {
        auto backend = corpus_backend();
        backend->inject_failure_for_key("a", {KeyFailure::auth, 401, "bad key"});
        auto pool = std::make_shared<KeyPool>(std::vector<std::string>{"a", "b"});
        std::vector<double> sleeps;
        search::SearchGateway gw(backend, pool, {}, testkit::recording_sleeper(sleeps));
        auto resp = gw.search("q", Date(2026, 3, 10));
        CHECK(resp.items.size() == 2);
        CHECK(sleeps.empty());  // no retry quota consumed
        CHECK(pool->snapshot()[0].status == "blacklisted");
    }

    SECTION("429 cools key A and swaps without consuming retry quota") {
        auto backend = corpus_backend();
        backend->inject_failure_for_key("a", {KeyFailure::rate_limit, 429, "quota"});
        auto pool = std::make_shared<KeyPool>(std::vector<std::string>{"a", "b"});
        std::vector<double> sleeps;
        search::SearchGateway gw(backend, pool, {}, testkit::recording_sleeper(sleeps));
        auto resp = gw.search("q", Date(2026, 3, 10));
        CHECK(resp.items.size() == 2);
        CHECK(sleeps.empty());
        CHECK(pool->snapshot()[0].status == "cooldown");
    }

    SECTION("5xx retries the same key after 2s, consuming one retry") {
        auto backend = corpus_backend();
        backend->inject_failure_at(1, {KeyFailure::other, 500, "flaky"});
        auto pool = std::make_shared<KeyPool>(std::vector<std::string>{"a", "b"});
        std::vector<double> sleeps;
        search::SearchGateway gw(backend, pool, {}, testkit::recording_sleeper(sleeps));
        auto resp = gw.search("q", Date(2026, 3, 10));
        CHECK(resp.items.size() == 2);
        CHECK(sleeps == std::vector<double>{2});
        CHECK(pool->snapshot()[0].usage_count == 1);  // same key, one acquisition
        CHECK(pool->snapshot()[1].usage_count == 0);
    }

    SECTION("persistent failures exhaust the 3-retry budget with [2,5,15]") {
        auto backend = corpus_backend();
        for (int i = 1; i <= 4; ++i)
            backend->inject_failure_at(i, {KeyFailure::other, 500, "down"});
        auto pool = std::make_shared<KeyPool>(std::vector<std::string>{"a"});
        std::vector<double> sleeps;
        search::SearchGateway gw(backend, pool, {}, testkit::recording_sleeper(sleeps));
        CHECK_THROWS_AS(gw.search("q", Date(2026, 3, 10)), search::SearchCallError);
        CHECK(sleeps == std::vector<double>{2, 5, 15});
    }

    SECTION("pool exhaustion is a tool error") {
        auto backend = corpus_backend();
        backend->inject_failure_for_key("a", {KeyFailure::auth, 401, "bad"});
        auto pool = std::make_shared<KeyPool>(std::vector<std::string>{"a"});
        search::SearchGateway gw(backend, pool, {}, testkit::no_sleep());
        CHECK_THROWS_AS(gw.search("q", Date(2026, 3, 10)), search::PoolExhaustedError);
    }
}

TEST_CASE("pool instances are shared per distinct key tuple") {
    auto p1 = KeyPool::shared_for({"shared-x", "shared-y"});
    auto p2 = KeyPool::shared_for({"shared-x", "shared-y"});
    auto p3 = KeyPool::shared_for({"shared-x"});
    CHECK(p1.get() == p2.get());
    CHECK(p1.get() != p3.get());
    p1->acquire();
    CHECK(p2->snapshot()[0].usage_count == 1);  // usage accumulates across cells
}
