#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "hindcast/parser/answer.hpp"
#include "hindcast/parser/belief.hpp"

using namespace hindcast;
using parser::ParseFailure;
using parser::parse_answer;
using parser::QuestionShape;

namespace {

QuestionShape yes_no_shape() {
    return {dataset::QuestionType::yes_no, dataset::ChoiceType::single, {"yes", "no"}};
}
QuestionShape binary_shape() {
    return {dataset::QuestionType::binary_named, dataset::ChoiceType::single,
            {"Paris", "London"}};
}
QuestionShape mc_shape(size_t k, dataset::ChoiceType ct = dataset::ChoiceType::single) {
    std::vector<std::string> options;
    for (size_t i = 0; i < k; ++i) options.push_back("option " + std::to_string(i));
    return {dataset::QuestionType::multiple_choice, ct, options};
}

std::set<char> letters(std::initializer_list<char> cs) { return std::set<char>(cs); }

}  // namespace

TEST_CASE("boxed payload extraction takes the last well-formed occurrence") {
    CHECK(parser::extract_last_boxed("foo \\boxed{A} bar") == "A");
    CHECK(parser::extract_last_boxed("\\boxed{B}\ntext\n\\boxed{C}") == "C");
    CHECK_FALSE(parser::extract_last_boxed("no box here"));
    CHECK_FALSE(parser::extract_last_boxed("\\boxed{unterminated"));
    CHECK_FALSE(parser::extract_last_boxed("\\boxed{a{nested}b}"));
    CHECK(parser::extract_last_boxed("\\boxed{}") == "");
}

TEST_CASE("dispatch conformance cases") {
    // yes/no family
    CHECK(parse_answer("conclusion: \\boxed{yes}", yes_no_shape()).value == letters({'A'}));
    CHECK(parse_answer("\\boxed{No}", yes_no_shape()).value == letters({'B'}));
    auto maybe = parse_answer("\\boxed{maybe}", yes_no_shape());
    CHECK_FALSE(maybe.ok());
    CHECK(maybe.failure == ParseFailure::unknown_token);

    // binary named: case-insensitive stripped label equality
    CHECK(parse_answer("\\boxed{Paris}", binary_shape()).value == letters({'A'}));
    CHECK(parse_answer("\\boxed{ london }", binary_shape()).value == letters({'B'}));
    CHECK_FALSE(parse_answer("\\boxed{Berlin}", binary_shape()).ok());

    // multiple choice
    CHECK(parse_answer("\\boxed{A}", mc_shape(4)).value == letters({'A'}));
    CHECK(parse_answer("\\boxed{A, C}", mc_shape(4, dataset::ChoiceType::multi)).value ==
          letters({'A', 'C'}));
    auto out_of_range = parse_answer("\\boxed{A, E}", mc_shape(4, dataset::ChoiceType::multi));
    CHECK_FALSE(out_of_range.ok());
    CHECK(out_of_range.failure == ParseFailure::out_of_range);
    auto multi_char = parse_answer("\\boxed{AB}", mc_shape(4));
    CHECK_FALSE(multi_char.ok());
    CHECK(multi_char.failure == ParseFailure::unknown_token);

    // empty payload and last-box rule
    auto empty = parse_answer("\\boxed{}", mc_shape(4));
    CHECK_FALSE(empty.ok());
    CHECK(empty.failure == ParseFailure::empty_payload);
    CHECK(parse_answer("\\boxed{B}\n...\n\\boxed{C}", mc_shape(4)).value == letters({'C'}));
}

TEST_CASE("normalization collapses surface variation to the same letter set") {
    auto shape = mc_shape(4, dataset::ChoiceType::multi);
    auto a = parse_answer("\\boxed{A,B}", shape);
    auto b = parse_answer("\\boxed{B A}", shape);
    auto c = parse_answer("\\boxed{a, b}", shape);
    auto dup = parse_answer("\\boxed{A A B}", shape);
    REQUIRE(a.ok());
    CHECK(a.value == b.value);
    CHECK(a.value == c.value);
    CHECK(a.value == dup.value);
}

TEST_CASE("parser is total over random byte strings") {
    std::mt19937_64 rng(20260311);
    std::uniform_int_distribution<int> byte(0, 255);
    std::uniform_int_distribution<int> length(0, 300);
    std::vector<QuestionShape> shapes = {yes_no_shape(), binary_shape(), mc_shape(4),
                                         mc_shape(6, dataset::ChoiceType::multi)};
    for (int i = 0; i < 10000; ++i) {
        std::string s;
        int n = length(rng);
        for (int j = 0; j < n; ++j) s.push_back(static_cast<char>(byte(rng)));
        if (i % 3 == 0) s += "\\boxed{";  // bias toward marker fragments
        if (i % 5 == 0) s += "\\boxed{" + s.substr(0, 5) + "}";
        for (auto& shape : shapes) {
            auto parsed = parse_answer(s, shape);  // must never throw
            if (parsed.ok())
                for (char c : *parsed.value)
                    CHECK(static_cast<size_t>(c - 'A') < shape.options.size());
        }
    }
    SUCCEED("no exceptions over 10000 fuzzed inputs");
}

TEST_CASE("belief parsing validates both regimes and clips") {
    QuestionShape single = mc_shape(2);
    auto ok = parser::parse_belief("<belief>\nA: 0.5\nB: 0.5\n</belief>\n\\boxed{A}", single);
    REQUIRE(ok);
    CHECK(ok->probabilities[0] == Catch::Approx(0.5));

    // Simplex violation: sums to 1.4.
    CHECK_FALSE(parser::parse_belief("<belief>\nA: 0.7\nB: 0.7\n</belief>", single));

    // Multi regime allows independent entries.
    QuestionShape multi = mc_shape(2, dataset::ChoiceType::multi);
    auto indep = parser::parse_belief("<belief>\nA: 0.7\nB: 0.7\n</belief>", multi);
    REQUIRE(indep);

    // Clipping at epsilon.
    auto clipped = parser::parse_belief("<belief>\nA: 0.0\nB: 1.0\n</belief>", multi);
    REQUIRE(clipped);
    CHECK(clipped->probabilities[0] == Catch::Approx(0.001));
    CHECK(clipped->probabilities[1] == Catch::Approx(0.999));

    // Wrong arity and absent block fail without throwing.
    CHECK_FALSE(parser::parse_belief("<belief>\nA: 1.0\n</belief>", single));
    CHECK_FALSE(parser::parse_belief("no block at all", single));

    // The trace keeps every block in order; the last one scores.
    auto blocks = parser::extract_belief_blocks(
        "<belief>\nA: 0.9\nB: 0.1\n</belief> ... <belief>\nA: 0.2\nB: 0.8\n</belief>");
    CHECK(blocks.size() == 2);
    auto last = parser::parse_belief(
        "<belief>\nA: 0.9\nB: 0.1\n</belief> ... <belief>\nA: 0.2\nB: 0.8\n</belief>", single);
    REQUIRE(last);
    CHECK(last->probabilities[0] == Catch::Approx(0.2));
}
