#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "gidx/text.hpp"

using namespace gidx;

TEST_CASE("tokenize splits on whitespace and keeps offsets") {
    auto toks = text::tokenize("  hello\tworld \n foo");
    REQUIRE(toks.size() == 3);
    CHECK(toks[0].word == "hello");
    CHECK(toks[0].offset == 2);
    CHECK(toks[1].word == "world");
    CHECK(toks[2].word == "foo");
    CHECK(toks[2].offset == 16);
}

TEST_CASE("tokenize handles unicode spaces and empty input") {
    // U+00A0 no-break space between a and b
    auto toks = text::tokenize("a\xC2\xA0m");
    REQUIRE(toks.size() == 2);
    CHECK(toks[0].word == "a");
    CHECK(toks[1].word == "m");
    CHECK(text::tokenize("").empty());
    CHECK(text::tokenize("   ").empty());
}

TEST_CASE("normalize lowercases, strips punctuation, collapses spaces") {
    CHECK(text::normalize("Hello,   World!") == "hello world");
    CHECK(text::normalize("U.S.") == "us");
    CHECK(text::normalize("  a  b ") == "a b");
    CHECK(text::normalize("...") == "");
}

TEST_CASE("contains_normalized") {
    CHECK(text::contains_normalized("The U.S. president", "us president"));
    CHECK_FALSE(text::contains_normalized("some text", "missing"));
    CHECK_FALSE(text::contains_normalized("anything", ""));
    CHECK_FALSE(text::contains_normalized("anything", "..."));
}

TEST_CASE("split_sentences on terminal punctuation") {
    auto s = text::split_sentences("One. Two three! Four? Five");
    REQUIRE(s.size() == 4);
    CHECK(s[0] == "One.");
    CHECK(s[1] == "Two three!");
    CHECK(s[2] == "Four?");
    CHECK(s[3] == "Five");
}

TEST_CASE("split_sentences does not break on interior dots") {
    auto s = text::split_sentences("Mr. Smith earned 3.5 points. Done.");
    // "Mr." is followed by whitespace so it does split; "3.5" must not.
    REQUIRE(s.size() == 3);
    CHECK(s[1] == "Smith earned 3.5 points.");
}

TEST_CASE("split_sentences single sentence") {
    auto s = text::split_sentences("just one sentence");
    REQUIRE(s.size() == 1);
    CHECK(s[0] == "just one sentence");
}

TEST_CASE("hash64 is stable and seed-sensitive") {
    const auto h1 = text::hash64("phrase", 1);
    CHECK(h1 == text::hash64("phrase", 1));
    CHECK(h1 != text::hash64("phrase", 2));
    CHECK(h1 != text::hash64("phrases", 1));
}
