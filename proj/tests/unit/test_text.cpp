#include "doctest.h"
#include "qac/text.hpp"

using namespace qac;

TEST_CASE("normalize lowercases and collapses whitespace")
{
    CHECK(text::normalize("  Machine\t LEARNING \n") == "machine learning");
    CHECK(text::normalize("") == "");
    CHECK(text::normalize_prefix("Machine  ") == "machine ");
    CHECK(text::normalize_prefix("  machine") == "machine");
}

TEST_CASE("code point helpers")
{
    const std::string s = "a\xC3\xA9z";  // a é z
    CHECK(text::codepoint_count(s) == 3);
    const auto offs = text::codepoint_offsets(s);
    REQUIRE(offs.size() == 4);
    CHECK(offs[2] == 3);
    CHECK(text::split_codepoints(s)[1] == "\xC3\xA9");
}

TEST_CASE("words and sentences")
{
    CHECK(text::words("Hello, World! x-ray") == std::vector<std::string>{"hello", "world", "x", "ray"});
    const auto s = text::split_sentences("One two. Three? Four!  Five");
    REQUIRE(s.size() == 4);
    CHECK(s[0] == "One two.");
    CHECK(s[3] == "Five");
    CHECK(text::split_sentences("v1.2 is out. ok").size() == 2);
}

TEST_CASE("stopword list has 127 distinct entries")
{
    const auto& sw = text::stopwords();
    CHECK(sw.size() == 127);
    std::vector<std::string> sorted(sw.begin(), sw.end());
    std::sort(sorted.begin(), sorted.end());
    CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
    CHECK(text::is_stopword("the"));
    CHECK_FALSE(text::is_stopword("trie"));
}

TEST_CASE("field escaping round trips")
{
    const std::string raw = "a\tb\\c\nd\re";
    const auto esc = text::escape_field(raw);
    CHECK(esc.find('\t') == std::string::npos);
    CHECK(esc.find('\n') == std::string::npos);
    CHECK(text::unescape_field(esc) == raw);
}
