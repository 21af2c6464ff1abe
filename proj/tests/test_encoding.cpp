#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "kinn/backends.hpp"
#include "kinn/encoding.hpp"
#include "kinn/lexicon.hpp"
#include "test_util.hpp"

using namespace kinn;

TEST_SUITE("encoding") {

TEST_CASE("embed_phrase: deterministic unit vectors, empty rejected") {
    HashEncoder enc(32);
    Eigen::VectorXd a = enc.embed_phrase("hopeless night");
    Eigen::VectorXd b = enc.embed_phrase("hopeless night");
    CHECK((a - b).norm() == 0.0);
    CHECK(cosine(a, a) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(a.norm() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK_THROWS_AS(embed_phrase(enc, ""), InputError);
}

TEST_CASE("stub embeddings are finite and cosine is symmetric (fuzz)") {
    HashEncoder enc(24);
    Rng rng(77);
    const std::string alphabet = "abcdefghij klmnop!?.";
    std::vector<std::string> phrases;
    for (int i = 0; i < 40; ++i) {
        std::string s;
        std::size_t len = 1 + rng.index(12);
        for (std::size_t j = 0; j < len; ++j) s += alphabet[rng.index(alphabet.size())];
        phrases.push_back(s);
    }
    for (const auto& p : phrases) {
        Eigen::VectorXd v = enc.embed_phrase(p);
        REQUIRE(v.size() == 24);
        CHECK(v.allFinite());
    }
    for (int i = 0; i < 20; ++i) {
        const auto& p = phrases[rng.index(phrases.size())];
        const auto& q = phrases[rng.index(phrases.size())];
        CHECK(cosine(enc.embed_phrase(p), enc.embed_phrase(q)) ==
              doctest::Approx(cosine(enc.embed_phrase(q), enc.embed_phrase(p)))
                  .epsilon(1e-12));
    }
}

TEST_CASE("embed_sequence respects max_len with head truncation") {
    HashEncoder enc(16);
    auto seq3 = embed_sequence(enc, "one two three", 10);
    CHECK(seq3.X.rows() == 3);
    CHECK(seq3.X.cols() == 16);
    CHECK(seq3.tokens.size() == 3);

    std::string sixty;
    for (int i = 0; i < 60; ++i) sixty += "w" + std::to_string(i) + " ";
    auto seq50 = embed_sequence(enc, sixty, 50);
    CHECK(seq50.X.rows() == 50);
    CHECK(seq50.tokens.size() == 50);
    CHECK(seq50.tokens.front().text == "w0");  // head kept

    CHECK_THROWS_AS(embed_sequence(enc, "a b", 0), InputError);
}

TEST_CASE("stub is context-free: reordering permutes the same vectors") {
    HashEncoder enc(16);
    auto ab = embed_sequence(enc, "a b", 10);
    auto ba = embed_sequence(enc, "b a", 10);
    REQUIRE(ab.X.rows() == 2);
    REQUIRE(ba.X.rows() == 2);
    CHECK((ab.X.row(0) - ba.X.row(1)).norm() == 0.0);
    CHECK((ab.X.row(1) - ba.X.row(0)).norm() == 0.0);
}

TEST_CASE("extract_aspects via stub: five non-empty deterministic fields") {
    StubCommonsense cs;
    AspectSet a = extract_aspects(cs, "i feel hopeless and cry every night");
    AspectSet b = extract_aspects(cs, "i feel hopeless and cry every night");
    CHECK(a == b);
    CHECK(a.intent_w == "intent: i feel hopeless and cry");
    CHECK(a.effect_w == "effect: i feel hopeless and cry");
    CHECK(a.reaction_w == "reaction: i feel hopeless and cry");
    CHECK(a.effect_l == "others effect: i feel hopeless and cry");
    CHECK(a.reaction_l == "others reaction: i feel hopeless and cry");
    CHECK_THROWS_AS(extract_aspects(cs, ""), InputError);
}

TEST_CASE("extract_aspects via fixture keeps the five selected relations") {
    FixtureCommonsense cs(kinn_test::data_file("commonsense_fixture.jsonl"));
    AspectSet a = extract_aspects(cs, "i feel hopeless and cry every night");
    CHECK(a.intent_w == "to express sadness");
    CHECK(a.effect_w == "loses sleep");
    CHECK(a.reaction_w == "drained");
    CHECK(a.effect_l == "others grow worried");
    CHECK(a.reaction_l == "concerned");
}

TEST_CASE("unknown text yields the 'none' sentinel in every field") {
    FixtureCommonsense cs(kinn_test::data_file("commonsense_fixture.jsonl"));
    AspectSet a = extract_aspects(cs, "totally different post");
    CHECK(a.intent_w == "none");
    CHECK(a.effect_w == "none");
    CHECK(a.reaction_w == "none");
    CHECK(a.effect_l == "none");
    CHECK(a.reaction_l == "none");
}

TEST_CASE("concat_with_aspects: fixed order, six segments, round-trip") {
    AspectSet a;
    a.intent_w = "IW";
    a.effect_w = "EW";
    a.reaction_w = "RW";
    a.effect_l = "EL";
    a.reaction_l = "RL";
    const std::string out = concat_with_aspects("the post", a);
    CHECK(out == "the post [SEP] IW [SEP] EW [SEP] RW [SEP] EL [SEP] RL");
    CHECK(out.find("IW") < out.find("RL"));

    auto segments = split_aspect_concat(out);
    REQUIRE(segments.size() == 6);
    CHECK(segments[0] == "the post");
    CHECK(segments[1] == "IW");
    CHECK(segments[5] == "RL");
}

TEST_CASE("default aspects produce five 'none' segments") {
    AspectSet a;  // all fields default to "none"
    const std::string out = concat_with_aspects("text", a);
    auto segments = split_aspect_concat(out);
    REQUIRE(segments.size() == 6);
    for (std::size_t i = 1; i < 6; ++i) CHECK(segments[i] == "none");
}

TEST_CASE("separator occurrences in inputs are escaped (injectivity)") {
    AspectSet a;
    a.intent_w = "x [SEP] y";
    const std::string post = "evil [SEP] post % with 100% [SEP]";
    const std::string out = concat_with_aspects(post, a);
    auto segments = split_aspect_concat(out);
    REQUIRE(segments.size() == 6);
    CHECK(segments[0] == post);
    CHECK(segments[1] == "x [SEP] y");

    // Two different inputs never produce the same concatenation.
    AspectSet b;
    b.intent_w = "x ";
    b.effect_w = "y";  // naive join would collide with a's intent span
    CHECK(concat_with_aspects(post, a) != concat_with_aspects(post, b));
}

TEST_CASE("escape/unescape segment round-trips") {
    for (const char* s : {"", "plain", "[SEP]", "%", "%25", "%5BSEP%5D", "a [SEP] b % c",
                          "%%[SEP][SEP]%%"}) {
        CHECK(unescape_segment(escape_segment(s)) == s);
        CHECK(escape_segment(s).find("[SEP]") == std::string::npos);
    }
}

TEST_CASE("escaped_to_raw_offsets maps positions through escaping") {
    const std::string raw = "a%b [SEP] c";
    const std::string esc = escape_segment(raw);
    auto map = escaped_to_raw_offsets(raw);
    REQUIRE(map.size() == esc.size() + 1);
    for (std::size_t i = 0; i < esc.size(); ++i) {
        CHECK(map[i] <= raw.size());
    }
    CHECK(map[0] == 0);
    CHECK(map[esc.size()] == raw.size());
    // The 'a' at escaped position 0 and the char after the escaped '%'
    // land at the right raw offsets.
    CHECK(raw[map[0]] == 'a');
    const std::size_t b_escaped = esc.find('b');
    CHECK(raw[map[b_escaped]] == 'b');
}

}  // TEST_SUITE
