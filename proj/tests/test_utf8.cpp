#include "doctest.h"
#include "glitch/utf8.hpp"

using namespace glitch;

TEST_SUITE("utf8") {

TEST_CASE("sequence lengths follow the strict UTF-8 table") {
    CHECK(utf8::valid_sequence_length("A", 0) == 1);
    CHECK(utf8::valid_sequence_length("\xC3\xA9", 0) == 2);
    CHECK(utf8::valid_sequence_length("\xE2\x82\xAC", 0) == 3);
    CHECK(utf8::valid_sequence_length("\xF0\x9F\x98\x80", 0) == 4);

    CHECK(utf8::valid_sequence_length("\xC0\x80", 0) == 0);          // overlong NUL
    CHECK(utf8::valid_sequence_length("\xE0\x80\x80", 0) == 0);      // overlong
    CHECK(utf8::valid_sequence_length("\xED\xA0\x80", 0) == 0);      // surrogate
    CHECK(utf8::valid_sequence_length("\xF4\x90\x80\x80", 0) == 0);  // above U+10FFFF
    CHECK(utf8::valid_sequence_length("\xE2\x82", 0) == 0);          // truncated
    CHECK(utf8::valid_sequence_length("\x80", 0) == 0);
    CHECK(utf8::valid_sequence_length("\xF5\x80\x80\x80", 0) == 0);
}

TEST_CASE("every scalar value round-trips through encode and decode") {
    for (char32_t cp = 0; cp <= 0x10FFFF; ++cp) {
        if (cp >= 0xD800 && cp <= 0xDFFF) continue;
        const std::string s = utf8::encode(cp);
        REQUIRE(utf8::is_valid(s));
        REQUIRE(utf8::decode_at(s, 0) == cp);
    }
}

TEST_CASE("split_chars keeps invalid bytes as single pieces") {
    const auto pieces = utf8::split_chars("a\xE2\x82\xAC\xFF" "b");
    REQUIRE(pieces.size() == 4);
    CHECK(pieces[1] == "\xE2\x82\xAC");
    CHECK(pieces[2] == "\xFF");
}

TEST_CASE("display marks a leading space and escapes undecodable bytes") {
    CHECK(utf8::display(" SolidGoldMagikarp") == "_SolidGoldMagikarp");
    CHECK(utf8::display("a b") == "a b");
    CHECK(utf8::display("\xF5") == "\\xF5");
    CHECK(utf8::display("\xE2\x82") == "\\xE2\\x82");
    CHECK(utf8::display("\t\r") == "\\x09\\x0D");
    CHECK(utf8::display("\xE2\x82\xAC") == "\xE2\x82\xAC");
}

TEST_CASE("hex round trip") {
    const std::string bytes("\x00\xFF\x10 a", 5);
    CHECK(utf8::to_hex(bytes) == "00ff102061");
    CHECK(utf8::from_hex(utf8::to_hex(bytes)) == bytes);
    CHECK_FALSE(utf8::from_hex("abc").has_value());
    CHECK_FALSE(utf8::from_hex("zz").has_value());
}

}
