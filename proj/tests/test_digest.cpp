#include <doctest.h>

#include "helpers.hpp"
#include "tensorhub/digest.hpp"
#include "tensorhub/errors.hpp"

using namespace tensorhub;

TEST_SUITE("digest") {

// Reference vectors computed with an independent xxh3-128 implementation.
TEST_CASE("reference vectors") {
    CHECK(tensor_digest({}).hex() == "99aa06d3014798d86001c324468d497f");

    const char* hello = "hello";
    CHECK(tensor_digest({reinterpret_cast<const std::uint8_t*>(hello), 5}).hex() ==
          "b5e9c1ad071b3e7fc779cfaa5e523818");

    std::vector<std::uint8_t> long_input;
    for (int rep = 0; rep < 7; ++rep)
        for (int i = 0; i < 256; ++i) long_input.push_back(static_cast<std::uint8_t>(i));
    CHECK(tensor_digest(long_input).hex() == "de83fe809e06a978405a3ca3de24204f");
}

TEST_CASE("hex round trip and ordering") {
    const auto d = Digest128::from_hex("00112233445566778899aabbccddeeff");
    CHECK(d.hex() == "00112233445566778899aabbccddeeff");
    CHECK(d.bytes[0] == 0x00);
    CHECK(d.bytes[15] == 0xff);  // canonical big-endian layout

    CHECK(Digest128::from_hex("00000000000000000000000000000001") <
          Digest128::from_hex("01000000000000000000000000000000"));
    CHECK(Digest128{}.is_zero());
    CHECK_FALSE(d.is_zero());

    CHECK_THROWS_AS(Digest128::from_hex("tooshort"), Error);
    CHECK_THROWS_AS(Digest128::from_hex("zz112233445566778899aabbccddeeff"), Error);
}

TEST_CASE("content only: same bytes same id") {
    const auto a = th_test::random_bytes(1000, 1);
    auto b = a;
    CHECK(tensor_digest(a) == tensor_digest(b));
    b[999] ^= 1;
    CHECK(tensor_digest(a) != tensor_digest(b));
}

}  // TEST_SUITE
