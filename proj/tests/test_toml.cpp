#include "partmap/toml.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace partmap;

TEST_CASE("toml parses sections, scalars and arrays") {
  auto t = toml::parse_string(R"(
# comment
top = 3
[net]
width = 64        # trailing comment
rate = 1e-3
name = "toy"
flag = true
weights = [1.0, 0.5, 0.25]
)");
  CHECK(t.at("top").as_int() == 3);
  CHECK(t.at("net.width").as_int() == 64);
  CHECK(t.at("net.rate").as_double() == Catch::Approx(1e-3));
  CHECK(t.at("net.name").as_string() == "toy");
  CHECK(t.at("net.flag").as_bool());
  CHECK(t.at("net.weights").as_array() == std::vector<double>{1.0, 0.5, 0.25});
}

TEST_CASE("toml round trips through the writer") {
  toml::Table t;
  t.set_int("seed", 42);
  t.set_double("train.rate", 0.001);
  t.set_string("train.mask", "resolvent");
  t.set_bool("train.augment", false);
  auto back = toml::parse_string(toml::to_string(t));
  CHECK(back.at("seed").as_int() == 42);
  CHECK(back.at("train.rate").as_double() == Catch::Approx(0.001));
  CHECK(back.at("train.mask").as_string() == "resolvent");
  CHECK_FALSE(back.at("train.augment").as_bool());
}

TEST_CASE("toml rejects malformed input and unknown keys") {
  CHECK_THROWS_AS(toml::parse_string("key 3"), IoError);
  CHECK_THROWS_AS(toml::parse_string("a = 1\na = 2"), IoError);
  CHECK_THROWS_AS(toml::parse_string("a = \"unterminated"), IoError);
  auto t = toml::parse_string("known = 1\ntypo = 2");
  CHECK_THROWS_AS(t.require_known_keys({"known"}), IoError);
}
