#include "procgraph/common.hpp"

#include <doctest.h>

using namespace procgraph;

TEST_SUITE("common") {

TEST_CASE("utc timestamps parse in both separators and keep microseconds") {
  const auto a = parse_utc_time("2022-03-04 05:06:07.123456");
  const auto b = parse_utc_time("2022-03-04T05:06:07.123456Z");
  REQUIRE(a);
  REQUIRE(b);
  CHECK(*a == *b);
  CHECK(format_utc_time(*a) == "2022-03-04 05:06:07.123456");
}

TEST_CASE("epoch and offsets") {
  CHECK(parse_utc_time("1970-01-01 00:00:00")->micros == 0);
  const auto shifted = parse_utc_time("2022-01-01T02:00:00+02:00");
  REQUIRE(shifted);
  CHECK(*shifted == *parse_utc_time("2022-01-01 00:00:00"));
  CHECK(parse_utc_time("2022-01-01 00:00:00.5")->micros % 1'000'000 == 500'000);
}

TEST_CASE("bad timestamps are rejected") {
  CHECK_FALSE(parse_utc_time(""));
  CHECK_FALSE(parse_utc_time("yesterday"));
  CHECK_FALSE(parse_utc_time("2022-13-01 00:00:00"));
  CHECK_FALSE(parse_utc_time("2022-02-30 00:00:00"));
  CHECK_FALSE(parse_utc_time("2022-01-01 25:00:00"));
}

TEST_CASE("seconds between instants") {
  const auto a = *parse_utc_time("2022-01-01 00:00:00");
  const auto b = *parse_utc_time("2022-01-01 00:01:30.5");
  CHECK(b.seconds_since(a) == doctest::Approx(90.5));
}

}
