#include <catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "gazemine/common.hpp"
#include "gazemine/json_io.hpp"
#include "gazemine/rng.hpp"
#include "support.hpp"

using namespace gazemine;
using gazemine::testing::TempDir;

TEST_CASE("fnv1a64 matches published vectors", "[common]") {
  CHECK(hex64(fnv1a64("")) == "cbf29ce484222325");
  CHECK(hex64(fnv1a64("a")) == "af63dc4c8601ec8c");
  CHECK(hex64(fnv1a64("foobar")) == "85944171f73967e8");
  CHECK(digest_hex("foobar") == "85944171f73967e8");
}

TEST_CASE("mix_seed spreads nearby inputs", "[common]") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t a = 0; a < 20; ++a)
    for (std::uint64_t b = 0; b < 20; ++b) seen.insert(mix_seed(a, b));
  CHECK(seen.size() == 400);
  CHECK(mix_seed(7, "x") == mix_seed(7, fnv1a64("x")));
}

TEST_CASE("format_number is shortest round-trip", "[common]") {
  CHECK(format_number(0.0) == "0");
  CHECK(format_number(-0.0) == "0");
  CHECK(format_number(42.0) == "42");
  CHECK(format_number(-3.0) == "-3");
  CHECK(format_number(0.1) == "0.1");
  CHECK(format_number(1.0 / 3.0) == "0.3333333333333333");
  CHECK(format_number(std::nan("")) == "null");

  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> d(-1e6, 1e6);
  for (int i = 0; i < 2000; ++i) {
    const double v = d(gen);
    const auto back = parse_number(format_number(v));
    REQUIRE(back);
    CHECK(*back == v);
  }
}

TEST_CASE("parse_number rejects junk", "[common]") {
  CHECK(parse_number(" 12.5 ") == 12.5);
  CHECK(parse_number("+3") == 3.0);
  CHECK_FALSE(parse_number(""));
  CHECK_FALSE(parse_number("12abc"));
  CHECK_FALSE(parse_number("inf"));
  CHECK_FALSE(parse_number("nan"));
}

TEST_CASE("string helpers", "[common]") {
  CHECK(trim("  a b \n") == "a b");
  CHECK(collapse_whitespace("  a \t b\n\nc ") == "a b c");
  CHECK(to_lower("AbC") == "abc");
  CHECK(iequals("Easy", "eASY"));
  CHECK_FALSE(iequals("easy", "eas"));
}

TEST_CASE("LoadError carries its location", "[common]") {
  const LoadError e("x.jsonl", 3, 17, "bad");
  CHECK(e.kind() == ErrorKind::load);
  CHECK(e.file() == "x.jsonl");
  CHECK(e.line() == 3);
  CHECK(e.byte_offset() == 17);
  CHECK(std::string(e.what()).find("x.jsonl:3") != std::string::npos);
}

TEST_CASE("canonical_dump sorts keys and is stable", "[json]") {
  const json a = json::parse(R"({"b":1,"a":{"z":[1,2.5,"x"],"c":null},"m":true})");
  CHECK(canonical_dump(a) == R"({"a":{"c":null,"z":[1,2.5,"x"]},"b":1,"m":true})");
  CHECK(canonical_dump(json::parse(canonical_dump(a))) == canonical_dump(a));
  CHECK(canonical_dump(json(0.1)) == "0.1");
  CHECK(canonical_dump(json("tab\tquote\"")) == R"("tab\tquote\"")");
}

TEST_CASE("jsonl round-trip and located parse errors", "[json]") {
  TempDir dir("json");
  const std::vector<json> records = {{{"a", 1}}, {{"b", "two"}}, json::array({1, 2})};
  write_jsonl(dir / "r.jsonl", records);
  CHECK(read_jsonl(dir / "r.jsonl") == records);

  // Line 3 is truncated; it starts after two 8-byte lines.
  write_text_file(dir / "bad.jsonl", "{\"a\":1}\n{\"b\":2}\n{\"c\":\n");
  try {
    read_jsonl(dir / "bad.jsonl");
    FAIL("expected LoadError");
  } catch (const LoadError& e) {
    CHECK(e.line() == 3);
    CHECK(e.byte_offset() >= 16);
    CHECK(e.file().find("bad.jsonl") != std::string::npos);
  }
}

TEST_CASE("blank jsonl lines are skipped", "[json]") {
  const auto r = parse_jsonl("\n{\"a\":1}\n\n   \n[2]\n", "mem");
  REQUIRE(r.size() == 2);
  CHECK(r[1] == json::array({2}));
}

TEST_CASE("write_text_file creates parents and replaces atomically", "[json]") {
  TempDir dir("io");
  write_text_file(dir / "a/b/c.txt", "one");
  write_text_file(dir / "a/b/c.txt", "two");
  CHECK(read_text_file(dir / "a/b/c.txt") == "two");
  append_text_file(dir / "a/b/c.txt", "+");
  CHECK(read_text_file(dir / "a/b/c.txt") == "two+");
  CHECK_THROWS_AS(read_text_file(dir / "missing.txt"), Error);
}

TEST_CASE("read_json_file reports corrupt documents", "[json]") {
  TempDir dir("doc");
  write_text_file(dir / "x.json", "{\"a\": [1, 2,, 3]}");
  CHECK_THROWS_AS(read_json_file(dir / "x.json"), LoadError);
}

TEST_CASE("Rng is reproducible per seed", "[rng]") {
  Rng a(5), b(5), c(6);
  std::vector<std::uint64_t> xa, xb, xc;
  for (int i = 0; i < 10; ++i) {
    xa.push_back(a.next());
    xb.push_back(b.next());
    xc.push_back(c.next());
  }
  CHECK(xa == xb);
  CHECK(xa != xc);
}

TEST_CASE("Rng helpers stay in range", "[rng]") {
  Rng r(9);
  for (int i = 0; i < 5000; ++i) {
    const double u = r.uniform();
    CHECK((u >= 0.0 && u < 1.0));
    const auto k = r.between(-3, 4);
    CHECK((k >= -3 && k <= 4));
  }
}

TEST_CASE("sample_indices draws distinct sorted indices", "[rng]") {
  Rng r(3);
  for (std::size_t n = 0; n < 40; ++n) {
    for (std::size_t k = 0; k <= n + 2; ++k) {
      const auto s = r.sample_indices(n, k);
      CHECK(s.size() == std::min(n, k));
      CHECK(std::is_sorted(s.begin(), s.end()));
      CHECK(std::set<std::size_t>(s.begin(), s.end()).size() == s.size());
      for (auto i : s) CHECK(i < n);
    }
  }
}

TEST_CASE("normal draws have roughly unit moments", "[rng]") {
  Rng r(21);
  double s = 0.0, s2 = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    s += x;
    s2 += x * x;
  }
  CHECK(std::abs(s / n) < 0.01);
  CHECK(std::abs(s2 / n - 1.0) < 0.02);
}
