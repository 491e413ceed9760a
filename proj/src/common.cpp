#include "gazemine/common.hpp"

#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>

namespace gazemine {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::schema: return "schema";
    case ErrorKind::empty_input: return "empty_input";
    case ErrorKind::empty_result: return "empty_result";
    case ErrorKind::configuration: return "configuration";
    case ErrorKind::oversize: return "oversize";
    case ErrorKind::transport: return "transport";
    case ErrorKind::content: return "content";
    case ErrorKind::aggregate: return "aggregate";
    case ErrorKind::domain: return "domain";
    case ErrorKind::validation: return "validation";
    case ErrorKind::degenerate: return "degenerate";
    case ErrorKind::shape: return "shape";
    case ErrorKind::training: return "training";
    case ErrorKind::load: return "load";
    case ErrorKind::precondition: return "precondition";
    case ErrorKind::not_found: return "not_found";
  }
  return "unknown";
}

LoadError::LoadError(std::string file, std::size_t line, std::size_t byte_offset,
                     const std::string& reason)
    : Error(ErrorKind::load, file + ":" + std::to_string(line) + " (byte " +
                                 std::to_string(byte_offset) + "): " + reason),
      file_(std::move(file)),
      line_(line),
      byte_offset_(byte_offset) {}

std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kDigits[value & 0xF];
    value >>= 4;
  }
  return out;
}

std::string digest_hex(std::string_view data) { return hex64(fnv1a64(data)); }

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t mix_seed(std::uint64_t a, std::string_view b) {
  return mix_seed(a, fnv1a64(b));
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string collapse_whitespace(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

bool iequals(std::string_view a, std::string_view b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(a[i])) !=
        std::tolower(static_cast<unsigned char>(b[i])))
      return false;
  }
  return true;
}

std::string format_number(double value) {
  if (!std::isfinite(value)) return "null";
  if (value == 0.0) return "0";
  if (std::trunc(value) == value && std::fabs(value) < 1e15) {
    std::array<char, 32> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(),
                                   static_cast<long long>(value));
    return std::string(buf.data(), ptr);
  }
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  return std::string(buf.data(), ptr);
}

std::optional<double> parse_number(std::string_view text) {
  std::string t = trim(text);
  if (t.empty()) return std::nullopt;
  const char* first = t.data();
  const char* last = t.data() + t.size();
  if (*first == '+') ++first;
  double value = 0;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || !std::isfinite(value)) return std::nullopt;
  return value;
}

}  // namespace gazemine
