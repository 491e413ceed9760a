#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace gazemine {

enum class ErrorKind {
  schema,         // header/column mismatch
  empty_input,    // nothing to parse
  empty_result,   // every row was filtered away
  configuration,  // missing AOIs, missing auth, bad settings
  oversize,       // payload larger than the chunk budget
  transport,      // network/provider failure after retries
  content,        // provider rejected the request or returned garbage
  aggregate,      // every repetition failed
  domain,         // argument outside its mathematical domain
  validation,     // malformed record or inconsistent inputs
  degenerate,     // kappa with degenerate marginals
  shape,          // matrix/tensor dimension mismatch
  training,       // optimizer diverged
  load,           // corrupt artifact on disk
  precondition,   // a pipeline stage ran before its inputs existed
  not_found,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Thrown when an on-disk artifact cannot be parsed. Carries the location of
/// the first bad byte so callers can point the user at it.
class LoadError : public Error {
 public:
  LoadError(std::string file, std::size_t line, std::size_t byte_offset,
            const std::string& reason);

  const std::string& file() const noexcept { return file_; }
  std::size_t line() const noexcept { return line_; }
  std::size_t byte_offset() const noexcept { return byte_offset_; }

 private:
  std::string file_;
  std::size_t line_;
  std::size_t byte_offset_;
};

/// 64-bit FNV-1a, rendered as 16 lowercase hex digits. Used for prompt digests
/// and pattern content ids; stable across platforms and runs.
std::uint64_t fnv1a64(std::string_view data,
                      std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string digest_hex(std::string_view data);
std::string hex64(std::uint64_t value);

/// Mixes several values into one seed (splitmix64 finalizer).
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);
std::uint64_t mix_seed(std::uint64_t a, std::string_view b);

std::string to_lower(std::string_view s);
std::string trim(std::string_view s);
std::string collapse_whitespace(std::string_view s);
bool iequals(std::string_view a, std::string_view b);

/// Shortest representation that parses back to the same double; integral
/// values print without a decimal point.
std::string format_number(double value);
std::optional<double> parse_number(std::string_view text);

}  // namespace gazemine
