#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace gazemine {

using json = nlohmann::json;

/// Canonical JSON text: object keys in lexicographic order, no whitespace,
/// numbers via format_number. Identical values always produce identical bytes.
std::string canonical_dump(const json& value);
void canonical_dump(const json& value, std::string& out);

std::string read_text_file(const std::filesystem::path& path);

/// Writes through a temporary file and renames, so readers never observe a
/// half-written artifact.
void write_text_file(const std::filesystem::path& path, std::string_view text);
void append_text_file(const std::filesystem::path& path, std::string_view text);

/// Parses a .jsonl file. Blank lines are skipped; any malformed line raises a
/// LoadError naming the 1-based line and the absolute byte offset.
std::vector<json> read_jsonl(const std::filesystem::path& path);
std::vector<json> parse_jsonl(std::string_view text, const std::string& origin);

std::string to_jsonl(const std::vector<json>& records);
void write_jsonl(const std::filesystem::path& path, const std::vector<json>& records);

/// Parses a whole JSON document, raising LoadError on failure.
json read_json_file(const std::filesystem::path& path);

}  // namespace gazemine
