#include "gazemine/json_io.hpp"

#include <fstream>
#include <sstream>

#include "gazemine/common.hpp"

namespace gazemine {

namespace fs = std::filesystem;

void canonical_dump(const json& value, std::string& out) {
  switch (value.type()) {
    case json::value_t::object: {
      out.push_back('{');
      bool first = true;
      // nlohmann::json stores objects in a std::map, so iteration is sorted.
      for (const auto& [key, item] : value.items()) {
        if (!first) out.push_back(',');
        first = false;
        out += json(key).dump();
        out.push_back(':');
        canonical_dump(item, out);
      }
      out.push_back('}');
      break;
    }
    case json::value_t::array: {
      out.push_back('[');
      bool first = true;
      for (const auto& item : value) {
        if (!first) out.push_back(',');
        first = false;
        canonical_dump(item, out);
      }
      out.push_back(']');
      break;
    }
    case json::value_t::number_float:
      out += format_number(value.get<double>());
      break;
    case json::value_t::discarded:
      out += "null";
      break;
    default:
      out += value.dump(-1, ' ', false, json::error_handler_t::replace);
  }
}

std::string canonical_dump(const json& value) {
  std::string out;
  canonical_dump(value, out);
  return out;
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::not_found, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const fs::path& path, std::string_view text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::configuration, "cannot write " + path.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw Error(ErrorKind::configuration, "short write to " + path.string());
  }
  fs::rename(tmp, path);
}

void append_text_file(const fs::path& path, std::string_view text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw Error(ErrorKind::configuration, "cannot append to " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.flush();
}

std::vector<json> parse_jsonl(std::string_view text, const std::string& origin) {
  std::vector<json> records;
  std::size_t offset = 0;
  std::size_t line_no = 0;
  while (offset < text.size()) {
    ++line_no;
    std::size_t end = text.find('\n', offset);
    const bool terminated = end != std::string_view::npos;
    if (!terminated) end = text.size();
    std::string_view line = text.substr(offset, end - offset);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!trim(line).empty()) {
      try {
        records.push_back(json::parse(line));
      } catch (const json::parse_error& e) {
        const std::size_t at = offset + (e.byte > 0 ? e.byte - 1 : 0);
        throw LoadError(origin, line_no, at, e.what());
      }
      if (!terminated) {
        // A final record without its newline is a truncated append.
        throw LoadError(origin, line_no, end, "record is not newline-terminated");
      }
    }
    offset = terminated ? end + 1 : end;
  }
  return records;
}

std::vector<json> read_jsonl(const fs::path& path) {
  return parse_jsonl(read_text_file(path), path.string());
}

std::string to_jsonl(const std::vector<json>& records) {
  std::string out;
  for (const auto& r : records) {
    canonical_dump(r, out);
    out.push_back('\n');
  }
  return out;
}

void write_jsonl(const fs::path& path, const std::vector<json>& records) {
  write_text_file(path, to_jsonl(records));
}

json read_json_file(const fs::path& path) {
  const std::string text = read_text_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1;
    const std::size_t at = e.byte > 0 ? std::min(e.byte - 1, text.size()) : 0;
    for (std::size_t i = 0; i < at; ++i)
      if (text[i] == '\n') ++line;
    throw LoadError(path.string(), line, at, e.what());
  }
}

}  // namespace gazemine
