#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "narrative/linalg.hpp"

namespace narrative {

using json = nlohmann::json;
namespace fs = std::filesystem;

// ---- text helpers --------------------------------------------------------

std::string to_lower(std::string_view text);
std::string trim(std::string_view text);
std::vector<std::string> split_whitespace(std::string_view text);
std::vector<std::string> split(std::string_view text, char delimiter);
std::string join(const std::vector<std::string>& parts, std::string_view separator);

// ---- hashing -------------------------------------------------------------

std::string sha256_hex(std::string_view data);
std::string sha256_file(const fs::path& path);

// ---- line-delimited JSON -------------------------------------------------

// Calls `visit(record, line_number)` for each non-blank line. Parse failures
// raise MalformedRecord with the 1-based line number.
void read_jsonl(const fs::path& path, const std::function<void(const json&, std::size_t)>& visit);
std::vector<json> read_jsonl(const fs::path& path);

// Writes every record on its own line via a temp file + rename.
void write_jsonl(const fs::path& path, const std::vector<json>& records);

json read_json(const fs::path& path);
void write_json(const fs::path& path, const json& value);

std::string read_text(const fs::path& path);
void write_text_atomic(const fs::path& path, std::string_view content);

// ---- flat tensor files ---------------------------------------------------
//
// Layout: one line of JSON metadata terminated by '\n', then the raw
// little-endian float64 payload of every tensor back to back. Metadata keys:
//   "format": "narrative-tensors", "version": 1,
//   "tensors": [{"name", "rows", "cols", "offset"}], "meta": {...}
// Offsets are in doubles from the start of the payload.

struct TensorFile {
  json meta = json::object();
  std::map<std::string, Matrix> tensors;
};

void save_tensors(const fs::path& path, const TensorFile& file);
TensorFile load_tensors(const fs::path& path);

// Embedding matrices use the same container with a single tensor "data".
void save_matrix(const fs::path& path, const Matrix& matrix, const json& meta = json::object());
Matrix load_matrix(const fs::path& path);

}  // namespace narrative
