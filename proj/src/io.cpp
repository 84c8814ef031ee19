#include "narrative/io.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstring>
#include <fstream>
#include <sstream>
#include <thread>

#include <openssl/evp.h>

#include "narrative/error.hpp"

namespace narrative {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::Io: return "IoError";
    case ErrorKind::DuplicateDocumentId: return "DuplicateDocumentId";
    case ErrorKind::UnknownFrameLabel: return "UnknownFrameLabel";
    case ErrorKind::MalformedRecord: return "MalformedRecord";
    case ErrorKind::MalformedConllu: return "MalformedConllu";
    case ErrorKind::HeadOutOfRange: return "HeadOutOfRange";
    case ErrorKind::UnparsedDocument: return "UnparsedDocument";
    case ErrorKind::RelationAbsent: return "RelationAbsent";
    case ErrorKind::SpanNotAligned: return "SpanNotAligned";
    case ErrorKind::PreconditionFailed: return "PreconditionFailed";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::EmptyExpansion: return "EmptyExpansion";
    case ErrorKind::EmptyGeneration: return "EmptyGeneration";
    case ErrorKind::ProviderUnavailable: return "ProviderUnavailable";
    case ErrorKind::ProtocolError: return "ProtocolError";
    case ErrorKind::MissingArtifact: return "MissingArtifact";
    case ErrorKind::StaleArtifact: return "StaleArtifact";
    case ErrorKind::Locked: return "Locked";
  }
  return "Error";
}

std::string to_lower(std::string_view text) {
  std::string out(text);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string trim(std::string_view text) {
  std::size_t begin = 0;
  std::size_t end = text.size();
  while (begin < end && std::isspace(static_cast<unsigned char>(text[begin]))) ++begin;
  while (end > begin && std::isspace(static_cast<unsigned char>(text[end - 1]))) --end;
  return std::string(text.substr(begin, end - begin));
}

std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i > start) out.emplace_back(text.substr(start, i - start));
  }
  return out;
}

std::vector<std::string> split(std::string_view text, char delimiter) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = text.find(delimiter, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(text.substr(start));
      break;
    }
    out.emplace_back(text.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

std::string join(const std::vector<std::string>& parts, std::string_view separator) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += separator;
    out += parts[i];
  }
  return out;
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
    fail(ErrorKind::Io, "sha256 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(length * 2);
  for (unsigned int i = 0; i < length; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

std::string sha256_file(const fs::path& path) { return sha256_hex(read_text(path)); }

void read_jsonl(const fs::path& path, const std::function<void(const json&, std::size_t)>& visit) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open " + path.string());
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (trim(line).empty()) continue;
    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      fail(ErrorKind::MalformedRecord,
           path.string() + ":" + std::to_string(line_number) + ": " + e.what());
    }
    visit(record, line_number);
  }
}

std::vector<json> read_jsonl(const fs::path& path) {
  std::vector<json> records;
  read_jsonl(path, [&](const json& record, std::size_t) { records.push_back(record); });
  return records;
}

void write_jsonl(const fs::path& path, const std::vector<json>& records) {
  std::string content;
  for (const auto& record : records) {
    content += record.dump();
    content += '\n';
  }
  write_text_atomic(path, content);
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    fail(ErrorKind::MalformedRecord, path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& value) {
  write_text_atomic(path, value.dump(2) + "\n");
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_text_atomic(const fs::path& path, std::string_view content) {
  static std::atomic<std::uint64_t> counter{0};
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const auto tid = std::hash<std::thread::id>{}(std::this_thread::get_id());
  fs::path temp = path;
  temp += ".tmp." + std::to_string(tid) + "." + std::to_string(counter++);
  {
    std::ofstream out(temp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + temp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    require(static_cast<bool>(out), ErrorKind::Io, "short write to " + temp.string());
  }
  std::error_code ec;
  fs::rename(temp, path, ec);
  if (ec) {
    fs::remove(temp);
    fail(ErrorKind::Io, "rename to " + path.string() + ": " + ec.message());
  }
}

namespace {

static_assert(sizeof(double) == 8);

bool host_is_little_endian() {
  const std::uint16_t probe = 1;
  unsigned char first;
  std::memcpy(&first, &probe, 1);
  return first == 1;
}

void append_le(std::string& out, double value) {
  unsigned char bytes[8];
  std::memcpy(bytes, &value, 8);
  if (!host_is_little_endian()) std::reverse(bytes, bytes + 8);
  out.append(reinterpret_cast<const char*>(bytes), 8);
}

double read_le(const char* data) {
  unsigned char bytes[8];
  std::memcpy(bytes, data, 8);
  if (!host_is_little_endian()) std::reverse(bytes, bytes + 8);
  double value;
  std::memcpy(&value, bytes, 8);
  return value;
}

}  // namespace

void save_tensors(const fs::path& path, const TensorFile& file) {
  json header;
  header["format"] = "narrative-tensors";
  header["version"] = 1;
  header["meta"] = file.meta;
  header["tensors"] = json::array();
  std::string payload;
  std::size_t offset = 0;
  for (const auto& [name, tensor] : file.tensors) {
    header["tensors"].push_back({{"name", name},
                                 {"rows", tensor.rows()},
                                 {"cols", tensor.cols()},
                                 {"offset", offset}});
    for (Eigen::Index r = 0; r < tensor.rows(); ++r)
      for (Eigen::Index c = 0; c < tensor.cols(); ++c) append_le(payload, tensor(r, c));
    offset += static_cast<std::size_t>(tensor.size());
  }
  std::string content = header.dump();
  content += '\n';
  content += payload;
  write_text_atomic(path, content);
}

TensorFile load_tensors(const fs::path& path) {
  const std::string content = read_text(path);
  const auto newline = content.find('\n');
  require(newline != std::string::npos, ErrorKind::MalformedRecord,
          path.string() + ": missing tensor header");
  json header;
  try {
    header = json::parse(content.substr(0, newline));
  } catch (const json::parse_error& e) {
    fail(ErrorKind::MalformedRecord, path.string() + ": bad tensor header: " + e.what());
  }
  require(header.value("format", "") == "narrative-tensors", ErrorKind::MalformedRecord,
          path.string() + ": not a tensor file");
  const char* payload = content.data() + newline + 1;
  const std::size_t payload_doubles = (content.size() - newline - 1) / 8;
  TensorFile file;
  file.meta = header.value("meta", json::object());
  for (const auto& entry : header.at("tensors")) {
    const auto rows = entry.at("rows").get<Eigen::Index>();
    const auto cols = entry.at("cols").get<Eigen::Index>();
    const auto offset = entry.at("offset").get<std::size_t>();
    require(offset + static_cast<std::size_t>(rows * cols) <= payload_doubles,
            ErrorKind::MalformedRecord, path.string() + ": truncated tensor payload");
    Matrix tensor(rows, cols);
    std::size_t cursor = offset;
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) tensor(r, c) = read_le(payload + 8 * cursor++);
    file.tensors.emplace(entry.at("name").get<std::string>(), std::move(tensor));
  }
  return file;
}

void save_matrix(const fs::path& path, const Matrix& matrix, const json& meta) {
  TensorFile file;
  file.meta = meta;
  file.tensors.emplace("data", matrix);
  save_tensors(path, file);
}

Matrix load_matrix(const fs::path& path) {
  auto file = load_tensors(path);
  auto it = file.tensors.find("data");
  require(it != file.tensors.end(), ErrorKind::MalformedRecord,
          path.string() + ": no 'data' tensor");
  return std::move(it->second);
}

}  // namespace narrative
