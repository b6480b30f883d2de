#pragma once

// CSV tables, aligned text summaries and per-run manifests.

#include "tdca/error.hpp"

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace tdca::harness {

/// Fixed-precision decimal with '.' separator, independent of locale.
inline std::string fmt(double v, int precision = 6) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, precision);
  std::string s(buf, r.ptr);
  if (s.find_first_not_of("-0.") == std::string::npos) s = std::string("0.") + std::string(static_cast<std::size_t>(precision), '0');
  return s;
}

class Table {
 public:
  explicit Table(std::vector<std::string> header) : header_(std::move(header)) {}

  void add_row(std::vector<std::string> row) {
    detail::require_dims(row.size() == header_.size(),
                         "table row has " + std::to_string(row.size()) + " cells, header has " +
                             std::to_string(header_.size()));
    rows_.push_back(std::move(row));
  }

  const std::vector<std::string>& header() const { return header_; }
  const std::vector<std::vector<std::string>>& rows() const { return rows_; }

  std::string to_csv() const {
    std::string out;
    auto line = [&](const std::vector<std::string>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out += ',';
        out += escape(cells[i]);
      }
      out += '\n';
    };
    line(header_);
    for (const auto& r : rows_) line(r);
    return out;
  }

  std::string to_text() const {
    std::vector<std::size_t> width(header_.size());
    for (std::size_t c = 0; c < header_.size(); ++c) width[c] = header_[c].size();
    for (const auto& r : rows_) {
      for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
    }
    std::ostringstream os;
    auto line = [&](const std::vector<std::string>& cells) {
      for (std::size_t c = 0; c < cells.size(); ++c) {
        if (c) os << "  ";
        if (c + 1 == cells.size()) {
          os << cells[c];
        } else {
          os << std::left << std::setw(static_cast<int>(width[c])) << cells[c];
        }
      }
      os << '\n';
    };
    line(header_);
    std::size_t total = 0;
    for (std::size_t w : width) total += w;
    os << std::string(total + 2 * (width.size() - 1), '-') << '\n';
    for (const auto& r : rows_) line(r);
    return os.str();
  }

 private:
  static std::string escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char ch : s) {
      if (ch == '"') q += '"';
      q += ch;
    }
    return q + "\"";
  }

  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

inline void write_text(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot write " + path.string());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Git blob id: sha1("blob <size>\0" + content), lowercase hex.
inline std::string git_blob_hash(std::string_view content) {
  const std::string prefix = "blob " + std::to_string(content.size()) + std::string(1, '\0');
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (ctx == nullptr) throw Error("sha1: out of memory");
  const bool ok = EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                  EVP_DigestUpdate(ctx, prefix.data(), prefix.size()) == 1 &&
                  EVP_DigestUpdate(ctx, content.data(), content.size()) == 1 &&
                  EVP_DigestFinal_ex(ctx, md, &len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) throw Error("sha1 digest failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[md[i] >> 4];
    out += kHex[md[i] & 0xf];
  }
  return out;
}

inline std::string file_hash(const std::filesystem::path& path) { return git_blob_hash(read_text(path)); }

/// Record of one run: what was asked, which inputs it read and what it wrote.
class Manifest {
 public:
  Manifest(std::string command, std::map<std::string, std::string> config)
      : command_(std::move(command)), config_(std::move(config)) {}

  void add_input(const std::filesystem::path& path) { inputs_[path.generic_string()] = file_hash(path); }
  void add_output(const std::string& name, std::string_view content) {
    outputs_[name] = git_blob_hash(content);
  }
  void set(const std::string& key, const std::string& value) { extra_[key] = value; }

  /// Hash over the config echo and every input hash.
  std::string content_hash() const {
    std::string blob = "command " + command_ + "\n";
    for (const auto& [k, v] : config_) blob += "config " + k + " = " + v + "\n";
    for (const auto& [k, v] : inputs_) blob += "input " + k + " " + v + "\n";
    return git_blob_hash(blob);
  }

  std::string to_json() const {
    nlohmann::ordered_json j;
    j["command"] = command_;
    j["content_hash"] = content_hash();
    j["config"] = config_;
    j["inputs"] = inputs_;
    j["outputs"] = outputs_;
    if (!extra_.empty()) j["notes"] = extra_;
    return j.dump(2) + "\n";
  }

  /// Written as manifest_<command>.json so runs sharing a directory keep theirs.
  std::filesystem::path write(const std::filesystem::path& dir) const {
    const auto path = dir / ("manifest_" + command_ + ".json");
    write_text(path, to_json());
    return path;
  }

 private:
  std::string command_;
  std::map<std::string, std::string> config_;
  std::map<std::string, std::string> inputs_;
  std::map<std::string, std::string> outputs_;
  std::map<std::string, std::string> extra_;
};

}  // namespace tdca::harness
