#pragma once

// Artifact writers. Every CSV starts with a "# dualcap <kind> v<N>" line; wall
// times live in timing.csv so results and traces are byte-identical across
// reruns with the same seed.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include "dualcap/dualcap.hpp"

namespace dualcap::cli {

inline constexpr int kCsvSchemaVersion = 1;
inline constexpr const char* kToolVersion = "1.0.0";

/// Shortest round-trippable text for a double; empty for NaN.
inline std::string fmt(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  for (int prec = 6; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

inline std::string fmt(std::optional<double> v) { return v ? fmt(*v) : ""; }

inline std::string to_hex(const unsigned char* p, unsigned n) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s;
  for (unsigned i = 0; i < n; ++i) {
    s += digits[p[i] >> 4];
    s += digits[p[i] & 15];
  }
  return s;
}

/// SHA-1 of "blob <size>\0<bytes>", the hash git gives the same content.
inline std::string git_blob_sha1(const std::string& bytes) {
  const std::string header = "blob " + std::to_string(bytes.size()) + '\0';
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (ctx == nullptr) throw std::runtime_error("sha1: cannot allocate digest context");
  const bool ok = EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                  EVP_DigestUpdate(ctx, header.data(), header.size()) == 1 &&
                  EVP_DigestUpdate(ctx, bytes.data(), bytes.size()) == 1 && EVP_DigestFinal_ex(ctx, md, &len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) throw std::runtime_error("sha1: digest failed");
  return to_hex(md, len);
}

class CsvWriter {
 public:
  CsvWriter(std::string kind, std::vector<std::string> columns) : columns_(std::move(columns)) {
    text_ = "# dualcap " + kind + " v" + std::to_string(kCsvSchemaVersion) + "\n";
    append(columns_);
  }

  void row(const std::vector<std::string>& cells) {
    if (cells.size() != columns_.size()) throw std::logic_error("csv: row width does not match the header");
    append(cells);
  }

  [[nodiscard]] const std::string& text() const { return text_; }

 private:
  void append(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) text_ += ',';
      text_ += quote(cells[i]);
    }
    text_ += '\n';
  }

  static std::string quote(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
      if (c == '"') q += '"';
      q += c;
    }
    return q + '"';
  }

  std::vector<std::string> columns_;
  std::string text_;
};

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

/// "key: value" lines in insertion order.
class Manifest {
 public:
  void set(const std::string& key, const std::string& value) { lines_.emplace_back(key, value); }

  [[nodiscard]] std::string text() const {
    std::string s = "# dualcap manifest v" + std::to_string(kCsvSchemaVersion) + "\n";
    for (const auto& [k, v] : lines_) s += k + ": " + v + "\n";
    return s;
  }

 private:
  std::vector<std::pair<std::string, std::string>> lines_;
};

/// Reference curve for overlays: two numeric columns (x, value); '#' lines
/// and a non-numeric header row are skipped.
inline std::vector<std::pair<double, double>> read_reference_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path + ": cannot open reference CSV");
  std::vector<std::pair<double, double>> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) continue;
    char* end = nullptr;
    const double x = std::strtod(line.c_str(), &end);
    if (end != line.c_str() + comma) continue;
    const char* rest = line.c_str() + comma + 1;
    const double v = std::strtod(rest, &end);
    if (end == rest) continue;
    out.emplace_back(x, v);
  }
  return out;
}

inline std::optional<double> lookup_reference(const std::vector<std::pair<double, double>>& ref, double x) {
  for (const auto& [rx, rv] : ref)
    if (std::abs(rx - x) <= 1e-9 * std::max(1.0, std::abs(x))) return rv;
  return std::nullopt;
}

}  // namespace dualcap::cli
