#pragma once

// Output plumbing shared by the CLI and tests: locale-independent number
// formatting, CSV tables, atomic file writes and run manifests.

#include <Eigen/Dense>

#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "json.hpp"

#include "critprop/errors.hpp"

namespace critprop {

using Json = nlohmann::ordered_json;

inline constexpr std::string_view kSchemaVersion = "critprop-output/1";
inline constexpr std::string_view kToolVersion = "0.1.0";

/// Shortest round-trip representation; "nan", "inf", "-inf" otherwise.
inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

/// JSON has no infinity literal: non-finite values become null.
inline Json json_number(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

/// Writes via a temporary sibling and rename, so readers never see a
/// partial file.
inline void write_atomic(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InvalidArgument("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw InvalidArgument("short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw InvalidArgument("cannot rename " + tmp.string() + ": " + ec.message());
}

class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : columns_(header.size()) { add(header); }

  template <typename... Cells>
  void row(const Cells&... cells) {
    static_assert(sizeof...(Cells) > 0);
    std::vector<std::string> r;
    (r.push_back(cell(cells)), ...);
    add(r);
  }

  void row(const std::vector<std::string>& cells) { add(cells); }

  const std::string& str() const { return text_; }

 private:
  static std::string cell(double v) { return format_number(v); }
  static std::string cell(int v) { return std::to_string(v); }
  static std::string cell(long v) { return std::to_string(v); }
  static std::string cell(long long v) { return std::to_string(v); }
  static std::string cell(unsigned long v) { return std::to_string(v); }
  static std::string cell(unsigned long long v) { return std::to_string(v); }
  static std::string cell(bool v) { return v ? "true" : "false"; }
  static std::string cell(const char* v) { return quote(v); }
  static std::string cell(const std::string& v) { return quote(v); }
  static std::string cell(std::string_view v) { return quote(std::string(v)); }

  static std::string quote(const std::string& v) {
    if (v.find_first_of(",\"\n") == std::string::npos) return v;
    std::string out = "\"";
    for (char ch : v) {
      if (ch == '"') out += '"';
      out += ch;
    }
    return out + "\"";
  }

  void add(const std::vector<std::string>& cells) {
    if (cells.size() != columns_) throw InvalidArgument("csv row has the wrong number of cells");
    for (std::size_t k = 0; k < cells.size(); ++k) {
      if (k) text_ += ',';
      text_ += cells[k];
    }
    text_ += '\n';
  }

  std::size_t columns_;
  std::string text_;
};

/// One row per data point; columns named c0..c{n-1}.
inline std::string matrix_csv(const Eigen::MatrixXd& m) {
  std::string out;
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    if (j) out += ',';
    out += "c" + std::to_string(j);
  }
  out += '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out += ',';
      out += format_number(m(i, j));
    }
    out += '\n';
  }
  return out;
}

inline std::string utc_timestamp(std::chrono::system_clock::time_point t) {
  const std::time_t tt = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Record of one CLI invocation, written next to its outputs.
class RunManifest {
 public:
  RunManifest(std::string subcommand, Json config, std::uint64_t seed)
      : subcommand_(std::move(subcommand)),
        config_(std::move(config)),
        seed_(seed),
        start_(std::chrono::system_clock::now()) {}

  void add_output(const std::filesystem::path& p) { outputs_.push_back(p.string()); }

  Json to_json() const {
    const auto end = std::chrono::system_clock::now();
    Json j;
    j["schema_version"] = kSchemaVersion;
    j["tool_version"] = kToolVersion;
    j["subcommand"] = subcommand_;
    j["config"] = config_;
    j["seed"] = seed_;
    j["outputs"] = outputs_;
    j["started_at"] = utc_timestamp(start_);
    j["finished_at"] = utc_timestamp(end);
    return j;
  }

  void write(const std::filesystem::path& path) const { write_atomic(path, to_json().dump(2) + "\n"); }

 private:
  std::string subcommand_;
  Json config_;
  std::uint64_t seed_;
  std::chrono::system_clock::time_point start_;
  std::vector<std::string> outputs_;
};

}  // namespace critprop
