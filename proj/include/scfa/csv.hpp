// Copyright 2026 The scfa Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "scfa/errors.hpp"
#include "scfa/model.hpp"

namespace scfa {

// 17 significant digits round-trips any double; '.' decimal separator,
// "nan"/"inf" spelled as glibc prints them. All CSV output goes through this
// so files compare byte-for-byte across runs.
inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

inline std::string join(const std::vector<std::string>& parts, char sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out.push_back(sep);
    out += parts[i];
  }
  return out;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return static_cast<int>(i);
    }
    return -1;
  }
  int require_column(const std::string& name) const {
    const int c = column(name);
    if (c < 0) throw ConfigError("missing column '" + name + "'");
    return c;
  }
};

inline CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  CsvTable t;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split(line, ',');
    if (first) {
      t.header = std::move(cells);
      first = false;
    } else {
      t.rows.push_back(std::move(cells));
    }
  }
  return t;
}

// Write via temp file + rename so concurrent writers never interleave and
// readers never observe partial files.
inline void atomic_write(const std::filesystem::path& path,
                         const std::string& contents) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + tmp.string());
    out << contents;
  }
  fs::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Dataset CSV: header feature_0..feature_{p-1},label.
inline std::string dataset_to_csv(const Dataset& data) {
  if (data.empty()) throw ConfigError("dataset_to_csv: empty dataset");
  const std::size_t p = data[0].features.size();
  std::string out;
  for (std::size_t j = 0; j < p; ++j) {
    out += "feature_" + std::to_string(j) + ",";
  }
  out += "label\n";
  for (const Example& ex : data) {
    for (double f : ex.features) {
      out += fmt_double(f);
      out.push_back(',');
    }
    out += fmt_double(ex.label);
    out.push_back('\n');
  }
  return out;
}

inline Dataset dataset_from_csv(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  if (t.header.empty() || t.header.back() != "label") {
    throw ConfigError("dataset CSV must end with a 'label' column");
  }
  const std::size_t p = t.header.size() - 1;
  Dataset data;
  data.reserve(t.rows.size());
  for (const auto& row : t.rows) {
    if (row.size() != p + 1) throw ConfigError("ragged dataset CSV row");
    Example ex;
    ex.features.resize(p);
    for (std::size_t j = 0; j < p; ++j) ex.features[j] = std::stod(row[j]);
    ex.label = std::stod(row[p]);
    data.push_back(std::move(ex));
  }
  return data;
}

}  // namespace scfa
