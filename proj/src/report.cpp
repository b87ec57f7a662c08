/*
 * Copyright 2026 The factorlab Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "factorlab/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "factorlab/config.hpp"
#include "factorlab/error.hpp"
#include "factorlab/image.hpp"

namespace factorlab {

namespace fs = std::filesystem;

namespace {

std::string full(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string two(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  // Avoid printing "-0.00".
  return std::string(buf) == "-0.00" ? "0.00" : buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (size_t k = 0; k < line.size(); ++k) {
    const char c = line[k];
    if (quoted) {
      if (c == '"' && k + 1 < line.size() && line[k + 1] == '"') {
        cur += '"';
        ++k;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

void write_text(const fs::path& path, const std::string& text, std::vector<fs::path>& written) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  written.push_back(path);
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::string file_safe(std::string s) {
  for (char& c : s)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-') c = '_';
  return s;
}

}  // namespace

std::vector<ReportTable> report_tables(const EvalReport& report) {
  std::vector<std::string> real;
  for (const auto& r : report.rows)
    if (r.setting == kSettingGeneralization && std::find(real.begin(), real.end(), r.factor) == real.end())
      real.push_back(r.factor);

  std::vector<ReportTable> tables;
  for (int i : report.examined_codes) {
    const std::string code = code_label(i);
    const std::string suffix = "-" + std::to_string(i + 1);
    std::vector<ReportRow> unsup;
    for (const auto& r : report.rows)
      if (r.setting == kSettingUnsupervised && r.factor == code) unsup.push_back(r);
    if (real.empty()) {
      if (!unsup.empty()) tables.push_back({"table_" + code, unsup});
      continue;
    }
    for (const auto& f : real) {
      ReportTable t{"table_" + code + "_" + file_safe(f), unsup};
      for (const auto& r : report.rows)
        if (r.setting == kSettingGeneralization && r.factor == f && (r.intervention == "Base" || ends_with(r.intervention, suffix)))
          t.rows.push_back(r);
      for (const auto& r : report.rows)
        if (r.setting == kSettingSemisupervised && r.factor == f) t.rows.push_back(r);
      if (!t.rows.empty()) tables.push_back(std::move(t));
    }
  }
  return tables;
}

std::string table_csv(std::span<const ReportRow> rows) {
  std::string out = kTableCsvHeader + "\n";
  for (const auto& r : rows)
    out += csv_field(r.setting) + "," + csv_field(r.intervention) + "," + full(r.metrics.acc) + "," +
           full(r.metrics.acc_gap) + "," + full(r.metrics.acc_min) + "," + full(r.cai_05) + "," + full(r.cai_075) +
           "\n";
  return out;
}

std::string table_markdown(std::span<const ReportRow> rows) {
  std::string out = "| Setting | Interv. | Acc | Acc_gap | Acc_min | CAI_0.5 | CAI_0.75 |\n";
  out += "|---|---|---|---|---|---|---|\n";
  size_t start = 0;
  while (start < rows.size()) {
    size_t end = start;
    while (end < rows.size() && rows[end].setting == rows[start].setting) ++end;
    // Column values within this setting block; sign +1 means higher is better.
    auto column = [&](size_t r, int c) {
      const auto& row = rows[r];
      switch (c) {
        case 0: return row.metrics.acc;
        case 1: return row.metrics.acc_gap;
        case 2: return row.metrics.acc_min;
        case 3: return row.cai_05;
        default: return row.cai_075;
      }
    };
    const int sign[] = {1, -1, 1, 1, 1};
    std::string best[5];
    for (int c = 0; c < 5 && end - start > 1; ++c) {
      double b = column(start, c) * sign[c];
      for (size_t r = start + 1; r < end; ++r) b = std::max(b, column(r, c) * sign[c]);
      best[c] = two(b * sign[c]);
    }
    for (size_t r = start; r < end; ++r) {
      out += "| " + (r == start ? rows[r].setting : std::string()) + " | " + rows[r].intervention + " |";
      for (int c = 0; c < 5; ++c) {
        const std::string v = two(column(r, c));
        out += " " + (v == best[c] ? "**" + v + "**" : v) + " |";
      }
      out += "\n";
    }
    start = end;
  }
  return out;
}

std::vector<CsvRow> read_table_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != kTableCsvHeader) throw InputError(path.string() + ": unexpected table header");
  std::vector<CsvRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 7) throw InputError(path.string() + ": malformed row '" + line + "'");
    rows.push_back({f[0], f[1], std::stod(f[2]), std::stod(f[3]), std::stod(f[4]), std::stod(f[5]), std::stod(f[6])});
  }
  return rows;
}

namespace {

struct SensitivityGrid {
  std::vector<int> codes;
  std::vector<std::string> labels;
  std::vector<std::vector<std::string>> cells;
};

SensitivityGrid sensitivity_grid(const EvalReport& report, bool precise) {
  auto fmt = [&](double v) { return precise ? full(v) : two(v); };
  SensitivityGrid g;
  for (const auto& e : report.sensitivity) g.codes.push_back(e.code);
  auto add = [&](const std::string& label, const std::vector<std::string>& row) {
    g.labels.push_back(label);
    g.cells.push_back(row);
  };
  std::vector<std::string> acc, gap, mn;
  for (const auto& e : report.sensitivity) {
    acc.push_back(fmt(e.metrics.acc));
    gap.push_back(fmt(e.metrics.acc_gap));
    mn.push_back(fmt(e.metrics.acc_min));
  }
  add("Baseline / Accuracy", acc);
  add("Baseline / Accuracy Gap", gap);
  add("Baseline / Min Accuracy", mn);

  std::vector<std::string> kinds;
  for (const auto& r : report.rows)
    if (r.setting == kSettingUnsupervised && r.intervention != "Base") {
      const std::string k = r.intervention.substr(0, r.intervention.find('-'));
      if (std::find(kinds.begin(), kinds.end(), k) == kinds.end()) kinds.push_back(k);
    }
  const char* metric_names[] = {"Accuracy", "Accuracy Gap", "Min Accuracy", "CAI(0.5)", "CAI(0.75)"};
  for (const auto& k : kinds) {
    std::vector<std::vector<std::string>> rows(5);
    for (int code : g.codes) {
      const ReportRow* hit = nullptr;
      for (const auto& r : report.rows)
        if (r.setting == kSettingUnsupervised && r.factor == code_label(code) &&
            r.intervention == k + "-" + std::to_string(code + 1))
          hit = &r;
      const double v[] = {hit ? hit->metrics.acc : 0, hit ? hit->metrics.acc_gap : 0, hit ? hit->metrics.acc_min : 0,
                          hit ? hit->cai_05 : 0, hit ? hit->cai_075 : 0};
      for (int m = 0; m < 5; ++m) rows[static_cast<size_t>(m)].push_back(hit ? fmt(v[m]) : "-");
    }
    for (int m = 0; m < 5; ++m) add(k + " / " + metric_names[m], rows[static_cast<size_t>(m)]);
  }
  return g;
}

}  // namespace

std::string sensitivity_markdown(const EvalReport& report) {
  const auto g = sensitivity_grid(report, false);
  std::string out = "| Sorted Sensitive Factors |";
  for (int c : g.codes) out += " " + std::to_string(c + 1) + " |";
  out += "\n|---|";
  for (size_t k = 0; k < g.codes.size(); ++k) out += "---|";
  out += "\n";
  for (size_t r = 0; r < g.labels.size(); ++r) {
    out += "| " + g.labels[r] + " |";
    for (const auto& v : g.cells[r]) out += " " + v + " |";
    out += "\n";
  }
  return out;
}

std::string sensitivity_csv(const EvalReport& report) {
  const auto g = sensitivity_grid(report, true);
  std::string out = "row";
  for (int c : g.codes) out += "," + code_label(c);
  out += "\n";
  for (size_t r = 0; r < g.labels.size(); ++r) {
    out += csv_field(g.labels[r]);
    for (const auto& v : g.cells[r]) out += "," + v;
    out += "\n";
  }
  return out;
}

std::vector<fs::path> emit_report(const EvalReport& report, const fs::path& dir, const Generator* gen,
                                  int traversal_steps, int traversal_images, uint64_t traversal_seed) {
  std::vector<fs::path> written;
  fs::create_directories(dir);
  write_json_file(dir / "report.json", report);
  written.push_back(dir / "report.json");
  if (report.rows.empty()) std::cerr << "warning: report has no result rows; emitting partial output\n";

  for (const auto& t : report_tables(report)) {
    write_text(dir / (t.name + ".csv"), table_csv(t.rows), written);
    write_text(dir / (t.name + ".md"), table_markdown(t.rows), written);
  }
  if (report.sensitivity.empty()) {
    std::cerr << "warning: report has no sensitivity ranking\n";
  } else {
    write_text(dir / "sensitivity.md", sensitivity_markdown(report), written);
    write_text(dir / "sensitivity.csv", sensitivity_csv(report), written);
  }
  if (gen != nullptr) {
    for (int i : report.examined_codes) {
      const fs::path png = dir / ("traversal_" + code_label(i) + ".png");
      write_png(traversal_grid(*gen, i, traversal_steps, traversal_images, traversal_seed), png);
      written.push_back(png);
    }
  }
  return written;
}

EvalReport load_report(const fs::path& path) {
  const fs::path file = fs::is_directory(path) ? path / "report.json" : path;
  if (!fs::exists(file)) throw InputError("no report.json at " + path.string());
  try {
    return read_json_file(file).get<EvalReport>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError(file.string() + ": " + e.what());
  }
}

}  // namespace factorlab
