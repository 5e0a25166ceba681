#pragma once

// Human validation scoring. Relevance and centrality come from sheets of
// six theories scored against one demographic's posts; unexpectedness and
// specificity are plain Likert averages.

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "splits/common.hpp"

namespace splits {

inline constexpr std::size_t kSheetSize = 6;
inline constexpr int kLikertMax = 4;

struct SheetEntry {
  int score = 0;
  bool meant_for_set = false;
};

struct Sheet {
  std::string sheet_id;
  std::string model_label;
  std::string post_set_ref;
  std::vector<SheetEntry> entries;
};

inline void validate_sheet(const Sheet& sheet) {
  if (sheet.entries.size() != kSheetSize) {
    throw Error(ErrorKind::invalid_argument,
                "sheet " + sheet.sheet_id + " has " + std::to_string(sheet.entries.size()) + " entries, expected 6");
  }
  for (const auto& e : sheet.entries) {
    if (e.score < 0 || e.score > kLikertMax) {
      throw Error(ErrorKind::invalid_argument, "sheet " + sheet.sheet_id + " has a score outside 0..4");
    }
  }
}

// S = sum(s_i) / (4n) over the n entries scored 4, where s_i is +4 when the
// theory was meant for the set and -4 otherwise. n = 0 gives 0.
inline double sheet_score(const Sheet& sheet) {
  validate_sheet(sheet);
  int sum = 0;
  int n = 0;
  for (const auto& e : sheet.entries) {
    if (e.score != kLikertMax) continue;
    ++n;
    sum += e.meant_for_set ? kLikertMax : -kLikertMax;
  }
  if (n == 0) return 0.0;
  return static_cast<double>(sum) / static_cast<double>(kLikertMax * n);
}

enum class TieRule { loss, win };

inline int win_loss(double s, TieRule tie = TieRule::loss) {
  if (s > 0.0) return 1;
  if (s == 0.0 && tie == TieRule::win) return 1;
  return 0;
}

enum class Dimension { relevance, centrality, unexpectedness, specificity };

inline constexpr Dimension kDimensions[] = {Dimension::relevance, Dimension::centrality, Dimension::unexpectedness,
                                            Dimension::specificity};

inline const char* to_string(Dimension d) {
  switch (d) {
    case Dimension::relevance: return "relevance";
    case Dimension::centrality: return "centrality";
    case Dimension::unexpectedness: return "unexpectedness";
    case Dimension::specificity: return "specificity";
  }
  return "relevance";
}

inline Dimension parse_dimension(std::string_view s) {
  const auto lower = to_lower_ascii(trim(s));
  for (auto d : kDimensions) {
    if (lower == to_string(d)) return d;
  }
  throw Error(ErrorKind::invalid_argument, "unknown dimension " + std::string(s));
}

inline bool is_sheet_dimension(Dimension d) { return d == Dimension::relevance || d == Dimension::centrality; }

struct DimensionScore {
  Dimension dimension = Dimension::relevance;
  double value = 0.0;
};

inline double mean(const std::vector<double>& values) {
  if (values.empty()) throw Error(ErrorKind::invalid_argument, "cannot aggregate an empty list");
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

struct AggregateOptions {
  TieRule tie = TieRule::loss;
  // Average raw S instead of win/loss bits for sheet dimensions.
  bool raw_sheet_scores = false;
};

inline DimensionScore aggregate_sheets(Dimension d, const std::vector<Sheet>& sheets, const AggregateOptions& options = {}) {
  std::vector<double> values;
  values.reserve(sheets.size());
  for (const auto& sheet : sheets) {
    const double s = sheet_score(sheet);
    values.push_back(options.raw_sheet_scores ? s : static_cast<double>(win_loss(s, options.tie)));
  }
  return {d, mean(values)};
}

inline DimensionScore aggregate_likert(Dimension d, const std::vector<int>& scores) {
  std::vector<double> values;
  values.reserve(scores.size());
  for (int s : scores) {
    if (s < 0 || s > kLikertMax) throw Error(ErrorKind::invalid_argument, "Likert score outside 0..4");
    values.push_back(static_cast<double>(s));
  }
  return {d, mean(values)};
}

// ---------------------------------------------------------------------------
// Tabular intake: CSV with a header row containing dimension, sheet_id,
// theory_id, score, meant_for and model_label. Rows are one theory each.

struct AnnotationRow {
  Dimension dimension = Dimension::relevance;
  std::string sheet_id;
  std::string theory_id;
  int score = 0;
  bool meant_for = false;
  std::string model_label;
};

inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else {
      field += c;
    }
  }
  if (quoted) throw Error(ErrorKind::parse, "unterminated quote in CSV line");
  fields.push_back(std::move(field));
  return fields;
}

inline bool parse_bool_field(std::string_view s) {
  const auto v = to_lower_ascii(trim(s));
  if (v == "1" || v == "true" || v == "yes" || v == "y") return true;
  if (v == "0" || v == "false" || v == "no" || v == "n" || v.empty()) return false;
  throw Error(ErrorKind::parse, "not a boolean: " + std::string(s));
}

inline std::vector<AnnotationRow> parse_annotation_csv(std::string_view text) {
  const auto lines = split_lines(text);
  if (lines.empty()) throw Error(ErrorKind::parse, "empty annotation file");
  const auto header = split_csv_line(lines[0]);
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[to_lower_ascii(trim(header[i]))] = i;
  for (const char* required : {"dimension", "sheet_id", "theory_id", "score", "meant_for", "model_label"}) {
    if (!col.count(required)) throw Error(ErrorKind::parse, std::string("annotation file lacks column ") + required);
  }
  std::vector<AnnotationRow> rows;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    if (trim(lines[li]).empty()) continue;
    const auto f = split_csv_line(lines[li]);
    if (f.size() < header.size()) throw Error(ErrorKind::parse, "short row at line " + std::to_string(li + 1));
    AnnotationRow row;
    row.dimension = parse_dimension(f[col["dimension"]]);
    row.sheet_id = trim(f[col["sheet_id"]]);
    row.theory_id = trim(f[col["theory_id"]]);
    try {
      std::size_t used = 0;
      const std::string score(trim(f[col["score"]]));
      row.score = std::stoi(score, &used);
      if (used != score.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw Error(ErrorKind::parse, "bad score at line " + std::to_string(li + 1));
    }
    row.meant_for = parse_bool_field(f[col["meant_for"]]);
    row.model_label = trim(f[col["model_label"]]);
    rows.push_back(std::move(row));
  }
  return rows;
}

// Per model label, one value per dimension that has data.
struct DimensionTable {
  std::map<std::string, std::map<Dimension, double>> values;
};

inline DimensionTable score_annotations(const std::vector<AnnotationRow>& rows, const AggregateOptions& options = {}) {
  // (model, dimension, sheet) -> sheet
  std::map<std::string, std::map<Dimension, std::map<std::string, Sheet>>> sheets;
  std::map<std::string, std::map<Dimension, std::vector<int>>> likert;
  for (const auto& r : rows) {
    if (is_sheet_dimension(r.dimension)) {
      auto& sheet = sheets[r.model_label][r.dimension][r.sheet_id];
      sheet.sheet_id = r.sheet_id;
      sheet.model_label = r.model_label;
      sheet.entries.push_back({r.score, r.meant_for});
    } else {
      likert[r.model_label][r.dimension].push_back(r.score);
    }
  }
  DimensionTable table;
  for (const auto& [model, by_dim] : sheets) {
    for (const auto& [dim, by_sheet] : by_dim) {
      std::vector<Sheet> list;
      for (const auto& [_, s] : by_sheet) list.push_back(s);
      table.values[model][dim] = aggregate_sheets(dim, list, options).value;
    }
  }
  for (const auto& [model, by_dim] : likert) {
    for (const auto& [dim, scores] : by_dim) table.values[model][dim] = aggregate_likert(dim, scores).value;
  }
  return table;
}

// Rows are models, columns the four dimensions; blank where absent.
inline std::string serialize_dimension_table(const DimensionTable& table) {
  std::string out = "model";
  for (auto d : kDimensions) out += std::string("\t") + to_string(d);
  out += '\n';
  for (const auto& [model, dims] : table.values) {
    out += model;
    for (auto d : kDimensions) {
      out += '\t';
      auto it = dims.find(d);
      if (it != dims.end()) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.4f", it->second);
        out += buf;
      }
    }
    out += '\n';
  }
  return out;
}

}  // namespace splits
