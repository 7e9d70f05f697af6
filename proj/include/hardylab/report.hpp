#pragma once

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hardylab/field.hpp"

namespace hardylab {

/// Small numeric table attached to a report (e.g. one row per k).
struct DataTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  bool empty() const { return rows.empty(); }

  void add(std::vector<double> row) {
    detail::require(row.size() == columns.size(), "table row width does not match its header");
    rows.push_back(std::move(row));
  }

  std::vector<double> column(const std::string& name) const {
    const auto it = std::find(columns.begin(), columns.end(), name);
    detail::require(it != columns.end(), "table has no column '" + name + "'");
    const std::size_t k = it - columns.begin();
    std::vector<double> out;
    for (const auto& r : rows) out.push_back(r[k]);
    return out;
  }

  void write_csv(std::ostream& os) const {
    for (std::size_t c = 0; c < columns.size(); ++c) os << (c ? "," : "") << columns[c];
    os << '\n';
    for (const auto& r : rows) {
      for (std::size_t c = 0; c < r.size(); ++c) os << (c ? "," : "") << format_double(r[c]);
      os << '\n';
    }
  }
};

/// Outcome of one check. pass is "statistic meets threshold in the declared
/// direction" and, when present, every named side condition holds.
struct VerificationReport {
  enum class Direction { at_most, at_least };

  std::string check_name;
  nlohmann::json parameters = nlohmann::json::object();
  double statistic = NAN;
  double threshold = NAN;
  Direction direction = Direction::at_most;
  std::map<std::string, bool> conditions;
  bool pass = false;
  DataTable table;
  std::vector<std::string> notes;

  /// Sets pass from the statistic, threshold and side conditions.
  void decide() {
    bool ok = std::isfinite(statistic) &&
              (direction == Direction::at_most ? statistic <= threshold : statistic >= threshold);
    for (const auto& [name, v] : conditions) ok = ok && v;
    pass = ok;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["check_name"] = check_name;
    j["parameters"] = parameters;
    j["statistic"] = std::isfinite(statistic) ? nlohmann::json(statistic) : nlohmann::json(nullptr);
    j["threshold"] = threshold;
    j["direction"] = direction == Direction::at_most ? "at_most" : "at_least";
    j["conditions"] = conditions;
    j["pass"] = pass;
    j["notes"] = notes;
    if (!table.empty()) {
      j["table"]["columns"] = table.columns;
      j["table"]["rows"] = table.rows;
    }
    return j;
  }

  std::string to_text(bool with_table = true) const {
    std::ostringstream os;
    os << check_name << ": " << (pass ? "PASS" : "FAIL") << "  statistic=" << format_double(statistic)
       << (direction == Direction::at_most ? " <= " : " >= ") << format_double(threshold) << '\n';
    for (const auto& [name, v] : conditions) os << "  " << name << ": " << (v ? "yes" : "no") << '\n';
    for (const auto& n : notes) os << "  note: " << n << '\n';
    if (with_table && !table.empty()) {
      constexpr int width = 15;
      os << "  ";
      for (const auto& c : table.columns) os << std::setw(width) << c;
      os << '\n';
      for (const auto& r : table.rows) {
        os << "  ";
        for (double v : r) os << std::setw(width) << std::setprecision(7) << v;
        os << '\n';
      }
    }
    return os.str();
  }
};

}  // namespace hardylab
