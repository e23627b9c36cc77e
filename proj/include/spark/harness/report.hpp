#pragma once

#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "spark/harness/session.hpp"

namespace spark::harness {

struct ReportRow {
  std::string scenario;
  std::string variant;
  int runs = 0;
  int successes = 0;
  int timeouts = 0;
  int incomplete = 0;  // logs without a summary line
  std::optional<double> mean_time;
  std::optional<double> std_time;  // population
  int total_estops = 0;
};

/// Aggregates per (scenario, variant). Timed-out runs count toward e-stops
/// but not toward the completion-time statistics.
inline std::vector<ReportRow> build_report(const std::vector<SessionLog>& logs) {
  std::map<std::pair<std::string, std::string>, std::pair<ReportRow, std::vector<double>>> groups;
  for (const SessionLog& log : logs) {
    const std::string scenario = log.meta.value("scenario", "");
    const std::string variant = log.meta.value("variant", "");
    auto& [row, times] = groups[{scenario, variant}];
    row.scenario = scenario;
    row.variant = variant;
    ++row.runs;
    if (!log.summary) {
      ++row.incomplete;
      continue;
    }
    const auto& s = *log.summary;
    row.total_estops += s.value("estop_count", 0);
    if (s.value("outcome", "") == "success") {
      ++row.successes;
      times.push_back(s.at("completion_time").get<double>());
    } else {
      ++row.timeouts;
    }
  }
  std::vector<ReportRow> out;
  for (auto& [key, group] : groups) {
    auto& [row, times] = group;
    if (!times.empty()) {
      double mean = 0.0;
      for (double t : times) mean += t;
      mean /= static_cast<double>(times.size());
      double var = 0.0;
      for (double t : times) var += (t - mean) * (t - mean);
      row.mean_time = mean;
      row.std_time = std::sqrt(var / static_cast<double>(times.size()));
    }
    out.push_back(row);
  }
  return out;
}

namespace detail {
inline std::string fmt_opt(const std::optional<double>& v, const char* spec) {
  if (!v) return "";
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, *v);
  return buf;
}
}  // namespace detail

inline std::string report_csv(const std::vector<ReportRow>& rows) {
  std::string out = "scenario,variant,runs,successes,timeouts,incomplete,mean_completion_s,std_completion_s,total_estops\n";
  for (const ReportRow& r : rows) {
    out += r.scenario + "," + r.variant + "," + std::to_string(r.runs) + "," + std::to_string(r.successes) + "," +
           std::to_string(r.timeouts) + "," + std::to_string(r.incomplete) + "," + detail::fmt_opt(r.mean_time, "%.6g") +
           "," + detail::fmt_opt(r.std_time, "%.6g") + "," + std::to_string(r.total_estops) + "\n";
  }
  return out;
}

inline std::string report_table(const std::vector<ReportRow>& rows) {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-16s %-7s %5s %5s %8s %10s %10s %7s\n", "scenario", "variant", "runs", "ok", "timeout",
                "mean [s]", "std [s]", "estops");
  out += buf;
  for (const ReportRow& r : rows) {
    const std::string mean = r.mean_time ? detail::fmt_opt(r.mean_time, "%.2f") : "-";
    const std::string sd = r.std_time ? detail::fmt_opt(r.std_time, "%.2f") : "-";
    std::snprintf(buf, sizeof buf, "%-16s %-7s %5d %5d %8d %10s %10s %7d\n", r.scenario.c_str(), r.variant.c_str(), r.runs,
                  r.successes, r.timeouts, mean.c_str(), sd.c_str(), r.total_estops);
    out += buf;
    if (r.incomplete > 0) {
      std::snprintf(buf, sizeof buf, "  (%d incomplete log%s ignored)\n", r.incomplete, r.incomplete == 1 ? "" : "s");
      out += buf;
    }
  }
  return out;
}

}  // namespace spark::harness
