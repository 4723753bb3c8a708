#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "spluad/metrics/metrics.hpp"

namespace spluad::metrics {

// One table row; rates are fractions in [0, 1] and printed as percents.
struct ReportRow {
  std::string method;
  double acc = 0.0;
  double auc = 0.0;
  double eer = 0.0;
  double acer = 0.0;
};

inline ReportRow row_from(const std::string& method, const MetricsSummary& s) {
  return {method, s.acc, s.auc, s.eer, s.acer};
}

inline std::string percent(double rate) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%5.2f", rate * 100.0);
  return buf;
}

// "ACC AUC EER ACER" as percents with two decimals, single-space separated.
inline std::string format_rates(double acc, double auc, double eer, double acer) {
  return percent(acc) + ' ' + percent(auc) + ' ' + percent(eer) + ' ' + percent(acer);
}

inline std::string format_rates(const ReportRow& r) { return format_rates(r.acc, r.auc, r.eer, r.acer); }

inline std::string format_table(const std::vector<ReportRow>& rows) {
  std::size_t w = 6;
  for (const auto& r : rows) w = std::max(w, r.method.size());
  std::ostringstream os;
  os << "Method" << std::string(w - 6, ' ') << "   ACC   AUC   EER  ACER\n";
  for (const auto& r : rows) os << r.method << std::string(w - r.method.size(), ' ') << ' ' << format_rates(r) << '\n';
  return os.str();
}

// The evaluated model first, then any comparison rows, followed by the
// operating-point details. ACER is given at the fixed threshold and at the
// EER threshold, each labeled.
inline std::string format_report(const std::string& method, const MetricsSummary& s,
                                 const std::vector<ReportRow>& comparisons = {}) {
  std::vector<ReportRow> rows{row_from(method, s)};
  rows.insert(rows.end(), comparisons.begin(), comparisons.end());
  std::ostringstream os;
  os << format_table(rows);
  char buf[256];
  std::snprintf(buf, sizeof buf, "ACER@%.2f: %s (APCER %s, BPCER %s)\n", s.threshold, percent(s.acer).c_str(),
                percent(s.apcer).c_str(), percent(s.bpcer).c_str());
  os << buf;
  std::snprintf(buf, sizeof buf, "ACER@EER-threshold %.6f: %s (APCER %s, BPCER %s)\n", s.eer_threshold,
                percent(s.at_eer_threshold.acer).c_str(), percent(s.at_eer_threshold.apcer).c_str(),
                percent(s.at_eer_threshold.bpcer).c_str());
  os << buf;
  os << "samples: " << s.n_bona_fide << " bona fide, " << s.n_attack << " attack\n";
  return os.str();
}

inline void write_roc_csv(const std::filesystem::path& path, std::span<const ScoreRecord> records) {
  std::ofstream os(path);
  if (!os) fail(ErrorCode::io, "cannot write ROC file: " + path.string());
  os << "threshold,apcer,bpcer\n";
  char buf[128];
  for (const auto& p : roc_points(records)) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", p.threshold, p.apcer, p.bpcer);
    os << buf;
  }
}

inline constexpr const char* kScoreHeader = "id,label,family,score,score_phys,score_dig";

inline void write_scores_csv(const std::filesystem::path& path, std::span<const ScoreRecord> records) {
  std::ofstream os(path);
  if (!os) fail(ErrorCode::io, "cannot write score file: " + path.string());
  os << kScoreHeader << '\n';
  char buf[128];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof buf, ",%.17g,%.17g,%.17g\n", r.score, r.score_physical, r.score_digital);
    os << r.id << ',' << r.label << ',' << r.family << buf;
  }
}

// Reads a score file back; a record is bona fide when its label is "live".
inline std::vector<ScoreRecord> read_scores_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorCode::io, "cannot open score file: " + path.string());
  std::string line;
  std::getline(is, line);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  require(line == kScoreHeader, ErrorCode::io, path.string() + ":1: expected header " + kScoreHeader);
  std::vector<ScoreRecord> out;
  for (std::size_t row = 2; std::getline(is, line); ++row) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    const std::string where = path.string() + ":" + std::to_string(row) + ": ";
    require(f.size() == 6, ErrorCode::io, where + "expected 6 fields");
    ScoreRecord r;
    r.id = f[0];
    r.label = f[1];
    r.family = f[2];
    r.bona_fide = f[1] == "live";
    try {
      r.score = std::stod(f[3]);
      r.score_physical = std::stod(f[4]);
      r.score_digital = std::stod(f[5]);
    } catch (const std::exception&) {
      fail(ErrorCode::io, where + "bad score value");
    }
    out.push_back(std::move(r));
  }
  return out;
}

// Ablation grid: one summary per (SCPG, CAA, seed) cell.
struct AblationCell {
  bool scpg = false;
  bool caa = false;
  std::uint64_t seed = 0;
  MetricsSummary summary;
};

struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation; 0 for a single value
};

inline MeanStd mean_std(const std::vector<double>& v) {
  MeanStd m;
  if (v.empty()) return m;
  for (double x : v) m.mean += x;
  m.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - m.mean) * (x - m.mean);
    m.stddev = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return m;
}

struct AblationRow {
  bool scpg = false;
  bool caa = false;
  std::size_t runs = 0;
  MeanStd acc, auc, eer, acer;
};

// Rows in the fixed order baseline, SCPG only, CAA only, both; always four,
// a cell with no runs reports zeros.
inline std::vector<AblationRow> ablation_rows(const std::vector<AblationCell>& cells) {
  std::vector<AblationRow> rows;
  for (auto [scpg, caa] : {std::pair{false, false}, {true, false}, {false, true}, {true, true}}) {
    std::vector<double> acc, auc, eer, acer;
    for (const auto& c : cells) {
      if (c.scpg != scpg || c.caa != caa) continue;
      acc.push_back(c.summary.acc);
      auc.push_back(c.summary.auc);
      eer.push_back(c.summary.eer);
      acer.push_back(c.summary.acer);
    }
    rows.push_back({scpg, caa, acc.size(), mean_std(acc), mean_std(auc), mean_std(eer), mean_std(acer)});
  }
  return rows;
}

inline std::string format_ablation(const std::vector<AblationCell>& cells) {
  auto cell = [](const MeanStd& m) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%5.2f±%4.2f", m.mean * 100.0, m.stddev * 100.0);
    return std::string(buf);
  };
  std::ostringstream os;
  os << "SCPG CAA runs  ACC         AUC         EER         ACER\n";
  for (const auto& r : ablation_rows(cells)) {
    os << (r.scpg ? "  on" : " off") << ' ' << (r.caa ? " on" : "off") << ' ';
    char runs[16];
    std::snprintf(runs, sizeof runs, "%4zu", r.runs);
    os << runs << "  " << cell(r.acc) << ' ' << cell(r.auc) << ' ' << cell(r.eer) << ' ' << cell(r.acer) << '\n';
  }
  return os.str();
}

// Direction of the ablation table: AUC full >= SCPG only >= baseline and
// ACER full <= CAA only <= baseline, on means.
struct AblationTrend {
  bool auc_ordered = false;
  bool acer_ordered = false;
};

inline AblationTrend ablation_trend(const std::vector<AblationCell>& cells) {
  const auto rows = ablation_rows(cells);
  const auto& base = rows[0];
  const auto& scpg = rows[1];
  const auto& caa = rows[2];
  const auto& full = rows[3];
  return {full.auc.mean >= scpg.auc.mean && scpg.auc.mean >= base.auc.mean,
          full.acer.mean <= caa.acer.mean && caa.acer.mean <= base.acer.mean};
}

}  // namespace spluad::metrics
