#include "ivfrailty/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace ivfrailty {

namespace {

std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream row(line);
  while (std::getline(row, cell, ',')) {
    const auto first = cell.find_first_not_of(" \t\r");
    const auto last = cell.find_last_not_of(" \t\r");
    cells.push_back(first == std::string::npos ? std::string() : cell.substr(first, last - first + 1));
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_number(const std::string& text, std::size_t line, const std::string& column) {
  double value = 0.0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw Error(ErrorKind::InputFormat,
                "line " + std::to_string(line) + ", column '" + column + "': not a number: '" + text + "'");
  }
  return value;
}

bool parse_binary(const std::string& text, std::size_t line, const std::string& column) {
  const double v = parse_number(text, line, column);
  if (v != 0.0 && v != 1.0) {
    throw Error(ErrorKind::InputFormat, "line " + std::to_string(line) + ", column '" + column + "' must be 0 or 1");
  }
  return v == 1.0;
}

// Numbered columns prefix1..prefixN, in order; returns their positions.
std::vector<std::size_t> numbered_columns(const std::map<std::string, std::size_t>& header, const std::string& prefix) {
  std::vector<std::size_t> out;
  for (std::size_t k = 1;; ++k) {
    auto it = header.find(prefix + std::to_string(k));
    if (it == header.end()) break;
    out.push_back(it->second);
  }
  for (const auto& [name, pos] : header) {
    if (name.size() > prefix.size() && name.compare(0, prefix.size(), prefix) == 0 &&
        name.find_first_not_of("0123456789", prefix.size()) == std::string::npos) {
      const auto k = std::stoul(name.substr(prefix.size()));
      if (k == 0 || k > out.size()) {
        throw Error(ErrorKind::InputFormat, "column '" + name + "' is not numbered consecutively from " + prefix + "1");
      }
    }
  }
  return out;
}

std::string format_double(double v) {
  if (!std::isfinite(v)) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

nlohmann::json vector_json(const VectorXd& v) { return nlohmann::json(std::vector<double>(v.begin(), v.end())); }

}  // namespace

CsvTable read_subjects_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::InputFormat, "empty input: header row required");
  const auto names = split_row(line);
  std::map<std::string, std::size_t> header;
  for (std::size_t c = 0; c < names.size(); ++c) {
    if (!header.emplace(names[c], c).second) throw Error(ErrorKind::InputFormat, "duplicate column '" + names[c] + "'");
  }
  for (const char* required : {"time", "status", "treatment"}) {
    if (!header.count(required)) throw Error(ErrorKind::InputFormat, std::string("missing required column '") + required + "'");
  }
  const auto xs = numbered_columns(header, "x");
  const auto zs = numbered_columns(header, "z");
  if (zs.empty()) throw Error(ErrorKind::InputFormat, "missing instrument columns 'z1'..'zK'");
  if (header.size() != 3 + xs.size() + zs.size()) {
    for (const auto& n : names) {
      if (n != "time" && n != "status" && n != "treatment" && n.front() != 'x' && n.front() != 'z') {
        throw Error(ErrorKind::InputFormat, "unexpected column '" + n + "'");
      }
    }
  }

  CsvTable table;
  table.p = static_cast<Eigen::Index>(xs.size());
  table.K = static_cast<Eigen::Index>(zs.size());
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_row(line);
    if (cells.size() != names.size()) {
      throw Error(ErrorKind::InputFormat, "line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                                              " fields, header has " + std::to_string(names.size()));
    }
    SubjectRecord r;
    r.time = parse_number(cells[header.at("time")], line_no, "time");
    r.event = parse_binary(cells[header.at("status")], line_no, "status");
    r.treated = parse_binary(cells[header.at("treatment")], line_no, "treatment");
    r.covariates.resize(table.p);
    r.instruments.resize(table.K);
    for (std::size_t j = 0; j < xs.size(); ++j) r.covariates[j] = parse_number(cells[xs[j]], line_no, names[xs[j]]);
    for (std::size_t k = 0; k < zs.size(); ++k) r.instruments[k] = parse_number(cells[zs[k]], line_no, names[zs[k]]);
    table.records.push_back(std::move(r));
  }
  return table;
}

CsvTable read_subjects_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::InputFormat, "cannot open '" + path + "'");
  return read_subjects_csv(in);
}

void write_subjects_csv(std::ostream& out, const Dataset& dataset) {
  out << "time,status,treatment";
  for (Eigen::Index j = 0; j < dataset.p; ++j) out << ",x" << j + 1;
  for (Eigen::Index k = 0; k < dataset.K; ++k) out << ",z" << k + 1;
  out << '\n';
  char buf[40];
  const auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  for (const auto& r : dataset.records) {
    out << num(r.time) << ',' << (r.event ? 1 : 0) << ',' << (r.treated ? 1 : 0);
    for (double v : r.covariates) out << ',' << num(v);
    for (double v : r.instruments) out << ',' << num(v);
    out << '\n';
  }
}

nlohmann::json fit_to_json(const FitResult& fit, const std::optional<BootstrapResult>& bootstrap) {
  nlohmann::json j;
  j["alpha"] = vector_json(fit.parameters.alpha);
  j["alpha_terms"] = fit.treatment_terms;
  j["beta"] = vector_json(fit.parameters.beta);
  j["beta_terms"] = fit.hazard_terms;
  j["rho"] = fit.parameters.rho;
  j["sigma_u"] = fit.parameters.sigma_u;
  j["hazard_ratio"] = fit.hazard_ratio;
  j["iterations"] = fit.iterations;
  j["converged"] = fit.converged;
  j["final_observed_loglik"] = number_or_null(fit.final_observed_loglik);
  j["draws"] = fit.draws == DrawMode::Frozen ? "frozen" : "fresh";
  j["baseline"] = {{"event_times", std::vector<double>(fit.baseline.event_times().begin(), fit.baseline.event_times().end())},
                   {"jumps", std::vector<double>(fit.baseline.jumps().begin(), fit.baseline.jumps().end())}};
  j["warnings"] = fit.warnings;
  if (bootstrap) {
    j["bootstrap"] = {{"alpha_se", vector_json(bootstrap->alpha_se)},
                      {"beta_se", vector_json(bootstrap->beta_se)},
                      {"rho_se", bootstrap->rho_se},
                      {"sigma_u_se", bootstrap->sigma_u_se},
                      {"log_hazard_ratio_se", bootstrap->log_hazard_ratio_se},
                      {"successes", bootstrap->successes},
                      {"failures", bootstrap->failures}};
  }
  return j;
}

void write_fit_csv(std::ostream& out, const FitResult& fit, const std::optional<BootstrapResult>& bootstrap) {
  out << "parameter,estimate" << (bootstrap ? ",se" : "") << '\n';
  const auto row = [&](const std::string& name, double est, std::optional<double> se) {
    out << name << ',' << format_double(est);
    if (bootstrap) out << ',' << (se ? format_double(*se) : "NA");
    out << '\n';
  };
  for (Eigen::Index j = 0; j < fit.parameters.alpha.size(); ++j) {
    row("alpha[" + fit.treatment_terms[static_cast<std::size_t>(j)] + "]", fit.parameters.alpha[j],
        bootstrap ? std::optional(bootstrap->alpha_se[j]) : std::nullopt);
  }
  for (Eigen::Index j = 0; j < fit.parameters.beta.size(); ++j) {
    row("beta[" + fit.hazard_terms[static_cast<std::size_t>(j)] + "]", fit.parameters.beta[j],
        bootstrap ? std::optional(bootstrap->beta_se[j]) : std::nullopt);
  }
  row("rho", fit.parameters.rho, bootstrap ? std::optional(bootstrap->rho_se) : std::nullopt);
  row("sigma_u", fit.parameters.sigma_u, bootstrap ? std::optional(bootstrap->sigma_u_se) : std::nullopt);
  row("hazard_ratio", fit.hazard_ratio, std::nullopt);
}

nlohmann::json summaries_to_json(const SimulationReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& s : report.summaries) {
    rows.push_back({{"scenario", report.spec.id},
                    {"estimator", s.estimator},
                    {"parameter", s.parameter},
                    {"truth", number_or_null(s.truth)},
                    {"n_ok", s.n_ok},
                    {"n_failed", s.n_failed},
                    {"mean", number_or_null(s.mean)},
                    {"sd", number_or_null(s.sd)},
                    {"sd_defined", s.sd_defined},
                    {"median", number_or_null(s.median)},
                    {"min", number_or_null(s.min)},
                    {"max", number_or_null(s.max)},
                    {"rmse", number_or_null(s.rmse)},
                    {"cv", number_or_null(s.cv)}});
  }
  double censoring = 0.0;
  for (const auto& r : report.records) censoring += r.censoring_fraction;
  censoring /= static_cast<double>(std::max<std::size_t>(report.records.size(), 1));
  return {{"scenario", report.spec.id},
          {"n", report.spec.n},
          {"reps", report.reps},
          {"mean_censoring_fraction", censoring},
          {"summaries", rows}};
}

void write_summaries_csv(std::ostream& out, const SimulationReport& report) {
  out << kSummaryCsvHeader << '\n';
  for (const auto& s : report.summaries) {
    out << report.spec.id << ',' << s.estimator << ',' << s.parameter << ',' << format_double(s.truth) << ','
        << s.n_ok << ',' << s.n_failed << ',' << format_double(s.mean) << ','
        << (s.sd_defined ? format_double(s.sd) : "NA") << ',' << format_double(s.median) << ','
        << format_double(s.min) << ',' << format_double(s.max) << ',' << format_double(s.rmse) << ','
        << (s.sd_defined ? format_double(s.cv) : "NA") << '\n';
  }
}

void write_summary_table(std::ostream& out, const SimulationReport& report) {
  char line[256];
  std::snprintf(line, sizeof line, "Scenario #%d  n=%d  reps=%d\n", report.spec.id, report.spec.n, report.reps);
  out << line;
  std::snprintf(line, sizeof line, "%-22s %-12s %-18s %-22s %-8s %s\n", "Method", "Parameter", "Mean(SD)",
                "Median(Range)", "RMSE", "Failed");
  out << line;
  for (const auto& s : report.summaries) {
    std::snprintf(line, sizeof line, "%-22s %-12s %.3f(%.3f)%*s %.3f(%.2f-%.2f)%*s %-8.3f %d\n", s.estimator.c_str(),
                  s.parameter.c_str(), s.mean, s.sd, 4, "", s.median, s.min, s.max, 4, "", s.rmse, s.n_failed);
    out << line;
  }
}

}  // namespace ivfrailty
