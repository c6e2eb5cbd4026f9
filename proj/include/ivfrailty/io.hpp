#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ivfrailty/mcem.hpp"
#include "ivfrailty/model.hpp"
#include "ivfrailty/simulation.hpp"

namespace ivfrailty {

/// Parsed `time,status,treatment,x1..xp,z1..zK` table. Columns are found by
/// header name; x and z columns must be numbered consecutively from 1.
struct CsvTable {
  std::vector<SubjectRecord> records;
  Eigen::Index p = 0;
  Eigen::Index K = 0;
};

CsvTable read_subjects_csv(std::istream& in);
CsvTable read_subjects_csv(const std::string& path);
void write_subjects_csv(std::ostream& out, const Dataset& dataset);

nlohmann::json fit_to_json(const FitResult& fit, const std::optional<BootstrapResult>& bootstrap = std::nullopt);
/// parameter,estimate[,se] rows.
void write_fit_csv(std::ostream& out, const FitResult& fit, const std::optional<BootstrapResult>& bootstrap);

inline constexpr const char* kSummaryCsvHeader =
    "scenario,estimator,parameter,truth,n_ok,n_failed,mean,sd,median,min,max,rmse,cv";

nlohmann::json summaries_to_json(const SimulationReport& report);
void write_summaries_csv(std::ostream& out, const SimulationReport& report);
/// Mean(SD) / Median(Range) / RMSE layout, one line per estimator.
void write_summary_table(std::ostream& out, const SimulationReport& report);

}  // namespace ivfrailty
