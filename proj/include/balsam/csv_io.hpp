#pragma once

#include "balsam/model.hpp"

#include <string>
#include <vector>

namespace balsam {

struct IngestReport {
  int subjects = 0;
  int measurements = 0;
  /// Longitudinal rows dropped because z was missing.
  int dropped_missing = 0;
  std::vector<std::string> covariate_names;
};

struct IngestOptions {
  std::vector<std::string> covariate_columns;
  bool sqrt_transform = false;
};

/**
 * Reads survival.csv (id, t, delta, covariates...) and longitudinal.csv
 * (id, time, z) into subject records ordered as in the survival file.
 * All problems are collected and raised together as one DataError that
 * lists file names and row numbers.
 */
std::vector<SubjectRecord> read_dataset(const std::string& longitudinal_path,
                                        const std::string& survival_path,
                                        const IngestOptions& options, IngestReport* report = nullptr);

/// Same as read_dataset but from in-memory CSV text.
std::vector<SubjectRecord> parse_dataset(const std::string& longitudinal_csv,
                                         const std::string& survival_csv,
                                         const IngestOptions& options,
                                         IngestReport* report = nullptr);

std::string longitudinal_csv(const std::vector<SubjectRecord>& subjects);
std::string survival_csv(const std::vector<SubjectRecord>& subjects,
                         const std::vector<std::string>& covariate_names = {});

/// Writes through a temporary file and a rename so readers never see a partial file.
void write_file_atomic(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

/// Splits one CSV line; double-quoted fields may contain commas.
std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace balsam
