#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace fivestar {

enum class CovariateKind { continuous, ordinal, nominal, binary };

std::string to_string(CovariateKind kind);
CovariateKind covariate_kind_from_string(const std::string& text);

/// One pre-specified baseline covariate.
///
/// Values are stored as doubles: continuous covariates verbatim, binary as 0/1,
/// ordinal and nominal covariates as the index of their level in `levels`
/// (for ordinal covariates the declaration order is the level order).
struct CovariateSpec {
  std::string name;
  CovariateKind kind = CovariateKind::continuous;
  std::vector<std::string> levels;

  bool categorical() const { return kind == CovariateKind::ordinal || kind == CovariateKind::nominal; }
};

enum class Arm : std::uint8_t { A, B };

struct SubjectRecord {
  std::string id;
  double time = 0.0;
  bool event = false;
  Arm arm = Arm::A;
  std::vector<double> covariates;
};

/// Validated, immutable trial data.
class TrialDataset {
 public:
  TrialDataset(std::vector<CovariateSpec> specs, std::vector<SubjectRecord> records);

  const std::vector<CovariateSpec>& specs() const { return specs_; }
  const std::vector<SubjectRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  std::size_t event_count() const;
  /// Index of the covariate called `name`; throws ValidationError when absent.
  std::size_t covariate_index(const std::string& name) const;

  std::vector<double> times() const;
  std::vector<int> events() const;
  std::vector<Arm> arms() const;
  std::vector<double> column(std::size_t covariate) const;

  TrialDataset subset(std::span<const std::size_t> rows) const;
  /// Same subjects with arm labels exchanged.
  TrialDataset swap_arms() const;

 private:
  std::vector<CovariateSpec> specs_;
  std::vector<SubjectRecord> records_;
};

/// Arm-free view of a trial. There is no accessor through which treatment
/// assignment can be recovered; ids and order match the source dataset.
class BlindedDataset {
 public:
  const std::vector<CovariateSpec>& specs() const { return specs_; }
  std::size_t size() const { return times_.size(); }
  std::size_t covariate_count() const { return specs_.size(); }
  std::span<const std::string> ids() const { return ids_; }
  std::span<const double> times() const { return times_; }
  std::span<const int> events() const { return events_; }
  std::span<const double> column(std::size_t covariate) const { return columns_.at(covariate); }
  double value(std::size_t row, std::size_t covariate) const { return columns_[covariate][row]; }
  std::size_t covariate_index(const std::string& name) const;

  BlindedDataset subset(std::span<const std::size_t> rows) const;

 private:
  friend BlindedDataset blind(const TrialDataset& data);

  std::vector<CovariateSpec> specs_;
  std::vector<std::string> ids_;
  std::vector<double> times_;
  std::vector<int> events_;
  std::vector<std::vector<double>> columns_;
};

BlindedDataset blind(const TrialDataset& data);

/// Arm label for every subject of `blinded`, looked up by id in `source`.
std::vector<Arm> rejoin_arms(const BlindedDataset& blinded, const TrialDataset& source);

/// Names of the CSV columns that carry the fixed fields, plus the arm labels.
struct ColumnMap {
  std::string id = "id";
  std::string time = "time";
  std::string event = "event";
  std::string arm = "arm";
  std::string arm_a = "A";
  std::string arm_b = "B";
};

/// Covariate declarations and column mapping, as carried by the JSON config.
struct DataSchema {
  std::vector<CovariateSpec> covariates;
  ColumnMap columns;
};

DataSchema parse_schema(const nlohmann::json& config);
nlohmann::json schema_to_json(const DataSchema& schema);

TrialDataset load_csv(const std::filesystem::path& path, const DataSchema& schema);
TrialDataset read_csv(std::istream& in, const DataSchema& schema, const std::string& source_name = "<stream>");
void write_csv(std::ostream& out, const TrialDataset& data, const ColumnMap& columns = {});

struct CovariateSummary {
  std::string name;
  CovariateKind kind = CovariateKind::continuous;
  double mean = 0.0;
  double sd = 0.0;
  double min = 0.0;
  double max = 0.0;
  std::vector<std::size_t> level_counts;
};

struct Diagnostics {
  std::size_t n = 0;
  std::size_t n_a = 0;
  std::size_t n_b = 0;
  std::size_t events_a = 0;
  std::size_t events_b = 0;
  std::vector<std::string> duplicate_ids;
  std::vector<CovariateSummary> covariates;
  std::vector<std::string> warnings;
};

Diagnostics validate(const TrialDataset& data);
nlohmann::json to_json(const Diagnostics& diagnostics);

}  // namespace fivestar
