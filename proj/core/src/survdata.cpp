#include "fivestar/survdata.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <unordered_map>

#include "fivestar/error.hpp"
#include "fivestar/stats.hpp"

namespace fivestar {

namespace {

void check_specs(const std::vector<CovariateSpec>& specs) {
  std::set<std::string> seen;
  for (const auto& spec : specs) {
    if (spec.name.empty()) throw ValidationError("covariate with empty name");
    if (!seen.insert(spec.name).second) throw ValidationError("duplicate covariate name '" + spec.name + "'");
    if (spec.categorical()) {
      if (spec.levels.empty()) throw ValidationError("covariate '" + spec.name + "' declares no levels");
      std::set<std::string> levels(spec.levels.begin(), spec.levels.end());
      if (levels.size() != spec.levels.size())
        throw ValidationError("covariate '" + spec.name + "' declares a level twice");
    }
  }
}

bool conforms(const CovariateSpec& spec, double value) {
  if (!std::isfinite(value)) return false;
  switch (spec.kind) {
    case CovariateKind::continuous:
      return true;
    case CovariateKind::binary:
      return value == 0.0 || value == 1.0;
    case CovariateKind::ordinal:
    case CovariateKind::nominal:
      return value >= 0.0 && value == std::floor(value) && value < static_cast<double>(spec.levels.size());
  }
  return false;
}

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(trim(cur));
  return fields;
}

bool parse_double(const std::string& text, double& out) {
  if (text.empty()) return false;
  const char* first = text.data();
  const char* last = first + text.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last && std::isfinite(out);
}

std::string where(const std::string& source, std::size_t line, const std::string& column) {
  return source + ": row " + std::to_string(line) + ", column '" + column + "'";
}

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

std::string to_string(CovariateKind kind) {
  switch (kind) {
    case CovariateKind::continuous: return "continuous";
    case CovariateKind::ordinal: return "ordinal";
    case CovariateKind::nominal: return "nominal";
    case CovariateKind::binary: return "binary";
  }
  return "continuous";
}

CovariateKind covariate_kind_from_string(const std::string& text) {
  if (text == "continuous") return CovariateKind::continuous;
  if (text == "ordinal") return CovariateKind::ordinal;
  if (text == "nominal") return CovariateKind::nominal;
  if (text == "binary") return CovariateKind::binary;
  throw ValidationError("unknown covariate kind '" + text + "'");
}

TrialDataset::TrialDataset(std::vector<CovariateSpec> specs, std::vector<SubjectRecord> records)
    : specs_(std::move(specs)), records_(std::move(records)) {
  check_specs(specs_);
  if (records_.empty()) throw ValidationError("dataset has no subjects");
  std::size_t events = 0;
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& r = records_[i];
    if (!std::isfinite(r.time)) throw ValidationError("subject '" + r.id + "': non-finite time");
    if (r.time < 0.0) throw ValidationError("subject '" + r.id + "': negative time");
    if (r.covariates.size() != specs_.size())
      throw ValidationError("subject '" + r.id + "': expected " + std::to_string(specs_.size()) + " covariates");
    for (std::size_t j = 0; j < specs_.size(); ++j) {
      if (!conforms(specs_[j], r.covariates[j]))
        throw ValidationError("subject '" + r.id + "': value of '" + specs_[j].name + "' does not conform to its kind");
    }
    events += r.event ? 1 : 0;
  }
  if (events == 0) throw ValidationError("dataset has no events");
}

std::size_t TrialDataset::event_count() const {
  return static_cast<std::size_t>(std::count_if(records_.begin(), records_.end(), [](const auto& r) { return r.event; }));
}

std::size_t TrialDataset::covariate_index(const std::string& name) const {
  for (std::size_t j = 0; j < specs_.size(); ++j)
    if (specs_[j].name == name) return j;
  throw ValidationError("unknown covariate '" + name + "'");
}

std::vector<double> TrialDataset::times() const {
  std::vector<double> out;
  out.reserve(records_.size());
  for (const auto& r : records_) out.push_back(r.time);
  return out;
}

std::vector<int> TrialDataset::events() const {
  std::vector<int> out;
  out.reserve(records_.size());
  for (const auto& r : records_) out.push_back(r.event ? 1 : 0);
  return out;
}

std::vector<Arm> TrialDataset::arms() const {
  std::vector<Arm> out;
  out.reserve(records_.size());
  for (const auto& r : records_) out.push_back(r.arm);
  return out;
}

std::vector<double> TrialDataset::column(std::size_t covariate) const {
  if (covariate >= specs_.size()) throw ValidationError("covariate index out of range");
  std::vector<double> out;
  out.reserve(records_.size());
  for (const auto& r : records_) out.push_back(r.covariates[covariate]);
  return out;
}

TrialDataset TrialDataset::subset(std::span<const std::size_t> rows) const {
  std::vector<SubjectRecord> picked;
  picked.reserve(rows.size());
  for (auto i : rows) picked.push_back(records_.at(i));
  return TrialDataset(specs_, std::move(picked));
}

TrialDataset TrialDataset::swap_arms() const {
  auto copy = records_;
  for (auto& r : copy) r.arm = r.arm == Arm::A ? Arm::B : Arm::A;
  return TrialDataset(specs_, std::move(copy));
}

BlindedDataset blind(const TrialDataset& data) {
  BlindedDataset out;
  out.specs_ = data.specs();
  const auto& recs = data.records();
  out.ids_.reserve(recs.size());
  out.times_.reserve(recs.size());
  out.events_.reserve(recs.size());
  out.columns_.assign(out.specs_.size(), std::vector<double>(recs.size()));
  for (std::size_t i = 0; i < recs.size(); ++i) {
    out.ids_.push_back(recs[i].id);
    out.times_.push_back(recs[i].time);
    out.events_.push_back(recs[i].event ? 1 : 0);
    for (std::size_t j = 0; j < out.specs_.size(); ++j) out.columns_[j][i] = recs[i].covariates[j];
  }
  return out;
}

std::size_t BlindedDataset::covariate_index(const std::string& name) const {
  for (std::size_t j = 0; j < specs_.size(); ++j)
    if (specs_[j].name == name) return j;
  throw ValidationError("unknown covariate '" + name + "'");
}

BlindedDataset BlindedDataset::subset(std::span<const std::size_t> rows) const {
  BlindedDataset out;
  out.specs_ = specs_;
  out.columns_.assign(specs_.size(), {});
  for (auto& c : out.columns_) c.reserve(rows.size());
  for (auto i : rows) {
    out.ids_.push_back(ids_.at(i));
    out.times_.push_back(times_[i]);
    out.events_.push_back(events_[i]);
    for (std::size_t j = 0; j < specs_.size(); ++j) out.columns_[j].push_back(columns_[j][i]);
  }
  return out;
}

std::vector<Arm> rejoin_arms(const BlindedDataset& blinded, const TrialDataset& source) {
  std::unordered_map<std::string, Arm> by_id;
  by_id.reserve(source.size());
  for (const auto& r : source.records()) {
    if (!by_id.emplace(r.id, r.arm).second) throw ValidationError("duplicate id '" + r.id + "' prevents unblinding");
  }
  std::vector<Arm> arms;
  arms.reserve(blinded.size());
  for (const auto& id : blinded.ids()) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw ValidationError("id '" + id + "' not present in source dataset");
    arms.push_back(it->second);
  }
  return arms;
}

DataSchema parse_schema(const nlohmann::json& config) {
  DataSchema schema;
  if (config.contains("columns")) {
    const auto& c = config.at("columns");
    schema.columns.id = c.value("id", schema.columns.id);
    schema.columns.time = c.value("time", schema.columns.time);
    schema.columns.event = c.value("event", schema.columns.event);
    schema.columns.arm = c.value("arm", schema.columns.arm);
    schema.columns.arm_a = c.value("arm_a", schema.columns.arm_a);
    schema.columns.arm_b = c.value("arm_b", schema.columns.arm_b);
  }
  if (schema.columns.arm_a == schema.columns.arm_b) throw ValidationError("arm labels must differ");
  if (!config.contains("covariates") || !config.at("covariates").is_array())
    throw ValidationError("config must declare a 'covariates' array");
  for (const auto& item : config.at("covariates")) {
    CovariateSpec spec;
    spec.name = item.at("name").get<std::string>();
    spec.kind = covariate_kind_from_string(item.value("kind", std::string("continuous")));
    if (item.contains("levels")) spec.levels = item.at("levels").get<std::vector<std::string>>();
    schema.covariates.push_back(std::move(spec));
  }
  check_specs(schema.covariates);
  return schema;
}

nlohmann::json schema_to_json(const DataSchema& schema) {
  nlohmann::json j;
  j["columns"] = {{"id", schema.columns.id},       {"time", schema.columns.time},
                  {"event", schema.columns.event}, {"arm", schema.columns.arm},
                  {"arm_a", schema.columns.arm_a}, {"arm_b", schema.columns.arm_b}};
  j["covariates"] = nlohmann::json::array();
  for (const auto& s : schema.covariates) {
    nlohmann::json c = {{"name", s.name}, {"kind", to_string(s.kind)}};
    if (s.categorical()) c["levels"] = s.levels;
    j["covariates"].push_back(std::move(c));
  }
  return j;
}

TrialDataset load_csv(const std::filesystem::path& path, const DataSchema& schema) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path.string() + "'");
  return read_csv(in, schema, path.string());
}

TrialDataset read_csv(std::istream& in, const DataSchema& schema, const std::string& source_name) {
  check_specs(schema.covariates);
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(source_name + ": missing header row");
  auto header = split_csv_line(line);
  std::unordered_map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < header.size(); ++i) pos.emplace(header[i], i);
  auto column_of = [&](const std::string& name) {
    auto it = pos.find(name);
    if (it == pos.end()) throw ValidationError(source_name + ": missing column '" + name + "'");
    return it->second;
  };
  const auto& cm = schema.columns;
  const std::size_t c_id = column_of(cm.id), c_time = column_of(cm.time), c_event = column_of(cm.event),
                    c_arm = column_of(cm.arm);
  std::vector<std::size_t> c_cov;
  for (const auto& spec : schema.covariates) c_cov.push_back(column_of(spec.name));

  std::vector<SubjectRecord> records;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw ValidationError(source_name + ": row " + std::to_string(row) + " has " + std::to_string(fields.size()) +
                            " fields, header has " + std::to_string(header.size()));
    SubjectRecord r;
    r.id = fields[c_id];
    if (r.id.empty()) throw ValidationError(where(source_name, row, cm.id) + ": empty id");
    if (!parse_double(fields[c_time], r.time))
      throw ValidationError(where(source_name, row, cm.time) + ": unparseable time '" + fields[c_time] + "'");
    if (r.time < 0.0) throw ValidationError(where(source_name, row, cm.time) + ": negative time");
    const auto& ev = fields[c_event];
    if (ev == "1") r.event = true;
    else if (ev == "0") r.event = false;
    else throw ValidationError(where(source_name, row, cm.event) + ": event must be 0 or 1, got '" + ev + "'");
    const auto& arm = fields[c_arm];
    if (arm == cm.arm_a) r.arm = Arm::A;
    else if (arm == cm.arm_b) r.arm = Arm::B;
    else throw ValidationError(where(source_name, row, cm.arm) + ": unknown arm '" + arm + "'");

    r.covariates.reserve(schema.covariates.size());
    for (std::size_t j = 0; j < schema.covariates.size(); ++j) {
      const auto& spec = schema.covariates[j];
      const auto& text = fields[c_cov[j]];
      if (text.empty() || text == "NA")
        throw ValidationError(where(source_name, row, spec.name) + ": missing covariate value");
      double value = 0.0;
      switch (spec.kind) {
        case CovariateKind::continuous:
          if (!parse_double(text, value))
            throw ValidationError(where(source_name, row, spec.name) + ": unparseable value '" + text + "'");
          break;
        case CovariateKind::binary:
          if (text == "1") value = 1.0;
          else if (text == "0") value = 0.0;
          else throw ValidationError(where(source_name, row, spec.name) + ": binary value must be 0 or 1, got '" + text + "'");
          break;
        case CovariateKind::ordinal:
        case CovariateKind::nominal: {
          auto it = std::find(spec.levels.begin(), spec.levels.end(), text);
          if (it == spec.levels.end())
            throw ValidationError(where(source_name, row, spec.name) + ": unknown level '" + text + "'");
          value = static_cast<double>(it - spec.levels.begin());
          break;
        }
      }
      r.covariates.push_back(value);
    }
    records.push_back(std::move(r));
  }
  return TrialDataset(schema.covariates, std::move(records));
}

void write_csv(std::ostream& out, const TrialDataset& data, const ColumnMap& columns) {
  out << columns.id << ',' << columns.time << ',' << columns.event << ',' << columns.arm;
  for (const auto& s : data.specs()) out << ',' << s.name;
  out << '\n';
  for (const auto& r : data.records()) {
    out << r.id << ',' << format_double(r.time) << ',' << (r.event ? 1 : 0) << ','
        << (r.arm == Arm::A ? columns.arm_a : columns.arm_b);
    for (std::size_t j = 0; j < data.specs().size(); ++j) {
      const auto& spec = data.specs()[j];
      double v = r.covariates[j];
      out << ',';
      if (spec.categorical()) out << spec.levels[static_cast<std::size_t>(v)];
      else if (spec.kind == CovariateKind::binary) out << (v != 0.0 ? 1 : 0);
      else out << format_double(v);
    }
    out << '\n';
  }
}

Diagnostics validate(const TrialDataset& data) {
  Diagnostics d;
  d.n = data.size();
  std::unordered_map<std::string, std::size_t> id_count;
  for (const auto& r : data.records()) {
    if (r.arm == Arm::A) {
      ++d.n_a;
      d.events_a += r.event ? 1 : 0;
    } else {
      ++d.n_b;
      d.events_b += r.event ? 1 : 0;
    }
    ++id_count[r.id];
  }
  std::set<std::string> dups;
  for (const auto& [id, count] : id_count)
    if (count > 1) dups.insert(id);
  d.duplicate_ids.assign(dups.begin(), dups.end());
  if (!d.duplicate_ids.empty()) d.warnings.push_back("duplicate subject ids present");
  if (d.n_a == 0 || d.n_b == 0) d.warnings.push_back("only one arm present");
  if (d.n_a > 0 && d.events_a == 0) d.warnings.push_back("arm A has zero events");
  if (d.n_b > 0 && d.events_b == 0) d.warnings.push_back("arm B has zero events");

  for (std::size_t j = 0; j < data.specs().size(); ++j) {
    const auto& spec = data.specs()[j];
    auto col = data.column(j);
    CovariateSummary s;
    s.name = spec.name;
    s.kind = spec.kind;
    s.mean = mean(col);
    s.sd = sample_sd(col);
    s.min = *std::min_element(col.begin(), col.end());
    s.max = *std::max_element(col.begin(), col.end());
    if (spec.categorical() || spec.kind == CovariateKind::binary) {
      s.level_counts.assign(spec.kind == CovariateKind::binary ? 2 : spec.levels.size(), 0);
      for (double v : col) ++s.level_counts[static_cast<std::size_t>(v)];
    }
    if (s.sd == 0.0) d.warnings.push_back("covariate '" + spec.name + "' is constant");
    d.covariates.push_back(std::move(s));
  }
  return d;
}

nlohmann::json to_json(const Diagnostics& d) {
  nlohmann::json j;
  j["n"] = d.n;
  j["n_a"] = d.n_a;
  j["n_b"] = d.n_b;
  j["events_a"] = d.events_a;
  j["events_b"] = d.events_b;
  j["duplicate_ids"] = d.duplicate_ids;
  j["warnings"] = d.warnings;
  j["covariates"] = nlohmann::json::array();
  for (const auto& c : d.covariates) {
    nlohmann::json cj = {{"name", c.name}, {"kind", to_string(c.kind)}, {"mean", c.mean},
                         {"sd", c.sd},     {"min", c.min},              {"max", c.max}};
    if (!c.level_counts.empty()) cj["level_counts"] = c.level_counts;
    j["covariates"].push_back(std::move(cj));
  }
  return j;
}

}  // namespace fivestar
