#include <cmath>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <unordered_map>

#include <json.hpp>

#include "histctl/errors.hpp"
#include "histctl/registry.hpp"
#include "histctl/table.hpp"

namespace histctl {

using nlohmann::json;

namespace {

struct PendingRow {
  std::size_t line;
  json row;
};

const json& require(const json& row, const char* key) {
  auto it = row.find(key);
  if (it == row.end() || it->is_null()) throw ParseError(std::string("missing field '") + key + "'");
  return *it;
}

Date require_date(const json& row, const char* key) {
  const json& v = require(row, key);
  if (!v.is_string()) throw ParseError(std::string("field '") + key + "' is not a date string");
  return Date::parse(v.get<std::string>());
}

PatientRecord parse_patient(const json& row) {
  PatientRecord p;
  p.id = require(row, "id").get<std::string>();
  p.diagnosis = require_date(row, "diagnosis_date");
  p.demographics.birth_year = require(row, "birth_year").get<int>();
  const auto marital = require(row, "marital").get<std::string>();
  if (marital == "partnered")
    p.demographics.marital = Marital::partnered;
  else if (marital == "single")
    p.demographics.marital = Marital::single;
  else
    throw ParseError("unknown marital status '" + marital + "'");
  p.demographics.nordic_born = require(row, "nordic_born").get<bool>();
  if (auto it = row.find("education"); it != row.end() && !it->is_null())
    p.demographics.education = parse_education(it->get<std::string>());
  const int age = p.age_at_diagnosis();
  if (age < 18 || age > 110) throw ValidationError("age at diagnosis outside [18, 110]");
  return p;
}

void attach(PatientRecord& p, const std::string& type, const json& row) {
  if (type == "visit") {
    InpatientVisit v;
    v.admission = require_date(row, "admission");
    v.discharge = require_date(row, "discharge");
    if (v.discharge < v.admission) throw ValidationError("interval inverted");
    for (const auto& c : require(row, "icd10")) {
      auto code = normalize_icd10(c.get<std::string>());
      if (!code) throw ParseError("malformed ICD-10 code '" + c.get<std::string>() + "'");
      v.icd10.push_back(*code);
    }
    if (v.icd10.empty()) throw ValidationError("visit without diagnosis code");
    p.visits.push_back(std::move(v));
  } else if (type == "prescription") {
    Prescription rx;
    rx.dispensed = require_date(row, "date");
    const auto raw = require(row, "atc").get<std::string>();
    auto code = normalize_atc(raw);
    if (!code) throw ParseError("malformed ATC code '" + raw + "'");
    rx.atc = *code;
    rx.ddd = require(row, "ddd").get<double>();
    if (!(rx.ddd >= 0.0)) throw ValidationError("negative ddd_count");
    p.prescriptions.push_back(std::move(rx));
  } else if (type == "ses") {
    const json& values = require(row, "values");
    for (auto it = values.begin(); it != values.end(); ++it) {
      auto idx = SocioPanel::index_of(it.key());
      if (!idx) throw ParseError("unknown socioeconomic variable '" + it.key() + "'");
      p.ses.values[*idx] = it->is_null() ? std::nan("") : it->get<double>();
    }
  } else if (type == "death") {
    if (p.death) throw ValidationError("more than one death row");
    const Date d = require_date(row, "date");
    if (d < p.diagnosis) throw ValidationError("death before diagnosis");
    p.death = d;
  } else {
    throw ParseError("unknown entity type '" + type + "'");
  }
}

}  // namespace

LoadResult load_registry(std::istream& in) {
  LoadResult result;
  std::vector<PatientRecord> records;
  std::unordered_map<std::string, std::size_t> by_id;
  std::unordered_map<std::string, std::size_t> rejected;  // id -> line of rejected patient row
  std::vector<PendingRow> events;

  auto row_error = [&](std::size_t line, const std::string& id, const std::string& msg) {
    result.errors.push_back({line, id, msg});
  };

  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.empty() || text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json row;
    try {
      row = json::parse(text);
    } catch (const json::exception& e) {
      row_error(line, "", std::string("malformed JSON: ") + e.what());
      continue;
    }
    const std::string id = row.contains("id") && row["id"].is_string() ? row["id"].get<std::string>() : "";
    const std::string type = row.contains("type") && row["type"].is_string() ? row["type"].get<std::string>() : "";
    if (type != "patient") {
      events.push_back({line, std::move(row)});
      continue;
    }
    if (by_id.count(id) || rejected.count(id))
      throw ValidationError("duplicate patient_id " + id + " at line " + std::to_string(line));
    try {
      records.push_back(parse_patient(row));
      by_id.emplace(id, records.size() - 1);
    } catch (const std::exception& e) {
      rejected.emplace(id, line);
      row_error(line, id, e.what());
    }
  }

  for (auto& ev : events) {
    const json& row = ev.row;
    const std::string id = row.contains("id") && row["id"].is_string() ? row["id"].get<std::string>() : "";
    const std::string type = row.contains("type") && row["type"].is_string() ? row["type"].get<std::string>() : "";
    auto it = by_id.find(id);
    if (it == by_id.end()) {
      row_error(ev.line, id, rejected.count(id) ? "patient row was rejected" : "unknown patient_id");
      continue;
    }
    try {
      attach(records[it->second], type, row);
    } catch (const std::exception& e) {
      row_error(ev.line, id, e.what());
    }
  }
  result.registry = Registry::from_records(std::move(records));
  return result;
}

LoadResult load_registry_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open registry file " + path);
  return load_registry(in);
}

void write_registry(std::ostream& out, const Registry& registry) {
  for (const auto& p : registry.patients()) {
    json row = {{"type", "patient"},
                {"id", p.id},
                {"diagnosis_date", p.diagnosis.iso()},
                {"birth_year", p.demographics.birth_year},
                {"marital", to_string(p.demographics.marital)},
                {"nordic_born", p.demographics.nordic_born}};
    row["education"] = p.demographics.education
                           ? json(std::string(to_string(*p.demographics.education)))
                           : json(nullptr);
    out << row.dump() << '\n';
    json ses = json::object();
    for (std::size_t i = 0; i < SocioPanel::kSize; ++i)
      ses[SocioPanel::names()[i]] = p.ses.missing(i) ? json(nullptr) : json(p.ses.values[i]);
    out << json{{"type", "ses"}, {"id", p.id}, {"values", ses}}.dump() << '\n';
    for (const auto& v : p.visits)
      out << json{{"type", "visit"},
                  {"id", p.id},
                  {"admission", v.admission.iso()},
                  {"discharge", v.discharge.iso()},
                  {"icd10", v.icd10}}
                 .dump()
          << '\n';
    for (const auto& rx : p.prescriptions)
      out << json{{"type", "prescription"},
                  {"id", p.id},
                  {"date", rx.dispensed.iso()},
                  {"atc", rx.atc},
                  {"ddd", rx.ddd}}
                 .dump()
          << '\n';
    if (p.death)
      out << json{{"type", "death"}, {"id", p.id}, {"date", p.death->iso()}}.dump() << '\n';
  }
}

void export_registry_csv(const std::string& directory, const Registry& registry) {
  namespace fs = std::filesystem;
  fs::create_directories(directory);
  CsvWriter patients((fs::path(directory) / "patients.csv").string(),
                     {"patient_id", "diagnosis_date", "birth_year", "marital", "nordic_born", "education"});
  CsvWriter visits((fs::path(directory) / "visits.csv").string(),
                   {"patient_id", "admission", "discharge", "icd10"});
  CsvWriter rxs((fs::path(directory) / "prescriptions.csv").string(),
                {"patient_id", "dispense_date", "atc", "ddd"});
  std::vector<std::string> ses_header = {"patient_id"};
  for (const auto& n : SocioPanel::names()) ses_header.push_back(n);
  CsvWriter ses((fs::path(directory) / "ses.csv").string(), ses_header);
  CsvWriter deaths((fs::path(directory) / "deaths.csv").string(), {"patient_id", "death_date"});

  for (const auto& p : registry.patients()) {
    patients.row({p.id, p.diagnosis.iso(), std::to_string(p.demographics.birth_year),
                  std::string(to_string(p.demographics.marital)),
                  p.demographics.nordic_born ? "1" : "0",
                  p.demographics.education ? std::string(to_string(*p.demographics.education)) : ""});
    for (const auto& v : p.visits) {
      std::string codes;
      for (const auto& c : v.icd10) codes += (codes.empty() ? "" : ";") + c;
      visits.row({p.id, v.admission.iso(), v.discharge.iso(), codes});
    }
    for (const auto& rx : p.prescriptions)
      rxs.row({p.id, rx.dispensed.iso(), rx.atc, format_number(rx.ddd)});
    std::vector<std::string> cells = {p.id};
    for (std::size_t i = 0; i < SocioPanel::kSize; ++i)
      cells.push_back(p.ses.missing(i) ? "" : format_number(p.ses.values[i]));
    ses.row(cells);
    if (p.death) deaths.row({p.id, p.death->iso()});
  }
}

}  // namespace histctl
