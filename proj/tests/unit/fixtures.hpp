#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "histctl/registry.hpp"

namespace fixtures {

inline histctl::PatientRecord patient(const std::string& id, histctl::Date dx, int birth_year = 1940) {
  histctl::PatientRecord p;
  p.id = id;
  p.diagnosis = dx;
  p.demographics.birth_year = birth_year;
  p.demographics.education = histctl::Education::secondary;
  return p;
}

inline void visit(histctl::PatientRecord& p, histctl::Date admit, std::vector<std::string> codes,
                  int days = 2) {
  p.visits.push_back({admit, admit + days, std::move(codes)});
}

inline void rx(histctl::PatientRecord& p, histctl::Date when, const std::string& atc,
               double ddd = 30.0) {
  p.prescriptions.push_back({when, atc, ddd});
}

// Fresh, empty directory under the system temp path.
inline std::filesystem::path temp_dir(const std::string& tag) {
  static std::mt19937_64 rng(std::random_device{}());
  auto dir = std::filesystem::temp_directory_path() /
             ("histctl-" + tag + "-" + std::to_string(rng() % 1000000007ULL));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace fixtures
