#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace hexbandit::acceptance {

struct Verdict {
  std::string id;
  std::string title;
  bool pass = false;
  std::string detail;
};

std::vector<Verdict> property_suites();

struct ExperimentOptions {
  std::filesystem::path config;  // baseline experiment config
  std::filesystem::path work_dir;
  bool reuse = false;  // keep finished runs found under work_dir
};

std::vector<Verdict> experiment_checks(const ExperimentOptions& opt);

}  // namespace hexbandit::acceptance
