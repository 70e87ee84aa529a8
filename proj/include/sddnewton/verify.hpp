#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

namespace sddnewton {

struct VerifyOptions {
  bool quick = false;         ///< subsample instances
  bool inject_fault = false;  ///< corrupt every SDD chain (must turn the sdd suite red)
  std::uint64_t seed = 1;
};

struct PropertyResult {
  std::string suite;
  std::string property;
  bool passed = false;
  int cases = 0;
  std::string detail;
};

struct VerifyReport {
  std::vector<PropertyResult> results;
  int failures() const;
};

/// suite: sdd | dual | newton | all. Throws ConfigError for other names.
VerifyReport run_verify(const std::string& suite, const VerifyOptions& options);

/// One line per property: suite, property, PASS/FAIL, cases, detail.
void print_matrix(const VerifyReport& report, std::ostream& out);

}  // namespace sddnewton
