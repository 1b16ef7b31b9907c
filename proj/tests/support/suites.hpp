#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace apn::testing {

struct SuiteResult {
  std::size_t checks = 0;
  std::vector<std::string> failures;  // first few only
  std::size_t failure_count = 0;
  double max_error = 0.0;

  bool ok() const { return failure_count == 0; }
  void expect(bool cond, const std::string& what);
  void expect_near(double got, double want, double tol, const std::string& what);
};

// Random (geometry, box) instances against the brute-force label oracles,
// plus encode/decode round trips at every grid point strictly inside the box.
SuiteResult run_label_suite(int instances, std::uint64_t seed);

// Hand-built fixtures against brute-force threshold counting.
SuiteResult run_metric_suite();

}  // namespace apn::testing
