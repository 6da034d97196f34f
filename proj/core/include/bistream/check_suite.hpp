#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace bistream {

struct CheckResult {
  std::string name;
  double max_rel_err;
  double tolerance;
  bool pass;
};

/// Analytic-versus-central-difference comparison of every differentiable
/// operation, the gate and attention compositions, the loss, and an
/// end-to-end miniature network. Inputs are drawn in [-2, 2] from the
/// seed; each objective contracts the op output with a random constant
/// weighting so no gradient component is structurally trivial. Elementwise
/// maxima are redrawn until no pair sits within 1e-3 of a tie, where the
/// derivative genuinely jumps.
std::vector<CheckResult> run_gradient_checks(std::uint64_t seed);

/// One line per check: name, measured error, tolerance, PASS/FAIL.
void write_check_table(std::ostream& out, const std::vector<CheckResult>& results);

}  // namespace bistream
