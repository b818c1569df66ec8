#pragma once

#include <limits>
#include <string>
#include <vector>

namespace mdiqkd::lp {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// lower <= sum_j coeffs[j] x_j <= upper (either side may be infinite).
struct Row {
  std::vector<double> coeffs;
  double lower = -kInf;
  double upper = kInf;
  std::string label;
};

/// minimize objective . x  subject to rows, 0 <= x_j <= upper_bounds[j].
struct Problem {
  std::vector<double> objective;
  std::vector<Row> rows;
  std::vector<double> upper_bounds;  // empty: unbounded above
};

enum class Status { Optimal, Infeasible, Unbounded, IterationLimit };

struct Solution {
  Status status = Status::Infeasible;
  std::vector<double> x;
  double objective = 0.0;
  // For Infeasible: the row (by label) most violated at the phase-one point.
  std::string most_violated;
  double violation = 0.0;
};

/// Dense two-phase primal simplex (Bland's rule) with row and column
/// equilibration. Intended for the small, badly scaled programs that come
/// out of photon-number truncation.
Solution solve(const Problem& problem);

}  // namespace mdiqkd::lp
