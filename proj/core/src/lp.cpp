#include "mdiqkd/lp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mdiqkd::lp {
namespace {

constexpr double kPivotTol = 1e-11;
constexpr double kFeasTol = 1e-9;

// Standard form: min c.x, A x + s = b with b >= 0 after sign flips; rows
// whose b was negative get an artificial column.
class Tableau {
 public:
  Tableau(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), t_((rows + 1) * (cols + 1), 0.0), basis_(rows) {}

  double& at(std::size_t r, std::size_t c) { return t_[r * (cols_ + 1) + c]; }
  double at(std::size_t r, std::size_t c) const { return t_[r * (cols_ + 1) + c]; }
  double& rhs(std::size_t r) { return at(r, cols_); }
  double& cost(std::size_t c) { return at(rows_, c); }
  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::vector<std::size_t>& basis() { return basis_; }

  void pivot(std::size_t pr, std::size_t pc) {
    const double inv = 1.0 / at(pr, pc);
    for (std::size_t c = 0; c <= cols_; ++c) at(pr, c) *= inv;
    at(pr, pc) = 1.0;
    for (std::size_t r = 0; r <= rows_; ++r) {
      if (r == pr) continue;
      const double f = at(r, pc);
      if (f == 0.0) continue;
      for (std::size_t c = 0; c <= cols_; ++c) at(r, c) -= f * at(pr, c);
      at(r, pc) = 0.0;
    }
    basis_[pr] = pc;
  }

  // Runs simplex on the current cost row over columns [0, active_cols).
  Status optimize(std::size_t active_cols, std::size_t max_iter) {
    for (std::size_t iter = 0; iter < max_iter; ++iter) {
      std::size_t enter = active_cols;
      for (std::size_t c = 0; c < active_cols; ++c) {
        if (cost(c) < -kPivotTol) {
          enter = c;  // Bland: lowest index
          break;
        }
      }
      if (enter == active_cols) return Status::Optimal;
      std::size_t leave = rows_;
      double best = 0.0;
      for (std::size_t r = 0; r < rows_; ++r) {
        const double a = at(r, enter);
        if (a <= kPivotTol) continue;
        const double ratio = rhs(r) / a;
        if (leave == rows_ || ratio < best - 1e-15 ||
            (std::abs(ratio - best) <= 1e-15 && basis_[r] < basis_[leave])) {
          leave = r;
          best = ratio;
        }
      }
      if (leave == rows_) return Status::Unbounded;
      pivot(leave, enter);
    }
    return Status::IterationLimit;
  }

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<double> t_;
  std::vector<std::size_t> basis_;
};

struct LeRow {
  std::vector<double> a;
  double b;
  std::size_t source;  // index into problem rows, or npos for a bound
};

}  // namespace

Solution solve(const Problem& problem) {
  const std::size_t n = problem.objective.size();
  for (const auto& row : problem.rows) {
    if (row.coeffs.size() != n) throw std::invalid_argument("lp: row width mismatch");
  }
  if (!problem.upper_bounds.empty() && problem.upper_bounds.size() != n) {
    throw std::invalid_argument("lp: bounds width mismatch");
  }

  // Column scale: x = col_scale * x'.
  std::vector<double> col_scale(n, 1.0);
  for (std::size_t j = 0; j < n; ++j) {
    double m = 0.0;
    for (const auto& row : problem.rows) m = std::max(m, std::abs(row.coeffs[j]));
    if (m > 0.0) col_scale[j] = 1.0 / m;
  }

  constexpr std::size_t npos = static_cast<std::size_t>(-1);
  std::vector<LeRow> le;
  for (std::size_t i = 0; i < problem.rows.size(); ++i) {
    const auto& row = problem.rows[i];
    std::vector<double> a(n);
    double rmax = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      a[j] = row.coeffs[j] * col_scale[j];
      rmax = std::max(rmax, std::abs(a[j]));
    }
    const double rs = rmax > 0.0 ? 1.0 / rmax : 1.0;
    for (double& v : a) v *= rs;
    if (std::isfinite(row.upper)) le.push_back({a, row.upper * rs, i});
    if (std::isfinite(row.lower)) {
      std::vector<double> neg(a);
      for (double& v : neg) v = -v;
      le.push_back({neg, -row.lower * rs, i});
    }
  }
  for (std::size_t j = 0; j < n; ++j) {
    if (problem.upper_bounds.empty() || !std::isfinite(problem.upper_bounds[j])) continue;
    std::vector<double> a(n, 0.0);
    a[j] = 1.0;
    le.push_back({a, problem.upper_bounds[j] / col_scale[j], npos});
  }

  const std::size_t m = le.size();
  std::size_t n_art = 0;
  for (const auto& r : le) n_art += r.b < 0.0 ? 1 : 0;
  const std::size_t cols = n + m + n_art;
  Tableau t(m, cols);
  std::size_t art = n + m;
  std::vector<std::size_t> art_cols;
  for (std::size_t r = 0; r < m; ++r) {
    const double sign = le[r].b < 0.0 ? -1.0 : 1.0;
    for (std::size_t j = 0; j < n; ++j) t.at(r, j) = sign * le[r].a[j];
    t.at(r, n + r) = sign;
    t.rhs(r) = sign * le[r].b;
    if (sign < 0.0) {
      t.at(r, art) = 1.0;
      t.basis()[r] = art;
      art_cols.push_back(art);
      ++art;
    } else {
      t.basis()[r] = n + r;
    }
  }

  const std::size_t max_iter = 50 * (cols + m) + 1000;
  Solution sol;

  if (n_art > 0) {
    // Phase one: minimize the sum of artificials.
    for (std::size_t c = 0; c <= cols; ++c) t.cost(c) = 0.0;
    for (std::size_t r = 0; r < m; ++r) {
      if (t.basis()[r] < n + m) continue;
      for (std::size_t c = 0; c <= cols; ++c) t.cost(c) -= t.at(r, c);
      t.cost(t.basis()[r]) = 0.0;
    }
    const Status s1 = t.optimize(cols, max_iter);
    if (s1 == Status::IterationLimit) {
      sol.status = s1;
      return sol;
    }
    const double infeas = -t.cost(cols);
    if (infeas > kFeasTol) {
      std::vector<double> x(n, 0.0);
      for (std::size_t r = 0; r < m; ++r) {
        if (t.basis()[r] < n) x[t.basis()[r]] = t.rhs(r) * col_scale[t.basis()[r]];
      }
      sol.status = Status::Infeasible;
      sol.x = x;
      for (const auto& row : problem.rows) {
        double v = 0.0;
        for (std::size_t j = 0; j < n; ++j) v += row.coeffs[j] * x[j];
        const double scale = std::max(std::abs(row.lower), std::abs(row.upper)) ;
        const double norm = std::isfinite(scale) && scale > 0.0 ? scale : 1.0;
        double viol = 0.0;
        if (std::isfinite(row.lower)) viol = std::max(viol, (row.lower - v) / norm);
        if (std::isfinite(row.upper)) viol = std::max(viol, (v - row.upper) / norm);
        if (viol > sol.violation) {
          sol.violation = viol;
          sol.most_violated = row.label;
        }
      }
      return sol;
    }
    // Drive remaining artificials out of the basis where possible.
    for (std::size_t r = 0; r < m; ++r) {
      if (t.basis()[r] < n + m) continue;
      for (std::size_t c = 0; c < n + m; ++c) {
        if (std::abs(t.at(r, c)) > kPivotTol) {
          t.pivot(r, c);
          break;
        }
      }
    }
  }

  // Phase two over structural + slack columns only.
  for (std::size_t c = 0; c <= cols; ++c) t.cost(c) = 0.0;
  for (std::size_t j = 0; j < n; ++j) t.cost(j) = problem.objective[j] * col_scale[j];
  for (std::size_t r = 0; r < m; ++r) {
    const std::size_t b = t.basis()[r];
    const double cb = t.cost(b);
    if (cb == 0.0) continue;
    for (std::size_t c = 0; c <= cols; ++c) t.cost(c) -= cb * t.at(r, c);
  }
  const Status s2 = t.optimize(n + m, max_iter);
  sol.status = s2;
  if (s2 != Status::Optimal) return sol;
  sol.x.assign(n, 0.0);
  for (std::size_t r = 0; r < m; ++r) {
    if (t.basis()[r] < n) sol.x[t.basis()[r]] = t.rhs(r) * col_scale[t.basis()[r]];
  }
  sol.objective = 0.0;
  for (std::size_t j = 0; j < n; ++j) sol.objective += problem.objective[j] * sol.x[j];
  return sol;
}

}  // namespace mdiqkd::lp
