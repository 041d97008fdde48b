#pragma once

#include <Eigen/Sparse>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "rep2a/core.hpp"

namespace rep2a {

/// min 0.5 x'Px + q'x + c  s.t.  A x <= b,  E x = d.
/// P is PSD by construction (builders only add nonnegative diagonal blocks
/// or Gram-type terms). var_map ties every column to a named decision.
struct CanonicalQP {
  int n = 0;
  Eigen::SparseMatrix<double> P;
  Series q;
  double c = 0.0;
  Eigen::SparseMatrix<double> A;
  Series b;
  Eigen::SparseMatrix<double> E;
  Series d;
  std::map<std::string, int> var_map;

  double objective(const Series& x) const {
    return 0.5 * x.dot(P * x) + q.dot(x) + c;
  }

  int index_of(const std::string& name) const {
    auto it = var_map.find(name);
    if (it == var_map.end())
      throw std::out_of_range("CanonicalQP: unknown variable " + name);
    return it->second;
  }
};

/// A CanonicalQP plus the set of columns restricted to {0,1}.
struct CanonicalMIQP {
  CanonicalQP base;
  std::vector<int> binary_idx;
};

/// Incremental assembly of a CanonicalQP from named variables and rows.
class QpBuilder {
 public:
  int add_var(const std::string& name) {
    const int idx = n_++;
    if (!names_.emplace(name, idx).second)
      throw std::invalid_argument("QpBuilder: duplicate variable " + name);
    return idx;
  }

  /// Contiguous block of T variables named base[0..T-1]; returns first index.
  int add_block(const std::string& base, int T) {
    const int first = n_;
    for (int t = 0; t < T; ++t)
      add_var(base + "[" + std::to_string(t) + "]");
    return first;
  }

  void add_quad(int i, int j, double v) {
    if (v != 0.0) quad_.emplace_back(i, j, v);
  }
  void add_lin(int i, double v) { lin_.emplace_back(i, v); }
  void add_const(double v) { c_ += v; }

  /// A row "sum coeff_i x_i <= rhs".
  void add_ineq(const std::vector<std::pair<int, double>>& terms, double rhs) {
    for (auto [i, v] : terms) a_trip_.emplace_back(m_ineq_, i, v);
    b_.push_back(rhs);
    ++m_ineq_;
  }

  /// A row "sum coeff_i x_i = rhs".
  void add_eq(const std::vector<std::pair<int, double>>& terms, double rhs) {
    for (auto [i, v] : terms) e_trip_.emplace_back(m_eq_, i, v);
    d_.push_back(rhs);
    ++m_eq_;
  }

  void add_lower_bound(int i, double lb) { add_ineq({{i, -1.0}}, -lb); }
  void add_upper_bound(int i, double ub) { add_ineq({{i, 1.0}}, ub); }
  void add_range(int i, double lb, double ub) {
    add_lower_bound(i, lb);
    add_upper_bound(i, ub);
  }
  void fix(int i, double v) { add_eq({{i, 1.0}}, v); }

  int num_vars() const { return n_; }

  CanonicalQP build() const {
    CanonicalQP qp;
    qp.n = n_;
    qp.P.resize(n_, n_);
    {
      // Accumulate symmetric entries: store (i,j) and (j,i) halves.
      std::vector<Eigen::Triplet<double>> sym;
      sym.reserve(2 * quad_.size());
      for (const auto& t : quad_) {
        if (t.row() == t.col()) {
          sym.push_back(t);
        } else {
          sym.emplace_back(t.row(), t.col(), t.value());
          sym.emplace_back(t.col(), t.row(), t.value());
        }
      }
      qp.P.setFromTriplets(sym.begin(), sym.end());
    }
    qp.q = Series::Zero(n_);
    for (auto [i, v] : lin_) qp.q[i] += v;
    qp.c = c_;
    qp.A.resize(m_ineq_, n_);
    qp.A.setFromTriplets(a_trip_.begin(), a_trip_.end());
    qp.b = Eigen::Map<const Series>(b_.data(), m_ineq_);
    qp.E.resize(m_eq_, n_);
    qp.E.setFromTriplets(e_trip_.begin(), e_trip_.end());
    qp.d = Eigen::Map<const Series>(d_.data(), m_eq_);
    qp.var_map.insert(names_.begin(), names_.end());
    return qp;
  }

 private:
  int n_ = 0;
  int m_ineq_ = 0;
  int m_eq_ = 0;
  double c_ = 0.0;
  std::map<std::string, int> names_;
  std::vector<Eigen::Triplet<double>> quad_;
  std::vector<std::pair<int, double>> lin_;
  std::vector<Eigen::Triplet<double>> a_trip_;
  std::vector<Eigen::Triplet<double>> e_trip_;
  std::vector<double> b_;
  std::vector<double> d_;
};

}  // namespace rep2a
