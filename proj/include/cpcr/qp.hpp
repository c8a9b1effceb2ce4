#pragma once

// Block-separable least squares with linear inequality constraints:
//
//   minimize   f(W) = sum_m |X_m w_m - y_m|^2 + ridge |W|^2
//   subject to A W + b >= 0
//
// The Hessian 2 blockdiag(X_m'X_m + ridge I) is factored once per block.
// Multipliers follow the stationarity convention grad f(W) = A' lambda.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include "cpcr/error.hpp"

namespace cpcr::qp {

struct Block {
  Eigen::MatrixXd x;  // N_m x K_m design
  Eigen::VectorXd y;  // N_m response
};

struct Problem {
  std::vector<Block> blocks;
  Eigen::MatrixXd a;  // p' x sum K_m
  Eigen::VectorXd b;  // p'
  double ridge = 0.0;

  Eigen::Index dimension() const {
    Eigen::Index n = 0;
    for (const auto& blk : blocks) n += blk.x.cols();
    return n;
  }

  Eigen::Index constraint_count() const { return a.rows(); }

  std::vector<Eigen::Index> offsets() const {
    std::vector<Eigen::Index> off{0};
    for (const auto& blk : blocks) off.push_back(off.back() + blk.x.cols());
    return off;
  }

  void validate() const {
    if (!(ridge >= 0.0) || !std::isfinite(ridge))
      throw ConfigError("ridge must be a finite non-negative number");
    for (std::size_t m = 0; m < blocks.size(); ++m)
      if (blocks[m].x.rows() != blocks[m].y.size())
        throw DimensionError("block " + std::to_string(m) + ": design has " +
                             std::to_string(blocks[m].x.rows()) + " rows but response has " +
                             std::to_string(blocks[m].y.size()));
    if (a.rows() > 0 && a.cols() != dimension())
      throw DimensionError("constraint matrix has " + std::to_string(a.cols()) +
                           " columns, expected " + std::to_string(dimension()));
    if (b.size() != a.rows())
      throw DimensionError("constraint offset has " + std::to_string(b.size()) +
                           " entries, expected " + std::to_string(a.rows()));
  }
};

enum class Status { converged, infeasible, iteration_limit };

inline const char* to_string(Status s) {
  switch (s) {
    case Status::converged: return "converged";
    case Status::infeasible: return "infeasible";
    case Status::iteration_limit: return "iteration-limit";
  }
  return "?";
}

struct Solution {
  Eigen::VectorXd coefficients;
  Eigen::VectorXd multipliers;            // one per constraint row, >= 0
  std::vector<std::size_t> active_set;    // sorted row indices
  double objective_value = 0.0;
  int iterations = 0;
  Status status = Status::converged;
  double ridge = 0.0;
};

struct Options {
  double tol = 1e-8;
  int max_iter = 0;  // 0 selects 10 (p' + 1)
};

inline double objective(const Problem& pr, const Eigen::VectorXd& w) {
  double f = 0.0;
  Eigen::Index off = 0;
  for (const auto& blk : pr.blocks) {
    const Eigen::Index k = blk.x.cols();
    f += (blk.x * w.segment(off, k) - blk.y).squaredNorm();
    off += k;
  }
  return f + pr.ridge * w.squaredNorm();
}

inline Eigen::VectorXd gradient(const Problem& pr, const Eigen::VectorXd& w) {
  Eigen::VectorXd g(w.size());
  Eigen::Index off = 0;
  for (const auto& blk : pr.blocks) {
    const Eigen::Index k = blk.x.cols();
    const Eigen::VectorXd wm = w.segment(off, k);
    g.segment(off, k) = 2.0 * (blk.x.transpose() * (blk.x * wm - blk.y) + pr.ridge * wm);
    off += k;
  }
  return g;
}

// 2-norm condition number of X'X + ridge I (infinite when singular).
inline double normal_condition(const Eigen::MatrixXd& x, double ridge) {
  if (x.cols() == 0) return 1.0;
  Eigen::MatrixXd g = x.transpose() * x;
  g.diagonal().array() += ridge;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(g, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 0.0)) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

inline constexpr double kSingularCondition = 1e12;

// Ridge to use when some block's normal matrix is numerically singular:
// 1e-10 trace(X'X)/K of the worst offender, zero otherwise.
inline double auto_ridge(const std::vector<Block>& blocks) {
  double ridge = 0.0;
  for (const auto& blk : blocks) {
    if (blk.x.cols() == 0) continue;
    if (normal_condition(blk.x, 0.0) > kSingularCondition) {
      const double trace = blk.x.squaredNorm();
      ridge = std::max(ridge, 1e-10 * trace / static_cast<double>(blk.x.cols()));
    }
  }
  return ridge;
}

namespace detail {

// Cholesky factors of G_m = X_m'X_m + ridge I; H = 2 blockdiag(G_m).
class BlockFactor {
 public:
  BlockFactor(const std::vector<Block>& blocks, double ridge) {
    Eigen::Index off = 0;
    for (std::size_t m = 0; m < blocks.size(); ++m) {
      const auto& blk = blocks[m];
      const Eigen::Index k = blk.x.cols();
      if (k > 0 && normal_condition(blk.x, ridge) > kSingularCondition)
        throw SingularError("block " + std::to_string(m) +
                            ": normal matrix is singular or ill-conditioned" +
                            (ridge == 0.0 ? "; use a positive ridge"
                                          : "; increase the ridge"));
      Eigen::MatrixXd g = blk.x.transpose() * blk.x;
      g.diagonal().array() += ridge;
      factors_.emplace_back(g);
      rhs_.push_back(blk.x.transpose() * blk.y);
      offsets_.push_back(off);
      off += k;
    }
    dim_ = off;
  }

  Eigen::VectorXd unconstrained() const {
    Eigen::VectorXd w(dim_);
    for (std::size_t m = 0; m < factors_.size(); ++m)
      w.segment(offsets_[m], rhs_[m].size()) = factors_[m].solve(rhs_[m]);
    return w;
  }

  // H^{-1} v with H = 2 blockdiag(G_m).
  Eigen::VectorXd hinv(const Eigen::VectorXd& v) const {
    Eigen::VectorXd out(dim_);
    for (std::size_t m = 0; m < factors_.size(); ++m) {
      const Eigen::Index k = rhs_[m].size();
      out.segment(offsets_[m], k) = 0.5 * factors_[m].solve(v.segment(offsets_[m], k));
    }
    return out;
  }

  Eigen::Index dimension() const { return dim_; }

 private:
  std::vector<Eigen::LLT<Eigen::MatrixXd>> factors_;
  std::vector<Eigen::VectorXd> rhs_;
  std::vector<Eigen::Index> offsets_;
  Eigen::Index dim_ = 0;
};

inline std::string index_list(const std::vector<std::size_t>& idx) {
  std::string s;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(idx[i]);
  }
  return s;
}

}  // namespace detail

// Per-block solution of (X'X + ridge I) w = X'y, concatenated.
inline Eigen::VectorXd solve_unconstrained(const std::vector<Block>& blocks,
                                           double ridge = 0.0) {
  for (std::size_t m = 0; m < blocks.size(); ++m)
    if (blocks[m].x.rows() != blocks[m].y.size())
      throw DimensionError("block " + std::to_string(m) + ": row count mismatch");
  return detail::BlockFactor(blocks, ridge).unconstrained();
}

// Dual active-set method (Goldfarb-Idnani): starts from the unconstrained
// minimizer and adds the most violated constraint each round, taking partial
// steps that release working-set constraints whose multipliers reach zero.
// Every iterate is dual feasible, so the first primal-feasible point is the
// global optimum of the convex problem.
inline Solution solve(const Problem& pr, const Options& opt = {}) {
  pr.validate();
  if (!(opt.tol > 0.0)) throw ConfigError("tol must be positive");
  const Eigen::Index p_all = pr.constraint_count();
  const int max_iter = opt.max_iter > 0 ? opt.max_iter
                                        : 10 * (static_cast<int>(p_all) + 1);

  detail::BlockFactor fac(pr.blocks, pr.ridge);
  Eigen::VectorXd x = fac.unconstrained();

  Solution sol;
  sol.ridge = pr.ridge;
  sol.multipliers = Eigen::VectorXd::Zero(p_all);

  // Rows equal within 1e-12 (gradient and offset) collapse onto the first.
  std::vector<Eigen::Index> uniq;
  for (Eigen::Index i = 0; i < p_all; ++i) {
    bool dup = false;
    for (Eigen::Index j : uniq)
      if ((pr.a.row(i) - pr.a.row(j)).cwiseAbs().maxCoeff() <= 1e-12 &&
          std::abs(pr.b(i) - pr.b(j)) <= 1e-12) {
        dup = true;
        break;
      }
    if (!dup) uniq.push_back(i);
  }
  const Eigen::Index p = static_cast<Eigen::Index>(uniq.size());
  Eigen::MatrixXd a(p, x.size());
  Eigen::VectorXd b(p);
  for (Eigen::Index i = 0; i < p; ++i) {
    a.row(i) = pr.a.row(uniq[static_cast<std::size_t>(i)]);
    b(i) = pr.b(uniq[static_cast<std::size_t>(i)]);
  }

  std::vector<Eigen::Index> active;  // indices into the unique rows
  std::vector<double> u;             // multipliers of the working set
  std::vector<char> in_active(static_cast<std::size_t>(p), 0);
  int iter = 0;

  auto drop = [&](std::size_t k) {
    in_active[static_cast<std::size_t>(active[k])] = 0;
    active.erase(active.begin() + static_cast<std::ptrdiff_t>(k));
    u.erase(u.begin() + static_cast<std::ptrdiff_t>(k));
  };

  auto finish = [&](Status status) {
    sol.status = status;
    sol.coefficients = x;
    sol.iterations = iter;
    for (std::size_t j = 0; j < active.size(); ++j)
      sol.multipliers(uniq[static_cast<std::size_t>(active[j])]) = std::max(0.0, u[j]);
    for (Eigen::Index j : active) sol.active_set.push_back(static_cast<std::size_t>(uniq[static_cast<std::size_t>(j)]));
    std::sort(sol.active_set.begin(), sol.active_set.end());
    sol.objective_value = objective(pr, x);
    return sol;
  };

  while (true) {
    // Most violated inactive constraint; lowest index on ties.
    Eigen::Index pick = -1;
    double worst = -opt.tol;
    if (p > 0) {
      const Eigen::VectorXd s = a * x + b;
      for (Eigen::Index j = 0; j < p; ++j)
        if (!in_active[static_cast<std::size_t>(j)] && s(j) < worst) {
          worst = s(j);
          pick = j;
        }
    }
    if (pick < 0) break;

    const Eigen::VectorXd np = a.row(pick).transpose();
    double up = 0.0;
    while (true) {
      if (++iter > max_iter) {
        --iter;
        return finish(Status::iteration_limit);
      }
      const std::size_t q = active.size();
      const Eigen::VectorXd hn = fac.hinv(np);
      Eigen::VectorXd z = hn;
      Eigen::VectorXd r;
      if (q > 0) {
        Eigen::MatrixXd hN(x.size(), static_cast<Eigen::Index>(q));
        Eigen::MatrixXd nmat(x.size(), static_cast<Eigen::Index>(q));
        for (std::size_t j = 0; j < q; ++j) {
          nmat.col(static_cast<Eigen::Index>(j)) = a.row(active[j]).transpose();
          hN.col(static_cast<Eigen::Index>(j)) = fac.hinv(nmat.col(static_cast<Eigen::Index>(j)));
        }
        const Eigen::MatrixXd m = nmat.transpose() * hN;
        Eigen::LLT<Eigen::MatrixXd> llt(m);
        if (llt.info() != Eigen::Success || llt.rcond() < 1e-14) {
          std::vector<std::size_t> idx;
          for (Eigen::Index j : active) idx.push_back(static_cast<std::size_t>(uniq[static_cast<std::size_t>(j)]));
          std::sort(idx.begin(), idx.end());
          throw ConditioningError("ill-conditioned KKT system on constraints [" +
                                  detail::index_list(idx) + "]");
        }
        r = llt.solve(hN.transpose() * np);
        z -= hN * r;
      }

      // Largest dual step that keeps working-set multipliers non-negative.
      double t1 = std::numeric_limits<double>::infinity();
      std::size_t k_drop = 0;
      const double r_eps = q > 0 ? 1e-13 * (1.0 + r.cwiseAbs().maxCoeff()) : 0.0;
      for (std::size_t j = 0; j < q; ++j) {
        const double rj = r(static_cast<Eigen::Index>(j));
        if (rj > r_eps) {
          const double ratio = u[j] / rj;
          if (ratio < t1) {
            t1 = ratio;
            k_drop = j;
          }
        }
      }
      // Full primal step onto the new constraint.
      const double zn = z.dot(np);
      const double sp = np.dot(x) + b(pick);
      const double t2 = zn > 1e-12 * np.dot(hn)
                            ? -sp / zn
                            : std::numeric_limits<double>::infinity();
      const double t = std::min(t1, t2);
      if (!std::isfinite(t)) return finish(Status::infeasible);

      if (!std::isfinite(t2)) {
        for (std::size_t j = 0; j < q; ++j) u[j] -= t * r(static_cast<Eigen::Index>(j));
        up += t;
        drop(k_drop);
        continue;
      }
      x += t * z;
      for (std::size_t j = 0; j < q; ++j) u[j] -= t * r(static_cast<Eigen::Index>(j));
      up += t;
      if (t2 <= t1) {
        active.push_back(pick);
        u.push_back(up);
        in_active[static_cast<std::size_t>(pick)] = 1;
        break;
      }
      drop(k_drop);
    }
  }

  // Polish: re-solve the equality problem on the final working set.
  if (!active.empty()) {
    const auto q = static_cast<Eigen::Index>(active.size());
    Eigen::MatrixXd nmat(x.size(), q), hN(x.size(), q);
    Eigen::VectorXd bq(q);
    for (Eigen::Index j = 0; j < q; ++j) {
      nmat.col(j) = a.row(active[static_cast<std::size_t>(j)]).transpose();
      hN.col(j) = fac.hinv(nmat.col(j));
      bq(j) = b(active[static_cast<std::size_t>(j)]);
    }
    const Eigen::VectorXd x0 = fac.unconstrained();
    Eigen::LLT<Eigen::MatrixXd> llt(nmat.transpose() * hN);
    if (llt.info() == Eigen::Success) {
      // x = x0 + H^{-1} N u  with  N'x + b = 0.
      const Eigen::VectorXd uu = llt.solve(-(nmat.transpose() * x0 + bq));
      const Eigen::VectorXd xx = x0 + hN * uu;
      const bool feasible = p == 0 || ((a * xx + b).array() >= -opt.tol).all();
      if (feasible && (uu.array() >= -opt.tol).all()) {
        x = xx;
        for (Eigen::Index j = 0; j < q; ++j) u[static_cast<std::size_t>(j)] = uu(j);
      }
    }
  }
  return finish(Status::converged);
}

// Exhaustive reference solver: tries every subset of rows as the active set,
// solving the full KKT system with a pivoted LU. Exponential; test use only.
inline Solution oracle_solve(const Problem& pr) {
  pr.validate();
  const Eigen::Index p = pr.constraint_count();
  if (p > 12) throw ConfigError("oracle_solve supports at most 12 constraints");
  const Eigen::Index n = pr.dimension();

  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd g0(n);
  Eigen::Index off = 0;
  for (const auto& blk : pr.blocks) {
    const Eigen::Index k = blk.x.cols();
    h.block(off, off, k, k) = 2.0 * (blk.x.transpose() * blk.x);
    g0.segment(off, k) = -2.0 * (blk.x.transpose() * blk.y);
    off += k;
  }
  h.diagonal().array() += 2.0 * pr.ridge;

  Solution best;
  best.ridge = pr.ridge;
  best.status = Status::infeasible;
  best.objective_value = std::numeric_limits<double>::infinity();
  const double feas_tol = 1e-9 * (1.0 + (p > 0 ? pr.b.cwiseAbs().maxCoeff() : 0.0));

  for (unsigned mask = 0; mask < (1u << p); ++mask) {
    std::vector<Eigen::Index> set;
    for (Eigen::Index i = 0; i < p; ++i)
      if (mask & (1u << i)) set.push_back(i);
    const auto q = static_cast<Eigen::Index>(set.size());
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(n + q, n + q);
    Eigen::VectorXd rhs(n + q);
    kkt.topLeftCorner(n, n) = h;
    rhs.head(n) = -g0;
    for (Eigen::Index j = 0; j < q; ++j) {
      kkt.block(0, n + j, n, 1) = -pr.a.row(set[static_cast<std::size_t>(j)]).transpose();
      kkt.block(n + j, 0, 1, n) = pr.a.row(set[static_cast<std::size_t>(j)]);
      rhs(n + j) = -pr.b(set[static_cast<std::size_t>(j)]);
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
    if (lu.rank() < n + q) continue;
    const Eigen::VectorXd sol = lu.solve(rhs);
    const Eigen::VectorXd w = sol.head(n);
    const Eigen::VectorXd lam = sol.tail(q);
    if (q > 0 && lam.minCoeff() < -1e-9) continue;
    if (p > 0 && (pr.a * w + pr.b).minCoeff() < -feas_tol) continue;
    const double f = objective(pr, w);
    if (f < best.objective_value) {
      best.coefficients = w;
      best.multipliers = Eigen::VectorXd::Zero(p);
      best.active_set.clear();
      for (Eigen::Index j = 0; j < q; ++j) {
        best.multipliers(set[static_cast<std::size_t>(j)]) = std::max(0.0, lam(j));
        best.active_set.push_back(static_cast<std::size_t>(set[static_cast<std::size_t>(j)]));
      }
      best.objective_value = f;
      best.status = Status::converged;
    }
    ++best.iterations;
  }
  return best;
}

struct KktResiduals {
  double primal = 0.0;           // max violation of A W + b >= 0
  double dual = 0.0;             // max negativity of lambda
  double complementarity = 0.0;  // max |lambda_l (A W + b)_l|
  double stationarity = 0.0;     // |grad f - A' lambda|_inf

  bool satisfied(double tol) const {
    return primal <= tol && dual <= tol && complementarity <= tol && stationarity <= tol;
  }
};

inline KktResiduals kkt_residuals(const Problem& pr, const Solution& sol) {
  KktResiduals r;
  const Eigen::VectorXd& w = sol.coefficients;
  Eigen::VectorXd grad = gradient(pr, w);
  if (pr.constraint_count() > 0) {
    const Eigen::VectorXd s = pr.a * w + pr.b;
    r.primal = std::max(0.0, -s.minCoeff());
    r.dual = std::max(0.0, -sol.multipliers.minCoeff());
    r.complementarity = (sol.multipliers.array() * s.array()).abs().maxCoeff();
    grad -= pr.a.transpose() * sol.multipliers;
  }
  r.stationarity = grad.size() ? grad.cwiseAbs().maxCoeff() : 0.0;
  return r;
}

}  // namespace cpcr::qp
