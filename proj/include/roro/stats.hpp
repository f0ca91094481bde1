#pragma once

// Statistics behind criterion validation: partial correlation with a
// two-sided t-test, Holm-Bonferroni step-down, sample standard deviation and
// k-nearest-neighbor mutual information estimators.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/digamma.hpp>

#include "roro/core.hpp"
#include "roro/rng.hpp"

namespace roro::stats {

struct PartialCorrelation {
  double r = 0.0;
  double p = 1.0;
  double t = 0.0;
  int df = 0;
  bool defined = false;
  std::string reason;
};

// Two-sided p-value of a Student-t statistic.
inline double t_two_sided_p(double t, int df) {
  if (!std::isfinite(t)) return 0.0;
  boost::math::students_t dist(static_cast<double>(df));
  return std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(t))));
}

// Residuals of y after least-squares regression on [1, controls].
inline Eigen::VectorXd regression_residuals(const Eigen::VectorXd& y, const Eigen::MatrixXd& controls) {
  const Eigen::Index n = y.size();
  Eigen::MatrixXd x(n, controls.cols() + 1);
  x.col(0).setOnes();
  if (controls.cols() > 0) x.rightCols(controls.cols()) = controls;
  Eigen::VectorXd beta = x.colPivHouseholderQr().solve(y);
  return y - x * beta;
}

// `controls` holds one column per control variable.
inline PartialCorrelation partial_correlation(std::span<const double> v, std::span<const double> target,
                                              const std::vector<std::vector<double>>& controls) {
  const std::size_t n = v.size();
  const int g = static_cast<int>(controls.size());
  if (target.size() != n) throw Error("partial_correlation: length mismatch");
  for (const auto& c : controls)
    if (c.size() != n) throw Error("partial_correlation: control length mismatch");
  if (n < static_cast<std::size_t>(g + 3)) throw Error("partial_correlation: too few samples");

  Eigen::VectorXd ev(n), et(n);
  Eigen::MatrixXd ec(n, g);
  for (std::size_t i = 0; i < n; ++i) {
    ev(i) = v[i];
    et(i) = target[i];
    for (int j = 0; j < g; ++j) ec(i, j) = controls[j][i];
    if (!std::isfinite(v[i]) || !std::isfinite(target[i]))
      throw Error("partial_correlation: non-finite input");
  }
  PartialCorrelation out;
  out.df = static_cast<int>(n) - 2 - g;

  const Eigen::VectorXd rv = regression_residuals(ev, ec);
  const Eigen::VectorXd rt = regression_residuals(et, ec);
  // Residual scale relative to the raw centered scale decides degeneracy.
  auto scale = [](const Eigen::VectorXd& x) {
    return (x.array() - x.mean()).matrix().norm() + x.cwiseAbs().maxCoeff();
  };
  const double tol = 1e-9;
  if (rv.norm() <= tol * std::max(1e-300, scale(ev))) {
    out.reason = "criterion residual has zero variance after controls";
    return out;
  }
  if (rt.norm() <= tol * std::max(1e-300, scale(et))) {
    out.reason = "target residual has zero variance after controls";
    return out;
  }
  const Eigen::VectorXd cv = rv.array() - rv.mean();
  const Eigen::VectorXd ct = rt.array() - rt.mean();
  double r = cv.dot(ct) / (cv.norm() * ct.norm());
  r = std::clamp(r, -1.0, 1.0);
  out.r = r;
  out.defined = true;
  if (out.df <= 0) {
    out.reason = "no residual degrees of freedom";
    out.p = 1.0;
    return out;
  }
  const double denom = 1.0 - r * r;
  out.t = denom <= 0.0 ? std::copysign(INFINITY, r) : r * std::sqrt(out.df / denom);
  out.p = t_two_sided_p(out.t, out.df);
  return out;
}

// Step-down Holm procedure; flags are returned in input order.
inline std::vector<bool> holm_bonferroni(std::span<const double> p, double alpha) {
  const std::size_t m = p.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });
  std::vector<bool> reject(m, false);
  for (std::size_t i = 0; i < m; ++i) {
    if (p[order[i]] <= alpha / static_cast<double>(m - i))
      reject[order[i]] = true;
    else
      break;
  }
  return reject;
}

// Sample standard deviation (n - 1 denominator).
inline double score_std(std::span<const double> v) {
  if (v.size() < 2) throw Error("score_std: need at least two samples");
  double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

inline double digamma(double x) { return boost::math::digamma(x); }

// Average ranks (ties share their mean rank) plus a sub-rank jitter derived
// from the sample index, so equal values become distinct but stay adjacent.
inline std::vector<double> jittered_ranks(std::span<const double> v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    double avg = 0.5 * static_cast<double>(i + j);
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
    i = j + 1;
  }
  for (std::size_t i = 0; i < n; ++i) {
    double u = static_cast<double>(splitmix64(i) >> 11) * (1.0 / 9007199254740992.0);
    rank[i] += 1e-6 * (u - 0.5);
  }
  return rank;
}

// Mutual information (nats) between a continuous score and a discrete label,
// k-NN estimator: for each sample, the distance d_i to its k-th nearest
// same-label neighbor, and m_i points of any label within d_i (counting the
// sample itself, as in the scikit-learn formulation). The score is rank
// transformed first, which makes the estimate invariant under strictly
// monotone transforms. Returns max(0, estimate).
inline double mixed_ksg_mi(std::span<const double> v, std::span<const int> y, int k = 5) {
  const std::size_t n = v.size();
  if (y.size() != n) throw Error("mixed_ksg_mi: length mismatch");
  if (k < 1) throw Error("mixed_ksg_mi: k must be positive");
  if (n < static_cast<std::size_t>(2 * k + 2)) throw Error("mixed_ksg_mi: too few samples");
  for (double x : v)
    if (!std::isfinite(x)) throw Error("mixed_ksg_mi: non-finite score");

  const std::vector<double> r = jittered_ranks(v);
  std::vector<double> sorted_all(r);
  std::sort(sorted_all.begin(), sorted_all.end());

  std::vector<int> labels(y.begin(), y.end());
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  if (labels.size() < 2) return 0.0;

  double sum_label = 0.0, sum_k = 0.0, sum_m = 0.0;
  std::size_t used = 0;
  for (int lab : labels) {
    std::vector<double> cls;
    for (std::size_t i = 0; i < n; ++i)
      if (y[i] == lab) cls.push_back(r[i]);
    if (cls.size() < 2) continue;  // singleton classes carry no neighbor information
    std::sort(cls.begin(), cls.end());
    const int kk = std::min<int>(k, static_cast<int>(cls.size()) - 1);
    for (std::size_t pos = 0; pos < cls.size(); ++pos) {
      // k-th nearest same-class neighbor by expanding left/right pointers
      const double x = cls[pos];
      std::ptrdiff_t lo = static_cast<std::ptrdiff_t>(pos) - 1;
      std::size_t hi = pos + 1;
      double dk = 0.0;
      for (int step = 0; step < kk; ++step) {
        double dl = lo >= 0 ? x - cls[static_cast<std::size_t>(lo)] : INFINITY;
        double dr = hi < cls.size() ? cls[hi] - x : INFINITY;
        if (dl <= dr) {
          dk = dl;
          --lo;
        } else {
          dk = dr;
          ++hi;
        }
      }
      auto first = std::upper_bound(sorted_all.begin(), sorted_all.end(), x - dk);
      auto last = std::lower_bound(sorted_all.begin(), sorted_all.end(), x + dk);
      const double m = static_cast<double>(std::max<std::ptrdiff_t>(1, last - first));
      sum_label += digamma(static_cast<double>(cls.size()));
      sum_k += digamma(static_cast<double>(kk));
      sum_m += digamma(m);
      ++used;
    }
  }
  if (used == 0) return 0.0;
  const double nu = static_cast<double>(used);
  const double mi = digamma(static_cast<double>(used)) + sum_k / nu - sum_label / nu - sum_m / nu;
  return std::max(0.0, mi);
}

// Kraskov-Stoegbauer-Grassberger estimator (algorithm 1, max-norm) for two
// continuous variables. Used to validate the shared k-NN machinery.
inline double ksg_mi(std::span<const double> x, std::span<const double> y, int k = 5) {
  const std::size_t n = x.size();
  if (y.size() != n) throw Error("ksg_mi: length mismatch");
  if (n < static_cast<std::size_t>(k + 1)) throw Error("ksg_mi: too few samples");
  std::vector<double> dist(n);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j)
      dist[j] = j == i ? INFINITY : std::max(std::fabs(x[i] - x[j]), std::fabs(y[i] - y[j]));
    std::nth_element(dist.begin(), dist.begin() + (k - 1), dist.end());
    const double eps = dist[static_cast<std::size_t>(k - 1)];
    std::size_t nx = 0, ny = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      if (std::fabs(x[i] - x[j]) < eps) ++nx;
      if (std::fabs(y[i] - y[j]) < eps) ++ny;
    }
    acc += digamma(static_cast<double>(nx + 1)) + digamma(static_cast<double>(ny + 1));
  }
  return digamma(static_cast<double>(k)) + digamma(static_cast<double>(n)) - acc / static_cast<double>(n);
}

}  // namespace roro::stats
