#include "psi/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "psi/error.hpp"

namespace psi {

double shannon_entropy(std::span<const double> p) {
  double h = 0.0;
  for (double x : p) {
    if (x > 0.0) h -= x * std::log(x);
  }
  return h;
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw ShapeError("KL over mismatched supports");
  double kl = 0.0;
  for (size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    double qi = std::max(q[i], kProbFloor);
    kl += p[i] * std::log(p[i] / qi);
  }
  return kl;
}

double cross_entropy(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw ShapeError("cross entropy size mismatch");
  double ce = 0.0;
  for (size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    ce -= p[i] * std::log(std::max(q[i], kProbFloor));
  }
  return ce;
}

void normalize(std::vector<double>& p) {
  double total = std::accumulate(p.begin(), p.end(), 0.0);
  if (total <= 0.0) throw InvariantError("cannot normalize zero mass");
  for (double& x : p) x /= total;
}

double chi_square_p(std::span<const double> observed,
                    std::span<const double> expected, int dof_override) {
  if (observed.size() != expected.size())
    throw ShapeError("chi-square size mismatch");
  double stat = 0.0;
  int bins = 0;
  for (size_t i = 0; i < observed.size(); ++i) {
    if (expected[i] <= 0.0) {
      if (observed[i] > 0.0)
        return 0.0;  // observed mass where none is expected
      continue;
    }
    double d = observed[i] - expected[i];
    stat += d * d / expected[i];
    ++bins;
  }
  int dof = dof_override >= 0 ? dof_override : bins - 1;
  if (dof <= 0) return 1.0;
  boost::math::chi_squared dist(dof);
  return boost::math::cdf(boost::math::complement(dist, stat));
}

namespace {
std::vector<double> ranks(std::span<const double> v) {
  const size_t n = v.size();
  std::vector<size_t> ix(n);
  std::iota(ix.begin(), ix.end(), 0);
  std::stable_sort(ix.begin(), ix.end(),
                   [&](size_t a, size_t b) { return v[a] < v[b]; });
  std::vector<double> r(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && v[ix[j + 1]] == v[ix[i]]) ++j;
    double avg = 0.5 * (i + j) + 1.0;  // average rank for the tie run
    for (size_t k = i; k <= j; ++k) r[ix[k]] = avg;
    i = j + 1;
  }
  return r;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  double ma = mean(a), mb = mean(b);
  double num = 0.0, da = 0.0, db = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - ma) * (b[i] - mb);
    da += (a[i] - ma) * (a[i] - ma);
    db += (b[i] - mb) * (b[i] - mb);
  }
  if (da <= 0.0 || db <= 0.0) return 0.0;
  return num / std::sqrt(da * db);
}
}  // namespace

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2)
    throw ShapeError("spearman needs two equal-size samples of >= 2");
  auto ra = ranks(a);
  auto rb = ranks(b);
  return pearson(ra, rb);
}

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ShapeError("auc size mismatch");
  double pos = 0, neg = 0, wins = 0;
  for (size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] == 1) continue;
      if (scores[i] > scores[j])
        wins += 1.0;
      else if (scores[i] == scores[j])
        wins += 0.5;
    }
  }
  for (int l : labels) (l == 1 ? pos : neg) += 1.0;
  if (pos == 0.0 || neg == 0.0)
    throw ShapeError("auc needs both classes present");
  return wins / (pos * neg);
}

double paired_t_p(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2)
    throw ShapeError("paired t-test needs equal sizes >= 2");
  std::vector<double> d(a.size());
  for (size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  double m = mean(d);
  double s = sample_std(d);
  if (s == 0.0) return m > 0.0 ? 0.0 : 1.0;
  double t = m / (s / std::sqrt(static_cast<double>(d.size())));
  boost::math::students_t dist(static_cast<double>(d.size() - 1));
  return boost::math::cdf(boost::math::complement(dist, t));
}

double two_proportion_p(int successes1, int n1, int successes2, int n2) {
  if (n1 <= 0 || n2 <= 0) throw ShapeError("empty proportion sample");
  double p1 = static_cast<double>(successes1) / n1;
  double p2 = static_cast<double>(successes2) / n2;
  double pool = static_cast<double>(successes1 + successes2) / (n1 + n2);
  double se = std::sqrt(pool * (1.0 - pool) * (1.0 / n1 + 1.0 / n2));
  if (se == 0.0) return p1 < p2 ? 0.0 : 1.0;
  double z = (p2 - p1) / se;
  boost::math::normal dist;
  return boost::math::cdf(boost::math::complement(dist, z));
}

double binomial_sigma(double p, int n) {
  return std::sqrt(p * (1.0 - p) / static_cast<double>(n));
}

double mean(std::span<const double> v) {
  if (v.empty()) throw ShapeError("mean of empty sample");
  return std::accumulate(v.begin(), v.end(), 0.0) /
         static_cast<double>(v.size());
}

double sample_std(std::span<const double> v) {
  if (v.size() < 2) throw ShapeError("std of < 2 samples");
  double m = mean(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

}  // namespace psi
