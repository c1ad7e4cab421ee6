#pragma once

#include <span>
#include <vector>

namespace psi {

// Probability floor used before any log; keeps divergences finite when a
// model assigns (numerically) zero mass.
inline constexpr double kProbFloor = 1e-12;

double shannon_entropy(std::span<const double> p);                  // nats
double kl_divergence(std::span<const double> p, std::span<const double> q);
double cross_entropy(std::span<const double> p, std::span<const double> q);

void normalize(std::vector<double>& p);

// Pearson chi-square goodness-of-fit p-value. Expected counts must be
// positive; dof = bins - 1 unless overridden.
double chi_square_p(std::span<const double> observed,
                    std::span<const double> expected, int dof_override = -1);

// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> a, std::span<const double> b);

// Area under the ROC curve of score-ranked binary labels; ties contribute
// half.
double auc(std::span<const double> scores, std::span<const int> labels);

// One-sided paired t-test p-value for mean(a - b) > 0.
double paired_t_p(std::span<const double> a, std::span<const double> b);

// One-sided two-proportion z-test p-value for p1 < p2, pooled variance.
double two_proportion_p(int successes1, int n1, int successes2, int n2);

// Wilson-free normal approximation interval half-width: z * sqrt(p(1-p)/n).
double binomial_sigma(double p, int n);

double mean(std::span<const double> v);
double sample_std(std::span<const double> v);

}  // namespace psi
