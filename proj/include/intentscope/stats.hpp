#pragma once

#include <span>
#include <vector>

namespace intentscope {

double mean(std::span<const double> x);

/// Plain Pearson correlation. Throws std::domain_error on zero variance.
double pearson(std::span<const double> x, std::span<const double> y);

/// Weighted Pearson correlation. Throws std::domain_error on zero variance.
double weighted_pearson_r(std::span<const double> x, std::span<const double> y, std::span<const double> w);

/// Ranks starting at 1; ties share their average rank.
std::vector<double> average_ranks(std::span<const double> x);

/// Spearman rank correlation. Throws std::domain_error when a side is constant.
double spearman(std::span<const double> x, std::span<const double> y);

/// Linear-interpolation percentile (Hyndman-Fan type 7); q in [0,1].
double percentile(std::vector<double> values, double q);
double median(std::vector<double> values);

/// Mann-Whitney AUC; tied pairs count one half.
double auc(std::span<const double> positive_scores, std::span<const double> negative_scores);

struct OlsFit {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_se = 0.0;
    double intercept_se = 0.0;
    double r2 = 0.0;
};
/// Ordinary least squares of y on x with an intercept; needs >= 3 points.
OlsFit ols(std::span<const double> x, std::span<const double> y);

/// Standard normal quantile.
double normal_quantile(double p);

}  // namespace intentscope
