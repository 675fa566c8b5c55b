#pragma once

#include <string>
#include <vector>

#include "pairdiff/tensor.hpp"

namespace pairdiff {

// Dice overlap 2|P∩T| / (|P|+|T|); both-empty returns 1.
double dice(const Tensor& pred, const Tensor& truth);

struct AnovaResult {
    double F = 0.0;
    double p = 1.0;
    int df_between = 0;
    int df_within = 0;
};

AnovaResult one_way_anova(const std::vector<std::vector<double>>& groups);

struct TTestResult {
    double t = 0.0;
    double p_raw = 1.0;
    double p_adjusted = 1.0;
};

// Two-sided pooled-variance two-sample t-test with Bonferroni adjustment
// p_adj = min(1, m * p_raw).
std::vector<TTestResult> t_test_bonferroni(
    const std::vector<std::pair<std::vector<double>, std::vector<double>>>& pairs, int m);

TTestResult t_test_single(const std::vector<double>& a, const std::vector<double>& b, int m);

struct KsResult {
    double D = 0.0;
    double p = 1.0;
};

// Two-sample Kolmogorov-Smirnov test with the asymptotic p-value.
KsResult ks_two_sample(std::vector<double> a, std::vector<double> b);

// Pearson correlation between two equal-size images (normalized
// cross-correlation after mean removal).
double normalized_cross_correlation(const Tensor& a, const Tensor& b);

// Group-wise results plus the full statistical battery.
struct StatsReport {
    std::vector<std::string> arm_names;
    std::vector<std::vector<double>> arm_dice;
    AnovaResult anova;
    std::vector<std::pair<int, int>> pair_indices;
    std::vector<TTestResult> pairwise;
    int comparison_count = 0;

    std::string render_table() const;
};

// ANOVA over all arms followed by Bonferroni-adjusted pairwise t-tests over
// every unordered arm pair.
StatsReport run_statistical_battery(const std::vector<std::string>& arm_names,
                                    const std::vector<std::vector<double>>& arm_dice);

}  // namespace pairdiff
