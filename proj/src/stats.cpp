#include "pairdiff/stats.hpp"

#include <algorithm>
#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include "pairdiff/errors.hpp"

namespace pairdiff {

double dice(const Tensor& pred, const Tensor& truth) {
    if (!pred.same_shape(truth)) throw ShapeError("dice: shape mismatch");
    double inter = 0.0, total = 0.0;
    for (size_t i = 0; i < pred.size(); ++i) {
        const double p = pred[i], t = truth[i];
        if ((p != 0.0 && p != 1.0) || (t != 0.0 && t != 1.0))
            throw ValidationError("dice: inputs must be binary {0,1}");
        inter += p * t;
        total += p + t;
    }
    if (total == 0.0) return 1.0;  // both empty
    return 2.0 * inter / total;
}

AnovaResult one_way_anova(const std::vector<std::vector<double>>& groups) {
    if (groups.size() < 2) throw ParameterError("one_way_anova: need at least 2 groups");
    size_t n_total = 0;
    double grand_sum = 0.0;
    for (const auto& g : groups) {
        if (g.size() < 2) throw ParameterError("one_way_anova: each group needs >= 2 values");
        n_total += g.size();
        for (double v : g) grand_sum += v;
    }
    const double grand_mean = grand_sum / static_cast<double>(n_total);

    double ssb = 0.0, ssw = 0.0;
    for (const auto& g : groups) {
        double mean = 0.0;
        for (double v : g) mean += v;
        mean /= static_cast<double>(g.size());
        ssb += static_cast<double>(g.size()) * (mean - grand_mean) * (mean - grand_mean);
        for (double v : g) ssw += (v - mean) * (v - mean);
    }

    AnovaResult r;
    r.df_between = static_cast<int>(groups.size()) - 1;
    r.df_within = static_cast<int>(n_total - groups.size());
    if (ssw == 0.0 && ssb == 0.0) {
        r.F = 0.0;  // no variance anywhere
        r.p = 1.0;
        return r;
    }
    if (ssw == 0.0) {
        r.F = std::numeric_limits<double>::infinity();
        r.p = 0.0;
        return r;
    }
    const double msb = ssb / r.df_between;
    const double msw = ssw / r.df_within;
    r.F = msb / msw;
    boost::math::fisher_f_distribution<double> dist(r.df_between, r.df_within);
    r.p = boost::math::cdf(boost::math::complement(dist, r.F));
    return r;
}

TTestResult t_test_single(const std::vector<double>& a, const std::vector<double>& b, int m) {
    if (a.size() < 2 || b.size() < 2) throw ParameterError("t_test: each group needs >= 2 values");
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    double ma = 0.0, mb = 0.0;
    for (double v : a) ma += v;
    for (double v : b) mb += v;
    ma /= na;
    mb /= nb;
    double va = 0.0, vb = 0.0;
    for (double v : a) va += (v - ma) * (v - ma);
    for (double v : b) vb += (v - mb) * (v - mb);
    const double sp2 = (va + vb) / (na + nb - 2.0);

    TTestResult r;
    const int df = static_cast<int>(na + nb) - 2;
    if (sp2 == 0.0) {
        if (ma == mb) {
            r.t = 0.0;
            r.p_raw = 1.0;
        } else {
            r.t = ma < mb ? -std::numeric_limits<double>::infinity()
                          : std::numeric_limits<double>::infinity();
            r.p_raw = 0.0;
        }
    } else {
        const double se = std::sqrt(sp2 * (1.0 / na + 1.0 / nb));
        r.t = (ma - mb) / se;
        boost::math::students_t_distribution<double> dist(df);
        r.p_raw = 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(r.t)));
    }
    r.p_adjusted = std::min(1.0, m * r.p_raw);
    return r;
}

std::vector<TTestResult> t_test_bonferroni(
    const std::vector<std::pair<std::vector<double>, std::vector<double>>>& pairs, int m) {
    if (m < static_cast<int>(pairs.size()))
        throw ParameterError("t_test_bonferroni: m must be >= number of pairs");
    std::vector<TTestResult> out;
    out.reserve(pairs.size());
    for (const auto& [a, b] : pairs) out.push_back(t_test_single(a, b, m));
    return out;
}

KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw ParameterError("ks_two_sample: empty sample");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    double d = 0.0;
    size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        d = std::max(d, std::fabs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }

    KsResult r;
    r.D = d;
    const double ne = na * nb / (na + nb);
    const double lambda = (std::sqrt(ne) + 0.12 + 0.11 / std::sqrt(ne)) * d;
    double p = 0.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = 2.0 * std::pow(-1.0, k - 1) * std::exp(-2.0 * k * k * lambda * lambda);
        p += term;
        if (std::fabs(term) < 1e-12) break;
    }
    r.p = std::clamp(p, 0.0, 1.0);
    return r;
}

double normalized_cross_correlation(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw ShapeError("ncc: shape mismatch");
    const double ma = a.mean(), mb = b.mean();
    double num = 0.0, da = 0.0, db = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double xa = a[i] - ma, xb = b[i] - mb;
        num += xa * xb;
        da += xa * xa;
        db += xb * xb;
    }
    const double denom = std::sqrt(da) * std::sqrt(db);
    return denom > 0.0 ? num / denom : 0.0;
}

StatsReport run_statistical_battery(const std::vector<std::string>& arm_names,
                                    const std::vector<std::vector<double>>& arm_dice) {
    if (arm_names.size() != arm_dice.size())
        throw ParameterError("run_statistical_battery: names/groups mismatch");
    StatsReport rep;
    rep.arm_names = arm_names;
    rep.arm_dice = arm_dice;
    rep.anova = one_way_anova(arm_dice);

    std::vector<std::pair<std::vector<double>, std::vector<double>>> pairs;
    for (size_t i = 0; i < arm_dice.size(); ++i)
        for (size_t j = i + 1; j < arm_dice.size(); ++j) {
            rep.pair_indices.emplace_back(static_cast<int>(i), static_cast<int>(j));
            pairs.emplace_back(arm_dice[i], arm_dice[j]);
        }
    rep.comparison_count = static_cast<int>(pairs.size());
    rep.pairwise = t_test_bonferroni(pairs, rep.comparison_count);
    return rep;
}

std::string StatsReport::render_table() const {
    std::ostringstream os;
    os << std::fixed << std::setprecision(4);
    os << "arm                      n     mean dice\n";
    for (size_t i = 0; i < arm_names.size(); ++i) {
        double mean = 0.0;
        for (double v : arm_dice[i]) mean += v;
        if (!arm_dice[i].empty()) mean /= static_cast<double>(arm_dice[i].size());
        os << std::left << std::setw(24) << arm_names[i] << std::right << std::setw(4)
           << arm_dice[i].size() << std::setw(12) << mean << "\n";
    }
    os << "one-way ANOVA: F(" << anova.df_between << "," << anova.df_within << ") = " << anova.F
       << ", p = " << std::setprecision(6) << anova.p << "\n";
    os << "pairwise t-tests (Bonferroni m = " << comparison_count << "):\n";
    for (size_t k = 0; k < pairwise.size(); ++k) {
        const auto& [i, j] = pair_indices[k];
        os << "  " << arm_names[static_cast<size_t>(i)] << " vs "
           << arm_names[static_cast<size_t>(j)] << ": t = " << std::setprecision(4)
           << pairwise[k].t << ", p = " << std::setprecision(6) << pairwise[k].p_raw
           << ", adj p = " << pairwise[k].p_adjusted << "\n";
    }
    return os.str();
}

}  // namespace pairdiff
