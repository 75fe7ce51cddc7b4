#include "protojunk/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace protojunk {

namespace {

constexpr double kZ95 = 1.959963984540054;  // two-sided 95% normal quantile

StratumStat binomial_stat(std::int64_t hits, std::int64_t n) {
    StratumStat s;
    s.n = n;
    s.value = static_cast<double>(hits) / static_cast<double>(n);
    const double half = kZ95 * std::sqrt(s.value * (1.0 - s.value) / static_cast<double>(n));
    s.ci_low = std::max(0.0, s.value - half);
    s.ci_high = std::min(1.0, s.value + half);
    return s;
}

void check_record(const EvalRecord& r) {
    if (r.way < 1) throw InvalidInput("eval record with way < 1");
    if (r.true_label < 0 || r.true_label > r.way || r.predicted_label < 0 ||
        r.predicted_label > r.way) {
        throw InvalidInput("eval record label out of range");
    }
    if (!std::isfinite(r.junk_score)) throw InvalidInput("eval record junk score not finite");
}

}  // namespace

MetricsReport accuracy_report(const std::vector<EvalRecord>& records) {
    MetricsReport report;
    report.total = static_cast<std::int64_t>(records.size());
    std::int64_t nj_n = 0, nj_hit = 0, j_n = 0, j_hit = 0;
    for (const auto& r : records) {
        check_record(r);
        if (r.true_label == r.way) {
            ++j_n;
            if (r.predicted_label == r.way) ++j_hit;
        } else {
            ++nj_n;
            if (r.predicted_label == r.true_label) ++nj_hit;
        }
    }
    if (nj_n > 0) report.non_junk = binomial_stat(nj_hit, nj_n);
    if (j_n > 0) report.junk = binomial_stat(j_hit, j_n);
    return report;
}

double auc(const std::vector<EvalRecord>& records) {
    std::vector<double> scores;
    std::vector<bool> is_junk;
    scores.reserve(records.size());
    for (const auto& r : records) {
        check_record(r);
        scores.push_back(r.junk_score);
        is_junk.push_back(r.true_label == r.way);
    }
    const std::int64_t n_junk = std::count(is_junk.begin(), is_junk.end(), true);
    const std::int64_t n_other = static_cast<std::int64_t>(records.size()) - n_junk;
    if (n_junk == 0 || n_other == 0) {
        throw InvalidInput("auc undefined: need at least one junk and one non-junk record");
    }

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // mid-ranks over tie groups
    double junk_rank_sum = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double mid_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
        for (std::size_t k = i; k <= j; ++k) {
            if (is_junk[order[k]]) junk_rank_sum += mid_rank;
        }
        i = j + 1;
    }
    const double nj = static_cast<double>(n_junk);
    return (junk_rank_sum - nj * (nj + 1.0) / 2.0) / (nj * static_cast<double>(n_other));
}

double auc_pair_counting(const std::vector<EvalRecord>& records) {
    std::vector<double> junk_scores, other_scores;
    for (const auto& r : records) {
        check_record(r);
        (r.true_label == r.way ? junk_scores : other_scores).push_back(r.junk_score);
    }
    if (junk_scores.empty() || other_scores.empty()) {
        throw InvalidInput("auc undefined: need at least one junk and one non-junk record");
    }
    double wins = 0.0;
    for (double a : junk_scores) {
        for (double b : other_scores) {
            if (a > b) wins += 1.0;
            else if (a == b) wins += 0.5;
        }
    }
    return wins / (static_cast<double>(junk_scores.size()) *
                   static_cast<double>(other_scores.size()));
}

MetricsReport full_report(const std::vector<EvalRecord>& records) {
    MetricsReport report = accuracy_report(records);
    if (report.non_junk && report.junk) report.auc = auc(records);
    return report;
}

}  // namespace protojunk
