#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "protojunk/errors.hpp"

namespace protojunk {

// One evaluated query. junk_score is whatever detector score the caller wants
// ranked; the pipeline fills in the junk-vs-classes log-odds margin.
struct EvalRecord {
    int true_label = 0;       // 0..way-1, or way for junk
    int predicted_label = 0;  // same range
    int way = 0;
    double junk_score = 0.0;
};

struct StratumStat {
    std::int64_t n = 0;
    double value = 0.0;  // accuracy (non-junk) or junk-detection rate (junk)
    double ci_low = 0.0;
    double ci_high = 0.0;
};

struct MetricsReport {
    std::int64_t total = 0;
    std::optional<StratumStat> non_junk;  // undefined when no non-junk records
    std::optional<StratumStat> junk;      // undefined when no junk records
    std::optional<double> auc;            // undefined unless both strata present
};

// Accuracies with binomial normal-approximation 95% intervals. Strata with no
// records stay undefined rather than zero.
MetricsReport accuracy_report(const std::vector<EvalRecord>& records);

// Rank-based AUC of junk_score as a detector of true-junk: probability that a
// random junk record outscores a random non-junk record, ties worth 0.5.
// Computed via the rank-sum with mid-ranks for ties.
double auc(const std::vector<EvalRecord>& records);

// Same quantity by direct pair counting; O(n^2), kept as a cross-check.
double auc_pair_counting(const std::vector<EvalRecord>& records);

// accuracy_report plus the AUC when it is defined.
MetricsReport full_report(const std::vector<EvalRecord>& records);

}  // namespace protojunk
