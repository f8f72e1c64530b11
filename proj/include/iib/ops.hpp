#pragma once

#include <cstddef>

#include "iib/matrix.hpp"

namespace iib {

// Probability vector over C classes for one sample/modality.
struct PredictiveDistribution {
    Vec probs;

    std::size_t num_classes() const { return probs.size(); }
};

// Validates non-negativity and unit sum (within 1e-9).
PredictiveDistribution make_distribution(Vec probs);

// softmax(v / tau) with max-subtraction. tau must be positive, v finite and nonempty.
Vec softmax_temp(const Vec& v, double tau);

inline Vec softmax(const Vec& v) { return softmax_temp(v, 1.0); }

// Shannon entropy normalized by log C, in [0, 1]. Exact-zero entries
// contribute zero; other log arguments are clamped at 1e-12. An all-equal
// input returns exactly 1. Requires C >= 2.
double entropy_normalized(const Vec& p);

inline double entropy_normalized(const PredictiveDistribution& p) { return entropy_normalized(p.probs); }

double log_sum_exp(const Vec& v);

// -log softmax(logits)[label], computed via log-sum-exp.
double cross_entropy_from_logits(const Vec& logits, int label);

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// Standard normal CDF.
inline double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace iib
