#include "iib/ops.hpp"

#include <algorithm>
#include <cmath>

namespace iib {

PredictiveDistribution make_distribution(Vec probs) {
    if (probs.empty()) throw InvalidInput("distribution: empty probability vector");
    double sum = 0.0;
    for (double p : probs) {
        if (!std::isfinite(p) || p < 0.0) throw InvalidInput("distribution: entries must be finite and non-negative");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw InvalidInput("distribution: entries must sum to 1 within 1e-9");
    return PredictiveDistribution{std::move(probs)};
}

Vec softmax_temp(const Vec& v, double tau) {
    if (!(tau > 0.0)) throw InvalidInput("softmax_temp: temperature must be positive");
    if (v.empty()) throw InvalidInput("softmax_temp: empty input");
    if (!all_finite(v)) throw InvalidInput("softmax_temp: non-finite input");

    const double vmax = *std::max_element(v.begin(), v.end());
    Vec out(v.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out[i] = std::exp((v[i] - vmax) / tau);
        sum += out[i];
    }
    for (double& x : out) x /= sum;
    return out;
}

double entropy_normalized(const Vec& p) {
    const std::size_t c = p.size();
    if (c < 2) throw InvalidInput("entropy_normalized: need at least 2 classes");
    bool uniform = true;
    double sum = 0.0;
    for (double x : p) {
        if (!std::isfinite(x) || x < 0.0) throw InvalidInput("entropy_normalized: invalid probability entry");
        sum += x;
        if (x != p[0]) uniform = false;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw InvalidInput("entropy_normalized: probabilities must sum to 1 within 1e-9");
    if (uniform) return 1.0;  // exact at the maximum-entropy point

    double h = 0.0;
    for (double x : p) {
        if (x == 0.0) continue;  // 0 log 0 := 0
        h -= x * std::log(std::max(x, 1e-12));
    }
    const double hn = h / std::log(static_cast<double>(c));
    return std::clamp(hn, 0.0, 1.0);
}

double log_sum_exp(const Vec& v) {
    const double vmax = *std::max_element(v.begin(), v.end());
    double sum = 0.0;
    for (double x : v) sum += std::exp(x - vmax);
    return vmax + std::log(sum);
}

double cross_entropy_from_logits(const Vec& logits, int label) {
    if (label < 0 || static_cast<std::size_t>(label) >= logits.size())
        throw InvalidInput("cross_entropy_from_logits: label out of range");
    return log_sum_exp(logits) - logits[static_cast<std::size_t>(label)];
}

}  // namespace iib
