#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "fakegaze/errors.hpp"

namespace fakegaze {

// Focal loss hyperparameters. alpha weighs the positive class: a sample with
// label 1 is scaled by alpha and a label-0 sample by (1 - alpha), except that
// alpha == 1 disables class weighting entirely (both classes weigh 1). The
// neutral default would otherwise zero out every negative sample, which is
// never what a caller asking for "no reweighting" means.
struct FocalParams {
    double gamma = 2.0;
    double alpha = 1.0;
    double clamp_epsilon = 1e-7;

    void validate() const {
        if (gamma < 0.0) throw ConfigError("focal gamma must be >= 0, got " + std::to_string(gamma));
        if (!(alpha > 0.0 && alpha <= 1.0)) {
            throw ConfigError("focal alpha must be in (0, 1], got " + std::to_string(alpha));
        }
        if (!(clamp_epsilon > 0.0 && clamp_epsilon < 0.1)) {
            throw ConfigError("focal clamp_epsilon must be in (0, 0.1), got " +
                              std::to_string(clamp_epsilon));
        }
    }
};

// One sample's focal term and its derivative w.r.t. the raw probability.
// p_t = p if y == 1 else 1 - p (after clamping p to [eps, 1-eps]);
// loss = -w * (1 - p_t)^gamma * ln(p_t). The clamp has zero gradient outside
// its interval. Shared by the pure batch loss below and the autodiff op so
// the two cannot drift apart.
template <typename T>
struct FocalTerm {
    T loss;
    T dloss_dp;
};

template <typename T>
inline FocalTerm<T> focal_term(T p, int y, T gamma, T alpha, T eps) {
    const bool clamped_low = p < eps;
    const bool clamped_high = p > T(1) - eps;
    const T ph = clamped_low ? eps : (clamped_high ? T(1) - eps : p);
    const T pt = y ? ph : T(1) - ph;
    const T w = (alpha == T(1)) ? T(1) : (y ? alpha : T(1) - alpha);
    const T one_minus = T(1) - pt;
    const T log_pt = std::log(pt);
    const T pow_g = (gamma == T(0)) ? T(1) : std::pow(one_minus, gamma);
    const T loss = -w * pow_g * log_pt;
    // d loss / d p_t = w * gamma * (1-pt)^(gamma-1) * ln(pt) - w * (1-pt)^gamma / pt,
    // with the gamma = 0 branch avoiding 0 * (1-pt)^-1.
    T dpt = -w * (pow_g / pt);
    if (gamma != T(0)) dpt += w * gamma * std::pow(one_minus, gamma - T(1)) * log_pt;
    T dp = y ? dpt : -dpt;
    if (clamped_low || clamped_high) dp = T(0);
    return {loss, dp};
}

// Mean binary cross-entropy with probabilities clamped to [1e-7, 1 - 1e-7].
// Implemented directly (not via focal_term) so the focal(gamma=0) identity is
// exercised across two independent code paths.
double log_loss(const std::vector<double>& probs, const std::vector<int>& labels);

// Mean focal loss per focal_term above.
double focal_loss(const std::vector<double>& probs, const std::vector<int>& labels,
                  const FocalParams& params);

struct ConfusionCounts {
    std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;
    std::uint64_t total() const { return tp + fp + tn + fn; }
};

// Predicted positive iff p >= threshold (ties count as positive).
ConfusionCounts confusion(const std::vector<double>& probs, const std::vector<int>& labels,
                          double threshold);

// 2tp / (2tp + fp + fn); returns 1.0 when tp + fp + fn == 0 (no positives
// exist and none were predicted — the degenerate case is a perfect score).
double f1_score(const ConfusionCounts& c);

double accuracy(const ConfusionCounts& c);

enum class Split { train, validation };

inline const char* split_name(Split s) { return s == Split::train ? "train" : "validation"; }

// One row of the per-epoch training record (the rows behind the exported
// curves). Always double precision regardless of the model's compute type.
struct MetricsRecord {
    int epoch = 0;  // 1-based
    Split split = Split::train;
    double loss = 0.0;      // focal loss at the run's gamma/alpha
    double log_loss = 0.0;  // binary cross-entropy
    double f1 = 0.0;
    double accuracy = 0.0;
};

}  // namespace fakegaze
