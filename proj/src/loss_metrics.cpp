#include "fakegaze/loss_metrics.hpp"

namespace fakegaze {

namespace {

void check_batch(const std::vector<double>& probs, const std::vector<int>& labels) {
    if (probs.empty()) throw ContractError("loss/metric input is empty");
    if (probs.size() != labels.size()) {
        throw ContractError("probs length " + std::to_string(probs.size()) +
                            " does not match labels length " + std::to_string(labels.size()));
    }
    for (int y : labels) {
        if (y != 0 && y != 1) throw ContractError("labels must be 0 or 1, got " + std::to_string(y));
    }
}

constexpr double kClampEps = 1e-7;

}  // namespace

double log_loss(const std::vector<double>& probs, const std::vector<int>& labels) {
    check_batch(probs, labels);
    double sum = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        double p = probs[i];
        if (p < kClampEps) p = kClampEps;
        if (p > 1.0 - kClampEps) p = 1.0 - kClampEps;
        sum += labels[i] ? -std::log(p) : -std::log(1.0 - p);
    }
    return sum / static_cast<double>(probs.size());
}

double focal_loss(const std::vector<double>& probs, const std::vector<int>& labels,
                  const FocalParams& params) {
    check_batch(probs, labels);
    params.validate();
    double sum = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        sum += focal_term<double>(probs[i], labels[i], params.gamma, params.alpha,
                                  params.clamp_epsilon)
                   .loss;
    }
    return sum / static_cast<double>(probs.size());
}

ConfusionCounts confusion(const std::vector<double>& probs, const std::vector<int>& labels,
                          double threshold) {
    check_batch(probs, labels);
    if (!(threshold > 0.0 && threshold < 1.0)) {
        throw ContractError("threshold must be in (0, 1), got " + std::to_string(threshold));
    }
    ConfusionCounts c;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const bool pred = probs[i] >= threshold;
        if (pred && labels[i] == 1) ++c.tp;
        if (pred && labels[i] == 0) ++c.fp;
        if (!pred && labels[i] == 0) ++c.tn;
        if (!pred && labels[i] == 1) ++c.fn;
    }
    return c;
}

double f1_score(const ConfusionCounts& c) {
    const std::uint64_t denom = 2 * c.tp + c.fp + c.fn;
    if (denom == 0) return 1.0;
    return 2.0 * static_cast<double>(c.tp) / static_cast<double>(denom);
}

double accuracy(const ConfusionCounts& c) {
    if (c.total() == 0) throw ContractError("accuracy of an empty confusion table");
    return static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
}

}  // namespace fakegaze
