#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "iib/data.hpp"
#include "iib/net.hpp"

namespace iib {

// Normalized information-budget prior over modalities. Computed once from
// pretrained unimodal models and then held fixed; training never writes to it.
struct BudgetPrior {
    Vec raw;             // B_m, each in [0, 1]
    Vec beta;            // softmax_temp(raw, tau), sums to 1
    double tau = 0.07;
    std::size_t anchor = 0;  // argmax beta, lowest index on ties

    std::size_t M() const { return beta.size(); }

    static BudgetPrior uniform(std::size_t M);
};

// normalize_budget(B, tau): beta = softmax_temp(B, tau), anchor = argmax.
// Rejects B entries outside [0, 1] and non-positive tau.
BudgetPrior normalize_budget(const Vec& B, double tau);

struct PretrainConfig {
    std::size_t epochs = 30;
    std::size_t batch_size = 32;
    std::size_t hidden_width = 32;
    std::size_t feature_dim = 16;
    AdamConfig adam;
    std::uint64_t seed = 0;
};

struct PretrainEpochLog {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double train_acc = 0.0;
    double test_acc = 0.0;
};

// Encoder-classifier pair for one modality plus its training history.
struct UnimodalModel {
    std::size_t modality = 0;
    DenseNet encoder;
    DenseNet classifier;
    std::vector<PretrainEpochLog> log;

    double final_train_acc() const { return log.empty() ? 0.0 : log.back().train_acc; }
    double final_test_acc() const { return log.empty() ? 0.0 : log.back().test_acc; }
};

// Cross-entropy training of encoder+classifier on modality m alone.
// Deterministic given config.seed. Aborts on non-finite loss.
UnimodalModel pretrain_unimodal(const Dataset& train, const Dataset& test, std::size_t m,
                                const PretrainConfig& config);

// Fraction of samples whose argmax unimodal prediction matches the label.
double unimodal_accuracy(const UnimodalModel& model, const Dataset& ds);

// B_m = mean over `ds` of (1 - entropy_normalized(p_m)) per modality.
// Models must cover every modality of `ds`, in order.
Vec estimate_budget(const std::vector<UnimodalModel>& models, const Dataset& ds);

// CSV with a '#tau=' metadata line and rows (modality, B, beta, anchor flag).
void save_budget_csv(const BudgetPrior& prior, const std::string& path);
BudgetPrior load_budget_csv(const std::string& path);

// Binary checkpoint of one pretrained encoder-classifier pair, log included.
void save_unimodal_file(const std::string& path, const UnimodalModel& model);
UnimodalModel load_unimodal_file(const std::string& path);

}  // namespace iib
