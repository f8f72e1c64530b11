#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "iib/align.hpp"
#include "iib/budget.hpp"
#include "iib/data.hpp"
#include "iib/fusion.hpp"
#include "iib/io_util.hpp"
#include "iib/net.hpp"

namespace iib {

enum class StageMode : std::uint8_t {
    kBlended = 0,     // annealed convex blend of both objectives every epoch
    kSequential = 1,  // pure alignment for the first round(lambda_start*T) epochs, then pure fusion
};

struct TrainConfig {
    std::size_t T = 50;
    std::size_t batch_size = 32;
    double lambda_start = 0.8;
    double gamma = 0.5;
    double tau = 0.07;
    double tau_p = 0.5;
    double rho = 0.9;
    std::size_t hidden_width = 32;
    std::size_t feature_dim = 16;
    std::size_t gate_hidden = 16;
    std::size_t d_p = 4;
    AdamConfig adam;
    std::uint64_t seed = 0;
    bool warm_start = false;
    bool normalize_features = true;
    bool detach_entropy = true;
    WeightMode weight_mode = WeightMode::kGated;
    StageMode stage_mode = StageMode::kBlended;

    void validate() const;
    KvMap to_kv() const;
    static TrainConfig from_kv(const KvMap& kv, const std::string& origin);
    // FNV-1a over the canonical key=value rendering; stamps result files.
    std::uint64_t digest() const;
};

struct TrainEpochLog {
    std::size_t epoch = 0;
    double lambda = 0.0;
    double loss_stage1 = 0.0;
    double loss_stage2 = 0.0;
    double loss_total = 0.0;
    double train_acc = 0.0;
    double test_acc = 0.0;
    Vec mean_weights;  // batch-averaged fusion weights per modality
};

struct TrainedModel {
    std::vector<DenseNet> encoders;
    std::vector<DenseNet> classifiers;
    DenseNet fuse_head;
    DenseNet gate;
    PrototypeBank bank;
    BudgetPrior prior;
    TrainConfig config;
    std::vector<TrainEpochLog> log;
    bool aborted = false;
    std::string abort_reason;

    std::size_t M() const { return encoders.size(); }
};

// lambda(t) = lambda_start * (1 - t/T) for a 0-based epoch index t <= T.
double schedule_lambda(std::size_t t, std::size_t T, double lambda_start);

using ModelGrads = Stage2Grads;
ModelGrads make_model_grads(const TrainedModel& model);

// L = lambda(t)*L_I + (1-lambda(t))*L_II on one batch, with gradients the
// matching convex combination. Both component losses are always evaluated
// (the logs record them even at the endpoints); a component's backward pass
// runs only when its weight is nonzero. The prototype bank updates from this
// batch only when update_bank is set and lambda(t) > 0.
struct TotalLossParts {
    double total = 0.0;
    double stage1 = 0.0;
    double stage2 = 0.0;
    double lambda = 0.0;
};
TotalLossParts total_loss(const BatchView& batch, TrainedModel& model, std::size_t t,
                          bool update_bank, ModelGrads* grads, const Matrix* u_override = nullptr,
                          Matrix* weights_out = nullptr);

// T epochs of seeded shuffled mini-batches with Adam on total_loss. Optional
// warm start copies pretrained unimodal weights (required when
// config.warm_start is set). On a non-finite loss the model reverts to the
// last completed epoch and returns with `aborted` set.
TrainedModel train(const Dataset& train_ds, const Dataset& test_ds, const BudgetPrior& prior,
                   const TrainConfig& config, const std::vector<UnimodalModel>* warm_models = nullptr);

struct InferResult {
    int prediction = 0;
    FusionWeights weights;
    std::vector<PredictiveDistribution> p_all;
    Vec fused_logits;
};

// Deterministic forward pass of the full pipeline on one sample.
InferResult infer(const TrainedModel& model, const std::vector<Vec>& inputs);

// Fused-prediction accuracy over a dataset.
double model_accuracy(const TrainedModel& model, const Dataset& ds);

// Model container: every network, the prototype bank, the prior and the
// config in one binary file ("IIBMDL01").
void save_model(const std::string& path, const TrainedModel& model);
TrainedModel load_model(const std::string& path);

// Epoch log as CSV (epoch, lambda, losses, accuracies, mean weights).
void save_train_log(const std::string& path, const TrainedModel& model);

}  // namespace iib
