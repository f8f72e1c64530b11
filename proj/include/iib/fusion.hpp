#pragma once

#include <cstdint>
#include <vector>

#include "iib/budget.hpp"
#include "iib/data.hpp"
#include "iib/net.hpp"
#include "iib/ops.hpp"

namespace iib {

// Assembled gating-network input: per-modality normalized-entropy
// uncertainties followed by segment-mean-pooled features.
struct GatingInput {
    Vec uncertainties;        // u_m, each in [0, 1]
    std::vector<Vec> pooled;  // one d_p vector per modality

    // phi = [u_1..u_M, pooled_1.., pooled_M], length M + M*d_p.
    Vec flat() const;
};

// Per-sample fusion coefficients: raw scores alpha and their normalization.
struct FusionWeights {
    Vec alpha;    // beta_m * exp(-u_m) * sigmoid(gate logit), >= 0
    Vec weights;  // alpha / sum(alpha), a convex combination
};

enum class WeightMode : std::uint8_t {
    kGated = 0,         // learned per-sample gating
    kFixedPrior = 1,    // weights pinned to beta, gate ignored
    kFixedUniform = 2,  // weights pinned to 1/M, gate ignored
};

// u = entropy_normalized(p).
double sample_uncertainty(const PredictiveDistribution& p);

// Non-overlapping segment means reducing `z` to d_p values; segment s covers
// [floor(s*d/d_p), floor((s+1)*d/d_p)). d_p = d is the identity.
Vec pool_segments(const Vec& z, std::size_t d_p);

// Accumulates the pooling adjoint into g_z (each input coordinate receives
// its segment's gradient divided by the segment length).
void pool_segments_backward(const Vec& g_pooled, std::size_t d, Vec& g_z);

GatingInput build_gate_input(const std::vector<PredictiveDistribution>& p_all,
                             const std::vector<Vec>& z_all, std::size_t d_p);

// alpha_m = beta_m * exp(-u_m) * sigmoid(gate_logits_m).
Vec fusion_scores(const BudgetPrior& prior, const Vec& u, const Vec& gate_logits);

// weights = alpha / sum(alpha); fused = sum_m weights_m * z_m. Throws
// DegenerateEvidence when sum(alpha) = 0; callers fall back to weights = beta.
std::pair<FusionWeights, Vec> normalize_and_fuse(const Vec& alpha, const std::vector<Vec>& z_all);

struct FusionConfig {
    double gamma = 0.5;            // weight of the unimodal auxiliary term
    std::size_t d_p = 4;           // pooled feature size per modality
    bool detach_entropy = true;    // u_m as constants vs. differentiated
    WeightMode weight_mode = WeightMode::kGated;
};

struct Stage2Grads {
    std::vector<NetGrads> encoders;
    std::vector<NetGrads> classifiers;
    NetGrads fuse_head;
    NetGrads gate;
};

// Stage II objective: mean fused cross-entropy plus gamma times the
// fusion-weighted mean of the unimodal cross-entropies. Gradients reach the
// gate through the normalized weights and the encoders through the fused
// feature, the pooled gate inputs and the auxiliary term.
//
// `u_override` (B x M) substitutes fixed uncertainties for the computed ones;
// with detach_entropy this makes the loss an exact function of the parameters
// for finite-difference probes. `weights_out` (B x M) receives the per-sample
// fusion weights when non-null.
double stage2_loss(const BatchView& batch, const std::vector<DenseNet>& encoders,
                   const std::vector<DenseNet>& classifiers, const DenseNet& fuse_head,
                   const DenseNet& gate_net, const BudgetPrior& prior, const FusionConfig& config,
                   Stage2Grads* grads, const Matrix* u_override = nullptr, Matrix* weights_out = nullptr);

}  // namespace iib
