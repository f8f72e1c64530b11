#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "iib/budget.hpp"
#include "iib/data.hpp"
#include "iib/net.hpp"

namespace iib {

// EMA-tracked class prototypes in the anchor modality's feature space.
// Prototypes act as constants in every loss; gradients never reach them.
struct PrototypeBank {
    std::vector<Vec> prototypes;          // one vector of length dim per class
    std::vector<std::uint8_t> initialized;
    double rho = 0.9;                     // EMA momentum, in [0, 1)

    static PrototypeBank make(std::size_t C, std::size_t dim, double rho);

    std::size_t num_classes() const { return prototypes.size(); }
    std::size_t dim() const { return prototypes.empty() ? 0 : prototypes.front().size(); }
    bool all_initialized() const;
};

// P_c <- rho*P_c + (1-rho)*batch class mean for classes present in the batch.
// A class seen for the first time adopts the batch mean directly.
void ema_update(PrototypeBank& bank, const std::vector<Vec>& anchor_features,
                const std::vector<int>& labels, double rho);

// Prototype-guided relative alignment: mean cross-entropy of softmax over
// (z . P_c / tau_p) against the true class. Returns nullopt (alignment
// deferred) while any prototype is uninitialized. When `normalize` is set,
// features and prototypes are L2-normalized before the dot products.
// If `z_grads` is non-null it receives dL/dz per sample (same order).
std::optional<double> pra_loss(const std::vector<Vec>& z_batch, const std::vector<int>& labels,
                               const PrototypeBank& bank, double tau_p, bool normalize,
                               std::vector<Vec>* z_grads);

// lambda_m = max(0, beta_anchor - beta_m). Rejects the anchor itself.
double alignment_strength(const BudgetPrior& prior, std::size_t m);

struct AlignmentConfig {
    double tau_p = 0.5;
    bool normalize_features = true;
    std::size_t anchor = 0;
    Vec lambdas;  // per modality, zero at the anchor

    static AlignmentConfig from_prior(const BudgetPrior& prior, double tau_p = 0.5,
                                      bool normalize_features = true);
};

// Stage I objective: mean per-sample sum of unimodal cross-entropies plus the
// budget-gap-weighted PRA terms. When `update_bank` is set the EMA update runs
// on this batch's anchor features before the PRA terms are evaluated (keep it
// off for finite-difference probes, which need a loss that is a pure function
// of the parameters). Gradient outputs are accumulated per modality when
// non-null and must be pre-sized.
double stage1_loss(const BatchView& batch, const std::vector<DenseNet>& encoders,
                   const std::vector<DenseNet>& classifiers, PrototypeBank& bank,
                   const AlignmentConfig& config, bool update_bank,
                   std::vector<NetGrads>* encoder_grads, std::vector<NetGrads>* classifier_grads);

// Bank round-trips through the same binary float format as the networks.
void save_bank(std::ostream& os, const PrototypeBank& bank);
PrototypeBank load_bank(std::istream& is);

}  // namespace iib
