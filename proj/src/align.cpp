#include "iib/align.hpp"

#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>

#include "iib/errors.hpp"
#include "iib/ops.hpp"

namespace iib {

namespace {

constexpr double kNormFloor = 1e-12;

// z / max(||z||, kNormFloor). Returns the effective divisor so the backward
// pass can reproduce the exact branch taken here.
Vec l2_normalize(const Vec& z, double& r_eff) {
    const double r = norm2(z);
    r_eff = r > kNormFloor ? r : kNormFloor;
    Vec out(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i] / r_eff;
    return out;
}

}  // namespace

PrototypeBank PrototypeBank::make(std::size_t C, std::size_t dim, double rho) {
    if (C < 2) throw InvalidInput("PrototypeBank: need at least 2 classes");
    if (dim == 0) throw InvalidInput("PrototypeBank: dim must be positive");
    if (!(rho >= 0.0 && rho < 1.0)) throw InvalidInput("PrototypeBank: rho must lie in [0, 1)");
    PrototypeBank bank;
    bank.prototypes.assign(C, Vec(dim, 0.0));
    bank.initialized.assign(C, 0);
    bank.rho = rho;
    return bank;
}

bool PrototypeBank::all_initialized() const {
    for (std::uint8_t flag : initialized)
        if (!flag) return false;
    return true;
}

void ema_update(PrototypeBank& bank, const std::vector<Vec>& anchor_features,
                const std::vector<int>& labels, double rho) {
    if (!(rho >= 0.0 && rho < 1.0)) throw InvalidInput("ema_update: rho must lie in [0, 1)");
    if (anchor_features.size() != labels.size())
        throw InvalidInput("ema_update: features and labels disagree in length");
    const std::size_t C = bank.num_classes();
    const std::size_t d = bank.dim();
    for (std::size_t i = 0; i < anchor_features.size(); ++i) {
        if (anchor_features[i].size() != d) throw InvalidInput("ema_update: feature dimension mismatch");
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= C)
            throw InvalidInput("ema_update: label out of range");
    }

    std::vector<Vec> sums(C, Vec(d, 0.0));
    std::vector<std::size_t> counts(C, 0);
    for (std::size_t i = 0; i < anchor_features.size(); ++i) {
        axpy(1.0, anchor_features[i], sums[static_cast<std::size_t>(labels[i])]);
        ++counts[static_cast<std::size_t>(labels[i])];
    }
    for (std::size_t c = 0; c < C; ++c) {
        if (counts[c] == 0) continue;
        const double inv = 1.0 / static_cast<double>(counts[c]);
        if (bank.initialized[c]) {
            for (std::size_t j = 0; j < d; ++j)
                bank.prototypes[c][j] = rho * bank.prototypes[c][j] + (1.0 - rho) * sums[c][j] * inv;
        } else {
            for (std::size_t j = 0; j < d; ++j) bank.prototypes[c][j] = sums[c][j] * inv;
            bank.initialized[c] = 1;
        }
    }
}

std::optional<double> pra_loss(const std::vector<Vec>& z_batch, const std::vector<int>& labels,
                               const PrototypeBank& bank, double tau_p, bool normalize,
                               std::vector<Vec>* z_grads) {
    if (!(tau_p > 0.0) || !std::isfinite(tau_p)) throw InvalidInput("pra_loss: tau_p must be positive");
    if (z_batch.empty()) throw InvalidInput("pra_loss: empty batch");
    if (z_batch.size() != labels.size()) throw InvalidInput("pra_loss: features and labels disagree in length");
    if (!bank.all_initialized()) return std::nullopt;

    const std::size_t C = bank.num_classes();
    const std::size_t d = bank.dim();
    const std::size_t B = z_batch.size();

    std::vector<Vec> protos(C);
    for (std::size_t c = 0; c < C; ++c) {
        double unused;
        protos[c] = normalize ? l2_normalize(bank.prototypes[c], unused) : bank.prototypes[c];
    }

    double loss = 0.0;
    if (z_grads) z_grads->assign(B, Vec());
    for (std::size_t i = 0; i < B; ++i) {
        if (z_batch[i].size() != d) throw InvalidInput("pra_loss: feature dimension mismatch");
        const int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= C) throw InvalidInput("pra_loss: label out of range");

        double r_eff = 1.0;
        const Vec z_hat = normalize ? l2_normalize(z_batch[i], r_eff) : z_batch[i];
        Vec logits(C);
        for (std::size_t c = 0; c < C; ++c) logits[c] = dot(z_hat, protos[c]) / tau_p;
        loss += cross_entropy_from_logits(logits, y);

        if (!z_grads) continue;
        // d(mean CE)/d z_hat = (1/(B*tau_p)) * sum_c (q_c - [c==y]) * P_c
        const Vec q = softmax(logits);
        Vec g_hat(d, 0.0);
        for (std::size_t c = 0; c < C; ++c) {
            const double coeff = (q[c] - (static_cast<std::size_t>(y) == c ? 1.0 : 0.0)) /
                                 (tau_p * static_cast<double>(B));
            axpy(coeff, protos[c], g_hat);
        }
        if (normalize) {
            Vec g(d);
            if (norm2(z_batch[i]) > kNormFloor) {
                // z_hat = z/||z||: project out the radial component.
                const double radial = dot(g_hat, z_hat);
                for (std::size_t j = 0; j < d; ++j) g[j] = (g_hat[j] - radial * z_hat[j]) / r_eff;
            } else {
                // Below the floor the map is linear: z_hat = z / kNormFloor.
                for (std::size_t j = 0; j < d; ++j) g[j] = g_hat[j] / kNormFloor;
            }
            (*z_grads)[i] = std::move(g);
        } else {
            (*z_grads)[i] = std::move(g_hat);
        }
    }
    return loss / static_cast<double>(B);
}

double alignment_strength(const BudgetPrior& prior, std::size_t m) {
    if (m >= prior.M()) throw InvalidInput("alignment_strength: modality index out of range");
    if (m == prior.anchor) throw InvalidInput("alignment_strength: anchor has no alignment term");
    const double gap = prior.beta[prior.anchor] - prior.beta[m];
    // The anchor maximizes beta, so the ReLU clamp can never fire.
    return gap > 0.0 ? gap : 0.0;
}

AlignmentConfig AlignmentConfig::from_prior(const BudgetPrior& prior, double tau_p, bool normalize_features) {
    AlignmentConfig cfg;
    cfg.tau_p = tau_p;
    cfg.normalize_features = normalize_features;
    cfg.anchor = prior.anchor;
    cfg.lambdas.assign(prior.M(), 0.0);
    for (std::size_t m = 0; m < prior.M(); ++m)
        if (m != prior.anchor) cfg.lambdas[m] = alignment_strength(prior, m);
    return cfg;
}

double stage1_loss(const BatchView& batch, const std::vector<DenseNet>& encoders,
                   const std::vector<DenseNet>& classifiers, PrototypeBank& bank,
                   const AlignmentConfig& config, bool update_bank,
                   std::vector<NetGrads>* encoder_grads, std::vector<NetGrads>* classifier_grads) {
    const std::size_t M = encoders.size();
    const std::size_t B = batch.size();
    if (B == 0) throw InvalidInput("stage1_loss: empty batch");
    if (classifiers.size() != M || batch.ds->M() != M || config.lambdas.size() != M)
        throw InvalidInput("stage1_loss: modality count mismatch");
    if (config.anchor >= M) throw InvalidInput("stage1_loss: anchor index out of range");
    const double inv_b = 1.0 / static_cast<double>(B);

    std::vector<int> labels(B);
    for (std::size_t i = 0; i < B; ++i) labels[i] = batch.sample(i).label;

    // Forward everything once, keeping tapes for the backward pass.
    std::vector<std::vector<ForwardTape>> enc_tapes(M, std::vector<ForwardTape>(B));
    std::vector<std::vector<ForwardTape>> cls_tapes(M, std::vector<ForwardTape>(B));
    double ce_total = 0.0;
    for (std::size_t m = 0; m < M; ++m) {
        for (std::size_t i = 0; i < B; ++i) {
            forward(encoders[m], batch.sample(i).inputs[m], enc_tapes[m][i]);
            forward(classifiers[m], enc_tapes[m][i].output(), cls_tapes[m][i]);
            if (!all_finite(cls_tapes[m][i].output()))
                throw TrainingAbort("stage1_loss: non-finite classifier logits (diverged parameters?)");
            ce_total += cross_entropy_from_logits(cls_tapes[m][i].output(), labels[i]);
        }
    }

    if (update_bank) {
        std::vector<Vec> anchor_feats(B);
        for (std::size_t i = 0; i < B; ++i) anchor_feats[i] = enc_tapes[config.anchor][i].output();
        ema_update(bank, anchor_feats, labels, bank.rho);
    }

    double loss = ce_total * inv_b;
    std::vector<std::vector<Vec>> pra_grads(M);
    for (std::size_t m = 0; m < M; ++m) {
        if (m == config.anchor || config.lambdas[m] == 0.0) continue;
        std::vector<Vec> z(B);
        for (std::size_t i = 0; i < B; ++i) z[i] = enc_tapes[m][i].output();
        const auto pra = pra_loss(z, labels, bank, config.tau_p, config.normalize_features,
                                  encoder_grads ? &pra_grads[m] : nullptr);
        if (pra) loss += config.lambdas[m] * *pra;
    }

    if (!encoder_grads && !classifier_grads) return loss;
    if (!encoder_grads || !classifier_grads || encoder_grads->size() != M || classifier_grads->size() != M)
        throw InvalidInput("stage1_loss: gradient outputs must both be provided and sized per modality");

    Vec dlogits, dz;
    for (std::size_t m = 0; m < M; ++m) {
        for (std::size_t i = 0; i < B; ++i) {
            dlogits = softmax(cls_tapes[m][i].output());
            dlogits[static_cast<std::size_t>(labels[i])] -= 1.0;
            for (double& g : dlogits) g *= inv_b;
            dz = backward(classifiers[m], cls_tapes[m][i], dlogits, (*classifier_grads)[m]);
            if (!pra_grads[m].empty()) axpy(config.lambdas[m], pra_grads[m][i], dz);
            backward(encoders[m], enc_tapes[m][i], dz, (*encoder_grads)[m]);
        }
    }
    return loss;
}

// ---- serialization ---------------------------------------------------------

static constexpr char kBankMagic[8] = {'I', 'I', 'B', 'B', 'N', 'K', '0', '1'};

void save_bank(std::ostream& os, const PrototypeBank& bank) {
    os.write(kBankMagic, sizeof(kBankMagic));
    const auto C = static_cast<std::uint32_t>(bank.num_classes());
    const auto d = static_cast<std::uint32_t>(bank.dim());
    os.write(reinterpret_cast<const char*>(&C), sizeof(C));
    os.write(reinterpret_cast<const char*>(&d), sizeof(d));
    os.write(reinterpret_cast<const char*>(&bank.rho), sizeof(double));
    os.write(reinterpret_cast<const char*>(bank.initialized.data()),
             static_cast<std::streamsize>(bank.initialized.size()));
    for (const Vec& p : bank.prototypes)
        os.write(reinterpret_cast<const char*>(p.data()), static_cast<std::streamsize>(p.size() * sizeof(double)));
    if (!os) throw IoError("prototype bank: write failed");
}

PrototypeBank load_bank(std::istream& is) {
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kBankMagic, sizeof(magic)) != 0) throw IoError("prototype bank: bad magic");
    std::uint32_t C = 0, d = 0;
    double rho = 0.0;
    is.read(reinterpret_cast<char*>(&C), sizeof(C));
    is.read(reinterpret_cast<char*>(&d), sizeof(d));
    is.read(reinterpret_cast<char*>(&rho), sizeof(double));
    if (!is) throw IoError("prototype bank: truncated header");
    PrototypeBank bank = PrototypeBank::make(C, d, rho);
    is.read(reinterpret_cast<char*>(bank.initialized.data()), static_cast<std::streamsize>(C));
    for (Vec& p : bank.prototypes)
        is.read(reinterpret_cast<char*>(p.data()), static_cast<std::streamsize>(p.size() * sizeof(double)));
    if (!is) throw IoError("prototype bank: truncated payload");
    return bank;
}

}  // namespace iib
