#include "iib/fusion.hpp"

#include <cmath>

#include "iib/errors.hpp"

namespace iib {

Vec GatingInput::flat() const {
    Vec phi(uncertainties);
    for (const Vec& p : pooled) phi.insert(phi.end(), p.begin(), p.end());
    return phi;
}

double sample_uncertainty(const PredictiveDistribution& p) { return entropy_normalized(p); }

Vec pool_segments(const Vec& z, std::size_t d_p) {
    const std::size_t d = z.size();
    if (d_p == 0) throw InvalidInput("pool_segments: d_p must be positive");
    if (d_p > d) throw InvalidInput("pool_segments: d_p exceeds feature dimension");
    Vec out(d_p, 0.0);
    for (std::size_t s = 0; s < d_p; ++s) {
        const std::size_t lo = s * d / d_p;
        const std::size_t hi = (s + 1) * d / d_p;
        double acc = 0.0;
        for (std::size_t j = lo; j < hi; ++j) acc += z[j];
        out[s] = acc / static_cast<double>(hi - lo);
    }
    return out;
}

void pool_segments_backward(const Vec& g_pooled, std::size_t d, Vec& g_z) {
    const std::size_t d_p = g_pooled.size();
    if (g_z.size() != d) throw InvalidInput("pool_segments_backward: output gradient size mismatch");
    for (std::size_t s = 0; s < d_p; ++s) {
        const std::size_t lo = s * d / d_p;
        const std::size_t hi = (s + 1) * d / d_p;
        const double share = g_pooled[s] / static_cast<double>(hi - lo);
        for (std::size_t j = lo; j < hi; ++j) g_z[j] += share;
    }
}

GatingInput build_gate_input(const std::vector<PredictiveDistribution>& p_all,
                             const std::vector<Vec>& z_all, std::size_t d_p) {
    if (p_all.empty() || p_all.size() != z_all.size())
        throw InvalidInput("build_gate_input: need matching non-empty distributions and features");
    GatingInput gi;
    gi.uncertainties.resize(p_all.size());
    gi.pooled.resize(p_all.size());
    for (std::size_t m = 0; m < p_all.size(); ++m) {
        gi.uncertainties[m] = sample_uncertainty(p_all[m]);
        gi.pooled[m] = pool_segments(z_all[m], d_p);
        if (!all_finite(gi.pooled[m])) throw InvalidInput("build_gate_input: non-finite pooled features");
    }
    return gi;
}

Vec fusion_scores(const BudgetPrior& prior, const Vec& u, const Vec& gate_logits) {
    const std::size_t M = prior.M();
    if (u.size() != M || gate_logits.size() != M)
        throw InvalidInput("fusion_scores: inputs must have one entry per modality");
    Vec alpha(M);
    for (std::size_t m = 0; m < M; ++m) {
        if (!(u[m] >= 0.0 && u[m] <= 1.0)) throw InvalidInput("fusion_scores: uncertainty outside [0, 1]");
        if (!std::isfinite(gate_logits[m])) throw InvalidInput("fusion_scores: non-finite gate logit");
        alpha[m] = prior.beta[m] * std::exp(-u[m]) * sigmoid(gate_logits[m]);
    }
    return alpha;
}

std::pair<FusionWeights, Vec> normalize_and_fuse(const Vec& alpha, const std::vector<Vec>& z_all) {
    if (alpha.empty() || alpha.size() != z_all.size())
        throw InvalidInput("normalize_and_fuse: need one score per feature vector");
    const std::size_t d = z_all.front().size();
    double sum = 0.0;
    for (std::size_t m = 0; m < alpha.size(); ++m) {
        if (!(alpha[m] >= 0.0) || !std::isfinite(alpha[m]))
            throw InvalidInput("normalize_and_fuse: scores must be finite and non-negative");
        if (z_all[m].size() != d) throw InvalidInput("normalize_and_fuse: feature dimensions disagree");
        sum += alpha[m];
    }
    if (sum == 0.0) throw DegenerateEvidence("normalize_and_fuse: all fusion scores are zero");

    FusionWeights fw;
    fw.alpha = alpha;
    fw.weights.resize(alpha.size());
    Vec fused(d, 0.0);
    for (std::size_t m = 0; m < alpha.size(); ++m) {
        fw.weights[m] = alpha[m] / sum;
        axpy(fw.weights[m], z_all[m], fused);
    }
    return {std::move(fw), std::move(fused)};
}

namespace {

// d entropy_normalized(softmax(logits)) / d logits_j = -p_j (ln p_j + H) / ln C
// with H the unnormalized entropy. Matches the forward away from its exact
// special cases (uniform input, sub-1e-12 probabilities), which randomized
// parameters do not hit.
Vec entropy_logits_grad(const Vec& p) {
    const std::size_t C = p.size();
    double H = 0.0;
    for (double x : p)
        if (x > 0.0) H -= x * std::log(std::max(x, 1e-12));
    const double inv_log_c = 1.0 / std::log(static_cast<double>(C));
    Vec g(C, 0.0);
    for (std::size_t j = 0; j < C; ++j)
        if (p[j] > 0.0) g[j] = -p[j] * (std::log(std::max(p[j], 1e-12)) + H) * inv_log_c;
    return g;
}

}  // namespace

double stage2_loss(const BatchView& batch, const std::vector<DenseNet>& encoders,
                   const std::vector<DenseNet>& classifiers, const DenseNet& fuse_head,
                   const DenseNet& gate_net, const BudgetPrior& prior, const FusionConfig& config,
                   Stage2Grads* grads, const Matrix* u_override, Matrix* weights_out) {
    const std::size_t M = encoders.size();
    const std::size_t B = batch.size();
    if (B == 0) throw InvalidInput("stage2_loss: empty batch");
    if (classifiers.size() != M || batch.ds->M() != M || prior.M() != M)
        throw InvalidInput("stage2_loss: modality count mismatch");
    if (!(config.gamma >= 0.0)) throw InvalidInput("stage2_loss: gamma must be non-negative");
    const std::size_t d = encoders.front().output_dim();
    for (const DenseNet& enc : encoders)
        if (enc.output_dim() != d) throw InvalidInput("stage2_loss: encoder output dims disagree");
    const bool gated = config.weight_mode == WeightMode::kGated;
    if (gated && gate_net.input_dim() != M + M * config.d_p)
        throw InvalidInput("stage2_loss: gate input dim must be M + M*d_p");
    if (gated && gate_net.output_dim() != M)
        throw InvalidInput("stage2_loss: gate must emit one logit per modality");
    if (u_override && (u_override->rows != B || u_override->cols != M))
        throw InvalidInput("stage2_loss: u_override must be B x M");
    if (weights_out) *weights_out = Matrix(B, M);
    const double inv_b = 1.0 / static_cast<double>(B);

    double loss = 0.0;
    std::vector<ForwardTape> enc_tapes(M), cls_tapes(M);
    std::vector<Vec> z(M), p(M);
    Vec ce(M), u(M), alpha, w_tilde(M), gate_logits;
    ForwardTape gate_tape, fuse_tape;
    Vec dlogits, dz, g_phi;

    for (std::size_t i = 0; i < B; ++i) {
        const Sample& s = batch.sample(i);
        for (std::size_t m = 0; m < M; ++m) {
            forward(encoders[m], s.inputs[m], enc_tapes[m]);
            forward(classifiers[m], enc_tapes[m].output(), cls_tapes[m]);
            if (!all_finite(cls_tapes[m].output()))
                throw TrainingAbort("stage2_loss: non-finite classifier logits (diverged parameters?)");
            z[m] = enc_tapes[m].output();
            p[m] = softmax(cls_tapes[m].output());
            ce[m] = cross_entropy_from_logits(cls_tapes[m].output(), s.label);
        }

        bool weights_from_gate = false;
        if (gated) {
            Vec phi;
            phi.reserve(M + M * config.d_p);
            for (std::size_t m = 0; m < M; ++m) {
                u[m] = u_override ? (*u_override)(i, m) : entropy_normalized(p[m]);
                if (!(u[m] >= 0.0 && u[m] <= 1.0))
                    throw InvalidInput("stage2_loss: uncertainty outside [0, 1]");
                phi.push_back(u[m]);
            }
            for (std::size_t m = 0; m < M; ++m) {
                const Vec pooled = pool_segments(z[m], config.d_p);
                phi.insert(phi.end(), pooled.begin(), pooled.end());
            }
            forward(gate_net, phi, gate_tape);
            gate_logits = gate_tape.output();
            alpha = fusion_scores(prior, u, gate_logits);
            try {
                auto [fw, fused] = normalize_and_fuse(alpha, z);
                w_tilde = fw.weights;
                forward(fuse_head, fused, fuse_tape);
                weights_from_gate = true;
            } catch (const DegenerateEvidence&) {
                // Prior fallback: no usable evidence, weights revert to beta.
                w_tilde = prior.beta;
            }
        } else {
            if (config.weight_mode == WeightMode::kFixedPrior)
                w_tilde = prior.beta;
            else
                w_tilde.assign(M, 1.0 / static_cast<double>(M));
        }
        if (!weights_from_gate) {
            Vec fused(d, 0.0);
            for (std::size_t m = 0; m < M; ++m) axpy(w_tilde[m], z[m], fused);
            forward(fuse_head, fused, fuse_tape);
        }
        if (weights_out)
            for (std::size_t m = 0; m < M; ++m) (*weights_out)(i, m) = w_tilde[m];

        const double ce_fused = cross_entropy_from_logits(fuse_tape.output(), s.label);
        double aux = 0.0;
        for (std::size_t m = 0; m < M; ++m) aux += w_tilde[m] * ce[m];
        loss += inv_b * (ce_fused + config.gamma * aux);

        if (!grads) continue;

        dlogits = softmax(fuse_tape.output());
        dlogits[static_cast<std::size_t>(s.label)] -= 1.0;
        for (double& g : dlogits) g *= inv_b;
        const Vec g_fused = backward(fuse_head, fuse_tape, dlogits, grads->fuse_head);

        std::vector<Vec> dz_pool;
        Vec du_total;
        if (weights_from_gate) {
            // dL/dw_m, then through the normalization dw_m/dalpha_k =
            // (delta_mk - w_m) / sum(alpha).
            double alpha_sum = 0.0;
            for (double a : alpha) alpha_sum += a;
            Vec t(M), dalpha(M);
            double t_dot_w = 0.0;
            for (std::size_t m = 0; m < M; ++m) {
                t[m] = dot(g_fused, z[m]) + config.gamma * inv_b * ce[m];
                t_dot_w += t[m] * w_tilde[m];
            }
            Vec dlogit_gate(M);
            for (std::size_t m = 0; m < M; ++m) {
                dalpha[m] = (t[m] - t_dot_w) / alpha_sum;
                // dalpha/dlogit = alpha * (1 - sigmoid(logit))
                dlogit_gate[m] = dalpha[m] * alpha[m] * (1.0 - sigmoid(gate_logits[m]));
            }
            g_phi = backward(gate_net, gate_tape, dlogit_gate, grads->gate);

            dz_pool.assign(M, Vec(d, 0.0));
            for (std::size_t m = 0; m < M; ++m) {
                const Vec g_pooled(g_phi.begin() + static_cast<std::ptrdiff_t>(M + m * config.d_p),
                                   g_phi.begin() + static_cast<std::ptrdiff_t>(M + (m + 1) * config.d_p));
                pool_segments_backward(g_pooled, d, dz_pool[m]);
            }
            if (!config.detach_entropy && !u_override) {
                du_total.resize(M);
                for (std::size_t m = 0; m < M; ++m)
                    du_total[m] = dalpha[m] * (-alpha[m]) + g_phi[m];  // exp(-u) path + gate input path
            }
        }

        for (std::size_t m = 0; m < M; ++m) {
            dlogits = p[m];
            dlogits[static_cast<std::size_t>(s.label)] -= 1.0;
            const double scale = config.gamma * inv_b * w_tilde[m];
            for (double& g : dlogits) g *= scale;
            if (!du_total.empty()) axpy(du_total[m], entropy_logits_grad(p[m]), dlogits);
            dz = backward(classifiers[m], cls_tapes[m], dlogits, grads->classifiers[m]);
            axpy(w_tilde[m], g_fused, dz);
            if (!dz_pool.empty()) axpy(1.0, dz_pool[m], dz);
            backward(encoders[m], enc_tapes[m], dz, grads->encoders[m]);
        }
    }
    return loss;
}

}  // namespace iib
