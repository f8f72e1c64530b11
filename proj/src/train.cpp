#include "iib/train.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "iib/errors.hpp"
#include "iib/ops.hpp"

namespace iib {

void TrainConfig::validate() const {
    if (T == 0) throw InvalidInput("TrainConfig: T must be at least 1");
    if (batch_size == 0) throw InvalidInput("TrainConfig: batch_size must be positive");
    if (!(lambda_start >= 0.0 && lambda_start <= 1.0))
        throw InvalidInput("TrainConfig: lambda_start must lie in [0, 1]");
    if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw InvalidInput("TrainConfig: gamma must be non-negative");
    if (!(tau > 0.0)) throw InvalidInput("TrainConfig: tau must be positive");
    if (!(tau_p > 0.0)) throw InvalidInput("TrainConfig: tau_p must be positive");
    if (!(rho >= 0.0 && rho < 1.0)) throw InvalidInput("TrainConfig: rho must lie in [0, 1)");
    if (hidden_width == 0 || feature_dim == 0 || gate_hidden == 0)
        throw InvalidInput("TrainConfig: network widths must be positive");
    if (d_p == 0 || d_p > feature_dim) throw InvalidInput("TrainConfig: d_p must lie in [1, feature_dim]");
    if (!(adam.learning_rate > 0.0)) throw InvalidInput("TrainConfig: learning rate must be positive");
}

namespace {

const char* weight_mode_name(WeightMode m) {
    switch (m) {
        case WeightMode::kGated: return "gated";
        case WeightMode::kFixedPrior: return "fixed_prior";
        case WeightMode::kFixedUniform: return "fixed_uniform";
    }
    throw InvalidInput("unknown weight mode");
}

WeightMode weight_mode_from(const std::string& s, const std::string& origin) {
    if (s == "gated") return WeightMode::kGated;
    if (s == "fixed_prior") return WeightMode::kFixedPrior;
    if (s == "fixed_uniform") return WeightMode::kFixedUniform;
    throw InvalidInput(origin + ": unknown weight_mode '" + s + "'");
}

}  // namespace

KvMap TrainConfig::to_kv() const {
    KvMap kv;
    kv["T"] = std::to_string(T);
    kv["batch_size"] = std::to_string(batch_size);
    kv["lambda_start"] = format_double(lambda_start);
    kv["gamma"] = format_double(gamma);
    kv["tau"] = format_double(tau);
    kv["tau_p"] = format_double(tau_p);
    kv["rho"] = format_double(rho);
    kv["hidden_width"] = std::to_string(hidden_width);
    kv["feature_dim"] = std::to_string(feature_dim);
    kv["gate_hidden"] = std::to_string(gate_hidden);
    kv["d_p"] = std::to_string(d_p);
    kv["learning_rate"] = format_double(adam.learning_rate);
    kv["adam_beta1"] = format_double(adam.beta1);
    kv["adam_beta2"] = format_double(adam.beta2);
    kv["adam_epsilon"] = format_double(adam.epsilon);
    kv["seed"] = std::to_string(seed);
    kv["warm_start"] = warm_start ? "1" : "0";
    kv["normalize_features"] = normalize_features ? "1" : "0";
    kv["detach_entropy"] = detach_entropy ? "1" : "0";
    kv["weight_mode"] = weight_mode_name(weight_mode);
    kv["stage_mode"] = stage_mode == StageMode::kBlended ? "blended" : "sequential";
    return kv;
}

TrainConfig TrainConfig::from_kv(const KvMap& kv, const std::string& origin) {
    TrainConfig c;
    c.T = static_cast<std::size_t>(parse_int(kv_get(kv, "T", origin)));
    c.batch_size = static_cast<std::size_t>(parse_int(kv_get(kv, "batch_size", origin)));
    c.lambda_start = parse_double(kv_get(kv, "lambda_start", origin));
    c.gamma = parse_double(kv_get(kv, "gamma", origin));
    c.tau = parse_double(kv_get(kv, "tau", origin));
    c.tau_p = parse_double(kv_get(kv, "tau_p", origin));
    c.rho = parse_double(kv_get(kv, "rho", origin));
    c.hidden_width = static_cast<std::size_t>(parse_int(kv_get(kv, "hidden_width", origin)));
    c.feature_dim = static_cast<std::size_t>(parse_int(kv_get(kv, "feature_dim", origin)));
    c.gate_hidden = static_cast<std::size_t>(parse_int(kv_get(kv, "gate_hidden", origin)));
    c.d_p = static_cast<std::size_t>(parse_int(kv_get(kv, "d_p", origin)));
    c.adam.learning_rate = parse_double(kv_get(kv, "learning_rate", origin));
    c.adam.beta1 = parse_double(kv_get(kv, "adam_beta1", origin));
    c.adam.beta2 = parse_double(kv_get(kv, "adam_beta2", origin));
    c.adam.epsilon = parse_double(kv_get(kv, "adam_epsilon", origin));
    c.seed = static_cast<std::uint64_t>(parse_int(kv_get(kv, "seed", origin)));
    c.warm_start = kv_get(kv, "warm_start", origin) == "1";
    c.normalize_features = kv_get(kv, "normalize_features", origin) == "1";
    c.detach_entropy = kv_get(kv, "detach_entropy", origin) == "1";
    c.weight_mode = weight_mode_from(kv_get(kv, "weight_mode", origin), origin);
    const std::string& sm = kv_get(kv, "stage_mode", origin);
    if (sm == "blended")
        c.stage_mode = StageMode::kBlended;
    else if (sm == "sequential")
        c.stage_mode = StageMode::kSequential;
    else
        throw InvalidInput(origin + ": unknown stage_mode '" + sm + "'");
    c.validate();
    return c;
}

std::uint64_t TrainConfig::digest() const {
    std::ostringstream out;
    for (const auto& [k, v] : to_kv()) out << k << '=' << v << '\n';
    return fnv1a(out.str());
}

double schedule_lambda(std::size_t t, std::size_t T, double lambda_start) {
    if (T == 0) throw InvalidInput("schedule_lambda: T must be at least 1");
    if (t > T) throw InvalidInput("schedule_lambda: epoch index exceeds T");
    if (!(lambda_start >= 0.0 && lambda_start <= 1.0))
        throw InvalidInput("schedule_lambda: lambda_start must lie in [0, 1]");
    return lambda_start * (1.0 - static_cast<double>(t) / static_cast<double>(T));
}

ModelGrads make_model_grads(const TrainedModel& model) {
    ModelGrads g;
    g.encoders.reserve(model.M());
    g.classifiers.reserve(model.M());
    for (std::size_t m = 0; m < model.M(); ++m) {
        g.encoders.push_back(NetGrads::zeros_like(model.encoders[m]));
        g.classifiers.push_back(NetGrads::zeros_like(model.classifiers[m]));
    }
    g.fuse_head = NetGrads::zeros_like(model.fuse_head);
    g.gate = NetGrads::zeros_like(model.gate);
    return g;
}

namespace {

double effective_lambda(const TrainConfig& cfg, std::size_t t) {
    if (cfg.stage_mode == StageMode::kBlended) return schedule_lambda(t, cfg.T, cfg.lambda_start);
    const auto stage1_epochs =
        static_cast<std::size_t>(std::llround(cfg.lambda_start * static_cast<double>(cfg.T)));
    return t < stage1_epochs ? 1.0 : 0.0;
}

}  // namespace

TotalLossParts total_loss(const BatchView& batch, TrainedModel& model, std::size_t t,
                          bool update_bank, ModelGrads* grads, const Matrix* u_override,
                          Matrix* weights_out) {
    const TrainConfig& cfg = model.config;
    TotalLossParts parts;
    parts.lambda = effective_lambda(cfg, t);
    const double w1 = parts.lambda;
    const double w2 = 1.0 - parts.lambda;

    const AlignmentConfig align_cfg =
        AlignmentConfig::from_prior(model.prior, cfg.tau_p, cfg.normalize_features);
    const bool bank_update_now = update_bank && w1 > 0.0;

    if (grads && w1 > 0.0) {
        std::vector<NetGrads> enc_g, cls_g;
        for (std::size_t m = 0; m < model.M(); ++m) {
            enc_g.push_back(NetGrads::zeros_like(model.encoders[m]));
            cls_g.push_back(NetGrads::zeros_like(model.classifiers[m]));
        }
        parts.stage1 = stage1_loss(batch, model.encoders, model.classifiers, model.bank, align_cfg,
                                   bank_update_now, &enc_g, &cls_g);
        for (std::size_t m = 0; m < model.M(); ++m) {
            grads->encoders[m].add_scaled(enc_g[m], w1);
            grads->classifiers[m].add_scaled(cls_g[m], w1);
        }
    } else {
        parts.stage1 = stage1_loss(batch, model.encoders, model.classifiers, model.bank, align_cfg,
                                   bank_update_now, nullptr, nullptr);
    }

    const FusionConfig fusion_cfg{cfg.gamma, cfg.d_p, cfg.detach_entropy, cfg.weight_mode};
    if (grads && w2 > 0.0) {
        ModelGrads s2 = make_model_grads(model);
        parts.stage2 = stage2_loss(batch, model.encoders, model.classifiers, model.fuse_head, model.gate,
                                   model.prior, fusion_cfg, &s2, u_override, weights_out);
        for (std::size_t m = 0; m < model.M(); ++m) {
            grads->encoders[m].add_scaled(s2.encoders[m], w2);
            grads->classifiers[m].add_scaled(s2.classifiers[m], w2);
        }
        grads->fuse_head.add_scaled(s2.fuse_head, w2);
        grads->gate.add_scaled(s2.gate, w2);
    } else {
        parts.stage2 = stage2_loss(batch, model.encoders, model.classifiers, model.fuse_head, model.gate,
                                   model.prior, fusion_cfg, nullptr, u_override, weights_out);
    }

    parts.total = w1 * parts.stage1 + w2 * parts.stage2;
    return parts;
}

namespace {

void clear_grads(ModelGrads& g) {
    for (auto& e : g.encoders) e.clear();
    for (auto& c : g.classifiers) c.clear();
    g.fuse_head.clear();
    g.gate.clear();
}

struct ModelSnapshot {
    std::vector<DenseNet> encoders, classifiers;
    DenseNet fuse_head, gate;
    PrototypeBank bank;
};

ModelSnapshot snapshot_of(const TrainedModel& model) {
    return {model.encoders, model.classifiers, model.fuse_head, model.gate, model.bank};
}

void restore(TrainedModel& model, const ModelSnapshot& snap) {
    model.encoders = snap.encoders;
    model.classifiers = snap.classifiers;
    model.fuse_head = snap.fuse_head;
    model.gate = snap.gate;
    model.bank = snap.bank;
}

}  // namespace

TrainedModel train(const Dataset& train_ds, const Dataset& test_ds, const BudgetPrior& prior,
                   const TrainConfig& config, const std::vector<UnimodalModel>* warm_models) {
    config.validate();
    const std::size_t M = train_ds.M();
    const std::size_t C = train_ds.C;
    if (prior.M() != M) throw InvalidInput("train: prior covers a different modality count");
    if (test_ds.M() != M || test_ds.C != C) throw InvalidInput("train: train/test dataset mismatch");
    if (config.warm_start && (!warm_models || warm_models->size() != M))
        throw InvalidInput("train: warm_start requires one pretrained model per modality");

    TrainedModel model;
    model.prior = prior;
    model.config = config;
    const Rng root = Rng(config.seed).substream("train");
    for (std::size_t m = 0; m < M; ++m) {
        const std::size_t enc_dims[] = {train_ds.specs[m].dim, config.hidden_width, config.feature_dim};
        const std::size_t cls_dims[] = {config.feature_dim, C};
        model.encoders.push_back(make_mlp(enc_dims, root.substream("enc" + std::to_string(m))));
        model.classifiers.push_back(make_mlp(cls_dims, root.substream("cls" + std::to_string(m))));
    }
    const std::size_t fuse_dims[] = {config.feature_dim, C};
    const std::size_t gate_dims[] = {M + M * config.d_p, config.gate_hidden, M};
    model.fuse_head = make_mlp(fuse_dims, root.substream("fuse"));
    model.gate = make_mlp(gate_dims, root.substream("gate"));
    model.bank = PrototypeBank::make(C, config.feature_dim, config.rho);

    if (config.warm_start) {
        for (std::size_t m = 0; m < M; ++m) {
            const UnimodalModel& w = (*warm_models)[m];
            if (w.encoder.input_dim() != model.encoders[m].input_dim() ||
                w.encoder.output_dim() != config.feature_dim || w.classifier.output_dim() != C)
                throw InvalidInput("train: warm-start model shapes do not match the config");
            model.encoders[m] = w.encoder;
            model.classifiers[m] = w.classifier;
        }
    }

    std::vector<AdamState> opt_enc, opt_cls;
    for (std::size_t m = 0; m < M; ++m) {
        opt_enc.push_back(AdamState::zeros_like(model.encoders[m], config.adam));
        opt_cls.push_back(AdamState::zeros_like(model.classifiers[m], config.adam));
    }
    AdamState opt_fuse = AdamState::zeros_like(model.fuse_head, config.adam);
    AdamState opt_gate = AdamState::zeros_like(model.gate, config.adam);
    ModelGrads grads = make_model_grads(model);

    std::vector<std::size_t> order(train_ds.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    ModelSnapshot last_good = snapshot_of(model);
    Matrix batch_weights;

    for (std::size_t t = 0; t < config.T; ++t) {
        root.substream("shuffle/epoch" + std::to_string(t)).shuffle(order);
        TrainEpochLog entry;
        entry.epoch = t;
        entry.lambda = effective_lambda(config, t);
        entry.mean_weights.assign(M, 0.0);
        double sum1 = 0.0, sum2 = 0.0, sum_total = 0.0;

        try {
            for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
                const std::size_t end = std::min(order.size(), start + config.batch_size);
                const BatchView batch{&train_ds, {order.data() + start, end - start}};
                clear_grads(grads);
                const TotalLossParts parts =
                    total_loss(batch, model, t, /*update_bank=*/true, &grads, nullptr, &batch_weights);
                if (!std::isfinite(parts.total))
                    throw TrainingAbort("train: non-finite loss at epoch " + std::to_string(t));
                const auto bn = static_cast<double>(end - start);
                sum1 += parts.stage1 * bn;
                sum2 += parts.stage2 * bn;
                sum_total += parts.total * bn;
                for (std::size_t i = 0; i < batch_weights.rows; ++i)
                    for (std::size_t m = 0; m < M; ++m) entry.mean_weights[m] += batch_weights(i, m);

                for (std::size_t m = 0; m < M; ++m) {
                    adam_step(model.encoders[m], grads.encoders[m], opt_enc[m], "encoder" + std::to_string(m));
                    adam_step(model.classifiers[m], grads.classifiers[m], opt_cls[m],
                              "classifier" + std::to_string(m));
                }
                adam_step(model.fuse_head, grads.fuse_head, opt_fuse, "fuse_head");
                adam_step(model.gate, grads.gate, opt_gate, "gate");
            }
        } catch (const TrainingAbort& abort) {
            restore(model, last_good);
            model.aborted = true;
            model.abort_reason = abort.what();
            return model;
        }

        const auto n = static_cast<double>(train_ds.size());
        entry.loss_stage1 = sum1 / n;
        entry.loss_stage2 = sum2 / n;
        entry.loss_total = sum_total / n;
        for (double& w : entry.mean_weights) w /= n;
        entry.train_acc = model_accuracy(model, train_ds);
        entry.test_acc = model_accuracy(model, test_ds);
        model.log.push_back(std::move(entry));
        last_good = snapshot_of(model);
    }
    return model;
}

InferResult infer(const TrainedModel& model, const std::vector<Vec>& inputs) {
    const std::size_t M = model.M();
    if (inputs.size() != M) throw InvalidInput("infer: need one input vector per modality");

    InferResult res;
    std::vector<Vec> z(M);
    res.p_all.resize(M);
    for (std::size_t m = 0; m < M; ++m) {
        z[m] = forward(model.encoders[m], inputs[m]);
        res.p_all[m] = PredictiveDistribution{softmax(forward(model.classifiers[m], z[m]))};
    }

    if (model.config.weight_mode == WeightMode::kGated) {
        const GatingInput gi = build_gate_input(res.p_all, z, model.config.d_p);
        const Vec gate_logits = forward(model.gate, gi.flat());
        const Vec alpha = fusion_scores(model.prior, gi.uncertainties, gate_logits);
        try {
            auto [fw, fused] = normalize_and_fuse(alpha, z);
            res.weights = std::move(fw);
            res.fused_logits = forward(model.fuse_head, fused);
        } catch (const DegenerateEvidence&) {
            res.weights.alpha = alpha;
            res.weights.weights = model.prior.beta;
        }
    } else {
        res.weights.weights = model.config.weight_mode == WeightMode::kFixedPrior
                                  ? model.prior.beta
                                  : Vec(M, 1.0 / static_cast<double>(M));
        res.weights.alpha = res.weights.weights;
    }
    if (res.fused_logits.empty()) {
        Vec fused(model.encoders.front().output_dim(), 0.0);
        for (std::size_t m = 0; m < M; ++m) axpy(res.weights.weights[m], z[m], fused);
        res.fused_logits = forward(model.fuse_head, fused);
    }

    res.prediction = 0;
    for (std::size_t c = 1; c < res.fused_logits.size(); ++c)
        if (res.fused_logits[c] > res.fused_logits[static_cast<std::size_t>(res.prediction)])
            res.prediction = static_cast<int>(c);
    return res;
}

double model_accuracy(const TrainedModel& model, const Dataset& ds) {
    if (ds.size() == 0) throw InvalidInput("model_accuracy: empty dataset");
    std::size_t correct = 0;
    for (const Sample& s : ds.samples) correct += infer(model, s.inputs).prediction == s.label;
    return static_cast<double>(correct) / static_cast<double>(ds.size());
}

// ---- serialization ---------------------------------------------------------

namespace {

constexpr char kModelMagic[8] = {'I', 'I', 'B', 'M', 'D', 'L', '0', '1'};
constexpr std::uint32_t kModelVersion = 1;

template <class T>
void write_pod(std::ostream& os, const T& value) {
    os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T read_pod(std::istream& is) {
    T value{};
    is.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!is) throw IoError("model checkpoint: unexpected end of stream");
    return value;
}

void write_string(std::ostream& os, const std::string& s) {
    write_pod(os, static_cast<std::uint64_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& is) {
    const auto n = read_pod<std::uint64_t>(is);
    std::string s(n, '\0');
    is.read(s.data(), static_cast<std::streamsize>(n));
    if (!is) throw IoError("model checkpoint: truncated string");
    return s;
}

void write_vec(std::ostream& os, const Vec& v) {
    write_pod(os, static_cast<std::uint64_t>(v.size()));
    os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

Vec read_vec(std::istream& is) {
    const auto n = read_pod<std::uint64_t>(is);
    Vec v(n);
    is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (!is) throw IoError("model checkpoint: truncated vector");
    return v;
}

}  // namespace

void save_model(const std::string& path, const TrainedModel& model) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    os.write(kModelMagic, sizeof(kModelMagic));
    write_pod(os, kModelVersion);

    std::ostringstream cfg;
    for (const auto& [k, v] : model.config.to_kv()) cfg << k << '=' << v << '\n';
    write_string(os, cfg.str());

    write_pod(os, static_cast<std::uint32_t>(model.M()));
    for (const DenseNet& net : model.encoders) save_net(os, net);
    for (const DenseNet& net : model.classifiers) save_net(os, net);
    save_net(os, model.fuse_head);
    save_net(os, model.gate);
    save_bank(os, model.bank);
    write_vec(os, model.prior.raw);
    write_vec(os, model.prior.beta);
    write_pod(os, model.prior.tau);
    write_pod(os, static_cast<std::uint32_t>(model.prior.anchor));
    if (!os) throw IoError("model checkpoint: write failed");
}

TrainedModel load_model(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kModelMagic, sizeof(magic)) != 0)
        throw IoError(path + ": bad model magic");
    if (read_pod<std::uint32_t>(is) != kModelVersion) throw IoError(path + ": unsupported model version");

    TrainedModel model;
    std::istringstream cfg_in(read_string(is));
    KvMap kv;
    std::string line;
    while (std::getline(cfg_in, line)) {
        const auto eq = line.find('=');
        if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    model.config = TrainConfig::from_kv(kv, path);

    const auto M = read_pod<std::uint32_t>(is);
    model.encoders.reserve(M);
    model.classifiers.reserve(M);
    for (std::uint32_t m = 0; m < M; ++m) model.encoders.push_back(load_net(is));
    for (std::uint32_t m = 0; m < M; ++m) model.classifiers.push_back(load_net(is));
    model.fuse_head = load_net(is);
    model.gate = load_net(is);
    model.bank = load_bank(is);
    model.prior.raw = read_vec(is);
    model.prior.beta = read_vec(is);
    model.prior.tau = read_pod<double>(is);
    model.prior.anchor = read_pod<std::uint32_t>(is);
    if (model.prior.beta.size() != M) throw IoError(path + ": prior does not match modality count");
    return model;
}

void save_train_log(const std::string& path, const TrainedModel& model) {
    std::ostringstream out;
    out << "#config_digest=" << model.config.digest() << '\n';
    out << "#seed=" << model.config.seed << '\n';
    out << "#version=1\n";
    if (model.aborted) out << "#aborted=" << model.abort_reason << '\n';
    out << "epoch,lambda,loss_stage1,loss_stage2,loss_total,train_acc,test_acc";
    for (std::size_t m = 0; m < model.M(); ++m) out << ",w_" << m;
    out << '\n';
    for (const TrainEpochLog& e : model.log) {
        out << e.epoch << ',' << format_double(e.lambda) << ',' << format_double(e.loss_stage1) << ','
            << format_double(e.loss_stage2) << ',' << format_double(e.loss_total) << ','
            << format_double(e.train_acc) << ',' << format_double(e.test_acc);
        for (double w : e.mean_weights) out << ',' << format_double(w);
        out << '\n';
    }
    write_text_file(path, out.str());
}

}  // namespace iib
