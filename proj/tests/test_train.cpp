#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "iib/errors.hpp"
#include "iib/gradcheck.hpp"
#include "iib/io_util.hpp"
#include "iib/train.hpp"

using namespace iib;

namespace {

std::pair<Dataset, Dataset> small_data(std::uint64_t seed = 404, bool mirrored = false) {
    ModalitySpec m0, m1;
    m0.dim = 3;
    m0.class_separation = 3.0;
    m1.dim = mirrored ? 3 : 2;
    m1.class_separation = 0.5;
    auto [train, test] = gen_dataset({m0, m1}, 2, 32, 16, seed);
    if (mirrored) {
        for (Dataset* ds : {&train, &test}) {
            ds->specs[1] = ds->specs[0];
            for (Sample& s : ds->samples) s.inputs[1] = s.inputs[0];
        }
    }
    return {train, test};
}

TrainConfig small_config() {
    TrainConfig cfg;
    cfg.T = 2;
    cfg.batch_size = 8;
    cfg.hidden_width = 6;
    cfg.feature_dim = 4;
    cfg.gate_hidden = 4;
    cfg.d_p = 2;
    cfg.adam.learning_rate = 1e-3;
    cfg.seed = 17;
    return cfg;
}

bool nets_equal(const DenseNet& a, const DenseNet& b) {
    if (a.layers.size() != b.layers.size()) return false;
    for (std::size_t l = 0; l < a.layers.size(); ++l)
        if (a.layers[l].w.data != b.layers[l].w.data || a.layers[l].b != b.layers[l].b) return false;
    return true;
}

double max_param_diff(const DenseNet& a, const DenseNet& b) {
    double worst = 0.0;
    for (std::size_t l = 0; l < a.layers.size(); ++l) {
        for (std::size_t j = 0; j < a.layers[l].w.data.size(); ++j)
            worst = std::max(worst, std::abs(a.layers[l].w.data[j] - b.layers[l].w.data[j]));
        for (std::size_t j = 0; j < a.layers[l].b.size(); ++j)
            worst = std::max(worst, std::abs(a.layers[l].b[j] - b.layers[l].b[j]));
    }
    return worst;
}

BudgetPrior skewed_prior() {
    return normalize_budget({0.75, 0.35}, 0.07);
}

}  // namespace

TEST_CASE("lambda schedule is linear with exact endpoints") {
    CHECK(schedule_lambda(0, 10, 0.8) == 0.8);
    CHECK(schedule_lambda(10, 10, 0.8) == 0.0);
    CHECK(schedule_lambda(5, 10, 0.8) == doctest::Approx(0.4).epsilon(1e-15));
    CHECK(schedule_lambda(9, 10, 0.8) == doctest::Approx(0.08).epsilon(1e-12));
    for (std::size_t t = 1; t <= 10; ++t)
        CHECK(schedule_lambda(t, 10, 0.8) < schedule_lambda(t - 1, 10, 0.8));

    CHECK_THROWS_AS(schedule_lambda(11, 10, 0.8), InvalidInput);
    CHECK_THROWS_AS(schedule_lambda(0, 0, 0.8), InvalidInput);
    CHECK_THROWS_AS(schedule_lambda(0, 10, 1.5), InvalidInput);
}

TEST_CASE("train config validates, round-trips through kv and digests canonically") {
    TrainConfig cfg = small_config();
    cfg.validate();

    const KvMap kv = cfg.to_kv();
    const TrainConfig back = TrainConfig::from_kv(kv, "test");
    CHECK(back.to_kv() == kv);
    CHECK(back.digest() == cfg.digest());

    TrainConfig other = cfg;
    other.gamma = 0.25;
    CHECK(other.digest() != cfg.digest());

    TrainConfig bad = cfg;
    bad.T = 0;
    CHECK_THROWS_AS(bad.validate(), InvalidInput);
    bad = cfg;
    bad.lambda_start = 1.2;
    CHECK_THROWS_AS(bad.validate(), InvalidInput);
    bad = cfg;
    bad.d_p = cfg.feature_dim + 1;
    CHECK_THROWS_AS(bad.validate(), InvalidInput);
    bad = cfg;
    bad.adam.learning_rate = 0.0;
    CHECK_THROWS_AS(bad.validate(), InvalidInput);
}

TEST_CASE("total loss blends the stage losses exactly at the endpoints") {
    auto [train_ds, test_ds] = small_data();
    TrainConfig cfg = small_config();
    cfg.T = 1;
    TrainedModel model = train(train_ds, test_ds, skewed_prior(), cfg);
    REQUIRE(!model.aborted);

    const std::vector<std::size_t> idx = {0, 1, 2, 3};
    const BatchView batch{&train_ds, {idx.data(), idx.size()}};

    model.config.lambda_start = 1.0;
    model.config.T = 4;
    const TotalLossParts pure1 = total_loss(batch, model, 0, false, nullptr);
    CHECK(pure1.lambda == 1.0);
    CHECK(pure1.total == pure1.stage1);  // 1*L1 + 0*L2 must not perturb a bit

    model.config.lambda_start = 0.0;
    const TotalLossParts pure2 = total_loss(batch, model, 0, false, nullptr);
    CHECK(pure2.lambda == 0.0);
    CHECK(pure2.total == pure2.stage2);
    CHECK(pure2.stage1 == pure1.stage1);  // both components always evaluated

    model.config.lambda_start = 0.5;
    const TotalLossParts mid = total_loss(batch, model, 0, false, nullptr);
    CHECK(mid.lambda == 0.5);
    CHECK(mid.total == 0.5 * mid.stage1 + 0.5 * mid.stage2);

    // t = 3 of T = 4: lambda = 0.5 * (1 - 3/4) = 0.125.
    const TotalLossParts late = total_loss(batch, model, 3, false, nullptr);
    CHECK(late.lambda == doctest::Approx(0.125).epsilon(1e-15));
    CHECK(late.total == doctest::Approx(0.125 * late.stage1 + 0.875 * late.stage2).epsilon(1e-15));
}

TEST_CASE("total loss gradients agree with finite differences mid-training") {
    auto [train_ds, test_ds] = small_data();
    TrainConfig cfg = small_config();
    cfg.lambda_start = 0.6;  // both stages active at t = 1 of T = 2
    TrainedModel model = train(train_ds, test_ds, skewed_prior(), cfg);
    REQUIRE(!model.aborted);
    REQUIRE(model.bank.all_initialized());

    const std::vector<std::size_t> idx = {0, 1, 2, 3, 4, 5};
    const BatchView batch{&train_ds, {idx.data(), idx.size()}};

    Matrix u_fixed(idx.size(), 2);
    Rng rng(23);
    for (double& x : u_fixed.data) x = rng.uniform(0.1, 0.9);

    std::vector<ParamBlock> blocks;
    auto append = [&](DenseNet& net, const std::string& prefix) {
        auto b = param_blocks(net, prefix);
        blocks.insert(blocks.end(), b.begin(), b.end());
    };
    for (std::size_t m = 0; m < 2; ++m) append(model.encoders[m], "enc" + std::to_string(m));
    for (std::size_t m = 0; m < 2; ++m) append(model.classifiers[m], "cls" + std::to_string(m));
    append(model.fuse_head, "fuse");
    append(model.gate, "gate");

    const LossAndGradFn fn = [&](std::vector<Vec>* grads) {
        ModelGrads g = make_model_grads(model);
        const TotalLossParts parts = total_loss(batch, model, 1, false, grads ? &g : nullptr, &u_fixed);
        if (grads) {
            grads->clear();
            auto push_net = [&](const DenseNet& net, const NetGrads& ng) {
                for (std::size_t l = 0; l < net.layers.size(); ++l) {
                    grads->push_back(ng.w[l].data);
                    grads->push_back(ng.b[l]);
                }
            };
            for (std::size_t m = 0; m < 2; ++m) push_net(model.encoders[m], g.encoders[m]);
            for (std::size_t m = 0; m < 2; ++m) push_net(model.classifiers[m], g.classifiers[m]);
            push_net(model.fuse_head, g.fuse_head);
            push_net(model.gate, g.gate);
        }
        return parts.total;
    };

    const GradCheckReport report = finite_diff_check(fn, blocks, 1e-4);
    CHECK(report.pass);
    CHECK(report.max_rel_err < 1e-4);
}

TEST_CASE("training is deterministic for a fixed config") {
    auto [train_ds, test_ds] = small_data();
    const TrainConfig cfg = small_config();
    const BudgetPrior prior = skewed_prior();

    const TrainedModel a = train(train_ds, test_ds, prior, cfg);
    const TrainedModel b = train(train_ds, test_ds, prior, cfg);
    REQUIRE(!a.aborted);
    for (std::size_t m = 0; m < 2; ++m) {
        CHECK(nets_equal(a.encoders[m], b.encoders[m]));
        CHECK(nets_equal(a.classifiers[m], b.classifiers[m]));
    }
    CHECK(nets_equal(a.fuse_head, b.fuse_head));
    CHECK(nets_equal(a.gate, b.gate));
    REQUIRE(a.log.size() == b.log.size());
    for (std::size_t t = 0; t < a.log.size(); ++t) {
        CHECK(a.log[t].loss_total == b.log[t].loss_total);
        CHECK(a.log[t].train_acc == b.log[t].train_acc);
        CHECK(a.log[t].mean_weights == b.log[t].mean_weights);
    }

    TrainConfig reseeded = cfg;
    reseeded.seed = 18;
    const TrainedModel c = train(train_ds, test_ds, prior, reseeded);
    CHECK(!nets_equal(a.encoders[0], c.encoders[0]));
}

TEST_CASE("epoch logs follow the annealing schedule") {
    auto [train_ds, test_ds] = small_data();
    TrainConfig cfg = small_config();
    cfg.T = 4;
    const TrainedModel model = train(train_ds, test_ds, skewed_prior(), cfg);
    REQUIRE(model.log.size() == 4);

    for (std::size_t t = 0; t < 4; ++t) {
        const TrainEpochLog& e = model.log[t];
        CHECK(e.epoch == t);
        CHECK(e.lambda == doctest::Approx(schedule_lambda(t, 4, cfg.lambda_start)).epsilon(1e-15));
        CHECK(std::isfinite(e.loss_stage1));
        CHECK(std::isfinite(e.loss_stage2));
        CHECK(e.train_acc >= 0.0);
        CHECK(e.train_acc <= 1.0);
        double wsum = 0.0;
        for (double w : e.mean_weights) wsum += w;
        CHECK(wsum == doctest::Approx(1.0).epsilon(1e-9));
    }
    CHECK(model.log.front().lambda == cfg.lambda_start);
    CHECK(model.log.back().lambda == doctest::Approx(cfg.lambda_start / 4.0).epsilon(1e-15));
}

TEST_CASE("lambda_start zero never touches the prototype bank") {
    auto [train_ds, test_ds] = small_data();
    TrainConfig cfg = small_config();
    cfg.lambda_start = 0.0;
    const TrainedModel model = train(train_ds, test_ds, skewed_prior(), cfg);
    REQUIRE(!model.aborted);
    CHECK(!model.bank.all_initialized());
    for (const TrainEpochLog& e : model.log) {
        CHECK(e.lambda == 0.0);
        CHECK(e.loss_total == e.loss_stage2);
    }
}

TEST_CASE("sequential staging switches from pure alignment to pure fusion") {
    auto [train_ds, test_ds] = small_data();
    TrainConfig cfg = small_config();
    cfg.T = 4;
    cfg.lambda_start = 0.5;
    cfg.stage_mode = StageMode::kSequential;
    const TrainedModel model = train(train_ds, test_ds, skewed_prior(), cfg);
    REQUIRE(model.log.size() == 4);
    CHECK(model.log[0].lambda == 1.0);
    CHECK(model.log[1].lambda == 1.0);
    CHECK(model.log[2].lambda == 0.0);
    CHECK(model.log[3].lambda == 0.0);
    CHECK(model.bank.all_initialized());  // stage I ran first
}

TEST_CASE("warm start copies the pretrained weights") {
    auto [train_ds, test_ds] = small_data();

    PretrainConfig pre;
    pre.epochs = 2;
    pre.batch_size = 8;
    pre.hidden_width = 6;
    pre.feature_dim = 4;
    pre.seed = 31;
    std::vector<UnimodalModel> warm;
    warm.push_back(pretrain_unimodal(train_ds, test_ds, 0, pre));
    warm.push_back(pretrain_unimodal(train_ds, test_ds, 1, pre));

    TrainConfig cfg = small_config();
    cfg.T = 1;
    cfg.warm_start = true;
    cfg.adam.learning_rate = 1e-300;  // steps vanish below double resolution
    const TrainedModel model = train(train_ds, test_ds, skewed_prior(), cfg, &warm);
    REQUIRE(!model.aborted);
    for (std::size_t m = 0; m < 2; ++m) {
        CHECK(max_param_diff(model.encoders[m], warm[m].encoder) < 1e-200);
        CHECK(max_param_diff(model.classifiers[m], warm[m].classifier) < 1e-200);
    }

    CHECK_THROWS_AS(train(train_ds, test_ds, skewed_prior(), cfg), InvalidInput);
    PretrainConfig odd = pre;
    odd.feature_dim = 5;
    std::vector<UnimodalModel> mismatched;
    mismatched.push_back(pretrain_unimodal(train_ds, test_ds, 0, odd));
    mismatched.push_back(pretrain_unimodal(train_ds, test_ds, 1, odd));
    CHECK_THROWS_AS(train(train_ds, test_ds, skewed_prior(), cfg, &mismatched), InvalidInput);
}

TEST_CASE("train leaves the budget prior untouched") {
    auto [train_ds, test_ds] = small_data();
    const BudgetPrior prior = skewed_prior();
    const BudgetPrior before = prior;
    const TrainedModel model = train(train_ds, test_ds, prior, small_config());
    CHECK(prior.raw == before.raw);
    CHECK(prior.beta == before.beta);
    CHECK(prior.anchor == before.anchor);
    CHECK(model.prior.beta == before.beta);  // the model carries a copy
}

TEST_CASE("a diverging run aborts and restores the last good state") {
    auto [train_ds, test_ds] = small_data();
    TrainConfig cfg = small_config();
    cfg.T = 3;
    cfg.adam.learning_rate = 1e154;  // one step pushes activations past the double range
    const TrainedModel model = train(train_ds, test_ds, skewed_prior(), cfg);
    CHECK(model.aborted);
    CHECK(!model.abort_reason.empty());
    CHECK(model.log.empty());  // no epoch completed
    for (const DenseNet& net : model.encoders)
        for (const Layer& layer : net.layers) {
            for (double x : layer.w.data) CHECK(std::isfinite(x));
            for (double x : layer.b) CHECK(std::isfinite(x));
        }
}

TEST_CASE("mirrored modalities with a symmetric model share the weight mass") {
    auto [train_ds, test_ds] = small_data(505, /*mirrored=*/true);
    TrainConfig cfg = small_config();
    cfg.T = 1;
    TrainedModel model = train(train_ds, test_ds, BudgetPrior::uniform(2), cfg);
    REQUIRE(!model.aborted);

    // Make both branches literally identical and silence the gate.
    model.encoders[1] = model.encoders[0];
    model.classifiers[1] = model.classifiers[0];
    for (Layer& layer : model.gate.layers) {
        layer.w.data.assign(layer.w.data.size(), 0.0);
        layer.b.assign(layer.b.size(), 0.0);
    }

    for (std::size_t i = 0; i < 8; ++i) {
        const InferResult r = infer(model, test_ds.samples[i].inputs);
        CHECK(r.weights.weights[0] == 0.5);
        CHECK(r.weights.weights[1] == 0.5);
        CHECK(r.p_all[0].probs == r.p_all[1].probs);
        CHECK(r.prediction >= 0);
        CHECK(r.prediction < 2);
    }

    CHECK_THROWS_AS(infer(model, {test_ds.samples[0].inputs[0]}), InvalidInput);
}

TEST_CASE("model accuracy equals the per-sample infer loop") {
    auto [train_ds, test_ds] = small_data();
    TrainConfig cfg = small_config();
    const TrainedModel model = train(train_ds, test_ds, skewed_prior(), cfg);

    std::size_t hits = 0;
    for (const Sample& s : test_ds.samples)
        if (infer(model, s.inputs).prediction == s.label) ++hits;
    CHECK(model_accuracy(model, test_ds) ==
          doctest::Approx(static_cast<double>(hits) / test_ds.size()).epsilon(1e-15));
}

TEST_CASE("model container round-trips every component") {
    auto [train_ds, test_ds] = small_data();
    const TrainedModel model = train(train_ds, test_ds, skewed_prior(), small_config());

    const std::string path = "/tmp/iib_test_model.bin";
    save_model(path, model);
    const TrainedModel back = load_model(path);

    for (std::size_t m = 0; m < 2; ++m) {
        CHECK(nets_equal(back.encoders[m], model.encoders[m]));
        CHECK(nets_equal(back.classifiers[m], model.classifiers[m]));
    }
    CHECK(nets_equal(back.fuse_head, model.fuse_head));
    CHECK(nets_equal(back.gate, model.gate));
    CHECK(back.bank.prototypes == model.bank.prototypes);
    CHECK(back.bank.initialized == model.bank.initialized);
    CHECK(back.prior.beta == model.prior.beta);
    CHECK(back.prior.raw == model.prior.raw);
    CHECK(back.prior.anchor == model.prior.anchor);
    CHECK(back.config.to_kv() == model.config.to_kv());

    for (std::size_t i = 0; i < 4; ++i) {
        const InferResult r1 = infer(model, test_ds.samples[i].inputs);
        const InferResult r2 = infer(back, test_ds.samples[i].inputs);
        CHECK(r1.prediction == r2.prediction);
        CHECK(r1.weights.weights == r2.weights.weights);
        CHECK(r1.fused_logits == r2.fused_logits);
    }

    CHECK_THROWS_AS(load_model("/tmp/iib_test_model_missing.bin"), IoError);
    std::remove(path.c_str());
}

TEST_CASE("train log CSV is deterministic and carries its provenance header") {
    auto [train_ds, test_ds] = small_data();
    const TrainedModel model = train(train_ds, test_ds, skewed_prior(), small_config());

    const std::string path1 = "/tmp/iib_test_log1.csv";
    const std::string path2 = "/tmp/iib_test_log2.csv";
    save_train_log(path1, model);
    save_train_log(path2, model);
    const std::string a = read_text_file(path1);
    const std::string b = read_text_file(path2);
    CHECK(a == b);
    CHECK(a.find("#config_digest=") != std::string::npos);
    CHECK(a.find("#seed=17") != std::string::npos);
    CHECK(a.find("epoch,lambda,loss_stage1,loss_stage2,loss_total,train_acc,test_acc,w_0,w_1") !=
          std::string::npos);
    std::size_t rows = 0;
    for (char c : a)
        if (c == '\n') ++rows;
    CHECK(rows == model.log.size() + 4);  // 3 comment lines + header + epochs
    std::remove(path1.c_str());
    std::remove(path2.c_str());
}
