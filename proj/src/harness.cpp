#include "iib/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

#include "iib/errors.hpp"

namespace iib {

namespace {

std::size_t argmax_lowest(const Vec& v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

std::string join_seeds(const std::vector<std::uint64_t>& seeds) {
    std::string out;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(seeds[i]);
    }
    return out;
}

}  // namespace

void BenchmarkConfig::validate() const {
    if (specs.empty()) throw InvalidInput("BenchmarkConfig: need at least one modality");
    for (const ModalitySpec& s : specs) s.validate();
    if (C < 2) throw InvalidInput("BenchmarkConfig: need at least 2 classes");
    if (n_train == 0 || n_test == 0) throw InvalidInput("BenchmarkConfig: split sizes must be positive");
    if (pretrain.epochs == 0 || pretrain.batch_size == 0 || pretrain.hidden_width == 0 ||
        pretrain.feature_dim == 0)
        throw InvalidInput("BenchmarkConfig: pretrain settings must be positive");
    train_cfg.validate();
    if (!(corrupt_fraction >= 0.0 && corrupt_fraction <= 1.0))
        throw InvalidInput("BenchmarkConfig: corrupt_fraction must lie in [0, 1]");
    if (!(corrupt_sigma_mult >= 0.0))
        throw InvalidInput("BenchmarkConfig: corrupt_sigma_mult must be non-negative");
    if (corrupt_modality != kCorruptAnchor && corrupt_modality >= specs.size())
        throw InvalidInput("BenchmarkConfig: corrupt_modality out of range");
}

KvMap BenchmarkConfig::to_kv() const {
    KvMap kv;
    kv["classes"] = std::to_string(C);
    kv["n_train"] = std::to_string(n_train);
    kv["n_test"] = std::to_string(n_test);
    kv["modalities"] = std::to_string(specs.size());
    for (std::size_t m = 0; m < specs.size(); ++m) {
        const std::string p = "m" + std::to_string(m) + ".";
        kv[p + "dim"] = std::to_string(specs[m].dim);
        kv[p + "class_separation"] = format_double(specs[m].class_separation);
        kv[p + "noise_sigma"] = format_double(specs[m].noise_sigma);
    }
    kv["pretrain.epochs"] = std::to_string(pretrain.epochs);
    kv["pretrain.batch_size"] = std::to_string(pretrain.batch_size);
    kv["pretrain.hidden_width"] = std::to_string(pretrain.hidden_width);
    kv["pretrain.feature_dim"] = std::to_string(pretrain.feature_dim);
    kv["pretrain.lr"] = format_double(pretrain.adam.learning_rate);
    kv["corrupt.enabled"] = corrupt_test ? "1" : "0";
    kv["corrupt.modality"] =
        corrupt_modality == kCorruptAnchor ? "anchor" : std::to_string(corrupt_modality);
    kv["corrupt.fraction"] = format_double(corrupt_fraction);
    kv["corrupt.sigma_mult"] = format_double(corrupt_sigma_mult);
    for (const auto& [k, v] : train_cfg.to_kv()) kv["train." + k] = v;
    return kv;
}

BenchmarkConfig BenchmarkConfig::from_kv(const KvMap& kv, const std::string& origin) {
    BenchmarkConfig cfg;
    cfg.C = static_cast<std::size_t>(parse_int(kv_get(kv, "classes", origin)));
    cfg.n_train = static_cast<std::size_t>(parse_int(kv_get(kv, "n_train", origin)));
    cfg.n_test = static_cast<std::size_t>(parse_int(kv_get(kv, "n_test", origin)));
    const std::size_t M = static_cast<std::size_t>(parse_int(kv_get(kv, "modalities", origin)));
    cfg.specs.resize(M);
    for (std::size_t m = 0; m < M; ++m) {
        const std::string p = "m" + std::to_string(m) + ".";
        cfg.specs[m].dim = static_cast<std::size_t>(parse_int(kv_get(kv, p + "dim", origin)));
        cfg.specs[m].class_separation = parse_double(kv_get(kv, p + "class_separation", origin));
        cfg.specs[m].noise_sigma = parse_double(kv_get(kv, p + "noise_sigma", origin));
    }
    cfg.pretrain.epochs =
        static_cast<std::size_t>(parse_int(kv_get(kv, "pretrain.epochs", origin)));
    cfg.pretrain.batch_size =
        static_cast<std::size_t>(parse_int(kv_get(kv, "pretrain.batch_size", origin)));
    cfg.pretrain.hidden_width =
        static_cast<std::size_t>(parse_int(kv_get(kv, "pretrain.hidden_width", origin)));
    cfg.pretrain.feature_dim =
        static_cast<std::size_t>(parse_int(kv_get(kv, "pretrain.feature_dim", origin)));
    cfg.pretrain.adam.learning_rate = parse_double(kv_get(kv, "pretrain.lr", origin));
    cfg.corrupt_test = kv_get(kv, "corrupt.enabled", origin) == "1";
    const std::string cm = kv_get(kv, "corrupt.modality", origin);
    cfg.corrupt_modality =
        cm == "anchor" ? kCorruptAnchor : static_cast<std::size_t>(parse_int(cm));
    cfg.corrupt_fraction = parse_double(kv_get(kv, "corrupt.fraction", origin));
    cfg.corrupt_sigma_mult = parse_double(kv_get(kv, "corrupt.sigma_mult", origin));
    KvMap train_kv;
    for (const auto& [k, v] : kv)
        if (k.rfind("train.", 0) == 0) train_kv[k.substr(6)] = v;
    cfg.train_cfg = TrainConfig::from_kv(train_kv, origin);
    cfg.validate();
    return cfg;
}

BenchmarkConfig BenchmarkConfig::standard() {
    BenchmarkConfig cfg;
    ModalitySpec strong, weak;
    strong.dim = 16;
    strong.class_separation = 3.0;
    strong.noise_sigma = 1.0;
    weak.dim = 16;
    weak.class_separation = 0.8;
    weak.noise_sigma = 1.0;
    cfg.specs = {strong, weak};
    cfg.C = 4;
    cfg.n_train = 4000;
    cfg.n_test = 1000;
    cfg.pretrain.adam.learning_rate = 1e-3;
    cfg.train_cfg.adam.learning_rate = 1e-3;
    // 80 epochs sits past the even-fusion baseline's overfitting knee but
    // before the full pipeline's own; shorter runs flatter the baseline,
    // longer ones degrade everything.
    cfg.train_cfg.T = 80;
    return cfg;
}

BenchmarkConfig BenchmarkConfig::corruption() {
    BenchmarkConfig cfg = standard();
    cfg.corrupt_test = true;
    cfg.corrupt_modality = kCorruptAnchor;
    cfg.corrupt_fraction = 0.3;
    cfg.corrupt_sigma_mult = 5.0;
    return cfg;
}

SeedBundle prepare_seed(const BenchmarkConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    SeedBundle bundle;
    bundle.seed = seed;
    auto [train_ds, test_ds] = gen_dataset(cfg.specs, cfg.C, cfg.n_train, cfg.n_test, seed);
    bundle.train_ds = std::move(train_ds);
    bundle.test_ds = std::move(test_ds);
    PretrainConfig pc = cfg.pretrain;
    pc.seed = seed;
    for (std::size_t m = 0; m < cfg.M(); ++m)
        bundle.unimodal.push_back(pretrain_unimodal(bundle.train_ds, bundle.test_ds, m, pc));
    bundle.raw_budget = estimate_budget(bundle.unimodal, bundle.train_ds);
    return bundle;
}

const char* variant_name(Variant v) {
    switch (v) {
        case Variant::kFull: return "full";
        case Variant::kNoPrior: return "no_prior";
        case Variant::kNoStage1: return "no_stage1";
        case Variant::kNoStage2: return "no_stage2";
        case Variant::kJoint: return "joint";
    }
    throw InvalidInput("variant_name: unknown variant");
}

Variant variant_from_name(const std::string& name) {
    for (Variant v : benchmark_variants())
        if (name == variant_name(v)) return v;
    throw InvalidInput("variant_from_name: unknown variant '" + name + "'");
}

std::vector<Variant> benchmark_variants() {
    return {Variant::kFull, Variant::kNoPrior, Variant::kNoStage1, Variant::kNoStage2,
            Variant::kJoint};
}

TrainConfig variant_train_config(const BenchmarkConfig& cfg, Variant v, std::uint64_t seed) {
    TrainConfig tc = cfg.train_cfg;
    tc.seed = seed;
    switch (v) {
        case Variant::kFull:
        case Variant::kNoPrior:
            break;  // the prior object changes, not the schedule
        case Variant::kNoStage1:
            tc.lambda_start = 0.0;
            break;
        case Variant::kNoStage2:
            tc.weight_mode = WeightMode::kFixedPrior;
            break;
        case Variant::kJoint:
            // Plain end-to-end training: one task loss, evenly averaged
            // features, no alignment and no auxiliary per-modality heads.
            tc.lambda_start = 0.0;
            tc.gamma = 0.0;
            tc.weight_mode = WeightMode::kFixedUniform;
            break;
    }
    return tc;
}

BudgetPrior variant_prior(const SeedBundle& bundle, const BenchmarkConfig& cfg, Variant v) {
    if (v == Variant::kNoPrior || v == Variant::kJoint)
        return BudgetPrior::uniform(bundle.raw_budget.size());
    return normalize_budget(bundle.raw_budget, cfg.train_cfg.tau);
}

TrainedModel run_cell(const SeedBundle& bundle, const BenchmarkConfig& cfg, Variant v) {
    const TrainConfig tc = variant_train_config(cfg, v, bundle.seed);
    const BudgetPrior prior = variant_prior(bundle, cfg, v);
    if (tc.warm_start) return train(bundle.train_ds, bundle.test_ds, prior, tc, &bundle.unimodal);
    return train(bundle.train_ds, bundle.test_ds, prior, tc);
}

Dataset corrupted_test_split(const SeedBundle& bundle, const BenchmarkConfig& cfg,
                             const BudgetPrior& prior) {
    std::size_t m = cfg.corrupt_modality;
    if (m == BenchmarkConfig::kCorruptAnchor) m = prior.anchor;
    if (m >= bundle.test_ds.M()) throw InvalidInput("corrupted_test_split: modality out of range");
    Dataset corrupted = bundle.test_ds;
    const double sigma = cfg.corrupt_sigma_mult * bundle.test_ds.specs[m].noise_sigma;
    apply_corruption(corrupted, m, cfg.corrupt_fraction, sigma, bundle.seed);
    return corrupted;
}

EvalReport evaluate(const TrainedModel& model, const Dataset& ds) {
    if (ds.size() == 0) throw InvalidInput("evaluate: empty dataset");
    const std::size_t M = model.M();
    if (ds.M() != M) throw InvalidInput("evaluate: modality count mismatch");

    EvalReport report;
    report.acc_per_modality.assign(M, 0.0);
    report.mean_fusion_weights.assign(M, 0.0);
    report.mean_weights_clean.assign(M, 0.0);
    report.mean_weights_corrupted.assign(M, 0.0);
    report.corrupted_vs_clean_weight_gap.assign(M, 0.0);
    Vec clean_sum(M, 0.0), corrupt_sum(M, 0.0);
    std::vector<std::size_t> clean_n(M, 0), corrupt_n(M, 0);

    std::size_t hits = 0;
    std::vector<std::size_t> hits_m(M, 0);
    for (const Sample& s : ds.samples) {
        const InferResult r = infer(model, s.inputs);
        if (r.prediction == s.label) ++hits;
        for (std::size_t m = 0; m < M; ++m) {
            if (static_cast<int>(argmax_lowest(r.p_all[m].probs)) == s.label) ++hits_m[m];
            const double w = r.weights.weights[m];
            report.mean_fusion_weights[m] += w;
            if (s.corrupt[m]) {
                corrupt_sum[m] += w;
                ++corrupt_n[m];
            } else {
                clean_sum[m] += w;
                ++clean_n[m];
            }
        }
    }

    const double inv_n = 1.0 / static_cast<double>(ds.size());
    report.acc_multimodal = static_cast<double>(hits) * inv_n;
    for (std::size_t m = 0; m < M; ++m) {
        report.acc_per_modality[m] = static_cast<double>(hits_m[m]) * inv_n;
        report.mean_fusion_weights[m] *= inv_n;
        if (clean_n[m] > 0) report.mean_weights_clean[m] = clean_sum[m] / static_cast<double>(clean_n[m]);
        if (corrupt_n[m] > 0)
            report.mean_weights_corrupted[m] = corrupt_sum[m] / static_cast<double>(corrupt_n[m]);
        if (clean_n[m] > 0 && corrupt_n[m] > 0)
            report.corrupted_vs_clean_weight_gap[m] =
                report.mean_weights_corrupted[m] - report.mean_weights_clean[m];
    }
    report.seed = model.config.seed;
    report.config_digest = model.config.digest();
    return report;
}

std::vector<PriorWeightRow> compare_prior_weights(const TrainedModel& model, const Dataset& ds) {
    const std::size_t M = model.M();
    if (ds.M() != M) throw InvalidInput("compare_prior_weights: modality count mismatch");

    Vec sums(M, 0.0);
    std::size_t n_clean = 0;
    for (const Sample& s : ds.samples) {
        bool clean = true;
        for (std::uint8_t c : s.corrupt) clean = clean && c == 0;
        if (!clean) continue;
        const InferResult r = infer(model, s.inputs);
        for (std::size_t m = 0; m < M; ++m) sums[m] += r.weights.weights[m];
        ++n_clean;
    }
    if (n_clean == 0) throw InvalidInput("compare_prior_weights: dataset has no clean samples");

    std::vector<PriorWeightRow> rows(M);
    for (std::size_t m = 0; m < M; ++m) {
        rows[m].modality = m;
        rows[m].beta = model.prior.beta[m];
        rows[m].mean_weight = sums[m] / static_cast<double>(n_clean);
        rows[m].abs_gap = std::abs(rows[m].beta - rows[m].mean_weight);
    }
    return rows;
}

Vec bayes_reference_accuracy(const Dataset& ds) {
    if (ds.size() == 0) throw InvalidInput("bayes_reference_accuracy: empty dataset");
    Vec acc(ds.M(), 0.0);
    for (std::size_t m = 0; m < ds.M(); ++m) {
        std::size_t hits = 0;
        for (const Sample& s : ds.samples)
            if (bayes_predict(ds.specs[m], ds.C, s.inputs[m]) == s.label) ++hits;
        acc[m] = static_cast<double>(hits) / static_cast<double>(ds.size());
    }
    return acc;
}

MeanStd summarize(const Vec& values) {
    if (values.empty()) throw InvalidInput("summarize: empty value list");
    MeanStd ms;
    for (double v : values) ms.mean += v;
    ms.mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - ms.mean) * (v - ms.mean);
    ms.stddev = std::sqrt(var / static_cast<double>(values.size()));
    return ms;
}

std::size_t default_workers() {
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<std::size_t>(hw);
}

void run_jobs(std::size_t workers, const std::vector<std::function<void()>>& jobs) {
    if (workers <= 1 || jobs.size() <= 1) {
        for (const auto& job : jobs) job();
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mu;
    auto worker = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < jobs.size();) {
            try {
                jobs[i]();
            } catch (...) {
                const std::lock_guard<std::mutex> lock(error_mu);
                if (!first_error) first_error = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    const std::size_t n = std::min(workers, jobs.size());
    pool.reserve(n);
    for (std::size_t k = 0; k < n; ++k) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

AblationResult run_ablation(const BenchmarkConfig& cfg, const std::vector<std::uint64_t>& seeds) {
    cfg.validate();
    if (seeds.size() < 3) throw InvalidInput("run_ablation: need at least 3 seeds");

    std::vector<SeedBundle> bundles;
    bundles.reserve(seeds.size());
    for (std::uint64_t seed : seeds) bundles.push_back(prepare_seed(cfg, seed));

    // Every variant evaluates on the same per-seed split; under the
    // corruption card the corrupted modality comes from the full variant's
    // prior so the split stays shared.
    std::vector<Dataset> eval_splits;
    for (const SeedBundle& b : bundles)
        eval_splits.push_back(cfg.corrupt_test
                                  ? corrupted_test_split(b, cfg, variant_prior(b, cfg, Variant::kFull))
                                  : b.test_ds);

    const std::vector<Variant> variants = benchmark_variants();
    std::vector<std::vector<EvalReport>> reports(variants.size(),
                                                 std::vector<EvalReport>(seeds.size()));
    std::vector<std::function<void()>> jobs;
    for (std::size_t v = 0; v < variants.size(); ++v)
        for (std::size_t s = 0; s < seeds.size(); ++s)
            jobs.push_back([&, v, s] {
                const TrainedModel model = run_cell(bundles[s], cfg, variants[v]);
                reports[v][s] = evaluate(model, eval_splits[s]);
            });
    run_jobs(default_workers(), jobs);

    AblationResult result;
    result.seeds = seeds;
    Vec full_acc(seeds.size());
    for (std::size_t s = 0; s < seeds.size(); ++s) full_acc[s] = reports[0][s].acc_multimodal;
    for (std::size_t v = 0; v < variants.size(); ++v) {
        VariantSummary summary;
        summary.variant = variants[v];
        summary.reports = reports[v];
        Vec acc(seeds.size());
        for (std::size_t s = 0; s < seeds.size(); ++s) acc[s] = reports[v][s].acc_multimodal;
        summary.acc = summarize(acc);
        for (std::size_t s = 0; s < seeds.size(); ++s)
            if (full_acc[s] >= acc[s]) ++summary.full_wins;
        result.variants.push_back(std::move(summary));
    }
    return result;
}

const char* sweep_param_name(SweepParam p) {
    return p == SweepParam::kTau ? "tau" : "gamma";
}

SweepResult sweep(SweepParam param, const Vec& grid, const BenchmarkConfig& cfg,
                  const std::vector<std::uint64_t>& seeds) {
    cfg.validate();
    if (grid.empty()) throw InvalidInput("sweep: empty grid");
    if (seeds.empty()) throw InvalidInput("sweep: need at least one seed");
    for (double g : grid)
        if (!(param == SweepParam::kGamma ? g >= 0.0 : g > 0.0))
            throw InvalidInput("sweep: grid value out of range for the parameter");

    std::vector<SeedBundle> bundles;
    bundles.reserve(seeds.size());
    for (std::uint64_t seed : seeds) bundles.push_back(prepare_seed(cfg, seed));
    std::vector<Dataset> eval_splits;
    for (const SeedBundle& b : bundles)
        eval_splits.push_back(cfg.corrupt_test
                                  ? corrupted_test_split(b, cfg, variant_prior(b, cfg, Variant::kFull))
                                  : b.test_ds);

    SweepResult result;
    result.param = param;
    result.grid = grid;
    result.seeds = seeds;
    result.cells.resize(grid.size() * seeds.size());

    std::vector<std::function<void()>> jobs;
    for (std::size_t g = 0; g < grid.size(); ++g)
        for (std::size_t s = 0; s < seeds.size(); ++s)
            jobs.push_back([&, g, s] {
                TrainConfig tc = variant_train_config(cfg, Variant::kFull, seeds[s]);
                BudgetPrior prior;
                if (param == SweepParam::kTau) {
                    tc.tau = grid[g];
                    prior = normalize_budget(bundles[s].raw_budget, grid[g]);
                } else {
                    tc.gamma = grid[g];
                    prior = normalize_budget(bundles[s].raw_budget, tc.tau);
                }
                const TrainedModel model = train(bundles[s].train_ds, bundles[s].test_ds, prior, tc);
                SweepCellResult& cell = result.cells[g * seeds.size() + s];
                cell.value = grid[g];
                cell.seed = seeds[s];
                cell.report = evaluate(model, eval_splits[s]);
            });
    run_jobs(default_workers(), jobs);

    result.mean_acc.resize(grid.size());
    for (std::size_t g = 0; g < grid.size(); ++g) {
        Vec acc(seeds.size());
        for (std::size_t s = 0; s < seeds.size(); ++s)
            acc[s] = result.cells[g * seeds.size() + s].report.acc_multimodal;
        result.mean_acc[g] = summarize(acc).mean;
    }
    return result;
}

void save_eval_csv(const std::string& path, const EvalReport& report) {
    std::ostringstream out;
    out << "#version=1\n";
    out << "#seed=" << report.seed << "\n";
    out << "#config_digest=" << report.config_digest << "\n";
    out << "metric,modality,value\n";
    out << "acc_multimodal,," << format_double(report.acc_multimodal) << "\n";
    auto rows = [&](const char* name, const Vec& v) {
        for (std::size_t m = 0; m < v.size(); ++m)
            out << name << "," << m << "," << format_double(v[m]) << "\n";
    };
    rows("acc_per_modality", report.acc_per_modality);
    rows("mean_fusion_weights", report.mean_fusion_weights);
    rows("mean_weights_clean", report.mean_weights_clean);
    rows("mean_weights_corrupted", report.mean_weights_corrupted);
    rows("corrupted_vs_clean_weight_gap", report.corrupted_vs_clean_weight_gap);
    write_text_file(path, out.str());
}

EvalReport load_eval_csv(const std::string& path) {
    const std::string text = read_text_file(path);
    std::istringstream in(text);
    EvalReport report;
    std::string line;
    bool header_seen = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            const std::size_t eq = line.find('=');
            if (eq == std::string::npos) continue;
            const std::string key = line.substr(1, eq - 1);
            const std::string val = line.substr(eq + 1);
            if (key == "seed") report.seed = parse_u64(val);
            if (key == "config_digest")
                report.config_digest = parse_u64(val);
            continue;
        }
        if (!header_seen) {
            if (line != "metric,modality,value") throw IoError(path + ": unexpected eval CSV header");
            header_seen = true;
            continue;
        }
        const std::vector<std::string> f = split_csv_line(line);
        if (f.size() != 3) throw IoError(path + ": malformed eval CSV row");
        const double value = parse_double(f[2]);
        auto put = [&](Vec& v) {
            const std::size_t m = static_cast<std::size_t>(parse_int(f[1]));
            if (v.size() <= m) v.resize(m + 1, 0.0);
            v[m] = value;
        };
        if (f[0] == "acc_multimodal")
            report.acc_multimodal = value;
        else if (f[0] == "acc_per_modality")
            put(report.acc_per_modality);
        else if (f[0] == "mean_fusion_weights")
            put(report.mean_fusion_weights);
        else if (f[0] == "mean_weights_clean")
            put(report.mean_weights_clean);
        else if (f[0] == "mean_weights_corrupted")
            put(report.mean_weights_corrupted);
        else if (f[0] == "corrupted_vs_clean_weight_gap")
            put(report.corrupted_vs_clean_weight_gap);
        else
            throw IoError(path + ": unknown eval CSV metric '" + f[0] + "'");
    }
    if (!header_seen) throw IoError(path + ": missing eval CSV header");
    return report;
}

namespace {

void write_summary_block(std::ostringstream& out, const std::string& key, const Vec& acc,
                         const std::vector<Vec>& weight_cols,
                         const std::vector<std::string>& seed_labels) {
    const std::size_t M = weight_cols.size();
    for (std::size_t s = 0; s < acc.size(); ++s) {
        out << key << ",cell," << seed_labels[s] << "," << format_double(acc[s]);
        for (std::size_t m = 0; m < M; ++m) out << "," << format_double(weight_cols[m][s]);
        out << "\n";
    }
    const MeanStd acc_ms = summarize(acc);
    out << key << ",mean,," << format_double(acc_ms.mean);
    for (std::size_t m = 0; m < M; ++m) out << "," << format_double(summarize(weight_cols[m]).mean);
    out << "\n";
    out << key << ",stddev,," << format_double(acc_ms.stddev);
    for (std::size_t m = 0; m < M; ++m)
        out << "," << format_double(summarize(weight_cols[m]).stddev);
    out << "\n";
}

}  // namespace

void save_ablation_csv(const std::string& path, const AblationResult& result) {
    if (result.variants.empty()) throw InvalidInput("save_ablation_csv: empty result");
    const std::size_t M = result.variants.front().reports.front().mean_fusion_weights.size();
    std::ostringstream out;
    out << "#version=1\n";
    out << "#seeds=" << join_seeds(result.seeds) << "\n";
    out << "variant,kind,seed,acc_multimodal";
    for (std::size_t m = 0; m < M; ++m) out << ",w_" << m;
    out << "\n";

    std::vector<std::string> seed_labels;
    for (std::uint64_t s : result.seeds) seed_labels.push_back(std::to_string(s));
    for (const VariantSummary& vs : result.variants) {
        Vec acc(vs.reports.size());
        std::vector<Vec> weights(M, Vec(vs.reports.size()));
        for (std::size_t s = 0; s < vs.reports.size(); ++s) {
            acc[s] = vs.reports[s].acc_multimodal;
            for (std::size_t m = 0; m < M; ++m) weights[m][s] = vs.reports[s].mean_fusion_weights[m];
        }
        write_summary_block(out, variant_name(vs.variant), acc, weights, seed_labels);
    }
    write_text_file(path, out.str());
}

void save_sweep_csv(const std::string& path, const SweepResult& result) {
    std::ostringstream out;
    out << "#version=1\n";
    out << "#param=" << sweep_param_name(result.param) << "\n";
    out << "#seeds=" << join_seeds(result.seeds) << "\n";
    out << "value,kind,seed,acc_multimodal\n";
    std::vector<std::string> seed_labels;
    for (std::uint64_t s : result.seeds) seed_labels.push_back(std::to_string(s));
    for (std::size_t g = 0; g < result.grid.size(); ++g) {
        Vec acc(result.seeds.size());
        for (std::size_t s = 0; s < result.seeds.size(); ++s)
            acc[s] = result.cells[g * result.seeds.size() + s].report.acc_multimodal;
        write_summary_block(out, format_double(result.grid[g]), acc, {}, seed_labels);
    }
    write_text_file(path, out.str());
}

void save_weights_csv(const std::string& path, const TrainedModel& model,
                      const std::vector<PriorWeightRow>& rows) {
    std::ostringstream out;
    out << "#version=1\n";
    out << "#seed=" << model.config.seed << "\n";
    out << "#config_digest=" << model.config.digest() << "\n";
    out << "modality,beta,mean_weight,abs_gap\n";
    for (const PriorWeightRow& r : rows)
        out << r.modality << "," << format_double(r.beta) << "," << format_double(r.mean_weight)
            << "," << format_double(r.abs_gap) << "\n";
    write_text_file(path, out.str());
}

SummaryTable load_summary_csv(const std::string& path) {
    const std::string text = read_text_file(path);
    std::istringstream in(text);
    SummaryTable table;
    std::string line;
    bool header_seen = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const std::vector<std::string> f = split_csv_line(line);
        if (!header_seen) {
            if (f.size() < 4) throw IoError(path + ": summary CSV header too short");
            table.value_columns.assign(f.begin() + 3, f.end());
            header_seen = true;
            continue;
        }
        if (f.size() != table.value_columns.size() + 3)
            throw IoError(path + ": summary CSV row width mismatch");
        SummaryTable::Row row;
        row.key = f[0];
        row.kind = f[1];
        row.seed = f[2];
        for (std::size_t i = 3; i < f.size(); ++i) row.values.push_back(parse_double(f[i]));
        table.rows.push_back(std::move(row));
    }
    if (!header_seen) throw IoError(path + ": missing summary CSV header");
    return table;
}

}  // namespace iib
