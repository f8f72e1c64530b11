// iibctl: command-line driver for the IIBalance benchmark pipeline.
//
// Every subcommand reads an optional key=value config file layered over one
// of the built-in benchmark cards, writes CSV (or binary checkpoint)
// artifacts into --out, and prints a short human-readable summary. Artifacts
// are keyed by seed so independent runs can share a directory:
//
//   gen-data        train-{seed}.csv/.meta, test-{seed}.csv/.meta
//   pretrain        unimodal-{seed}-m{m}.bin
//   estimate-iib    budget-{seed}.csv
//   train           model-{seed}.bin, train-log-{seed}.csv
//   eval            eval-{seed}.csv
//   compare-weights weights-{seed}.csv
//   ablate          ablation.csv
//   sweep           sweep-{param}.csv
//
// Exit codes: 0 on success, 2 on usage errors (unknown flag or subcommand),
// 1 on runtime failures (missing files, malformed inputs, aborted training)
// with a diagnostic on stderr.

#include <cctype>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "iib/budget.hpp"
#include "iib/data.hpp"
#include "iib/errors.hpp"
#include "iib/harness.hpp"
#include "iib/io_util.hpp"
#include "iib/train.hpp"

namespace fs = std::filesystem;
using namespace iib;

namespace {

// Options shared by every subcommand plus the union of per-command extras.
// Optional fields double as "was the flag given" markers for overrides.
struct Opts {
    std::string out = "runs";
    std::string config_path;
    std::string benchmark = "standard";
    std::uint64_t seed = 11;
    std::vector<std::uint64_t> seeds = {11, 12, 13, 14, 15};
    std::string variant = "full";
    std::string param;
    std::vector<double> grid;
    bool corrupt = false;
    std::optional<std::size_t> modality;
    std::optional<std::size_t> T;
    std::optional<double> tau;
    std::optional<double> gamma;
    std::optional<double> lambda_start;
    std::optional<double> lr;
    bool warm_start = false;
};

void add_common(CLI::App* cmd, Opts& o) {
    cmd->add_option("--out", o.out, "artifact directory")->capture_default_str();
    cmd->add_option("--config", o.config_path, "key=value config file layered over --benchmark")
        ->check(CLI::ExistingFile);
    cmd->add_option("--benchmark", o.benchmark, "base card: standard or corruption")
        ->check(CLI::IsMember({"standard", "corruption"}))
        ->capture_default_str();
}

void add_train_overrides(CLI::App* cmd, Opts& o) {
    cmd->add_option("--T", o.T, "training epochs");
    cmd->add_option("--tau", o.tau, "budget softmax temperature");
    cmd->add_option("--gamma", o.gamma, "per-modality CE weight in the fusion loss");
    cmd->add_option("--lambda-start", o.lambda_start, "initial stage blend weight");
    cmd->add_option("--lr", o.lr, "Adam learning rate for training");
}

// Built-in card, then config file entries, then flag overrides. Unknown keys
// in the file are rejected unless they describe an added modality block.
BenchmarkConfig make_config(const Opts& o) {
    BenchmarkConfig cfg =
        o.benchmark == "corruption" ? BenchmarkConfig::corruption() : BenchmarkConfig::standard();
    if (!o.config_path.empty()) {
        KvMap kv = cfg.to_kv();
        for (const auto& [key, value] : load_kv(o.config_path)) {
            const bool modality_block = key.size() > 1 && key[0] == 'm' &&
                                        std::isdigit(static_cast<unsigned char>(key[1]));
            if (kv.find(key) == kv.end() && !modality_block)
                throw InvalidInput(o.config_path + ": unknown config key '" + key + "'");
            kv[key] = value;
        }
        cfg = BenchmarkConfig::from_kv(kv, o.config_path);
    }
    if (o.T) cfg.train_cfg.T = *o.T;
    if (o.tau) cfg.train_cfg.tau = *o.tau;
    if (o.gamma) cfg.train_cfg.gamma = *o.gamma;
    if (o.lambda_start) cfg.train_cfg.lambda_start = *o.lambda_start;
    if (o.lr) cfg.train_cfg.adam.learning_rate = *o.lr;
    if (o.warm_start) cfg.train_cfg.warm_start = true;
    if (o.corrupt) cfg.corrupt_test = true;
    if (o.modality) cfg.corrupt_modality = *o.modality;
    cfg.validate();
    return cfg;
}

std::string seed_path(const Opts& o, const std::string& stem, std::uint64_t seed,
                      const std::string& ext) {
    return (fs::path(o.out) / (stem + "-" + std::to_string(seed) + ext)).string();
}

std::string unimodal_path(const Opts& o, std::uint64_t seed, std::size_t m) {
    return (fs::path(o.out) /
            ("unimodal-" + std::to_string(seed) + "-m" + std::to_string(m) + ".bin"))
        .string();
}

Dataset load_split(const Opts& o, const std::string& stem, std::uint64_t seed) {
    return load_dataset(seed_path(o, stem, seed, ".csv"), seed_path(o, stem, seed, ".meta"));
}

std::ostream& num(std::ostream& os) { return os << std::fixed << std::setprecision(4); }

int cmd_gen_data(const Opts& o) {
    const BenchmarkConfig cfg = make_config(o);
    fs::create_directories(o.out);
    const auto [train_ds, test_ds] = gen_dataset(cfg.specs, cfg.C, cfg.n_train, cfg.n_test, o.seed);
    save_dataset(train_ds, seed_path(o, "train", o.seed, ".csv"), seed_path(o, "train", o.seed, ".meta"));
    save_dataset(test_ds, seed_path(o, "test", o.seed, ".csv"), seed_path(o, "test", o.seed, ".meta"));
    std::cout << "wrote " << seed_path(o, "train", o.seed, ".csv") << " (" << train_ds.size()
              << " samples), " << seed_path(o, "test", o.seed, ".csv") << " (" << test_ds.size()
              << " samples)\n";
    return 0;
}

int cmd_pretrain(const Opts& o) {
    const BenchmarkConfig cfg = make_config(o);
    const Dataset train_ds = load_split(o, "train", o.seed);
    const Dataset test_ds = load_split(o, "test", o.seed);
    PretrainConfig pc = cfg.pretrain;
    pc.seed = o.seed;
    for (std::size_t m = 0; m < train_ds.M(); ++m) {
        const UnimodalModel model = pretrain_unimodal(train_ds, test_ds, m, pc);
        const std::string path = unimodal_path(o, o.seed, m);
        save_unimodal_file(path, model);
        num(std::cout) << "modality " << m << ": train acc " << model.final_train_acc()
                       << ", test acc " << model.final_test_acc() << " -> " << path << "\n";
    }
    return 0;
}

int cmd_estimate_iib(const Opts& o) {
    const BenchmarkConfig cfg = make_config(o);
    const Dataset train_ds = load_split(o, "train", o.seed);
    std::vector<UnimodalModel> models;
    for (std::size_t m = 0; m < train_ds.M(); ++m)
        models.push_back(load_unimodal_file(unimodal_path(o, o.seed, m)));
    const Vec raw = estimate_budget(models, train_ds);
    const BudgetPrior prior = normalize_budget(raw, cfg.train_cfg.tau);
    const std::string path = seed_path(o, "budget", o.seed, ".csv");
    save_budget_csv(prior, path);
    num(std::cout) << "budget (seed " << o.seed << ", tau " << prior.tau << "):\n";
    for (std::size_t m = 0; m < prior.raw.size(); ++m)
        num(std::cout) << "  m" << m << "  B=" << prior.raw[m] << "  beta=" << prior.beta[m]
                       << (m == prior.anchor ? "  (anchor)" : "") << "\n";
    std::cout << "wrote " << path << "\n";
    return 0;
}

int cmd_train(const Opts& o) {
    const BenchmarkConfig cfg = make_config(o);
    const Variant v = variant_from_name(o.variant);
    const Dataset train_ds = load_split(o, "train", o.seed);
    const Dataset test_ds = load_split(o, "test", o.seed);
    const TrainConfig tc = variant_train_config(cfg, v, o.seed);

    BudgetPrior prior;
    if (v == Variant::kNoPrior || v == Variant::kJoint) {
        prior = BudgetPrior::uniform(train_ds.M());
    } else {
        // Re-normalize the stored raw budgets so a --tau override applies.
        prior = normalize_budget(load_budget_csv(seed_path(o, "budget", o.seed, ".csv")).raw, tc.tau);
    }

    std::vector<UnimodalModel> warm;
    if (tc.warm_start)
        for (std::size_t m = 0; m < train_ds.M(); ++m)
            warm.push_back(load_unimodal_file(unimodal_path(o, o.seed, m)));

    num(std::cout) << "[" << variant_name(v) << "] T=" << tc.T << " tau=" << tc.tau
                   << " gamma=" << tc.gamma << " lambda_start=" << tc.lambda_start << " seed="
                   << o.seed << "\n";
    const TrainedModel model =
        train(train_ds, test_ds, prior, tc, tc.warm_start ? &warm : nullptr);

    const std::size_t stride = std::max<std::size_t>(1, tc.T / 8);
    for (std::size_t e = 0; e < model.log.size(); ++e) {
        if (e % stride != 0 && e + 1 != model.log.size()) continue;
        const TrainEpochLog& row = model.log[e];
        num(std::cout) << "  epoch " << std::setw(3) << row.epoch << "  lambda " << row.lambda
                       << "  loss " << row.loss_total << "  train " << row.train_acc << "  test "
                       << row.test_acc << "\n";
    }

    const std::string model_path = seed_path(o, "model", o.seed, ".bin");
    const std::string log_path = seed_path(o, "train-log", o.seed, ".csv");
    save_model(model_path, model);
    save_train_log(log_path, model);
    std::cout << "wrote " << model_path << ", " << log_path << "\n";
    if (model.aborted) {
        std::cerr << "iibctl: training aborted, checkpoint holds the last stable epoch ("
                  << model.abort_reason << ")\n";
        return 1;
    }
    return 0;
}

// Mirrors the harness corruption probe: same modality resolution, same
// noise scale, seeded by the run seed so eval is reproducible.
Dataset maybe_corrupt(const Opts& o, const BenchmarkConfig& cfg, const TrainedModel& model,
                      Dataset ds) {
    if (!cfg.corrupt_test) return ds;
    std::size_t m = cfg.corrupt_modality;
    if (m == BenchmarkConfig::kCorruptAnchor) m = model.prior.anchor;
    if (m >= ds.M()) throw InvalidInput("eval: corrupt modality out of range");
    const double sigma = cfg.corrupt_sigma_mult * ds.specs[m].noise_sigma;
    apply_corruption(ds, m, cfg.corrupt_fraction, sigma, o.seed);
    num(std::cout) << "corrupting m" << m << ": fraction " << cfg.corrupt_fraction << ", sigma "
                   << sigma << "\n";
    return ds;
}

int cmd_eval(const Opts& o) {
    const BenchmarkConfig cfg = make_config(o);
    const TrainedModel model = load_model(seed_path(o, "model", o.seed, ".bin"));
    const Dataset test_ds = maybe_corrupt(o, cfg, model, load_split(o, "test", o.seed));
    const EvalReport report = evaluate(model, test_ds);

    num(std::cout) << "acc_multimodal " << report.acc_multimodal << "\n";
    std::cout << "acc per modality:";
    for (std::size_t m = 0; m < report.acc_per_modality.size(); ++m)
        num(std::cout) << "  m" << m << " " << report.acc_per_modality[m];
    std::cout << "\nmean fusion weights:";
    for (std::size_t m = 0; m < report.mean_fusion_weights.size(); ++m)
        num(std::cout) << "  m" << m << " " << report.mean_fusion_weights[m];
    std::cout << "\n";
    if (cfg.corrupt_test) {
        std::cout << "corrupted-vs-clean weight gap:";
        for (std::size_t m = 0; m < report.corrupted_vs_clean_weight_gap.size(); ++m)
            num(std::cout) << "  m" << m << " " << report.corrupted_vs_clean_weight_gap[m];
        std::cout << "\n";
    }
    const std::string path = seed_path(o, "eval", o.seed, ".csv");
    save_eval_csv(path, report);
    std::cout << "wrote " << path << "\n";
    return 0;
}

int cmd_compare_weights(const Opts& o) {
    make_config(o);  // validates flags even though only artifacts are read
    const TrainedModel model = load_model(seed_path(o, "model", o.seed, ".bin"));
    const Dataset test_ds = load_split(o, "test", o.seed);
    const std::vector<PriorWeightRow> rows = compare_prior_weights(model, test_ds);
    std::cout << "modality     beta   mean w    |gap|\n";
    for (const PriorWeightRow& r : rows)
        num(std::cout) << "m" << r.modality << "         " << r.beta << "   " << r.mean_weight
                       << "   " << r.abs_gap << "\n";
    const std::string path = seed_path(o, "weights", o.seed, ".csv");
    save_weights_csv(path, model, rows);
    std::cout << "wrote " << path << "\n";
    return 0;
}

int cmd_ablate(const Opts& o) {
    const BenchmarkConfig cfg = make_config(o);
    fs::create_directories(o.out);
    const AblationResult result = run_ablation(cfg, o.seeds);
    std::cout << "variant      mean acc   stddev   full wins\n";
    for (const VariantSummary& vs : result.variants) {
        num(std::cout) << std::left << std::setw(13) << variant_name(vs.variant) << std::right
                       << vs.acc.mean << "   " << vs.acc.stddev << "   ";
        if (vs.variant == Variant::kFull)
            std::cout << "-\n";
        else
            std::cout << vs.full_wins << "/" << result.seeds.size() << "\n";
    }
    const std::string path = (fs::path(o.out) / "ablation.csv").string();
    save_ablation_csv(path, result);
    std::cout << "wrote " << path << "\n";
    return 0;
}

int cmd_sweep(const Opts& o) {
    const BenchmarkConfig cfg = make_config(o);
    fs::create_directories(o.out);
    const SweepParam param = o.param == "tau" ? SweepParam::kTau : SweepParam::kGamma;
    const SweepResult result = sweep(param, o.grid, cfg, o.seeds);
    std::cout << o.param << "        mean acc\n";
    for (std::size_t g = 0; g < result.grid.size(); ++g)
        num(std::cout) << std::left << std::setw(10) << format_double(result.grid[g]) << std::right
                       << result.mean_acc[g] << "\n";
    const std::string path = (fs::path(o.out) / ("sweep-" + o.param + ".csv")).string();
    save_sweep_csv(path, result);
    std::cout << "wrote " << path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"IIBalance benchmark driver"};
    app.require_subcommand(1);
    Opts o;

    CLI::App* gen = app.add_subcommand("gen-data", "generate the train/test splits for a seed");
    add_common(gen, o);
    gen->add_option("--seed", o.seed, "dataset seed")->capture_default_str();

    CLI::App* pre = app.add_subcommand("pretrain", "pretrain one unimodal model per modality");
    add_common(pre, o);
    pre->add_option("--seed", o.seed, "dataset/init seed")->capture_default_str();

    CLI::App* est = app.add_subcommand("estimate-iib", "estimate budgets from pretrained models");
    add_common(est, o);
    est->add_option("--seed", o.seed, "dataset seed")->capture_default_str();
    est->add_option("--tau", o.tau, "budget softmax temperature");

    CLI::App* tr = app.add_subcommand("train", "train the multimodal pipeline");
    add_common(tr, o);
    tr->add_option("--seed", o.seed, "dataset/init seed")->capture_default_str();
    tr->add_option("--variant", o.variant, "full, no_prior, no_stage1, no_stage2 or joint")
        ->check(CLI::IsMember({"full", "no_prior", "no_stage1", "no_stage2", "joint"}))
        ->capture_default_str();
    tr->add_flag("--warm-start", o.warm_start, "initialize encoders from the pretrained models");
    add_train_overrides(tr, o);

    CLI::App* ev = app.add_subcommand("eval", "evaluate a trained model on the test split");
    add_common(ev, o);
    ev->add_option("--seed", o.seed, "run seed")->capture_default_str();
    ev->add_flag("--corrupt", o.corrupt, "apply the card's test-split corruption first");
    ev->add_option("--modality", o.modality, "corrupt this modality instead of the anchor");

    CLI::App* cw = app.add_subcommand("compare-weights",
                                      "prior beta vs mean fusion weight on clean test data");
    add_common(cw, o);
    cw->add_option("--seed", o.seed, "run seed")->capture_default_str();

    CLI::App* ab = app.add_subcommand("ablate", "train and compare all variants across seeds");
    add_common(ab, o);
    ab->add_option("--seeds", o.seeds, "comma-separated seed list")
        ->delimiter(',')
        ->capture_default_str();
    add_train_overrides(ab, o);

    CLI::App* sw = app.add_subcommand("sweep", "grid sweep over tau or gamma");
    add_common(sw, o);
    sw->add_option("--param", o.param, "tau or gamma")
        ->check(CLI::IsMember({"tau", "gamma"}))
        ->required();
    sw->add_option("--grid", o.grid, "comma-separated grid values")->delimiter(',')->required();
    sw->add_option("--seeds", o.seeds, "comma-separated seed list")
        ->delimiter(',')
        ->capture_default_str();
    add_train_overrides(sw, o);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;  // help/version are successes, the rest usage errors
    }

    try {
        if (gen->parsed()) return cmd_gen_data(o);
        if (pre->parsed()) return cmd_pretrain(o);
        if (est->parsed()) return cmd_estimate_iib(o);
        if (tr->parsed()) return cmd_train(o);
        if (ev->parsed()) return cmd_eval(o);
        if (cw->parsed()) return cmd_compare_weights(o);
        if (ab->parsed()) return cmd_ablate(o);
        if (sw->parsed()) return cmd_sweep(o);
    } catch (const std::exception& e) {
        std::cerr << "iibctl: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
