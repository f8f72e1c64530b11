#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "iib/budget.hpp"
#include "iib/data.hpp"
#include "iib/train.hpp"

namespace iib {

// A complete benchmark card: data shape, pretraining recipe, training recipe
// and the optional test-split corruption probe.
struct BenchmarkConfig {
    // Resolve the corrupted modality to the prior's anchor at run time.
    static constexpr std::size_t kCorruptAnchor = static_cast<std::size_t>(-1);

    std::vector<ModalitySpec> specs;
    std::size_t C = 4;
    std::size_t n_train = 4000;
    std::size_t n_test = 1000;
    PretrainConfig pretrain;
    TrainConfig train_cfg;
    bool corrupt_test = false;
    std::size_t corrupt_modality = kCorruptAnchor;
    double corrupt_fraction = 0.3;
    double corrupt_sigma_mult = 5.0;  // times the corrupted modality's noise sigma

    std::size_t M() const { return specs.size(); }
    void validate() const;
    KvMap to_kv() const;
    static BenchmarkConfig from_kv(const KvMap& kv, const std::string& origin);

    // Two 16-dim modalities with separations 3.0 and 0.8 at unit noise,
    // 4 classes, 4000/1000 samples: trains in seconds and leaves a wide
    // budget gap between the modalities.
    static BenchmarkConfig standard();
    // Same card plus 30% of the anchor's test samples corrupted at 5 sigma.
    static BenchmarkConfig corruption();
};

// Per-seed shared state: every variant and sweep cell for this seed consumes
// these byte-identical datasets and the same estimated budget.
struct SeedBundle {
    std::uint64_t seed = 0;
    Dataset train_ds;
    Dataset test_ds;
    std::vector<UnimodalModel> unimodal;
    Vec raw_budget;
};

// gen_dataset + per-modality pretraining + budget estimation on the train split.
SeedBundle prepare_seed(const BenchmarkConfig& cfg, std::uint64_t seed);

enum class Variant : std::uint8_t {
    kFull = 0,      // IIBalance as configured
    kNoPrior = 1,   // uniform beta; alignment strengths collapse to zero
    kNoStage1 = 2,  // lambda_start = 0, pure fusion objective throughout
    kNoStage2 = 3,  // weights pinned to beta, gate disabled
    kJoint = 4,     // reference row: no alignment, uniform fixed weights
};

const char* variant_name(Variant v);
Variant variant_from_name(const std::string& name);
// full, no_prior, no_stage1, no_stage2, joint: the Table-2 rows plus the
// joint-training reference included in every benchmark report.
std::vector<Variant> benchmark_variants();

TrainConfig variant_train_config(const BenchmarkConfig& cfg, Variant v, std::uint64_t seed);
BudgetPrior variant_prior(const SeedBundle& bundle, const BenchmarkConfig& cfg, Variant v);

// Trains one (variant, seed) cell from the shared bundle.
TrainedModel run_cell(const SeedBundle& bundle, const BenchmarkConfig& cfg, Variant v);

// Copy of the bundle's test split with the configured corruption applied.
// The corrupted modality defaults to the prior's anchor.
Dataset corrupted_test_split(const SeedBundle& bundle, const BenchmarkConfig& cfg,
                             const BudgetPrior& prior);

struct EvalReport {
    double acc_multimodal = 0.0;
    Vec acc_per_modality;        // each modality's own classifier head
    Vec mean_fusion_weights;     // over the whole split
    Vec mean_weights_clean;      // samples whose mask is clear for that modality
    Vec mean_weights_corrupted;  // 0 where the split has no corrupted samples
    // mean on corrupted minus mean on clean, per modality; 0 when a
    // partition is empty.
    Vec corrupted_vs_clean_weight_gap;
    std::uint64_t seed = 0;
    std::uint64_t config_digest = 0;
};

EvalReport evaluate(const TrainedModel& model, const Dataset& ds);

// Fig.-3 style comparison on clean samples only.
struct PriorWeightRow {
    std::size_t modality = 0;
    double beta = 0.0;
    double mean_weight = 0.0;
    double abs_gap = 0.0;
};
std::vector<PriorWeightRow> compare_prior_weights(const TrainedModel& model, const Dataset& ds);

// Bayes-rule accuracy per modality measured on the same samples the model
// sees, which cancels the test-split sampling noise in oracle comparisons.
Vec bayes_reference_accuracy(const Dataset& ds);

struct MeanStd {
    double mean = 0.0;
    double stddev = 0.0;  // population form, 1/N
};
MeanStd summarize(const Vec& values);

struct VariantSummary {
    Variant variant = Variant::kFull;
    std::vector<EvalReport> reports;  // one per seed, seed order
    MeanStd acc;
    std::size_t full_wins = 0;  // seeds where full acc >= this variant's acc
};

struct AblationResult {
    std::vector<std::uint64_t> seeds;
    std::vector<VariantSummary> variants;  // benchmark_variants() order
};

// Trains every variant on every seed (shared per-seed bundles) and
// aggregates. Needs at least 3 seeds.
AblationResult run_ablation(const BenchmarkConfig& cfg, const std::vector<std::uint64_t>& seeds);

enum class SweepParam : std::uint8_t { kTau = 0, kGamma = 1 };
const char* sweep_param_name(SweepParam p);

struct SweepCellResult {
    double value = 0.0;
    std::uint64_t seed = 0;
    EvalReport report;
};

struct SweepResult {
    SweepParam param = SweepParam::kTau;
    Vec grid;
    std::vector<std::uint64_t> seeds;
    std::vector<SweepCellResult> cells;  // grid-major, then seed order
    Vec mean_acc;                        // per grid point
};

// Full training run per (grid point, seed) on the full variant; tau points
// re-normalize the prior, gamma points only change the loss weight.
SweepResult sweep(SweepParam param, const Vec& grid, const BenchmarkConfig& cfg,
                  const std::vector<std::uint64_t>& seeds);

// Result files are CSV with a '#key=value' metadata block. Summary rows are
// recomputable from the cell rows via summarize(); shortest-round-trip
// number formatting keeps that reproduction exact.
void save_eval_csv(const std::string& path, const EvalReport& report);
EvalReport load_eval_csv(const std::string& path);
void save_ablation_csv(const std::string& path, const AblationResult& result);
void save_sweep_csv(const std::string& path, const SweepResult& result);
void save_weights_csv(const std::string& path, const TrainedModel& model,
                      const std::vector<PriorWeightRow>& rows);

// Generic reader for the ablation/sweep tables: key column, kind column
// (cell | mean | stddev), seed column, then numeric value columns.
struct SummaryTable {
    struct Row {
        std::string key;
        std::string kind;
        std::string seed;
        Vec values;
    };
    std::vector<std::string> value_columns;
    std::vector<Row> rows;
};
SummaryTable load_summary_csv(const std::string& path);

// Runs jobs on `workers` threads (sequential when workers <= 1). Results
// must be written to pre-assigned slots so aggregation order is fixed.
void run_jobs(std::size_t workers, const std::vector<std::function<void()>>& jobs);
std::size_t default_workers();

}  // namespace iib
