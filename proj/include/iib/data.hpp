#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "iib/matrix.hpp"

namespace iib {

// Per-modality generation recipe. class_separation is the pairwise distance
// between class means in units of noise_sigma.
struct ModalitySpec {
    std::size_t dim = 1;
    double class_separation = 1.0;
    double noise_sigma = 1.0;
    double corrupt_fraction = 0.0;
    double corrupt_sigma = 0.0;

    void validate() const;
};

enum class Split : std::uint8_t { kTrain = 0, kTest = 1 };

struct Sample {
    std::vector<Vec> inputs;             // one vector per modality
    int label = 0;                       // in [0, C)
    std::vector<std::uint8_t> corrupt;   // per-modality corruption mask
};

struct Dataset {
    std::size_t C = 0;
    std::vector<ModalitySpec> specs;
    Split split = Split::kTrain;
    std::uint64_t seed = 0;
    std::vector<Sample> samples;

    std::size_t M() const { return specs.size(); }
    std::size_t size() const { return samples.size(); }
};

// Non-owning view of a subset of dataset rows, in a caller-chosen order.
struct BatchView {
    const Dataset* ds = nullptr;
    std::span<const std::size_t> indices;

    std::size_t size() const { return indices.size(); }
    const Sample& sample(std::size_t k) const { return ds->samples[indices[k]]; }
};

// C unit vectors in R^dim with equal pairwise distances (regular simplex
// embedded in the first C-1 coordinates). Requires dim >= C-1.
std::vector<Vec> simplex_directions(std::size_t C, std::size_t dim);

// Class means for one modality: simplex directions scaled so that the
// pairwise mean distance equals class_separation * noise_sigma.
std::vector<Vec> class_means(const ModalitySpec& spec, std::size_t C);

// Balanced-class isotropic Gaussian mixture per modality; train and test are
// drawn from disjoint sub-streams of `seed`. A corrupt_fraction of each
// modality's samples receive additive N(0, corrupt_sigma^2) noise and a set
// corruption flag.
std::pair<Dataset, Dataset> gen_dataset(const std::vector<ModalitySpec>& specs, std::size_t C,
                                        std::size_t n_train, std::size_t n_test, std::uint64_t seed);

// Test-time corruption injection for robustness probes: marks and perturbs a
// fraction of `ds` samples on modality m without touching the rest.
void apply_corruption(Dataset& ds, std::size_t m, double fraction, double sigma, std::uint64_t seed);

// Bayes-optimal class for one observed vector of modality `spec`, using the
// exact likelihood rule (a corruption mixture when corrupt_fraction > 0).
// Balanced class priors; ties resolve to the lowest class index.
int bayes_predict(const ModalitySpec& spec, std::size_t C, const Vec& x);

// Bayes classifier accuracy for one modality alone: Phi(separation/2) closed
// form for clean C=2, otherwise a Monte-Carlo estimate with `mc_draws` draws
// using the exact mixture likelihood rule.
double bayes_optimal_accuracy(const ModalitySpec& spec, std::size_t C, std::size_t mc_draws = 1'000'000,
                              std::uint64_t seed = 99);

// ---- serialization ---------------------------------------------------------
// CSV: header "id,label,corrupt_0..,m0_f0.."; doubles are emitted with full
// precision. The sidecar metadata file is "key=value" lines documenting
// counts, dims, specs and the seed.
void save_dataset(const Dataset& ds, const std::string& csv_path, const std::string& meta_path);
Dataset load_dataset(const std::string& csv_path, const std::string& meta_path);

}  // namespace iib
