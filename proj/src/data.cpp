#include "iib/data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "iib/errors.hpp"
#include "iib/io_util.hpp"
#include "iib/ops.hpp"
#include "iib/rng.hpp"

namespace iib {

void ModalitySpec::validate() const {
    if (dim == 0) throw InvalidInput("ModalitySpec: dim must be positive");
    if (!(class_separation >= 0.0) || !std::isfinite(class_separation))
        throw InvalidInput("ModalitySpec: class_separation must be finite and non-negative");
    if (!(noise_sigma > 0.0) || !std::isfinite(noise_sigma))
        throw InvalidInput("ModalitySpec: noise_sigma must be finite and positive");
    if (!(corrupt_fraction >= 0.0 && corrupt_fraction <= 1.0))
        throw InvalidInput("ModalitySpec: corrupt_fraction must be in [0, 1]");
    if (!(corrupt_sigma >= 0.0) || !std::isfinite(corrupt_sigma))
        throw InvalidInput("ModalitySpec: corrupt_sigma must be finite and non-negative");
}

std::vector<Vec> simplex_directions(std::size_t C, std::size_t dim) {
    if (C < 2) throw InvalidInput("simplex_directions: need at least 2 classes");
    if (dim < C - 1) throw InvalidInput("simplex_directions: dim must be at least C-1");

    // Corners e_c - (1/C)*1 of the probability simplex, centered at the
    // origin; they span the sum-zero hyperplane of R^C.
    std::vector<Vec> centered(C, Vec(C, -1.0 / static_cast<double>(C)));
    for (std::size_t c = 0; c < C; ++c) centered[c][c] += 1.0;

    // Orthonormal basis of that hyperplane by Gram-Schmidt over the first
    // C-1 corners.
    std::vector<Vec> basis;
    for (std::size_t c = 0; c + 1 < C; ++c) {
        Vec v = centered[c];
        for (const Vec& q : basis) axpy(-dot(q, v), q, v);
        const double len = norm2(v);
        if (len < 1e-12) throw InvalidInput("simplex_directions: degenerate basis");
        for (double& x : v) x /= len;
        basis.push_back(std::move(v));
    }

    // Coordinates in the basis, normalized to unit length and zero-padded to
    // the requested dimension. Pairwise distances all equal sqrt(2C/(C-1)).
    std::vector<Vec> dirs(C, Vec(dim, 0.0));
    for (std::size_t c = 0; c < C; ++c) {
        Vec coords(C - 1);
        for (std::size_t k = 0; k + 1 < C; ++k) coords[k] = dot(basis[k], centered[c]);
        const double len = norm2(coords);
        for (std::size_t k = 0; k + 1 < C; ++k) dirs[c][k] = coords[k] / len;
    }
    return dirs;
}

std::vector<Vec> class_means(const ModalitySpec& spec, std::size_t C) {
    spec.validate();
    std::vector<Vec> means = simplex_directions(C, spec.dim);
    // Unit simplex directions sit sqrt(2C/(C-1)) apart; rescale so every
    // pair of class means is exactly class_separation * noise_sigma apart.
    const double unit_gap = std::sqrt(2.0 * static_cast<double>(C) / static_cast<double>(C - 1));
    const double scale = spec.class_separation * spec.noise_sigma / unit_gap;
    for (Vec& mu : means)
        for (double& x : mu) x *= scale;
    return means;
}

namespace {

std::vector<int> balanced_labels(std::size_t n, std::size_t C, Rng rng) {
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % C);
    rng.shuffle(labels);
    return labels;
}

Dataset gen_split(const std::vector<ModalitySpec>& specs, std::size_t C, std::size_t n, Split split,
                  std::uint64_t seed, const std::vector<std::vector<Vec>>& means) {
    const char* tag = split == Split::kTrain ? "train" : "test";
    const Rng root(seed);

    Dataset ds;
    ds.C = C;
    ds.specs = specs;
    ds.split = split;
    ds.seed = seed;
    ds.samples.resize(n);

    const std::vector<int> labels = balanced_labels(n, C, root.substream(std::string("labels/") + tag));
    for (std::size_t i = 0; i < n; ++i) {
        ds.samples[i].label = labels[i];
        ds.samples[i].inputs.resize(specs.size());
        ds.samples[i].corrupt.assign(specs.size(), 0);
    }

    for (std::size_t m = 0; m < specs.size(); ++m) {
        Rng noise = root.substream("mod" + std::to_string(m) + "/" + tag);
        for (std::size_t i = 0; i < n; ++i) {
            const Vec& mu = means[m][static_cast<std::size_t>(labels[i])];
            Vec x(specs[m].dim);
            for (std::size_t d = 0; d < specs[m].dim; ++d) x[d] = mu[d] + specs[m].noise_sigma * noise.normal();
            ds.samples[i].inputs[m] = std::move(x);
        }
        if (specs[m].corrupt_fraction > 0.0)
            apply_corruption(ds, m, specs[m].corrupt_fraction, specs[m].corrupt_sigma,
                             root.substream("corrupt" + std::to_string(m) + "/" + tag).seed());
    }
    return ds;
}

}  // namespace

std::pair<Dataset, Dataset> gen_dataset(const std::vector<ModalitySpec>& specs, std::size_t C,
                                        std::size_t n_train, std::size_t n_test, std::uint64_t seed) {
    if (specs.empty()) throw InvalidInput("gen_dataset: need at least one modality");
    if (C < 2) throw InvalidInput("gen_dataset: need at least 2 classes");
    if (n_train == 0 || n_test == 0) throw InvalidInput("gen_dataset: split sizes must be positive");
    for (const ModalitySpec& spec : specs) spec.validate();

    std::vector<std::vector<Vec>> means;
    means.reserve(specs.size());
    for (const ModalitySpec& spec : specs) means.push_back(class_means(spec, C));

    return {gen_split(specs, C, n_train, Split::kTrain, seed, means),
            gen_split(specs, C, n_test, Split::kTest, seed, means)};
}

void apply_corruption(Dataset& ds, std::size_t m, double fraction, double sigma, std::uint64_t seed) {
    if (m >= ds.M()) throw InvalidInput("apply_corruption: modality index out of range");
    if (!(fraction >= 0.0 && fraction <= 1.0)) throw InvalidInput("apply_corruption: fraction must be in [0, 1]");
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw InvalidInput("apply_corruption: sigma must be non-negative");

    const std::size_t n = ds.size();
    const auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(order);

    for (std::size_t j = 0; j < k; ++j) {
        Sample& s = ds.samples[order[j]];
        for (double& x : s.inputs[m]) x += sigma * rng.normal();
        s.corrupt[m] = 1;
    }
    ds.specs[m].corrupt_fraction = fraction;
    ds.specs[m].corrupt_sigma = sigma;
}

namespace {

// argmax_c of the exact log-likelihood under the corruption mixture
// (1-f) N(mu_c, s^2 I) + f N(mu_c, (s^2 + s_c^2) I), balanced priors.
std::size_t likelihood_rule(const std::vector<Vec>& means, const ModalitySpec& spec, const Vec& x) {
    const double f = spec.corrupt_fraction;
    const double var_clean = spec.noise_sigma * spec.noise_sigma;
    const double var_corrupt = var_clean + spec.corrupt_sigma * spec.corrupt_sigma;
    const double dim = static_cast<double>(spec.dim);
    const double log_norm_clean = -0.5 * dim * std::log(2.0 * 3.141592653589793 * var_clean);
    const double log_norm_corrupt = -0.5 * dim * std::log(2.0 * 3.141592653589793 * var_corrupt);

    double best = -1e300;
    std::size_t best_c = 0;
    for (std::size_t c = 0; c < means.size(); ++c) {
        double sq = 0.0;
        for (std::size_t d = 0; d < spec.dim; ++d) {
            const double diff = x[d] - means[c][d];
            sq += diff * diff;
        }
        double ll;
        if (f <= 0.0) {
            ll = log_norm_clean - 0.5 * sq / var_clean;
        } else {
            const Vec parts = {std::log1p(-f) + log_norm_clean - 0.5 * sq / var_clean,
                               std::log(f) + log_norm_corrupt - 0.5 * sq / var_corrupt};
            ll = log_sum_exp(parts);
        }
        if (ll > best) {
            best = ll;
            best_c = c;
        }
    }
    return best_c;
}

}  // namespace

int bayes_predict(const ModalitySpec& spec, std::size_t C, const Vec& x) {
    spec.validate();
    if (C < 2) throw InvalidInput("bayes_predict: need at least 2 classes");
    if (x.size() != spec.dim) throw InvalidInput("bayes_predict: input dimension mismatch");
    return static_cast<int>(likelihood_rule(class_means(spec, C), spec, x));
}

double bayes_optimal_accuracy(const ModalitySpec& spec, std::size_t C, std::size_t mc_draws,
                              std::uint64_t seed) {
    spec.validate();
    if (C < 2) throw InvalidInput("bayes_optimal_accuracy: need at least 2 classes");

    // Two clean classes reduce to a 1-D threshold problem along the line
    // between the means: accuracy = Phi(separation / 2).
    if (C == 2 && spec.corrupt_fraction == 0.0) return norm_cdf(spec.class_separation / 2.0);

    if (mc_draws == 0) throw InvalidInput("bayes_optimal_accuracy: mc_draws must be positive");
    const std::vector<Vec> means = class_means(spec, C);
    const double var_corrupt =
        spec.noise_sigma * spec.noise_sigma + spec.corrupt_sigma * spec.corrupt_sigma;

    Rng rng(seed);
    Vec x(spec.dim);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < mc_draws; ++i) {
        const auto label = i % C;  // balanced classes, matches the generator
        const bool corrupted = spec.corrupt_fraction > 0.0 && rng.uniform() < spec.corrupt_fraction;
        const double draw_sigma = corrupted ? std::sqrt(var_corrupt) : spec.noise_sigma;
        for (std::size_t d = 0; d < spec.dim; ++d) x[d] = means[label][d] + draw_sigma * rng.normal();
        correct += likelihood_rule(means, spec, x) == label;
    }
    return static_cast<double>(correct) / static_cast<double>(mc_draws);
}

// ---- serialization ---------------------------------------------------------

namespace {

std::string split_name(Split s) { return s == Split::kTrain ? "train" : "test"; }

Split split_from_name(const std::string& s, const std::string& path) {
    if (s == "train") return Split::kTrain;
    if (s == "test") return Split::kTest;
    throw IoError(path + ": unknown split '" + s + "'");
}

}  // namespace

void save_dataset(const Dataset& ds, const std::string& csv_path, const std::string& meta_path) {
    const std::size_t M = ds.M();

    KvMap kv;
    kv["classes"] = std::to_string(ds.C);
    kv["modalities"] = std::to_string(M);
    kv["samples"] = std::to_string(ds.size());
    kv["split"] = split_name(ds.split);
    kv["seed"] = std::to_string(ds.seed);
    for (std::size_t m = 0; m < M; ++m) {
        const std::string p = "m" + std::to_string(m) + ".";
        kv[p + "dim"] = std::to_string(ds.specs[m].dim);
        kv[p + "class_separation"] = format_double(ds.specs[m].class_separation);
        kv[p + "noise_sigma"] = format_double(ds.specs[m].noise_sigma);
        kv[p + "corrupt_fraction"] = format_double(ds.specs[m].corrupt_fraction);
        kv[p + "corrupt_sigma"] = format_double(ds.specs[m].corrupt_sigma);
    }
    save_kv(kv, meta_path);

    std::ostringstream out;
    out << "id,label";
    for (std::size_t m = 0; m < M; ++m) out << ",corrupt_" << m;
    for (std::size_t m = 0; m < M; ++m)
        for (std::size_t d = 0; d < ds.specs[m].dim; ++d) out << ",m" << m << "_f" << d;
    out << '\n';
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const Sample& s = ds.samples[i];
        out << i << ',' << s.label;
        for (std::size_t m = 0; m < M; ++m) out << ',' << int(s.corrupt[m]);
        for (std::size_t m = 0; m < M; ++m)
            for (double x : s.inputs[m]) out << ',' << format_double(x);
        out << '\n';
    }
    write_text_file(csv_path, out.str());
}

Dataset load_dataset(const std::string& csv_path, const std::string& meta_path) {
    const KvMap kv = load_kv(meta_path);
    Dataset ds;
    ds.C = static_cast<std::size_t>(parse_int(kv_get(kv, "classes", meta_path)));
    const auto M = static_cast<std::size_t>(parse_int(kv_get(kv, "modalities", meta_path)));
    const auto n = static_cast<std::size_t>(parse_int(kv_get(kv, "samples", meta_path)));
    ds.split = split_from_name(kv_get(kv, "split", meta_path), meta_path);
    ds.seed = static_cast<std::uint64_t>(parse_int(kv_get(kv, "seed", meta_path)));
    ds.specs.resize(M);
    for (std::size_t m = 0; m < M; ++m) {
        const std::string p = "m" + std::to_string(m) + ".";
        ModalitySpec& spec = ds.specs[m];
        spec.dim = static_cast<std::size_t>(parse_int(kv_get(kv, p + "dim", meta_path)));
        spec.class_separation = parse_double(kv_get(kv, p + "class_separation", meta_path));
        spec.noise_sigma = parse_double(kv_get(kv, p + "noise_sigma", meta_path));
        spec.corrupt_fraction = parse_double(kv_get(kv, p + "corrupt_fraction", meta_path));
        spec.corrupt_sigma = parse_double(kv_get(kv, p + "corrupt_sigma", meta_path));
        spec.validate();
    }

    std::size_t expected_fields = 2 + M;
    for (const ModalitySpec& spec : ds.specs) expected_fields += spec.dim;

    std::istringstream in(read_text_file(csv_path));
    std::string line;
    if (!std::getline(in, line)) throw IoError(csv_path + ": empty file");
    ds.samples.reserve(n);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const std::vector<std::string> fields = split_csv_line(line);
        if (fields.size() != expected_fields)
            throw IoError(csv_path + ": row has " + std::to_string(fields.size()) + " fields, expected " +
                          std::to_string(expected_fields));
        Sample s;
        s.label = static_cast<int>(parse_int(fields[1]));
        if (s.label < 0 || static_cast<std::size_t>(s.label) >= ds.C)
            throw IoError(csv_path + ": label out of range");
        std::size_t col = 2;
        s.corrupt.resize(M);
        for (std::size_t m = 0; m < M; ++m) s.corrupt[m] = static_cast<std::uint8_t>(parse_int(fields[col++]));
        s.inputs.resize(M);
        for (std::size_t m = 0; m < M; ++m) {
            s.inputs[m].resize(ds.specs[m].dim);
            for (std::size_t d = 0; d < ds.specs[m].dim; ++d) s.inputs[m][d] = parse_double(fields[col++]);
        }
        ds.samples.push_back(std::move(s));
    }
    if (ds.size() != n)
        throw IoError(csv_path + ": found " + std::to_string(ds.size()) + " rows, metadata says " +
                      std::to_string(n));
    return ds;
}

}  // namespace iib
