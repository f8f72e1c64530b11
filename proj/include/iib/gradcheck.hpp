#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "iib/net.hpp"

namespace iib {

// Mutable view of one parameter tensor, used by the finite-difference checker
// to perturb coordinates in place.
struct ParamBlock {
    std::string name;
    double* data = nullptr;
    std::size_t size = 0;
};

// One block per layer tensor: "<prefix>.layer[i].w" / ".b".
std::vector<ParamBlock> param_blocks(DenseNet& net, const std::string& prefix);

struct BlockCheck {
    std::string name;
    double max_rel_err = 0.0;
    std::size_t checked = 0;
    std::size_t skipped_kinks = 0;
    bool pass = true;
};

struct GradCheckReport {
    std::vector<BlockCheck> blocks;
    double max_rel_err = 0.0;
    std::size_t total_skipped_kinks = 0;
    bool pass = true;
};

// Evaluates the loss at the current parameters. When `grads` is non-null it
// must be filled with the analytic gradient, one flat vector per block in
// block order. A null `grads` requests a loss-only evaluation (used for the
// finite-difference probes).
using LossAndGradFn = std::function<double(std::vector<Vec>* grads)>;

// Central differences with step h on a seeded random subsample of up to
// `coords_per_block` coordinates per block (all coordinates for small
// blocks). The relative error uses |g-fd| / (|g|+|fd|+1e-3); coordinates
// where the h and h/2 estimates disagree are treated as non-smooth (ReLU
// kinks) and excluded from the comparison.
GradCheckReport finite_diff_check(const LossAndGradFn& loss_fn, std::span<ParamBlock> blocks, double tolerance,
                                  std::uint64_t seed = 1234, std::size_t coords_per_block = 50, double h = 1e-4);

}  // namespace iib
