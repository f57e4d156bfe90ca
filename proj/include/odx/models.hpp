#pragma once

// Small reference markets and seeded random tree markets.

#include "odx/probtree.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace odx {

struct Model {
    std::string name;
    AdaptedProcess X;
};

// One period, p = (0.6, 0.4), dX = (+0.1, -0.1).
Model model_b1();
// One period, three equally likely children, dX = (+0.1, 0, -0.1).
Model model_t1();
// One period, two assets, p = (1/2, 1/2), dX = (1, 1) and (-1, 1): the
// second asset rises for sure.
Model model_a1();
// Recombining-in-value binomial market with i.i.d. steps dX in {up, down}.
Model model_binomial(int periods, double up, double down, double p_up);
// Two-period binomial, dX = +-0.1, p = 1/2; the American put reference market.
Model model_put2();

// "B1", "T1", "A1" or "PUT2".
Model builtin_model(std::string_view name);
std::vector<std::string> builtin_model_names();

struct RandomTreeOptions {
    int max_periods = 4;
    int max_branches = 4;
    int max_dim = 2;
    // Every internal node has d + 1 children with affinely independent
    // increments, so each one-step market is complete.
    bool complete = false;
    double scale = 0.1; // typical size of an increment
};

// Arbitrage-free by construction: at every node the increments are centered
// under a random strictly positive measure, and the min(d, k - 1) leading
// singular values of the increments are at least scale / 5.
Model random_model(std::uint64_t seed, const RandomTreeOptions& options = {});

} // namespace odx
