#pragma once

#include "odx/probtree.hpp"

#include <cstdint>
#include <map>
#include <vector>

namespace odx {

enum class ExponentialMode {
    General,          // plain product; absorbs at 0 after a jump of -1
    StrictlyPositive, // rejects any jump <= -1
};

// E(Z)(node) = prod over the path of (1 + dZ). Z must be scalar with Z(0) = 0.
AdaptedProcess stochastic_exponential(const AdaptedProcess& z,
                                      ExponentialMode mode = ExponentialMode::StrictlyPositive);

struct NumeraireOptions {
    double tol = 1e-12; // sup-norm of the first-order condition
    int max_iter = 100;
};

struct NumerairePortfolio {
    PredictableProcess rho_hat; // proportions of wealth per asset
    AdaptedProcess V_hat;       // numeraire wealth, V_hat(0) = 1
    AdaptedProcess Y_hat;       // 1 / V_hat
};

// Log-optimal proportions for one step: solves
//   sum_k p_k dX_k / (1 + <rho, dX_k>) = 0
// by damped Newton inside the no-bankruptcy region. Throws ArbitrageError
// (tagged with `node`) when the step admits a riskless gain.
Eigen::VectorXd log_optimal_step(const Eigen::MatrixXd& increments, const Eigen::VectorXd& probs,
                                 NodeId node = 0, const NumeraireOptions& options = {});

NumerairePortfolio numeraire_portfolio(const AdaptedProcess& x, const NumeraireOptions& options = {});

// One-step measure q_k = p_k density(child_k) / density(node).
Eigen::VectorXd density_measure(const AdaptedProcess& density, NodeId node);

// Jump martingale L with L(0) = 0, dL > -1 and, at every node,
//   sum_k q_k dL_k = 0,   sum_k q_k dL_k dM_k = 0,
// where q is the one-step measure induced by `density` (pass a constant 1
// process to orthogonalize under the tree measure itself). Directions are
// drawn per node from a seeded Gaussian, projected onto the constraint
// subspace and scaled to unit range times (1 - margin). Nodes where the
// subspace is trivial (e.g. binary nodes) get dL = 0.
AdaptedProcess orthogonal_jump_martingale(const AdaptedProcess& m, const AdaptedProcess& density,
                                          std::uint64_t seed, double margin = 0.1);

// Same, with caller-supplied directions (one entry per child) and scale in
// [0, 1). Nodes absent from `directions` get dL = 0.
AdaptedProcess orthogonal_jump_martingale(const AdaptedProcess& m, const AdaptedProcess& density,
                                          const std::map<NodeId, Eigen::VectorXd>& directions, double scale);

struct DeflatorCheck {
    bool pass = false;
    double drift_y = 0.0;  // max |sum p dY|
    double drift_yx = 0.0; // max |sum p d(Y X_i)|
    NodeId worst_node = 0;
};

DeflatorCheck verify_deflator(const AdaptedProcess& y, const AdaptedProcess& x, double tol = 1e-10);

struct DeflatorExtra {
    AdaptedProcess L;
    AdaptedProcess Y; // Y_hat * E(L)
};

struct DeflatorFamily {
    PredictableProcess rho_hat;
    AdaptedProcess V_hat;
    AdaptedProcess Y_hat;
    std::vector<DeflatorExtra> extras;
};

DeflatorFamily build_deflator_family(const AdaptedProcess& x, std::size_t extras = 8, std::uint64_t seed = 0,
                                     double margin = 0.1);

} // namespace odx
