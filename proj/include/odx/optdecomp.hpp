#pragma once

// Optional decomposition on event trees.
//
// A process V is a supermartingale under every martingale measure of X iff
// V = V(0) + sum <H, dX> - C with H predictable and C adapted nondecreasing.
// The test side solves, per node, max_q sum q_k V(child_k) over the closed
// polytope {q >= 0, sum q = 1, sum q dX_k = 0}. Two constructions of (H, C):
//
//  * decompose_lp: per node, the superhedging hyperplane. Among all H with
//    <H, dX_k> >= dV_k we take those minimizing the largest consumption
//    jump max_k dC_k, then the one of minimum norm.
//  * decompose_kw: deflate by the numeraire wealth, U = V / V_hat, project
//    the numeraire-weighted increment of U onto dX under the numeraire
//    measure, read off the drift B and the orthogonal residual N, and
//    reassemble H = V_hat (U rho_hat + theta), dC = V_hat (dB - dN).
//    Nodes with a nonzero residual N (incomplete one-step markets) fall back
//    to the LP solution and are listed in the diagnostics.

#include "odx/deflators.hpp"
#include "odx/probtree.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace odx {

enum class Route { LP, KW };
const char* to_string(Route r);

struct DecompositionDiagnostics {
    std::optional<PredictableProcess> theta;
    std::optional<AdaptedProcess> B;
    std::optional<PredictableProcess> node_n_norm; // per-node sqrt(E[dN^2]); KW route only
    double n_norm = 0.0;           // max over nodes of sqrt(E[dN^2])
    double min_dB = 0.0;
    double min_dC = 0.0;
    double duality_gap = 0.0;      // max over nodes of V(node) - sup_q E_q[V(child)]
    double reconstruction_error = 0.0;
    std::vector<NodeId> deferred_nodes;
    std::map<NodeId, Eigen::VectorXd> boundary_measures; // binding maximizers with some q_k = 0
};

struct Decomposition {
    double V0 = 0.0;
    PredictableProcess H;
    AdaptedProcess C; // cumulative consumption, C(0) = 0
    AdaptedProcess V;
    Route route = Route::LP;
    DecompositionDiagnostics diagnostics;
};

struct SupermartingaleWitness {
    NodeId node = 0;
    std::string kind;        // "measure" or "deflator"
    Eigen::VectorXd measure; // maximizing one-step measure (kind == "measure")
    std::size_t deflator = 0; // index into the family extras; 0 = Y_hat, i+1 = extras[i]
    double violation = 0.0;
};

struct SupermartingaleCertificate {
    bool pass = false;
    std::optional<SupermartingaleWitness> witness;
    double max_excess = 0.0; // max over nodes of sup_q E_q[V(child)] - V(node)
};

struct SupermartingaleOptions {
    double tol = 1e-10;
    std::size_t extras = 8;
    std::uint64_t seed = 0;
};

// Largest one-step expectation over the closed martingale-measure polytope.
struct PolytopeMax {
    double value = 0.0;
    Eigen::VectorXd q;
};
// Throws ArbitrageError if the polytope is empty.
PolytopeMax polytope_max(const Eigen::MatrixXd& increments, const Eigen::VectorXd& values, NodeId node = 0);

// Vertices of {q >= 0, sum q = 1, sum q dX_k = 0}; at most 8 children.
std::vector<Eigen::VectorXd> martingale_vertices(const Eigen::MatrixXd& increments, double tol = 1e-12);

SupermartingaleCertificate is_supermartingale_under_all(const AdaptedProcess& v, const AdaptedProcess& x,
                                                        const DeflatorFamily& family, double tol = 1e-10);
SupermartingaleCertificate is_supermartingale_under_all(const AdaptedProcess& v, const AdaptedProcess& x,
                                                        const SupermartingaleOptions& options = {});

struct LpOptions {
    double tol = 1e-10;
    // Adds a seeded random vector from the null space of the step's
    // increments to every H. Changes H only where it is not identified.
    std::optional<std::uint64_t> tie_break_seed;
};

// One-step superhedging hyperplane: H and the consumption jumps.
struct HedgeStep {
    Eigen::VectorXd H;
    Eigen::VectorXd dC;
};
HedgeStep superhedge_step(const Eigen::MatrixXd& increments, const Eigen::VectorXd& dv, NodeId node = 0);

Decomposition decompose_lp(const AdaptedProcess& v, const AdaptedProcess& x, const LpOptions& options = {});

struct KwOptions {
    double tol = 1e-10; // residual threshold above which a node is deferred to the LP route
};

Decomposition decompose_kw(const AdaptedProcess& v, const AdaptedProcess& x, const DeflatorFamily& family,
                           const KwOptions& options = {});

struct UniquenessReport {
    bool pass = false;
    double max_dC = 0.0;    // max node |C1 - C2|
    double max_gain = 0.0;  // max node |int <H1, dX> - int <H2, dX>|
    double max_dH = 0.0;    // informational; not required to vanish
};

// Throws InputError if the two decompositions are of different V.
UniquenessReport check_uniqueness(const Decomposition& d1, const Decomposition& d2, const AdaptedProcess& x,
                                  double tol = 1e-8);

// V0 + sum along the path of <H(parent), dX> - C.
AdaptedProcess reconstruct(double v0, const PredictableProcess& h, const AdaptedProcess& c, const AdaptedProcess& x);

// int <H, dX> along each path.
AdaptedProcess gains(const PredictableProcess& h, const AdaptedProcess& x);

} // namespace odx
