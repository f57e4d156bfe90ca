#pragma once

#include "odx/probtree.hpp"

#include <optional>
#include <vector>

namespace odx {

// Per-step drift rate a, covariance rate c and clock increment dG of a
// market process. On trees the clock runs in operational time (dG = 1 per
// step), so a and c are the conditional mean and covariance of one step.
struct Characteristics {
    PredictableProcess a;  // dimension d
    PredictableProcess c;  // dimension d*d, row-major
    PredictableProcess dG; // dimension 1

    std::size_t dim() const { return a.dim(); }
    Eigen::MatrixXd c_at(NodeId node) const;
};

Characteristics extract_characteristics(const AdaptedProcess& x);

enum class StructureStatus { Solvable, Arbitrage };

const char* to_string(StructureStatus s);

// Solution of a = c rho at a single step.
struct StepSolution {
    bool solvable = true;
    bool singular = false;     // c has a nontrivial kernel; rho is the min-norm choice
    Eigen::VectorXd rho;       // c^+ a
    Eigen::VectorXd zeta;      // projection of a onto ker(c); nonzero iff !solvable
    double residual = 0.0;     // ||c rho - a||_inf
};

StepSolution solve_structure_step(const Eigen::MatrixXd& c, const Eigen::VectorXd& a, double tol = 1e-10);

struct StructureOptions {
    double tol = 1e-10;
    double mass_threshold = 1e6;
};

struct StructureReport {
    StructureStatus status = StructureStatus::Solvable;
    std::optional<PredictableProcess> rho;  // present iff Solvable
    std::optional<PredictableProcess> zeta; // present iff Arbitrage; zero off the flagged steps
    AdaptedProcess mass;                    // running sum of <rho, c rho> dG
    double mass_max = 0.0;
    bool mass_flag = false;
    bool min_norm_used = false;             // some step had singular c
    std::vector<NodeId> arbitrage_nodes;
};

StructureReport solve_structure(const Characteristics& ch, const StructureOptions& options = {});

// Strategy with <zeta, dX_k> >= 0 for every child and > 0 for some child, or
// nullopt if the node admits no such riskless gain (equivalently, a strictly
// positive martingale measure exists at the node). `increments` has one
// column per child.
std::optional<Eigen::VectorXd> node_arbitrage(const Eigen::MatrixXd& increments, double tol = 1e-10);

// Nodes where the one-step market admits a riskless gain.
std::vector<NodeId> tree_arbitrage_nodes(const AdaptedProcess& x, double tol = 1e-10);

} // namespace odx
