#pragma once

// Small dense numerical kernels shared by the tree solvers: pseudoinverse
// solves for PSD matrices, a two-phase simplex for the per-node linear
// programs, and Lawson-Hanson NNLS / least-distance programming for the
// minimum-norm hedge.

#include <Eigen/Dense>

#include <optional>

namespace odx::linalg {

struct PsdSolve {
    Eigen::VectorXd x;          // minimum-norm solution of c x = a restricted to range(c)
    Eigen::VectorXd kernel_part; // projection of a onto ker(c)
    Eigen::MatrixXd kernel;     // orthonormal basis of ker(c), one column per vector
    double lambda_max = 0.0;
    double lambda_min = 0.0;
};

// Eigenvalues below tol * max(lambda_max, scale) count as zero. `c` must be
// symmetric.
PsdSolve psd_pseudo_solve(const Eigen::MatrixXd& c, const Eigen::VectorXd& a, double tol, double scale = 0.0);

// Orthonormal basis of {x : a x = 0}, columns. Singular values below
// tol * max(1, sigma_max) count as zero.
Eigen::MatrixXd null_space(const Eigen::MatrixXd& a, double tol = 1e-12);

Eigen::Index numerical_rank(const Eigen::MatrixXd& a, double tol = 1e-12);

enum class LpStatus { Optimal, Infeasible, Unbounded };

struct LpResult {
    LpStatus status = LpStatus::Infeasible;
    Eigen::VectorXd x;
    double objective = 0.0;
};

// maximize c^T x  subject to  a_eq x = b_eq,  a_ub x <= b_ub,  x >= 0.
// Either constraint block may have zero rows.
LpResult solve_lp(const Eigen::VectorXd& c, const Eigen::MatrixXd& a_eq, const Eigen::VectorXd& b_eq,
                  const Eigen::MatrixXd& a_ub, const Eigen::VectorXd& b_ub);

// min ||e u - f||_2 subject to u >= 0.
Eigen::VectorXd nnls(const Eigen::MatrixXd& e, const Eigen::VectorXd& f);

// min ||x||_2 subject to g x >= h; nullopt when infeasible.
std::optional<Eigen::VectorXd> least_distance(const Eigen::MatrixXd& g, const Eigen::VectorXd& h);

} // namespace odx::linalg
