#include "odx/linalg.hpp"

#include "odx/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace odx::linalg {

PsdSolve psd_pseudo_solve(const Eigen::MatrixXd& c, const Eigen::VectorXd& a, double tol, double scale) {
    ODX_REQUIRE(c.rows() == c.cols() && c.rows() == a.size(), "psd_pseudo_solve: dimension mismatch");
    const Eigen::Index d = c.rows();
    PsdSolve out;
    if (d == 0) {
        out.x = Eigen::VectorXd(0);
        out.kernel_part = Eigen::VectorXd(0);
        out.kernel = Eigen::MatrixXd(0, 0);
        return out;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (c + c.transpose()));
    const Eigen::VectorXd& lam = eig.eigenvalues();
    const Eigen::MatrixXd& vec = eig.eigenvectors();
    out.lambda_min = lam.minCoeff();
    out.lambda_max = lam.maxCoeff();
    const double cutoff = tol * std::max({out.lambda_max, scale, 0.0});
    out.x = Eigen::VectorXd::Zero(d);
    out.kernel_part = Eigen::VectorXd::Zero(d);
    std::vector<Eigen::Index> kernel_cols;
    for (Eigen::Index i = 0; i < d; ++i) {
        const double coeff = vec.col(i).dot(a);
        if (lam(i) > cutoff && lam(i) > 0.0) {
            out.x += (coeff / lam(i)) * vec.col(i);
        } else {
            out.kernel_part += coeff * vec.col(i);
            kernel_cols.push_back(i);
        }
    }
    out.kernel.resize(d, static_cast<Eigen::Index>(kernel_cols.size()));
    for (std::size_t j = 0; j < kernel_cols.size(); ++j)
        out.kernel.col(static_cast<Eigen::Index>(j)) = vec.col(kernel_cols[j]);
    return out;
}

Eigen::MatrixXd null_space(const Eigen::MatrixXd& a, double tol) {
    const Eigen::Index n = a.cols();
    if (a.rows() == 0)
        return Eigen::MatrixXd::Identity(n, n);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
    const Eigen::VectorXd& s = svd.singularValues();
    const double cutoff = tol * std::max(1.0, s.size() ? s(0) : 0.0);
    Eigen::Index rank = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i)
        if (s(i) > cutoff)
            ++rank;
    return svd.matrixV().rightCols(n - rank);
}

Eigen::Index numerical_rank(const Eigen::MatrixXd& a, double tol) {
    if (a.size() == 0)
        return 0;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
    const Eigen::VectorXd& s = svd.singularValues();
    const double cutoff = tol * std::max(1.0, s(0));
    return (s.array() > cutoff).count();
}

// --- simplex -------------------------------------------------------------

namespace {

// Dense tableau, maximization form. Row `m` holds reduced costs z_j - c_j;
// the last column holds the right-hand side. Bland's rule throughout, so
// the method terminates on degenerate problems.
class Tableau {
public:
    Tableau(Eigen::MatrixXd t, std::vector<Eigen::Index> basis, double eps)
        : t_(std::move(t)), basis_(std::move(basis)), eps_(eps) {}

    Eigen::Index rows() const { return t_.rows() - 1; }
    Eigen::Index cols() const { return t_.cols() - 1; }

    void set_objective(const Eigen::VectorXd& cost, const std::vector<bool>& allowed) {
        allowed_ = allowed;
        t_.row(rows()).setZero();
        t_.row(rows()).head(cols()) = -cost.transpose();
        for (Eigen::Index r = 0; r < rows(); ++r) {
            const double cb = cost(basis_[static_cast<std::size_t>(r)]);
            if (cb != 0.0)
                t_.row(rows()) += cb * t_.row(r);
        }
    }

    // Returns false when the objective is unbounded.
    bool optimize() {
        const int max_iter = 50000;
        for (int iter = 0; iter < max_iter; ++iter) {
            Eigen::Index enter = -1;
            for (Eigen::Index j = 0; j < cols(); ++j) {
                if (allowed_[static_cast<std::size_t>(j)] && t_(rows(), j) < -eps_) {
                    enter = j;
                    break;
                }
            }
            if (enter < 0)
                return true;
            double best = std::numeric_limits<double>::infinity();
            for (Eigen::Index r = 0; r < rows(); ++r)
                if (t_(r, enter) > eps_)
                    best = std::min(best, t_(r, cols()) / t_(r, enter));
            if (!std::isfinite(best))
                return false;
            Eigen::Index leave = -1;
            for (Eigen::Index r = 0; r < rows(); ++r) {
                if (t_(r, enter) > eps_ && t_(r, cols()) / t_(r, enter) <= best + eps_ &&
                    (leave < 0 || basis_[static_cast<std::size_t>(r)] < basis_[static_cast<std::size_t>(leave)]))
                    leave = r;
            }
            pivot(leave, enter);
        }
        ODX_THROW(ConvergenceError, "simplex: iteration limit reached");
    }

    void pivot(Eigen::Index r, Eigen::Index s) {
        t_.row(r) /= t_(r, s);
        for (Eigen::Index i = 0; i <= rows(); ++i) {
            if (i != r && t_(i, s) != 0.0)
                t_.row(i) -= t_(i, s) * t_.row(r);
        }
        t_(r, s) = 1.0;
        basis_[static_cast<std::size_t>(r)] = s;
    }

    void drop_row(Eigen::Index r) {
        Eigen::MatrixXd next(t_.rows() - 1, t_.cols());
        next << t_.topRows(r), t_.bottomRows(t_.rows() - r - 1);
        t_ = std::move(next);
        basis_.erase(basis_.begin() + r);
    }

    double objective() const { return t_(rows(), cols()); }
    double entry(Eigen::Index r, Eigen::Index c) const { return t_(r, c); }
    Eigen::Index basic(Eigen::Index r) const { return basis_[static_cast<std::size_t>(r)]; }

    Eigen::VectorXd solution(Eigen::Index n) const {
        Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
        for (Eigen::Index r = 0; r < rows(); ++r) {
            const Eigen::Index b = basis_[static_cast<std::size_t>(r)];
            if (b < n)
                x(b) = std::max(0.0, t_(r, cols()));
        }
        return x;
    }

private:
    Eigen::MatrixXd t_;
    std::vector<Eigen::Index> basis_;
    std::vector<bool> allowed_;
    double eps_;
};

} // namespace

LpResult solve_lp(const Eigen::VectorXd& c, const Eigen::MatrixXd& a_eq, const Eigen::VectorXd& b_eq,
                  const Eigen::MatrixXd& a_ub, const Eigen::VectorXd& b_ub) {
    const Eigen::Index n = c.size();
    const Eigen::Index m_eq = a_eq.rows(), m_ub = a_ub.rows();
    ODX_REQUIRE((m_eq == 0 || a_eq.cols() == n) && (m_ub == 0 || a_ub.cols() == n),
                "solve_lp: constraint width does not match objective");
    ODX_REQUIRE(b_eq.size() == m_eq && b_ub.size() == m_ub, "solve_lp: rhs size mismatch");
    const Eigen::Index m = m_eq + m_ub;

    double scale = 1.0;
    if (m_eq)
        scale = std::max({scale, a_eq.cwiseAbs().maxCoeff(), b_eq.cwiseAbs().maxCoeff()});
    if (m_ub)
        scale = std::max({scale, a_ub.cwiseAbs().maxCoeff(), b_ub.cwiseAbs().maxCoeff()});
    const double eps = 1e-12 * scale;

    // Columns: x (n), slacks (m_ub), artificials (m), rhs.
    const Eigen::Index n_slack = m_ub, n_art = m;
    const Eigen::Index width = n + n_slack + n_art;
    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(m + 1, width + 1);
    for (Eigen::Index r = 0; r < m_eq; ++r) {
        t.row(r).head(n) = a_eq.row(r);
        t(r, width) = b_eq(r);
    }
    for (Eigen::Index r = 0; r < m_ub; ++r) {
        t.row(m_eq + r).head(n) = a_ub.row(r);
        t(m_eq + r, n + r) = 1.0;
        t(m_eq + r, width) = b_ub(r);
    }
    for (Eigen::Index r = 0; r < m; ++r) {
        if (t(r, width) < 0.0)
            t.row(r).head(n + n_slack) *= -1.0, t(r, width) *= -1.0;
        t(r, n + n_slack + r) = 1.0;
    }
    std::vector<Eigen::Index> basis(static_cast<std::size_t>(m));
    for (Eigen::Index r = 0; r < m; ++r)
        basis[static_cast<std::size_t>(r)] = n + n_slack + r;

    Tableau tab(std::move(t), std::move(basis), eps);

    // Phase 1: maximize -sum(artificials).
    Eigen::VectorXd phase1 = Eigen::VectorXd::Zero(width);
    phase1.tail(n_art).setConstant(-1.0);
    tab.set_objective(phase1, std::vector<bool>(static_cast<std::size_t>(width), true));
    tab.optimize();
    LpResult result;
    if (tab.objective() < -1e-9 * scale) {
        result.status = LpStatus::Infeasible;
        return result;
    }
    // Drive artificials out of the basis; drop redundant rows.
    for (Eigen::Index r = tab.rows() - 1; r >= 0; --r) {
        if (tab.basic(r) < n + n_slack)
            continue;
        Eigen::Index pivot_col = -1;
        for (Eigen::Index j = 0; j < n + n_slack; ++j) {
            if (std::abs(tab.entry(r, j)) > eps) {
                pivot_col = j;
                break;
            }
        }
        if (pivot_col >= 0)
            tab.pivot(r, pivot_col);
        else
            tab.drop_row(r);
    }

    // Phase 2.
    Eigen::VectorXd cost = Eigen::VectorXd::Zero(width);
    cost.head(n) = c;
    std::vector<bool> allowed(static_cast<std::size_t>(width), true);
    for (Eigen::Index j = n + n_slack; j < width; ++j)
        allowed[static_cast<std::size_t>(j)] = false;
    tab.set_objective(cost, allowed);
    if (!tab.optimize()) {
        result.status = LpStatus::Unbounded;
        return result;
    }
    result.status = LpStatus::Optimal;
    result.x = tab.solution(n);
    result.objective = c.dot(result.x);
    return result;
}

// --- NNLS / LDP ----------------------------------------------------------

Eigen::VectorXd nnls(const Eigen::MatrixXd& e, const Eigen::VectorXd& f) {
    const Eigen::Index n = e.cols();
    ODX_REQUIRE(e.rows() == f.size(), "nnls: dimension mismatch");
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    std::vector<bool> passive(static_cast<std::size_t>(n), false);
    const double tol = 1e-13 * std::max(1.0, e.cwiseAbs().maxCoeff()) * std::max(1.0, f.cwiseAbs().maxCoeff()) *
                       static_cast<double>(std::max<Eigen::Index>(n, 1));

    auto solve_passive = [&](Eigen::VectorXd& z) {
        std::vector<Eigen::Index> idx;
        for (Eigen::Index j = 0; j < n; ++j)
            if (passive[static_cast<std::size_t>(j)])
                idx.push_back(j);
        Eigen::MatrixXd ep(e.rows(), static_cast<Eigen::Index>(idx.size()));
        for (std::size_t k = 0; k < idx.size(); ++k)
            ep.col(static_cast<Eigen::Index>(k)) = e.col(idx[k]);
        const Eigen::VectorXd zp = ep.completeOrthogonalDecomposition().solve(f);
        z = Eigen::VectorXd::Zero(n);
        for (std::size_t k = 0; k < idx.size(); ++k)
            z(idx[k]) = zp(static_cast<Eigen::Index>(k));
    };

    // Indices whose positive gradient is a rounding artefact: entering them
    // gives a nonpositive coefficient straight away. Cleared whenever x moves.
    std::vector<bool> blocked(static_cast<std::size_t>(n), false);
    for (int outer = 0; outer < 10 * static_cast<int>(n) + 10; ++outer) {
        const Eigen::VectorXd w = e.transpose() * (f - e * x);
        Eigen::Index t = -1;
        double wmax = tol;
        for (Eigen::Index j = 0; j < n; ++j) {
            const auto sj = static_cast<std::size_t>(j);
            if (!passive[sj] && !blocked[sj] && w(j) > wmax) {
                wmax = w(j);
                t = j;
            }
        }
        if (t < 0)
            return x;
        passive[static_cast<std::size_t>(t)] = true;
        for (int inner = 0; inner < 3 * static_cast<int>(n) + 10; ++inner) {
            Eigen::VectorXd z;
            solve_passive(z);
            if (inner == 0 && z(t) <= 0.0) {
                passive[static_cast<std::size_t>(t)] = false;
                blocked[static_cast<std::size_t>(t)] = true;
                break;
            }
            std::fill(blocked.begin(), blocked.end(), false);
            bool all_positive = true;
            for (Eigen::Index j = 0; j < n; ++j)
                if (passive[static_cast<std::size_t>(j)] && z(j) <= 0.0)
                    all_positive = false;
            if (all_positive) {
                x = z;
                break;
            }
            double alpha = std::numeric_limits<double>::infinity();
            for (Eigen::Index j = 0; j < n; ++j) {
                if (passive[static_cast<std::size_t>(j)] && z(j) <= 0.0) {
                    const double denom = x(j) - z(j);
                    if (denom > 0.0)
                        alpha = std::min(alpha, x(j) / denom);
                }
            }
            if (!std::isfinite(alpha))
                alpha = 0.0;
            x += alpha * (z - x);
            for (Eigen::Index j = 0; j < n; ++j) {
                if (passive[static_cast<std::size_t>(j)] && x(j) <= tol) {
                    passive[static_cast<std::size_t>(j)] = false;
                    x(j) = 0.0;
                }
            }
        }
    }
    ODX_THROW(ConvergenceError, "nnls: iteration limit reached");
}

std::optional<Eigen::VectorXd> least_distance(const Eigen::MatrixXd& g, const Eigen::VectorXd& h) {
    const Eigen::Index m = g.rows(), n = g.cols();
    ODX_REQUIRE(h.size() == m, "least_distance: dimension mismatch");
    if (m == 0)
        return Eigen::VectorXd::Zero(n);
    Eigen::MatrixXd e(n + 1, m);
    e.topRows(n) = g.transpose();
    e.row(n) = h.transpose();
    Eigen::VectorXd f = Eigen::VectorXd::Zero(n + 1);
    f(n) = 1.0;
    const Eigen::VectorXd u = nnls(e, f);
    const Eigen::VectorXd r = e * u - f;
    if (r.norm() <= 1e-12 || r(n) > -1e-14)
        return std::nullopt;
    return Eigen::VectorXd(-r.head(n) / r(n));
}

} // namespace odx::linalg
