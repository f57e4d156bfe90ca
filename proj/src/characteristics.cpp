#include "odx/characteristics.hpp"

#include "odx/error.hpp"
#include "odx/linalg.hpp"

#include <cmath>

namespace odx {

Eigen::MatrixXd Characteristics::c_at(NodeId node) const {
    const Eigen::VectorXd flat = c.at(node);
    const auto d = static_cast<Eigen::Index>(dim());
    Eigen::MatrixXd m(d, d);
    for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = 0; j < d; ++j)
            m(i, j) = flat(i * d + j);
    return m;
}

Characteristics extract_characteristics(const AdaptedProcess& x) {
    const std::size_t d = x.dim();
    const auto [a_proc, m_proc] = doob_decompose(x);
    Characteristics ch{PredictableProcess(x.tree_ptr(), d), PredictableProcess(x.tree_ptr(), d * d),
                       PredictableProcess(x.tree_ptr(), 1)};
    for (NodeId node : x.tree().internal_nodes()) {
        const double dg = 1.0;
        const NodeId first_child = x.tree().children(node).front();
        ch.a.set(node, a_proc.increment(first_child) / dg);
        const Eigen::MatrixXd cov = conditional_moment(m_proc, node, 2) / dg;
        ch.c.set(node, Eigen::Map<const Eigen::VectorXd>(Eigen::MatrixXd(cov.transpose()).data(),
                                                         static_cast<Eigen::Index>(d * d)));
        ch.dG.set(node, Eigen::VectorXd::Constant(1, dg));
    }
    return ch;
}

const char* to_string(StructureStatus s) {
    return s == StructureStatus::Solvable ? "SOLVABLE" : "ARBITRAGE";
}

StepSolution solve_structure_step(const Eigen::MatrixXd& c, const Eigen::VectorXd& a, double tol) {
    // Rounding leaves c at ~1e-34 on deterministic steps; |a|^2 anchors the
    // cutoff so such steps are read as c = 0.
    const auto ps = linalg::psd_pseudo_solve(c, a, tol, a.squaredNorm());
    const double neg_tol = 1e-10 * std::max(1.0, ps.lambda_max);
    ODX_REQUIRE(ps.lambda_min >= -neg_tol,
                "covariance matrix is not nonnegative definite (eigenvalue " << ps.lambda_min << ")");
    ODX_REQUIRE((c - c.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, c.cwiseAbs().maxCoeff()),
                "covariance matrix is not symmetric");
    StepSolution out;
    out.rho = ps.x;
    out.singular = ps.kernel.cols() > 0;
    out.residual = a.size() ? (c * ps.x - a).cwiseAbs().maxCoeff() : 0.0;
    out.solvable = out.residual <= tol;
    out.zeta = out.solvable ? Eigen::VectorXd::Zero(a.size()) : ps.kernel_part;
    return out;
}

StructureReport solve_structure(const Characteristics& ch, const StructureOptions& options) {
    ODX_REQUIRE(options.tol > 0.0, "structure tolerance must be positive");
    const TreePtr& tree = ch.a.tree_ptr();
    const std::size_t d = ch.dim();
    StructureReport report;
    PredictableProcess rho(tree, d), zeta(tree, d);
    report.mass = AdaptedProcess(tree, 1, 0.0);
    for (NodeId node : tree->internal_nodes()) {
        const double dg = ch.dG(node);
        ODX_REQUIRE(dg > 0.0, "clock increment must be positive at node " << node);
        const Eigen::MatrixXd c = ch.c_at(node);
        const auto step = solve_structure_step(c, ch.a.at(node), options.tol);
        rho.set(node, step.rho);
        zeta.set(node, step.zeta);
        report.min_norm_used = report.min_norm_used || step.singular;
        if (!step.solvable)
            report.arbitrage_nodes.push_back(node);
        const double inc = step.rho.dot(c * step.rho) * dg;
        for (NodeId child : tree->children(node))
            report.mass(child) = report.mass(node) + inc;
    }
    report.mass_max = report.mass.values().maxCoeff();
    report.mass_flag = report.mass_max > options.mass_threshold;
    if (report.arbitrage_nodes.empty()) {
        report.status = StructureStatus::Solvable;
        report.rho = std::move(rho);
    } else {
        report.status = StructureStatus::Arbitrage;
        report.zeta = std::move(zeta);
    }
    return report;
}

std::optional<Eigen::VectorXd> node_arbitrage(const Eigen::MatrixXd& increments, double tol) {
    // maximize sum_k <zeta, dX_k>  s.t.  0 <= <zeta, dX_k> <= 1, zeta = zp - zm free.
    const Eigen::Index d = increments.rows(), k = increments.cols();
    const Eigen::MatrixXd g = increments.transpose(); // k x d
    Eigen::MatrixXd a_ub(2 * k, 2 * d);
    a_ub << -g, g, g, -g;
    Eigen::VectorXd b_ub(2 * k);
    b_ub << Eigen::VectorXd::Zero(k), Eigen::VectorXd::Ones(k);
    const Eigen::VectorXd gain = g.colwise().sum().transpose();
    Eigen::VectorXd cost(2 * d);
    cost << gain, -gain;
    const auto lp = linalg::solve_lp(cost, Eigen::MatrixXd(0, 2 * d), Eigen::VectorXd(0), a_ub, b_ub);
    ODX_ENSURE(lp.status == linalg::LpStatus::Optimal, "arbitrage LP is bounded and feasible by construction");
    if (lp.objective <= tol)
        return std::nullopt;
    Eigen::VectorXd zeta = lp.x.head(d) - lp.x.tail(d);
    return zeta;
}

std::vector<NodeId> tree_arbitrage_nodes(const AdaptedProcess& x, double tol) {
    std::vector<NodeId> out;
    for (NodeId node : x.tree().internal_nodes())
        if (node_arbitrage(child_increments(x, node), tol))
            out.push_back(node);
    return out;
}

} // namespace odx
