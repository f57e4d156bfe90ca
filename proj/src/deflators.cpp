#include "odx/deflators.hpp"

#include "odx/characteristics.hpp"
#include "odx/error.hpp"
#include "odx/linalg.hpp"
#include "odx/random.hpp"

#include <cmath>
#include <functional>
#include <optional>
#include <sstream>
#include <limits>

namespace odx {

AdaptedProcess stochastic_exponential(const AdaptedProcess& z, ExponentialMode mode) {
    ODX_REQUIRE(z.dim() == 1, "stochastic exponential needs a scalar process");
    ODX_REQUIRE(std::abs(z(0)) <= 1e-14, "stochastic exponential needs Z(0) = 0 (got " << z(0) << ")");
    AdaptedProcess e(z.tree_ptr(), 1, 1.0);
    for (const auto& n : z.tree().nodes()) {
        if (!n.parent)
            continue;
        const double jump = z(n.id) - z(*n.parent);
        if (mode == ExponentialMode::StrictlyPositive)
            ODX_REQUIRE(jump > -1.0, "jump " << jump << " <= -1 at node " << n.id
                                             << " in a strictly positive exponential");
        e(n.id) = e(*n.parent) * (1.0 + jump);
    }
    return e;
}

namespace {

double log_wealth(const Eigen::MatrixXd& dx, const Eigen::VectorXd& p, const Eigen::VectorXd& rho, bool& admissible) {
    const Eigen::VectorXd gross = Eigen::VectorXd::Ones(dx.cols()) + dx.transpose() * rho;
    admissible = (gross.array() > 0.0).all();
    if (!admissible)
        return -std::numeric_limits<double>::infinity();
    return p.dot(gross.array().log().matrix());
}

Eigen::VectorXd gradient(const Eigen::MatrixXd& dx, const Eigen::VectorXd& p, const Eigen::VectorXd& rho) {
    const Eigen::VectorXd gross = Eigen::VectorXd::Ones(dx.cols()) + dx.transpose() * rho;
    return dx * p.cwiseQuotient(gross);
}

// Full Newton steps past the tolerance while the gradient keeps shrinking.
Eigen::VectorXd polish(const Eigen::MatrixXd& dx, const Eigen::VectorXd& p, Eigen::VectorXd rho) {
    double best = gradient(dx, p, rho).cwiseAbs().maxCoeff();
    for (int iter = 0; iter < 4 && best > 0.0; ++iter) {
        const Eigen::VectorXd gross = Eigen::VectorXd::Ones(dx.cols()) + dx.transpose() * rho;
        const Eigen::VectorXd w2 = p.cwiseQuotient(gross.cwiseAbs2());
        const Eigen::MatrixXd neg_hess = dx * w2.asDiagonal() * dx.transpose();
        const Eigen::VectorXd next = rho + linalg::psd_pseudo_solve(neg_hess, gradient(dx, p, rho), 1e-14).x;
        if (((Eigen::VectorXd::Ones(dx.cols()) + dx.transpose() * next).array() <= 0.0).any())
            break;
        const double g = gradient(dx, p, next).cwiseAbs().maxCoeff();
        if (g >= best)
            break;
        best = g;
        rho = next;
    }
    return rho;
}

} // namespace

Eigen::VectorXd log_optimal_step(const Eigen::MatrixXd& dx, const Eigen::VectorXd& p, NodeId node,
                                 const NumeraireOptions& options) {
    ODX_REQUIRE(dx.cols() == p.size(), "increments and probabilities disagree on the number of children");
    if (auto zeta = node_arbitrage(dx)) {
        std::ostringstream msg;
        msg << "node " << node << " admits arbitrage (riskless gain with strategy " << zeta->transpose()
            << "); log-utility is unbounded";
        throw ArbitrageError(node, msg.str());
    }
    const Eigen::Index d = dx.rows();
    Eigen::VectorXd rho = Eigen::VectorXd::Zero(d);
    for (int iter = 0; iter <= options.max_iter; ++iter) {
        const Eigen::VectorXd gross = Eigen::VectorXd::Ones(dx.cols()) + dx.transpose() * rho;
        const Eigen::VectorXd w = p.cwiseQuotient(gross);
        const Eigen::VectorXd grad = dx * w;
        if (grad.size() == 0 || grad.cwiseAbs().maxCoeff() <= options.tol)
            return polish(dx, p, rho);
        if (iter == options.max_iter)
            break;
        const Eigen::VectorXd w2 = w.cwiseQuotient(gross);
        const Eigen::MatrixXd neg_hess = dx * w2.asDiagonal() * dx.transpose();
        const Eigen::VectorXd step = linalg::psd_pseudo_solve(neg_hess, grad, 1e-14).x;
        bool ok = false;
        const double f0 = log_wealth(dx, p, rho, ok);
        double t = 1.0;
        for (int halving = 0; halving < 60; ++halving, t *= 0.5) {
            const double f1 = log_wealth(dx, p, rho + t * step, ok);
            if (ok && f1 >= f0 - 1e-15 * std::max(1.0, std::abs(f0)))
                break;
        }
        rho += t * step;
    }
    ODX_THROW(ConvergenceError, "log-optimal portfolio did not converge at node " << node << " within "
                                                                                  << options.max_iter
                                                                                  << " Newton steps");
}

NumerairePortfolio numeraire_portfolio(const AdaptedProcess& x, const NumeraireOptions& options) {
    const TreePtr& tree = x.tree_ptr();
    NumerairePortfolio out{PredictableProcess(tree, x.dim()), AdaptedProcess(tree, 1, 1.0),
                           AdaptedProcess(tree, 1, 1.0)};
    for (NodeId node : tree->internal_nodes()) {
        const Eigen::MatrixXd dx = child_increments(x, node);
        const Eigen::VectorXd rho = log_optimal_step(dx, tree->child_probabilities(node), node, options);
        out.rho_hat.set(node, rho);
        const auto& ch = tree->children(node);
        for (std::size_t k = 0; k < ch.size(); ++k) {
            const double gross = 1.0 + rho.dot(dx.col(static_cast<Eigen::Index>(k)));
            out.V_hat(ch[k]) = out.V_hat(node) * gross;
        }
    }
    for (std::size_t i = 0; i < tree->size(); ++i)
        out.Y_hat(i) = 1.0 / out.V_hat(i);
    return out;
}

Eigen::VectorXd density_measure(const AdaptedProcess& density, NodeId node) {
    const auto& tree = density.tree();
    const auto& ch = tree.children(node);
    Eigen::VectorXd q = tree.child_probabilities(node);
    for (std::size_t k = 0; k < ch.size(); ++k)
        q(static_cast<Eigen::Index>(k)) *= density(ch[k]) / density(node);
    return q;
}

namespace {

// Projection of `direction` onto {l : sum q l = 0, sum q l dM_i = 0},
// normalized to unit range. Zero if the subspace is trivial.
Eigen::VectorXd orthogonal_direction(const Eigen::MatrixXd& dm, const Eigen::VectorXd& q,
                                     const Eigen::VectorXd& direction) {
    const Eigen::Index k = q.size();
    Eigen::MatrixXd cons(dm.rows() + 1, k);
    cons.row(0) = q.transpose();
    for (Eigen::Index i = 0; i < dm.rows(); ++i)
        cons.row(i + 1) = q.cwiseProduct(dm.row(i).transpose()).transpose();
    const Eigen::MatrixXd basis = linalg::null_space(cons, 1e-10);
    if (basis.cols() == 0)
        return Eigen::VectorXd::Zero(k);
    Eigen::VectorXd proj = basis * (basis.transpose() * direction);
    const double range = proj.maxCoeff() - proj.minCoeff();
    if (range <= 1e-12 * std::max(1.0, direction.cwiseAbs().maxCoeff()))
        return Eigen::VectorXd::Zero(k);
    return proj / range;
}

AdaptedProcess assemble_jump_martingale(const AdaptedProcess& m, const AdaptedProcess& density,
                                        const std::function<std::optional<Eigen::VectorXd>(NodeId, Eigen::Index)>& dir,
                                        double scale) {
    ODX_REQUIRE(scale >= 0.0 && scale < 1.0, "jump scale must lie in [0, 1) to keep dL > -1");
    ODX_REQUIRE(density.dim() == 1, "density must be scalar");
    const auto& tree = m.tree();
    AdaptedProcess l(m.tree_ptr(), 1, 0.0);
    for (NodeId node : tree.internal_nodes()) {
        const auto& ch = tree.children(node);
        const auto k = static_cast<Eigen::Index>(ch.size());
        const auto d = dir(node, k);
        Eigen::VectorXd jump = Eigen::VectorXd::Zero(k);
        if (d) {
            ODX_REQUIRE(d->size() == k, "direction at node " << node << " has " << d->size() << " entries for " << k
                                                             << " children");
            jump = scale * orthogonal_direction(child_increments(m, node), density_measure(density, node), *d);
        }
        for (Eigen::Index j = 0; j < k; ++j)
            l(ch[static_cast<std::size_t>(j)]) = l(node) + jump(j);
    }
    return l;
}

} // namespace

AdaptedProcess orthogonal_jump_martingale(const AdaptedProcess& m, const AdaptedProcess& density, std::uint64_t seed,
                                          double margin) {
    ODX_REQUIRE(margin > 0.0 && margin <= 1.0, "margin must lie in (0, 1]");
    auto draw = [seed](NodeId node, Eigen::Index k) -> std::optional<Eigen::VectorXd> {
        auto eng = stream_engine(seed, node);
        std::normal_distribution<double> normal;
        Eigen::VectorXd v(k);
        for (Eigen::Index j = 0; j < k; ++j)
            v(j) = normal(eng);
        return v;
    };
    return assemble_jump_martingale(m, density, draw, 1.0 - margin);
}

AdaptedProcess orthogonal_jump_martingale(const AdaptedProcess& m, const AdaptedProcess& density,
                                          const std::map<NodeId, Eigen::VectorXd>& directions, double scale) {
    auto lookup = [&directions](NodeId node, Eigen::Index) -> std::optional<Eigen::VectorXd> {
        auto it = directions.find(node);
        if (it == directions.end())
            return std::nullopt;
        return it->second;
    };
    return assemble_jump_martingale(m, density, lookup, scale);
}

DeflatorCheck verify_deflator(const AdaptedProcess& y, const AdaptedProcess& x, double tol) {
    ODX_REQUIRE(y.dim() == 1, "deflator must be scalar");
    ODX_REQUIRE(y.values().minCoeff() > 0.0, "deflator must be strictly positive");
    ODX_REQUIRE(std::abs(y(0) - 1.0) <= 1e-12, "deflator must start at 1 (got " << y(0) << ")");
    const AdaptedProcess yx = multiply(y, x);
    DeflatorCheck out;
    double worst = -1.0;
    for (NodeId node : y.tree().internal_nodes()) {
        const double dy = std::abs(conditional_moment(y, node, 1)(0, 0));
        const double dyx = conditional_moment(yx, node, 1).cwiseAbs().maxCoeff();
        out.drift_y = std::max(out.drift_y, dy);
        out.drift_yx = std::max(out.drift_yx, dyx);
        if (std::max(dy, dyx) > worst) {
            worst = std::max(dy, dyx);
            out.worst_node = node;
        }
    }
    out.pass = out.drift_y <= tol && out.drift_yx <= tol;
    return out;
}

DeflatorFamily build_deflator_family(const AdaptedProcess& x, std::size_t extras, std::uint64_t seed, double margin) {
    auto num = numeraire_portfolio(x);
    DeflatorFamily fam{std::move(num.rho_hat), std::move(num.V_hat), std::move(num.Y_hat), {}};
    fam.extras.reserve(extras);
    for (std::size_t i = 0; i < extras; ++i) {
        AdaptedProcess l = orthogonal_jump_martingale(x, fam.Y_hat, mix_seed(seed, i), margin);
        AdaptedProcess y = multiply(fam.Y_hat, stochastic_exponential(l));
        fam.extras.push_back({std::move(l), std::move(y)});
    }
    return fam;
}

} // namespace odx
