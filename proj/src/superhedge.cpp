#include "odx/superhedge.hpp"

#include "odx/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace odx {

Claim vanilla_claim(ClaimKind kind, Vanilla type, double strike, const AdaptedProcess& x, std::size_t asset) {
    ODX_REQUIRE(asset < x.dim(), "asset index " << asset << " out of range");
    AdaptedProcess z = x.component(asset);
    const double x0 = z(0);
    for (std::size_t i = 0; i < z.size(); ++i)
        z(i) -= x0;
    const AdaptedProcess s = stochastic_exponential(z);
    AdaptedProcess payoff(x.tree_ptr(), 1, 0.0);
    for (std::size_t i = 0; i < s.size(); ++i)
        payoff(i) = type == Vanilla::Put ? std::max(strike - s(i), 0.0) : std::max(s(i) - strike, 0.0);
    return {kind, std::move(payoff)};
}

AdaptedProcess snell_envelope(const Claim& claim, const AdaptedProcess& x) {
    ODX_REQUIRE(claim.payoff.dim() == 1, "payoff must be scalar");
    ODX_REQUIRE(claim.payoff.tree().size() == x.tree().size(), "payoff and market live on different trees");
    const EventTree& tree = x.tree();
    for (NodeId leaf : tree.leaves())
        ODX_REQUIRE(std::isfinite(claim.payoff(leaf)), "payoff must be finite");
    AdaptedProcess v = claim.payoff;
    for (int t = tree.horizon() - 1; t >= 0; --t) {
        for (NodeId node : tree.nodes_at(t)) {
            const auto& ch = tree.children(node);
            Eigen::VectorXd vals(static_cast<Eigen::Index>(ch.size()));
            for (std::size_t k = 0; k < ch.size(); ++k)
                vals(static_cast<Eigen::Index>(k)) = v(ch[k]);
            const Eigen::MatrixXd dx = child_increments(x, node);
            double cont = 0.0;
            try {
                cont = polytope_max(dx, vals, node).value;
            } catch (const ConvergenceError&) {
                // Fall back to the vertices of the polytope.
                cont = -std::numeric_limits<double>::infinity();
                for (const auto& q : martingale_vertices(dx))
                    cont = std::max(cont, q.dot(vals));
                if (!std::isfinite(cont))
                    throw ArbitrageError(node, "node " + std::to_string(node) + " has no martingale measure");
            }
            v(node) = claim.kind == ClaimKind::American ? std::max(claim.payoff(node), cont) : cont;
        }
    }
    return v;
}

PortfolioView portfolio_view(const PredictableProcess& rho_hat, const AdaptedProcess& v_hat, const AdaptedProcess& x) {
    const std::size_t d = x.dim();
    ODX_REQUIRE(rho_hat.dim() == d, "portfolio and market dimensions differ");
    Eigen::MatrixXd s_vals(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(x.tree().size()));
    for (std::size_t i = 0; i < d; ++i) {
        AdaptedProcess z = x.component(i);
        const double x0 = z(0);
        for (std::size_t j = 0; j < z.size(); ++j)
            z(j) -= x0;
        s_vals.row(static_cast<Eigen::Index>(i)) = stochastic_exponential(z).values();
    }
    PortfolioView view{AdaptedProcess(x.tree_ptr(), std::move(s_vals)), PredictableProcess(x.tree_ptr(), d),
                       PredictableProcess(x.tree_ptr(), d)};
    for (NodeId node : x.tree().internal_nodes()) {
        const Eigen::VectorXd eta = v_hat(node) * rho_hat.at(node);
        view.currency.set(node, eta);
        view.shares.set(node, eta.cwiseQuotient(view.S.at(node)));
    }
    return view;
}

SuperhedgeResult superhedge(const Claim& claim, const AdaptedProcess& x) {
    AdaptedProcess env = snell_envelope(claim, x);
    Decomposition dec = decompose_lp(env, x);
    const auto num = numeraire_portfolio(x);
    PortfolioView view = portfolio_view(num.rho_hat, num.V_hat, x);
    const double price = env(0);
    return {price, claim.payoff, std::move(env), std::move(dec), std::move(view)};
}

} // namespace odx
