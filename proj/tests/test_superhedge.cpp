#include "odx/deflators.hpp"
#include "odx/error.hpp"
#include "odx/models.hpp"
#include "odx/superhedge.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace odx;

namespace {

AdaptedProcess random_payoff(const TreePtr& tree, std::uint64_t seed) {
    std::mt19937_64 eng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    AdaptedProcess f(tree, 1, 0.0);
    for (std::size_t i = 0; i < tree->size(); ++i)
        f(i) = unif(eng) < 0.3 ? 0.0 : unif(eng);
    return f;
}

} // namespace

TEST_CASE("American put on the two-period binomial market") {
    const Model m = model_put2();
    const Claim put = vanilla_claim(ClaimKind::American, Vanilla::Put, 1.05, m.X);
    CHECK(put.payoff(0) == doctest::Approx(0.05));
    const auto res = superhedge(put, m.X);
    const auto& env = res.envelope;
    CHECK(res.price == doctest::Approx(0.09).epsilon(1e-12));
    CHECK(env(1) == doctest::Approx(0.03).epsilon(1e-12));
    CHECK(env(2) == doctest::Approx(0.15).epsilon(1e-12));
    CHECK(std::abs(env(3)) <= 1e-15);
    CHECK(env(4) == doctest::Approx(0.06).epsilon(1e-12));
    CHECK(env(5) == doctest::Approx(0.06).epsilon(1e-12));
    CHECK(env(6) == doctest::Approx(0.24).epsilon(1e-12));
    CHECK(res.decomposition.H(0) == doctest::Approx(-0.6).epsilon(1e-12));
    CHECK(res.decomposition.diagnostics.reconstruction_error <= 1e-14);
    CHECK(res.decomposition.C.values().cwiseAbs().maxCoeff() <= 1e-14);
    CHECK(res.exercise_value(0) == doctest::Approx(0.05));
}

TEST_CASE("European claims on the trinomial market") {
    const Model t1 = model_t1();
    const Claim c{ClaimKind::European, AdaptedProcess::scalar(t1.X.tree_ptr(), {0.0, 1.0, 0.0, 1.0})};
    const auto res = superhedge(c, t1.X);
    CHECK(res.price == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(res.decomposition.H(0)) <= 1e-12);
    CHECK(res.decomposition.C(2) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("constant and zero claims") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Model m = random_model(seed);
        for (double kappa : {0.0, 2.5}) {
            const Claim c{ClaimKind::European, AdaptedProcess(m.X.tree_ptr(), 1, kappa)};
            const auto res = superhedge(c, m.X);
            CHECK(res.price == doctest::Approx(kappa).epsilon(1e-12));
            CHECK((res.envelope.values().array() - kappa).abs().maxCoeff() <= 1e-12);
            CHECK(res.decomposition.H.values().leftCols(1).cwiseAbs().maxCoeff() <= 1e-12);
            CHECK(res.decomposition.C.values().cwiseAbs().maxCoeff() <= 1e-12);
        }
    }
}

TEST_CASE("portfolio view of the numeraire") {
    const Model b1 = model_b1();
    const auto num = numeraire_portfolio(b1.X);
    const auto view = portfolio_view(num.rho_hat, num.V_hat, b1.X);
    CHECK(view.S(0) == 1.0);
    CHECK(view.S(1) == doctest::Approx(1.1));
    CHECK(view.S(2) == doctest::Approx(0.9));
    CHECK(view.currency(0) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(view.shares(0) == doctest::Approx(2.0).epsilon(1e-12));

    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const Model m = random_model(seed);
        const auto n = numeraire_portfolio(m.X);
        const auto v = portfolio_view(n.rho_hat, n.V_hat, m.X);
        for (NodeId node : m.X.tree().internal_nodes()) {
            CHECK((v.currency.at(node) - n.V_hat(node) * n.rho_hat.at(node)).cwiseAbs().maxCoeff() <= 1e-14);
            CHECK((v.shares.at(node).cwiseProduct(v.S.at(node)) - v.currency.at(node)).cwiseAbs().maxCoeff() <=
                  1e-13);
            // Self-financing in currency terms: dV_hat = <eta, dS / S>.
            for (NodeId c : m.X.tree().children(node)) {
                double gain = 0.0;
                for (std::size_t i = 0; i < m.X.dim(); ++i)
                    gain += v.currency(node, i) * (v.S(c, i) / v.S(node, i) - 1.0);
                CHECK(n.V_hat(c) - n.V_hat(node) == doctest::Approx(gain).epsilon(1e-10));
            }
        }
    }
}

TEST_CASE("envelope agrees with the vertex recursion and dominates the payoff") {
    for (std::uint64_t seed = 0; seed < 60; ++seed) {
        RandomTreeOptions opts;
        opts.complete = seed % 3 == 0;
        const Model m = random_model(seed, opts);
        for (ClaimKind kind : {ClaimKind::European, ClaimKind::American}) {
            const Claim c{kind, random_payoff(m.X.tree_ptr(), seed)};
            const bool american = kind == ClaimKind::American;
            const auto env = snell_envelope(c, m.X);
            const auto ref = oracle::snell(c.payoff, m.X, american);
            CHECK((env.values() - ref.values()).cwiseAbs().maxCoeff() <= 1e-10);
            for (const auto& n : m.X.tree().nodes())
                if (american || m.X.tree().is_leaf(n.id))
                    CHECK(env(n.id) >= c.payoff(n.id) - 1e-14);
            CHECK(is_supermartingale_under_all(env, m.X).pass);

            const auto res = superhedge(c, m.X);
            const auto wealth = reconstruct(res.price, res.decomposition.H, AdaptedProcess(m.X.tree_ptr(), 1, 0.0), m.X);
            for (const auto& n : m.X.tree().nodes())
                if (american || m.X.tree().is_leaf(n.id))
                    CHECK(wealth(n.id) >= c.payoff(n.id) - 1e-10);
            CHECK(res.decomposition.diagnostics.min_dC >= -1e-12);
        }
    }
}

TEST_CASE("envelope is the smallest dominating supermartingale") {
    // Lowering the envelope at any node breaks either domination or the
    // supermartingale property.
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Model m = random_model(seed);
        const Claim c{ClaimKind::American, random_payoff(m.X.tree_ptr(), seed + 99)};
        const auto env = snell_envelope(c, m.X);
        for (const auto& n : m.X.tree().nodes()) {
            auto lower = env;
            lower(n.id) -= 1e-3;
            const bool dominates = lower(n.id) >= c.payoff(n.id);
            const bool super = is_supermartingale_under_all(lower, m.X).pass;
            CHECK_FALSE((dominates && super));
        }
    }
}

TEST_CASE("American and European convex claims coincide without interest") {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const Model m = random_model(seed);
        for (Vanilla type : {Vanilla::Put, Vanilla::Call}) {
            const auto am = superhedge(vanilla_claim(ClaimKind::American, type, 1.0, m.X), m.X);
            const auto eu = superhedge(vanilla_claim(ClaimKind::European, type, 1.0, m.X), m.X);
            CHECK(am.price == doctest::Approx(eu.price).epsilon(1e-10));
        }
    }
}

TEST_CASE("claims on arbitrage markets are rejected") {
    const Model a1 = model_a1();
    const Claim c{ClaimKind::European, AdaptedProcess(a1.X.tree_ptr(), 1, 1.0)};
    CHECK_THROWS_AS(snell_envelope(c, a1.X), ArbitrageError);
    CHECK_THROWS_AS(vanilla_claim(ClaimKind::European, Vanilla::Put, 1.0, a1.X, 2), InputError);
}
