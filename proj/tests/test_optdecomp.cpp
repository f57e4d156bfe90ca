#include "odx/error.hpp"
#include "odx/models.hpp"
#include "odx/optdecomp.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>

using namespace odx;

namespace {

AdaptedProcess t1_value(double v0) {
    return AdaptedProcess::scalar(model_t1().X.tree_ptr(), {v0, 1.0, 0.0, 1.0});
}

// Two identical assets on top of a random market; H is not identified.
AdaptedProcess duplicated(const AdaptedProcess& x) {
    Eigen::MatrixXd v(2 * x.dim(), x.size());
    v << x.values(), x.values();
    return AdaptedProcess(x.tree_ptr(), v);
}

double max_abs(const AdaptedProcess& p) { return p.values().cwiseAbs().maxCoeff(); }

} // namespace

TEST_CASE("supermartingale certificate on the trinomial value") {
    const Model t1 = model_t1();
    const auto ok = is_supermartingale_under_all(t1_value(1.0), t1.X);
    CHECK(ok.pass);
    CHECK_FALSE(ok.witness.has_value());
    CHECK(std::abs(ok.max_excess) <= 1e-12);

    const auto bad = is_supermartingale_under_all(t1_value(0.9), t1.X);
    CHECK_FALSE(bad.pass);
    REQUIRE(bad.witness.has_value());
    CHECK(bad.witness->kind == "measure");
    CHECK(bad.witness->node == 0);
    CHECK(bad.witness->violation == doctest::Approx(0.1).epsilon(1e-12));
    const Eigen::VectorXd q = bad.witness->measure;
    CHECK(q(0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(std::abs(q(1)) <= 1e-12);
    CHECK(q(2) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("polytope maximum matches the vertex oracle") {
    const Model t1 = model_t1();
    const Eigen::MatrixXd dx = child_increments(t1.X, 0);
    Eigen::VectorXd vals(3);
    vals << 1.0, 0.0, 1.0;
    CHECK(polytope_max(dx, vals).value == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(martingale_vertices(dx).size() == 2);
    CHECK_THROWS_AS(polytope_max(child_increments(model_a1().X, 0), Eigen::VectorXd::Zero(2)), ArbitrageError);

    for (std::uint64_t seed = 0; seed < 60; ++seed) {
        const Model m = random_model(seed);
        for (NodeId node : m.X.tree().internal_nodes()) {
            const Eigen::MatrixXd inc = oracle::increments(m.X, node);
            Eigen::VectorXd v(inc.cols());
            for (Eigen::Index j = 0; j < v.size(); ++j)
                v(j) = std::cos(static_cast<double>(seed * 31 + node * 7 + static_cast<NodeId>(j)));
            const double expect = oracle::polytope_max(inc, v);
            CHECK(polytope_max(inc, v, node).value == doctest::Approx(expect).epsilon(1e-10));
            CHECK(martingale_vertices(inc).size() == oracle::polytope_vertices(inc).size());
        }
    }
}

TEST_CASE("LP route on the trinomial value") {
    const Model t1 = model_t1();
    const auto dec = decompose_lp(t1_value(1.0), t1.X);
    CHECK(dec.route == Route::LP);
    CHECK(dec.V0 == 1.0);
    CHECK(std::abs(dec.H(0)) <= 1e-14);
    CHECK(std::abs(dec.C(1)) <= 1e-14);
    CHECK(dec.C(2) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(std::abs(dec.C(3)) <= 1e-14);
    CHECK(dec.diagnostics.reconstruction_error <= 1e-14);
    CHECK(dec.diagnostics.min_dC >= -1e-14);
    REQUIRE(dec.diagnostics.boundary_measures.count(0) == 1);
    CHECK(std::abs(dec.diagnostics.boundary_measures.at(0)(1)) <= 1e-12);
}

TEST_CASE("KW route defers the incomplete trinomial node") {
    const Model t1 = model_t1();
    const auto fam = build_deflator_family(t1.X, 2);
    const auto dec = decompose_kw(t1_value(1.0), t1.X, fam);
    CHECK(dec.route == Route::KW);
    CHECK(dec.diagnostics.n_norm == doctest::Approx(std::sqrt(2.0 / 9.0)).epsilon(1e-12));
    CHECK(dec.diagnostics.deferred_nodes == std::vector<NodeId>{0});
    REQUIRE(dec.diagnostics.theta.has_value());
    CHECK(std::abs(dec.diagnostics.theta->at(0)(0)) <= 1e-12);
    REQUIRE(dec.diagnostics.B.has_value());
    CHECK((*dec.diagnostics.B)(1) == doctest::Approx(1.0 / 3).epsilon(1e-12));
    CHECK(dec.C(2) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(dec.diagnostics.reconstruction_error <= 1e-14);
}

TEST_CASE("both routes hedge the two-branch value exactly") {
    const Model b1 = model_b1();
    const auto v = AdaptedProcess::scalar(b1.X.tree_ptr(), {0.15, 0.06, 0.24});
    const auto lp = decompose_lp(v, b1.X);
    const auto kw = decompose_kw(v, b1.X, build_deflator_family(b1.X, 0));
    CHECK(lp.H(0) == doctest::Approx(-0.9).epsilon(1e-12));
    CHECK(kw.H(0) == doctest::Approx(-0.9).epsilon(1e-12));
    CHECK(max_abs(lp.C) <= 1e-14);
    CHECK(max_abs(kw.C) <= 1e-14);
    CHECK(kw.diagnostics.deferred_nodes.empty());
    CHECK(kw.diagnostics.n_norm <= 1e-14);
    const auto u = check_uniqueness(lp, kw, b1.X);
    CHECK(u.pass);
}

TEST_CASE("the numeraire wealth is its own hedge") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        RandomTreeOptions opts;
        opts.complete = true;
        const Model m = random_model(seed, opts);
        const auto fam = build_deflator_family(m.X, 0);
        const auto dec = decompose_kw(fam.V_hat, m.X, fam);
        CHECK(max_abs(dec.C) <= 1e-12);
        for (NodeId node : m.X.tree().internal_nodes())
            CHECK((dec.H.at(node) - fam.V_hat(node) * fam.rho_hat.at(node)).cwiseAbs().maxCoeff() <= 1e-12);
        if (m.X.tree().horizon() > 0) {
            REQUIRE(dec.diagnostics.theta.has_value());
            for (NodeId node : m.X.tree().internal_nodes())
                CHECK(dec.diagnostics.theta->at(node).cwiseAbs().maxCoeff() <= 1e-12);
        }
    }
}

TEST_CASE("uniqueness across routes and tie-breaks") {
    const Model t1 = model_t1();
    const auto v = t1_value(1.0);
    LpOptions a, b;
    a.tie_break_seed = 1;
    b.tie_break_seed = 2;
    CHECK(check_uniqueness(decompose_lp(v, t1.X, a), decompose_lp(v, t1.X, b), t1.X).pass);

    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Model m = random_model(seed);
        const AdaptedProcess x2 = duplicated(m.X);
        const auto w = oracle::random_supermartingale(x2, seed);
        const auto d1 = decompose_lp(w, x2, a);
        const auto d2 = decompose_lp(w, x2, b);
        const auto rep = check_uniqueness(d1, d2, x2);
        CHECK(rep.pass);
        if (m.X.tree().horizon() > 0)
            CHECK(rep.max_dH > 1e-6);
    }
}

TEST_CASE("tampered consumption breaks uniqueness") {
    const Model b1 = model_b1();
    const auto v = AdaptedProcess::scalar(b1.X.tree_ptr(), {0.15, 0.06, 0.24});
    const auto d1 = decompose_lp(v, b1.X);
    auto d2 = d1;
    d2.C(1) += 0.01;
    const auto rep = check_uniqueness(d1, d2, b1.X);
    CHECK_FALSE(rep.pass);
    CHECK(rep.max_dC == doctest::Approx(0.01));

    auto d3 = d1;
    d3.V(1) += 1.0;
    CHECK_THROWS_AS(check_uniqueness(d1, d3, b1.X), InputError);
}

TEST_CASE("reconstruct and gains") {
    const Model b1 = model_b1();
    PredictableProcess h(b1.X.tree_ptr(), 1);
    h.set(0, Eigen::VectorXd::Constant(1, 2.0));
    const auto g = gains(h, b1.X);
    CHECK(g(1) == doctest::Approx(0.2));
    CHECK(g(2) == doctest::Approx(-0.2));
    const auto c = AdaptedProcess::scalar(b1.X.tree_ptr(), {0.0, 0.05, 0.0});
    const auto v = reconstruct(1.0, h, c, b1.X);
    CHECK(v(0) == 1.0);
    CHECK(v(1) == doctest::Approx(1.15));
    CHECK(v(2) == doctest::Approx(0.8));
}

TEST_CASE("random supermartingales decompose on both routes and agree") {
    for (std::uint64_t seed = 0; seed < 80; ++seed) {
        RandomTreeOptions opts;
        opts.complete = seed % 2 == 0;
        const Model m = random_model(seed, opts);
        const auto v = oracle::random_supermartingale(m.X, seed);
        REQUIRE(is_supermartingale_under_all(v, m.X).pass);
        const auto lp = decompose_lp(v, m.X);
        const auto kw = decompose_kw(v, m.X, build_deflator_family(m.X, 2, seed));
        for (const auto* dec : {&lp, &kw}) {
            CHECK(dec->diagnostics.reconstruction_error <= 1e-12);
            CHECK(dec->diagnostics.min_dC >= -1e-12);
            CHECK(dec->diagnostics.duality_gap >= -1e-12);
            const auto rec = reconstruct(dec->V0, dec->H, dec->C, m.X);
            CHECK((rec.values() - v.values()).cwiseAbs().maxCoeff() <= 1e-12);
        }
        if (opts.complete)
            CHECK(kw.diagnostics.deferred_nodes.empty());
        CHECK(check_uniqueness(lp, kw, m.X, 1e-9).pass);
    }
}

TEST_CASE("processes raised above the envelope are rejected with a witness") {
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        const Model m = random_model(seed);
        if (m.X.tree().horizon() == 0)
            continue;
        auto v = oracle::random_supermartingale(m.X, seed);
        const NodeId leaf = m.X.tree().leaves().front();
        v(leaf) += 100.0;
        const auto cert = is_supermartingale_under_all(v, m.X);
        CHECK_FALSE(cert.pass);
        REQUIRE(cert.witness.has_value());
        CHECK(cert.witness->violation > 1e-6);
        CHECK(cert.witness->node == m.X.tree().parent(leaf));
    }
}
