#include "odx/characteristics.hpp"
#include "odx/error.hpp"
#include "odx/models.hpp"
#include "oracles.hpp"

#include <doctest.h>

using namespace odx;

namespace {

// Characteristics on a one-period tree with the given a and c.
Characteristics one_step(const Eigen::VectorXd& a, const Eigen::MatrixXd& c) {
    const TreePtr t = build_uniform_tree(1, {0.5, 0.5});
    const auto d = static_cast<std::size_t>(a.size());
    Characteristics ch{PredictableProcess(t, d), PredictableProcess(t, d * d), PredictableProcess(t, 1)};
    ch.a.set(0, a);
    ch.c.set(0, Eigen::Map<const Eigen::VectorXd>(Eigen::MatrixXd(c.transpose()).data(), c.size()));
    ch.dG.set(0, Eigen::VectorXd::Ones(1));
    return ch;
}

} // namespace

TEST_CASE("characteristics of the reference markets") {
    const auto b1 = extract_characteristics(model_b1().X);
    CHECK(b1.a.at(0)(0) == doctest::Approx(0.02).epsilon(1e-14));
    CHECK(b1.c_at(0)(0, 0) == doctest::Approx(0.0096).epsilon(1e-13));
    CHECK(b1.dG.at(0)(0) == 1.0);

    const auto t1 = extract_characteristics(model_t1().X);
    CHECK(std::abs(t1.a.at(0)(0)) <= 1e-17);
    CHECK(t1.c_at(0)(0, 0) == doctest::Approx(0.02 / 3).epsilon(1e-13));
}

TEST_CASE("deterministic market has zero covariance") {
    const TreePtr t = build_uniform_tree(2, {0.3, 0.7});
    AdaptedProcess x(t, 1, 0.0);
    for (const auto& n : t->nodes())
        x(n.id) = 0.05 * n.time;
    const auto ch = extract_characteristics(x);
    for (NodeId node : t->internal_nodes()) {
        CHECK(ch.a.at(node)(0) == doctest::Approx(0.05));
        CHECK(std::abs(ch.c_at(node)(0, 0)) <= 1e-18);
    }
    const auto rep = solve_structure(ch);
    CHECK(rep.status == StructureStatus::Arbitrage);
}

TEST_CASE("structure equation with identity covariance") {
    Eigen::VectorXd a(2);
    a << 0.3, -0.1;
    const auto rep = solve_structure(one_step(a, Eigen::MatrixXd::Identity(2, 2)));
    REQUIRE(rep.status == StructureStatus::Solvable);
    CHECK(rep.rho->at(0)(0) == doctest::Approx(0.3));
    CHECK(rep.rho->at(0)(1) == doctest::Approx(-0.1));
    CHECK_FALSE(rep.min_norm_used);
}

TEST_CASE("structure equation with a rank-one covariance takes the minimum-norm solution") {
    Eigen::MatrixXd c(2, 2);
    c << 1, 1, 1, 1;
    Eigen::VectorXd a(2);
    a << 1, 1;
    const auto rep = solve_structure(one_step(a, c));
    REQUIRE(rep.status == StructureStatus::Solvable);
    CHECK(rep.rho->at(0)(0) == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(rep.rho->at(0)(1) == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(rep.min_norm_used);
}

TEST_CASE("drift outside the range of the covariance is an arbitrage") {
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(2, 2);
    c(0, 0) = 1.0;
    Eigen::VectorXd a(2);
    a << 0, 1;
    const auto rep = solve_structure(one_step(a, c));
    REQUIRE(rep.status == StructureStatus::Arbitrage);
    const Eigen::VectorXd zeta = rep.zeta->at(0);
    CHECK(zeta(0) == 0.0);
    CHECK(zeta(1) == 1.0);
    CHECK(zeta.dot(a) == 1.0);
    CHECK((c * zeta).cwiseAbs().maxCoeff() == 0.0);
    CHECK(rep.arbitrage_nodes == std::vector<NodeId>{0});
    CHECK_FALSE(rep.rho.has_value());
}

TEST_CASE("two-asset market with a sure gain") {
    const Model a1 = model_a1();
    const auto ch = extract_characteristics(a1.X);
    CHECK(ch.a.at(0)(0) == 0.0);
    CHECK(ch.a.at(0)(1) == 1.0);
    CHECK(ch.c_at(0)(0, 0) == 1.0);
    CHECK(ch.c_at(0)(1, 1) == 0.0);
    const auto rep = solve_structure(ch);
    REQUIRE(rep.status == StructureStatus::Arbitrage);
    const Eigen::VectorXd zeta = rep.zeta->at(0);
    // Riskless gain: <zeta, dX> is constant across children and positive.
    const Eigen::VectorXd gain = oracle::increments(a1.X, 0).transpose() * zeta;
    CHECK(gain.maxCoeff() - gain.minCoeff() == 0.0);
    CHECK(gain.minCoeff() > 0.0);
    CHECK(node_arbitrage(oracle::increments(a1.X, 0)).has_value());
    CHECK(tree_arbitrage_nodes(a1.X) == std::vector<NodeId>{0});
}

TEST_CASE("non-PSD covariance is rejected") {
    Eigen::MatrixXd c(2, 2);
    c << 1, 0, 0, -1;
    CHECK_THROWS_AS(solve_structure(one_step(Eigen::VectorXd::Ones(2), c)), InputError);
    Eigen::MatrixXd asym(2, 2);
    asym << 1, 0.5, 0, 1;
    CHECK_THROWS_AS(solve_structure_step(asym, Eigen::VectorXd::Ones(2)), InputError);
}

TEST_CASE("mass of the structure solution") {
    const auto ch = extract_characteristics(model_b1().X);
    const auto rep = solve_structure(ch);
    REQUIRE(rep.status == StructureStatus::Solvable);
    const double rho = 0.02 / 0.0096;
    CHECK(rep.rho->at(0)(0) == doctest::Approx(rho).epsilon(1e-12));
    CHECK(rep.mass(1) == doctest::Approx(rho * rho * 0.0096).epsilon(1e-12));
    CHECK(rep.mass_max == doctest::Approx(rho * rho * 0.0096).epsilon(1e-12));
    CHECK_FALSE(rep.mass_flag);

    StructureOptions tight;
    tight.mass_threshold = 1e-3;
    CHECK(solve_structure(ch, tight).mass_flag);
}

TEST_CASE("solvable random markets have drift in the covariance range") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const Model m = random_model(seed);
        const auto ch = extract_characteristics(m.X);
        StructureOptions opts;
        const auto rep = solve_structure(ch, opts);
        // Centered increments always leave the drift inside range(c).
        REQUIRE(rep.status == StructureStatus::Solvable);
        for (NodeId node : m.X.tree().internal_nodes()) {
            const Eigen::MatrixXd c = ch.c_at(node);
            const Eigen::VectorXd a = ch.a.at(node);
            CHECK((c * rep.rho->at(node) - a).cwiseAbs().maxCoeff() <= 10 * opts.tol);
        }
    }
}

TEST_CASE("rho is invariant under a change of clock") {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const Model m = random_model(seed);
        const auto ch = extract_characteristics(m.X);
        const auto base = solve_structure(ch);
        REQUIRE(base.status == StructureStatus::Solvable);
        for (double lambda : {0.01, 3.0, 250.0}) {
            Characteristics scaled = ch;
            for (NodeId node : m.X.tree().internal_nodes()) {
                scaled.a.set(node, lambda * ch.a.at(node));
                scaled.c.set(node, lambda * ch.c.at(node));
                scaled.dG.set(node, ch.dG.at(node) / lambda);
            }
            const auto rep = solve_structure(scaled);
            REQUIRE(rep.status == StructureStatus::Solvable);
            for (NodeId node : m.X.tree().internal_nodes())
                CHECK((rep.rho->at(node) - base.rho->at(node)).cwiseAbs().maxCoeff() <=
                      1e-9 * std::max(1.0, base.rho->at(node).cwiseAbs().maxCoeff()));
        }
    }
}

TEST_CASE("arbitrage verdicts give riskless gains") {
    // Shift random markets so that one node's increments all point up along
    // some direction.
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const Model m = random_model(seed);
        AdaptedProcess x = m.X;
        const NodeId node = 0;
        const auto& ch = x.tree().children(node);
        double lowest = 1e300;
        for (NodeId c : ch)
            lowest = std::min(lowest, x(c, 0) - x(node, 0));
        // Subtree shift keeps the descendant increments unchanged.
        for (const auto& n : x.tree().nodes())
            if (n.time >= 1)
                x(n.id, 0) += -lowest + 0.01;
        const auto zeta = node_arbitrage(oracle::increments(x, node));
        REQUIRE(zeta.has_value());
        const Eigen::VectorXd gain = oracle::increments(x, node).transpose() * *zeta;
        CHECK(gain.minCoeff() >= -1e-12);
        CHECK(gain.maxCoeff() > 1e-10);
        CHECK_FALSE(node_arbitrage(oracle::increments(m.X, node)).has_value());
    }
}
