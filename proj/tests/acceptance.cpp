// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.

#include "odx/characteristics.hpp"
#include "odx/deflators.hpp"
#include "odx/mcengine.hpp"
#include "odx/models.hpp"
#include "odx/optdecomp.hpp"
#include "odx/random.hpp"
#include "odx/superhedge.hpp"
#include "oracles.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace odx;

namespace {

constexpr std::uint64_t kTrees = 200;

struct Verdict {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok && pass)
            detail << "first failure: " << what << "; ";
        pass = pass && ok;
    }
};

int failures = 0;

void criterion(int id, const std::string& title, double budget_s, const std::function<void(Verdict&)>& body) {
    Verdict v;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        body(v);
    } catch (const std::exception& e) {
        v.require(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    v.require(secs < budget_s, "runtime over budget");
    std::printf("%s %d %s (%.2f s) %s\n", v.pass ? "PASS" : "FAIL", id, title.c_str(), secs, v.detail.str().c_str());
    std::fflush(stdout);
    if (!v.pass)
        ++failures;
}

std::vector<Model> random_trees(bool complete = false) {
    std::vector<Model> out;
    RandomTreeOptions opts;
    opts.complete = complete;
    for (std::uint64_t s = 0; s < kTrees; ++s)
        out.push_back(random_model(s, opts));
    return out;
}

// Random predictable H, nondecreasing C with C(0) = 0, and V0.
struct Strategy {
    double v0;
    PredictableProcess H;
    AdaptedProcess C;
};

Strategy random_strategy(const AdaptedProcess& x, std::uint64_t seed) {
    auto eng = stream_engine(seed, 0);
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Strategy s{normal(eng), PredictableProcess(x.tree_ptr(), x.dim()), AdaptedProcess(x.tree_ptr(), 1, 0.0)};
    for (NodeId node : x.tree().internal_nodes()) {
        Eigen::VectorXd h(static_cast<Eigen::Index>(x.dim()));
        for (Eigen::Index i = 0; i < h.size(); ++i)
            h(i) = 3.0 * normal(eng);
        s.H.set(node, h);
    }
    for (const auto& n : x.tree().nodes())
        if (n.parent)
            s.C(n.id) = s.C(*n.parent) + (unif(eng) < 0.5 ? 0.0 : 0.1 * unif(eng));
    return s;
}

// Proportional strategy with 1 + <pi, dX> >= u > 0 at every child.
PredictableProcess random_admissible(const AdaptedProcess& x, std::uint64_t seed) {
    auto eng = stream_engine(seed, 1);
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    PredictableProcess pi(x.tree_ptr(), x.dim());
    for (NodeId node : x.tree().internal_nodes()) {
        Eigen::VectorXd dir(static_cast<Eigen::Index>(x.dim()));
        for (Eigen::Index i = 0; i < dir.size(); ++i)
            dir(i) = 20.0 * normal(eng);
        const double worst = -(oracle::increments(x, node).transpose() * dir).minCoeff();
        const double floor = 0.05 + 0.9 * unif(eng);
        if (worst > 1.0 - floor)
            dir *= (1.0 - floor) / worst;
        pi.set(node, dir);
    }
    return pi;
}

bool complete_node(const AdaptedProcess& x, NodeId node) {
    const Eigen::MatrixXd dx = oracle::increments(x, node);
    if (dx.cols() != dx.rows() + 1)
        return false;
    Eigen::MatrixXd aff(dx.rows() + 1, dx.cols());
    aff.row(0).setOnes();
    aff.bottomRows(dx.rows()) = dx;
    return Eigen::FullPivLU<Eigen::MatrixXd>(aff).rank() == aff.cols();
}

double max_abs(const Eigen::MatrixXd& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

} // namespace

int main() {
    const auto trees = random_trees();

    criterion(1, "exact deflator identities on trees", 10.0, [&](Verdict& v) {
        std::vector<Model> models{model_b1()};
        models.insert(models.end(), trees.begin(), trees.end());
        double worst = 0.0;
        std::size_t checked = 0;
        for (std::size_t k = 0; k < models.size(); ++k) {
            const auto fam = build_deflator_family(models[k].X, 8, k);
            std::vector<const AdaptedProcess*> ys{&fam.Y_hat};
            for (const auto& e : fam.extras)
                ys.push_back(&e.Y);
            for (const auto* y : ys) {
                const auto c = verify_deflator(*y, models[k].X, 1e-10);
                worst = std::max({worst, c.drift_y, c.drift_yx});
                v.require(c.pass, "deflator drift on model " + std::to_string(k));
                ++checked;
            }
        }
        v.detail << checked << " deflators, max drift " << worst;
    });

    criterion(2, "optional decomposition equivalence by brute force", 60.0, [&](Verdict& v) {
        double worst_rec = 0.0, worst_dc = 0.0;
        for (std::uint64_t k = 0; k < kTrees; ++k) {
            const AdaptedProcess& x = trees[k].X;
            const auto fam = build_deflator_family(x, 2, k);
            for (std::uint64_t r = 0; r < 20; ++r) {
                const auto s = random_strategy(x, mix_seed(k, r));
                const auto val = reconstruct(s.v0, s.H, s.C, x);
                v.require(is_supermartingale_under_all(val, x, fam, 1e-10).pass,
                          "reconstructed process rejected on tree " + std::to_string(k));
            }
            for (std::uint64_t r = 0; r < 20; ++r) {
                const auto sup = oracle::random_supermartingale(x, mix_seed(k, 100 + r));
                const auto dec = decompose_lp(sup, x);
                worst_rec = std::max(worst_rec, dec.diagnostics.reconstruction_error);
                worst_dc = std::min(worst_dc, dec.diagnostics.min_dC);
                v.require(dec.diagnostics.min_dC >= -1e-10, "negative consumption on tree " + std::to_string(k));
                v.require(dec.diagnostics.reconstruction_error <= 1e-9,
                          "reconstruction error on tree " + std::to_string(k));
            }
        }
        v.detail << "max reconstruction error " << worst_rec << ", min dC " << worst_dc;
    });

    criterion(3, "trinomial hand instance", 5.0, [&](Verdict& v) {
        const Model t1 = model_t1();
        const auto val = AdaptedProcess::scalar(t1.X.tree_ptr(), {1.0, 1.0, 0.0, 1.0});
        v.require(is_supermartingale_under_all(val, t1.X).pass, "V = (1; 1, 0, 1) rejected");
        const auto dec = decompose_lp(val, t1.X);
        v.require(std::abs(dec.H(0)) <= 1e-9, "H != 0");
        const double expect[] = {0.0, 1.0, 0.0};
        for (NodeId c = 1; c <= 3; ++c)
            v.require(std::abs(dec.C(c) - expect[c - 1]) <= 1e-9, "dC mismatch at node " + std::to_string(c));
        auto low = val;
        low(0) = 0.9;
        const auto cert = is_supermartingale_under_all(low, t1.X);
        v.require(!cert.pass, "V(0) = 0.9 accepted");
        v.require(cert.witness && cert.witness->node == 0 && std::abs(cert.witness->violation - 0.1) <= 1e-9,
                  "witness is not 0.1 at the root");
        v.detail << "H = " << dec.H(0) << ", violation "
                 << (cert.witness ? cert.witness->violation : std::nan(""));
    });

    criterion(4, "uniqueness of the consumption and gains", 60.0, [&](Verdict& v) {
        const auto complete = random_trees(true);
        double worst_kw = 0.0, worst_tie = 0.0;
        for (std::uint64_t k = 0; k < kTrees; ++k) {
            const AdaptedProcess& x = complete[k].X;
            const auto sup = oracle::random_supermartingale(x, mix_seed(k, 7));
            const auto lp = decompose_lp(sup, x);
            const auto kw = decompose_kw(sup, x, build_deflator_family(x, 0));
            const double gap = max_abs(lp.C.values() - kw.C.values());
            worst_kw = std::max(worst_kw, gap);
            v.require(gap <= 1e-8, "LP and KW consumption differ on complete tree " + std::to_string(k));
        }
        LpOptions a, b;
        a.tie_break_seed = 1;
        b.tie_break_seed = 2;
        std::vector<const std::vector<Model>*> sets{&trees, &complete};
        for (const auto* set : sets)
            for (std::uint64_t k = 0; k < kTrees; ++k) {
                const AdaptedProcess& x = (*set)[k].X;
                const auto sup = oracle::random_supermartingale(x, mix_seed(k, 8));
                const auto rep = check_uniqueness(decompose_lp(sup, x, a), decompose_lp(sup, x, b), x, 1e-8);
                worst_tie = std::max({worst_tie, rep.max_dC, rep.max_gain});
                v.require(rep.pass, "tie-break runs disagree on tree " + std::to_string(k));
            }
        v.detail << "max |C_kw - C_lp| " << worst_kw << ", max tie-break gap " << worst_tie;
    });

    criterion(5, "residual and drift checks of the projection route", 30.0, [&](Verdict& v) {
        const auto complete = random_trees(true);
        double worst_n = 0.0, worst_db = 0.0;
        for (std::uint64_t k = 0; k < kTrees; ++k) {
            const AdaptedProcess& x = complete[k].X;
            const auto sup = oracle::random_supermartingale(x, mix_seed(k, 9));
            const auto kw = decompose_kw(sup, x, build_deflator_family(x, 0));
            for (NodeId node : x.tree().internal_nodes())
                if (complete_node(x, node)) {
                    const double n = (*kw.diagnostics.node_n_norm)(node);
                    worst_n = std::max(worst_n, n);
                    v.require(n <= 1e-10, "residual on a complete node of tree " + std::to_string(k));
                }
            worst_db = std::min(worst_db, kw.diagnostics.min_dB);
            v.require(kw.diagnostics.min_dB >= -1e-10, "decreasing drift on tree " + std::to_string(k));
        }
        const Model t1 = model_t1();
        const auto val = AdaptedProcess::scalar(t1.X.tree_ptr(), {1.0, 1.0, 0.0, 1.0});
        const auto kw = decompose_kw(val, t1.X, build_deflator_family(t1.X, 0));
        v.require(kw.diagnostics.n_norm > 0.1, "trinomial residual not detected");
        v.require(kw.diagnostics.deferred_nodes == std::vector<NodeId>{0}, "trinomial root not deferred");
        v.detail << "max complete-node residual " << worst_n << ", min dB " << worst_db << ", trinomial residual "
                 << kw.diagnostics.n_norm;
    });

    criterion(6, "arbitrage certificate", 5.0, [&](Verdict& v) {
        const Model a1 = model_a1();
        const auto ch = extract_characteristics(a1.X);
        const auto rep = solve_structure(ch);
        v.require(rep.status == StructureStatus::Arbitrage && rep.zeta.has_value(), "no arbitrage reported");
        if (!rep.zeta)
            return;
        const Eigen::VectorXd zeta = rep.zeta->at(0);
        const Eigen::VectorXd cz = ch.c_at(0) * zeta;
        v.require((cz.array() == 0.0).all(), "c zeta is not exactly zero");
        v.require(zeta.dot(ch.a.at(0)) == 1.0, "<zeta, a> != 1");
        // Simulate the step: draw children under p and record the gain.
        CounterEngine eng(0, 0);
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        const auto& children = a1.X.tree().children(0);
        const Eigen::VectorXd probs = a1.X.tree().child_probabilities(0);
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (int draw = 0; draw < 10000; ++draw) {
            double u = unif(eng);
            std::size_t k = 0;
            while (k + 1 < children.size() && u >= probs(static_cast<Eigen::Index>(k))) {
                u -= probs(static_cast<Eigen::Index>(k));
                ++k;
            }
            const double g = zeta.dot(a1.X.increment(children[k]));
            lo = std::min(lo, g);
            hi = std::max(hi, g);
        }
        v.require(lo > 0.0 && lo == hi, "simulated gain is not riskless and positive");
        v.detail << "zeta = (" << zeta.transpose() << "), gain in [" << lo << ", " << hi << "]";
    });

    criterion(7, "numeraire property", 30.0, [&](Verdict& v) {
        double worst = -std::numeric_limits<double>::infinity();
        for (std::uint64_t k = 0; k < kTrees; ++k) {
            const AdaptedProcess& x = trees[k].X;
            const auto num = numeraire_portfolio(x);
            for (std::uint64_t r = 0; r < 100; ++r) {
                const auto w = oracle::wealth(random_admissible(x, mix_seed(k, r)), x);
                v.require(w.values().minCoeff() > 0.0, "strategy not admissible");
                const double e = oracle::expectation_at_horizon(multiply(num.Y_hat, w));
                worst = std::max(worst, e);
                v.require(e <= 1.0 + 1e-9, "E[V/V_hat] > 1 on tree " + std::to_string(k));
            }
        }
        v.detail << "max E[V_pi(T) / V_hat(T)] = " << worst;
    });

    criterion(8, "superhedging duality", 5.0, [&](Verdict& v) {
        const Model put2 = model_put2();
        const auto res = superhedge(vanilla_claim(ClaimKind::American, Vanilla::Put, 1.05, put2.X), put2.X);
        v.require(std::abs(res.price - 0.09) <= 1e-10, "put price");
        v.require(std::abs(res.decomposition.H(0) + 0.6) <= 1e-10, "root hedge");
        v.require(max_abs(res.decomposition.C.values()) <= 1e-10, "put consumption not zero");

        const Model t1 = model_t1();
        const Claim eu{ClaimKind::European, AdaptedProcess::scalar(t1.X.tree_ptr(), {0.0, 1.0, 0.0, 1.0})};
        const auto r1 = superhedge(eu, t1.X);
        const double dual = oracle::snell(eu.payoff, t1.X, false)(0);
        v.require(std::abs(r1.price - 1.0) <= 1e-10, "trinomial price");
        v.require(std::abs(r1.price - dual) <= 1e-8, "duality gap against vertex enumeration");
        v.detail << "put price " << res.price << ", root hedge " << res.decomposition.H(0) << ", trinomial price "
                 << r1.price << " vs vertices " << dual;
    });

    criterion(9, "Monte Carlo consistency", 120.0, [&](Verdict& v) {
        const auto spec = mc::DiffusionSpec::constant(Eigen::VectorXd::Constant(1, 0.05),
                                                      Eigen::MatrixXd::Constant(1, 1, 0.2), 1.0, 256, 100000, 0);
        const auto ens = mc::deflate_paths(mc::simulate(spec), spec);
        const auto ys = mc::sample_stats(ens.Y_hat(), spec.steps, ens.aborted);
        v.require(std::abs(ys.mean - 1.0) <= 3.0 * ys.se, "mean Y_hat(T) outside 3 standard errors");
        const auto yx = mc::martingale_test(ens.deflated_component(0), ens.aborted);
        v.require(yx.pass, "martingale test for Y_hat X");
        const double limit = 1.25;
        const double g1 = std::abs(mc::matched_binomial_rho(spec, 256) - limit);
        const double g2 = std::abs(mc::matched_binomial_rho(spec, 512) - limit);
        const double ratio = g1 / g2;
        v.require(ratio >= 1.5 && ratio <= 3.0, "tree gap does not halve");
        v.detail << "mean Y_hat(T) " << ys.mean << " (se " << ys.se << "), max |t| " << yx.max_abs_t
                 << ", gap ratio " << ratio << ", aborts " << ens.abort_count;
    });

    return failures;
}
