#include "odx/optdecomp.hpp"

#include "odx/error.hpp"
#include "odx/linalg.hpp"
#include "odx/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace odx {

const char* to_string(Route r) {
    return r == Route::LP ? "LP" : "KW";
}

namespace {

Eigen::MatrixXd measure_constraints(const Eigen::MatrixXd& dx) {
    Eigen::MatrixXd a(dx.rows() + 1, dx.cols());
    a.row(0).setOnes();
    a.bottomRows(dx.rows()) = dx;
    return a;
}

Eigen::VectorXd unit_rhs(Eigen::Index rows) {
    Eigen::VectorXd b = Eigen::VectorXd::Zero(rows);
    b(0) = 1.0;
    return b;
}

Eigen::VectorXd child_values(const AdaptedProcess& v, NodeId node) {
    const auto& ch = v.tree().children(node);
    Eigen::VectorXd out(static_cast<Eigen::Index>(ch.size()));
    for (std::size_t k = 0; k < ch.size(); ++k)
        out(static_cast<Eigen::Index>(k)) = v(ch[k]);
    return out;
}

void require_scalar_on_tree(const AdaptedProcess& v, const AdaptedProcess& x) {
    ODX_REQUIRE(v.dim() == 1, "value process must be scalar");
    ODX_REQUIRE(v.tree_ptr() == x.tree_ptr() || v.tree().size() == x.tree().size(),
                "value process and market process live on different trees");
    ODX_REQUIRE(v.values().allFinite(), "value process must be finite");
}

} // namespace

PolytopeMax polytope_max(const Eigen::MatrixXd& dx, const Eigen::VectorXd& values, NodeId node) {
    ODX_REQUIRE(dx.cols() == values.size(), "one value per child required");
    const Eigen::MatrixXd a = measure_constraints(dx);
    const auto lp = linalg::solve_lp(values, a, unit_rhs(a.rows()), Eigen::MatrixXd(0, dx.cols()), Eigen::VectorXd(0));
    if (lp.status != linalg::LpStatus::Optimal) {
        std::ostringstream msg;
        msg << "node " << node << " has no martingale measure (the one-step market admits arbitrage)";
        throw ArbitrageError(node, msg.str());
    }
    return {values.dot(lp.x), lp.x};
}

std::vector<Eigen::VectorXd> martingale_vertices(const Eigen::MatrixXd& dx, double tol) {
    const Eigen::Index k = dx.cols();
    ODX_REQUIRE(k <= 8, "vertex enumeration is capped at 8 branches (got " << k << ")");
    const Eigen::MatrixXd a = measure_constraints(dx);
    const Eigen::VectorXd b = unit_rhs(a.rows());
    std::vector<Eigen::VectorXd> out;
    for (unsigned mask = 1; mask < (1u << k); ++mask) {
        std::vector<Eigen::Index> support;
        for (Eigen::Index j = 0; j < k; ++j)
            if (mask & (1u << j))
                support.push_back(j);
        const auto s = static_cast<Eigen::Index>(support.size());
        if (s > a.rows())
            continue;
        Eigen::MatrixXd as(a.rows(), s);
        for (Eigen::Index j = 0; j < s; ++j)
            as.col(j) = a.col(support[static_cast<std::size_t>(j)]);
        Eigen::FullPivHouseholderQR<Eigen::MatrixXd> qr(as);
        if (qr.rank() < s)
            continue;
        const Eigen::VectorXd qs = qr.solve(b);
        if ((as * qs - b).cwiseAbs().maxCoeff() > 1e-10 || qs.minCoeff() < -tol)
            continue;
        Eigen::VectorXd q = Eigen::VectorXd::Zero(k);
        for (Eigen::Index j = 0; j < s; ++j)
            q(support[static_cast<std::size_t>(j)]) = std::max(0.0, qs(j));
        const bool duplicate = std::any_of(out.begin(), out.end(), [&](const Eigen::VectorXd& v) {
            return (v - q).cwiseAbs().maxCoeff() <= 1e-10;
        });
        if (!duplicate)
            out.push_back(q);
    }
    return out;
}

SupermartingaleCertificate is_supermartingale_under_all(const AdaptedProcess& v, const AdaptedProcess& x,
                                                        const DeflatorFamily& family, double tol) {
    require_scalar_on_tree(v, x);
    const EventTree& tree = x.tree();
    SupermartingaleCertificate cert;
    cert.max_excess = -std::numeric_limits<double>::infinity();
    for (NodeId node : tree.internal_nodes()) {
        const auto pm = polytope_max(child_increments(x, node), child_values(v, node), node);
        const double excess = pm.value - v(node);
        if (excess > cert.max_excess) {
            cert.max_excess = excess;
            if (excess > tol)
                cert.witness = SupermartingaleWitness{node, "measure", pm.q, 0, excess};
        }
    }
    if (cert.witness)
        return cert;

    // Sampled check against the generated deflators.
    std::vector<const AdaptedProcess*> ys{&family.Y_hat};
    for (const auto& e : family.extras)
        ys.push_back(&e.Y);
    for (std::size_t i = 0; i < ys.size(); ++i) {
        const AdaptedProcess yv = multiply(*ys[i], v);
        for (NodeId node : tree.internal_nodes()) {
            const double drift = conditional_moment(yv, node, 1)(0, 0);
            if (drift > tol * std::max(1.0, std::abs(yv(node)))) {
                cert.witness = SupermartingaleWitness{node, "deflator", {}, i, drift};
                return cert;
            }
        }
    }
    cert.pass = true;
    return cert;
}

SupermartingaleCertificate is_supermartingale_under_all(const AdaptedProcess& v, const AdaptedProcess& x,
                                                        const SupermartingaleOptions& options) {
    const auto family = build_deflator_family(x, options.extras, options.seed);
    return is_supermartingale_under_all(v, x, family, options.tol);
}

namespace {

// Minimum-norm hedge for increments and value jumps already scaled to unit size.
Eigen::VectorXd unit_hedge(const Eigen::MatrixXd& g, const Eigen::VectorXd& dv, NodeId node) {
    const Eigen::Index d = g.cols(), k = g.rows();
    const double scale = 1.0;

    // Smallest achievable largest consumption jump t:
    //   maximize -t  s.t.  g h >= dv,  g h - t <= dv,  h = hp - hm.
    Eigen::MatrixXd a_ub(2 * k, 2 * d + 1);
    a_ub << -g, g, Eigen::VectorXd::Zero(k), g, -g, -Eigen::VectorXd::Ones(k);
    Eigen::VectorXd b_ub(2 * k);
    b_ub << -dv, dv;
    Eigen::VectorXd cost = Eigen::VectorXd::Zero(2 * d + 1);
    cost(2 * d) = -1.0;
    const auto lp = linalg::solve_lp(cost, Eigen::MatrixXd(0, 2 * d + 1), Eigen::VectorXd(0), a_ub, b_ub);
    ODX_ENSURE(lp.status == linalg::LpStatus::Optimal,
               "node " << node << ": no superhedging strategy exists although V passed the supermartingale test");
    const double t_star = lp.x(2 * d);

    // Minimum-norm h attaining it.
    const double slack = 1e-12 * scale;
    Eigen::MatrixXd gl(2 * k, d);
    gl << g, -g;
    Eigen::VectorXd hl(2 * k);
    hl << (dv.array() - slack).matrix(), (-(dv.array() + t_star + slack)).matrix();
    Eigen::VectorXd h = lp.x.head(d) - lp.x.segment(d, d);
    if (auto ldp = linalg::least_distance(gl, hl))
        h = *ldp;

    // Polish: the minimum-norm point is the least-norm solution of its active
    // constraints, which we can solve without the slack.
    const Eigen::VectorXd gh = g * h;
    std::vector<Eigen::Index> active;
    Eigen::VectorXd target(k);
    for (Eigen::Index j = 0; j < k; ++j) {
        if (std::abs(gh(j) - dv(j)) <= 10.0 * slack) {
            active.push_back(j);
            target(j) = dv(j);
        } else if (std::abs(gh(j) - dv(j) - t_star) <= 10.0 * slack) {
            active.push_back(j);
            target(j) = dv(j) + t_star;
        }
    }
    if (!active.empty()) {
        const auto na = static_cast<Eigen::Index>(active.size());
        Eigen::MatrixXd ga(na, d);
        Eigen::VectorXd ba(na);
        for (Eigen::Index r = 0; r < na; ++r) {
            ga.row(r) = g.row(active[static_cast<std::size_t>(r)]);
            ba(r) = target(active[static_cast<std::size_t>(r)]);
        }
        const Eigen::VectorXd hp = ga.completeOrthogonalDecomposition().solve(ba);
        const Eigen::VectorXd dc = g * hp - dv;
        const double tiny = 1e-13 * scale;
        if ((ga * hp - ba).cwiseAbs().maxCoeff() <= tiny && dc.minCoeff() >= -tiny &&
            dc.maxCoeff() <= t_star + tiny)
            h = hp;
    }
    return h;
}

} // namespace

HedgeStep superhedge_step(const Eigen::MatrixXd& dx, const Eigen::VectorXd& dv, NodeId node) {
    ODX_REQUIRE(dv.size() == dx.cols(), "one value increment per child required");
    const Eigen::MatrixXd g = dx.transpose();
    // Uniform rescaling of g and dv leaves the minimum-norm solution's
    // direction unchanged and keeps the tolerances meaningful.
    const double gs = g.size() > 0 && g.cwiseAbs().maxCoeff() > 0.0 ? g.cwiseAbs().maxCoeff() : 1.0;
    // Value jumps at rounding level stay at rounding level after scaling.
    const double vs = std::max(dv.size() > 0 ? dv.cwiseAbs().maxCoeff() : 0.0, gs);
    const Eigen::VectorXd h = unit_hedge(g / gs, dv / vs, node) * (vs / gs);
    return {h, g * h - dv};
}

AdaptedProcess gains(const PredictableProcess& h, const AdaptedProcess& x) {
    ODX_REQUIRE(h.dim() == x.dim(), "strategy and market dimensions differ");
    AdaptedProcess out(x.tree_ptr(), 1, 0.0);
    for (const auto& n : x.tree().nodes())
        if (n.parent)
            out(n.id) = out(*n.parent) + h.at(*n.parent).dot(x.increment(n.id));
    return out;
}

AdaptedProcess reconstruct(double v0, const PredictableProcess& h, const AdaptedProcess& c, const AdaptedProcess& x) {
    ODX_REQUIRE(c.dim() == 1, "consumption must be scalar");
    const AdaptedProcess g = gains(h, x);
    AdaptedProcess out(x.tree_ptr(), 1, v0);
    for (std::size_t i = 0; i < x.tree().size(); ++i)
        out(i) = v0 + g(i) - c(i);
    return out;
}

namespace {

void finish_diagnostics(Decomposition& dec, const AdaptedProcess& x) {
    const AdaptedProcess rec = reconstruct(dec.V0, dec.H, dec.C, x);
    dec.diagnostics.reconstruction_error = (rec.values() - dec.V.values()).cwiseAbs().maxCoeff();
    double min_dc = 0.0;
    bool first = true;
    for (const auto& n : x.tree().nodes()) {
        if (!n.parent)
            continue;
        const double dc = dec.C(n.id) - dec.C(*n.parent);
        min_dc = first ? dc : std::min(min_dc, dc);
        first = false;
    }
    dec.diagnostics.min_dC = min_dc;
}

// Per-node LP data shared by both routes: gap to the polytope maximum and
// binding boundary vertices.
void record_polytope(Decomposition& dec, const AdaptedProcess& v, const AdaptedProcess& x, NodeId node, double tol) {
    const auto pm = polytope_max(child_increments(x, node), child_values(v, node), node);
    const double gap = v(node) - pm.value;
    dec.diagnostics.duality_gap = std::max(dec.diagnostics.duality_gap, gap);
    if (std::abs(gap) <= tol && pm.q.minCoeff() <= 1e-12)
        dec.diagnostics.boundary_measures[node] = pm.q;
}

} // namespace

Decomposition decompose_lp(const AdaptedProcess& v, const AdaptedProcess& x, const LpOptions& options) {
    require_scalar_on_tree(v, x);
    const EventTree& tree = x.tree();
    Decomposition dec{v(0), PredictableProcess(x.tree_ptr(), x.dim()), AdaptedProcess(x.tree_ptr(), 1, 0.0), v,
                      Route::LP, {}};
    for (NodeId node : tree.internal_nodes()) {
        const Eigen::MatrixXd dx = child_increments(x, node);
        Eigen::VectorXd dv = child_values(v, node).array() - v(node);
        record_polytope(dec, v, x, node, options.tol);
        HedgeStep step = superhedge_step(dx, dv, node);
        if (options.tie_break_seed) {
            const Eigen::MatrixXd kernel = linalg::null_space(dx.transpose());
            if (kernel.cols() > 0) {
                auto eng = stream_engine(*options.tie_break_seed, node);
                std::normal_distribution<double> normal;
                Eigen::VectorXd z(kernel.cols());
                for (Eigen::Index j = 0; j < z.size(); ++j)
                    z(j) = normal(eng);
                step.H += kernel * z;
            }
        }
        dec.H.set(node, step.H);
        const auto& ch = tree.children(node);
        for (std::size_t k = 0; k < ch.size(); ++k)
            dec.C(ch[k]) = dec.C(node) + step.dC(static_cast<Eigen::Index>(k));
    }
    finish_diagnostics(dec, x);
    return dec;
}

Decomposition decompose_kw(const AdaptedProcess& v, const AdaptedProcess& x, const DeflatorFamily& family,
                           const KwOptions& options) {
    require_scalar_on_tree(v, x);
    const EventTree& tree = x.tree();
    const std::size_t d = x.dim();
    Decomposition dec{v(0), PredictableProcess(x.tree_ptr(), d), AdaptedProcess(x.tree_ptr(), 1, 0.0), v,
                      Route::KW, {}};
    PredictableProcess theta(x.tree_ptr(), d);
    AdaptedProcess b(x.tree_ptr(), 1, 0.0);
    PredictableProcess node_norms(x.tree_ptr(), 1);
    double n_norm = 0.0;
    double min_db = std::numeric_limits<double>::infinity();

    for (NodeId node : tree.internal_nodes()) {
        const auto& ch = tree.children(node);
        const auto k = static_cast<Eigen::Index>(ch.size());
        const Eigen::MatrixXd dx = child_increments(x, node);
        const Eigen::VectorXd q = density_measure(family.Y_hat, node);
        const double vh = family.V_hat(node);
        const double u = v(node) / vh;

        // Numeraire-weighted increment of U = V / V_hat.
        Eigen::VectorXd w(k);
        for (Eigen::Index j = 0; j < k; ++j) {
            const NodeId c = ch[static_cast<std::size_t>(j)];
            w(j) = family.V_hat(c) / vh * (v(c) / family.V_hat(c) - u);
        }
        const Eigen::VectorXd mean_dx = dx * q;
        const Eigen::MatrixXd centered = dx.colwise() - mean_dx;
        const Eigen::MatrixXd cov = centered * q.asDiagonal() * centered.transpose();
        const Eigen::VectorXd cross = centered * q.cwiseProduct(w);
        const Eigen::VectorXd th = linalg::psd_pseudo_solve(cov, cross, 1e-12).x;
        const double alpha = q.dot(w) - th.dot(mean_dx);
        const Eigen::VectorXd resid = w - Eigen::VectorXd::Constant(k, alpha) - dx.transpose() * th;
        const double node_n = std::sqrt(std::max(0.0, q.dot(resid.cwiseProduct(resid))));
        const double db = -alpha;

        theta.set(node, th);
        node_norms.set(node, Eigen::VectorXd::Constant(1, node_n));
        for (NodeId c : ch)
            b(c) = b(node) + db;
        n_norm = std::max(n_norm, node_n);
        min_db = std::min(min_db, db);
        record_polytope(dec, v, x, node, options.tol);

        if (node_n <= options.tol) {
            dec.H.set(node, vh * (u * family.rho_hat.at(node) + th));
            for (Eigen::Index j = 0; j < k; ++j)
                dec.C(ch[static_cast<std::size_t>(j)]) = dec.C(node) + vh * (db - resid(j));
        } else {
            const Eigen::VectorXd dv = child_values(v, node).array() - v(node);
            const HedgeStep step = superhedge_step(dx, dv, node);
            dec.H.set(node, step.H);
            for (Eigen::Index j = 0; j < k; ++j)
                dec.C(ch[static_cast<std::size_t>(j)]) = dec.C(node) + step.dC(j);
            dec.diagnostics.deferred_nodes.push_back(node);
        }
    }
    dec.diagnostics.theta = std::move(theta);
    dec.diagnostics.B = std::move(b);
    dec.diagnostics.node_n_norm = std::move(node_norms);
    dec.diagnostics.n_norm = n_norm;
    dec.diagnostics.min_dB = std::isfinite(min_db) ? min_db : 0.0;
    finish_diagnostics(dec, x);
    return dec;
}

UniquenessReport check_uniqueness(const Decomposition& d1, const Decomposition& d2, const AdaptedProcess& x,
                                  double tol) {
    ODX_REQUIRE(d1.V.size() == x.tree().size() && d2.V.size() == x.tree().size(),
                "decompositions do not live on the market's tree");
    ODX_REQUIRE((d1.V.values() - d2.V.values()).cwiseAbs().maxCoeff() <= 1e-9,
                "decompositions of different value processes");
    UniquenessReport rep;
    rep.max_dC = (d1.C.values() - d2.C.values()).cwiseAbs().maxCoeff();
    rep.max_gain = (gains(d1.H, x).values() - gains(d2.H, x).values()).cwiseAbs().maxCoeff();
    for (NodeId node : x.tree().internal_nodes())
        rep.max_dH = std::max(rep.max_dH, (d1.H.at(node) - d2.H.at(node)).cwiseAbs().maxCoeff());
    rep.pass = rep.max_dC <= tol && rep.max_gain <= tol;
    return rep;
}

} // namespace odx
