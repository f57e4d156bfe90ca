#include "odx/probtree.hpp"

#include "odx/error.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>

namespace odx {

namespace {

void check_probability_row(const std::vector<double>& probs, const std::string& where) {
    ODX_REQUIRE(!probs.empty(), where << ": node without branches");
    double sum = 0.0;
    for (double p : probs) {
        ODX_REQUIRE(std::isfinite(p), where << ": non-finite probability");
        ODX_REQUIRE(p > 0.0, where << ": zero or negative branch probability " << p
                                   << " (every branch must carry positive mass)");
        sum += p;
    }
    ODX_REQUIRE(std::abs(sum - 1.0) <= EventTree::kProbabilityTolerance,
                where << ": probabilities must sum to 1 (got " << sum << ")");
}

} // namespace

EventTree EventTree::from_branching(const Branching& root) {
    EventTree tree;
    // Breadth-first expansion; each queue entry is (branching, node id).
    std::deque<std::pair<const Branching*, NodeId>> queue;
    tree.nodes_.push_back(Node{0, 0, std::nullopt, {}, 1.0});
    queue.emplace_back(&root, 0);
    static const Branching leaf{};
    while (!queue.empty()) {
        auto [spec, id] = queue.front();
        queue.pop_front();
        if (spec->probs.empty())
            continue;
        check_probability_row(spec->probs, "node " + std::to_string(id));
        ODX_REQUIRE(spec->subtrees.empty() || spec->subtrees.size() == spec->probs.size(),
                    "node " << id << ": " << spec->subtrees.size() << " subtrees for "
                            << spec->probs.size() << " branches");
        for (std::size_t k = 0; k < spec->probs.size(); ++k) {
            NodeId child = tree.nodes_.size();
            tree.nodes_.push_back(Node{child, tree.nodes_[id].time + 1, id, {}, spec->probs[k]});
            tree.nodes_[id].children.push_back(child);
            queue.emplace_back(spec->subtrees.empty() ? &leaf : &spec->subtrees[k], child);
        }
    }
    tree.horizon_ = 0;
    for (const auto& n : tree.nodes_)
        tree.horizon_ = std::max(tree.horizon_, n.time);
    tree.finalize();
    return tree;
}

EventTree EventTree::uniform(int horizon, const std::vector<double>& probs) {
    ODX_REQUIRE(horizon >= 0, "horizon must be nonnegative");
    ODX_REQUIRE(horizon == 0 || !probs.empty(), "a tree with positive horizon needs at least one branch");
    Branching level{};
    for (int t = 0; t < horizon; ++t) {
        Branching up{probs, {}};
        if (t > 0)
            up.subtrees.assign(probs.size(), level);
        level = std::move(up);
    }
    return from_branching(level);
}

EventTree EventTree::from_records(int horizon, const std::vector<NodeRecord>& records) {
    ODX_REQUIRE(horizon >= 0, "horizon must be nonnegative");
    ODX_REQUIRE(!records.empty(), "tree has no nodes");
    EventTree tree;
    tree.horizon_ = horizon;
    tree.nodes_.resize(records.size());
    std::vector<bool> seen(records.size(), false);
    for (const auto& r : records) {
        ODX_REQUIRE(r.id < records.size(), "node id " << r.id << " out of range; ids must be 0.."
                                                      << records.size() - 1);
        ODX_REQUIRE(!seen[r.id], "duplicate node id " << r.id);
        seen[r.id] = true;
        tree.nodes_[r.id] = Node{r.id, r.time, r.parent, {}, r.parent ? r.prob : 1.0};
    }
    ODX_REQUIRE(!tree.nodes_[0].parent && tree.nodes_[0].time == 0, "node 0 must be the root at time 0");
    for (NodeId id = 1; id < tree.nodes_.size(); ++id) {
        const Node& n = tree.nodes_[id];
        ODX_REQUIRE(n.parent.has_value(), "node " << id << " has no parent; exactly one root allowed");
        ODX_REQUIRE(*n.parent < id, "node " << id << ": parent " << *n.parent
                                            << " must precede it (breadth-first ids)");
        const Node& par = tree.nodes_[*n.parent];
        ODX_REQUIRE(par.time + 1 == n.time, "node " << id << ": time " << n.time << " but parent time "
                                                    << par.time);
        ODX_REQUIRE(id == 1 || tree.nodes_[id - 1].time < n.time ||
                        (tree.nodes_[id - 1].time == n.time && *tree.nodes_[id - 1].parent <= *n.parent),
                    "node " << id << ": ids are not in breadth-first order");
        tree.nodes_[*n.parent].children.push_back(id);
    }
    for (const auto& n : tree.nodes_) {
        if (n.children.empty()) {
            ODX_REQUIRE(n.time == horizon, "leaf " << n.id << " at time " << n.time << ", expected horizon "
                                                    << horizon);
            continue;
        }
        std::vector<double> probs;
        for (NodeId c : n.children)
            probs.push_back(tree.nodes_[c].prob);
        check_probability_row(probs, "node " + std::to_string(n.id));
    }
    tree.finalize();
    return tree;
}

void EventTree::finalize() {
    path_prob_.assign(nodes_.size(), 1.0);
    by_time_.assign(static_cast<std::size_t>(horizon_) + 1, {});
    for (const auto& n : nodes_) {
        if (n.parent)
            path_prob_[n.id] = path_prob_[*n.parent] * n.prob;
        by_time_.at(static_cast<std::size_t>(n.time)).push_back(n.id);
        ODX_REQUIRE(!n.children.empty() || n.time == horizon_,
                    "leaf " << n.id << " at time " << n.time << " is not at the horizon " << horizon_);
    }
}

NodeId EventTree::parent(NodeId id) const {
    const auto& p = nodes_.at(id).parent;
    ODX_REQUIRE(p.has_value(), "root has no parent");
    return *p;
}

Eigen::VectorXd EventTree::child_probabilities(NodeId id) const {
    const auto& ch = children(id);
    Eigen::VectorXd p(static_cast<Eigen::Index>(ch.size()));
    for (std::size_t k = 0; k < ch.size(); ++k)
        p(static_cast<Eigen::Index>(k)) = nodes_[ch[k]].prob;
    return p;
}

std::vector<NodeId> EventTree::path(NodeId id) const {
    std::vector<NodeId> out;
    std::optional<NodeId> cur = id;
    while (cur) {
        out.push_back(*cur);
        cur = nodes_.at(*cur).parent;
    }
    std::reverse(out.begin(), out.end());
    return out;
}

std::vector<NodeId> EventTree::internal_nodes() const {
    std::vector<NodeId> out;
    for (const auto& n : nodes_)
        if (!n.children.empty())
            out.push_back(n.id);
    return out;
}

std::vector<NodeRecord> EventTree::records() const {
    std::vector<NodeRecord> out;
    out.reserve(nodes_.size());
    for (const auto& n : nodes_)
        out.push_back(NodeRecord{n.id, n.time, n.parent, n.prob});
    return out;
}

TreePtr build_tree(const Branching& spec) {
    return std::make_shared<const EventTree>(EventTree::from_branching(spec));
}

TreePtr build_uniform_tree(int horizon, const std::vector<double>& probs) {
    return std::make_shared<const EventTree>(EventTree::uniform(horizon, probs));
}

// --- AdaptedProcess ------------------------------------------------------

AdaptedProcess::AdaptedProcess(TreePtr tree, std::size_t dim, double fill)
    : tree_(std::move(tree)),
      values_(Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(dim),
                                        static_cast<Eigen::Index>(tree_->size()), fill)) {}

AdaptedProcess::AdaptedProcess(TreePtr tree, Eigen::MatrixXd values)
    : tree_(std::move(tree)), values_(std::move(values)) {
    ODX_REQUIRE(static_cast<std::size_t>(values_.cols()) == tree_->size(),
                "process has " << values_.cols() << " node values for a tree of " << tree_->size()
                               << " nodes");
    ODX_REQUIRE(values_.rows() > 0, "process dimension must be positive");
}

AdaptedProcess AdaptedProcess::scalar(TreePtr tree, const std::vector<double>& values) {
    ODX_REQUIRE(values.size() == tree->size(),
                "scalar process has " << values.size() << " values for " << tree->size() << " nodes");
    Eigen::MatrixXd m(1, static_cast<Eigen::Index>(values.size()));
    for (std::size_t i = 0; i < values.size(); ++i)
        m(0, static_cast<Eigen::Index>(i)) = values[i];
    return AdaptedProcess(std::move(tree), std::move(m));
}

void AdaptedProcess::set(NodeId id, const Eigen::VectorXd& v) {
    ODX_REQUIRE(static_cast<std::size_t>(v.size()) == dim(), "dimension mismatch at node " << id);
    values_.col(static_cast<Eigen::Index>(id)) = v;
}

Eigen::VectorXd AdaptedProcess::increment(NodeId child) const {
    return at(child) - at(tree_->parent(child));
}

AdaptedProcess AdaptedProcess::component(std::size_t i) const {
    ODX_REQUIRE(i < dim(), "component " << i << " out of range");
    return AdaptedProcess(tree_, Eigen::MatrixXd(values_.row(static_cast<Eigen::Index>(i))));
}

// --- PredictableProcess --------------------------------------------------

PredictableProcess::PredictableProcess(TreePtr tree, std::size_t dim, double fill)
    : tree_(std::move(tree)),
      values_(Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(dim),
                                        static_cast<Eigen::Index>(tree_->size()), fill)) {
    for (const auto& n : tree_->nodes())
        if (n.children.empty())
            values_.col(static_cast<Eigen::Index>(n.id)).setConstant(std::numeric_limits<double>::quiet_NaN());
}

Eigen::VectorXd PredictableProcess::at(NodeId id) const {
    ODX_REQUIRE(!tree_->is_leaf(id), "predictable process is not defined at leaf " << id);
    return values_.col(static_cast<Eigen::Index>(id));
}

void PredictableProcess::set(NodeId id, const Eigen::VectorXd& v) {
    ODX_REQUIRE(!tree_->is_leaf(id), "predictable process is not defined at leaf " << id);
    ODX_REQUIRE(static_cast<std::size_t>(v.size()) == dim(), "dimension mismatch at node " << id);
    values_.col(static_cast<Eigen::Index>(id)) = v;
}

// --- algebra -------------------------------------------------------------

namespace {
void require_same_tree(const AdaptedProcess& a, const AdaptedProcess& b) {
    ODX_REQUIRE(a.tree_ptr() == b.tree_ptr() ||
                    (a.tree_ptr() && b.tree_ptr() && a.tree().size() == b.tree().size()),
                "processes live on different trees");
}
} // namespace

AdaptedProcess operator+(const AdaptedProcess& lhs, const AdaptedProcess& rhs) {
    require_same_tree(lhs, rhs);
    ODX_REQUIRE(lhs.dim() == rhs.dim(), "dimension mismatch in sum");
    return AdaptedProcess(lhs.tree_ptr(), lhs.values() + rhs.values());
}

AdaptedProcess operator-(const AdaptedProcess& lhs, const AdaptedProcess& rhs) {
    require_same_tree(lhs, rhs);
    ODX_REQUIRE(lhs.dim() == rhs.dim(), "dimension mismatch in difference");
    return AdaptedProcess(lhs.tree_ptr(), lhs.values() - rhs.values());
}

AdaptedProcess operator*(double s, const AdaptedProcess& p) {
    return AdaptedProcess(p.tree_ptr(), s * p.values());
}

AdaptedProcess multiply(const AdaptedProcess& scalar, const AdaptedProcess& p) {
    require_same_tree(scalar, p);
    ODX_REQUIRE(scalar.dim() == 1, "left factor must be scalar");
    Eigen::MatrixXd out = p.values();
    for (Eigen::Index j = 0; j < out.cols(); ++j)
        out.col(j) *= scalar.values()(0, j);
    return AdaptedProcess(p.tree_ptr(), std::move(out));
}

Eigen::MatrixXd child_increments(const AdaptedProcess& p, NodeId node) {
    const auto& ch = p.tree().children(node);
    Eigen::MatrixXd d(static_cast<Eigen::Index>(p.dim()), static_cast<Eigen::Index>(ch.size()));
    const Eigen::VectorXd base = p.at(node);
    for (std::size_t k = 0; k < ch.size(); ++k)
        d.col(static_cast<Eigen::Index>(k)) = p.at(ch[k]) - base;
    return d;
}

Eigen::MatrixXd conditional_moment(const AdaptedProcess& p, NodeId node, int order) {
    ODX_REQUIRE(!p.tree().is_leaf(node), "conditional moment requested at leaf " << node);
    ODX_REQUIRE(order == 1 || order == 2, "conditional moment order must be 1 or 2");
    const Eigen::MatrixXd d = child_increments(p, node);
    const Eigen::VectorXd prob = p.tree().child_probabilities(node);
    if (order == 1)
        return d * prob;
    return d * prob.asDiagonal() * d.transpose();
}

DoobDecomposition doob_decompose(const AdaptedProcess& x) {
    const EventTree& tree = x.tree();
    AdaptedProcess a(x.tree_ptr(), x.dim(), 0.0);
    for (const auto& n : tree.nodes()) {
        if (n.children.empty())
            continue;
        const Eigen::VectorXd drift = conditional_moment(x, n.id, 1);
        for (NodeId c : n.children)
            a.set(c, a.at(n.id) + drift);
    }
    AdaptedProcess m = x - a;
    return {std::move(a), std::move(m)};
}

AdaptedProcess quadratic_covariation(const AdaptedProcess& m, const AdaptedProcess& n) {
    ODX_REQUIRE(m.tree_ptr() == n.tree_ptr(), "quadratic covariation of processes on different trees");
    const std::size_t dm = m.dim(), dn = n.dim();
    AdaptedProcess out(m.tree_ptr(), dm * dn, 0.0);
    for (const auto& node : m.tree().nodes()) {
        if (!node.parent)
            continue;
        const Eigen::VectorXd a = m.increment(node.id);
        const Eigen::VectorXd b = n.increment(node.id);
        Eigen::VectorXd v = out.at(*node.parent);
        for (std::size_t i = 0; i < dm; ++i)
            for (std::size_t j = 0; j < dn; ++j)
                v(static_cast<Eigen::Index>(i * dn + j)) += a(static_cast<Eigen::Index>(i)) * b(static_cast<Eigen::Index>(j));
        out.set(node.id, v);
    }
    return out;
}

double max_martingale_defect(const AdaptedProcess& p) {
    double worst = 0.0;
    for (const auto& n : p.tree().nodes())
        if (!n.children.empty())
            worst = std::max(worst, conditional_moment(p, n.id, 1).cwiseAbs().maxCoeff());
    return worst;
}

} // namespace odx
