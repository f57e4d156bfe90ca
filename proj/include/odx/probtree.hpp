#pragma once

// Finite filtered probability space represented as an event tree, plus the
// process algebra used by every other module: node-indexed (adapted) and
// parent-indexed (predictable) vector panels, exact conditional moments,
// the Doob decomposition and quadratic covariation.

#include <Eigen/Dense>

#include <cstddef>
#include <memory>
#include <optional>
#include <vector>

namespace odx {

using NodeId = std::size_t;

struct Node {
    NodeId id = 0;
    int time = 0;
    std::optional<NodeId> parent;
    std::vector<NodeId> children;
    double prob = 1.0; // transition probability from the parent; 1 at the root
};

// Flat node description as found in tree files.
struct NodeRecord {
    NodeId id = 0;
    int time = 0;
    std::optional<NodeId> parent;
    double prob = 1.0;
};

// Recursive branching description. An empty `probs` marks a leaf; otherwise
// `subtrees` is either empty (every child is a leaf) or has one entry per
// probability.
struct Branching {
    std::vector<double> probs;
    std::vector<Branching> subtrees;
};

class EventTree {
public:
    static constexpr double kProbabilityTolerance = 1e-12;

    static EventTree from_branching(const Branching& root);
    // Every non-leaf node has the same transition probabilities.
    static EventTree uniform(int horizon, const std::vector<double>& probs);
    // Node ids must be 0..N-1 in breadth-first order.
    static EventTree from_records(int horizon, const std::vector<NodeRecord>& records);

    std::size_t size() const { return nodes_.size(); }
    int horizon() const { return horizon_; }
    const Node& node(NodeId id) const { return nodes_.at(id); }
    const std::vector<Node>& nodes() const { return nodes_; }
    const std::vector<NodeId>& children(NodeId id) const { return nodes_.at(id).children; }
    bool is_leaf(NodeId id) const { return nodes_.at(id).children.empty(); }
    NodeId parent(NodeId id) const;

    // Probabilities of the children of `id`, in child order.
    Eigen::VectorXd child_probabilities(NodeId id) const;
    double path_probability(NodeId id) const { return path_prob_.at(id); }
    // Root first, `id` last.
    std::vector<NodeId> path(NodeId id) const;

    const std::vector<NodeId>& nodes_at(int time) const { return by_time_.at(static_cast<std::size_t>(time)); }
    const std::vector<NodeId>& leaves() const { return by_time_.back(); }
    std::vector<NodeId> internal_nodes() const;

    std::vector<NodeRecord> records() const;

private:
    EventTree() = default;
    void finalize();

    int horizon_ = 0;
    std::vector<Node> nodes_;
    std::vector<double> path_prob_;
    std::vector<std::vector<NodeId>> by_time_;
};

using TreePtr = std::shared_ptr<const EventTree>;

TreePtr build_tree(const Branching& spec);
TreePtr build_uniform_tree(int horizon, const std::vector<double>& probs);

// Node-indexed panel of vectors of fixed dimension. Column `id` holds the
// value at node `id`.
class AdaptedProcess {
public:
    AdaptedProcess() = default;
    AdaptedProcess(TreePtr tree, std::size_t dim, double fill = 0.0);
    AdaptedProcess(TreePtr tree, Eigen::MatrixXd values);

    static AdaptedProcess scalar(TreePtr tree, const std::vector<double>& values);

    const EventTree& tree() const { return *tree_; }
    const TreePtr& tree_ptr() const { return tree_; }
    std::size_t dim() const { return static_cast<std::size_t>(values_.rows()); }
    std::size_t size() const { return static_cast<std::size_t>(values_.cols()); }

    Eigen::VectorXd at(NodeId id) const { return values_.col(static_cast<Eigen::Index>(id)); }
    void set(NodeId id, const Eigen::VectorXd& v);
    double operator()(NodeId id, std::size_t i = 0) const {
        return values_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(id));
    }
    double& operator()(NodeId id, std::size_t i = 0) {
        return values_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(id));
    }

    // Increment from the parent of `child` to `child`.
    Eigen::VectorXd increment(NodeId child) const;

    AdaptedProcess component(std::size_t i) const;
    const Eigen::MatrixXd& values() const { return values_; }

private:
    TreePtr tree_;
    Eigen::MatrixXd values_;
};

// Values in force on the step from a non-leaf node to its children. Leaf
// columns are unused and hold NaN.
class PredictableProcess {
public:
    PredictableProcess() = default;
    PredictableProcess(TreePtr tree, std::size_t dim, double fill = 0.0);

    const EventTree& tree() const { return *tree_; }
    const TreePtr& tree_ptr() const { return tree_; }
    std::size_t dim() const { return static_cast<std::size_t>(values_.rows()); }

    Eigen::VectorXd at(NodeId id) const;
    void set(NodeId id, const Eigen::VectorXd& v);
    double operator()(NodeId id, std::size_t i = 0) const {
        return values_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(id));
    }
    double& operator()(NodeId id, std::size_t i = 0) {
        return values_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(id));
    }
    const Eigen::MatrixXd& values() const { return values_; }

private:
    TreePtr tree_;
    Eigen::MatrixXd values_;
};

AdaptedProcess operator+(const AdaptedProcess& lhs, const AdaptedProcess& rhs);
AdaptedProcess operator-(const AdaptedProcess& lhs, const AdaptedProcess& rhs);
AdaptedProcess operator*(double s, const AdaptedProcess& p);
// Scalar process times every component of `p`.
AdaptedProcess multiply(const AdaptedProcess& scalar, const AdaptedProcess& p);

// Increments to each child of `node`, one column per child.
Eigen::MatrixXd child_increments(const AdaptedProcess& p, NodeId node);

// Order 1: sum_k p_k dP_k (dim x 1). Order 2: sum_k p_k dP_k dP_k^T (dim x dim).
Eigen::MatrixXd conditional_moment(const AdaptedProcess& p, NodeId node, int order);

struct DoobDecomposition {
    AdaptedProcess A; // predictable drift, A(0) = 0
    AdaptedProcess M; // martingale part, M = X - A
};

DoobDecomposition doob_decompose(const AdaptedProcess& x);

// [M, N](node) = sum along the path of dM dN^T, flattened row-major into a
// process of dimension dim(M) * dim(N).
AdaptedProcess quadratic_covariation(const AdaptedProcess& m, const AdaptedProcess& n);

// max over non-leaf nodes and components of |sum_k p_k dP_k|.
double max_martingale_defect(const AdaptedProcess& p);

} // namespace odx
