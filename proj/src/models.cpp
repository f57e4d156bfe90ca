#include "odx/models.hpp"

#include "odx/error.hpp"
#include "odx/random.hpp"

#include <algorithm>
#include <random>

namespace odx {

namespace {

Model one_period(std::string name, const std::vector<double>& probs, const Eigen::MatrixXd& increments) {
    const TreePtr tree = build_uniform_tree(1, probs);
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(increments.rows(), increments.cols() + 1);
    x.rightCols(increments.cols()) = increments;
    return {std::move(name), AdaptedProcess(tree, std::move(x))};
}

} // namespace

Model model_b1() {
    Eigen::MatrixXd dx(1, 2);
    dx << 0.1, -0.1;
    return one_period("B1", {0.6, 0.4}, dx);
}

Model model_t1() {
    Eigen::MatrixXd dx(1, 3);
    dx << 0.1, 0.0, -0.1;
    return one_period("T1", {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0}, dx);
}

Model model_a1() {
    Eigen::MatrixXd dx(2, 2);
    dx << 1.0, -1.0, 1.0, 1.0;
    return one_period("A1", {0.5, 0.5}, dx);
}

Model model_binomial(int periods, double up, double down, double p_up) {
    ODX_REQUIRE(periods >= 1, "binomial market needs at least one period");
    const TreePtr tree = build_uniform_tree(periods, {p_up, 1.0 - p_up});
    AdaptedProcess x(tree, 1, 0.0);
    for (const auto& n : tree->nodes()) {
        const auto& ch = n.children;
        for (std::size_t k = 0; k < ch.size(); ++k)
            x(ch[k]) = x(n.id) + (k == 0 ? up : down);
    }
    return {"binomial", std::move(x)};
}

Model model_put2() {
    Model m = model_binomial(2, 0.1, -0.1, 0.5);
    m.name = "PUT2";
    return m;
}

Model builtin_model(std::string_view name) {
    if (name == "B1")
        return model_b1();
    if (name == "T1")
        return model_t1();
    if (name == "A1")
        return model_a1();
    if (name == "PUT2")
        return model_put2();
    ODX_THROW(InputError, "unknown built-in model '" << name << "' (expected B1, T1, A1 or PUT2)");
}

std::vector<std::string> builtin_model_names() {
    return {"B1", "T1", "A1", "PUT2"};
}

Model random_model(std::uint64_t seed, const RandomTreeOptions& options) {
    ODX_REQUIRE(options.max_periods >= 1 && options.max_branches >= 2 && options.max_dim >= 1,
                "random tree needs >= 1 period, >= 2 branches and >= 1 dimension");
    ODX_REQUIRE(!options.complete || options.max_dim + 1 <= options.max_branches,
                "complete trees need max_branches >= max_dim + 1");
    auto eng = stream_engine(seed, 0);
    const int horizon = std::uniform_int_distribution<int>(1, options.max_periods)(eng);
    const int d = std::uniform_int_distribution<int>(1, options.max_dim)(eng);
    std::uniform_int_distribution<int> branches(2, options.max_branches);
    std::uniform_real_distribution<double> weight(0.2, 1.0);

    auto random_probs = [&](int k) {
        std::vector<double> p(static_cast<std::size_t>(k));
        double total = 0.0;
        for (double& v : p)
            total += (v = weight(eng));
        for (double& v : p)
            v /= total;
        return p;
    };
    auto grow = [&](auto&& self, int depth) -> Branching {
        Branching b;
        if (depth == horizon)
            return b;
        const int k = options.complete ? d + 1 : branches(eng);
        b.probs = random_probs(k);
        for (int j = 0; j < k; ++j)
            b.subtrees.push_back(self(self, depth + 1));
        return b;
    };
    const TreePtr tree = build_tree(grow(grow, 0));

    AdaptedProcess x(tree, static_cast<std::size_t>(d), 0.0);
    std::normal_distribution<double> normal(0.0, options.scale);
    for (NodeId node : tree->internal_nodes()) {
        auto node_eng = stream_engine(mix_seed(seed, 1), node);
        const auto& ch = tree->children(node);
        const auto k = static_cast<Eigen::Index>(ch.size());
        Eigen::VectorXd q(k);
        for (Eigen::Index j = 0; j < k; ++j)
            q(j) = std::uniform_real_distribution<double>(0.2, 1.0)(node_eng);
        q /= q.sum();
        Eigen::MatrixXd dx(d, k);
        // Redraw nearly degenerate steps so hedge ratios stay O(1 / scale).
        do {
            for (Eigen::Index j = 0; j < k; ++j)
                for (Eigen::Index i = 0; i < d; ++i)
                    dx(i, j) = normal(node_eng);
            const Eigen::VectorXd centre = dx * q;
            dx.colwise() -= centre;
        } while (Eigen::JacobiSVD<Eigen::MatrixXd>(dx).singularValues()(std::min<Eigen::Index>(d, k - 1) - 1) <
                 0.2 * options.scale);
        for (Eigen::Index j = 0; j < k; ++j)
            x.set(ch[static_cast<std::size_t>(j)], x.at(node) + dx.col(j));
    }
    return {"random-" + std::to_string(seed), std::move(x)};
}

} // namespace odx
