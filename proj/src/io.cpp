#include "odx/io.hpp"

#include "odx/error.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace odx::io {

namespace {

const Json& field(const Json& j, const char* key, const std::string& what) {
    ODX_REQUIRE(j.is_object(), what << " must be a JSON object");
    auto it = j.find(key);
    ODX_REQUIRE(it != j.end(), what << " is missing the field \"" << key << "\"");
    return *it;
}

double number(const Json& j, const std::string& what) {
    ODX_REQUIRE(j.is_number(), what << " must be a number");
    return j.get<double>();
}

std::uint64_t unsigned_integer(const Json& j, const std::string& what) {
    ODX_REQUIRE(j.is_number_unsigned() || (j.is_number_integer() && j.get<std::int64_t>() >= 0),
                what << " must be a nonnegative integer");
    return j.get<std::uint64_t>();
}

Eigen::MatrixXd matrix_from_json(const Json& j, const std::string& what) {
    ODX_REQUIRE(j.is_array() && !j.empty(), what << " must be a nonempty array of rows");
    const auto rows = static_cast<Eigen::Index>(j.size());
    Eigen::MatrixXd m;
    for (Eigen::Index r = 0; r < rows; ++r) {
        const Eigen::VectorXd row = vector_from_json(j[static_cast<std::size_t>(r)], what + " row");
        if (r == 0)
            m.resize(rows, row.size());
        ODX_REQUIRE(row.size() == m.cols(), what << " rows have different lengths");
        m.row(r) = row.transpose();
    }
    return m;
}

Json matrix_to_json(const Eigen::MatrixXd& m) {
    Json out = Json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        out.push_back(vector_to_json(m.row(r).transpose()));
    return out;
}

std::size_t node_key(const std::string& key, const TreePtr& tree, const std::string& what) {
    std::size_t pos = 0;
    unsigned long long id = 0;
    try {
        id = std::stoull(key, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    ODX_REQUIRE(pos == key.size() && !key.empty(), what << ": key \"" << key << "\" is not a node id");
    ODX_REQUIRE(id < tree->size(), what << ": node " << id << " is not in the tree");
    return static_cast<std::size_t>(id);
}

} // namespace

Json parse_json(std::string_view text, const std::string& source) {
    try {
        return Json::parse(text.begin(), text.end());
    } catch (const Json::parse_error& e) {
        std::size_t line = 1, col = 1;
        const std::size_t end = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
        for (std::size_t i = 0; i < end; ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        ODX_THROW(InputError, source << ":" << line << ":" << col << ": malformed JSON (" << e.what() << ")");
    }
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    ODX_REQUIRE(in, "cannot open " << path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Json read_json_file(const std::string& path) {
    return parse_json(read_text_file(path), path);
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    ODX_REQUIRE(out, "cannot write " << path);
    out << content;
    ODX_REQUIRE(out.good(), "error writing " << path);
}

std::string dump(const Json& j) {
    return j.dump(2) + "\n";
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

Json document() {
    Json j = Json::object();
    j["odx_schema"] = kSchemaVersion;
    return j;
}

void require_schema(const Json& j, const std::string& what) {
    ODX_REQUIRE(j.is_object(), what << " must be a JSON object");
    auto it = j.find("odx_schema");
    ODX_REQUIRE(it != j.end(), what << " has no \"odx_schema\" field");
    ODX_REQUIRE(*it == kSchemaVersion, what << " has unsupported odx_schema " << it->dump() << " (expected "
                                            << kSchemaVersion << ")");
}

Json vector_to_json(const Eigen::VectorXd& v) {
    Json out = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i)
        out.push_back(v(i));
    return out;
}

Eigen::VectorXd vector_from_json(const Json& j, const std::string& what) {
    if (j.is_number())
        return Eigen::VectorXd::Constant(1, j.get<double>());
    ODX_REQUIRE(j.is_array(), what << " must be a number or an array of numbers");
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i)
        v(static_cast<Eigen::Index>(i)) = number(j[i], what + " entry");
    return v;
}

// ---------------------------------------------------------------------------
// Trees and processes

Json tree_to_json(const EventTree& tree) {
    Json nodes = Json::array();
    for (const auto& r : tree.records()) {
        Json n = Json::object();
        n["id"] = r.id;
        n["time"] = r.time;
        n["parent"] = r.parent ? Json(*r.parent) : Json(nullptr);
        n["p"] = r.prob;
        nodes.push_back(std::move(n));
    }
    Json out = Json::object();
    out["horizon"] = tree.horizon();
    out["nodes"] = std::move(nodes);
    return out;
}

TreePtr tree_from_json(const Json& j) {
    const Json& nodes = field(j, "nodes", "tree");
    ODX_REQUIRE(nodes.is_array(), "tree nodes must be an array");
    const auto horizon = unsigned_integer(field(j, "horizon", "tree"), "tree horizon");
    std::vector<NodeRecord> records;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const std::string what = "tree node #" + std::to_string(i);
        const Json& n = nodes[i];
        NodeRecord r;
        r.id = unsigned_integer(field(n, "id", what), what + " id");
        r.time = static_cast<int>(unsigned_integer(field(n, "time", what), what + " time"));
        const Json& parent = field(n, "parent", what);
        if (!parent.is_null())
            r.parent = unsigned_integer(parent, what + " parent");
        r.prob = r.parent ? number(field(n, "p", what), what + " p") : 1.0;
        records.push_back(r);
    }
    return std::make_shared<const EventTree>(EventTree::from_records(static_cast<int>(horizon), records));
}

Json process_to_json(const AdaptedProcess& p) {
    Json out = Json::object();
    for (std::size_t i = 0; i < p.size(); ++i)
        out[std::to_string(i)] = vector_to_json(p.at(i));
    return out;
}

Json process_to_json(const PredictableProcess& p) {
    Json out = Json::object();
    for (NodeId node : p.tree().internal_nodes())
        out[std::to_string(node)] = vector_to_json(p.at(node));
    return out;
}

AdaptedProcess process_from_json(const Json& j, const TreePtr& tree, std::size_t dim, const std::string& what) {
    ODX_REQUIRE(j.is_object(), what << " must be an object keyed by node id");
    AdaptedProcess out(tree, dim, std::numeric_limits<double>::quiet_NaN());
    std::vector<bool> seen(tree->size(), false);
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::size_t id = node_key(it.key(), tree, what);
        const Eigen::VectorXd v = vector_from_json(it.value(), what + " at node " + it.key());
        ODX_REQUIRE(static_cast<std::size_t>(v.size()) == dim,
                    what << " at node " << id << " has " << v.size() << " entries, expected " << dim);
        ODX_REQUIRE(v.allFinite(), what << " at node " << id << " is not finite");
        out.set(id, v);
        seen[id] = true;
    }
    for (std::size_t id = 0; id < seen.size(); ++id)
        ODX_REQUIRE(seen[id], what << " has no value at node " << id);
    return out;
}

PredictableProcess predictable_from_json(const Json& j, const TreePtr& tree, std::size_t dim,
                                         const std::string& what) {
    ODX_REQUIRE(j.is_object(), what << " must be an object keyed by node id");
    PredictableProcess out(tree, dim);
    std::vector<bool> seen(tree->size(), false);
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::size_t id = node_key(it.key(), tree, what);
        ODX_REQUIRE(!tree->is_leaf(id), what << " is defined at leaf " << id);
        const Eigen::VectorXd v = vector_from_json(it.value(), what + " at node " + it.key());
        ODX_REQUIRE(static_cast<std::size_t>(v.size()) == dim,
                    what << " at node " << id << " has " << v.size() << " entries, expected " << dim);
        ODX_REQUIRE(v.allFinite(), what << " at node " << id << " is not finite");
        out.set(id, v);
        seen[id] = true;
    }
    for (NodeId id : tree->internal_nodes())
        ODX_REQUIRE(seen[id], what << " has no value at node " << id);
    return out;
}

// ---------------------------------------------------------------------------
// Models, claims, values

Json model_to_json(const Model& m) {
    Json out = document();
    out["name"] = m.name;
    out["tree"] = tree_to_json(m.X.tree());
    out["X"] = process_to_json(m.X);
    return out;
}

Model model_from_json(const Json& j) {
    require_schema(j, "model");
    const TreePtr tree = tree_from_json(field(j, "tree", "model"));
    const Json& xj = field(j, "X", "model");
    ODX_REQUIRE(xj.is_object() && !xj.empty(), "model X must be a nonempty object keyed by node id");
    const auto dim = static_cast<std::size_t>(vector_from_json(xj.begin().value(), "model X").size());
    ODX_REQUIRE(dim >= 1, "model X must have at least one component");
    Model m;
    m.name = j.contains("name") && j["name"].is_string() ? j["name"].get<std::string>() : "model";
    m.X = process_from_json(xj, tree, dim, "model X");
    return m;
}

Model load_model(const std::string& source) {
    constexpr std::string_view prefix = "builtin:";
    if (source.rfind(prefix, 0) == 0)
        return builtin_model(std::string_view(source).substr(prefix.size()));
    return model_from_json(read_json_file(source));
}

Json claim_to_json(const Claim& c) {
    Json out = document();
    out["kind"] = c.kind == ClaimKind::American ? "american" : "european";
    Json payoff = Json::object();
    for (std::size_t i = 0; i < c.payoff.size(); ++i)
        payoff[std::to_string(i)] = c.payoff(i);
    out["payoff"] = std::move(payoff);
    return out;
}

Claim claim_from_json(const Json& j, const AdaptedProcess& x) {
    require_schema(j, "claim");
    const Json& kind_j = field(j, "kind", "claim");
    ODX_REQUIRE(kind_j.is_string(), "claim kind must be a string");
    const std::string kind_s = kind_j.get<std::string>();
    ODX_REQUIRE(kind_s == "american" || kind_s == "european",
                "claim kind must be \"american\" or \"european\" (got \"" << kind_s << "\")");
    const ClaimKind kind = kind_s == "american" ? ClaimKind::American : ClaimKind::European;

    if (j.contains("formula")) {
        const Json& f = j["formula"];
        ODX_REQUIRE(f.is_string(), "claim formula must be a string");
        const std::string formula = f.get<std::string>();
        ODX_REQUIRE(formula == "put" || formula == "call",
                    "claim formula must be \"put\" or \"call\" (got \"" << formula << "\")");
        const double strike = number(field(j, "strike", "claim"), "claim strike");
        const std::size_t asset = j.contains("asset") ? unsigned_integer(j["asset"], "claim asset") : 0;
        return vanilla_claim(kind, formula == "put" ? Vanilla::Put : Vanilla::Call, strike, x, asset);
    }

    const Json& pj = field(j, "payoff", "claim");
    ODX_REQUIRE(pj.is_object(), "claim payoff must be an object keyed by node id");
    const TreePtr& tree = x.tree_ptr();
    AdaptedProcess payoff(tree, 1, std::numeric_limits<double>::quiet_NaN());
    for (auto it = pj.begin(); it != pj.end(); ++it) {
        const std::size_t id = node_key(it.key(), tree, "claim payoff");
        const Eigen::VectorXd v = vector_from_json(it.value(), "claim payoff at node " + it.key());
        ODX_REQUIRE(v.size() == 1 && std::isfinite(v(0)), "claim payoff at node " << id << " must be a finite number");
        payoff(id) = v(0);
    }
    const std::vector<NodeId> required = kind == ClaimKind::American ? [&] {
        std::vector<NodeId> all(tree->size());
        for (std::size_t i = 0; i < all.size(); ++i)
            all[i] = i;
        return all;
    }()
                                                                     : tree->leaves();
    for (NodeId id : required)
        ODX_REQUIRE(std::isfinite(payoff(id)), "claim payoff has no value at node " << id);
    for (std::size_t i = 0; i < payoff.size(); ++i)
        if (!std::isfinite(payoff(i)))
            payoff(i) = 0.0;
    return {kind, std::move(payoff)};
}

AdaptedProcess value_from_json(const Json& j, const AdaptedProcess& x) {
    require_schema(j, "value process");
    return process_from_json(field(j, "V", "value process"), x.tree_ptr(), 1, "value process V");
}

// ---------------------------------------------------------------------------
// Reports

Json structure_to_json(const StructureReport& r, const Characteristics& ch) {
    Json out = document();
    out["status"] = to_string(r.status);
    out["a"] = process_to_json(ch.a);
    out["c"] = process_to_json(ch.c);
    out["rho"] = r.rho ? process_to_json(*r.rho) : Json(nullptr);
    out["zeta"] = r.zeta ? process_to_json(*r.zeta) : Json(nullptr);
    out["mass_max"] = r.mass_max;
    out["mass_flag"] = r.mass_flag;
    out["min_norm_used"] = r.min_norm_used;
    out["arbitrage_nodes"] = r.arbitrage_nodes;
    return out;
}

Json family_to_json(const DeflatorFamily& f) {
    Json out = document();
    out["rho_hat"] = process_to_json(f.rho_hat);
    out["V_hat"] = process_to_json(f.V_hat);
    out["Y_hat"] = process_to_json(f.Y_hat);
    Json extras = Json::array();
    for (const auto& e : f.extras) {
        Json x = Json::object();
        x["L"] = process_to_json(e.L);
        x["Y"] = process_to_json(e.Y);
        extras.push_back(std::move(x));
    }
    out["extras"] = std::move(extras);
    return out;
}

Json decomposition_to_json(const Decomposition& d) {
    Json out = document();
    out["route"] = to_string(d.route);
    out["V0"] = d.V0;
    out["V"] = process_to_json(d.V);
    out["H"] = process_to_json(d.H);
    out["C"] = process_to_json(d.C);
    const auto& g = d.diagnostics;
    Json diag = Json::object();
    diag["n_norm"] = g.n_norm;
    diag["min_dB"] = g.min_dB;
    diag["min_dC"] = g.min_dC;
    diag["duality_gap"] = g.duality_gap;
    diag["reconstruction_error"] = g.reconstruction_error;
    diag["deferred_nodes"] = g.deferred_nodes;
    Json boundary = Json::object();
    for (const auto& [node, q] : g.boundary_measures)
        boundary[std::to_string(node)] = vector_to_json(q);
    diag["boundary_measures"] = std::move(boundary);
    if (g.theta)
        diag["theta"] = process_to_json(*g.theta);
    if (g.B)
        diag["B"] = process_to_json(*g.B);
    out["diagnostics"] = std::move(diag);
    return out;
}

Decomposition decomposition_from_json(const Json& j, const AdaptedProcess& x) {
    require_schema(j, "decomposition");
    const TreePtr& tree = x.tree_ptr();
    Decomposition d;
    const Json& route = field(j, "route", "decomposition");
    ODX_REQUIRE(route == "LP" || route == "KW", "decomposition route must be \"LP\" or \"KW\"");
    d.route = route == "LP" ? Route::LP : Route::KW;
    d.V0 = number(field(j, "V0", "decomposition"), "decomposition V0");
    d.V = process_from_json(field(j, "V", "decomposition"), tree, 1, "decomposition V");
    d.H = predictable_from_json(field(j, "H", "decomposition"), tree, x.dim(), "decomposition H");
    d.C = process_from_json(field(j, "C", "decomposition"), tree, 1, "decomposition C");
    return d;
}

std::string decomposition_csv(const Decomposition& d) {
    const EventTree& tree = d.V.tree();
    const std::size_t dim = d.H.dim();
    std::ostringstream out;
    out << "node,time,V";
    for (std::size_t i = 0; i < dim; ++i)
        out << ",H_" << i;
    out << ",dC,dB,N_norm\n";
    const auto& g = d.diagnostics;
    for (const auto& n : tree.nodes()) {
        out << n.id << ',' << n.time << ',' << format_double(d.V(n.id));
        for (std::size_t i = 0; i < dim; ++i)
            out << ',' << (n.children.empty() ? std::string() : format_double(d.H(n.id, i)));
        const double dc = n.parent ? d.C(n.id) - d.C(*n.parent) : 0.0;
        out << ',' << format_double(dc) << ',';
        if (g.B)
            out << format_double(n.parent ? (*g.B)(n.id) - (*g.B)(*n.parent) : 0.0);
        out << ',';
        if (g.node_n_norm && !n.children.empty())
            out << format_double((*g.node_n_norm)(n.id, 0));
        out << '\n';
    }
    return out.str();
}

std::string hedge_schedule_csv(const SuperhedgeResult& r) {
    const auto& d = r.decomposition;
    const EventTree& tree = d.V.tree();
    const std::size_t dim = d.H.dim();
    std::ostringstream out;
    out << "node,time,envelope,exercise_value";
    for (std::size_t i = 0; i < dim; ++i)
        out << ",S" << i;
    for (std::size_t i = 0; i < dim; ++i)
        out << ",H_" << i;
    for (std::size_t i = 0; i < dim; ++i)
        out << ",shares" << i;
    out << ",C\n";
    for (const auto& n : tree.nodes()) {
        out << n.id << ',' << n.time << ',' << format_double(r.envelope(n.id)) << ','
            << format_double(r.exercise_value(n.id));
        for (std::size_t i = 0; i < dim; ++i)
            out << ',' << format_double(r.view.S(n.id, i));
        for (std::size_t i = 0; i < dim; ++i)
            out << ',' << (n.children.empty() ? std::string() : format_double(d.H(n.id, i)));
        for (std::size_t i = 0; i < dim; ++i)
            out << ',' << (n.children.empty() ? std::string() : format_double(d.H(n.id, i) / r.view.S(n.id, i)));
        out << ',' << format_double(d.C(n.id)) << '\n';
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// Diffusions

Json diffusion_to_json(const mc::DiffusionSpec& s) {
    ODX_REQUIRE(s.drift.form != mc::CoefficientForm::Custom && s.vol.form != mc::CoefficientForm::Custom,
                "custom coefficient functions cannot be serialized");
    Json out = document();
    out["x0"] = vector_to_json(s.x0);
    Json drift = Json::object();
    if (s.drift.form == mc::CoefficientForm::Const) {
        drift["form"] = "const";
        drift["value"] = vector_to_json(s.drift.a0);
    } else {
        drift["form"] = "linear";
        drift["intercept"] = vector_to_json(s.drift.a0);
        drift["slope"] = vector_to_json(s.drift.a1);
    }
    Json vol = Json::object();
    if (s.vol.form == mc::CoefficientForm::Const) {
        vol["form"] = "const";
        vol["value"] = matrix_to_json(s.vol.s0);
    } else {
        vol["form"] = "linear";
        vol["intercept"] = matrix_to_json(s.vol.s0);
        vol["slope"] = matrix_to_json(s.vol.s1);
    }
    out["drift"] = std::move(drift);
    out["vol"] = std::move(vol);
    out["horizon"] = s.horizon;
    out["steps"] = s.steps;
    out["paths"] = s.paths;
    out["seed"] = s.seed;
    return out;
}

mc::DiffusionSpec diffusion_from_json(const Json& j) {
    require_schema(j, "diffusion");
    mc::DiffusionSpec s;
    s.x0 = vector_from_json(field(j, "x0", "diffusion"), "diffusion x0");

    const Json& drift = field(j, "drift", "diffusion");
    const Json& dform = field(drift, "form", "diffusion drift");
    if (dform == "const") {
        s.drift.form = mc::CoefficientForm::Const;
        s.drift.a0 = vector_from_json(field(drift, "value", "diffusion drift"), "drift value");
    } else if (dform == "linear") {
        s.drift.form = mc::CoefficientForm::Linear;
        s.drift.a0 = vector_from_json(field(drift, "intercept", "diffusion drift"), "drift intercept");
        s.drift.a1 = vector_from_json(field(drift, "slope", "diffusion drift"), "drift slope");
    } else {
        ODX_THROW(InputError, "drift form must be \"const\" or \"linear\" (got " << dform.dump() << ")");
    }

    const Json& vol = field(j, "vol", "diffusion");
    const Json& vform = field(vol, "form", "diffusion vol");
    auto vol_matrix = [&](const char* key) {
        const Json& m = field(vol, key, "diffusion vol");
        // A flat array is read as a diagonal.
        if (m.is_number() || (m.is_array() && !m.empty() && m[0].is_number())) {
            const Eigen::VectorXd diag = vector_from_json(m, std::string("vol ") + key);
            return Eigen::MatrixXd(diag.asDiagonal());
        }
        return matrix_from_json(m, std::string("vol ") + key);
    };
    if (vform == "const") {
        s.vol.form = mc::CoefficientForm::Const;
        s.vol.s0 = vol_matrix("value");
    } else if (vform == "linear") {
        s.vol.form = mc::CoefficientForm::Linear;
        s.vol.s0 = vol_matrix("intercept");
        s.vol.s1 = vol_matrix("slope");
    } else {
        ODX_THROW(InputError, "vol form must be \"const\" or \"linear\" (got " << vform.dump() << ")");
    }

    if (j.contains("horizon"))
        s.horizon = number(j["horizon"], "diffusion horizon");
    if (j.contains("steps"))
        s.steps = unsigned_integer(j["steps"], "diffusion steps");
    if (j.contains("paths"))
        s.paths = unsigned_integer(j["paths"], "diffusion paths");
    if (j.contains("seed"))
        s.seed = unsigned_integer(j["seed"], "diffusion seed");
    s.validate();
    return s;
}

std::string panel_csv(const mc::PathPanel& z, const std::vector<double>& time, std::size_t max_paths) {
    ODX_REQUIRE(z.dim == 1 && time.size() == z.times, "panel and time grid do not match");
    const std::size_t paths = std::min(max_paths, z.paths);
    std::ostringstream out;
    out << "time";
    for (std::size_t p = 0; p < paths; ++p)
        out << ",path_" << p;
    out << '\n';
    for (std::size_t t = 0; t < z.times; ++t) {
        out << format_double(time[t]);
        for (std::size_t p = 0; p < paths; ++p)
            out << ',' << format_double(z(p, t));
        out << '\n';
    }
    return out.str();
}

} // namespace odx::io
