#include "odx/cli.hpp"

#include "odx/characteristics.hpp"
#include "odx/deflators.hpp"
#include "odx/error.hpp"
#include "odx/io.hpp"
#include "odx/mcengine.hpp"
#include "odx/models.hpp"
#include "odx/optdecomp.hpp"
#include "odx/superhedge.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <optional>

namespace odx::cli {

namespace {

using io::Json;

struct RunConfig {
    std::string model;
    std::string claim;
    std::string value;
    std::string decomposition;
    std::string spec;
    std::string out_dir;
    std::string route = "both";
    std::uint64_t seed = 0;
    double tol = 1e-10;
    std::size_t extras = 8;
    std::optional<std::size_t> paths;
    std::optional<std::size_t> steps;
    std::size_t csv_paths = 0;
};

constexpr std::size_t kMaxCsvPaths = 1000;

struct Outcome {
    Json doc;
    bool pass = true;
    std::vector<std::pair<std::string, std::string>> files; // name, content
};

void emit(const Outcome& o, const RunConfig& cfg, std::ostream& out) {
    if (!cfg.out_dir.empty()) {
        std::filesystem::create_directories(cfg.out_dir);
        for (const auto& [name, content] : o.files)
            io::write_text_file((std::filesystem::path(cfg.out_dir) / name).string(), content);
    }
    out << io::dump(o.doc);
}

Json arbitrage_witness(const AdaptedProcess& x, NodeId node, const Eigen::VectorXd& zeta) {
    Json w = Json::object();
    w["kind"] = "arbitrage";
    w["node"] = node;
    w["zeta"] = io::vector_to_json(zeta);
    w["gains"] = io::vector_to_json(child_increments(x, node).transpose() * zeta);
    w["probabilities"] = io::vector_to_json(x.tree().child_probabilities(node));
    return w;
}

// ---------------------------------------------------------------------------

Outcome analyze(const RunConfig& cfg) {
    const Model m = io::load_model(cfg.model);
    const Characteristics ch = extract_characteristics(m.X);
    const StructureReport rep = solve_structure(ch, {cfg.tol, 1e6});
    const std::vector<NodeId> lp_nodes = tree_arbitrage_nodes(m.X, cfg.tol);

    Outcome o;
    o.doc = io::structure_to_json(rep, ch);
    o.doc["model"] = m.name;
    o.doc["tree_arbitrage_nodes"] = lp_nodes;
    if (rep.status == StructureStatus::Arbitrage) {
        const NodeId node = rep.arbitrage_nodes.front();
        const Eigen::VectorXd zeta = rep.zeta->at(node);
        Json w = arbitrage_witness(m.X, node, zeta);
        w["kind"] = "drift_outside_covariance_range";
        w["c_zeta"] = io::vector_to_json(ch.c_at(node) * zeta);
        w["a_dot_zeta"] = ch.a.at(node).dot(zeta);
        o.doc["witness"] = std::move(w);
        o.pass = false;
    } else if (!lp_nodes.empty()) {
        const NodeId node = lp_nodes.front();
        o.doc["witness"] = arbitrage_witness(m.X, node, *node_arbitrage(child_increments(m.X, node), cfg.tol));
        o.pass = false;
    }
    o.files.emplace_back("analyze.json", io::dump(o.doc));
    return o;
}

Outcome deflate(const RunConfig& cfg) {
    const Model m = io::load_model(cfg.model);
    const DeflatorFamily fam = build_deflator_family(m.X, cfg.extras, cfg.seed);
    Outcome o;
    o.doc = io::family_to_json(fam);
    o.doc["model"] = m.name;
    o.doc["seed"] = cfg.seed;
    Json checks = Json::array();
    auto check = [&](const std::string& name, const AdaptedProcess& y) {
        const DeflatorCheck c = verify_deflator(y, m.X, cfg.tol);
        Json j = Json::object();
        j["deflator"] = name;
        j["pass"] = c.pass;
        j["drift_y"] = c.drift_y;
        j["drift_yx"] = c.drift_yx;
        j["worst_node"] = c.worst_node;
        checks.push_back(std::move(j));
        if (!c.pass && o.pass) {
            o.pass = false;
            Json w = Json::object();
            w["kind"] = "deflator_drift";
            w["deflator"] = name;
            w["node"] = c.worst_node;
            w["drift_y"] = c.drift_y;
            w["drift_yx"] = c.drift_yx;
            o.doc["witness"] = std::move(w);
        }
    };
    check("Y_hat", fam.Y_hat);
    for (std::size_t i = 0; i < fam.extras.size(); ++i)
        check("extra_" + std::to_string(i), fam.extras[i].Y);
    o.doc["checks"] = std::move(checks);
    o.files.emplace_back("deflate.json", io::dump(o.doc));
    return o;
}

AdaptedProcess value_process(const RunConfig& cfg, const AdaptedProcess& x) {
    ODX_REQUIRE(cfg.claim.empty() != cfg.value.empty(), "give exactly one of --claim or --value");
    if (!cfg.value.empty())
        return io::value_from_json(io::read_json_file(cfg.value), x);
    return snell_envelope(io::claim_from_json(io::read_json_file(cfg.claim), x), x);
}

Json witness_json(const SupermartingaleWitness& w) {
    Json j = Json::object();
    j["kind"] = "supermartingale_violation";
    j["test"] = w.kind;
    j["node"] = w.node;
    j["violation"] = w.violation;
    if (w.kind == "measure")
        j["measure"] = io::vector_to_json(w.measure);
    else
        j["deflator"] = w.deflator;
    return j;
}

Outcome decompose(const RunConfig& cfg) {
    ODX_REQUIRE(cfg.route == "lp" || cfg.route == "kw" || cfg.route == "both",
                "--route must be lp, kw or both (got " << cfg.route << ")");
    const Model m = io::load_model(cfg.model);
    const AdaptedProcess v = value_process(cfg, m.X);
    const DeflatorFamily fam = build_deflator_family(m.X, cfg.extras, cfg.seed);

    Outcome o;
    o.doc = io::document();
    o.doc["model"] = m.name;
    const SupermartingaleCertificate cert = is_supermartingale_under_all(v, m.X, fam, cfg.tol);
    Json cj = Json::object();
    cj["pass"] = cert.pass;
    cj["max_excess"] = cert.max_excess;
    o.doc["supermartingale"] = std::move(cj);
    if (!cert.pass) {
        o.pass = false;
        o.doc["witness"] = witness_json(*cert.witness);
        return o;
    }

    std::vector<Decomposition> decs;
    if (cfg.route != "kw")
        decs.push_back(decompose_lp(v, m.X, {cfg.tol, std::nullopt}));
    if (cfg.route != "lp")
        decs.push_back(decompose_kw(v, m.X, fam, {cfg.tol}));
    Json arr = Json::array();
    for (const auto& d : decs) {
        arr.push_back(io::decomposition_to_json(d));
        const std::string stem = std::string("decomposition_") + (d.route == Route::LP ? "lp" : "kw");
        o.files.emplace_back(stem + ".json", io::dump(io::decomposition_to_json(d)));
        o.files.emplace_back(stem + ".csv", io::decomposition_csv(d));
    }
    o.doc["decompositions"] = std::move(arr);
    if (decs.size() == 2) {
        const UniquenessReport u = check_uniqueness(decs[0], decs[1], m.X);
        Json uj = Json::object();
        uj["pass"] = u.pass;
        uj["max_dC"] = u.max_dC;
        uj["max_gain"] = u.max_gain;
        uj["max_dH"] = u.max_dH;
        o.doc["uniqueness"] = std::move(uj);
        if (!u.pass) {
            o.pass = false;
            Json w = Json::object();
            w["kind"] = "route_disagreement";
            w["max_dC"] = u.max_dC;
            w["max_gain"] = u.max_gain;
            o.doc["witness"] = std::move(w);
        }
    }
    return o;
}

Outcome superhedge_cmd(const RunConfig& cfg) {
    ODX_REQUIRE(!cfg.claim.empty(), "superhedge needs --claim");
    const Model m = io::load_model(cfg.model);
    const Claim claim = io::claim_from_json(io::read_json_file(cfg.claim), m.X);
    const SuperhedgeResult r = superhedge(claim, m.X);
    Outcome o;
    o.doc = io::document();
    o.doc["model"] = m.name;
    o.doc["price"] = r.price;
    o.doc["root_hedge"] = io::vector_to_json(r.decomposition.H.at(0));
    o.doc["envelope"] = io::process_to_json(r.envelope);
    o.doc["H"] = io::process_to_json(r.decomposition.H);
    o.doc["C"] = io::process_to_json(r.decomposition.C);
    o.doc["numeraire_shares"] = io::process_to_json(r.view.shares);
    o.doc["duality_gap"] = r.decomposition.diagnostics.duality_gap;
    o.doc["min_dC"] = r.decomposition.diagnostics.min_dC;
    o.files.emplace_back("superhedge.json", io::dump(o.doc));
    o.files.emplace_back("hedge_schedule.csv", io::hedge_schedule_csv(r));
    return o;
}

Json martingale_json(const mc::MartingaleReport& r) {
    Json j = Json::object();
    j["pass"] = r.pass;
    j["max_abs_t"] = r.max_abs_t;
    j["paths_used"] = r.paths_used;
    Json b = Json::array();
    for (const auto& s : r.buckets) {
        Json e = Json::object();
        e["t0"] = s.t0;
        e["t1"] = s.t1;
        e["mean"] = s.mean;
        e["se"] = s.se;
        e["t_stat"] = s.t_stat;
        b.push_back(std::move(e));
    }
    j["buckets"] = std::move(b);
    return j;
}

Outcome simulate_cmd(const RunConfig& cfg) {
    mc::DiffusionSpec spec = io::diffusion_from_json(io::read_json_file(cfg.spec));
    if (cfg.paths)
        spec.paths = *cfg.paths;
    if (cfg.steps)
        spec.steps = *cfg.steps;
    spec.seed = cfg.seed;
    spec.validate();
    ODX_REQUIRE(cfg.csv_paths <= kMaxCsvPaths, "--csv-paths is capped at " << kMaxCsvPaths);

    const mc::PathEnsemble ens = mc::deflate_paths(mc::simulate(spec), spec, cfg.tol);
    const std::size_t n = ens.steps();

    Outcome o;
    o.doc = io::document();
    o.doc["diffusion"] = io::diffusion_to_json(spec);
    const mc::PathPanel y = ens.Y_hat();
    const mc::SampleStats ys = mc::sample_stats(y, n, ens.aborted);
    Json yj = Json::object();
    yj["mean"] = ys.mean;
    yj["se"] = ys.se;
    yj["z"] = ys.se > 0.0 ? (ys.mean - 1.0) / ys.se : 0.0;
    yj["pass"] = std::abs(ys.mean - 1.0) <= 3.0 * ys.se;
    o.doc["terminal_deflator"] = yj;
    o.doc["aborted_paths"] = ens.abort_count;
    o.doc["abort_fraction"] = ens.abort_fraction();
    o.doc["excessive_aborts"] = ens.excessive_aborts;
    o.doc["rho_min"] = io::vector_to_json(ens.rho_min);
    o.doc["rho_max"] = io::vector_to_json(ens.rho_max);

    Json tests = Json::object();
    const auto ytest = mc::martingale_test(y, ens.aborted);
    tests["Y_hat"] = martingale_json(ytest);
    bool pass = ytest.pass && !ens.excessive_aborts;
    std::optional<Json> witness;
    if (!ytest.pass)
        witness = Json{{"kind", "martingale_test"}, {"process", "Y_hat"}, {"max_abs_t", ytest.max_abs_t}};
    for (std::size_t i = 0; i < spec.dim(); ++i) {
        const auto t = mc::martingale_test(ens.deflated_component(i), ens.aborted);
        const std::string name = "Y_hat*X" + std::to_string(i);
        tests[name] = martingale_json(t);
        if (!t.pass && !witness)
            witness = Json{{"kind", "martingale_test"}, {"process", name}, {"max_abs_t", t.max_abs_t}};
        pass = pass && t.pass;
    }
    o.doc["martingale_tests"] = std::move(tests);
    if (ens.excessive_aborts && !witness)
        witness = Json{{"kind", "excessive_aborts"}, {"abort_fraction", ens.abort_fraction()}};

    if (spec.dim() == 1) {
        const double rho0 = ens.rho_min(0);
        const double coarse = mc::matched_binomial_rho(spec, spec.steps);
        const double fine = mc::matched_binomial_rho(spec, 2 * spec.steps);
        Json b = Json::object();
        b["rho_continuous"] = rho0;
        b["rho_tree"] = coarse;
        b["rho_tree_half_step"] = fine;
        const double g1 = std::abs(coarse - rho0), g2 = std::abs(fine - rho0);
        b["gap_ratio"] = g2 > 0.0 ? Json(g1 / g2) : Json(nullptr);
        if (spec.constant_coefficients())
            o.doc["matched_binomial"] = std::move(b);
    }
    o.pass = pass;
    if (witness)
        o.doc["witness"] = *witness;

    o.files.emplace_back("simulate.json", io::dump(o.doc));
    if (cfg.csv_paths > 0) {
        for (std::size_t i = 0; i < spec.dim(); ++i)
            o.files.emplace_back("X" + std::to_string(i) + ".csv",
                                 io::panel_csv(ens.component(i), ens.time, cfg.csv_paths));
        o.files.emplace_back("V_hat.csv", io::panel_csv(ens.V_hat, ens.time, cfg.csv_paths));
    }
    return o;
}

Outcome verify(const RunConfig& cfg) {
    ODX_REQUIRE(!cfg.decomposition.empty(), "verify needs --decomposition");
    const Model m = io::load_model(cfg.model);
    const Decomposition d = io::decomposition_from_json(io::read_json_file(cfg.decomposition), m.X);
    const EventTree& tree = m.X.tree();
    const double tol = std::max(cfg.tol, 1e-9);

    Outcome o;
    o.doc = io::document();
    o.doc["model"] = m.name;
    std::optional<Json> witness;
    auto fail = [&](Json w) {
        if (!witness)
            witness = std::move(w);
    };

    if (std::abs(d.V0 - d.V(0)) > tol)
        fail(Json{{"kind", "initial_value"}, {"node", 0}, {"V0", d.V0}, {"V", d.V(0)}});
    if (std::abs(d.C(0)) > tol)
        fail(Json{{"kind", "consumption_start"}, {"node", 0}, {"C", d.C(0)}});
    double min_dc = 0.0;
    for (const auto& n : tree.nodes()) {
        if (!n.parent)
            continue;
        const double dc = d.C(n.id) - d.C(*n.parent);
        min_dc = std::min(min_dc, dc);
        if (dc < -tol)
            fail(Json{{"kind", "consumption_decrease"}, {"node", n.id}, {"dC", dc}});
    }
    const AdaptedProcess rec = reconstruct(d.V0, d.H, d.C, m.X);
    double rec_err = 0.0;
    for (std::size_t i = 0; i < tree.size(); ++i) {
        const double e = std::abs(rec(i) - d.V(i));
        rec_err = std::max(rec_err, e);
        if (e > tol)
            fail(Json{{"kind", "reconstruction"}, {"node", i}, {"expected", d.V(i)}, {"reconstructed", rec(i)}});
    }
    const SupermartingaleCertificate cert =
        is_supermartingale_under_all(d.V, m.X, SupermartingaleOptions{tol, cfg.extras, cfg.seed});
    if (!cert.pass)
        fail(witness_json(*cert.witness));

    o.doc["reconstruction_error"] = rec_err;
    o.doc["min_dC"] = min_dc;
    o.doc["supermartingale"] = cert.pass;
    o.pass = !witness;
    if (witness)
        o.doc["witness"] = *witness;
    o.files.emplace_back("verify.json", io::dump(o.doc));
    return o;
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Optional decomposition, deflators and superhedging on event trees and diffusions", "odx"};
    app.require_subcommand(1);
    RunConfig cfg;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--out", cfg.out_dir, "Directory for JSON and CSV outputs");
        sub->add_option("--tol", cfg.tol, "Numerical tolerance")->check(CLI::PositiveNumber);
        sub->add_option("--seed", cfg.seed, "64-bit unsigned seed");
    };
    auto model_arg = [&](CLI::App* sub) {
        sub->add_option("model", cfg.model, "Model JSON file or builtin:B1|T1|A1|PUT2")->required();
    };

    auto* analyze_cmd = app.add_subcommand("analyze", "Characteristics, structure condition and arbitrage check");
    model_arg(analyze_cmd);
    common(analyze_cmd);

    auto* deflate_cmd = app.add_subcommand("deflate", "Numeraire portfolio and a family of deflators");
    model_arg(deflate_cmd);
    common(deflate_cmd);
    deflate_cmd->add_option("--extras", cfg.extras, "Number of jump-martingale deflators");

    auto* decompose_cmd = app.add_subcommand("decompose", "Optional decomposition of a value process");
    model_arg(decompose_cmd);
    common(decompose_cmd);
    decompose_cmd->add_option("--claim", cfg.claim, "Claim JSON; decomposes its Snell envelope");
    decompose_cmd->add_option("--value", cfg.value, "Value process JSON {\"V\": {...}}");
    decompose_cmd->add_option("--route", cfg.route, "lp, kw or both");
    decompose_cmd->add_option("--extras", cfg.extras, "Deflators sampled by the supermartingale test");

    auto* superhedge_sub = app.add_subcommand("superhedge", "Superhedging price and hedge schedule");
    model_arg(superhedge_sub);
    common(superhedge_sub);
    superhedge_sub->add_option("--claim", cfg.claim, "Claim JSON")->required();

    auto* simulate_sub = app.add_subcommand("simulate", "Monte Carlo deflator and martingale checks");
    simulate_sub->add_option("diffusion", cfg.spec, "Diffusion JSON")->required();
    common(simulate_sub);
    simulate_sub->add_option("--paths", cfg.paths, "Number of paths")->check(CLI::PositiveNumber);
    simulate_sub->add_option("--steps", cfg.steps, "Number of time steps")->check(CLI::PositiveNumber);
    simulate_sub->add_option("--csv-paths", cfg.csv_paths, "Paths written to per-path CSV files");

    auto* verify_sub = app.add_subcommand("verify", "Check a decomposition file against a model");
    model_arg(verify_sub);
    common(verify_sub);
    verify_sub->add_option("--decomposition", cfg.decomposition, "Decomposition JSON")->required();
    verify_sub->add_option("--extras", cfg.extras, "Deflators sampled by the supermartingale test");

    std::vector<const char*> argv;
    for (const auto& a : args)
        argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kSuccess : kInputError;
    }

    try {
        Outcome o;
        if (analyze_cmd->parsed())
            o = analyze(cfg);
        else if (deflate_cmd->parsed())
            o = deflate(cfg);
        else if (decompose_cmd->parsed())
            o = decompose(cfg);
        else if (superhedge_sub->parsed())
            o = superhedge_cmd(cfg);
        else if (simulate_sub->parsed())
            o = simulate_cmd(cfg);
        else
            o = verify(cfg);
        o.doc["result"] = o.pass ? "PASS" : "FAIL";
        emit(o, cfg, out);
        if (!o.pass) {
            err << "odx: FAIL";
            if (o.doc.contains("witness"))
                err << " " << o.doc["witness"].dump();
            err << "\n";
        }
        return o.pass ? kSuccess : kMathFail;
    } catch (const ArbitrageError& e) {
        Outcome o;
        o.doc = io::document();
        o.doc["result"] = "FAIL";
        Json w = Json::object();
        w["kind"] = "arbitrage";
        w["node"] = e.node();
        w["message"] = e.what();
        try {
            const Model m = io::load_model(cfg.model);
            if (auto zeta = node_arbitrage(child_increments(m.X, e.node())))
                w = arbitrage_witness(m.X, e.node(), *zeta);
        } catch (const std::exception&) {
        }
        o.doc["witness"] = std::move(w);
        emit(o, cfg, out);
        err << "odx: FAIL: " << e.what() << "\n";
        return kMathFail;
    } catch (const SimulationError& e) {
        err << "odx: simulation error at path " << e.path() << ", step " << e.step() << ": " << e.what() << "\n";
        return kInputError;
    } catch (const InputError& e) {
        err << "odx: input error: " << e.what() << "\n";
        return kInputError;
    } catch (const nlohmann::json::exception& e) {
        err << "odx: input error: " << e.what() << "\n";
        return kInputError;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "odx: " << e.what() << "\n";
        return kInputError;
    } catch (const Error& e) {
        err << "odx: error: " << e.what() << "\n";
        return kInputError;
    }
}

} // namespace odx::cli
