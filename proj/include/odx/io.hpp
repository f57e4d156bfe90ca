#pragma once

// JSON and CSV formats. Every JSON document carries "odx_schema": 1.
// Processes are objects keyed by node id with one array per node.

#include "odx/characteristics.hpp"
#include "odx/deflators.hpp"
#include "odx/mcengine.hpp"
#include "odx/models.hpp"
#include "odx/optdecomp.hpp"
#include "odx/probtree.hpp"
#include "odx/superhedge.hpp"

#include <json.hpp>

#include <string>
#include <string_view>

namespace odx::io {

using Json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

// Throws InputError naming the source with line and column on malformed text.
Json parse_json(std::string_view text, const std::string& source = "<input>");
Json read_json_file(const std::string& path);
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

// Pretty-printed with a trailing newline.
std::string dump(const Json& j);
// 17 significant digits.
std::string format_double(double v);

// A fresh document with the schema field set.
Json document();
void require_schema(const Json& j, const std::string& what);

Json vector_to_json(const Eigen::VectorXd& v);
Eigen::VectorXd vector_from_json(const Json& j, const std::string& what);

Json tree_to_json(const EventTree& tree);
TreePtr tree_from_json(const Json& j);

Json process_to_json(const AdaptedProcess& p);
Json process_to_json(const PredictableProcess& p); // internal nodes only
AdaptedProcess process_from_json(const Json& j, const TreePtr& tree, std::size_t dim, const std::string& what);
PredictableProcess predictable_from_json(const Json& j, const TreePtr& tree, std::size_t dim,
                                         const std::string& what);

Json model_to_json(const Model& m);
Model model_from_json(const Json& j);
// A file path or "builtin:<name>".
Model load_model(const std::string& source);

Json claim_to_json(const Claim& c);
Claim claim_from_json(const Json& j, const AdaptedProcess& x);

// A scalar value process {"V": {...}}.
AdaptedProcess value_from_json(const Json& j, const AdaptedProcess& x);

Json structure_to_json(const StructureReport& r, const Characteristics& ch);
Json family_to_json(const DeflatorFamily& f);

Json decomposition_to_json(const Decomposition& d);
// Reads V0, H, C and V; diagnostics are not restored.
Decomposition decomposition_from_json(const Json& j, const AdaptedProcess& x);
// node,time,V,H...,dC,dB,N
std::string decomposition_csv(const Decomposition& d);
std::string hedge_schedule_csv(const SuperhedgeResult& r);

Json diffusion_to_json(const mc::DiffusionSpec& s);
mc::DiffusionSpec diffusion_from_json(const Json& j);
// time,path_0,... for the first `max_paths` paths of a scalar panel.
std::string panel_csv(const mc::PathPanel& z, const std::vector<double>& time, std::size_t max_paths);

} // namespace odx::io
