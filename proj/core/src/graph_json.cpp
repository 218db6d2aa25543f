#include "esgvi/graph_json.hpp"

#include <fstream>
#include <istream>

#include <json.hpp>

namespace esgvi {
namespace {

using nlohmann::json;

Vec parse_vec(const json& j, const char* what) {
  if (!j.is_array()) throw ConfigError(std::string(what) + ": expected an array");
  Vec v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v[i] = j[i].get<double>();
  return v;
}

Mat parse_mat(const json& j, const char* what) {
  if (!j.is_array() || j.empty() || !j[0].is_array())
    throw ConfigError(std::string(what) + ": expected an array of arrays");
  const std::size_t rows = j.size(), cols = j[0].size();
  Mat m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    if (j[r].size() != cols) throw ConfigError(std::string(what) + ": ragged matrix");
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

std::vector<int> parse_blocks(const json& j, const char* what) {
  // Accepts a single index or a list of indices.
  if (j.is_number_integer()) return {j.get<int>()};
  if (!j.is_array()) throw ConfigError(std::string(what) + ": expected index or list");
  std::vector<int> out;
  for (const auto& e : j) out.push_back(e.get<int>());
  return out;
}

void require_keys(const json& j, std::initializer_list<const char*> keys,
                  const std::string& what) {
  for (const char* k : keys)
    if (!j.contains(k)) throw ConfigError(what + ": missing key \"" + k + "\"");
}

FactorPtr parse_factor(const json& j) {
  if (!j.contains("type")) throw ConfigError("factor: missing \"type\"");
  const std::string type = j.at("type").get<std::string>();
  if (type == "gaussian_prior") {
    require_keys(j, {"block", "mean", "cov"}, type);
    return gaussian_prior_factor(j.at("block").get<int>(), parse_vec(j.at("mean"), "mean"),
                                 parse_mat(j.at("cov"), "cov"));
  }
  if (type == "landmark_prior") {
    require_keys(j, {"block", "mean", "var"}, type);
    return landmark_prior_factor(j.at("block").get<int>(), j.at("mean").get<double>(),
                                 j.at("var").get<double>());
  }
  if (type == "constant_velocity") {
    require_keys(j, {"prev", "next", "dt", "qc"}, type);
    return constant_velocity_factor(parse_blocks(j.at("prev"), "prev"),
                                    parse_blocks(j.at("next"), "next"),
                                    j.at("dt").get<double>(), parse_mat(j.at("qc"), "qc"));
  }
  if (type == "stereo") {
    require_keys(j, {"pos", "landmark", "y", "f", "b", "var"}, type);
    return stereo_factor(j.at("pos").get<int>(), j.at("landmark").get<int>(),
                         j.at("y").get<double>(), j.at("f").get<double>(),
                         j.at("b").get<double>(), j.at("var").get<double>());
  }
  if (type == "stereo_depth") {
    require_keys(j, {"block", "y", "f", "b", "var"}, type);
    return stereo_depth_factor(j.at("block").get<int>(), j.at("y").get<double>(),
                               j.at("f").get<double>(), j.at("b").get<double>(),
                               j.at("var").get<double>());
  }
  if (type == "linear") {
    require_keys(j, {"blocks", "h", "z", "cov"}, type);
    return linear_gaussian_factor(parse_blocks(j.at("blocks"), "blocks"),
                                  parse_mat(j.at("h"), "h"), parse_vec(j.at("z"), "z"),
                                  parse_mat(j.at("cov"), "cov"));
  }
  throw ConfigError("factor: unknown type \"" + type + "\"");
}

}  // namespace

GraphDescription load_graph_json(std::istream& in) {
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("graph JSON parse error: ") + e.what());
  }
  try {
    require_keys(j, {"blocks", "factors"}, "graph");
    std::vector<int> dims;
    for (const auto& d : j.at("blocks")) dims.push_back(d.get<int>());
    GraphDescription out;
    out.graph.layout = BlockLayout(dims);
    for (const auto& fj : j.at("factors")) out.graph.factors.push_back(parse_factor(fj));
    if (j.contains("init")) {
      const auto& init = j.at("init");
      if (init.contains("mean")) out.init_mean = parse_vec(init.at("mean"), "init.mean");
      if (init.contains("precision_diag"))
        out.init_precision_diag = parse_vec(init.at("precision_diag"), "init.precision_diag");
    }
    return out;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("graph JSON: ") + e.what());
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    // Structural problems surfaced by layout or factor construction are
    // configuration mistakes when they come from a description file.
    throw ConfigError(std::string("graph JSON: ") + e.what());
  }
}

GraphDescription load_graph_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open graph file: " + path);
  return load_graph_json(in);
}

}  // namespace esgvi
