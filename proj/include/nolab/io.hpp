#pragma once

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "nolab/layers.hpp"
#include "nolab/monotone.hpp"

namespace nolab {

using json = nlohmann::json;

constexpr int kSchemaVersion = 1;

/// Malformed or unknown configuration content.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// validation helpers

inline void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key())) throw ConfigError(where + ": unknown key '" + it.key() + "'");
}

inline const json& require(const json& j, const std::string& key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError(where + ": missing key '" + key + "'");
  return j.at(key);
}

template <class T>
T get_or(const json& j, const std::string& key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

inline void check_schema(const json& j, const std::string& where) {
  const int v = require(j, "schema", where).get<int>();
  if (v != kSchemaVersion) throw ConfigError(where + ": unsupported schema " + std::to_string(v));
}

inline std::uint64_t require_seed(const json& j, const std::string& where) {
  if (!j.contains("seed")) throw ConfigError(where + ": every config needs an explicit seed");
  return j.at("seed").get<std::uint64_t>();
}

// ---------------------------------------------------------------------------
// dense values

inline json to_json(const Vec& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

inline Vec vec_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

/// Row-major nested arrays.
inline json to_json(const Mat& A) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < A.rows(); ++i) rows.push_back(to_json(Vec(A.row(i).transpose())));
  return rows;
}

inline Mat mat_from_json(const json& j, Eigen::Index cols_if_empty = 0) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  const auto n = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index m = n ? static_cast<Eigen::Index>(rows[0].size()) : cols_if_empty;
  Mat A(n, m);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (static_cast<Eigen::Index>(rows[i].size()) != m) throw ConfigError("matrix rows differ in length");
    for (Eigen::Index k = 0; k < m; ++k) A(i, k) = rows[i][k];
  }
  return A;
}

// ---------------------------------------------------------------------------
// spaces, activations

inline json to_json(const BasisSpec& s) {
  return {{"basis", to_string(s.kind)}, {"ambient_dim", s.ambient_dim}, {"quadrature", s.quadrature}};
}

inline BasisSpec basis_spec_from_json(const json& j) {
  check_keys(j, {"basis", "ambient_dim", "quadrature"}, "space");
  BasisSpec s;
  s.kind = basis_kind_from_string(get_or<std::string>(j, "basis", "fourier"));
  s.ambient_dim = require(j, "ambient_dim", "space").get<int>();
  s.quadrature = get_or<int>(j, "quadrature", 0);
  return s;
}

inline std::shared_ptr<const Space> space_from_json(const json& j) {
  try {
    return std::make_shared<const Space>(basis_spec_from_json(j));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("space: ") + e.what());
  }
}

inline json to_json(const PointwiseActivation& a) {
  json j{{"kind", a.name()}};
  if (a.kind == PointwiseActivation::Kind::leaky_relu) j["slope"] = a.slope;
  if (a.kind == PointwiseActivation::Kind::smooth_tanh) {
    j["slope"] = a.slope;
    j["amp"] = a.amp;
  }
  return j;
}

inline PointwiseActivation activation_from_json(const json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "identity") return PointwiseActivation::identity();
    if (s == "relu") return PointwiseActivation::relu();
    if (s == "recu") return PointwiseActivation::recu();
    throw ConfigError("activation '" + s + "' needs parameters");
  }
  check_keys(j, {"kind", "slope", "amp"}, "activation");
  const auto k = require(j, "kind", "activation").get<std::string>();
  if (k == "identity") return PointwiseActivation::identity();
  if (k == "relu") return PointwiseActivation::relu();
  if (k == "recu") return PointwiseActivation::recu();
  if (k == "leaky_relu") return PointwiseActivation::leaky_relu(require(j, "slope", "leaky_relu").get<double>());
  if (k == "smooth_tanh")
    return PointwiseActivation::smooth_tanh(get_or<double>(j, "slope", 0.0), get_or<double>(j, "amp", 1.0));
  throw ConfigError("unknown activation kind: " + k);
}

inline json to_json(const CoordinateActivation& a) {
  if (a.groupsort) return "groupsort2";
  return json{{"entrywise", to_json(a.pointwise)}};
}

inline CoordinateActivation coordinate_activation_from_json(const json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "groupsort2") return CoordinateActivation::groupsort2();
    return CoordinateActivation::entrywise(activation_from_json(j));
  }
  check_keys(j, {"entrywise"}, "coordinate activation");
  return CoordinateActivation::entrywise(activation_from_json(require(j, "entrywise", "coordinate activation")));
}

// ---------------------------------------------------------------------------
// operators, networks, layers

inline json to_json(const FiniteRankOperator& T) {
  return {{"kind", "finite_rank"}, {"omegas", to_json(T.omegas())}, {"psi", to_json(Mat(T.psi().transpose()))},
          {"phi", to_json(Mat(T.phi().transpose()))}};
}

/// Explicit columns (stored as rows of "psi"/"phi") or seeded random orthonormal families.
inline FiniteRankOperator finite_rank_from_json(const json& j, int M) {
  check_keys(j, {"kind", "omegas", "psi", "phi", "psi_seed", "phi_seed", "smoothness"}, "finite_rank");
  if (get_or<std::string>(j, "kind", "finite_rank") != "finite_rank") throw ConfigError("operator kind must be finite_rank");
  const Vec om = vec_from_json(require(j, "omegas", "finite_rank"));
  const int r = static_cast<int>(om.size());
  const double smooth = get_or<double>(j, "smoothness", 1.0);
  auto family = [&](const char* key, const char* seed_key) -> Mat {
    if (j.contains(key)) return mat_from_json(j.at(key), M).transpose();
    if (j.contains(seed_key)) return random_orthonormal(M, r, smooth, j.at(seed_key).get<std::uint64_t>());
    throw ConfigError(std::string("finite_rank: need '") + key + "' or '" + seed_key + "'");
  };
  try {
    return FiniteRankOperator(om, family("psi", "psi_seed"), family("phi", "phi_seed"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("finite_rank: ") + e.what());
  }
}

inline json to_json(const CoordinateNetwork& net) {
  json W = json::array(), b = json::array();
  for (const auto& w : net.weights()) W.push_back(to_json(w));
  for (const auto& c : net.biases()) b.push_back(to_json(c));
  return {{"weights", W}, {"biases", b}, {"activation", to_json(net.activation())}};
}

inline CoordinateNetwork network_from_json(const json& j) {
  check_keys(j, {"weights", "biases", "activation"}, "network");
  std::vector<Mat> W;
  std::vector<Vec> b;
  for (const auto& w : require(j, "weights", "network")) W.push_back(mat_from_json(w));
  for (const auto& c : require(j, "biases", "network")) b.push_back(vec_from_json(c));
  try {
    return CoordinateNetwork(W, b, coordinate_activation_from_json(require(j, "activation", "network")));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("network: ") + e.what());
  }
}

inline json to_json(const Nonlinearity& G) {
  switch (G.kind()) {
    case Nonlinearity::Kind::zero: return {{"kind", "zero"}};
    case Nonlinearity::Kind::nemytskii:
      return {{"kind", "nemytskii"}, {"activation", to_json(G.sigma())}, {"scale", G.scale()}};
    case Nonlinearity::Kind::coordinate_net: return {{"kind", "coordinate_net"}, {"network", to_json(G.network())}};
    case Nonlinearity::Kind::affine_contraction:
      return {{"kind", "affine"}, {"A", to_json(G.affine_matrix())}, {"b", to_json(G.affine_offset())}};
  }
  return {};
}

inline Nonlinearity nonlinearity_from_json(const json& j, const std::shared_ptr<const Space>& space) {
  check_keys(j, {"kind", "activation", "scale", "network", "input_radius", "A", "b"}, "nonlinearity");
  const auto k = require(j, "kind", "nonlinearity").get<std::string>();
  if (k == "zero") return Nonlinearity::zero();
  if (k == "nemytskii")
    return Nonlinearity::nemytskii(space, activation_from_json(require(j, "activation", "nemytskii")),
                                   get_or<double>(j, "scale", 1.0));
  if (k == "coordinate_net")
    return Nonlinearity::coordinate_net(network_from_json(require(j, "network", "coordinate_net")),
                                        get_or<double>(j, "input_radius", 0.0));
  if (k == "affine")
    return Nonlinearity::affine_contraction(mat_from_json(require(j, "A", "affine")), vec_from_json(require(j, "b", "affine")));
  throw ConfigError("unknown nonlinearity kind: " + k);
}

inline json to_json(const LayerSpec& s) {
  return {{"rank", s.rank},       {"decay", s.decay},     {"lip_G", s.lip_G},
          {"g", to_string(s.g)},  {"t1_norm", s.t1_norm}, {"t2_norm", s.t2_norm},
          {"psi_smoothness", s.psi_smoothness}, {"net_width_factor", s.net_width_factor}};
}

inline LayerSpec layer_spec_from_json(const json& j) {
  check_keys(j, {"rank", "decay", "lip_G", "g", "t1_norm", "t2_norm", "psi_smoothness", "net_width_factor"},
             "layer generator");
  LayerSpec s;
  s.rank = get_or(j, "rank", s.rank);
  s.decay = get_or(j, "decay", s.decay);
  s.lip_G = get_or(j, "lip_G", s.lip_G);
  if (j.contains("g")) s.g = gkind_from_string(j.at("g").get<std::string>());
  s.t1_norm = get_or(j, "t1_norm", s.t1_norm);
  s.t2_norm = get_or(j, "t2_norm", s.t2_norm);
  s.psi_smoothness = get_or(j, "psi_smoothness", s.psi_smoothness);
  s.net_width_factor = get_or(j, "net_width_factor", s.net_width_factor);
  return s;
}

/// Explicit layer document.
inline json to_json(const NeuralOperatorLayer& L, const BasisSpec& space) {
  return {{"schema", kSchemaVersion}, {"kind", "layer"},        {"space", to_json(space)},
          {"T1", to_json(L.T1())},    {"T2", to_json(L.T2())},  {"G", to_json(L.G())}};
}

/// A layer document is either explicit (T1, T2, G) or a seeded generator spec.
inline NeuralOperatorLayer layer_from_json(const json& j, std::shared_ptr<const Space> fallback_space = nullptr) {
  check_keys(j, {"schema", "kind", "space", "T1", "T2", "G", "generator", "seed"}, "layer");
  if (j.contains("schema")) check_schema(j, "layer");
  if (get_or<std::string>(j, "kind", "layer") != "layer") throw ConfigError("layer: kind must be 'layer'");
  auto space = j.contains("space") ? space_from_json(j.at("space")) : fallback_space;
  if (!space) throw ConfigError("layer: missing space");
  try {
    if (j.contains("generator"))
      return make_layer(require_seed(j, "layer"), layer_spec_from_json(j.at("generator")), space);
    return NeuralOperatorLayer(finite_rank_from_json(require(j, "T1", "layer"), space->dim()),
                               finite_rank_from_json(require(j, "T2", "layer"), space->dim()),
                               nonlinearity_from_json(require(j, "G", "layer"), space));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("layer: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// residual chains

inline json to_json(const ResidualChain& c, std::optional<double> delta = std::nullopt) {
  json blocks = json::array();
  for (const auto& b : c.blocks()) blocks.push_back(to_json(b));
  json j{{"schema", kSchemaVersion}, {"kind", "residual_chain"}, {"N", c.N()}, {"blocks", blocks}};
  if (delta) j["delta"] = *delta;
  return j;
}

struct ChainDocument {
  ResidualChain chain;
  std::optional<double> delta;
  std::optional<double> ball_radius;
  int ambient_dim = 0;  // 0 means N
  std::string A = "identity";  // identity | reflection
};

/// Explicit blocks, or a generator {"blocks": T, "widths": [...], "activation": ..., "bias_scale": ...}.
inline ChainDocument chain_from_json(const json& j) {
  check_keys(j, {"schema", "kind", "N", "blocks", "delta", "ball_radius", "generator", "seed", "ambient_dim", "A"},
             "chain");
  if (j.contains("schema")) check_schema(j, "chain");
  ChainDocument doc;
  doc.delta = j.contains("delta") ? std::optional<double>(j.at("delta").get<double>()) : std::nullopt;
  doc.ball_radius = j.contains("ball_radius") ? std::optional<double>(j.at("ball_radius").get<double>()) : std::nullopt;
  doc.ambient_dim = get_or(j, "ambient_dim", 0);
  doc.A = get_or<std::string>(j, "A", "identity");
  if (doc.A != "identity" && doc.A != "reflection") throw ConfigError("chain: A must be identity or reflection");
  const int N = require(j, "N", "chain").get<int>();
  std::vector<CoordinateNetwork> blocks;
  if (j.contains("generator")) {
    const auto& g = j.at("generator");
    check_keys(g, {"blocks", "widths", "activation", "bias_scale", "target"}, "chain generator");
    const auto seed = require_seed(j, "chain");
    const int T = require(g, "blocks", "chain generator").get<int>();
    auto widths = get_or<std::vector<int>>(g, "widths", {N, 4 * N, 4 * N, N});
    const auto act = coordinate_activation_from_json(get_or<json>(g, "activation", json("groupsort2")));
    const double target = get_or<double>(g, "target", doc.delta.value_or(0.5));
    for (int t = 0; t < T; ++t)
      blocks.push_back(random_network(widths, act, target, seed + static_cast<std::uint64_t>(t),
                                      get_or<double>(g, "bias_scale", 0.2)));
  } else {
    for (const auto& b : require(j, "blocks", "chain")) blocks.push_back(network_from_json(b));
  }
  try {
    doc.chain = ResidualChain(N, blocks);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("chain: ") + e.what());
  }
  return doc;
}

// ---------------------------------------------------------------------------
// certificates

inline json to_json(const MonotonicityCertificate& c) {
  json j{{"alpha", c.alpha},
         {"method", to_string(c.method)},
         {"sample_count", c.sample_count},
         {"seed", c.seed},
         {"rejected", c.rejected},
         {"certified", c.certified()},
         {"reason", c.reason}};
  j["ball_radius"] = c.ball_radius ? json(*c.ball_radius) : json(nullptr);
  return j;
}

/// FNV-1a of the canonical dump, used to reference certificates from reports.
inline std::string content_hash(const json& j) {
  const std::string s = j.dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

// ---------------------------------------------------------------------------
// files

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

inline void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << '\n';
}

/// Stream formatting used for every CSV value.
inline std::ostream& csv_precision(std::ostream& os) { return os << std::setprecision(17); }

}  // namespace nolab
