#pragma once

#include <json.hpp>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "kinhom/effective.hpp"
#include "kinhom/errors.hpp"

namespace kinhom {

/// Bundle on disk: `<stem>.json` describes every array (name, shape, offset)
/// and `<stem>.bin` holds the raw little-endian doubles, so a round trip is
/// exact.
inline constexpr int kBundleSchema = 1;

namespace detail {

struct BlobWriter {
  std::vector<double> data;
  nlohmann::json index = nlohmann::json::object();
  void put(const std::string& name, const Mat& m) {
    index[name] = {{"rows", m.rows()}, {"cols", m.cols()}, {"offset", data.size()}};
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      for (Eigen::Index r = 0; r < m.rows(); ++r) data.push_back(m(r, c));
  }
};

struct BlobReader {
  const std::vector<double>& data;
  const nlohmann::json& index;
  Mat get(const std::string& name) const {
    if (!index.contains(name)) throw Error("bundle is missing array '" + name + "'");
    const auto& e = index.at(name);
    const Eigen::Index rows = e.at("rows"), cols = e.at("cols");
    const size_t off = e.at("offset");
    if (off + size_t(rows * cols) > data.size()) throw Error("bundle blob is truncated");
    Mat m(rows, cols);
    size_t i = off;
    for (Eigen::Index c = 0; c < cols; ++c)
      for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = data[i++];
    return m;
  }
};

}  // namespace detail

inline void save_bundle(const ExpansionBundle& b, const std::string& stem) {
  detail::BlobWriter w;
  w.put("v_nodes", b.v_nodes);
  w.put("v_weights", b.v_weights);
  w.put("psi_star", b.psi_star);
  w.put("psi", b.psi);
  w.put("rho0", b.rho0);
  w.put("rho2", b.rho2);
  w.put("psi0", b.psi0);
  w.put("psi1", b.psi1);
  w.put("psi2", b.psi2);
  w.put("theta_m1", b.theta_m1);
  w.put("theta_0", b.theta_0);
  w.put("chi_m1", b.chi_m1);
  w.put("chi0", b.chi0);
  w.put("theta_s_m1", b.theta_s_m1);
  w.put("theta_s_0", b.theta_s_0);
  w.put("theta_s_1", b.theta_s_1);
  w.put("chi_s_m1", b.chi_s_m1);
  w.put("chi_s0_bar", b.chi_s0_bar);
  w.put("chi_s0", b.chi_s0);
  w.put("chi_s1", b.chi_s1);
  w.put("Dtensor", b.Dtensor);
  w.put("D1tensor", b.D1tensor);
  w.put("Dtensor_theorem", b.Dtensor_theorem);
  w.put("U_field", b.U_field);
  Mat Df(b.D_field.size(), b.dim * b.dim);
  for (size_t j = 0; j < b.D_field.size(); ++j)
    for (int a = 0; a < b.dim; ++a)
      for (int c = 0; c < b.dim; ++c) Df(j, a * b.dim + c) = b.D_field[j](a, c);
  w.put("D_field", Df);

  nlohmann::json head;
  head["schema"] = kBundleSchema;
  head["dim"] = b.dim;
  head["n_cells"] = b.n_cells;
  head["n_v"] = b.n_v;
  head["meta"] = b.meta;
  head["arrays"] = w.index;
  head["blob_doubles"] = w.data.size();
  std::vector<std::vector<double>> D(b.dim, std::vector<double>(b.dim));
  for (int a = 0; a < b.dim; ++a)
    for (int c = 0; c < b.dim; ++c) D[a][c] = b.Dtensor(a, c);
  head["Dtensor"] = D;

  std::ofstream js(stem + ".json");
  if (!js) throw Error("cannot write '" + stem + ".json'");
  js << head.dump(2) << "\n";
  std::ofstream bin(stem + ".bin", std::ios::binary);
  if (!bin) throw Error("cannot write '" + stem + ".bin'");
  bin.write(reinterpret_cast<const char*>(w.data.data()), std::streamsize(w.data.size() * sizeof(double)));
}

inline ExpansionBundle load_bundle(const std::string& stem) {
  std::ifstream js(stem + ".json");
  if (!js) throw ConfigError("cannot open bundle '" + stem + ".json'");
  nlohmann::json head;
  try {
    js >> head;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad bundle header: ") + e.what());
  }
  if (head.value("schema", 0) != kBundleSchema) throw ConfigError("unsupported bundle schema");
  const size_t nd = head.at("blob_doubles");
  std::vector<double> data(nd);
  std::ifstream bin(stem + ".bin", std::ios::binary);
  if (!bin) throw ConfigError("cannot open bundle '" + stem + ".bin'");
  bin.read(reinterpret_cast<char*>(data.data()), std::streamsize(nd * sizeof(double)));
  if (bin.gcount() != std::streamsize(nd * sizeof(double))) throw Error("bundle blob is truncated");

  const detail::BlobReader r{data, head.at("arrays")};
  ExpansionBundle b;
  b.dim = head.at("dim");
  b.n_cells = head.at("n_cells");
  b.n_v = head.at("n_v");
  b.meta = head.at("meta").get<std::map<std::string, std::string>>();
  b.v_nodes = r.get("v_nodes");
  b.v_weights = r.get("v_weights");
  b.psi_star = r.get("psi_star");
  b.psi = r.get("psi");
  b.rho0 = r.get("rho0");
  b.rho2 = r.get("rho2");
  b.psi0 = r.get("psi0");
  b.psi1 = r.get("psi1");
  b.psi2 = r.get("psi2");
  b.theta_m1 = r.get("theta_m1");
  b.theta_0 = r.get("theta_0");
  b.chi_m1 = r.get("chi_m1");
  b.chi0 = r.get("chi0");
  b.theta_s_m1 = r.get("theta_s_m1");
  b.theta_s_0 = r.get("theta_s_0");
  b.theta_s_1 = r.get("theta_s_1");
  b.chi_s_m1 = r.get("chi_s_m1");
  b.chi_s0_bar = r.get("chi_s0_bar");
  b.chi_s0 = r.get("chi_s0");
  b.chi_s1 = r.get("chi_s1");
  b.Dtensor = r.get("Dtensor");
  b.D1tensor = r.get("D1tensor");
  b.Dtensor_theorem = r.get("Dtensor_theorem");
  b.U_field = r.get("U_field");
  const Mat Df = r.get("D_field");
  b.D_field.assign(Df.rows(), Mat(b.dim, b.dim));
  for (Eigen::Index j = 0; j < Df.rows(); ++j)
    for (int a = 0; a < b.dim; ++a)
      for (int c = 0; c < b.dim; ++c) b.D_field[j](a, c) = Df(j, a * b.dim + c);
  return b;
}

}  // namespace kinhom
