/*
 * Copyright 2026 The vitpipe Authors
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#include "vitpipe/bundle.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <type_traits>

namespace vitpipe {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kFormat = "vitpipe-bundle";
constexpr int kVersion = 1;

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    std::reverse(b, b + sizeof(T));
    std::memcpy(&v, b, sizeof(T));
    return v;
  }
}

template <typename T>
void write_raw(const fs::path& file, const std::vector<T>& values) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw BundleError("cannot write " + file.string());
  for (T v : values) {
    const T le = to_little(v);
    out.write(reinterpret_cast<const char*>(&le), sizeof(T));
  }
  if (!out) throw BundleError("write failed: " + file.string());
}

template <typename T>
std::vector<T> read_raw(const fs::path& file, size_t count) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw BundleError("cannot read " + file.string());
  std::vector<T> values(count);
  for (T& v : values) {
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    v = to_little(v);
  }
  if (!in) throw BundleError("truncated tensor file " + file.string());
  in.peek();
  if (!in.eof()) throw BundleError("tensor file longer than its shape: " + file.string());
  return values;
}

std::string file_stem(const std::string& name) {
  std::string s = name;
  std::replace(s.begin(), s.end(), '/', '_');
  return s;
}

class Writer {
 public:
  explicit Writer(fs::path dir) : dir_(std::move(dir)) {
    fs::create_directories(dir_ / "tensors");
    fs::create_directories(dir_ / "tables");
  }

  json manifest{{"format", kFormat}, {"version", kVersion}};

  void scalar(const std::string& name, double& v) { manifest["scalars"][name] = v; }
  void integer(const std::string& name, int64_t& v) { manifest["scalars"][name] = v; }
  void integer(const std::string& name, int& v) { manifest["scalars"][name] = v; }
  void fixed(const std::string& name, FixedPointScale& s) {
    manifest["fixed_point"][name] = {{"mantissa", s.mantissa}, {"shift", s.shift}};
  }

  void imatrix(const std::string& name, IntMatrix& m, QuantFormat f) {
    const bool narrow = f.bits <= 8;
    const std::string file = "tensors/" + file_stem(name) + ".bin";
    if (narrow) {
      std::vector<int8_t> v(static_cast<size_t>(m.size()));
      for (Eigen::Index i = 0; i < m.size(); ++i) v[static_cast<size_t>(i)] = static_cast<int8_t>(m.data()[i]);
      write_raw(dir_ / file, v);
    } else {
      write_raw(dir_ / file, std::vector<int32_t>(m.data(), m.data() + m.size()));
    }
    manifest["tensors"].push_back({{"name", name},
                                   {"shape", {m.rows(), m.cols()}},
                                   {"dtype", narrow ? "int8" : "int32"},
                                   {"bits", f.bits},
                                   {"signed", f.is_signed},
                                   {"scale", f.scale},
                                   {"zero_point", f.zero_point},
                                   {"file", file}});
  }

  void ivec(const std::string& name, std::vector<int32_t>& v, double scale) {
    IntMatrix m = Eigen::Map<const IntMatrix>(v.data(), 1, static_cast<Eigen::Index>(v.size()));
    imatrix(name, m, QuantFormat{32, true, scale, 0});
  }

  void ivector(const std::string& name, IntVector& v, QuantFormat f) {
    IntMatrix m = v.transpose();
    imatrix(name, m, f);
  }

  void fmatrix(const std::string& name, Eigen::MatrixXd& m) {
    const std::string file = "tensors/" + file_stem(name) + ".bin";
    std::vector<double> v(static_cast<size_t>(m.size()));
    for (Eigen::Index r = 0, k = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) v[static_cast<size_t>(k++)] = m(r, c);
    }
    write_raw(dir_ / file, v);
    manifest["tensors"].push_back(
        {{"name", name}, {"shape", {m.rows(), m.cols()}}, {"dtype", "float64"}, {"file", file}});
  }

  void fvector(const std::string& name, Eigen::VectorXd& v) {
    Eigen::MatrixXd m = v.transpose();
    fmatrix(name, m);
  }

  void table(const std::string& name, LutTable& t) {
    const std::string file = "tables/" + file_stem(name) + ".json";
    write_json(dir_ / file, table_to_json(t));
    manifest["tables"][name] = file;
  }

 private:
  fs::path dir_;
};

class Reader {
 public:
  explicit Reader(fs::path dir) : dir_(std::move(dir)) {
    manifest = read_json(dir_ / "manifest.json");
    if (manifest.value("format", "") != kFormat) throw BundleError("not a model bundle: " + dir_.string());
    if (manifest.value("version", 0) != kVersion) throw BundleError("unsupported bundle version");
    if (manifest.contains("tensors")) {
      for (const json& t : manifest["tensors"]) tensors_[t.at("name").get<std::string>()] = t;
    }
  }

  json manifest;

  void scalar(const std::string& name, double& v) { v = field("scalars", name).get<double>(); }
  void integer(const std::string& name, int64_t& v) { v = field("scalars", name).get<int64_t>(); }
  void integer(const std::string& name, int& v) { v = field("scalars", name).get<int>(); }
  void fixed(const std::string& name, FixedPointScale& s) {
    const json& j = field("fixed_point", name);
    s.mantissa = j.at("mantissa").get<int32_t>();
    s.shift = j.at("shift").get<int>();
  }

  void imatrix(const std::string& name, IntMatrix& m, QuantFormat) {
    const json& t = entry(name);
    const auto [rows, cols] = shape(t);
    const auto count = static_cast<size_t>(rows * cols);
    const std::string dtype = t.at("dtype").get<std::string>();
    m.resize(rows, cols);
    if (dtype == "int8") {
      const auto v = read_raw<int8_t>(dir_ / t.at("file").get<std::string>(), count);
      for (size_t i = 0; i < count; ++i) m.data()[i] = v[i];
    } else if (dtype == "int32") {
      const auto v = read_raw<int32_t>(dir_ / t.at("file").get<std::string>(), count);
      std::copy(v.begin(), v.end(), m.data());
    } else {
      throw BundleError("tensor " + name + ": expected an integer dtype, got " + dtype);
    }
  }

  void ivec(const std::string& name, std::vector<int32_t>& v, double) {
    IntMatrix m;
    imatrix(name, m, {});
    v.assign(m.data(), m.data() + m.size());
  }

  void ivector(const std::string& name, IntVector& v, QuantFormat f) {
    IntMatrix m;
    imatrix(name, m, f);
    v = Eigen::Map<const IntVector>(m.data(), m.size());
  }

  void fmatrix(const std::string& name, Eigen::MatrixXd& m) {
    const json& t = entry(name);
    if (t.at("dtype") != "float64") throw BundleError("tensor " + name + ": expected float64");
    const auto [rows, cols] = shape(t);
    const auto v = read_raw<double>(dir_ / t.at("file").get<std::string>(), static_cast<size_t>(rows * cols));
    m.resize(rows, cols);
    for (Eigen::Index r = 0, k = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = v[static_cast<size_t>(k++)];
    }
  }

  void fvector(const std::string& name, Eigen::VectorXd& v) {
    Eigen::MatrixXd m;
    fmatrix(name, m);
    v = Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
  }

  void table(const std::string& name, LutTable& t) {
    t = table_from_json(read_json(dir_ / field("tables", name).get<std::string>()));
  }

  bool has_tensor(const std::string& name) const { return tensors_.count(name) != 0; }

 private:
  const json& field(const char* section, const std::string& name) const {
    if (!manifest.contains(section) || !manifest[section].contains(name)) {
      throw BundleError(std::string("manifest is missing ") + section + "." + name);
    }
    return manifest[section][name];
  }
  const json& entry(const std::string& name) const {
    const auto it = tensors_.find(name);
    if (it == tensors_.end()) throw BundleError("manifest is missing tensor " + name);
    return it->second;
  }
  static std::pair<Eigen::Index, Eigen::Index> shape(const json& t) {
    const auto s = t.at("shape").get<std::vector<int64_t>>();
    if (s.size() != 2 || s[0] < 0 || s[1] < 0) throw BundleError("bad tensor shape");
    return {s[0], s[1]};
  }

  fs::path dir_;
  std::map<std::string, json> tensors_;
};

template <typename A>
void visit_linear(A& ar, const std::string& p, IntLinear& l, int wbits) {
  ar.scalar(p + ".s_w", l.s_w);
  ar.scalar(p + ".s_in", l.s_in);
  ar.imatrix(p + ".w", l.w, QuantFormat{wbits, true, l.s_w, 0});
  ar.ivec(p + ".b", l.b, l.s_in * l.s_w);
  ar.integer(p + ".tp", l.spec.tp);
  ar.integer(p + ".cip", l.spec.cip);
  ar.integer(p + ".cop", l.spec.cop);
}

template <typename A>
void visit_spec(A& ar, const std::string& p, TiledMatmulSpec& s) {
  ar.integer(p + ".tp", s.tp);
  ar.integer(p + ".cip", s.cip);
  ar.integer(p + ".cop", s.cop);
  s.weights = WeightSource::kDynamic;
}

template <typename A>
void visit_layernorm(A& ar, const std::string& p, LayerNormTables& t) {
  ar.table(p + ".rsqrt", t.rsqrt);
  ar.fixed(p + ".out", t.out);
  ar.integer(p + ".out_bits", t.out_bits);
}

template <typename A>
void visit_model(A& ar, IntModel& m) {
  const int wb = m.cfg.weight_bits;
  ar.scalar("s_img", m.s_img);
  ar.scalar("s_patch_w", m.s_patch_w);
  ar.scalar("s_x0", m.s_x0);
  ar.imatrix("patch.w", m.patch_w, QuantFormat{wb, true, m.s_patch_w, 0});
  ar.imatrix("patch.bias", m.embed_bias, QuantFormat{32, true, m.s_img * m.s_patch_w, 0});
  ar.fixed("patch.requant", m.embed_rq);
  ConvSpec& cs = m.patch_spec;
  ar.integer("patch.kh", cs.kh);
  ar.integer("patch.kw", cs.kw);
  ar.integer("patch.hs", cs.hs);
  ar.integer("patch.ws", cs.ws);
  ar.integer("patch.hip", cs.hip);
  ar.integer("patch.wip", cs.wip);
  ar.integer("patch.cip", cs.cip);
  ar.integer("patch.cop", cs.cop);
  if (m.cfg.class_token) ar.ivector("cls", m.cls, QuantFormat{m.cfg.res_bits, true, m.s_x0, 0});

  for (size_t i = 0; i < m.blocks.size(); ++i) {
    IntBlock& b = m.blocks[i];
    const std::string p = "blocks." + std::to_string(i) + ".";
    visit_layernorm(ar, p + "ln1", b.ln1);
    ar.scalar(p + "s_ln1", b.s_ln1);
    visit_linear(ar, p + "q", b.q, wb);
    visit_linear(ar, p + "k", b.k, wb);
    visit_linear(ar, p + "v", b.v, wb);
    ar.table(p + "q_requant", b.q_rq);
    ar.table(p + "k_requant", b.k_rq);
    ar.table(p + "v_requant", b.v_rq);
    ar.scalar(p + "s_q", b.s_q);
    ar.scalar(p + "s_k", b.s_k);
    ar.scalar(p + "s_v", b.s_v);
    ar.table(p + "softmax.exp", b.softmax.exp);
    ar.table(p + "softmax.recip_low", b.softmax.recip.low);
    ar.table(p + "softmax.recip_high", b.softmax.recip.high);
    ar.integer(p + "softmax.pivot", b.softmax.recip.pivot);
    ar.fixed(p + "softmax.out_low", b.softmax.out_low);
    ar.fixed(p + "softmax.out_high", b.softmax.out_high);
    ar.integer(p + "softmax.out_bits", b.softmax.out_bits);
    visit_spec(ar, p + "qk", b.qk_spec);
    visit_spec(ar, p + "rv", b.rv_spec);
    ar.table(p + "attn_requant", b.attn_rq);
    ar.scalar(p + "s_attn", b.s_attn);
    visit_linear(ar, p + "o", b.o, wb);
    ar.fixed(p + "res1.r", b.res1_r);
    ar.fixed(p + "res1.s", b.res1_s);
    ar.scalar(p + "s_mid", b.s_mid);
    visit_layernorm(ar, p + "ln2", b.ln2);
    ar.scalar(p + "s_ln2", b.s_ln2);
    visit_linear(ar, p + "fc1", b.fc1, wb);
    ar.table(p + "gelu", b.gelu);
    ar.scalar(p + "s_gelu", b.s_gelu);
    visit_linear(ar, p + "fc2", b.fc2, wb);
    ar.fixed(p + "res2.r", b.res2_r);
    ar.fixed(p + "res2.s", b.res2_s);
    ar.scalar(p + "s_out", b.s_out);
  }

  visit_layernorm(ar, "lnf", m.lnf);
  ar.scalar("s_lnf", m.s_lnf);
  ar.scalar("s_head_w", m.s_head_w);
  ar.imatrix("head.w", m.head_w, QuantFormat{wb, true, m.s_head_w, 0});
  ar.ivec("head.b", m.head_b, m.s_lnf * m.s_head_w);
}

template <typename A>
void visit_float(A& ar, const ModelConfig& cfg, FloatParams& p) {
  ar.fmatrix("float.patch_w", p.patch_w);
  ar.fvector("float.patch_b", p.patch_b);
  ar.fmatrix("float.pos", p.pos);
  if (cfg.class_token) ar.fvector("float.cls", p.cls);
  for (size_t i = 0; i < p.blocks.size(); ++i) {
    BlockParams& b = p.blocks[i];
    const std::string q = "float.blocks." + std::to_string(i) + ".";
    ar.fvector(q + "ln1_g", b.ln1_g);
    ar.fvector(q + "ln1_b", b.ln1_b);
    ar.fmatrix(q + "wq", b.wq);
    ar.fmatrix(q + "wk", b.wk);
    ar.fmatrix(q + "wv", b.wv);
    ar.fvector(q + "bq", b.bq);
    ar.fvector(q + "bk", b.bk);
    ar.fvector(q + "bv", b.bv);
    ar.fmatrix(q + "wo", b.wo);
    ar.fvector(q + "bo", b.bo);
    ar.fvector(q + "ln2_g", b.ln2_g);
    ar.fvector(q + "ln2_b", b.ln2_b);
    ar.fmatrix(q + "w1", b.w1);
    ar.fvector(q + "b1", b.b1);
    ar.fmatrix(q + "w2", b.w2);
    ar.fvector(q + "b2", b.b2);
  }
  ar.fvector("float.lnf_g", p.lnf_g);
  ar.fvector("float.lnf_b", p.lnf_b);
  ar.fmatrix("float.head_w", p.head_w);
  ar.fvector("float.head_b", p.head_b);
}

}  // namespace

json table_to_json(const LutTable& t) {
  return {{"n", t.n},
          {"alpha", t.alpha},
          {"beta", t.beta},
          {"s_pot", t.s_pot},
          {"inverted", t.inverted},
          {"out_bits", t.out_bits},
          {"out_signed", t.out_signed},
          {"out_scale", t.out_scale},
          {"entries", t.entries}};
}

LutTable table_from_json(const json& j) {
  LutTable t;
  try {
    t.n = j.at("n").get<int>();
    t.alpha = j.at("alpha").get<int64_t>();
    t.beta = j.at("beta").get<int64_t>();
    t.s_pot = j.at("s_pot").get<int>();
    t.inverted = j.at("inverted").get<bool>();
    t.out_bits = j.at("out_bits").get<int>();
    t.out_signed = j.at("out_signed").get<bool>();
    t.out_scale = j.at("out_scale").get<double>();
    t.entries = j.at("entries").get<std::vector<int32_t>>();
    t.validate();
  } catch (const json::exception& e) {
    throw BundleError(std::string("bad table: ") + e.what());
  } catch (const std::logic_error& e) {
    throw BundleError(std::string("bad table: ") + e.what());
  }
  return t;
}

json config_to_json(const ModelConfig& c) {
  return {{"name", c.name},           {"image_h", c.image_h},         {"image_w", c.image_w},
          {"in_channels", c.in_channels}, {"patch", c.patch},         {"embed", c.embed},
          {"heads", c.heads},         {"head_dim", c.head_dim},       {"mlp_hidden", c.mlp_hidden},
          {"blocks", c.blocks},       {"num_classes", c.num_classes}, {"act_bits", c.act_bits},
          {"weight_bits", c.weight_bits}, {"res_bits", c.res_bits},   {"input_bits", c.input_bits},
          {"class_token", c.class_token}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  try {
    c.name = j.at("name").get<std::string>();
    c.image_h = j.at("image_h").get<int64_t>();
    c.image_w = j.at("image_w").get<int64_t>();
    c.in_channels = j.at("in_channels").get<int64_t>();
    c.patch = j.at("patch").get<int64_t>();
    c.embed = j.at("embed").get<int64_t>();
    c.heads = j.at("heads").get<int64_t>();
    c.head_dim = j.at("head_dim").get<int64_t>();
    c.mlp_hidden = j.at("mlp_hidden").get<int64_t>();
    c.blocks = j.at("blocks").get<int64_t>();
    c.num_classes = j.at("num_classes").get<int64_t>();
    c.act_bits = j.at("act_bits").get<int>();
    c.weight_bits = j.at("weight_bits").get<int>();
    c.res_bits = j.at("res_bits").get<int>();
    c.input_bits = j.at("input_bits").get<int>();
    c.class_token = j.at("class_token").get<bool>();
  } catch (const json::exception& e) {
    throw BundleError(std::string("bad model config: ") + e.what());
  }
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw BundleError(e.what());
  }
  return c;
}

void save_bundle(const fs::path& dir, const IntModel& model, const FloatParams* float_params) {
  Writer w(dir);
  w.manifest["config"] = config_to_json(model.cfg);
  IntModel copy = model;
  visit_model(w, copy);
  if (float_params) {
    FloatParams fp = *float_params;
    visit_float(w, model.cfg, fp);
    w.manifest["has_float_params"] = true;
  }
  write_json(dir / "manifest.json", w.manifest);
}

Bundle load_bundle(const fs::path& dir) {
  Reader r(dir);
  Bundle b;
  try {
    b.model.cfg = config_from_json(r.manifest.at("config"));
  } catch (const json::exception& e) {
    throw BundleError(std::string("manifest: ") + e.what());
  }
  b.model.blocks.resize(static_cast<size_t>(b.model.cfg.blocks));
  try {
    visit_model(r, b.model);
    if (r.manifest.value("has_float_params", false)) {
      FloatParams fp;
      fp.blocks.resize(static_cast<size_t>(b.model.cfg.blocks));
      visit_float(r, b.model.cfg, fp);
      b.float_params = std::move(fp);
    }
  } catch (const json::exception& e) {
    throw BundleError(std::string("manifest: ") + e.what());
  }
  return b;
}

void save_image(const fs::path& file, const ModelConfig& cfg, const Eigen::MatrixXd& image) {
  std::vector<double> data;
  data.reserve(static_cast<size_t>(image.size()));
  for (Eigen::Index c = 0; c < image.rows(); ++c) {
    for (Eigen::Index k = 0; k < image.cols(); ++k) data.push_back(image(c, k));
  }
  write_json(file, {{"shape", {cfg.in_channels, cfg.image_h, cfg.image_w}}, {"data", data}});
}

Eigen::MatrixXd load_image(const fs::path& file, const ModelConfig& cfg) {
  const json j = read_json(file);
  std::vector<int64_t> shape;
  std::vector<double> data;
  try {
    shape = j.at("shape").get<std::vector<int64_t>>();
    data = j.at("data").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw BundleError(std::string("bad image file: ") + e.what());
  }
  const std::vector<int64_t> want{cfg.in_channels, cfg.image_h, cfg.image_w};
  if (shape != want) {
    throw std::invalid_argument("image shape does not match model: expected [" +
                                std::to_string(want[0]) + ", " + std::to_string(want[1]) + ", " +
                                std::to_string(want[2]) + "]");
  }
  if (data.size() != static_cast<size_t>(want[0] * want[1] * want[2])) {
    throw BundleError("image data length does not match its shape");
  }
  Eigen::MatrixXd img(cfg.in_channels, cfg.image_h * cfg.image_w);
  for (Eigen::Index c = 0, k = 0; c < img.rows(); ++c) {
    for (Eigen::Index p = 0; p < img.cols(); ++p) img(c, p) = data[static_cast<size_t>(k++)];
  }
  return img;
}

json read_json(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw BundleError("cannot read " + file.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw BundleError(file.string() + ": " + e.what());
  }
}

void write_json(const fs::path& file, const json& j) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) throw BundleError("cannot write " + file.string());
  out << j.dump(2) << '\n';
  if (!out) throw BundleError("write failed: " + file.string());
}

}  // namespace vitpipe
