#pragma once

// Checkpoint container: UTF-8 JSON manifest (configs, step, stage, metrics,
// vocabulary) followed by per-parameter records of (name, dtype, shape,
// row-major little-endian payload). Round trips are byte-identical.

#include <bit>
#include <cstdint>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "uvt/model.hpp"
#include "uvt/trainer.hpp"

namespace uvt {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are little-endian");

using ordered_json = nlohmann::ordered_json;

constexpr char kCkptMagic[8] = {'U', 'V', 'T', 'C', 'K', 'P', 'T', '\n'};
constexpr uint32_t kCkptVersion = 1;

struct CheckpointMeta {
  std::string kind = "student";  // or "teacher"
  int step = 0;
  std::string stage;             // "intra" / "inter" / ""
  uint64_t teacher_hash = 0;
  std::vector<std::string> vocab;
  std::map<std::string, double> metrics;
};

// ---------------------------------------------------------------------------
// Config <-> JSON
// ---------------------------------------------------------------------------

inline ordered_json encoder_config_to_json(const EncoderConfig& c) {
  ordered_json j;
  j["patch"] = c.patch;
  j["dim"] = c.dim;
  j["layers"] = c.layers;
  j["heads"] = c.heads;
  j["n_cls"] = c.n_cls;
  j["max_grid"] = c.max_grid;
  j["mlp_ratio"] = c.mlp_ratio;
  return j;
}

inline EncoderConfig encoder_config_from_json(const ordered_json& j) {
  EncoderConfig c;
  c.patch = j.at("patch").get<int>();
  c.dim = j.at("dim").get<int>();
  c.layers = j.at("layers").get<int>();
  c.heads = j.at("heads").get<int>();
  c.n_cls = j.at("n_cls").get<int>();
  c.max_grid = j.at("max_grid").get<int>();
  c.mlp_ratio = j.at("mlp_ratio").get<int>();
  return c;
}

inline ordered_json model_config_to_json(const ModelConfig& c) {
  ordered_json j;
  j["encoder"] = encoder_config_to_json(c.enc);
  j["qformer"] = ordered_json{};
  j["qformer"]["n_queries"] = c.qf.n_queries;
  j["qformer"]["layers"] = c.qf.layers;
  j["qformer"]["hidden"] = c.qf.hidden;
  j["qformer"]["heads"] = c.qf.heads;
  j["qformer"]["kv_dim"] = c.qf.kv_dim;
  j["qformer"]["out_dim"] = c.qf.out_dim;
  j["qformer"]["mlp_ratio"] = c.qf.mlp_ratio;
  j["decoder"] = ordered_json{};
  j["decoder"]["layers"] = c.dec.layers;
  j["decoder"]["heads"] = c.dec.heads;
  j["decoder"]["dim"] = c.dec.dim;
  j["decoder"]["vocab"] = c.dec.vocab;
  j["decoder"]["t_max"] = c.dec.t_max;
  j["decoder"]["mlp_ratio"] = c.dec.mlp_ratio;
  j["visdec"] = ordered_json{};
  j["visdec"]["dim"] = c.vis.dim;
  j["visdec"]["hidden"] = c.vis.hidden;
  return j;
}

inline ModelConfig model_config_from_json(const ordered_json& j) {
  ModelConfig c;
  c.enc = encoder_config_from_json(j.at("encoder"));
  const auto& q = j.at("qformer");
  c.qf.n_queries = q.at("n_queries").get<int>();
  c.qf.layers = q.at("layers").get<int>();
  c.qf.hidden = q.at("hidden").get<int>();
  c.qf.heads = q.at("heads").get<int>();
  c.qf.kv_dim = q.at("kv_dim").get<int>();
  c.qf.out_dim = q.at("out_dim").get<int>();
  c.qf.mlp_ratio = q.at("mlp_ratio").get<int>();
  const auto& d = j.at("decoder");
  c.dec.layers = d.at("layers").get<int>();
  c.dec.heads = d.at("heads").get<int>();
  c.dec.dim = d.at("dim").get<int>();
  c.dec.vocab = d.at("vocab").get<int>();
  c.dec.t_max = d.at("t_max").get<int>();
  c.dec.mlp_ratio = d.at("mlp_ratio").get<int>();
  const auto& v = j.at("visdec");
  c.vis.dim = v.at("dim").get<int>();
  c.vis.hidden = v.at("hidden").get<int>();
  return c;
}

// ---------------------------------------------------------------------------
// Low-level container I/O
// ---------------------------------------------------------------------------

namespace detail {

template <class T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

inline void write_container(const std::string& path, const ordered_json& manifest,
                            const ParamStore<real>& store) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open for write: " + path);
  f.write(kCkptMagic, sizeof(kCkptMagic));
  write_pod(f, kCkptVersion);
  std::string m = manifest.dump();
  write_pod(f, static_cast<uint64_t>(m.size()));
  f.write(m.data(), static_cast<std::streamsize>(m.size()));
  write_pod(f, static_cast<uint32_t>(store.params.size()));
  for (const auto* p : store.params) {
    write_pod(f, static_cast<uint16_t>(p->name.size()));
    f.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    write_pod(f, static_cast<uint8_t>(0));  // dtype 0 = f32
    write_pod(f, static_cast<uint64_t>(p->v.rows()));
    write_pod(f, static_cast<uint64_t>(p->v.cols()));
    f.write(reinterpret_cast<const char*>(p->v.data()),
            static_cast<std::streamsize>(sizeof(real) * p->v.size()));
  }
  if (!f) throw std::runtime_error("checkpoint: write failed: " + path);
}

// Reads only the manifest.
inline ordered_json read_manifest(std::istream& f, const std::string& path) {
  char magic[8];
  f.read(magic, sizeof(magic));
  if (!f || std::string(magic, 8) != std::string(kCkptMagic, 8))
    throw std::runtime_error("checkpoint: bad magic in " + path);
  uint32_t version = read_pod<uint32_t>(f);
  if (version != kCkptVersion)
    throw std::runtime_error("checkpoint: unsupported version in " + path);
  uint64_t mlen = read_pod<uint64_t>(f);
  std::string m(mlen, '\0');
  f.read(m.data(), static_cast<std::streamsize>(mlen));
  if (!f) throw std::runtime_error("checkpoint: truncated manifest in " + path);
  return ordered_json::parse(m);
}

// Reads parameter records into an already-registered store; every name and
// shape must match.
inline void read_params(std::istream& f, ParamStore<real>& store, const std::string& path) {
  uint32_t n = read_pod<uint32_t>(f);
  if (n != store.params.size())
    throw std::runtime_error("checkpoint: parameter count mismatch in " + path + ": file has " +
                             std::to_string(n) + ", model expects " +
                             std::to_string(store.params.size()));
  for (uint32_t i = 0; i < n; ++i) {
    uint16_t name_len = read_pod<uint16_t>(f);
    std::string name(name_len, '\0');
    f.read(name.data(), name_len);
    uint8_t dtype = read_pod<uint8_t>(f);
    uint64_t rows = read_pod<uint64_t>(f);
    uint64_t cols = read_pod<uint64_t>(f);
    Param<real>& p = *store.params[i];
    if (name != p.name)
      throw std::runtime_error("checkpoint: parameter name mismatch at index " + std::to_string(i) +
                               ": file has '" + name + "', model expects '" + p.name + "'");
    if (dtype != 0) throw std::runtime_error("checkpoint: unsupported dtype for " + name);
    if (rows != static_cast<uint64_t>(p.v.rows()) || cols != static_cast<uint64_t>(p.v.cols()))
      throw std::runtime_error("checkpoint: shape mismatch for " + name + ": file has " +
                               std::to_string(rows) + "x" + std::to_string(cols) +
                               ", model expects " + std::to_string(p.v.rows()) + "x" +
                               std::to_string(p.v.cols()));
    f.read(reinterpret_cast<char*>(p.v.data()),
           static_cast<std::streamsize>(sizeof(real) * p.v.size()));
    if (!f) throw std::runtime_error("checkpoint: truncated payload for " + name);
  }
}

inline ordered_json meta_to_json(const CheckpointMeta& meta) {
  ordered_json j;
  j["kind"] = meta.kind;
  j["step"] = meta.step;
  j["stage"] = meta.stage;
  j["teacher_hash"] = hex64(meta.teacher_hash);
  j["metrics"] = ordered_json::object();
  for (const auto& [k, v] : meta.metrics) j["metrics"][k] = v;
  j["vocab"] = meta.vocab;
  return j;
}

inline CheckpointMeta meta_from_json(const ordered_json& j) {
  CheckpointMeta meta;
  meta.kind = j.at("kind").get<std::string>();
  meta.step = j.at("step").get<int>();
  meta.stage = j.at("stage").get<std::string>();
  meta.teacher_hash = std::stoull(j.at("teacher_hash").get<std::string>(), nullptr, 16);
  for (const auto& [k, v] : j.at("metrics").items()) meta.metrics[k] = v.get<double>();
  for (const auto& t : j.at("vocab")) meta.vocab.push_back(t.get<std::string>());
  return meta;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Student checkpoints
// ---------------------------------------------------------------------------

inline void save_checkpoint(const std::string& path, const Model<real>& model,
                            const CheckpointMeta& meta) {
  ordered_json manifest;
  manifest["format"] = kCkptVersion;
  manifest["meta"] = detail::meta_to_json(meta);
  manifest["config"] = model_config_to_json(model.cfg);
  detail::write_container(path, manifest, model.params);
}

struct LoadedCheckpoint {
  Model<real> model;
  CheckpointMeta meta;
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
  ordered_json manifest = detail::read_manifest(f, path);
  LoadedCheckpoint out;
  out.meta = detail::meta_from_json(manifest.at("meta"));
  if (out.meta.kind != "student")
    throw std::runtime_error("checkpoint: expected a student checkpoint, got '" + out.meta.kind +
                             "' in " + path);
  out.model.setup(model_config_from_json(manifest.at("config")));
  detail::read_params(f, out.model.params, path);
  return out;
}

inline Vocabulary vocab_from_meta(const CheckpointMeta& meta) {
  Vocabulary v;
  v.id_to_token = meta.vocab;
  for (int i = 0; i < v.size(); ++i) v.token_to_id[v.id_to_token[i]] = i;
  return v;
}

// ---------------------------------------------------------------------------
// Teacher checkpoints
// ---------------------------------------------------------------------------

inline void save_teacher_checkpoint(const std::string& path, const TeacherModel<real>& teacher) {
  ordered_json manifest;
  manifest["format"] = kCkptVersion;
  manifest["kind"] = "teacher";
  manifest["hash"] = hex64(teacher.hash);
  manifest["config"] = encoder_config_to_json(teacher.encoder.cfg);
  detail::write_container(path, manifest, teacher.params);
}

inline TeacherModel<real> load_teacher_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
  ordered_json manifest = detail::read_manifest(f, path);
  if (manifest.value("kind", "") != "teacher")
    throw std::runtime_error("checkpoint: expected a teacher checkpoint: " + path);
  TeacherModel<real> teacher;
  teacher.setup(encoder_config_from_json(manifest.at("config")));
  detail::read_params(f, teacher.params, path);
  teacher.hash = std::stoull(manifest.at("hash").get<std::string>(), nullptr, 16);
  if (teacher.hash != teacher.current_hash())
    throw std::runtime_error("checkpoint: teacher hash mismatch (corrupt file?): " + path);
  return teacher;
}

}  // namespace uvt
