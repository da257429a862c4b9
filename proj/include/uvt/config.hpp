#pragma once

// Flat key=value run configuration shared by the CLI subcommands.

#include <cstdint>
#include <map>
#include <string>

#include "uvt/datagen.hpp"
#include "uvt/model.hpp"
#include "uvt/trainer.hpp"

namespace uvt {

struct RunConfig {
  uint64_t seed = 1;
  CorpusConfig corpus;
  Hyperparams hp;

  // Model shape.
  int patch = 8;
  int enc_dim = 64;
  int enc_layers = 3;
  int enc_heads = 4;
  int n_cls = 1;
  int max_grid = 16;
  int qf_queries = 16;
  int qf_heads = 4;
  int dec_dim = 128;
  int dec_layers = 2;
  int dec_heads = 4;
  int t_max = 256;
  int vis_hidden = 128;

  // Teacher pretraining.
  int teacher_steps = 400;
  double teacher_lr = 1e-3;

  // Evaluation.
  int knn_k = 5;

  // Derived model configuration (vocab filled in by the caller).
  ModelConfig model_config(int vocab_size) const;
  EncoderConfig encoder_config() const;

  int lowres_spatial_tokens() const {
    return (corpus.r / patch) * (corpus.r / patch);
  }

  void validate() const;
};

// Parses `key = value` lines; '#' starts a comment; unknown keys are
// rejected. Values from the file override the defaults in `cfg`.
void apply_config_file(RunConfig& cfg, const std::string& path);

// Applies a single override (same key set as the file).
void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value);

}  // namespace uvt
