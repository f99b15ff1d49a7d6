#pragma once

#include <string>
#include <utility>
#include <vector>

#include "harmonia/grids.hpp"
#include "harmonia/params.hpp"
#include "harmonia/tape.hpp"

namespace harmonia {

// Architecture dimensions. Defaults are the full-scale configuration; tests
// and desk experiments shrink them.
struct ModelConfig {
  int d_emb = 128;
  int d_z = 128;
  int d_p_enc = 256;   // pitch-axis encoder GRU hidden (per direction)
  int d_t_enc = 512;   // time-axis encoder GRU hidden (per direction)
  int d_t_dec = 1024;  // time-axis decoder GRU hidden
  int d_p_dec = 512;   // pitch-axis decoder GRU hidden
  int disc_layers = 4;
  int disc_heads = 4;
  int d_model = 256;
  int d_ff = 1024;
  double dropout = 0.10;
  double alpha = 0.1;  // KL balancing weight
  int chord_vocab = kChordVocab;
  int melody_vocab = kMelodyVocab;
  int rel_clip = 32;        // relative-position clipping distance
  int gru_disc_hidden = 512;  // Non-CR discriminator
  int gru_disc_layers = 2;
  // encoder-adversarial target: the normalized complement distribution
  // (default) or a plain uniform target over all tokens
  enum class ConfusionTarget { Complement, Uniform };
  ConfusionTarget confusion_target = ConfusionTarget::Complement;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

enum class Variant { Dat, NonDat, MaskCr, NonCr };

std::string variant_string(Variant v);
Variant variant_from_string(const std::string& s);

// Diagonal Gaussian over the latent code.
struct Posterior {
  Tensor mean;          // 1 x d_z
  Tensor log_variance;  // 1 x d_z
};

using LatentCode = Tensor;  // 1 x d_z

Tensor gaussian_eps(int d, Rng& rng);
// z = mean + exp(0.5 * max(logvar, -20)) .* eps; eps empty -> posterior mean
LatentCode reparam_value(const Posterior& post, const Tensor& eps);

// Hierarchical chord VAE plus the condition-denoising discriminator. All
// learnable state lives in a ParamStore split into the Enc/Dec/Dis groups;
// forward graphs are built on a caller-supplied tape.
class Model {
 public:
  Model(const ModelConfig& cfg, Variant variant, std::uint64_t init_seed);

  const ModelConfig& config() const { return cfg_; }
  Variant variant() const { return variant_; }
  bool has_discriminator() const { return variant_ != Variant::NonDat; }

  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }

  // ---- tape-level graph builders ----
  int melody_table_node(Tape& tape) const;  // kMelodyVocab x d_emb
  int chord_table_node(Tape& tape) const;   // kChordVocab x d_emb

  // beat-pooled condition vectors, 32 x d_emb
  int build_condition(Tape& tape, int mel_table, const MelodyGrid& melody) const;

  struct PosteriorNodes {
    int mean, logvar;
  };
  PosteriorNodes encode_t(Tape& tape, const ChordGrid& chord, int cond) const;

  // chord logits as a 128 x 13 node (rows in (beat, slot) order). With a
  // teacher, ground-truth tokens feed the pitch recurrence at rate tf_rate;
  // otherwise argmax feedback. `fed_tokens` records the 96 feedback tokens
  // (3 per beat) when non-null.
  int decode_t(Tape& tape, int z, int cond, int chord_table,
               const ChordGrid* teacher, double tf_rate, Rng* tf_rng,
               std::vector<int>* fed_tokens = nullptr) const;

  // melody logits as a 128 x 122 node
  int discriminate_t(Tape& tape, int z, int mel_table, const MelodyGrid& corrupted,
                     Rng* dropout_rng, bool train_mode) const;

  // ---- eval-mode wrappers (dropout off, deterministic) ----
  Posterior encode(const ChordGrid& chord, const MelodyGrid& melody) const;
  Tensor decode_logits(const LatentCode& z, const MelodyGrid& melody,
                       const ChordGrid* teacher = nullptr, double tf_rate = 0.0,
                       Rng* tf_rng = nullptr) const;
  // argmax decode with the PAD-suffix invariant restored
  ChordGrid greedy_decode(const LatentCode& z, const MelodyGrid& melody) const;
  Tensor discriminate(const LatentCode& z, const MelodyGrid& corrupted) const;

  // trainable scalar counts: (encoder+decoder, discriminator)
  std::pair<long, long> param_count() const;

 private:
  struct GruHandles {
    int w_ih = -1, b_ih = -1, w_hh = -1, b_hh = -1;
  };
  struct DiscLayerHandles {
    int wq, bq, wk, bk, wv, bv, wo, bo;
    int rel_k, rel_v;
    int ln1_g, ln1_b, ln2_g, ln2_b;
    int ff1_w, ff1_b, ff2_w, ff2_b;
  };

  int reg(const std::string& name, ParamGroup g, int rows, int cols);
  GruHandles reg_gru(const std::string& prefix, ParamGroup g, int in, int hid);
  void register_params();
  void init_params(std::uint64_t seed);

  int run_gru(Tape& tape, const GruHandles& gru, const std::vector<int>& inputs,
              int h0) const;  // returns final hidden
  int attention_layer(Tape& tape, int x, const DiscLayerHandles& lh, Rng* rng,
                      bool train) const;

  ModelConfig cfg_;
  Variant variant_;
  ParamStore store_;

  // encoder
  int pitch_embed_, pad_embed_, octave_embed_, hold_embed_, rest_embed_, mask_embed_;
  GruHandles enc_pitch_fwd_, enc_pitch_bwd_, enc_time_fwd_, enc_time_bwd_;
  int mean_w_, mean_b_, logvar_w_, logvar_b_;
  // decoder
  GruHandles dec_time_, dec_pitch_;
  int dec_init_w_, dec_init_b_, dec_out_w_, dec_out_b_, dec_start_;
  // discriminator (transformer for Dat/MaskCr, GRU for NonCr, absent for NonDat)
  int dis_tok_w_ = -1, dis_tok_b_ = -1, dis_z_w_ = -1, dis_z_b_ = -1;
  std::vector<DiscLayerHandles> dis_layers_;
  int dis_out_w_ = -1, dis_out_b_ = -1;
  int dis_start_ = -1, dis_h0_w1_ = -1, dis_h0_b1_ = -1, dis_h0_w2_ = -1, dis_h0_b2_ = -1;
  GruHandles dis_gru1_, dis_gru2_;
};

// ---- checkpoints (magic HCKP1) ----

void save_checkpoint(const Model& model, long step, const std::string& path);

struct LoadedCheckpoint {
  Model model;
  long step = 0;
};
LoadedCheckpoint load_checkpoint(const std::string& path);
// rejects a checkpoint whose stored config differs from `expected`
LoadedCheckpoint load_checkpoint(const std::string& path, const ModelConfig& expected);

std::vector<int> melody_tokens(const MelodyGrid& melody);

}  // namespace harmonia
