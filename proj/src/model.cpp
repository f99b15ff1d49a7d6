#include "harmonia/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace harmonia {

void ModelConfig::validate() const {
  const int dims[] = {d_emb, d_z, d_p_enc, d_t_enc, d_t_dec, d_p_dec, disc_layers,
                      disc_heads, d_model, d_ff, rel_clip, gru_disc_hidden,
                      gru_disc_layers};
  for (int d : dims)
    if (d <= 0) throw config_error("model dimensions must be positive");
  if (dropout < 0.0 || dropout >= 1.0) throw config_error("dropout must be in [0,1)");
  if (alpha <= 0.0) throw config_error("alpha must be > 0");
  if (chord_vocab != kChordVocab || melody_vocab != kMelodyVocab)
    throw config_error("vocabulary sizes are fixed by the grid encodings");
  if (d_model % disc_heads != 0)
    throw config_error("d_model must be divisible by disc_heads");
}

std::string variant_string(Variant v) {
  switch (v) {
    case Variant::Dat: return "dat";
    case Variant::NonDat: return "non-dat";
    case Variant::MaskCr: return "mask-cr";
    case Variant::NonCr: return "non-cr";
  }
  return "dat";
}

Variant variant_from_string(const std::string& s) {
  if (s == "dat") return Variant::Dat;
  if (s == "non-dat" || s == "nondat") return Variant::NonDat;
  if (s == "mask-cr" || s == "maskcr") return Variant::MaskCr;
  if (s == "non-cr" || s == "noncr") return Variant::NonCr;
  throw config_error("unknown variant '" + s + "'");
}

Tensor gaussian_eps(int d, Rng& rng) {
  Tensor eps(1, d);
  for (double& x : eps.v) x = rng.normal();
  return eps;
}

LatentCode reparam_value(const Posterior& post, const Tensor& eps) {
  if (eps.empty()) return post.mean;
  Tensor z(1, post.mean.cols);
  for (int c = 0; c < z.cols; ++c) {
    const double lv = std::max(post.log_variance.v[c], -20.0);
    z.v[c] = post.mean.v[c] + std::exp(0.5 * lv) * eps.v[c];
  }
  return z;
}

std::vector<int> melody_tokens(const MelodyGrid& melody) {
  std::vector<int> toks(kMelodySteps);
  for (int s = 0; s < kMelodySteps; ++s) toks[s] = melody_token(melody.steps[s]);
  return toks;
}

// ---- construction ----

Model::Model(const ModelConfig& cfg, Variant variant, std::uint64_t init_seed)
    : cfg_(cfg), variant_(variant) {
  cfg_.validate();
  register_params();
  init_params(init_seed);
}

int Model::reg(const std::string& name, ParamGroup g, int rows, int cols) {
  return store_.add(name, g, rows, cols);
}

Model::GruHandles Model::reg_gru(const std::string& prefix, ParamGroup g, int in,
                                 int hid) {
  GruHandles h;
  h.w_ih = reg(prefix + ".w_ih", g, 3 * hid, in);
  h.b_ih = reg(prefix + ".b_ih", g, 1, 3 * hid);
  h.w_hh = reg(prefix + ".w_hh", g, 3 * hid, hid);
  h.b_hh = reg(prefix + ".b_hh", g, 1, 3 * hid);
  return h;
}

void Model::register_params() {
  const auto E = ParamGroup::Enc;
  const auto D = ParamGroup::Dec;
  const auto R = ParamGroup::Dis;
  const int d = cfg_.d_emb;

  // shared embeddings (owned by the encoder group)
  pitch_embed_ = reg("emb.pitch", E, 12, d);
  pad_embed_ = reg("emb.chord_pad", E, 1, d);
  octave_embed_ = reg("emb.octave", E, 10, d);
  hold_embed_ = reg("emb.hold", E, 1, d);
  rest_embed_ = reg("emb.rest", E, 1, d);
  mask_embed_ = reg("emb.mask", E, 1, d);

  enc_pitch_fwd_ = reg_gru("enc.pitch_fwd", E, d, cfg_.d_p_enc);
  enc_pitch_bwd_ = reg_gru("enc.pitch_bwd", E, d, cfg_.d_p_enc);
  const int time_in = 2 * cfg_.d_p_enc + d;
  enc_time_fwd_ = reg_gru("enc.time_fwd", E, time_in, cfg_.d_t_enc);
  enc_time_bwd_ = reg_gru("enc.time_bwd", E, time_in, cfg_.d_t_enc);
  mean_w_ = reg("enc.mean.w", E, cfg_.d_z, 2 * cfg_.d_t_enc);
  mean_b_ = reg("enc.mean.b", E, 1, cfg_.d_z);
  logvar_w_ = reg("enc.logvar.w", E, cfg_.d_z, 2 * cfg_.d_t_enc);
  logvar_b_ = reg("enc.logvar.b", E, 1, cfg_.d_z);

  dec_time_ = reg_gru("dec.time", D, cfg_.d_z + d, cfg_.d_t_dec);
  dec_init_w_ = reg("dec.init.w", D, cfg_.d_p_dec, cfg_.d_t_dec);
  dec_init_b_ = reg("dec.init.b", D, 1, cfg_.d_p_dec);
  dec_pitch_ = reg_gru("dec.pitch", D, d + cfg_.d_t_dec, cfg_.d_p_dec);
  dec_out_w_ = reg("dec.out.w", D, kChordVocab, cfg_.d_p_dec);
  dec_out_b_ = reg("dec.out.b", D, 1, kChordVocab);
  dec_start_ = reg("dec.start", D, 1, d);

  if (variant_ == Variant::NonCr) {
    // plain GRU discriminator: unrolled from z over a learned start token
    const int hid = cfg_.gru_disc_hidden;
    dis_start_ = reg("dis.start", R, 1, d);
    dis_h0_w1_ = reg("dis.h0_1.w", R, hid, cfg_.d_z);
    dis_h0_b1_ = reg("dis.h0_1.b", R, 1, hid);
    dis_h0_w2_ = reg("dis.h0_2.w", R, hid, cfg_.d_z);
    dis_h0_b2_ = reg("dis.h0_2.b", R, 1, hid);
    dis_gru1_ = reg_gru("dis.gru1", R, d, hid);
    dis_gru2_ = reg_gru("dis.gru2", R, hid, hid);
    dis_out_w_ = reg("dis.out.w", R, kMelodyTargetVocab, hid);
    dis_out_b_ = reg("dis.out.b", R, 1, kMelodyTargetVocab);
  } else if (variant_ != Variant::NonDat) {
    const int dm = cfg_.d_model;
    const int dh = dm / cfg_.disc_heads;
    dis_tok_w_ = reg("dis.tok.w", R, dm, d);
    dis_tok_b_ = reg("dis.tok.b", R, 1, dm);
    dis_z_w_ = reg("dis.z.w", R, dm, cfg_.d_z);
    dis_z_b_ = reg("dis.z.b", R, 1, dm);
    for (int l = 0; l < cfg_.disc_layers; ++l) {
      const std::string p = "dis.layer" + std::to_string(l);
      DiscLayerHandles lh;
      lh.wq = reg(p + ".q.w", R, dm, dm);
      lh.bq = reg(p + ".q.b", R, 1, dm);
      lh.wk = reg(p + ".k.w", R, dm, dm);
      lh.bk = reg(p + ".k.b", R, 1, dm);
      lh.wv = reg(p + ".v.w", R, dm, dm);
      lh.bv = reg(p + ".v.b", R, 1, dm);
      lh.wo = reg(p + ".o.w", R, dm, dm);
      lh.bo = reg(p + ".o.b", R, 1, dm);
      lh.rel_k = reg(p + ".rel_k", R, 2 * cfg_.rel_clip + 1, dh);
      lh.rel_v = reg(p + ".rel_v", R, 2 * cfg_.rel_clip + 1, dh);
      lh.ln1_g = reg(p + ".ln1.g", R, 1, dm);
      lh.ln1_b = reg(p + ".ln1.b", R, 1, dm);
      lh.ln2_g = reg(p + ".ln2.g", R, 1, dm);
      lh.ln2_b = reg(p + ".ln2.b", R, 1, dm);
      lh.ff1_w = reg(p + ".ff1.w", R, cfg_.d_ff, dm);
      lh.ff1_b = reg(p + ".ff1.b", R, 1, cfg_.d_ff);
      lh.ff2_w = reg(p + ".ff2.w", R, dm, cfg_.d_ff);
      lh.ff2_b = reg(p + ".ff2.b", R, 1, dm);
      dis_layers_.push_back(lh);
    }
    dis_out_w_ = reg("dis.out.w", R, kMelodyTargetVocab, dm);
    dis_out_b_ = reg("dis.out.b", R, 1, kMelodyTargetVocab);
  }
}

void Model::init_params(std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x494e4954ull));
  for (int id = 0; id < store_.count(); ++id) {
    auto& e = store_.entry(id);
    const std::string& name = e.name;
    if (name.find(".ln") != std::string::npos) {
      // layernorm: gain 1, bias 0
      e.value.fill(name.ends_with(".g") ? 1.0 : 0.0);
      continue;
    }
    if (name.ends_with(".b_ih") || name.ends_with(".b_hh") || name.ends_with(".b")) {
      e.value.fill(0.0);
      continue;
    }
    // uniform fan-in scaling for weights, embeddings and relative tables
    const int fan_in = e.value.cols;
    const double bound = 1.0 / std::sqrt(double(std::max(fan_in, 1)));
    for (double& x : e.value.v) x = (2.0 * rng.uniform() - 1.0) * bound;
  }
}

// ---- graph builders ----

int Model::melody_table_node(Tape& tape) const {
  return tape.melody_vocab_table(tape.param(pitch_embed_), tape.param(octave_embed_),
                                 tape.param(hold_embed_), tape.param(rest_embed_),
                                 tape.param(mask_embed_));
}

int Model::chord_table_node(Tape& tape) const {
  return tape.concat_rows(tape.param(pitch_embed_), tape.param(pad_embed_));
}

int Model::build_condition(Tape& tape, int mel_table, const MelodyGrid& melody) const {
  const int embs = tape.gather_rows(mel_table, melody_tokens(melody));
  return tape.pool_rows(embs, 4);
}

int Model::run_gru(Tape& tape, const GruHandles& gru, const std::vector<int>& inputs,
                   int h0) const {
  const int w_ih = tape.param(gru.w_ih);
  const int b_ih = tape.param(gru.b_ih);
  const int w_hh = tape.param(gru.w_hh);
  const int b_hh = tape.param(gru.b_hh);
  int h = h0;
  for (int x : inputs) h = tape.gru_cell(x, h, w_ih, b_ih, w_hh, b_hh);
  return h;
}

Model::PosteriorNodes Model::encode_t(Tape& tape, const ChordGrid& chord,
                                      int cond) const {
  if (tape.val(cond).rows != kBeats || tape.val(cond).cols != cfg_.d_emb)
    throw contract_error("encode: condition must be 32 x d_emb");
  const int chord_table = chord_table_node(tape);
  const int h0_pitch = tape.zeros(1, cfg_.d_p_enc);
  const int h0_time = tape.zeros(1, cfg_.d_t_enc);

  std::vector<int> time_inputs(kBeats);
  for (int t = 0; t < kBeats; ++t) {
    std::vector<int> toks(kChordSlots);
    for (int p = 0; p < kChordSlots; ++p) toks[p] = chord.at(t, p);
    const int slot_embs = tape.gather_rows(chord_table, toks);
    std::vector<int> fwd_in(kChordSlots), bwd_in(kChordSlots);
    for (int p = 0; p < kChordSlots; ++p) {
      fwd_in[p] = tape.slice_rows(slot_embs, p, p + 1);
      bwd_in[kChordSlots - 1 - p] = fwd_in[p];
    }
    const int hf = run_gru(tape, enc_pitch_fwd_, fwd_in, h0_pitch);
    const int hb = run_gru(tape, enc_pitch_bwd_, bwd_in, h0_pitch);
    const int xt = tape.concat_cols(hf, hb);
    time_inputs[t] = tape.concat_cols(xt, tape.slice_rows(cond, t, t + 1));
  }

  std::vector<int> rev(time_inputs.rbegin(), time_inputs.rend());
  const int tf = run_gru(tape, enc_time_fwd_, time_inputs, h0_time);
  const int tb = run_gru(tape, enc_time_bwd_, rev, h0_time);
  const int summary = tape.concat_cols(tf, tb);

  PosteriorNodes out;
  out.mean = tape.linear(tape.param(mean_w_), tape.param(mean_b_), summary);
  out.logvar = tape.linear(tape.param(logvar_w_), tape.param(logvar_b_), summary);
  return out;
}

int Model::decode_t(Tape& tape, int z, int cond, int chord_table,
                    const ChordGrid* teacher, double tf_rate, Rng* tf_rng,
                    std::vector<int>* fed_tokens) const {
  if (tape.val(z).rows != 1 || tape.val(z).cols != cfg_.d_z)
    throw contract_error("decode: z must be 1 x d_z");
  if (tape.val(cond).rows != kBeats)
    throw contract_error("decode: condition must cover 32 beats");

  const int time_w_ih = tape.param(dec_time_.w_ih);
  const int time_b_ih = tape.param(dec_time_.b_ih);
  const int time_w_hh = tape.param(dec_time_.w_hh);
  const int time_b_hh = tape.param(dec_time_.b_hh);
  const int pit_w_ih = tape.param(dec_pitch_.w_ih);
  const int pit_b_ih = tape.param(dec_pitch_.b_ih);
  const int pit_w_hh = tape.param(dec_pitch_.w_hh);
  const int pit_b_hh = tape.param(dec_pitch_.b_hh);
  const int init_w = tape.param(dec_init_w_);
  const int init_b = tape.param(dec_init_b_);
  const int out_w = tape.param(dec_out_w_);
  const int out_b = tape.param(dec_out_b_);
  const int start = tape.param(dec_start_);

  int h_time = tape.zeros(1, cfg_.d_t_dec);
  std::vector<int> logit_rows;
  logit_rows.reserve(kBeats * kChordSlots);

  for (int t = 0; t < kBeats; ++t) {
    const int in_t = tape.concat_cols(z, tape.slice_rows(cond, t, t + 1));
    h_time = tape.gru_cell(in_t, h_time, time_w_ih, time_b_ih, time_w_hh, time_b_hh);
    int g = tape.tanh_n(tape.linear(init_w, init_b, h_time));
    int prev_emb = start;
    for (int p = 0; p < kChordSlots; ++p) {
      const int pin = tape.concat_cols(prev_emb, h_time);
      g = tape.gru_cell(pin, g, pit_w_ih, pit_b_ih, pit_w_hh, pit_b_hh);
      const int logits = tape.linear(out_w, out_b, g);
      logit_rows.push_back(logits);
      if (p + 1 < kChordSlots) {
        int fed;
        const bool use_teacher =
            teacher && tf_rng && tf_rng->bernoulli(tf_rate);
        if (use_teacher) {
          fed = teacher->at(t, p);
        } else {
          const Tensor& lv = tape.val(logits);
          fed = int(std::max_element(lv.data(), lv.data() + lv.cols) - lv.data());
        }
        if (fed_tokens) fed_tokens->push_back(fed);
        prev_emb = tape.gather_rows(chord_table, {fed});
      }
    }
  }
  return tape.stack_rows(logit_rows);
}

int Model::attention_layer(Tape& tape, int x, const DiscLayerHandles& lh, Rng* rng,
                           bool train) const {
  const int dm = cfg_.d_model;
  const int heads = cfg_.disc_heads;
  const int dh = dm / heads;
  const double scale = 1.0 / std::sqrt(double(dh));

  const int q = tape.linear(tape.param(lh.wq), tape.param(lh.bq), x);
  const int k = tape.linear(tape.param(lh.wk), tape.param(lh.bk), x);
  const int v = tape.linear(tape.param(lh.wv), tape.param(lh.bv), x);
  const int rel_k = tape.param(lh.rel_k);
  const int rel_v = tape.param(lh.rel_v);

  int ctx = -1;
  for (int h = 0; h < heads; ++h) {
    const int qh = tape.slice_cols(q, h * dh, (h + 1) * dh);
    const int kh = tape.slice_cols(k, h * dh, (h + 1) * dh);
    const int vh = tape.slice_cols(v, h * dh, (h + 1) * dh);
    const int content = tape.scale(tape.matmul_nt(qh, kh), scale);
    const int relative = tape.rel_scores(qh, rel_k, cfg_.rel_clip, scale);
    int probs = tape.softmax_rows(tape.add(content, relative));
    if (rng) probs = tape.dropout(probs, cfg_.dropout, *rng, train);
    const int ctx_h =
        tape.add(tape.matmul(probs, vh), tape.rel_context(probs, rel_v, cfg_.rel_clip));
    ctx = (h == 0) ? ctx_h : tape.concat_cols(ctx, ctx_h);
  }

  int attn = tape.linear(tape.param(lh.wo), tape.param(lh.bo), ctx);
  if (rng) attn = tape.dropout(attn, cfg_.dropout, *rng, train);
  x = tape.layer_norm_rows(tape.add(x, attn), tape.param(lh.ln1_g), tape.param(lh.ln1_b));

  int ff = tape.linear(tape.param(lh.ff2_w), tape.param(lh.ff2_b),
                       tape.gelu_n(tape.linear(tape.param(lh.ff1_w),
                                               tape.param(lh.ff1_b), x)));
  if (rng) ff = tape.dropout(ff, cfg_.dropout, *rng, train);
  return tape.layer_norm_rows(tape.add(x, ff), tape.param(lh.ln2_g),
                              tape.param(lh.ln2_b));
}

int Model::discriminate_t(Tape& tape, int z, int mel_table, const MelodyGrid& corrupted,
                          Rng* dropout_rng, bool train_mode) const {
  if (variant_ == Variant::NonDat)
    throw contract_error("this variant has no discriminator");
  if (tape.val(z).rows != 1 || tape.val(z).cols != cfg_.d_z)
    throw contract_error("discriminate: z must be 1 x d_z");

  if (variant_ == Variant::NonCr) {
    // GRU discriminator: predicts the melody tokens directly from z
    const int h0_1 = tape.tanh_n(
        tape.linear(tape.param(dis_h0_w1_), tape.param(dis_h0_b1_), z));
    const int h0_2 = tape.tanh_n(
        tape.linear(tape.param(dis_h0_w2_), tape.param(dis_h0_b2_), z));
    const int start = tape.param(dis_start_);
    const int w1_ih = tape.param(dis_gru1_.w_ih), b1_ih = tape.param(dis_gru1_.b_ih);
    const int w1_hh = tape.param(dis_gru1_.w_hh), b1_hh = tape.param(dis_gru1_.b_hh);
    const int w2_ih = tape.param(dis_gru2_.w_ih), b2_ih = tape.param(dis_gru2_.b_ih);
    const int w2_hh = tape.param(dis_gru2_.w_hh), b2_hh = tape.param(dis_gru2_.b_hh);
    const int out_w = tape.param(dis_out_w_), out_b = tape.param(dis_out_b_);
    int h1 = h0_1, h2 = h0_2;
    std::vector<int> rows;
    rows.reserve(kMelodySteps);
    for (int s = 0; s < kMelodySteps; ++s) {
      h1 = tape.gru_cell(start, h1, w1_ih, b1_ih, w1_hh, b1_hh);
      h2 = tape.gru_cell(h1, h2, w2_ih, b2_ih, w2_hh, b2_hh);
      rows.push_back(tape.linear(out_w, out_b, h2));
    }
    return tape.stack_rows(rows);
  }

  const std::vector<int> toks = melody_tokens(corrupted);
  if (int(toks.size()) != kMelodySteps)
    throw contract_error("discriminate: sequence length must be 128");
  const int embs = tape.gather_rows(mel_table, toks);
  const int x_tok = tape.linear(tape.param(dis_tok_w_), tape.param(dis_tok_b_), embs);
  const int x_z = tape.linear(tape.param(dis_z_w_), tape.param(dis_z_b_), z);
  int x = tape.concat_rows(x_z, x_tok);  // z is position 0
  for (const auto& lh : dis_layers_)
    x = attention_layer(tape, x, lh, dropout_rng, train_mode);
  const int positions = tape.slice_rows(x, 1, kMelodySteps + 1);
  return tape.linear(tape.param(dis_out_w_), tape.param(dis_out_b_), positions);
}

// ---- eval wrappers ----

Posterior Model::encode(const ChordGrid& chord, const MelodyGrid& melody) const {
  Tape tape(&store_, 0);
  const int table = melody_table_node(tape);
  const int cond = build_condition(tape, table, melody);
  const auto nodes = encode_t(tape, chord, cond);
  Posterior post{tape.val(nodes.mean), tape.val(nodes.logvar)};
  if (!all_finite(post.mean) || !all_finite(post.log_variance))
    throw contract_error("encode produced non-finite posterior");
  return post;
}

Tensor Model::decode_logits(const LatentCode& z, const MelodyGrid& melody,
                            const ChordGrid* teacher, double tf_rate,
                            Rng* tf_rng) const {
  Tape tape(&store_, 0);
  const int table = melody_table_node(tape);
  const int cond = build_condition(tape, table, melody);
  const int zn = tape.input(z);
  const int logits =
      decode_t(tape, zn, cond, chord_table_node(tape), teacher, tf_rate, tf_rng);
  return tape.val(logits);
}

ChordGrid Model::greedy_decode(const LatentCode& z, const MelodyGrid& melody) const {
  const Tensor logits = decode_logits(z, melody);
  ChordGrid grid;
  for (int t = 0; t < kBeats; ++t) {
    int packed = 0;
    for (int p = 0; p < kChordSlots; ++p) {
      const double* row = logits.row(t * kChordSlots + p);
      const int tok = int(std::max_element(row, row + kChordVocab) - row);
      if (tok != kPadToken) grid.at(t, packed++) = std::uint8_t(tok);
    }
    for (; packed < kChordSlots; ++packed) grid.at(t, packed) = kPadToken;
  }
  return grid;
}

Tensor Model::discriminate(const LatentCode& z, const MelodyGrid& corrupted) const {
  Tape tape(&store_, 0);
  const int table = melody_table_node(tape);
  const int zn = tape.input(z);
  return tape.val(discriminate_t(tape, zn, table, corrupted, nullptr, false));
}

std::pair<long, long> Model::param_count() const {
  return {store_.scalar_count(group_bit(ParamGroup::Enc) | group_bit(ParamGroup::Dec)),
          store_.scalar_count(group_bit(ParamGroup::Dis))};
}

// ---- checkpoints ----

namespace {

constexpr char kCkptMagic[5] = {'H', 'C', 'K', 'P', '1'};

void put_u32(std::string& b, std::uint32_t x) {
  for (int i = 0; i < 4; ++i) b.push_back(char((x >> (8 * i)) & 0xff));
}
void put_u64(std::string& b, std::uint64_t x) {
  for (int i = 0; i < 8; ++i) b.push_back(char((x >> (8 * i)) & 0xff));
}
void put_f64(std::string& b, double x) {
  std::uint64_t bits;
  std::memcpy(&bits, &x, 8);
  put_u64(b, bits);
}
void put_str(std::string& b, const std::string& s) {
  put_u32(b, std::uint32_t(s.size()));
  b += s;
}

struct CkptReader {
  std::string buf;
  std::size_t pos = 0;
  std::uint64_t u_n(int n) {
    if (pos + n > buf.size()) throw io_error("checkpoint truncated");
    std::uint64_t x = 0;
    for (int i = 0; i < n; ++i) x |= std::uint64_t(std::uint8_t(buf[pos + i])) << (8 * i);
    pos += n;
    return x;
  }
  std::uint32_t u32() { return std::uint32_t(u_n(4)); }
  std::uint64_t u64() { return u_n(8); }
  double f64() {
    const std::uint64_t bits = u64();
    double x;
    std::memcpy(&x, &bits, 8);
    return x;
  }
  std::string str() {
    const std::uint32_t n = u32();
    if (pos + n > buf.size()) throw io_error("checkpoint truncated");
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

void put_config(std::string& b, const ModelConfig& c) {
  const int ints[] = {c.d_emb, c.d_z, c.d_p_enc, c.d_t_enc, c.d_t_dec, c.d_p_dec,
                      c.disc_layers, c.disc_heads, c.d_model, c.d_ff, c.chord_vocab,
                      c.melody_vocab, c.rel_clip, c.gru_disc_hidden, c.gru_disc_layers};
  for (int x : ints) put_u32(b, std::uint32_t(x));
  put_f64(b, c.dropout);
  put_f64(b, c.alpha);
}

ModelConfig read_config(CkptReader& r) {
  ModelConfig c;
  int* ints[] = {&c.d_emb, &c.d_z, &c.d_p_enc, &c.d_t_enc, &c.d_t_dec, &c.d_p_dec,
                 &c.disc_layers, &c.disc_heads, &c.d_model, &c.d_ff, &c.chord_vocab,
                 &c.melody_vocab, &c.rel_clip, &c.gru_disc_hidden, &c.gru_disc_layers};
  for (int** p = ints; p != ints + 15; ++p) **p = int(r.u32());
  c.dropout = r.f64();
  c.alpha = r.f64();
  return c;
}

}  // namespace

void save_checkpoint(const Model& model, long step, const std::string& path) {
  std::string out(kCkptMagic, sizeof kCkptMagic);
  put_u32(out, 1);  // format version
  put_str(out, variant_string(model.variant()));
  put_u64(out, std::uint64_t(step));
  put_config(out, model.config());

  const ParamStore& ps = model.params();
  put_u32(out, std::uint32_t(ps.count()));
  for (int id = 0; id < ps.count(); ++id) {
    const auto& e = ps.entry(id);
    put_str(out, e.name);
    put_u32(out, std::uint32_t(e.value.rows));
    put_u32(out, std::uint32_t(e.value.cols));
    for (double x : e.value.v) put_f64(out, x);
  }

  std::ofstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot write " + path);
  f.write(out.data(), std::streamsize(out.size()));
  if (!f) throw io_error("write failed for " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open " + path);
  CkptReader r;
  r.buf.assign((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  if (r.buf.size() < sizeof kCkptMagic ||
      std::memcmp(r.buf.data(), kCkptMagic, sizeof kCkptMagic) != 0)
    throw io_error("not a checkpoint file (bad magic)");
  r.pos = sizeof kCkptMagic;
  const std::uint32_t version = r.u32();
  if (version != 1)
    throw io_error("unsupported checkpoint version " + std::to_string(version));
  const Variant variant = variant_from_string(r.str());
  const long step = long(r.u64());
  const ModelConfig cfg = read_config(r);

  LoadedCheckpoint loaded{Model(cfg, variant, 0), step};
  ParamStore& ps = loaded.model.params();
  const std::uint32_t n = r.u32();
  if (int(n) != ps.count()) throw io_error("checkpoint tensor count mismatch");
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::string name = r.str();
    const int rows = int(r.u32());
    const int cols = int(r.u32());
    const int id = ps.find(name);
    if (id < 0) throw io_error("checkpoint holds unknown tensor " + name);
    Tensor& dst = ps.value(id);
    if (dst.rows != rows || dst.cols != cols)
      throw io_error("checkpoint tensor shape mismatch for " + name);
    for (double& x : dst.v) x = r.f64();
  }
  return loaded;
}

LoadedCheckpoint load_checkpoint(const std::string& path, const ModelConfig& expected) {
  LoadedCheckpoint loaded = load_checkpoint(path);
  if (!(loaded.model.config() == expected))
    throw contract_error("checkpoint config does not match the expected config");
  return loaded;
}

}  // namespace harmonia
