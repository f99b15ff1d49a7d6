#include "harmonia/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace harmonia {

void TrainSchedule::validate() const {
  if (vae_steps < 0 || adv_blocks < 0 || disc_steps < 0 || enc_steps < 0)
    throw config_error("loop counts must be >= 0");
  if (batch_size < 1) throw config_error("batch_size must be >= 1");
  if (epochs < 2) throw config_error("schedule needs epochs >= 2 for the decays");
  if (lr_end > lr_start) throw config_error("lr_end must be <= lr_start");
  if (tf_end > tf_start) throw config_error("tf_end must be <= tf_start");
  if (lr_start <= 0.0 || lr_end <= 0.0) throw config_error("learning rates must be > 0");
  if (tf_start < 0.0 || tf_start > 1.0) throw config_error("tf_start must be in [0,1]");
}

double lr_at(int epoch, const TrainSchedule& sched) {
  sched.validate();
  if (epoch < 0 || epoch >= sched.epochs) throw config_error("epoch out of range");
  const double ratio = sched.lr_end / sched.lr_start;
  return sched.lr_start * std::pow(ratio, double(epoch) / (sched.epochs - 1));
}

double tf_at(int epoch, const TrainSchedule& sched) {
  sched.validate();
  if (epoch < 0 || epoch >= sched.epochs) throw config_error("epoch out of range");
  if (epoch == sched.epochs - 1) return sched.tf_end;  // exact zero is unreachable
  if (sched.tf_start <= 0.0) return 0.0;
  // decay factor chosen so tf(epochs-1) = 0.01 before the final clamp
  const double ratio = 0.01 / sched.tf_start;
  return sched.tf_start * std::pow(ratio, double(epoch) / (sched.epochs - 1));
}

std::string phase_string(Phase p) {
  switch (p) {
    case Phase::Vae: return "vae";
    case Phase::Disc: return "disc";
    case Phase::EncAdv: return "enc_adv";
  }
  return "vae";
}

namespace {

void write_double(std::ostream& out, double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  out << buf;
}

}  // namespace

void MetricsLog::write(std::ostream& out) const {
  for (const StepRecord& s : steps) {
    out << "step=" << s.step << " phase=" << phase_string(s.phase) << " total=";
    write_double(out, s.report.total);
    for (const auto& [name, value] : s.report.components) {
      out << " " << name << "=";
      write_double(out, value);
    }
    out << " lr=";
    write_double(out, s.lr);
    out << " tf=";
    write_double(out, s.tf);
    if (s.audited) {
      out << " h_enc=" << s.group_hashes[0] << " h_dec=" << s.group_hashes[1]
          << " h_dis=" << s.group_hashes[2];
    }
    out << "\n";
  }
  for (const EpochRecord& e : epochs) {
    out << "epoch=" << e.epoch << " val_recon=";
    write_double(out, e.val_recon);
    out << " val_kl=";
    write_double(out, e.val_kl);
    if (e.has_disc) {
      out << " val_disc=";
      write_double(out, e.val_disc);
    }
    out << "\n";
  }
}

// ---- Adam ----

Adam::Adam(std::vector<int> ids, double beta1, double beta2, double eps)
    : ids_(std::move(ids)), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(ParamStore& params, const GradVec& grads, double lr, double clip_norm) {
  if (lr == 0.0) return;
  ++t_;

  double norm_sq = 0.0;
  for (int id : ids_) {
    if (id >= int(grads.size()) || grads[id].empty()) continue;
    for (double g : grads[id].v) norm_sq += g * g;
  }
  const double norm = std::sqrt(norm_sq);
  const double scale = (clip_norm > 0.0 && norm > clip_norm) ? clip_norm / norm : 1.0;

  const double bc1 = 1.0 - std::pow(beta1_, double(t_));
  const double bc2 = 1.0 - std::pow(beta2_, double(t_));

  for (int id : ids_) {
    Tensor& w = params.value(id);
    auto& [m, v] = state_[id];
    if (m.empty()) {
      m = Tensor(w.rows, w.cols);
      v = Tensor(w.rows, w.cols);
    }
    const bool has_grad = id < int(grads.size()) && !grads[id].empty();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double g = has_grad ? grads[id].v[i] * scale : 0.0;
      m.v[i] = beta1_ * m.v[i] + (1.0 - beta1_) * g;
      v.v[i] = beta2_ * v.v[i] + (1.0 - beta2_) * g * g;
      const double mhat = m.v[i] / bc1;
      const double vhat = v.v[i] / bc2;
      w.v[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

// ---- batch evaluation ----

namespace {

// fixed block size keeps the reduction order independent of thread count
constexpr int kBatchBlock = 32;

struct SampleEval {
  LossReport report;
  GradVec grads;
};

SampleEval eval_sample(const Model& model, const Sample& sample,
                       const BatchContext& ctx, int slot) {
  const ModelConfig& cfg = model.config();
  const std::uint64_t base = mix_seed(ctx.seed, std::uint64_t(ctx.step), slot);
  Rng eps_rng(mix_seed(base, 0xE5ull));
  Rng tf_rng(mix_seed(base, 0x7Full));
  Rng corrupt_rng(mix_seed(base, 0xC0ull));
  Rng drop_rng(mix_seed(base, 0xD0ull));

  SampleEval out;
  out.grads.resize(model.params().count());

  switch (ctx.phase) {
    case Phase::Vae: {
      Tape tape(&model.params(),
                group_bit(ParamGroup::Enc) | group_bit(ParamGroup::Dec));
      const int table = model.melody_table_node(tape);
      const int cond = model.build_condition(tape, table, sample.melody);
      const auto post = model.encode_t(tape, sample.chord, cond);
      const int z = tape.reparam(post.mean, post.logvar, gaussian_eps(cfg.d_z, eps_rng));
      const int logits = model.decode_t(tape, z, cond, model.chord_table_node(tape),
                                        &sample.chord, ctx.tf_rate, &tf_rng);
      const auto nodes = vae_loss_t(tape, logits, sample.chord, post.mean, post.logvar,
                                    cfg.alpha);
      out.report.total = tape.scalar(nodes.total);
      out.report.components["recon_chord"] = tape.scalar(nodes.recon);
      out.report.components["kl"] = tape.scalar(nodes.kl);
      out.report.chord_positions = kBeats * kChordSlots;
      tape.backward(nodes.total, &out.grads);
      break;
    }
    case Phase::Disc: {
      // the encoder is fixed here: z is computed outside the tape so no
      // gradient can reach theta_enc
      const Posterior post = model.encode(sample.chord, sample.melody);
      const Tensor z = reparam_value(post, gaussian_eps(cfg.d_z, eps_rng));
      const MelodyGrid corrupted =
          corrupt(sample.melody, ctx.corruption, corrupt_rng).melody;

      Tape tape(&model.params(), group_bit(ParamGroup::Dis));
      const int table = model.melody_table_node(tape);
      const int zn = tape.input(z);
      const int logits = model.discriminate_t(tape, zn, table, corrupted, &drop_rng,
                                              /*train_mode=*/true);
      const int loss = disc_loss_t(tape, logits, sample.melody);
      out.report.total = tape.scalar(loss);
      out.report.components["recon_melody"] = tape.scalar(loss);
      out.report.melody_positions = kMelodySteps;
      tape.backward(loss, &out.grads);
      break;
    }
    case Phase::EncAdv: {
      const MelodyGrid corrupted =
          corrupt(sample.melody, ctx.corruption, corrupt_rng).melody;

      Tape tape(&model.params(), group_bit(ParamGroup::Enc));
      const int table = model.melody_table_node(tape);
      const int cond = model.build_condition(tape, table, sample.melody);
      const auto post = model.encode_t(tape, sample.chord, cond);
      const int z = tape.reparam(post.mean, post.logvar, gaussian_eps(cfg.d_z, eps_rng));
      const int logits = model.discriminate_t(tape, z, table, corrupted, &drop_rng,
                                              /*train_mode=*/true);
      const auto nodes = confusion_loss_t(tape, logits, sample.melody, post.mean,
                                          post.logvar, cfg.alpha);
      out.report.total = tape.scalar(nodes.total);
      out.report.components["confusion"] = tape.scalar(nodes.confusion);
      out.report.components["kl"] = tape.scalar(nodes.kl);
      out.report.melody_positions = kMelodySteps;
      tape.backward(nodes.total, &out.grads);
      break;
    }
  }
  out.report.batch = 1;
  return out;
}

void accumulate_report(LossReport& into, const LossReport& part) {
  into.total += part.total;
  for (const auto& [name, value] : part.components) into.components[name] += value;
  into.chord_positions = std::max(into.chord_positions, part.chord_positions);
  into.melody_positions = std::max(into.melody_positions, part.melody_positions);
  into.batch += part.batch;
}

}  // namespace

BatchResult batch_gradients(const Model& model, const std::vector<Sample>& batch,
                            const BatchContext& ctx, ExecMode mode) {
  if (batch.empty()) throw contract_error("batch_gradients: empty batch");
  if (ctx.phase != Phase::Vae && !model.has_discriminator())
    throw contract_error("adversarial step on a variant without a discriminator");

  BatchResult result;
  result.grads.resize(model.params().count());

  const int n = int(batch.size());
  std::vector<SampleEval> evals(std::min(n, kBatchBlock));
  for (int block = 0; block < n; block += kBatchBlock) {
    const int count = std::min(kBatchBlock, n - block);
    if (mode == ExecMode::Parallel) {
#if defined(_OPENMP)
#pragma omp parallel for schedule(dynamic, 1)
#endif
      for (int i = 0; i < count; ++i)
        evals[i] = eval_sample(model, batch[block + i], ctx, block + i);
    } else {
      for (int i = 0; i < count; ++i)
        evals[i] = eval_sample(model, batch[block + i], ctx, block + i);
    }
    // ordered reduction: identical result for any thread count
    for (int i = 0; i < count; ++i) {
      accumulate_report(result.report, evals[i].report);
      grad_accumulate(result.grads, evals[i].grads);
      evals[i] = SampleEval{};
    }
  }

  result.report.total /= n;
  for (auto& [name, value] : result.report.components) value /= n;
  const double inv = 1.0 / n;
  for (Tensor& g : result.grads) {
    if (!g.empty())
      for (double& x : g.v) x *= inv;
  }
  return result;
}

// ---- Trainer ----

namespace {
std::vector<int> group_ids_for(const ParamStore& ps, std::uint32_t mask) {
  return ps.ids_in(mask);
}
}  // namespace

Trainer::Trainer(Model& model, const TrainSchedule& sched,
                 const CorruptionSpec& corruption, ExecMode mode)
    : model_(model),
      sched_(sched),
      corruption_(corruption),
      mode_(mode),
      opt_vae_(group_ids_for(model.params(),
                             group_bit(ParamGroup::Enc) | group_bit(ParamGroup::Dec))),
      opt_disc_(group_ids_for(model.params(), group_bit(ParamGroup::Dis))),
      opt_enc_(group_ids_for(model.params(), group_bit(ParamGroup::Enc))) {
  switch (model.variant()) {
    case Variant::Dat:
      if (corruption.method != CorruptionSpec::Method::Transpose)
        throw config_error("dat runs use transpose corruption");
      break;
    case Variant::MaskCr:
      if (corruption.method != CorruptionSpec::Method::Mask)
        throw config_error("mask-cr runs use mask corruption");
      break;
    case Variant::NonCr:
      if (corruption.method != CorruptionSpec::Method::None)
        throw config_error("non-cr runs use no corruption");
      break;
    case Variant::NonDat:
      break;
  }
}

LossReport Trainer::run_step(const std::vector<Sample>& batch, Phase phase, Adam& opt) {
  BatchContext ctx;
  ctx.phase = phase;
  ctx.tf_rate = tf_;
  ctx.corruption = corruption_;
  ctx.step = step_;
  ctx.seed = sched_.seed;
  BatchResult res = batch_gradients(model_, batch, ctx, mode_);
  if (!std::isfinite(res.report.total))
    throw error("non-finite loss at step " + std::to_string(step_) + " (" +
                phase_string(phase) + ")");
  opt.step(model_.params(), res.grads, lr_, sched_.clip_norm);
  ++step_;
  return res.report;
}

LossReport Trainer::train_step_vae(const std::vector<Sample>& batch) {
  return run_step(batch, Phase::Vae, opt_vae_);
}

LossReport Trainer::train_step_disc(const std::vector<Sample>& batch) {
  if (!model_.has_discriminator())
    throw contract_error("non-dat runs have no discriminator step");
  return run_step(batch, Phase::Disc, opt_disc_);
}

LossReport Trainer::train_step_enc_adv(const std::vector<Sample>& batch) {
  if (!model_.has_discriminator())
    throw contract_error("non-dat runs have no encoder-adversarial step");
  return run_step(batch, Phase::EncAdv, opt_enc_);
}

// ---- validation ----

EpochRecord validate_epoch(const Model& model, const std::vector<Sample>& val,
                           const CorruptionSpec& corruption, int epoch,
                           std::uint64_t seed) {
  EpochRecord rec;
  rec.epoch = epoch;
  if (val.empty()) return rec;
  Rng tf_rng(0);  // unused at tf = 1.0

  double recon = 0.0, kl = 0.0, disc = 0.0;
  for (std::size_t i = 0; i < val.size(); ++i) {
    const Sample& s = val[i];
    const Posterior post = model.encode(s.chord, s.melody);
    const Tensor logits =
        model.decode_logits(post.mean, s.melody, &s.chord, 1.0, &tf_rng);
    const LossReport rep = vae_loss(logits, s.chord, post, model.config());
    recon += rep.component("recon_chord");
    kl += rep.component("kl");
    if (model.has_discriminator()) {
      Rng crng(mix_seed(seed, 0x7a11ull, std::uint64_t(epoch), i));
      const MelodyGrid corrupted = corrupt(s.melody, corruption, crng).melody;
      const Tensor dlogits = model.discriminate(post.mean, corrupted);
      disc += disc_loss(dlogits, s.melody).total;
    }
  }
  rec.val_recon = recon / double(val.size());
  rec.val_kl = kl / double(val.size());
  if (model.has_discriminator()) {
    rec.val_disc = disc / double(val.size());
    rec.has_disc = true;
  }
  return rec;
}

// ---- training driver ----

namespace {

void dump_diagnostics(const std::string& out_dir, long step, Phase phase,
                      const std::exception& ex, const Model& model) {
  std::ofstream f(out_dir + "/abort_diagnostics.txt");
  f << "aborted at step " << step << " phase " << phase_string(phase) << "\n";
  f << "reason: " << ex.what() << "\n";
  const ParamStore& ps = model.params();
  for (int id = 0; id < ps.count(); ++id) {
    const auto& e = ps.entry(id);
    double norm = 0.0;
    for (double x : e.value.v) norm += x * x;
    f << e.name << " l2=" << std::sqrt(norm) << "\n";
  }
}

}  // namespace

TrainResult train(const CorpusFile& corpus, Model& model, const TrainSchedule& sched,
                  const CorruptionSpec& corruption, const std::string& out_dir,
                  ExecMode mode) {
  sched.validate();
  if (corpus.train.empty() || corpus.val.empty())
    throw validation_error("training needs a corpus with both splits");
  std::filesystem::create_directories(out_dir);

  Trainer trainer(model, sched, corruption, mode);
  MetricsLog log;

  long raw_count = 0;
  for (const Sample& s : corpus.train)
    if (s.transposition_tag == 0) ++raw_count;

  const bool adversarial = model.has_discriminator();
  const int cycle_len =
      sched.vae_steps +
      (adversarial ? sched.adv_blocks * (sched.disc_steps + sched.enc_steps) : 0);

  std::vector<int> order(corpus.train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = int(i);

  TrainResult result;
  for (int epoch = 0; epoch < sched.epochs; ++epoch) {
    const double lr = lr_at(epoch, sched);
    const double tf = tf_at(epoch, sched);
    trainer.set_rates(lr, tf);

    Rng shuffle_rng(mix_seed(sched.seed, 0x5346ull, std::uint64_t(epoch)));
    for (int i = int(order.size()) - 1; i > 0; --i)
      std::swap(order[i], order[shuffle_rng.uniform_int(i + 1)]);

    long n_batches = (long(order.size()) + sched.batch_size - 1) / sched.batch_size;
    if (sched.epoch_unit == TrainSchedule::EpochUnit::Raw) {
      const long raw_batches = (raw_count + sched.batch_size - 1) / sched.batch_size;
      n_batches = std::min(n_batches, std::max<long>(raw_batches, 1));
    }

    int cycle_pos = 0;
    std::vector<Sample> last_vae_batch;
    for (long b = 0; b < n_batches; ++b) {
      const std::size_t begin = std::size_t(b) * sched.batch_size;
      const std::size_t end = std::min(begin + sched.batch_size, order.size());
      std::vector<Sample> batch;
      batch.reserve(end - begin);
      for (std::size_t i = begin; i < end; ++i) batch.push_back(corpus.train[order[i]]);

      Phase phase = Phase::Vae;
      if (adversarial && cycle_len > 0) {
        const int pos = cycle_pos % cycle_len;
        if (pos < sched.vae_steps) {
          phase = Phase::Vae;
        } else {
          const int adv_pos = (pos - sched.vae_steps) % (sched.disc_steps + sched.enc_steps);
          phase = adv_pos < sched.disc_steps ? Phase::Disc : Phase::EncAdv;
        }
      }
      ++cycle_pos;

      const std::vector<Sample>& step_batch =
          (phase == Phase::Vae || sched.adv_fresh_batches || last_vae_batch.empty())
              ? batch
              : last_vae_batch;

      std::array<std::uint64_t, 3> before{};
      if (sched.audit_group_hashes) {
        before = {model.params().group_hash(ParamGroup::Enc),
                  model.params().group_hash(ParamGroup::Dec),
                  model.params().group_hash(ParamGroup::Dis)};
      }

      StepRecord rec;
      rec.step = trainer.step_index();
      rec.phase = phase;
      rec.lr = lr;
      rec.tf = tf;
      try {
        switch (phase) {
          case Phase::Vae: rec.report = trainer.train_step_vae(step_batch); break;
          case Phase::Disc: rec.report = trainer.train_step_disc(step_batch); break;
          case Phase::EncAdv: rec.report = trainer.train_step_enc_adv(step_batch); break;
        }
      } catch (const std::exception& ex) {
        dump_diagnostics(out_dir, rec.step, phase, ex, model);
        throw;
      }
      if (phase == Phase::Vae) last_vae_batch = batch;

      if (sched.audit_group_hashes) {
        rec.audited = true;
        rec.group_hashes = {model.params().group_hash(ParamGroup::Enc),
                            model.params().group_hash(ParamGroup::Dec),
                            model.params().group_hash(ParamGroup::Dis)};
        const bool enc_frozen = rec.group_hashes[0] == before[0];
        const bool dec_frozen = rec.group_hashes[1] == before[1];
        const bool dis_frozen = rec.group_hashes[2] == before[2];
        bool ok = true;
        switch (phase) {
          case Phase::Vae: ok = dis_frozen; break;
          case Phase::Disc: ok = enc_frozen && dec_frozen; break;
          case Phase::EncAdv: ok = dec_frozen && dis_frozen; break;
        }
        if (!ok)
          throw contract_error("phase " + phase_string(phase) +
                               " touched a frozen parameter group at step " +
                               std::to_string(rec.step));
      }
      log.steps.push_back(std::move(rec));
    }

    log.epochs.push_back(
        validate_epoch(model, corpus.val, corruption, epoch + 1, sched.seed));

    char name[64];
    std::snprintf(name, sizeof name, "ckpt_epoch_%03d.hckpt", epoch + 1);
    save_checkpoint(model, trainer.step_index(), out_dir + "/" + name);
  }

  result.final_checkpoint = out_dir + "/final.hckpt";
  save_checkpoint(model, trainer.step_index(), result.final_checkpoint);
  std::ofstream mf(out_dir + "/metrics.log");
  log.write(mf);
  result.log = std::move(log);
  return result;
}

}  // namespace harmonia
