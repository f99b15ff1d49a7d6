#pragma once

#include <array>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "harmonia/corpus.hpp"
#include "harmonia/model.hpp"
#include "harmonia/objectives.hpp"

namespace harmonia {

// Alternating-optimization loop constants plus decay schedules.
struct TrainSchedule {
  int vae_steps = 10;  // i: VAE steps per outer cycle
  int adv_blocks = 1;  // j: adversarial blocks per cycle
  int disc_steps = 5;  // k: discriminator steps per block
  int enc_steps = 5;   // l: encoder-adversarial steps per block
  int batch_size = 256;
  int epochs = 20;
  double lr_start = 1e-3;
  double lr_end = 1e-5;
  double tf_start = 0.8;
  double tf_end = 0.0;
  double clip_norm = 5.0;
  std::uint64_t seed = 0;
  // adversarial phases draw fresh batches from the stream; when false they
  // reuse the most recent VAE batch
  bool adv_fresh_batches = true;
  // whether an epoch counts passes over the augmented stream or only as
  // many batches as the raw (tag-0) sample count supplies
  enum class EpochUnit { Augmented, Raw };
  EpochUnit epoch_unit = EpochUnit::Augmented;
  // hash parameter groups around every step and verify phase contracts
  bool audit_group_hashes = false;

  void validate() const;
};

// lr(e) = lr_start * r^e with lr(epochs-1) = lr_end exactly
double lr_at(int epoch, const TrainSchedule& sched);
// exponential decay reaching 0.01 at the last epoch, then clamped to tf_end
double tf_at(int epoch, const TrainSchedule& sched);

enum class Phase { Vae, Disc, EncAdv };
std::string phase_string(Phase p);

struct StepRecord {
  long step = 0;
  Phase phase = Phase::Vae;
  LossReport report;
  double lr = 0.0, tf = 0.0;
  bool audited = false;
  std::array<std::uint64_t, 3> group_hashes{{0, 0, 0}};  // enc, dec, dis (post-step)
};

struct EpochRecord {
  int epoch = 0;
  double val_recon = 0.0, val_kl = 0.0;
  double val_disc = 0.0;
  bool has_disc = false;
};

struct MetricsLog {
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
  void write(std::ostream& out) const;
};

// Adaptive-moment optimizer over a fixed id set, with global-norm clipping.
class Adam {
 public:
  Adam(std::vector<int> ids, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8);
  void step(ParamStore& params, const GradVec& grads, double lr, double clip_norm);

 private:
  std::vector<int> ids_;
  double beta1_, beta2_, eps_;
  long t_ = 0;
  std::map<int, std::pair<Tensor, Tensor>> state_;  // id -> (m, v)
};

enum class ExecMode { Serial, Parallel };

struct BatchContext {
  Phase phase = Phase::Vae;
  double tf_rate = 0.0;
  CorruptionSpec corruption;
  long step = 0;
  std::uint64_t seed = 0;
};

struct BatchResult {
  LossReport report;  // component means over the batch
  GradVec grads;      // summed over samples in index order
};

// Per-sample tapes evaluated serially or OpenMP-parallel; gradients reduce
// in sample order either way, so both modes return bitwise-equal results.
BatchResult batch_gradients(const Model& model, const std::vector<Sample>& batch,
                            const BatchContext& ctx, ExecMode mode = ExecMode::Parallel);

// One optimizer step per phase, touching only that phase's parameter
// groups (VAE: enc+dec, disc: dis, enc-adv: enc).
class Trainer {
 public:
  Trainer(Model& model, const TrainSchedule& sched, const CorruptionSpec& corruption,
          ExecMode mode = ExecMode::Parallel);

  void set_rates(double lr, double tf) { lr_ = lr; tf_ = tf; }
  long step_index() const { return step_; }

  LossReport train_step_vae(const std::vector<Sample>& batch);
  LossReport train_step_disc(const std::vector<Sample>& batch);
  LossReport train_step_enc_adv(const std::vector<Sample>& batch);

 private:
  LossReport run_step(const std::vector<Sample>& batch, Phase phase, Adam& opt);

  Model& model_;
  TrainSchedule sched_;
  CorruptionSpec corruption_;
  ExecMode mode_;
  Adam opt_vae_, opt_disc_, opt_enc_;
  double lr_ = 0.0, tf_ = 0.0;
  long step_ = 0;
};

struct TrainResult {
  std::string final_checkpoint;
  MetricsLog log;
};

// Algorithm-1 driver: per cycle, i VAE steps then j x (k disc + l enc-adv
// steps) over shuffled train batches; checkpoints each epoch into out_dir
// and writes out_dir/metrics.log.
TrainResult train(const CorpusFile& corpus, Model& model, const TrainSchedule& sched,
                  const CorruptionSpec& corruption, const std::string& out_dir,
                  ExecMode mode = ExecMode::Parallel);

// validation metrics used by the per-epoch records
EpochRecord validate_epoch(const Model& model, const std::vector<Sample>& val,
                           const CorruptionSpec& corruption, int epoch,
                           std::uint64_t seed);

}  // namespace harmonia
