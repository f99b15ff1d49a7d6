#include "harmonia/objectives.hpp"

#include <algorithm>
#include <cmath>

namespace harmonia {

std::vector<int> chord_targets(const ChordGrid& grid) {
  std::vector<int> t(kBeats * kChordSlots);
  for (int i = 0; i < kBeats * kChordSlots; ++i) t[i] = grid.slots[i];
  return t;
}

std::vector<int> melody_targets(const MelodyGrid& grid) {
  std::vector<int> t(kMelodySteps);
  for (int s = 0; s < kMelodySteps; ++s) {
    const int tok = melody_token(grid.steps[s]);
    if (tok == kMaskToken)
      throw contract_error("melody targets must be clean (found MASK)");
    t[s] = tok;
  }
  return t;
}

double kl_std_normal(const Posterior& post) {
  if (!all_finite(post.mean) || !all_finite(post.log_variance))
    throw validation_error("kl_std_normal: non-finite posterior");
  double kl = 0.0;
  for (int c = 0; c < post.mean.cols; ++c) {
    const double mu = post.mean.v[c];
    const double lv = post.log_variance.v[c];
    kl += 0.5 * (mu * mu + std::exp(lv) - 1.0 - lv);
  }
  return kl;
}

namespace {

// per-row log-softmax denominator and per-class log-probs on demand
struct RowSoftmax {
  const double* logits;
  int k;
  double max_logit, lse;

  explicit RowSoftmax(const double* row, int k_) : logits(row), k(k_) {
    max_logit = *std::max_element(row, row + k);
    double sum = 0.0;
    for (int c = 0; c < k; ++c) sum += std::exp(row[c] - max_logit);
    lse = max_logit + std::log(sum);
  }
  double log_prob(int c) const { return logits[c] - lse; }
};

double mean_xent(const Tensor& logits, const std::vector<int>& targets) {
  double loss = 0.0;
  for (int r = 0; r < logits.rows; ++r)
    loss -= RowSoftmax(logits.row(r), logits.cols).log_prob(targets[r]);
  return loss / logits.rows;
}

double mean_complement_xent(const Tensor& logits, const std::vector<int>& targets) {
  const int k = logits.cols;
  double loss = 0.0;
  for (int r = 0; r < logits.rows; ++r) {
    const RowSoftmax sm(logits.row(r), k);
    double sum_log = 0.0;
    for (int c = 0; c < k; ++c)
      if (c != targets[r]) sum_log += sm.log_prob(c);
    loss -= sum_log / (k - 1);
  }
  return loss / logits.rows;
}

}  // namespace

LossReport vae_loss(const Tensor& chord_logits, const ChordGrid& target,
                    const Posterior& post, const ModelConfig& cfg) {
  if (chord_logits.rows != kBeats * kChordSlots || chord_logits.cols != kChordVocab)
    throw contract_error("vae_loss: chord logits must be 128 x 13");
  const double recon = mean_xent(chord_logits, chord_targets(target));
  const double kl = kl_std_normal(post);
  LossReport rep;
  rep.components["recon_chord"] = recon;
  rep.components["kl"] = kl;
  rep.total = recon + cfg.alpha * kl;
  rep.chord_positions = kBeats * kChordSlots;
  rep.batch = 1;
  return rep;
}

LossReport disc_loss(const Tensor& melody_logits, const MelodyGrid& target) {
  if (melody_logits.rows != kMelodySteps || melody_logits.cols != kMelodyTargetVocab)
    throw contract_error("disc_loss: melody logits must be 128 x 122");
  const double recon = mean_xent(melody_logits, melody_targets(target));
  LossReport rep;
  rep.components["recon_melody"] = recon;
  rep.total = recon;
  rep.melody_positions = kMelodySteps;
  rep.batch = 1;
  return rep;
}

LossReport confusion_loss(const Tensor& melody_logits, const MelodyGrid& target,
                          const Posterior& post, const ModelConfig& cfg) {
  if (melody_logits.rows != kMelodySteps || melody_logits.cols != kMelodyTargetVocab)
    throw contract_error("confusion_loss: melody logits must be 128 x 122");
  const double conf = mean_complement_xent(melody_logits, melody_targets(target));
  const double kl = kl_std_normal(post);
  LossReport rep;
  rep.components["confusion"] = conf;
  rep.components["kl"] = kl;
  rep.total = conf + cfg.alpha * kl;
  rep.melody_positions = kMelodySteps;
  rep.batch = 1;
  return rep;
}

VaeLossNodes vae_loss_t(Tape& tape, int chord_logits, const ChordGrid& target,
                        int mean, int logvar, double alpha) {
  VaeLossNodes nodes;
  nodes.recon = tape.softmax_xent_mean(chord_logits, chord_targets(target));
  nodes.kl = tape.kl_std_normal_n(mean, logvar);
  nodes.total = tape.add_scaled(nodes.recon, nodes.kl, alpha);
  return nodes;
}

int disc_loss_t(Tape& tape, int melody_logits, const MelodyGrid& target) {
  return tape.softmax_xent_mean(melody_logits, melody_targets(target));
}

ConfusionLossNodes confusion_loss_t(Tape& tape, int melody_logits,
                                    const MelodyGrid& target, int mean, int logvar,
                                    double alpha) {
  ConfusionLossNodes nodes;
  nodes.confusion = tape.xent_complement_mean(melody_logits, melody_targets(target));
  nodes.kl = tape.kl_std_normal_n(mean, logvar);
  nodes.total = tape.add_scaled(nodes.confusion, nodes.kl, alpha);
  return nodes;
}

}  // namespace harmonia
