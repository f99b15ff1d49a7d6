#pragma once

#include <map>
#include <string>
#include <vector>

#include "harmonia/grids.hpp"
#include "harmonia/model.hpp"
#include "harmonia/tape.hpp"

namespace harmonia {

struct LossReport {
  double total = 0.0;
  std::map<std::string, double> components;
  int chord_positions = 0;  // token counts used for normalization
  int melody_positions = 0;
  int batch = 0;

  double component(const std::string& name) const {
    auto it = components.find(name);
    return it == components.end() ? 0.0 : it->second;
  }
};

// flat targets: 128 chord slots in (beat, slot) order / 128 melody tokens
std::vector<int> chord_targets(const ChordGrid& grid);
// throws contract_error when the grid contains MASK (targets are clean)
std::vector<int> melody_targets(const MelodyGrid& grid);

// 0.5 * sum_d (mean^2 + var - 1 - log var); >= 0, 0 iff standard normal
double kl_std_normal(const Posterior& post);

// Pure tensor-level losses. These are the reference semantics; the tape
// builders below must agree with them to machine precision.

// mean cross-entropy over all 128 slot positions (PAD is a predicted
// class) + alpha * KL
LossReport vae_loss(const Tensor& chord_logits, const ChordGrid& target,
                    const Posterior& post, const ModelConfig& cfg);

// mean cross-entropy over all 128 positions against the uncorrupted melody
LossReport disc_loss(const Tensor& melody_logits, const MelodyGrid& target);

// mean cross-entropy against the normalized complement distribution
// (uniform 1/121 mass on every wrong token) + alpha * KL
LossReport confusion_loss(const Tensor& melody_logits, const MelodyGrid& target,
                          const Posterior& post, const ModelConfig& cfg);

// ---- tape-level builders ----

struct VaeLossNodes {
  int total, recon, kl;
};
VaeLossNodes vae_loss_t(Tape& tape, int chord_logits, const ChordGrid& target,
                        int mean, int logvar, double alpha);

int disc_loss_t(Tape& tape, int melody_logits, const MelodyGrid& target);

struct ConfusionLossNodes {
  int total, confusion, kl;
};
ConfusionLossNodes confusion_loss_t(Tape& tape, int melody_logits,
                                    const MelodyGrid& target, int mean, int logvar,
                                    double alpha);

}  // namespace harmonia
