#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "harmonia/common.hpp"
#include "harmonia/params.hpp"
#include "harmonia/tensor.hpp"

namespace harmonia {

// Reverse-mode tape over dense double tensors. Values are computed eagerly
// as nodes are built (autoregressive decoding reads intermediate values),
// gradients on demand via backward(). One tape evaluates one sample; batch
// parallelism lives above the tape, so a tape is never shared across
// threads.
class Tape {
 public:
  // `trainable_mask` selects the parameter groups that accumulate
  // gradients; parameters outside the mask are treated as constants.
  Tape(const ParamStore* params, std::uint32_t trainable_mask)
      : params_(params), trainable_mask_(trainable_mask) {}

  // ---- leaves ----
  int input(Tensor t);
  int zeros(int rows, int cols);
  int param(int param_id);

  // ---- elementwise / linear algebra ----
  int add(int a, int b);
  int add_scaled(int a, int b, double s);  // a + s*b
  int mul(int a, int b);
  int scale(int a, double s);
  int linear(int w, int b, int x);  // x: n x in, w: out x in, b: 1 x out
  int matmul(int a, int b);         // A (m x k) * B (k x n)
  int matmul_nt(int a, int b);      // A (m x k) * B^T (n x k)

  // ---- shape ----
  int concat_cols(int a, int b);
  int concat_rows(int a, int b);
  int stack_rows(const std::vector<int>& parts);  // equal-width parts
  int slice_rows(int a, int r0, int r1);
  int slice_cols(int a, int c0, int c1);
  int gather_rows(int table, std::vector<int> idx);
  int pool_rows(int a, int group);  // sum consecutive groups of rows

  // ---- activations ----
  int tanh_n(int a);
  int sigmoid_n(int a);
  int gelu_n(int a);
  int softmax_rows(int a);
  int layer_norm_rows(int a, int gain, int bias);
  // identity when !train_mode or rate == 0
  int dropout(int a, double rate, Rng& rng, bool train_mode);

  // ---- fused recurrent / attention kernels ----
  int gru_cell(int x, int h, int w_ih, int b_ih, int w_hh, int b_hh);
  // S[i,j] = scale * q_i . table[clamp(j-i,-clip,clip)+clip]
  int rel_scores(int q, int table, int clip, double scale);
  // Y[i,:] = sum_j P[i,j] * table[clamp(j-i,-clip,clip)+clip]
  int rel_context(int p, int table, int clip);

  // ---- losses / VAE heads ----
  int softmax_xent_mean(int logits, std::vector<int> targets);
  int xent_complement_mean(int logits, std::vector<int> targets);
  int xent_uniform_mean(int logits);  // target = uniform over all classes
  int kl_std_normal_n(int mean, int logvar);
  // z = mean + exp(0.5 * max(logvar, -20)) .* eps
  int reparam(int mean, int logvar, Tensor eps);

  // full melody token table (kMelodyVocab x d) from the shared pitch-class
  // embedding plus octave/hold/rest/mask rows
  int melody_vocab_table(int pitch, int octave, int hold, int rest, int mask);

  const Tensor& val(int id) const { return nodes_[id].val; }
  double scalar(int id) const { return nodes_[id].val.at(0, 0); }

  // Accumulates d(loss)/d(param) into `param_grads` (indexed by param id)
  // for trainable parameters reachable from `loss`. One call per tape.
  void backward(int loss, GradVec* param_grads);

  std::size_t node_count() const { return nodes_.size(); }

 private:
  enum class Op : std::uint8_t {
    Input, Param, Add, AddScaled, Mul, Scale, Linear, Matmul, MatmulNT,
    ConcatCols, ConcatRows, StackRows, SliceRows, SliceCols, GatherRows,
    PoolRows, Tanh, Sigmoid, Gelu, SoftmaxRows, LayerNorm, Dropout,
    GruCell, RelScores, RelContext, SoftmaxXent, XentComplement, XentUniform,
    KlStdNormal, Reparam, MelodyTable,
  };

  struct Node {
    Op op;
    std::array<int, 6> in{{-1, -1, -1, -1, -1, -1}};
    int nin = 0;
    bool needs_grad = false;
    int param_id = -1;
    double aux = 0.0;
    int i0 = 0, i1 = 0;
    std::vector<int> idx;       // gather indices / targets / stack inputs
    std::vector<Tensor> saved;  // op intermediates for backward
    Tensor val;
  };

  int push(Node&& n);
  int make(Op op, std::initializer_list<int> ins, Tensor val);
  Tensor* grad_of(int id);  // nullptr when the node does not need grads
  void backward_node(int id);

  const ParamStore* params_;
  std::uint32_t trainable_mask_;
  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
  std::vector<int> param_node_of_;  // param id -> node id (or -1)
  bool backward_done_ = false;
};

}  // namespace harmonia
