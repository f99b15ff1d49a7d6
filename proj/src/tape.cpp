#include "harmonia/tape.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>

namespace harmonia {

namespace {
constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;
constexpr double kLnEps = 1e-5;      // layernorm epsilon
constexpr double kLogVarFloor = -20.0;
}  // namespace

int Tape::push(Node&& n) {
  nodes_.push_back(std::move(n));
  return int(nodes_.size()) - 1;
}

int Tape::make(Op op, std::initializer_list<int> ins, Tensor val) {
  Node n;
  n.op = op;
  for (int i : ins) {
    if (i < 0 || i >= int(nodes_.size())) throw contract_error("bad tape node id");
    n.in[n.nin++] = i;
    n.needs_grad = n.needs_grad || nodes_[i].needs_grad;
  }
  n.val = std::move(val);
  return push(std::move(n));
}

int Tape::input(Tensor t) {
  Node n;
  n.op = Op::Input;
  n.val = std::move(t);
  return push(std::move(n));
}

int Tape::zeros(int rows, int cols) { return input(Tensor(rows, cols)); }

int Tape::param(int param_id) {
  if (param_id < 0 || param_id >= params_->count())
    throw contract_error("bad parameter id");
  if (param_node_of_.size() < std::size_t(params_->count()))
    param_node_of_.assign(params_->count(), -1);
  if (param_node_of_[param_id] >= 0) return param_node_of_[param_id];
  Node n;
  n.op = Op::Param;
  n.param_id = param_id;
  n.val = params_->value(param_id);  // copy; typical tensors are small
  n.needs_grad = (trainable_mask_ & group_bit(params_->entry(param_id).group)) != 0;
  const int id = push(std::move(n));
  param_node_of_[param_id] = id;
  return id;
}

int Tape::add(int a, int b) {
  const Tensor& ta = nodes_[a].val;
  const Tensor& tb = nodes_[b].val;
  if (ta.rows != tb.rows || ta.cols != tb.cols) throw contract_error("add: shape mismatch");
  Tensor out = ta;
  axpy(1.0, tb, out);
  return make(Op::Add, {a, b}, std::move(out));
}

int Tape::add_scaled(int a, int b, double s) {
  const Tensor& ta = nodes_[a].val;
  const Tensor& tb = nodes_[b].val;
  if (ta.rows != tb.rows || ta.cols != tb.cols)
    throw contract_error("add_scaled: shape mismatch");
  Tensor out = ta;
  axpy(s, tb, out);
  const int id = make(Op::AddScaled, {a, b}, std::move(out));
  nodes_[id].aux = s;
  return id;
}

int Tape::mul(int a, int b) {
  const Tensor& ta = nodes_[a].val;
  const Tensor& tb = nodes_[b].val;
  if (ta.rows != tb.rows || ta.cols != tb.cols) throw contract_error("mul: shape mismatch");
  Tensor out = ta;
  for (std::size_t i = 0; i < out.size(); ++i) out.v[i] *= tb.v[i];
  return make(Op::Mul, {a, b}, std::move(out));
}

int Tape::scale(int a, double s) {
  Tensor out = nodes_[a].val;
  for (double& x : out.v) x *= s;
  const int id = make(Op::Scale, {a}, std::move(out));
  nodes_[id].aux = s;
  return id;
}

int Tape::linear(int w, int b, int x) {
  const Tensor& tw = nodes_[w].val;
  const Tensor& tb = nodes_[b].val;
  const Tensor& tx = nodes_[x].val;
  if (tx.cols != tw.cols || tb.rows != 1 || tb.cols != tw.rows)
    throw contract_error("linear: shape mismatch");
  Tensor out(tx.rows, tw.rows);
  for (int r = 0; r < tx.rows; ++r) {
    double* dst = out.row(r);
    std::copy(tb.data(), tb.data() + tb.cols, dst);
    matvec_add(tw, tx.row(r), dst);
  }
  return make(Op::Linear, {w, b, x}, std::move(out));
}

int Tape::matmul(int a, int b) {
  const Tensor& ta = nodes_[a].val;
  const Tensor& tb = nodes_[b].val;
  if (ta.cols != tb.rows) throw contract_error("matmul: shape mismatch");
  Tensor out;
  harmonia::matmul(ta, tb, out);
  return make(Op::Matmul, {a, b}, std::move(out));
}

int Tape::matmul_nt(int a, int b) {
  const Tensor& ta = nodes_[a].val;
  const Tensor& tb = nodes_[b].val;
  if (ta.cols != tb.cols) throw contract_error("matmul_nt: shape mismatch");
  Tensor out;
  harmonia::matmul_nt(ta, tb, out);
  return make(Op::MatmulNT, {a, b}, std::move(out));
}

int Tape::concat_cols(int a, int b) {
  const Tensor& ta = nodes_[a].val;
  const Tensor& tb = nodes_[b].val;
  if (ta.rows != tb.rows) throw contract_error("concat_cols: row mismatch");
  Tensor out(ta.rows, ta.cols + tb.cols);
  for (int r = 0; r < ta.rows; ++r) {
    std::copy(ta.row(r), ta.row(r) + ta.cols, out.row(r));
    std::copy(tb.row(r), tb.row(r) + tb.cols, out.row(r) + ta.cols);
  }
  return make(Op::ConcatCols, {a, b}, std::move(out));
}

int Tape::concat_rows(int a, int b) {
  const Tensor& ta = nodes_[a].val;
  const Tensor& tb = nodes_[b].val;
  if (ta.cols != tb.cols) throw contract_error("concat_rows: col mismatch");
  Tensor out(ta.rows + tb.rows, ta.cols);
  std::copy(ta.v.begin(), ta.v.end(), out.v.begin());
  std::copy(tb.v.begin(), tb.v.end(), out.v.begin() + ta.size());
  return make(Op::ConcatRows, {a, b}, std::move(out));
}

int Tape::stack_rows(const std::vector<int>& parts) {
  if (parts.empty()) throw contract_error("stack_rows: empty");
  int rows = 0;
  const int cols = nodes_[parts[0]].val.cols;
  bool needs = false;
  for (int p : parts) {
    if (nodes_[p].val.cols != cols) throw contract_error("stack_rows: col mismatch");
    rows += nodes_[p].val.rows;
    needs = needs || nodes_[p].needs_grad;
  }
  Tensor out(rows, cols);
  int r = 0;
  for (int p : parts) {
    const Tensor& t = nodes_[p].val;
    std::copy(t.v.begin(), t.v.end(), out.row(r));
    r += t.rows;
  }
  Node n;
  n.op = Op::StackRows;
  n.idx = parts;
  n.needs_grad = needs;
  n.val = std::move(out);
  return push(std::move(n));
}

int Tape::slice_rows(int a, int r0, int r1) {
  const Tensor& ta = nodes_[a].val;
  if (r0 < 0 || r1 > ta.rows || r0 >= r1) throw contract_error("slice_rows: bad range");
  Tensor out(r1 - r0, ta.cols);
  std::copy(ta.row(r0), ta.row(r0) + out.size(), out.data());
  const int id = make(Op::SliceRows, {a}, std::move(out));
  nodes_[id].i0 = r0;
  nodes_[id].i1 = r1;
  return id;
}

int Tape::slice_cols(int a, int c0, int c1) {
  const Tensor& ta = nodes_[a].val;
  if (c0 < 0 || c1 > ta.cols || c0 >= c1) throw contract_error("slice_cols: bad range");
  Tensor out(ta.rows, c1 - c0);
  for (int r = 0; r < ta.rows; ++r)
    std::copy(ta.row(r) + c0, ta.row(r) + c1, out.row(r));
  const int id = make(Op::SliceCols, {a}, std::move(out));
  nodes_[id].i0 = c0;
  nodes_[id].i1 = c1;
  return id;
}

int Tape::gather_rows(int table, std::vector<int> idx) {
  const Tensor& tt = nodes_[table].val;
  Tensor out(int(idx.size()), tt.cols);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= tt.rows) throw contract_error("gather_rows: index");
    std::copy(tt.row(idx[i]), tt.row(idx[i]) + tt.cols, out.row(int(i)));
  }
  const int id = make(Op::GatherRows, {table}, std::move(out));
  nodes_[id].idx = std::move(idx);
  return id;
}

int Tape::pool_rows(int a, int group) {
  const Tensor& ta = nodes_[a].val;
  if (group < 1 || ta.rows % group != 0) throw contract_error("pool_rows: bad group");
  Tensor out(ta.rows / group, ta.cols);
  for (int r = 0; r < ta.rows; ++r) {
    double* dst = out.row(r / group);
    const double* src = ta.row(r);
    for (int c = 0; c < ta.cols; ++c) dst[c] += src[c];
  }
  const int id = make(Op::PoolRows, {a}, std::move(out));
  nodes_[id].i0 = group;
  return id;
}

int Tape::tanh_n(int a) {
  Tensor out = nodes_[a].val;
  for (double& x : out.v) x = std::tanh(x);
  return make(Op::Tanh, {a}, std::move(out));
}

int Tape::sigmoid_n(int a) {
  Tensor out = nodes_[a].val;
  for (double& x : out.v) x = 1.0 / (1.0 + std::exp(-x));
  return make(Op::Sigmoid, {a}, std::move(out));
}

int Tape::gelu_n(int a) {
  Tensor out = nodes_[a].val;
  for (double& x : out.v) x = 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
  return make(Op::Gelu, {a}, std::move(out));
}

int Tape::softmax_rows(int a) {
  Tensor out = nodes_[a].val;
  for (int r = 0; r < out.rows; ++r) {
    double* row = out.row(r);
    const double m = *std::max_element(row, row + out.cols);
    double sum = 0.0;
    for (int c = 0; c < out.cols; ++c) {
      row[c] = std::exp(row[c] - m);
      sum += row[c];
    }
    for (int c = 0; c < out.cols; ++c) row[c] /= sum;
  }
  return make(Op::SoftmaxRows, {a}, std::move(out));
}

int Tape::layer_norm_rows(int a, int gain, int bias) {
  const Tensor& ta = nodes_[a].val;
  const Tensor& tg = nodes_[gain].val;
  const Tensor& tb = nodes_[bias].val;
  if (tg.cols != ta.cols || tb.cols != ta.cols)
    throw contract_error("layer_norm: shape mismatch");
  Tensor out(ta.rows, ta.cols);
  Tensor xhat(ta.rows, ta.cols);
  Tensor rstd(ta.rows, 1);
  for (int r = 0; r < ta.rows; ++r) {
    const double* x = ta.row(r);
    double mean = 0.0;
    for (int c = 0; c < ta.cols; ++c) mean += x[c];
    mean /= ta.cols;
    double var = 0.0;
    for (int c = 0; c < ta.cols; ++c) var += (x[c] - mean) * (x[c] - mean);
    var /= ta.cols;
    const double rs = 1.0 / std::sqrt(var + kLnEps);
    rstd.at(r, 0) = rs;
    for (int c = 0; c < ta.cols; ++c) {
      xhat.at(r, c) = (x[c] - mean) * rs;
      out.at(r, c) = tg.at(0, c) * xhat.at(r, c) + tb.at(0, c);
    }
  }
  const int id = make(Op::LayerNorm, {a, gain, bias}, std::move(out));
  nodes_[id].saved.push_back(std::move(xhat));
  nodes_[id].saved.push_back(std::move(rstd));
  return id;
}

int Tape::dropout(int a, double rate, Rng& rng, bool train_mode) {
  if (!train_mode || rate <= 0.0) return a;
  const Tensor& ta = nodes_[a].val;
  Tensor mask(ta.rows, ta.cols);
  const double keep_scale = 1.0 / (1.0 - rate);
  for (double& m : mask.v) m = rng.bernoulli(rate) ? 0.0 : keep_scale;
  Tensor out = ta;
  for (std::size_t i = 0; i < out.size(); ++i) out.v[i] *= mask.v[i];
  const int id = make(Op::Dropout, {a}, std::move(out));
  nodes_[id].saved.push_back(std::move(mask));
  return id;
}

int Tape::gru_cell(int x, int h, int w_ih, int b_ih, int w_hh, int b_hh) {
  const Tensor& tx = nodes_[x].val;
  const Tensor& th = nodes_[h].val;
  const Tensor& wih = nodes_[w_ih].val;
  const Tensor& whh = nodes_[w_hh].val;
  const int hid = th.cols;
  if (tx.rows != 1 || th.rows != 1 || wih.rows != 3 * hid || whh.rows != 3 * hid ||
      wih.cols != tx.cols || whh.cols != hid ||
      nodes_[b_ih].val.cols != 3 * hid || nodes_[b_hh].val.cols != 3 * hid)
    throw contract_error("gru_cell: shape mismatch");

  std::vector<double> gi(3 * hid), gh(3 * hid);
  matvec(wih, tx.data(), gi.data());
  matvec(whh, th.data(), gh.data());
  const double* bi = nodes_[b_ih].val.data();
  const double* bh = nodes_[b_hh].val.data();
  for (int j = 0; j < 3 * hid; ++j) {
    gi[j] += bi[j];
    gh[j] += bh[j];
  }

  Tensor r(1, hid), u(1, hid), n(1, hid), ghn(1, hid), out(1, hid);
  for (int j = 0; j < hid; ++j) {
    r.v[j] = 1.0 / (1.0 + std::exp(-(gi[j] + gh[j])));
    u.v[j] = 1.0 / (1.0 + std::exp(-(gi[hid + j] + gh[hid + j])));
    ghn.v[j] = gh[2 * hid + j];
    n.v[j] = std::tanh(gi[2 * hid + j] + r.v[j] * ghn.v[j]);
    out.v[j] = (1.0 - u.v[j]) * n.v[j] + u.v[j] * th.v[j];
  }
  const int id = make(Op::GruCell, {x, h, w_ih, b_ih, w_hh, b_hh}, std::move(out));
  nodes_[id].saved = {std::move(r), std::move(u), std::move(n), std::move(ghn)};
  return id;
}

int Tape::rel_scores(int q, int table, int clip, double scale_f) {
  const Tensor& tq = nodes_[q].val;
  const Tensor& tt = nodes_[table].val;
  if (tt.rows != 2 * clip + 1 || tt.cols != tq.cols)
    throw contract_error("rel_scores: shape mismatch");
  const int len = tq.rows;
  Tensor out(len, len);
  for (int i = 0; i < len; ++i) {
    const double* qi = tq.row(i);
    for (int j = 0; j < len; ++j) {
      const int rel = std::clamp(j - i, -clip, clip) + clip;
      const double* tr = tt.row(rel);
      double acc = 0.0;
#pragma omp simd reduction(+ : acc)
      for (int c = 0; c < tq.cols; ++c) acc += qi[c] * tr[c];
      out.at(i, j) = scale_f * acc;
    }
  }
  const int id = make(Op::RelScores, {q, table}, std::move(out));
  nodes_[id].i0 = clip;
  nodes_[id].aux = scale_f;
  return id;
}

int Tape::rel_context(int p, int table, int clip) {
  const Tensor& tp = nodes_[p].val;
  const Tensor& tt = nodes_[table].val;
  if (tp.rows != tp.cols || tt.rows != 2 * clip + 1)
    throw contract_error("rel_context: shape mismatch");
  const int len = tp.rows;
  Tensor out(len, tt.cols);
  for (int i = 0; i < len; ++i) {
    double* oi = out.row(i);
    for (int j = 0; j < len; ++j) {
      const int rel = std::clamp(j - i, -clip, clip) + clip;
      const double* tr = tt.row(rel);
      const double pv = tp.at(i, j);
#pragma omp simd
      for (int c = 0; c < tt.cols; ++c) oi[c] += pv * tr[c];
    }
  }
  const int id = make(Op::RelContext, {p, table}, std::move(out));
  nodes_[id].i0 = clip;
  return id;
}

namespace {
// row-wise softmax probabilities of logits, numerically stabilized
Tensor softmax_probs(const Tensor& logits) {
  Tensor probs = logits;
  for (int r = 0; r < probs.rows; ++r) {
    double* row = probs.row(r);
    const double m = *std::max_element(row, row + probs.cols);
    double sum = 0.0;
    for (int c = 0; c < probs.cols; ++c) {
      row[c] = std::exp(row[c] - m);
      sum += row[c];
    }
    for (int c = 0; c < probs.cols; ++c) row[c] /= sum;
  }
  return probs;
}
}  // namespace

int Tape::softmax_xent_mean(int logits, std::vector<int> targets) {
  const Tensor& tl = nodes_[logits].val;
  if (int(targets.size()) != tl.rows) throw contract_error("xent: target count mismatch");
  for (int t : targets)
    if (t < 0 || t >= tl.cols) throw contract_error("xent: target out of range");
  Tensor probs = softmax_probs(tl);
  double loss = 0.0;
  for (int r = 0; r < tl.rows; ++r) loss -= std::log(std::max(probs.at(r, targets[r]), 1e-300));
  Tensor out(1, 1);
  out.at(0, 0) = loss / tl.rows;
  const int id = make(Op::SoftmaxXent, {logits}, std::move(out));
  nodes_[id].idx = std::move(targets);
  nodes_[id].saved.push_back(std::move(probs));
  return id;
}

int Tape::xent_complement_mean(int logits, std::vector<int> targets) {
  const Tensor& tl = nodes_[logits].val;
  if (int(targets.size()) != tl.rows) throw contract_error("xent: target count mismatch");
  const int k = tl.cols;
  if (k < 2) throw contract_error("complement xent needs >= 2 classes");
  Tensor probs = softmax_probs(tl);
  double loss = 0.0;
  for (int r = 0; r < tl.rows; ++r) {
    // -(1/(K-1)) * sum_{w != t} log p_w
    double sum_log = 0.0;
    for (int c = 0; c < k; ++c)
      if (c != targets[r]) sum_log += std::log(std::max(probs.at(r, c), 1e-300));
    loss -= sum_log / (k - 1);
  }
  Tensor out(1, 1);
  out.at(0, 0) = loss / tl.rows;
  const int id = make(Op::XentComplement, {logits}, std::move(out));
  nodes_[id].idx = std::move(targets);
  nodes_[id].saved.push_back(std::move(probs));
  return id;
}

int Tape::xent_uniform_mean(int logits) {
  const Tensor& tl = nodes_[logits].val;
  const int k = tl.cols;
  Tensor probs = softmax_probs(tl);
  double loss = 0.0;
  for (int r = 0; r < tl.rows; ++r) {
    double sum_log = 0.0;
    for (int c = 0; c < k; ++c) sum_log += std::log(std::max(probs.at(r, c), 1e-300));
    loss -= sum_log / k;
  }
  Tensor out(1, 1);
  out.at(0, 0) = loss / tl.rows;
  const int id = make(Op::XentUniform, {logits}, std::move(out));
  nodes_[id].saved.push_back(std::move(probs));
  return id;
}

int Tape::kl_std_normal_n(int mean, int logvar) {
  const Tensor& tm = nodes_[mean].val;
  const Tensor& tv = nodes_[logvar].val;
  if (tm.rows != 1 || tv.rows != 1 || tm.cols != tv.cols)
    throw contract_error("kl: shape mismatch");
  double kl = 0.0;
  for (int c = 0; c < tm.cols; ++c) {
    const double mu = tm.v[c];
    const double lv = tv.v[c];
    kl += 0.5 * (mu * mu + std::exp(lv) - 1.0 - lv);
  }
  Tensor out(1, 1);
  out.at(0, 0) = kl;
  return make(Op::KlStdNormal, {mean, logvar}, std::move(out));
}

int Tape::reparam(int mean, int logvar, Tensor eps) {
  const Tensor& tm = nodes_[mean].val;
  const Tensor& tv = nodes_[logvar].val;
  if (eps.rows != 1 || eps.cols != tm.cols || tv.cols != tm.cols)
    throw contract_error("reparam: shape mismatch");
  Tensor out(1, tm.cols);
  for (int c = 0; c < tm.cols; ++c) {
    const double lv = std::max(tv.v[c], kLogVarFloor);
    out.v[c] = tm.v[c] + std::exp(0.5 * lv) * eps.v[c];
  }
  const int id = make(Op::Reparam, {mean, logvar}, std::move(out));
  nodes_[id].saved.push_back(std::move(eps));
  return id;
}

int Tape::melody_vocab_table(int pitch, int octave, int hold, int rest, int mask) {
  const Tensor& tp = nodes_[pitch].val;
  const Tensor& to = nodes_[octave].val;
  if (tp.rows != 12 || to.rows != 10 || tp.cols != to.cols)
    throw contract_error("melody_vocab_table: shape mismatch");
  const int d = tp.cols;
  Tensor out(123, d);
  for (int tok = 0; tok < 120; ++tok) {
    const double* pe = tp.row(tok % 12);
    const double* oe = to.row(tok / 12);
    double* dst = out.row(tok);
    for (int c = 0; c < d; ++c) dst[c] = pe[c] + oe[c];
  }
  std::copy(nodes_[hold].val.data(), nodes_[hold].val.data() + d, out.row(120));
  std::copy(nodes_[rest].val.data(), nodes_[rest].val.data() + d, out.row(121));
  std::copy(nodes_[mask].val.data(), nodes_[mask].val.data() + d, out.row(122));
  return make(Op::MelodyTable, {pitch, octave, hold, rest, mask}, std::move(out));
}

Tensor* Tape::grad_of(int id) {
  if (!nodes_[id].needs_grad) return nullptr;
  Tensor& g = grads_[id];
  if (g.empty()) g = Tensor(nodes_[id].val.rows, nodes_[id].val.cols);
  return &g;
}

void Tape::backward(int loss, GradVec* param_grads) {
  if (backward_done_) throw contract_error("backward called twice on one tape");
  backward_done_ = true;
  const Node& ln = nodes_[loss];
  if (ln.val.rows != 1 || ln.val.cols != 1)
    throw contract_error("backward: loss must be scalar");
  if (!ln.needs_grad) return;  // nothing trainable reachable

  grads_.assign(nodes_.size(), Tensor());
  grads_[loss] = Tensor(1, 1);
  grads_[loss].at(0, 0) = 1.0;

  for (int id = loss; id >= 0; --id) {
    if (grads_[id].empty() || !nodes_[id].needs_grad) continue;
    backward_node(id);
  }

  if (param_grads) {
    if (param_grads->size() < std::size_t(params_->count()))
      param_grads->resize(params_->count());
    for (std::size_t pid = 0; pid < param_node_of_.size(); ++pid) {
      const int nid = param_node_of_[pid];
      if (nid < 0 || grads_[nid].empty()) continue;
      Tensor& dst = (*param_grads)[pid];
      if (dst.empty())
        dst = std::move(grads_[nid]);
      else
        axpy(1.0, grads_[nid], dst);
    }
  }
}

void Tape::backward_node(int id) {
  Node& n = nodes_[id];
  const Tensor& g = grads_[id];

  auto in_val = [&](int slot) -> const Tensor& { return nodes_[n.in[slot]].val; };
  auto in_grad = [&](int slot) -> Tensor* { return grad_of(n.in[slot]); };

  switch (n.op) {
    case Op::Input:
    case Op::Param:
      break;

    case Op::Add: {
      if (Tensor* da = in_grad(0)) axpy(1.0, g, *da);
      if (Tensor* db = in_grad(1)) axpy(1.0, g, *db);
      break;
    }
    case Op::AddScaled: {
      if (Tensor* da = in_grad(0)) axpy(1.0, g, *da);
      if (Tensor* db = in_grad(1)) axpy(n.aux, g, *db);
      break;
    }
    case Op::Mul: {
      if (Tensor* da = in_grad(0)) {
        const Tensor& b = in_val(1);
        for (std::size_t i = 0; i < g.size(); ++i) da->v[i] += g.v[i] * b.v[i];
      }
      if (Tensor* db = in_grad(1)) {
        const Tensor& a = in_val(0);
        for (std::size_t i = 0; i < g.size(); ++i) db->v[i] += g.v[i] * a.v[i];
      }
      break;
    }
    case Op::Scale: {
      if (Tensor* da = in_grad(0)) axpy(n.aux, g, *da);
      break;
    }
    case Op::Linear: {
      const Tensor& w = in_val(0);
      const Tensor& x = in_val(2);
      if (Tensor* dw = in_grad(0)) matmul_tn_add(g, x, *dw);  // dW += g^T x
      if (Tensor* db = in_grad(1)) {
        for (int r = 0; r < g.rows; ++r)
          for (int c = 0; c < g.cols; ++c) db->v[c] += g.at(r, c);
      }
      if (Tensor* dx = in_grad(2)) matmul_add(g, w, *dx);  // dx += g W
      break;
    }
    case Op::Matmul: {
      const Tensor& a = in_val(0);
      const Tensor& b = in_val(1);
      if (Tensor* da = in_grad(0)) matmul_nt_add(g, b, *da);  // dA += g B^T
      if (Tensor* db = in_grad(1)) matmul_tn_add(a, g, *db);  // dB += A^T g
      break;
    }
    case Op::MatmulNT: {
      const Tensor& a = in_val(0);
      const Tensor& b = in_val(1);
      if (Tensor* da = in_grad(0)) matmul_add(g, b, *da);     // dA += g B
      if (Tensor* db = in_grad(1)) matmul_tn_add(g, a, *db);  // dB += g^T A
      break;
    }
    case Op::ConcatCols: {
      const int ca = in_val(0).cols;
      if (Tensor* da = in_grad(0)) {
        for (int r = 0; r < g.rows; ++r)
          for (int c = 0; c < ca; ++c) da->at(r, c) += g.at(r, c);
      }
      if (Tensor* db = in_grad(1)) {
        for (int r = 0; r < g.rows; ++r)
          for (int c = 0; c < db->cols; ++c) db->at(r, c) += g.at(r, ca + c);
      }
      break;
    }
    case Op::ConcatRows: {
      const int ra = in_val(0).rows;
      if (Tensor* da = in_grad(0)) {
        for (std::size_t i = 0; i < da->size(); ++i) da->v[i] += g.v[i];
      }
      if (Tensor* db = in_grad(1)) {
        const std::size_t off = std::size_t(ra) * g.cols;
        for (std::size_t i = 0; i < db->size(); ++i) db->v[i] += g.v[off + i];
      }
      break;
    }
    case Op::StackRows: {
      int r = 0;
      for (int pid : n.idx) {
        const int rows = nodes_[pid].val.rows;
        if (Tensor* dp = grad_of(pid)) {
          for (int rr = 0; rr < rows; ++rr)
            for (int c = 0; c < g.cols; ++c) dp->at(rr, c) += g.at(r + rr, c);
        }
        r += rows;
      }
      break;
    }
    case Op::SliceRows: {
      if (Tensor* da = in_grad(0)) {
        for (int r = 0; r < g.rows; ++r)
          for (int c = 0; c < g.cols; ++c) da->at(n.i0 + r, c) += g.at(r, c);
      }
      break;
    }
    case Op::SliceCols: {
      if (Tensor* da = in_grad(0)) {
        for (int r = 0; r < g.rows; ++r)
          for (int c = 0; c < g.cols; ++c) da->at(r, n.i0 + c) += g.at(r, c);
      }
      break;
    }
    case Op::GatherRows: {
      if (Tensor* dt = in_grad(0)) {
        for (std::size_t i = 0; i < n.idx.size(); ++i) {
          double* dst = dt->row(n.idx[i]);
          const double* src = g.row(int(i));
          for (int c = 0; c < g.cols; ++c) dst[c] += src[c];
        }
      }
      break;
    }
    case Op::PoolRows: {
      if (Tensor* da = in_grad(0)) {
        for (int r = 0; r < da->rows; ++r) {
          const double* src = g.row(r / n.i0);
          double* dst = da->row(r);
          for (int c = 0; c < g.cols; ++c) dst[c] += src[c];
        }
      }
      break;
    }
    case Op::Tanh: {
      if (Tensor* da = in_grad(0)) {
        const Tensor& y = n.val;
        for (std::size_t i = 0; i < g.size(); ++i)
          da->v[i] += g.v[i] * (1.0 - y.v[i] * y.v[i]);
      }
      break;
    }
    case Op::Sigmoid: {
      if (Tensor* da = in_grad(0)) {
        const Tensor& y = n.val;
        for (std::size_t i = 0; i < g.size(); ++i)
          da->v[i] += g.v[i] * y.v[i] * (1.0 - y.v[i]);
      }
      break;
    }
    case Op::Gelu: {
      if (Tensor* da = in_grad(0)) {
        const Tensor& x = in_val(0);
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double xv = x.v[i];
          const double cdf = 0.5 * (1.0 + std::erf(xv * kInvSqrt2));
          const double pdf = kInvSqrt2Pi * std::exp(-0.5 * xv * xv);
          da->v[i] += g.v[i] * (cdf + xv * pdf);
        }
      }
      break;
    }
    case Op::SoftmaxRows: {
      if (Tensor* da = in_grad(0)) {
        const Tensor& y = n.val;
        for (int r = 0; r < y.rows; ++r) {
          double dot = 0.0;
          for (int c = 0; c < y.cols; ++c) dot += g.at(r, c) * y.at(r, c);
          for (int c = 0; c < y.cols; ++c)
            da->at(r, c) += y.at(r, c) * (g.at(r, c) - dot);
        }
      }
      break;
    }
    case Op::LayerNorm: {
      const Tensor& xhat = n.saved[0];
      const Tensor& rstd = n.saved[1];
      const Tensor& gain = in_val(1);
      const int cols = g.cols;
      if (Tensor* dg = in_grad(1)) {
        for (int r = 0; r < g.rows; ++r)
          for (int c = 0; c < cols; ++c) dg->v[c] += g.at(r, c) * xhat.at(r, c);
      }
      if (Tensor* db = in_grad(2)) {
        for (int r = 0; r < g.rows; ++r)
          for (int c = 0; c < cols; ++c) db->v[c] += g.at(r, c);
      }
      if (Tensor* da = in_grad(0)) {
        for (int r = 0; r < g.rows; ++r) {
          double m1 = 0.0, m2 = 0.0;
          for (int c = 0; c < cols; ++c) {
            const double dxh = g.at(r, c) * gain.v[c];
            m1 += dxh;
            m2 += dxh * xhat.at(r, c);
          }
          m1 /= cols;
          m2 /= cols;
          const double rs = rstd.at(r, 0);
          for (int c = 0; c < cols; ++c) {
            const double dxh = g.at(r, c) * gain.v[c];
            da->at(r, c) += rs * (dxh - m1 - xhat.at(r, c) * m2);
          }
        }
      }
      break;
    }
    case Op::Dropout: {
      if (Tensor* da = in_grad(0)) {
        const Tensor& mask = n.saved[0];
        for (std::size_t i = 0; i < g.size(); ++i) da->v[i] += g.v[i] * mask.v[i];
      }
      break;
    }
    case Op::GruCell: {
      const Tensor& x = in_val(0);
      const Tensor& h = in_val(1);
      const Tensor& wih = in_val(2);
      const Tensor& whh = in_val(4);
      const Tensor& r = n.saved[0];
      const Tensor& u = n.saved[1];
      const Tensor& nn = n.saved[2];
      const Tensor& ghn = n.saved[3];
      const int hid = h.cols;

      std::vector<double> dgi(3 * hid), dgh(3 * hid);
      std::vector<double> dh_local(hid, 0.0);
      for (int j = 0; j < hid; ++j) {
        const double go = g.v[j];
        const double dn = go * (1.0 - u.v[j]);
        const double du = go * (h.v[j] - nn.v[j]);
        dh_local[j] += go * u.v[j];
        const double dan = dn * (1.0 - nn.v[j] * nn.v[j]);
        const double dr = dan * ghn.v[j];
        const double dau = du * u.v[j] * (1.0 - u.v[j]);
        const double dar = dr * r.v[j] * (1.0 - r.v[j]);
        dgi[j] = dar;
        dgi[hid + j] = dau;
        dgi[2 * hid + j] = dan;
        dgh[j] = dar;
        dgh[hid + j] = dau;
        dgh[2 * hid + j] = dan * r.v[j];
      }

      if (Tensor* dwih = in_grad(2)) outer_add(*dwih, dgi.data(), x.data(), 3 * hid, x.cols);
      if (Tensor* dbih = in_grad(3))
        for (int j = 0; j < 3 * hid; ++j) dbih->v[j] += dgi[j];
      if (Tensor* dwhh = in_grad(4)) outer_add(*dwhh, dgh.data(), h.data(), 3 * hid, hid);
      if (Tensor* dbhh = in_grad(5))
        for (int j = 0; j < 3 * hid; ++j) dbhh->v[j] += dgh[j];
      if (Tensor* dx = in_grad(0)) matvec_t_add(wih, dgi.data(), dx->data());
      if (Tensor* dh = in_grad(1)) {
        matvec_t_add(whh, dgh.data(), dh->data());
        for (int j = 0; j < hid; ++j) dh->v[j] += dh_local[j];
      }
      break;
    }
    case Op::RelScores: {
      const Tensor& q = in_val(0);
      const Tensor& table = in_val(1);
      const int clip = n.i0;
      const int len = q.rows;
      Tensor* dq = in_grad(0);
      Tensor* dt = in_grad(1);
      for (int i = 0; i < len; ++i) {
        for (int j = 0; j < len; ++j) {
          const double gv = n.aux * g.at(i, j);
          if (gv == 0.0) continue;
          const int rel = std::clamp(j - i, -clip, clip) + clip;
          if (dq) {
            const double* tr = table.row(rel);
            double* dqi = dq->row(i);
            for (int c = 0; c < q.cols; ++c) dqi[c] += gv * tr[c];
          }
          if (dt) {
            const double* qi = q.row(i);
            double* dtr = dt->row(rel);
            for (int c = 0; c < q.cols; ++c) dtr[c] += gv * qi[c];
          }
        }
      }
      break;
    }
    case Op::RelContext: {
      const Tensor& p = in_val(0);
      const Tensor& table = in_val(1);
      const int clip = n.i0;
      const int len = p.rows;
      Tensor* dp = in_grad(0);
      Tensor* dt = in_grad(1);
      for (int i = 0; i < len; ++i) {
        const double* gi = g.row(i);
        for (int j = 0; j < len; ++j) {
          const int rel = std::clamp(j - i, -clip, clip) + clip;
          if (dp) {
            const double* tr = table.row(rel);
            double acc = 0.0;
#pragma omp simd reduction(+ : acc)
            for (int c = 0; c < g.cols; ++c) acc += gi[c] * tr[c];
            dp->at(i, j) += acc;
          }
          if (dt) {
            const double pv = p.at(i, j);
            double* dtr = dt->row(rel);
            for (int c = 0; c < g.cols; ++c) dtr[c] += pv * gi[c];
          }
        }
      }
      break;
    }
    case Op::SoftmaxXent: {
      if (Tensor* dl = in_grad(0)) {
        const Tensor& probs = n.saved[0];
        const double gs = g.at(0, 0) / probs.rows;
        for (int r = 0; r < probs.rows; ++r) {
          for (int c = 0; c < probs.cols; ++c) dl->at(r, c) += gs * probs.at(r, c);
          dl->at(r, n.idx[r]) -= gs;
        }
      }
      break;
    }
    case Op::XentComplement: {
      if (Tensor* dl = in_grad(0)) {
        const Tensor& probs = n.saved[0];
        const double gs = g.at(0, 0) / probs.rows;
        const double q = 1.0 / (probs.cols - 1);
        for (int r = 0; r < probs.rows; ++r) {
          for (int c = 0; c < probs.cols; ++c)
            dl->at(r, c) += gs * (probs.at(r, c) - q);
          dl->at(r, n.idx[r]) += gs * q;  // complement puts 0 on the target
        }
      }
      break;
    }
    case Op::XentUniform: {
      if (Tensor* dl = in_grad(0)) {
        const Tensor& probs = n.saved[0];
        const double gs = g.at(0, 0) / probs.rows;
        const double q = 1.0 / probs.cols;
        for (int r = 0; r < probs.rows; ++r)
          for (int c = 0; c < probs.cols; ++c)
            dl->at(r, c) += gs * (probs.at(r, c) - q);
      }
      break;
    }
    case Op::KlStdNormal: {
      const Tensor& mu = in_val(0);
      const Tensor& lv = in_val(1);
      const double gs = g.at(0, 0);
      if (Tensor* dm = in_grad(0))
        for (int c = 0; c < mu.cols; ++c) dm->v[c] += gs * mu.v[c];
      if (Tensor* dv = in_grad(1))
        for (int c = 0; c < lv.cols; ++c)
          dv->v[c] += gs * 0.5 * (std::exp(lv.v[c]) - 1.0);
      break;
    }
    case Op::Reparam: {
      const Tensor& lv = in_val(1);
      const Tensor& eps = n.saved[0];
      if (Tensor* dm = in_grad(0)) axpy(1.0, g, *dm);
      if (Tensor* dv = in_grad(1)) {
        for (int c = 0; c < lv.cols; ++c) {
          if (lv.v[c] <= kLogVarFloor) continue;  // clipped region
          dv->v[c] += g.v[c] * 0.5 * std::exp(0.5 * lv.v[c]) * eps.v[c];
        }
      }
      break;
    }
    case Op::MelodyTable: {
      Tensor* dp = in_grad(0);
      Tensor* doct = in_grad(1);
      for (int tok = 0; tok < 120; ++tok) {
        const double* src = g.row(tok);
        if (dp) {
          double* dst = dp->row(tok % 12);
          for (int c = 0; c < g.cols; ++c) dst[c] += src[c];
        }
        if (doct) {
          double* dst = doct->row(tok / 12);
          for (int c = 0; c < g.cols; ++c) dst[c] += src[c];
        }
      }
      if (Tensor* dh = in_grad(2))
        for (int c = 0; c < g.cols; ++c) dh->v[c] += g.at(120, c);
      if (Tensor* dr = in_grad(3))
        for (int c = 0; c < g.cols; ++c) dr->v[c] += g.at(121, c);
      if (Tensor* dm = in_grad(4))
        for (int c = 0; c < g.cols; ++c) dm->v[c] += g.at(122, c);
      break;
    }
  }
}

}  // namespace harmonia
