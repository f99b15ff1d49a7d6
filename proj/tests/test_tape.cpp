#include "doctest.h"

#include <cmath>
#include <functional>

#include "harmonia/tape.hpp"

using namespace harmonia;

namespace {

using LossBuilder = std::function<int(Tape&)>;

double eval_loss(const ParamStore& store, std::uint32_t mask, const LossBuilder& build) {
  Tape tape(&store, mask);
  return tape.scalar(build(tape));
}

// Central differences over every coordinate of every trainable parameter.
// The builder must be a deterministic function of the store.
void check_gradients(ParamStore& store, const LossBuilder& build,
                     std::uint32_t mask = kAllGroups, double rel_tol = 1e-6,
                     double h = 1e-6) {
  GradVec grads(store.count());
  {
    Tape tape(&store, mask);
    const int loss = build(tape);
    tape.backward(loss, &grads);
  }
  for (int id = 0; id < store.count(); ++id) {
    if (!(mask & group_bit(store.entry(id).group))) continue;
    Tensor& w = store.value(id);
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double keep = w.v[i];
      w.v[i] = keep + h;
      const double up = eval_loss(store, mask, build);
      w.v[i] = keep - h;
      const double down = eval_loss(store, mask, build);
      w.v[i] = keep;
      const double fd = (up - down) / (2.0 * h);
      const double an = grads[id].empty() ? 0.0 : grads[id].v[i];
      const double denom = std::max({1.0, std::abs(fd), std::abs(an)});
      INFO("param ", store.entry(id).name, " coord ", i, " fd=", fd, " an=", an);
      CHECK(std::abs(fd - an) / denom < rel_tol);
    }
  }
}

Tensor random_tensor(int rows, int cols, Rng& rng, double scale = 1.0) {
  Tensor t(rows, cols);
  for (double& x : t.v) x = rng.normal() * scale;
  return t;
}

// scalarize an arbitrary matrix node: sum(X .* C) with a fixed random C
int weighted_sum(Tape& tape, int x, std::uint64_t seed) {
  const Tensor& v = tape.val(x);
  Rng rng(seed);
  const int c = tape.input(random_tensor(v.rows, v.cols, rng));
  const int mixed = tape.mul(x, c);
  Tensor ones_row(1, v.rows), ones_col(v.cols, 1);
  ones_row.fill(1.0);
  ones_col.fill(1.0);
  return tape.matmul(tape.matmul(tape.input(ones_row), mixed), tape.input(ones_col));
}

}  // namespace

TEST_CASE("gradients: linear / activation / elementwise chain") {
  ParamStore store;
  const int w1 = store.add("w1", ParamGroup::Enc, 5, 4);
  const int b1 = store.add("b1", ParamGroup::Enc, 1, 5);
  const int w2 = store.add("w2", ParamGroup::Enc, 3, 5);
  const int b2 = store.add("b2", ParamGroup::Enc, 1, 3);
  Rng rng(1);
  for (int id = 0; id < store.count(); ++id)
    store.value(id) = random_tensor(store.value(id).rows, store.value(id).cols, rng, 0.5);

  check_gradients(store, [&](Tape& t) {
    Rng in_rng(7);
    const int x = t.input(random_tensor(2, 4, in_rng));
    const int h1 = t.tanh_n(t.linear(t.param(w1), t.param(b1), x));
    const int h2 = t.sigmoid_n(t.linear(t.param(w2), t.param(b2), h1));
    const int h3 = t.gelu_n(t.scale(t.add(h2, h2), 0.7));
    const int h4 = t.mul(h3, h3);
    const int h5 = t.add_scaled(h4, h3, -0.3);
    return weighted_sum(t, h5, 99);
  });
}

TEST_CASE("gradients: matmul, concat, slice, stack, gather, pool") {
  ParamStore store;
  const int a = store.add("a", ParamGroup::Enc, 4, 3);
  const int b = store.add("b", ParamGroup::Enc, 3, 5);
  const int table = store.add("table", ParamGroup::Enc, 6, 3);
  Rng rng(2);
  for (int id = 0; id < store.count(); ++id)
    store.value(id) = random_tensor(store.value(id).rows, store.value(id).cols, rng, 0.6);

  check_gradients(store, [&](Tape& t) {
    const int pa = t.param(a);
    const int pb = t.param(b);
    const int m = t.matmul(pa, pb);            // 4x5
    const int mnt = t.matmul_nt(m, m);         // 4x4
    const int cc = t.concat_cols(m, mnt);      // 4x9
    const int cr = t.concat_rows(cc, cc);      // 8x9
    const int sr = t.slice_rows(cr, 1, 7);     // 6x9
    const int sc = t.slice_cols(sr, 2, 8);     // 6x6
    const int g = t.gather_rows(t.param(table), {0, 5, 2, 2, 1, 4});  // 6x3
    const int mixed = t.concat_cols(sc, g);    // 6x9
    const int pooled = t.pool_rows(mixed, 3);  // 2x9
    const int stacked = t.stack_rows({t.slice_rows(pooled, 0, 1),
                                      t.slice_rows(pooled, 1, 2),
                                      t.slice_rows(pooled, 0, 1)});
    return weighted_sum(t, stacked, 123);
  });
}

TEST_CASE("gradients: layernorm, softmax, dropout") {
  ParamStore store;
  const int x = store.add("x", ParamGroup::Enc, 3, 6);
  const int g = store.add("g", ParamGroup::Enc, 1, 6);
  const int bb = store.add("bb", ParamGroup::Enc, 1, 6);
  Rng rng(3);
  store.value(x) = random_tensor(3, 6, rng);
  store.value(g) = random_tensor(1, 6, rng, 0.5);
  for (double& v : store.value(g).v) v += 1.0;
  store.value(bb) = random_tensor(1, 6, rng, 0.2);

  check_gradients(store, [&](Tape& t) {
    const int ln = t.layer_norm_rows(t.param(x), t.param(g), t.param(bb));
    const int sm = t.softmax_rows(ln);
    Rng drop_rng(11);
    const int dr = t.dropout(sm, 0.25, drop_rng, true);
    return weighted_sum(t, dr, 321);
  });
}

TEST_CASE("dropout is identity in eval mode and masks in train mode") {
  ParamStore store;
  Tape tape(&store, 0);
  Rng rng(4);
  const int x = tape.input(random_tensor(4, 8, rng));
  Rng drop_rng(5);
  CHECK(tape.dropout(x, 0.5, drop_rng, false) == x);
  CHECK(tape.dropout(x, 0.0, drop_rng, true) == x);
  const int d = tape.dropout(x, 0.5, drop_rng, true);
  CHECK(d != x);
  int zeros = 0;
  for (std::size_t i = 0; i < tape.val(d).size(); ++i) {
    const double v = tape.val(d).v[i];
    if (v == 0.0) ++zeros;
    else CHECK(v == doctest::Approx(tape.val(x).v[i] * 2.0));
  }
  CHECK(zeros > 0);
  CHECK(zeros < 32);
}

TEST_CASE("gradients: gru cell chain") {
  const int in = 4, hid = 5;
  ParamStore store;
  const int w_ih = store.add("w_ih", ParamGroup::Enc, 3 * hid, in);
  const int b_ih = store.add("b_ih", ParamGroup::Enc, 1, 3 * hid);
  const int w_hh = store.add("w_hh", ParamGroup::Enc, 3 * hid, hid);
  const int b_hh = store.add("b_hh", ParamGroup::Enc, 1, 3 * hid);
  const int x0 = store.add("x0", ParamGroup::Enc, 1, in);
  Rng rng(6);
  for (int id = 0; id < store.count(); ++id)
    store.value(id) = random_tensor(store.value(id).rows, store.value(id).cols, rng, 0.7);

  check_gradients(store, [&](Tape& t) {
    int h = t.zeros(1, hid);
    for (int step = 0; step < 3; ++step)
      h = t.gru_cell(t.param(x0), h, t.param(w_ih), t.param(b_ih), t.param(w_hh),
                     t.param(b_hh));
    return weighted_sum(t, h, 55);
  });
}

TEST_CASE("gradients: relative attention scores and context") {
  const int len = 5, dh = 3, clip = 2;
  ParamStore store;
  const int q = store.add("q", ParamGroup::Dis, len, dh);
  const int table_k = store.add("table_k", ParamGroup::Dis, 2 * clip + 1, dh);
  const int table_v = store.add("table_v", ParamGroup::Dis, 2 * clip + 1, dh);
  const int v = store.add("v", ParamGroup::Dis, len, dh);
  Rng rng(8);
  for (int id = 0; id < store.count(); ++id)
    store.value(id) = random_tensor(store.value(id).rows, store.value(id).cols, rng, 0.8);

  check_gradients(store, [&](Tape& t) {
    const int pq = t.param(q);
    const int content = t.scale(t.matmul_nt(pq, t.param(v)), 1.0 / std::sqrt(3.0));
    const int rel = t.rel_scores(pq, t.param(table_k), clip, 1.0 / std::sqrt(3.0));
    const int probs = t.softmax_rows(t.add(content, rel));
    const int ctx = t.add(t.matmul(probs, t.param(v)),
                          t.rel_context(probs, t.param(table_v), clip));
    return weighted_sum(t, ctx, 77);
  });
}

TEST_CASE("gradients: cross-entropy, complement cross-entropy, KL, reparam") {
  ParamStore store;
  const int logits = store.add("logits", ParamGroup::Enc, 4, 6);
  const int mean = store.add("mean", ParamGroup::Enc, 1, 5);
  const int logvar = store.add("logvar", ParamGroup::Enc, 1, 5);
  Rng rng(9);
  for (int id = 0; id < store.count(); ++id)
    store.value(id) = random_tensor(store.value(id).rows, store.value(id).cols, rng, 0.9);

  const std::vector<int> targets = {1, 0, 5, 3};

  check_gradients(store, [&](Tape& t) {
    const int ce = t.softmax_xent_mean(t.param(logits), targets);
    const int comp = t.xent_complement_mean(t.param(logits), targets);
    const int kl = t.kl_std_normal_n(t.param(mean), t.param(logvar));
    Rng eps_rng(13);
    const int z = t.reparam(t.param(mean), t.param(logvar),
                            random_tensor(1, 5, eps_rng));
    const int zsum = weighted_sum(t, t.tanh_n(z), 31);
    return t.add(t.add_scaled(ce, comp, 0.5), t.add_scaled(kl, zsum, 2.0));
  });
}

TEST_CASE("gradients: melody vocabulary table assembly") {
  ParamStore store;
  const int pitch = store.add("pitch", ParamGroup::Enc, 12, 3);
  const int octave = store.add("octave", ParamGroup::Enc, 10, 3);
  const int hold = store.add("hold", ParamGroup::Enc, 1, 3);
  const int rest = store.add("rest", ParamGroup::Enc, 1, 3);
  const int mask = store.add("mask", ParamGroup::Enc, 1, 3);
  Rng rng(10);
  for (int id = 0; id < store.count(); ++id)
    store.value(id) = random_tensor(store.value(id).rows, store.value(id).cols, rng, 0.4);

  check_gradients(store, [&](Tape& t) {
    const int table = t.melody_vocab_table(t.param(pitch), t.param(octave),
                                           t.param(hold), t.param(rest), t.param(mask));
    const int rows = t.gather_rows(table, {0, 13, 119, 120, 121, 122, 60});
    return weighted_sum(t, rows, 17);
  });
}

TEST_CASE("parameters outside the trainable mask accumulate no gradient") {
  ParamStore store;
  const int we = store.add("we", ParamGroup::Enc, 2, 2);
  const int wd = store.add("wd", ParamGroup::Dis, 2, 2);
  Rng rng(12);
  store.value(we) = random_tensor(2, 2, rng);
  store.value(wd) = random_tensor(2, 2, rng);

  Tape tape(&store, group_bit(ParamGroup::Enc));
  const int prod = tape.matmul(tape.param(we), tape.param(wd));
  const int loss = weighted_sum(tape, prod, 5);
  GradVec grads(store.count());
  tape.backward(loss, &grads);
  CHECK_FALSE(grads[we].empty());
  CHECK(grads[wd].empty());  // frozen group: gradient absent
}

TEST_CASE("backward rejects non-scalar losses and double invocation") {
  ParamStore store;
  const int w = store.add("w", ParamGroup::Enc, 2, 3);
  Rng rng(14);
  store.value(w) = random_tensor(2, 3, rng);

  Tape tape(&store, kAllGroups);
  const int p = tape.param(w);
  GradVec grads(store.count());
  CHECK_THROWS_AS(tape.backward(p, &grads), contract_error);

  Tape tape2(&store, kAllGroups);
  const int loss = weighted_sum(tape2, tape2.param(w), 3);
  tape2.backward(loss, &grads);
  CHECK_THROWS_AS(tape2.backward(loss, &grads), contract_error);
}

TEST_CASE("tape evaluation is deterministic") {
  ParamStore store;
  const int w = store.add("w", ParamGroup::Enc, 8, 8);
  Rng rng(15);
  store.value(w) = random_tensor(8, 8, rng);

  auto build = [&](Tape& t) {
    const int p = t.param(w);
    return weighted_sum(t, t.softmax_rows(t.matmul(p, p)), 8);
  };
  const double a = eval_loss(store, kAllGroups, build);
  const double b = eval_loss(store, kAllGroups, build);
  CHECK(a == b);
}
