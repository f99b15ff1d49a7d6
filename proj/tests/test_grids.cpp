#include "doctest.h"

#include <set>

#include "harmonia/grids.hpp"

using namespace harmonia;

TEST_CASE("encode_chord_grid sustains a chord over the whole window") {
  const ChordGrid grid = encode_chord_grid({{0, {48, 52, 55}}});
  for (int t = 0; t < kBeats; ++t) {
    CHECK(grid.at(t, 0) == 0);
    CHECK(grid.at(t, 1) == 4);
    CHECK(grid.at(t, 2) == 7);
    CHECK(grid.at(t, 3) == kPadToken);
  }
  CHECK(chord_grid_valid(grid));
}

TEST_CASE("encode_chord_grid keeps the four lowest pitches") {
  const ChordGrid grid = encode_chord_grid({{0, {48, 52, 55, 59, 62}}});
  CHECK(grid.at(0, 0) == 0);
  CHECK(grid.at(0, 1) == 4);
  CHECK(grid.at(0, 2) == 7);
  CHECK(grid.at(0, 3) == 11);  // 62 dropped
}

TEST_CASE("encode_chord_grid edge cases") {
  const ChordGrid empty = encode_chord_grid({});
  for (auto tok : empty.slots) CHECK(tok == kPadToken);

  CHECK_THROWS_AS(encode_chord_grid({{32, {60}}}), validation_error);
  CHECK_THROWS_AS(encode_chord_grid({{-1, {60}}}), validation_error);
  CHECK_THROWS_AS(encode_chord_grid({{4, {60}}, {4, {62}}}), validation_error);
  CHECK_THROWS_AS(encode_chord_grid({{0, {}}}), validation_error);

  // beats before the first event stay PAD
  const ChordGrid late = encode_chord_grid({{8, {50, 54, 57}}});
  for (int t = 0; t < 8; ++t) CHECK(late.row_all_pad(t));
  CHECK(late.at(8, 0) == 2);
}

TEST_CASE("decode_chord_grid merges identical consecutive rows") {
  const ChordGrid grid = encode_chord_grid({{0, {48, 52, 55}}});
  const auto events = decode_chord_grid(grid);
  REQUIRE(events.size() == 1);
  CHECK(events[0].first == 0);
  CHECK(events[0].second == std::set<int>{0, 4, 7});

  ChordGrid two;
  for (int t = 0; t < 16; ++t) {
    two.at(t, 0) = 0; two.at(t, 1) = 4; two.at(t, 2) = 7;
  }
  for (int t = 16; t < 32; ++t) {
    two.at(t, 0) = 7; two.at(t, 1) = 11; two.at(t, 2) = 2;
  }
  const auto ev2 = decode_chord_grid(two);
  REQUIRE(ev2.size() == 2);
  CHECK(ev2[0] == std::pair{0, std::set<int>{0, 4, 7}});
  CHECK(ev2[1] == std::pair{16, std::set<int>{7, 11, 2}});

  CHECK(decode_chord_grid(ChordGrid{}).empty());
}

TEST_CASE("chord grid round-trip preserves simple progressions") {
  Rng rng(41);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<ChordEvent> events;
    int beat = 0;
    while (beat < kBeats) {
      const int root = 40 + rng.uniform_int(24);
      std::vector<int> pitches = {root, root + 4, root + 7};
      if (rng.bernoulli(0.4)) pitches.push_back(root + 10);
      events.emplace_back(beat, pitches);
      beat += 4 + rng.uniform_int(8);
    }
    const ChordGrid grid = encode_chord_grid(events);
    const auto decoded = decode_chord_grid(grid);

    // drop events shadowed by an identical preceding chord
    std::vector<std::pair<int, std::set<int>>> expected;
    for (const auto& [onset, pitches] : events) {
      std::set<int> pcs;
      for (int p : pitches) pcs.insert(((p % 12) + 12) % 12);
      if (!expected.empty() && expected.back().second == pcs) continue;
      expected.emplace_back(onset, pcs);
    }
    CHECK(decoded == expected);
  }
}

TEST_CASE("encode_melody_grid basic onsets, holds and rests") {
  const MelodyGrid grid = encode_melody_grid({{0, 4, 60}});
  CHECK(grid.steps[0].kind == StepKind::Onset);
  CHECK(grid.steps[0].pitch_class == 0);
  CHECK(grid.steps[0].octave == 5);
  for (int s = 1; s < 4; ++s) CHECK(grid.steps[s].kind == StepKind::Hold);
  for (int s = 4; s < kMelodySteps; ++s) CHECK(grid.steps[s].kind == StepKind::Rest);
  CHECK(melody_grid_valid(grid));

  const MelodyGrid empty = encode_melody_grid({});
  for (const auto& st : empty.steps) CHECK(st.kind == StepKind::Rest);
}

TEST_CASE("encode_melody_grid truncates at the grid end and logs it") {
  std::vector<std::string> warnings;
  const MelodyGrid grid = encode_melody_grid({{126, 8, 64}}, &warnings);
  CHECK(grid.steps[126].kind == StepKind::Onset);
  CHECK(grid.steps[126].pitch_class == 4);
  CHECK(grid.steps[126].octave == 5);
  CHECK(grid.steps[127].kind == StepKind::Hold);
  CHECK(warnings.size() == 1);
}

TEST_CASE("encode_melody_grid rejects overlap") {
  CHECK_THROWS_AS(encode_melody_grid({{0, 8, 60}, {4, 4, 62}}), validation_error);
  CHECK_THROWS_AS(encode_melody_grid({{4, 1, 60}, {2, 1, 62}}), validation_error);
}

TEST_CASE("melody grid validity rules") {
  MelodyGrid grid;
  for (auto& st : grid.steps) st = {StepKind::Rest, 0, 0};
  CHECK(melody_grid_valid(grid));

  grid.steps[0] = {StepKind::Hold, 0, 0};  // a hold must continue something
  CHECK_FALSE(melody_grid_valid(grid));

  grid.steps[0] = {StepKind::Onset, 3, 5};
  grid.steps[1] = {StepKind::Rest, 0, 0};
  grid.steps[2] = {StepKind::Hold, 0, 0};  // hold after rest
  CHECK_FALSE(melody_grid_valid(grid));

  grid.steps[1] = {StepKind::Mask, 0, 0};
  grid.steps[2] = {StepKind::Rest, 0, 0};
  CHECK_FALSE(melody_grid_valid(grid));
  CHECK(melody_grid_valid(grid, /*allow_mask=*/true));
}

TEST_CASE("transpose_chord pitch-class arithmetic") {
  const ChordGrid grid = encode_chord_grid({{0, {48, 52, 55}}});
  const ChordGrid up2 = transpose_chord(grid, 2);
  CHECK(up2.at(0, 0) == 2);
  CHECK(up2.at(0, 1) == 6);
  CHECK(up2.at(0, 2) == 9);
  CHECK(up2.at(0, 3) == kPadToken);

  CHECK(transpose_chord(grid, 12) == grid);
  CHECK(transpose_chord(grid, -1) == transpose_chord(grid, 11));
}

TEST_CASE("transposition composition property") {
  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    ChordGrid grid;
    for (int t = 0; t < kBeats; ++t) {
      const int n = rng.uniform_int(5);
      for (int p = 0; p < n; ++p) grid.at(t, p) = std::uint8_t(rng.uniform_int(12));
    }
    const int a = rng.uniform_int(40) - 20;
    const int b = rng.uniform_int(40) - 20;
    CHECK(transpose_chord(transpose_chord(grid, a), b) == transpose_chord(grid, a + b));
  }
}

TEST_CASE("transpose_melody octave carry and clamping") {
  MelodyGrid grid;
  grid.steps[0] = {StepKind::Onset, 11, 5};
  MelodyGrid up = transpose_melody(grid, 1);
  CHECK(up.steps[0].pitch_class == 0);
  CHECK(up.steps[0].octave == 6);

  CHECK(transpose_melody(grid, 0) == grid);

  grid.steps[0] = {StepKind::Onset, 11, 9};
  up = transpose_melody(grid, 1);
  CHECK(up.steps[0].pitch_class == 0);
  CHECK(up.steps[0].octave == 9);  // clamped

  // T_12 is the identity when nothing clamps
  MelodyGrid mid;
  mid.steps[0] = {StepKind::Onset, 4, 5};
  mid.steps[1] = {StepKind::Hold, 0, 0};
  CHECK(transpose_melody(mid, 12) == mid);
}

TEST_CASE("melody token bijection covers the whole vocabulary") {
  for (int tok = 0; tok < kMelodyVocab; ++tok) {
    const MelodyStep st = melody_step_from_token(tok);
    CHECK(melody_token(st) == tok);
  }
  for (int oct = 0; oct <= 9; ++oct) {
    for (int pc = 0; pc < 12; ++pc) {
      const MelodyStep st{StepKind::Onset, std::uint8_t(pc), std::uint8_t(oct)};
      CHECK(melody_step_from_token(melody_token(st)) == st);
    }
  }
  CHECK_THROWS_AS(melody_step_from_token(123), validation_error);
  CHECK_THROWS_AS(melody_step_from_token(-1), validation_error);
}

TEST_CASE("corrupt with transposition keeps the rhythm") {
  const MelodyGrid melody = encode_melody_grid({{0, 4, 60}, {8, 2, 64}, {12, 4, 67}});
  CorruptionSpec spec;
  spec.method = CorruptionSpec::Method::Transpose;

  Rng rng(123);
  for (int trial = 0; trial < 100; ++trial) {
    const CorruptResult res = corrupt(melody, spec, rng);
    REQUIRE(res.shift.has_value());
    CHECK(*res.shift >= 0);
    CHECK(*res.shift < 12);
    for (int s = 0; s < kMelodySteps; ++s)
      CHECK(res.melody.steps[s].kind == melody.steps[s].kind);
    if (*res.shift == 0) CHECK(res.melody == melody);
  }
}

TEST_CASE("corrupt transposition shifts are near-uniform over 12000 draws") {
  const MelodyGrid melody = encode_melody_grid({{0, 4, 60}});
  CorruptionSpec spec;
  spec.method = CorruptionSpec::Method::Transpose;
  Rng rng(2024);
  std::array<int, 12> counts{};
  for (int i = 0; i < 12000; ++i) {
    const CorruptResult res = corrupt(melody, spec, rng);
    ++counts[*res.shift];
  }
  for (int shift = 0; shift < 12; ++shift) {
    CHECK(counts[shift] >= 850);
    CHECK(counts[shift] <= 1150);
  }
}

TEST_CASE("corrupt masking") {
  const MelodyGrid melody = encode_melody_grid({{0, 64, 60}});
  CorruptionSpec spec;
  spec.method = CorruptionSpec::Method::Mask;

  Rng rng(5);
  CHECK_THROWS_AS(corrupt(melody, spec, rng), config_error);  // rate unset

  spec.mask_rate = 1.0;
  const CorruptResult all = corrupt(melody, spec, rng);
  CHECK_FALSE(all.shift.has_value());
  for (const auto& st : all.melody.steps) CHECK(st.kind == StepKind::Mask);

  spec.mask_rate = 0.0;
  CHECK(corrupt(melody, spec, rng).melody == melody);

  spec.method = CorruptionSpec::Method::None;
  CHECK(corrupt(melody, spec, rng).melody == melody);
}

TEST_CASE("beat_pool_condition sums each four-step group") {
  Tensor table(kMelodyVocab, 128);
  Rng rng(9);
  for (double& x : table.v) x = rng.normal();

  MelodyGrid rest;
  for (auto& st : rest.steps) st = {StepKind::Rest, 0, 0};
  const Tensor pooled = beat_pool_condition(rest, table);
  CHECK(pooled.rows == kBeats);
  CHECK(pooled.cols == 128);
  for (int b = 0; b < kBeats; ++b)
    for (int c = 0; c < 128; ++c)
      CHECK(pooled.at(b, c) ==
            doctest::Approx(4.0 * table.at(kRestToken, c)).epsilon(1e-12));
}

TEST_CASE("beat_pool_condition is invariant to within-beat permutation and additive") {
  Tensor table(kMelodyVocab, 16);
  Rng rng(10);
  for (double& x : table.v) x = rng.normal();

  MelodyGrid melody = encode_melody_grid({{0, 2, 60}, {2, 1, 64}, {3, 1, 67}});
  MelodyGrid shuffled = melody;
  std::swap(shuffled.steps[0], shuffled.steps[3]);
  std::swap(shuffled.steps[1], shuffled.steps[2]);

  const Tensor a = beat_pool_condition(melody, table);
  const Tensor b = beat_pool_condition(shuffled, table);
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK(a.v[i] == doctest::Approx(b.v[i]).epsilon(1e-12));

  Tensor table2(kMelodyVocab, 16);
  for (double& x : table2.v) x = rng.normal();
  Tensor sum_table = table;
  axpy(1.0, table2, sum_table);
  const Tensor pooled_sum = beat_pool_condition(melody, sum_table);
  Tensor expect = beat_pool_condition(melody, table);
  axpy(1.0, beat_pool_condition(melody, table2), expect);
  for (std::size_t i = 0; i < expect.size(); ++i)
    CHECK(pooled_sum.v[i] == doctest::Approx(expect.v[i]).epsilon(1e-12));
}
