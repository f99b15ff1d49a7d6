#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "harmonia/common.hpp"
#include "harmonia/tensor.hpp"

namespace harmonia {

// Grid geometry: 8 bars of 4/4 = 32 beat steps for chords, 128 sixteenth
// steps for the melody, up to 4 ordered pitch-class slots per chord.
inline constexpr int kBeats = 32;
inline constexpr int kChordSlots = 4;
inline constexpr int kMelodySteps = 128;

inline constexpr int kPadToken = 12;   // chord padding state
inline constexpr int kChordVocab = 13; // 12 pitch classes + PAD

// Flat melody vocabulary: 120 onset tokens (octave*12 + pitch class),
// HOLD, REST, and a MASK token that appears only in corrupted grids.
inline constexpr int kHoldToken = 120;
inline constexpr int kRestToken = 121;
inline constexpr int kMaskToken = 122;
inline constexpr int kMelodyTargetVocab = 122;  // MASK is never a target
inline constexpr int kMelodyVocab = 123;

// Surface structure of an 8-bar chord progression: per beat, the pitch
// classes of the up-to-4 lowest chord notes in ascending order, PAD-filled.
struct ChordGrid {
  std::array<std::uint8_t, kBeats * kChordSlots> slots;

  ChordGrid() { slots.fill(kPadToken); }

  std::uint8_t& at(int beat, int slot) { return slots[beat * kChordSlots + slot]; }
  std::uint8_t at(int beat, int slot) const { return slots[beat * kChordSlots + slot]; }
  const std::uint8_t* row(int beat) const { return slots.data() + beat * kChordSlots; }

  bool row_all_pad(int beat) const {
    return at(beat, 0) == kPadToken;
  }

  bool operator==(const ChordGrid&) const = default;
};

// Tokens in range, PAD forms a contiguous suffix within every beat.
bool chord_grid_valid(const ChordGrid& grid);

enum class StepKind : std::uint8_t { Onset, Hold, Rest, Mask };

struct MelodyStep {
  StepKind kind = StepKind::Rest;
  std::uint8_t pitch_class = 0;  // ONSET only
  std::uint8_t octave = 0;       // ONSET only, 0..9

  bool operator==(const MelodyStep&) const = default;
};

struct MelodyGrid {
  std::array<MelodyStep, kMelodySteps> steps;

  bool operator==(const MelodyGrid&) const = default;
};

// Clean grids never contain MASK; every HOLD continues an earlier ONSET.
bool melody_grid_valid(const MelodyGrid& grid, bool allow_mask = false);

// Bijection between MelodyStep and the flat 123-token vocabulary.
int melody_token(const MelodyStep& step);
MelodyStep melody_step_from_token(int token);

struct CorruptionSpec {
  enum class Method { Transpose, Mask, None };
  Method method = Method::Transpose;
  double mask_rate = -1.0;  // required for Mask
  std::uint64_t rng_seed = 0;
};

// ---- chord encode/decode ----

// (onset beat 0..31, MIDI pitches). Each chord sustains until the next
// onset or the end of the 32-beat window; only onsets are stored.
using ChordEvent = std::pair<int, std::vector<int>>;

ChordGrid encode_chord_grid(const std::vector<ChordEvent>& events);

// Merges consecutive identical non-PAD rows back into events. Round-trips
// with encode_chord_grid up to pitch-class reduction and slot truncation.
std::vector<std::pair<int, std::set<int>>> decode_chord_grid(const ChordGrid& grid);

// ---- melody encode ----

struct MelodyNote {
  int onset = 0;     // sixteenth step 0..127
  int duration = 1;  // sixteenths, >= 1
  int midi_pitch = 60;
};

// Monophonic notes -> onset/hold/rest grid. Durations running past step 128
// are truncated; a note is reported through `warnings` when that happens.
MelodyGrid encode_melody_grid(const std::vector<MelodyNote>& notes,
                              std::vector<std::string>* warnings = nullptr);

// ---- transposition and corruption ----

ChordGrid transpose_chord(const ChordGrid& grid, int semitones);

// Pitch shift by semitones mod 12 with octave carry, clamped to [0,9];
// HOLD/REST untouched. T_12 is the identity, matching the chord operator.
MelodyGrid transpose_melody(const MelodyGrid& grid, int semitones);

struct CorruptResult {
  MelodyGrid melody;
  std::optional<int> shift;  // set for Transpose
};

CorruptResult corrupt(const MelodyGrid& melody, const CorruptionSpec& spec, Rng& rng);

// ---- condition pooling ----

// Sums the token embeddings of each group of 4 sixteenth steps into one
// per-beat condition vector. `table` is kMelodyVocab x d.
Tensor beat_pool_condition(const MelodyGrid& melody, const Tensor& table);

}  // namespace harmonia
