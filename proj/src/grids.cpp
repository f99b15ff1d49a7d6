#include "harmonia/grids.hpp"

#include <algorithm>
#include <cmath>

namespace harmonia {

bool chord_grid_valid(const ChordGrid& grid) {
  for (int t = 0; t < kBeats; ++t) {
    bool seen_pad = false;
    for (int p = 0; p < kChordSlots; ++p) {
      const int tok = grid.at(t, p);
      if (tok > kPadToken) return false;
      if (tok == kPadToken) {
        seen_pad = true;
      } else if (seen_pad) {
        return false;  // pitch after PAD
      }
    }
  }
  return true;
}

bool melody_grid_valid(const MelodyGrid& grid, bool allow_mask) {
  bool have_onset = false;
  for (int s = 0; s < kMelodySteps; ++s) {
    const MelodyStep& st = grid.steps[s];
    switch (st.kind) {
      case StepKind::Onset:
        if (st.pitch_class > 11 || st.octave > 9) return false;
        have_onset = true;
        break;
      case StepKind::Hold:
        // a hold must continue something; masking may orphan holds, so
        // corrupted grids skip this check
        if (!have_onset && !allow_mask) return false;
        break;
      case StepKind::Rest:
        have_onset = false;
        break;
      case StepKind::Mask:
        if (!allow_mask) return false;
        break;
    }
  }
  return true;
}

int melody_token(const MelodyStep& step) {
  switch (step.kind) {
    case StepKind::Onset:
      return step.octave * 12 + step.pitch_class;
    case StepKind::Hold:
      return kHoldToken;
    case StepKind::Rest:
      return kRestToken;
    case StepKind::Mask:
      return kMaskToken;
  }
  return kRestToken;
}

MelodyStep melody_step_from_token(int token) {
  if (token < 0 || token >= kMelodyVocab)
    throw validation_error("melody token out of range: " + std::to_string(token));
  MelodyStep st;
  if (token < kHoldToken) {
    st.kind = StepKind::Onset;
    st.pitch_class = std::uint8_t(token % 12);
    st.octave = std::uint8_t(token / 12);
  } else if (token == kHoldToken) {
    st.kind = StepKind::Hold;
  } else if (token == kRestToken) {
    st.kind = StepKind::Rest;
  } else {
    st.kind = StepKind::Mask;
  }
  return st;
}

ChordGrid encode_chord_grid(const std::vector<ChordEvent>& events) {
  ChordGrid grid;  // all-PAD
  int prev_onset = -1;
  for (const auto& [onset, pitches] : events) {
    if (onset < 0 || onset >= kBeats)
      throw validation_error("chord onset out of [0,31]: " + std::to_string(onset));
    if (onset <= prev_onset)
      throw validation_error("chord onsets must be strictly increasing");
    if (pitches.empty()) throw validation_error("chord event with no pitches");
    prev_onset = onset;
  }
  for (std::size_t e = 0; e < events.size(); ++e) {
    const int onset = events[e].first;
    const int end = (e + 1 < events.size()) ? events[e + 1].first : kBeats;
    std::vector<int> sorted = events[e].second;
    std::sort(sorted.begin(), sorted.end());
    const int n = std::min<int>(kChordSlots, int(sorted.size()));
    for (int t = onset; t < end; ++t) {
      for (int p = 0; p < n; ++p)
        grid.at(t, p) = std::uint8_t(((sorted[p] % 12) + 12) % 12);
      for (int p = n; p < kChordSlots; ++p) grid.at(t, p) = kPadToken;
    }
  }
  return grid;
}

std::vector<std::pair<int, std::set<int>>> decode_chord_grid(const ChordGrid& grid) {
  std::vector<std::pair<int, std::set<int>>> events;
  for (int t = 0; t < kBeats; ++t) {
    if (grid.row_all_pad(t)) continue;
    const bool same_as_prev =
        t > 0 && std::equal(grid.row(t), grid.row(t) + kChordSlots, grid.row(t - 1));
    if (same_as_prev) continue;
    std::set<int> pcs;
    for (int p = 0; p < kChordSlots; ++p) {
      if (grid.at(t, p) != kPadToken) pcs.insert(grid.at(t, p));
    }
    events.emplace_back(t, std::move(pcs));
  }
  return events;
}

MelodyGrid encode_melody_grid(const std::vector<MelodyNote>& notes,
                              std::vector<std::string>* warnings) {
  MelodyGrid grid;  // all REST by default
  int prev_end = -1;
  int prev_onset = -1;
  for (const MelodyNote& n : notes) {
    if (n.onset < 0 || n.onset >= kMelodySteps)
      throw validation_error("melody onset out of [0,127]: " + std::to_string(n.onset));
    if (n.duration < 1) throw validation_error("melody duration must be >= 1");
    if (n.onset <= prev_onset)
      throw validation_error("melody onsets must be strictly increasing");
    if (n.onset < prev_end)
      throw validation_error("overlapping melody notes at step " + std::to_string(n.onset));
    prev_onset = n.onset;
    prev_end = n.onset + n.duration;

    int end = n.onset + n.duration;
    if (end > kMelodySteps) {
      if (warnings)
        warnings->push_back("note at step " + std::to_string(n.onset) +
                            " truncated at grid end");
      end = kMelodySteps;
    }
    MelodyStep onset_step;
    onset_step.kind = StepKind::Onset;
    onset_step.pitch_class = std::uint8_t(((n.midi_pitch % 12) + 12) % 12);
    onset_step.octave = std::uint8_t(std::clamp(n.midi_pitch / 12, 0, 9));
    grid.steps[n.onset] = onset_step;
    for (int s = n.onset + 1; s < end; ++s) grid.steps[s] = {StepKind::Hold, 0, 0};
  }
  return grid;
}

ChordGrid transpose_chord(const ChordGrid& grid, int semitones) {
  const int k = ((semitones % 12) + 12) % 12;
  ChordGrid out = grid;
  for (auto& tok : out.slots) {
    if (tok != kPadToken) tok = std::uint8_t((tok + k) % 12);
  }
  return out;
}

MelodyGrid transpose_melody(const MelodyGrid& grid, int semitones) {
  // shifts live in key space: reduced mod 12, so T_12 is the identity
  const int k = ((semitones % 12) + 12) % 12;
  MelodyGrid out = grid;
  for (auto& st : out.steps) {
    if (st.kind != StepKind::Onset) continue;
    const int abs_pitch = st.octave * 12 + st.pitch_class + k;
    st.pitch_class = std::uint8_t(abs_pitch % 12);
    st.octave = std::uint8_t(std::clamp(abs_pitch / 12, 0, 9));
  }
  return out;
}

CorruptResult corrupt(const MelodyGrid& melody, const CorruptionSpec& spec, Rng& rng) {
  CorruptResult res;
  switch (spec.method) {
    case CorruptionSpec::Method::Transpose: {
      const int shift = rng.uniform_int(12);
      res.melody = transpose_melody(melody, shift);
      res.shift = shift;
      break;
    }
    case CorruptionSpec::Method::Mask: {
      if (spec.mask_rate < 0.0 || spec.mask_rate > 1.0)
        throw config_error("mask corruption requires mask_rate in [0,1]");
      res.melody = melody;
      for (auto& st : res.melody.steps) {
        if (rng.bernoulli(spec.mask_rate)) st = {StepKind::Mask, 0, 0};
      }
      break;
    }
    case CorruptionSpec::Method::None:
      res.melody = melody;
      break;
  }
  return res;
}

Tensor beat_pool_condition(const MelodyGrid& melody, const Tensor& table) {
  if (table.rows < kMelodyVocab)
    throw validation_error("embedding table does not cover the melody vocabulary");
  Tensor out(kBeats, table.cols);
  for (int b = 0; b < kBeats; ++b) {
    double* dst = out.row(b);
    for (int s = 4 * b; s < 4 * b + 4; ++s) {
      const double* src = table.row(melody_token(melody.steps[s]));
      for (int c = 0; c < table.cols; ++c) dst[c] += src[c];
    }
  }
  return out;
}

}  // namespace harmonia
