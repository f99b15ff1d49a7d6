#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "harmonia/grids.hpp"

namespace harmonia {

enum class Meter { TwoFour, FourFour };

std::string meter_string(Meter m);

// One song of the interchange corpus: a monophonic melody over the whole
// song plus chord onsets. Only 2/4 and 4/4 songs are kept.
struct LeadSheet {
  std::string song_id;
  Meter meter = Meter::FourFour;
  std::vector<MelodyNote> melody_notes;   // onsets in sixteenths over the song
  std::vector<ChordEvent> chord_events;   // onsets in beats over the song
};

// A 32-beat training window. transposition_tag records augmentation
// provenance (0 = original key).
struct Sample {
  std::string song_id;
  int start_beat = 0;
  ChordGrid chord;
  MelodyGrid melody;
  std::uint8_t transposition_tag = 0;
};

struct CorpusFile {
  std::uint32_t version = 1;
  std::uint64_t split_seed = 0;
  std::vector<Sample> train;
  std::vector<Sample> val;
};

// ---- interchange format ----
//
//   # comment
//   SONG <id> METER <2/4|4/4>
//   N <onset_sixteenth> <duration_sixteenths> <midi_pitch>
//   C <onset_beat> <pitch>[,<pitch>...]
//
// Chord pitches are MIDI numbers; values all <= 11 are read as pitch
// classes and stacked upward from octave 4 in the order written, so the
// first listed class stays the lowest slot.

struct IngestResult {
  enum class Status { Ok, SkippedMeter };
  Status status = Status::Ok;
  std::string skip_reason;
  LeadSheet sheet;
};

// All songs in one interchange file. Malformed lines raise parse_error
// with the line number; disallowed meters come back as skips.
std::vector<IngestResult> parse_interchange(std::istream& in);
std::vector<IngestResult> ingest_file(const std::string& path);

// First accepted song of a file (errors if the file holds none).
LeadSheet ingest_leadsheet(const std::string& path);

void write_leadsheet(std::ostream& out, const LeadSheet& sheet);

// ---- slicing / augmentation / split ----

// Beat extent of melody and chords (no rounding; a 31-beat song slices to
// nothing).
int song_length_beats(const LeadSheet& sheet);

// 32-beat snippets at an 8-beat hop; chords quantized at quarter note,
// melody at sixteenth. Songs shorter than 32 beats yield nothing.
std::vector<Sample> slice_snippets(const LeadSheet& sheet);

// Every input sample (tag 0) to all 12 keys; output size = 12 x input.
std::vector<Sample> augment_transpositions(const std::vector<Sample>& samples);

// Song-level split by a seeded shuffle; the train split is then augmented
// to all 12 keys. Deterministic per (samples, fraction, seed).
CorpusFile split_songs(const std::vector<Sample>& samples, double val_fraction,
                       std::uint64_t seed);

// ---- synthetic desk-scale corpus ----
//
// Per song: a uniform key, one diatonic chord per bar from {I,ii,iii,IV,V,vi}
// (25% chance of an added seventh), and a quarter/eighth-note melody whose
// notes are chord tones with probability 0.7 and non-chord scale tones
// otherwise, centered on octave 5.
std::vector<LeadSheet> synth_corpus(int n_songs, int bars_per_song, std::uint64_t seed);

// ---- binary corpus file (magic HDAT1, little-endian) ----

void write_corpus(const CorpusFile& corpus, const std::string& path);
CorpusFile read_corpus(const std::string& path);

}  // namespace harmonia
