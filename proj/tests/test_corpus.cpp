#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "harmonia/corpus.hpp"

using namespace harmonia;

namespace {

LeadSheet simple_song(const std::string& id, int bars) {
  LeadSheet sheet;
  sheet.song_id = id;
  sheet.meter = Meter::FourFour;
  for (int bar = 0; bar < bars; ++bar) {
    sheet.chord_events.emplace_back(bar * 4, std::vector<int>{48, 52, 55});
    for (int q = 0; q < 4; ++q)
      sheet.melody_notes.push_back({bar * 16 + q * 4, 4, 60 + (q % 3)});
  }
  return sheet;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("parse_interchange reads a well-formed song") {
  std::istringstream in(
      "# a comment\n"
      "SONG tune-1 METER 4/4\n"
      "N 0 4 60\n"
      "N 4 4 62\n"
      "C 0 48,52,55\n"
      "C 4 50,53,57\n");
  const auto results = parse_interchange(in);
  REQUIRE(results.size() == 1);
  CHECK(results[0].status == IngestResult::Status::Ok);
  const LeadSheet& sheet = results[0].sheet;
  CHECK(sheet.song_id == "tune-1");
  CHECK(sheet.meter == Meter::FourFour);
  CHECK(sheet.melody_notes.size() == 2);
  CHECK(sheet.chord_events.size() == 2);
  CHECK(song_length_beats(sheet) == 5);
}

TEST_CASE("parse_interchange skips disallowed meters with a reason") {
  std::istringstream in(
      "SONG waltz METER 3/4\n"
      "N 0 4 60\n"
      "SONG duple METER 2/4\n"
      "N 0 4 60\n");
  const auto results = parse_interchange(in);
  REQUIRE(results.size() == 2);
  CHECK(results[0].status == IngestResult::Status::SkippedMeter);
  CHECK(results[0].skip_reason.find("3/4") != std::string::npos);
  CHECK(results[1].status == IngestResult::Status::Ok);
  CHECK(results[1].sheet.meter == Meter::TwoFour);
}

TEST_CASE("parse_interchange reports malformed lines with their number") {
  std::istringstream overlap(
      "SONG s METER 4/4\n"
      "N 0 8 60\n"
      "N 4 4 62\n");
  try {
    parse_interchange(overlap);
    FAIL("expected parse_error");
  } catch (const parse_error& e) {
    CHECK(e.line == 3);
  }

  std::istringstream bad("SONG s METER 4/4\nX 1 2\n");
  CHECK_THROWS_AS(parse_interchange(bad), parse_error);
  std::istringstream orphan("N 0 4 60\n");
  CHECK_THROWS_AS(parse_interchange(orphan), parse_error);
  std::istringstream nonnum("SONG s METER 4/4\nN zero 4 60\n");
  CHECK_THROWS_AS(parse_interchange(nonnum), parse_error);
}

TEST_CASE("pitch-class chord lists stack upward in the written order") {
  std::istringstream in("SONG s METER 4/4\nC 0 7,11,2\n");
  const auto results = parse_interchange(in);
  const auto& pitches = results[0].sheet.chord_events[0].second;
  CHECK(pitches == std::vector<int>{55, 59, 62});  // G root stays lowest
}

TEST_CASE("write_leadsheet round-trips through the parser") {
  const LeadSheet sheet = simple_song("rt", 10);
  std::stringstream buf;
  write_leadsheet(buf, sheet);
  const auto results = parse_interchange(buf);
  REQUIRE(results.size() == 1);
  CHECK(results[0].sheet.song_id == sheet.song_id);
  CHECK(results[0].sheet.melody_notes.size() == sheet.melody_notes.size());
  CHECK(results[0].sheet.chord_events.size() == sheet.chord_events.size());
}

TEST_CASE("slice_snippets windows at an 8-beat hop") {
  CHECK(slice_snippets(simple_song("a", 12)).size() == 3);  // 48 beats
  CHECK(slice_snippets(simple_song("b", 8)).size() == 1);   // 32 beats

  // 31 beats: a chord at beat 30 ends the song short of one window
  LeadSheet short_song;
  short_song.song_id = "short";
  for (int b = 0; b < 31; b += 2)
    short_song.chord_events.emplace_back(b, std::vector<int>{48 + (b % 5), 55});
  CHECK(song_length_beats(short_song) == 31);
  CHECK(slice_snippets(short_song).empty());
}

TEST_CASE("slice_snippets re-onsets chords sounding across a window start") {
  LeadSheet sheet = simple_song("x", 12);
  sheet.chord_events.clear();
  sheet.chord_events.emplace_back(0, std::vector<int>{48, 52, 55});  // to beat 20
  sheet.chord_events.emplace_back(20, std::vector<int>{50, 53, 57});
  const auto samples = slice_snippets(sheet);
  REQUIRE(samples.size() == 3);
  // window at beat 8 starts inside the first chord
  CHECK(samples[1].start_beat == 8);
  CHECK(samples[1].chord.at(0, 0) == 0);
  CHECK(samples[1].chord.at(11, 0) == 0);
  CHECK(samples[1].chord.at(12, 0) == 2);
  // window at beat 16: first chord still sounding, second enters at rel 4
  CHECK(samples[2].chord.at(0, 0) == 0);
  CHECK(samples[2].chord.at(4, 0) == 2);
}

TEST_CASE("augment_transpositions fans out to all 12 keys") {
  const auto samples = slice_snippets(simple_song("a", 10));
  REQUIRE(samples.size() == 2);
  const auto augmented = augment_transpositions(samples);
  CHECK(augmented.size() == samples.size() * 12);

  // k = 0 copies equal the originals; tags track the shift jointly
  CHECK(augmented[0].chord == samples[0].chord);
  CHECK(augmented[0].melody == samples[0].melody);
  for (std::size_t i = 0; i < augmented.size(); ++i) {
    const int k = int(i % 12);
    CHECK(augmented[i].transposition_tag == k);
    CHECK(augmented[i].chord == transpose_chord(samples[i / 12].chord, k));
    CHECK(augmented[i].melody == transpose_melody(samples[i / 12].melody, k));
  }

  CHECK_THROWS_AS(augment_transpositions(augmented), validation_error);

  // augmentation closure: filtering tag 0 recovers the input set
  std::vector<Sample> tag0;
  for (const Sample& s : augmented)
    if (s.transposition_tag == 0) tag0.push_back(s);
  REQUIRE(tag0.size() == samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    CHECK(tag0[i].chord == samples[i].chord);
    CHECK(tag0[i].melody == samples[i].melody);
  }
}

TEST_CASE("split_songs partitions at song level, deterministically") {
  std::vector<Sample> samples;
  for (int s = 0; s < 100; ++s) {
    const auto sliced = slice_snippets(simple_song("song-" + std::to_string(s), 8));
    samples.insert(samples.end(), sliced.begin(), sliced.end());
  }
  const CorpusFile corpus = split_songs(samples, 0.05, 77);

  std::set<std::string> train_songs, val_songs;
  for (const Sample& s : corpus.train) train_songs.insert(s.song_id);
  for (const Sample& s : corpus.val) val_songs.insert(s.song_id);
  CHECK(val_songs.size() == 5);
  CHECK(train_songs.size() == 95);
  CHECK(corpus.train.size() == 95 * 12);  // augmented train split only
  CHECK(corpus.val.size() == 5);
  for (const Sample& s : corpus.val) CHECK(s.transposition_tag == 0);

  // same seed twice -> identical partition and ordering
  const CorpusFile again = split_songs(samples, 0.05, 77);
  REQUIRE(again.train.size() == corpus.train.size());
  for (std::size_t i = 0; i < corpus.train.size(); ++i) {
    CHECK(again.train[i].song_id == corpus.train[i].song_id);
    CHECK(again.train[i].chord == corpus.train[i].chord);
  }

  CHECK_THROWS_AS(split_songs(slice_snippets(simple_song("only", 8)), 0.05, 1),
                  validation_error);
}

TEST_CASE("split_songs never leaks a song across splits over many seeds") {
  std::vector<Sample> samples;
  for (int s = 0; s < 23; ++s) {
    const auto sliced = slice_snippets(simple_song("song-" + std::to_string(s), 10));
    samples.insert(samples.end(), sliced.begin(), sliced.end());
  }
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const CorpusFile corpus = split_songs(samples, 0.2, seed);
    std::set<std::string> val_songs;
    for (const Sample& s : corpus.val) val_songs.insert(s.song_id);
    for (const Sample& s : corpus.train) CHECK(val_songs.count(s.song_id) == 0);
  }
}

TEST_CASE("synth_corpus stays in key and is deterministic") {
  static constexpr int kScale[7] = {0, 2, 4, 5, 7, 9, 11};
  const auto songs = synth_corpus(20, 8, 11);
  REQUIRE(songs.size() == 20);

  for (const LeadSheet& sheet : songs) {
    REQUIRE_FALSE(sheet.chord_events.empty());
    // recover the key from the first chord root (a diatonic degree)
    bool any_key_fits = false;
    for (int key = 0; key < 12 && !any_key_fits; ++key) {
      std::set<int> scale;
      for (int d : kScale) scale.insert((key + d) % 12);
      bool ok = true;
      for (const auto& [onset, pitches] : sheet.chord_events)
        for (int p : pitches) ok = ok && scale.count(((p % 12) + 12) % 12) > 0;
      for (const MelodyNote& n : sheet.melody_notes)
        ok = ok && scale.count(n.midi_pitch % 12) > 0;
      any_key_fits = ok;
    }
    CHECK(any_key_fits);  // chords and melody share one diatonic scale
  }

  const auto again = synth_corpus(20, 8, 11);
  for (std::size_t i = 0; i < songs.size(); ++i) {
    CHECK(again[i].melody_notes.size() == songs[i].melody_notes.size());
    CHECK(again[i].chord_events == songs[i].chord_events);
  }
  CHECK_THROWS_AS(synth_corpus(0, 8, 1), validation_error);
  CHECK_THROWS_AS(synth_corpus(1, 4, 1), validation_error);
}

TEST_CASE("synth_corpus chord-tone fraction sits near 0.7") {
  long chord_tone = 0, total = 0;
  for (int seed = 0; total < 10000; ++seed) {
    const auto songs = synth_corpus(40, 10, 400 + seed);
    for (const LeadSheet& sheet : songs) {
      for (const MelodyNote& n : sheet.melody_notes) {
        // find the chord sounding at the note's beat
        const int beat = n.onset / 4;
        const std::vector<int>* chord = nullptr;
        for (const auto& ev : sheet.chord_events) {
          if (ev.first <= beat) chord = &ev.second;
        }
        REQUIRE(chord != nullptr);
        bool member = false;
        for (int p : *chord) member = member || (p % 12 == n.midi_pitch % 12);
        chord_tone += member ? 1 : 0;
        ++total;
      }
    }
  }
  const double fraction = double(chord_tone) / double(total);
  CHECK(fraction > 0.65);
  CHECK(fraction < 0.75);
}

TEST_CASE("corpus file round-trips losslessly") {
  std::vector<Sample> samples;
  for (int s = 0; s < 6; ++s) {
    const auto sliced = slice_snippets(simple_song("song-" + std::to_string(s), 10));
    samples.insert(samples.end(), sliced.begin(), sliced.end());
  }
  const CorpusFile corpus = split_songs(samples, 0.2, 3);

  const std::string path = temp_path("harmonia_corpus_test.hdat");
  write_corpus(corpus, path);
  const CorpusFile loaded = read_corpus(path);

  CHECK(loaded.split_seed == corpus.split_seed);
  REQUIRE(loaded.train.size() == corpus.train.size());
  REQUIRE(loaded.val.size() == corpus.val.size());
  for (std::size_t i = 0; i < corpus.train.size(); ++i) {
    CHECK(loaded.train[i].song_id == corpus.train[i].song_id);
    CHECK(loaded.train[i].start_beat == corpus.train[i].start_beat);
    CHECK(loaded.train[i].transposition_tag == corpus.train[i].transposition_tag);
    CHECK(loaded.train[i].chord == corpus.train[i].chord);
    CHECK(loaded.train[i].melody == corpus.train[i].melody);
  }
  std::filesystem::remove(path);
}

TEST_CASE("corpus file detects truncation and corruption") {
  const auto samples = slice_snippets(simple_song("s", 16));
  std::vector<Sample> many;
  for (int i = 0; i < 3; ++i) {
    for (Sample s : samples) {
      s.song_id += std::to_string(i);
      many.push_back(s);
    }
  }
  const CorpusFile corpus = split_songs(many, 0.34, 9);
  const std::string path = temp_path("harmonia_corpus_trunc.hdat");
  write_corpus(corpus, path);

  // truncate the file
  const auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size - 64);
  CHECK_THROWS_AS(read_corpus(path), io_error);

  // flip a payload byte
  write_corpus(corpus, path);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(std::streamoff(size - 10));
    char byte = 0;
    f.read(&byte, 1);
    f.seekp(std::streamoff(size - 10));
    byte = char(byte ^ 0x1);
    f.write(&byte, 1);
  }
  CHECK_THROWS_AS(read_corpus(path), io_error);
  std::filesystem::remove(path);
}

TEST_CASE("an empty corpus round-trips") {
  CorpusFile corpus;
  corpus.split_seed = 42;
  const std::string path = temp_path("harmonia_corpus_empty.hdat");
  write_corpus(corpus, path);
  const CorpusFile loaded = read_corpus(path);
  CHECK(loaded.train.empty());
  CHECK(loaded.val.empty());
  CHECK(loaded.split_seed == 42);
  std::filesystem::remove(path);
}
