#include "harmonia/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace harmonia {

std::string meter_string(Meter m) { return m == Meter::TwoFour ? "2/4" : "4/4"; }

namespace {

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream ss(line);
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

}  // namespace

std::vector<IngestResult> parse_interchange(std::istream& in) {
  std::vector<IngestResult> results;
  LeadSheet* cur = nullptr;
  bool cur_skipped = false;
  std::string line;
  int line_no = 0;
  int prev_chord_onset = -1;

  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto toks = split_ws(line);
    if (toks.empty()) continue;

    if (toks[0] == "SONG") {
      if (toks.size() != 4 || toks[2] != "METER")
        throw parse_error("expected SONG <id> METER <2/4|4/4>", line_no);
      IngestResult res;
      res.sheet.song_id = toks[1];
      prev_chord_onset = -1;
      if (toks[3] == "4/4") {
        res.sheet.meter = Meter::FourFour;
      } else if (toks[3] == "2/4") {
        res.sheet.meter = Meter::TwoFour;
      } else {
        res.status = IngestResult::Status::SkippedMeter;
        res.skip_reason = "meter " + toks[3] + " not in {2/4, 4/4}";
      }
      results.push_back(std::move(res));
      cur = &results.back().sheet;
      cur_skipped = results.back().status != IngestResult::Status::Ok;
    } else if (toks[0] == "N") {
      if (!cur) throw parse_error("N line before any SONG", line_no);
      if (toks.size() != 4) throw parse_error("expected N <onset> <dur> <pitch>", line_no);
      if (cur_skipped) continue;
      MelodyNote n;
      try {
        n.onset = std::stoi(toks[1]);
        n.duration = std::stoi(toks[2]);
        n.midi_pitch = std::stoi(toks[3]);
      } catch (const std::exception&) {
        throw parse_error("bad number in N line", line_no);
      }
      if (n.duration < 1) throw parse_error("note duration must be >= 1", line_no);
      if (n.midi_pitch < 0 || n.midi_pitch > 127)
        throw parse_error("MIDI pitch out of [0,127]", line_no);
      if (!cur->melody_notes.empty()) {
        const MelodyNote& prev = cur->melody_notes.back();
        if (n.onset <= prev.onset)
          throw parse_error("melody onsets must be strictly increasing", line_no);
        if (n.onset < prev.onset + prev.duration)
          throw parse_error("overlapping melody notes (melody must be monophonic)", line_no);
      }
      cur->melody_notes.push_back(n);
    } else if (toks[0] == "C") {
      if (!cur) throw parse_error("C line before any SONG", line_no);
      if (toks.size() != 3) throw parse_error("expected C <onset_beat> <pitches>", line_no);
      if (cur_skipped) continue;
      int onset = 0;
      try {
        onset = std::stoi(toks[1]);
      } catch (const std::exception&) {
        throw parse_error("bad chord onset", line_no);
      }
      if (onset <= prev_chord_onset)
        throw parse_error("chord onsets must be strictly increasing", line_no);
      prev_chord_onset = onset;
      std::vector<int> values;
      std::stringstream ps(toks[2]);
      std::string item;
      while (std::getline(ps, item, ',')) {
        try {
          values.push_back(std::stoi(item));
        } catch (const std::exception&) {
          throw parse_error("bad chord pitch '" + item + "'", line_no);
        }
      }
      if (values.empty()) throw parse_error("chord with no pitches", line_no);
      for (int v : values)
        if (v < 0 || v > 127) throw parse_error("chord pitch out of [0,127]", line_no);
      // pitch-class lists are stacked upward from octave 4 in written order
      const bool all_classes =
          std::all_of(values.begin(), values.end(), [](int v) { return v <= 11; });
      if (all_classes) {
        std::vector<int> stacked;
        int prev = 48 + values[0];
        stacked.push_back(prev);
        for (std::size_t i = 1; i < values.size(); ++i) {
          int step = (values[i] - values[i - 1] + 12) % 12;
          if (step == 0) step = 12;
          prev += step;
          stacked.push_back(prev);
        }
        values = std::move(stacked);
      }
      cur->chord_events.emplace_back(onset, std::move(values));
    } else {
      throw parse_error("unknown record '" + toks[0] + "'", line_no);
    }
  }
  return results;
}

std::vector<IngestResult> ingest_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open " + path);
  return parse_interchange(in);
}

LeadSheet ingest_leadsheet(const std::string& path) {
  for (auto& res : ingest_file(path)) {
    if (res.status == IngestResult::Status::Ok) return std::move(res.sheet);
  }
  throw validation_error("no accepted song in " + path);
}

void write_leadsheet(std::ostream& out, const LeadSheet& sheet) {
  out << "SONG " << sheet.song_id << " METER " << meter_string(sheet.meter) << "\n";
  for (const MelodyNote& n : sheet.melody_notes)
    out << "N " << n.onset << " " << n.duration << " " << n.midi_pitch << "\n";
  for (const auto& [onset, pitches] : sheet.chord_events) {
    out << "C " << onset << " ";
    for (std::size_t i = 0; i < pitches.size(); ++i)
      out << (i ? "," : "") << pitches[i];
    out << "\n";
  }
}

int song_length_beats(const LeadSheet& sheet) {
  int melody_end_sixteenths = 0;
  for (const MelodyNote& n : sheet.melody_notes)
    melody_end_sixteenths = std::max(melody_end_sixteenths, n.onset + n.duration);
  int beats = (melody_end_sixteenths + 3) / 4;
  for (const auto& [onset, _] : sheet.chord_events) beats = std::max(beats, onset + 1);
  return beats;
}

std::vector<Sample> slice_snippets(const LeadSheet& sheet) {
  std::vector<Sample> samples;
  const int length = song_length_beats(sheet);
  for (int start = 0; start + kBeats <= length; start += 8) {
    Sample s;
    s.song_id = sheet.song_id;
    s.start_beat = start;

    // chords active in [start, start+32); an event sounding across the
    // window start re-onsets at relative beat 0
    std::vector<ChordEvent> window_events;
    for (std::size_t e = 0; e < sheet.chord_events.size(); ++e) {
      const int onset = sheet.chord_events[e].first;
      const int next = e + 1 < sheet.chord_events.size()
                           ? sheet.chord_events[e + 1].first
                           : length;
      if (next <= start || onset >= start + kBeats) continue;
      window_events.emplace_back(std::max(onset, start) - start,
                                 sheet.chord_events[e].second);
    }
    s.chord = encode_chord_grid(window_events);

    const int s0 = start * 4;
    std::vector<MelodyNote> window_notes;
    for (const MelodyNote& n : sheet.melody_notes) {
      const int end = n.onset + n.duration;
      if (end <= s0 || n.onset >= s0 + kMelodySteps) continue;
      MelodyNote w;
      w.onset = std::max(n.onset, s0) - s0;
      w.duration = std::min(end, s0 + kMelodySteps) - (w.onset + s0);
      w.midi_pitch = n.midi_pitch;
      window_notes.push_back(w);
    }
    s.melody = encode_melody_grid(window_notes);
    samples.push_back(std::move(s));
  }
  return samples;
}

std::vector<Sample> augment_transpositions(const std::vector<Sample>& samples) {
  for (const Sample& s : samples) {
    if (s.transposition_tag != 0)
      throw validation_error("augment_transpositions expects unaugmented samples (tag 0)");
  }
  std::vector<Sample> out;
  out.reserve(samples.size() * 12);
  for (const Sample& s : samples) {
    for (int k = 0; k < 12; ++k) {
      Sample t = s;
      t.chord = transpose_chord(s.chord, k);
      t.melody = transpose_melody(s.melody, k);
      t.transposition_tag = std::uint8_t(k);
      out.push_back(std::move(t));
    }
  }
  return out;
}

CorpusFile split_songs(const std::vector<Sample>& samples, double val_fraction,
                       std::uint64_t seed) {
  std::vector<std::string> songs;  // first-appearance order
  std::map<std::string, bool> seen;
  for (const Sample& s : samples) {
    if (!seen.count(s.song_id)) {
      seen[s.song_id] = true;
      songs.push_back(s.song_id);
    }
  }
  if (songs.size() < 2) throw validation_error("song-level split needs at least 2 songs");

  std::vector<std::string> shuffled = songs;
  Rng rng(mix_seed(seed, 0x53504c49ull));
  for (int i = int(shuffled.size()) - 1; i > 0; --i)
    std::swap(shuffled[i], shuffled[rng.uniform_int(i + 1)]);

  const int n = int(songs.size());
  const int n_val = std::clamp<int>(int(std::llround(val_fraction * n)), 1, n - 1);
  std::map<std::string, bool> in_val;
  for (int i = 0; i < n_val; ++i) in_val[shuffled[i]] = true;

  CorpusFile corpus;
  corpus.split_seed = seed;
  std::vector<Sample> train_raw;
  for (const Sample& s : samples) {
    if (in_val.count(s.song_id))
      corpus.val.push_back(s);
    else
      train_raw.push_back(s);
  }
  corpus.train = augment_transpositions(train_raw);
  return corpus;
}

std::vector<LeadSheet> synth_corpus(int n_songs, int bars_per_song, std::uint64_t seed) {
  if (n_songs < 1) throw validation_error("synth_corpus needs n_songs >= 1");
  if (bars_per_song < 8) throw validation_error("synth_corpus needs bars_per_song >= 8");
  static constexpr int kScale[7] = {0, 2, 4, 5, 7, 9, 11};

  std::vector<LeadSheet> songs;
  songs.reserve(n_songs);
  for (int si = 0; si < n_songs; ++si) {
    Rng rng(mix_seed(seed, 0x53594e54ull, std::uint64_t(si)));
    LeadSheet sheet;
    char id[32];
    std::snprintf(id, sizeof id, "synth-%04d", si);
    sheet.song_id = id;
    sheet.meter = Meter::FourFour;

    const int key = rng.uniform_int(12);
    for (int bar = 0; bar < bars_per_song; ++bar) {
      const int degree = rng.uniform_int(6);  // I ii iii IV V vi
      const bool seventh = rng.bernoulli(0.25);

      std::vector<int> pcs;
      for (int third = 0; third < (seventh ? 4 : 3); ++third)
        pcs.push_back((key + kScale[(degree + 2 * third) % 7]) % 12);
      std::vector<int> midis;
      int prev = 48 + pcs[0];
      midis.push_back(prev);
      for (std::size_t i = 1; i < pcs.size(); ++i) {
        prev += (pcs[i] - pcs[i - 1] + 12) % 12;
        midis.push_back(prev);
      }
      sheet.chord_events.emplace_back(bar * 4, midis);

      // quarter/eighth melody over the bar; occasional rests, but never a
      // trailing rest (the song must measure its full beat length)
      int pos = 0;
      while (pos < 16) {
        int dur = rng.bernoulli(0.5) ? 4 : 2;
        dur = std::min(dur, 16 - pos);
        const bool closes_song = bar == bars_per_song - 1 && pos + dur >= 16;
        if (!closes_song && rng.bernoulli(0.1)) {
          pos += dur;
          continue;
        }
        int pc;
        if (rng.bernoulli(0.7)) {
          pc = pcs[rng.uniform_int(int(pcs.size()))];
        } else {
          std::vector<int> non_chord;
          for (int d : kScale) {
            const int cand = (key + d) % 12;
            if (std::find(pcs.begin(), pcs.end(), cand) == pcs.end())
              non_chord.push_back(cand);
          }
          pc = non_chord[rng.uniform_int(int(non_chord.size()))];
        }
        const int midi = (rng.bernoulli(0.1) ? 72 : 60) + pc;
        sheet.melody_notes.push_back({bar * 16 + pos, dur, midi});
        pos += dur;
      }
    }
    songs.push_back(std::move(sheet));
  }
  return songs;
}

// ---- binary corpus I/O ----

namespace {

void put_u16(std::string& buf, std::uint16_t x) {
  for (int i = 0; i < 2; ++i) buf.push_back(char((x >> (8 * i)) & 0xff));
}
void put_u32(std::string& buf, std::uint32_t x) {
  for (int i = 0; i < 4; ++i) buf.push_back(char((x >> (8 * i)) & 0xff));
}
void put_u64(std::string& buf, std::uint64_t x) {
  for (int i = 0; i < 8; ++i) buf.push_back(char((x >> (8 * i)) & 0xff));
}
void put_i32(std::string& buf, std::int32_t x) { put_u32(buf, std::uint32_t(x)); }

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;

  bool need(std::size_t n) const { return pos + n <= buf.size(); }
  std::uint16_t u16() { return std::uint16_t(u_n(2)); }
  std::uint32_t u32() { return std::uint32_t(u_n(4)); }
  std::uint64_t u64() { return u_n(8); }
  std::int32_t i32() { return std::int32_t(u32()); }
  std::uint64_t u_n(int n) {
    if (!need(n)) throw io_error("corpus file truncated");
    std::uint64_t x = 0;
    for (int i = 0; i < n; ++i) x |= std::uint64_t(std::uint8_t(buf[pos + i])) << (8 * i);
    pos += n;
    return x;
  }
  std::string bytes(std::size_t n) {
    if (!need(n)) throw io_error("corpus file truncated");
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

void encode_record(std::string& out, const Sample& s) {
  std::string rec;
  put_u16(rec, std::uint16_t(s.song_id.size()));
  rec += s.song_id;
  put_i32(rec, s.start_beat);
  rec.push_back(char(s.transposition_tag));
  for (std::uint8_t tok : s.chord.slots) rec.push_back(char(tok));
  for (const MelodyStep& st : s.melody.steps) rec.push_back(char(melody_token(st)));
  put_u32(out, std::uint32_t(rec.size()));
  out += rec;
}

Sample decode_record(Reader& r) {
  const std::uint32_t len = r.u32();
  const std::size_t end = r.pos + len;
  Sample s;
  const std::uint16_t id_len = r.u16();
  s.song_id = r.bytes(id_len);
  s.start_beat = r.i32();
  s.transposition_tag = std::uint8_t(r.u_n(1));
  const std::string chord = r.bytes(kBeats * kChordSlots);
  for (std::size_t i = 0; i < chord.size(); ++i)
    s.chord.slots[i] = std::uint8_t(chord[i]);
  const std::string mel = r.bytes(kMelodySteps);
  for (int i = 0; i < kMelodySteps; ++i)
    s.melody.steps[i] = melody_step_from_token(std::uint8_t(mel[i]));
  if (r.pos != end) throw io_error("corpus record length mismatch");
  return s;
}

constexpr char kMagic[5] = {'H', 'D', 'A', 'T', '1'};

}  // namespace

void write_corpus(const CorpusFile& corpus, const std::string& path) {
  std::string records;
  for (const Sample& s : corpus.train) encode_record(records, s);
  for (const Sample& s : corpus.val) encode_record(records, s);

  std::string out(kMagic, sizeof kMagic);
  put_u32(out, corpus.version);
  put_u64(out, corpus.split_seed);
  put_u32(out, std::uint32_t(corpus.train.size()));
  put_u32(out, std::uint32_t(corpus.val.size()));
  put_u64(out, fnv1a64(records.data(), records.size()));
  out += records;

  std::ofstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot write " + path);
  f.write(out.data(), std::streamsize(out.size()));
  if (!f) throw io_error("write failed for " + path);
}

CorpusFile read_corpus(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  Reader r{buf};
  if (r.bytes(sizeof kMagic) != std::string(kMagic, sizeof kMagic))
    throw io_error("not a corpus file (bad magic)");
  CorpusFile corpus;
  corpus.version = r.u32();
  if (corpus.version != 1)
    throw io_error("unsupported corpus version " + std::to_string(corpus.version));
  corpus.split_seed = r.u64();
  const std::uint32_t n_train = r.u32();
  const std::uint32_t n_val = r.u32();
  const std::uint64_t checksum = r.u64();

  if (fnv1a64(buf.data() + r.pos, buf.size() - r.pos) != checksum)
    throw io_error("corpus checksum failure");

  try {
    for (std::uint32_t i = 0; i < n_train; ++i) corpus.train.push_back(decode_record(r));
    for (std::uint32_t i = 0; i < n_val; ++i) corpus.val.push_back(decode_record(r));
  } catch (const io_error&) {
    throw io_error("corpus record count mismatch (file truncated?)");
  }
  if (r.pos != buf.size()) throw io_error("corpus has trailing bytes");
  return corpus;
}

}  // namespace harmonia
