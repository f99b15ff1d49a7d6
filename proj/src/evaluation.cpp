#include "harmonia/evaluation.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace harmonia {

double cosine(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) throw contract_error("cosine: size mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a.v[i] * b.v[i];
    na += a.v[i] * a.v[i];
    nb += b.v[i] * b.v[i];
  }
  if (na == 0.0 && nb == 0.0) return 1.0;  // identical zero vectors
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

SimilarityProfile transposition_similarity(const Model& model,
                                           const std::vector<Sample>& eval_samples) {
  if (eval_samples.empty())
    throw validation_error("transposition similarity needs a non-empty eval set");
  for (const Sample& s : eval_samples)
    if (s.transposition_tag != 0)
      throw validation_error("similarity probe expects unaugmented samples (tag 0)");

  const int n = int(eval_samples.size());
  std::vector<std::array<double, 12>> per_sample(n);
#if defined(_OPENMP)
#pragma omp parallel for schedule(dynamic, 1)
#endif
  for (int i = 0; i < n; ++i) {
    const Sample& s = eval_samples[i];
    const Posterior base = model.encode(s.chord, s.melody);
    for (int shift = 1; shift <= 12; ++shift) {
      const Posterior moved = model.encode(transpose_chord(s.chord, shift),
                                           transpose_melody(s.melody, shift));
      per_sample[i][shift - 1] = cosine(base.mean, moved.mean);
    }
  }

  SimilarityProfile profile;
  for (int shift = 0; shift < 12; ++shift) {
    double sum = 0.0;
    for (int i = 0; i < n; ++i) sum += per_sample[i][shift];
    profile.values[shift] = sum / n;
  }
  return profile;
}

const std::array<const char*, 5>& HarmonyHistogram::bucket_names() {
  static const std::array<const char*, 5> names = {"root", "third", "fifth",
                                                   "seventh", "others"};
  return names;
}

HarmonyHistogram harmony_histogram(
    const std::vector<std::pair<MelodyGrid, ChordGrid>>& pairs) {
  std::array<long, 5> counts{};
  for (const auto& [melody, chord] : pairs) {
    for (int s = 0; s < kMelodySteps; ++s) {
      const MelodyStep& st = melody.steps[s];
      if (st.kind != StepKind::Onset) continue;
      const int beat = s / 4;
      if (chord.row_all_pad(beat)) continue;
      int bucket = 4;  // others
      for (int p = 0; p < kChordSlots; ++p) {
        if (chord.at(beat, p) == st.pitch_class) {
          bucket = p;  // first matching slot wins
          break;
        }
      }
      ++counts[bucket];
    }
  }
  HarmonyHistogram hist;
  for (long c : counts) hist.counted_notes += c;
  if (hist.counted_notes > 0) {
    for (int b = 0; b < 5; ++b)
      hist.fractions[b] = double(counts[b]) / double(hist.counted_notes);
  }
  return hist;
}

ChordGrid swap_harmonize(const Model& model, const Sample& source_a,
                         const MelodyGrid& melody_b) {
  const Posterior post = model.encode(source_a.chord, source_a.melody);
  return model.greedy_decode(post.mean, melody_b);
}

ControllabilityResult evaluate_controllability(const Model& model,
                                               const std::vector<Sample>& eval_samples,
                                               std::uint64_t seed) {
  if (eval_samples.size() < 2)
    throw validation_error("controllability needs at least 2 eval samples");

  const int n = int(eval_samples.size());
  std::vector<int> partner(n);
  for (int i = 0; i < n; ++i) partner[i] = i;
  Rng rng(mix_seed(seed, 0x504149ull));
  for (int i = n - 1; i > 0; --i) std::swap(partner[i], partner[rng.uniform_int(i + 1)]);

  std::vector<std::pair<MelodyGrid, ChordGrid>> generated(n);
#if defined(_OPENMP)
#pragma omp parallel for schedule(dynamic, 1)
#endif
  for (int i = 0; i < n; ++i) {
    const MelodyGrid& melody_b = eval_samples[partner[i]].melody;
    generated[i] = {melody_b, swap_harmonize(model, eval_samples[i], melody_b)};
  }

  std::vector<std::pair<MelodyGrid, ChordGrid>> truth;
  truth.reserve(n);
  for (const Sample& s : eval_samples) truth.emplace_back(s.melody, s.chord);

  ControllabilityResult res;
  res.generated = harmony_histogram(generated);
  res.ground_truth = harmony_histogram(truth);
  return res;
}

// ---- reports ----

namespace {
void print_double(std::ostream& out, double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", x);
  out << buf;
}
}  // namespace

void write_similarity_report(std::ostream& out, const SimilarityProfile& profile) {
  for (int i = 0; i < 12; ++i) {
    out << "i=" << (i + 1) << " cos=";
    print_double(out, profile.values[i]);
    out << "\n";
  }
}

void write_similarity_csv(std::ostream& out, const SimilarityProfile& profile) {
  out << "semitones,cosine\n";
  for (int i = 0; i < 12; ++i) {
    out << (i + 1) << ",";
    print_double(out, profile.values[i]);
    out << "\n";
  }
}

void write_histogram_report(std::ostream& out, const HarmonyHistogram& hist) {
  const auto& names = HarmonyHistogram::bucket_names();
  for (int b = 0; b < 5; ++b) {
    out << names[b] << "=";
    print_double(out, hist.fractions[b]);
    out << "\n";
  }
  out << "counted_notes=" << hist.counted_notes << "\n";
}

void write_histogram_csv(std::ostream& out, const HarmonyHistogram& hist) {
  out << "bucket,fraction\n";
  const auto& names = HarmonyHistogram::bucket_names();
  for (int b = 0; b < 5; ++b) {
    out << names[b] << ",";
    print_double(out, hist.fractions[b]);
    out << "\n";
  }
}

void write_compare_table(std::ostream& out, const std::vector<NamedProfile>& entries,
                         const HarmonyHistogram& ground_truth) {
  out << "metric";
  for (const NamedProfile& e : entries) out << "\t" << e.name;
  out << "\tground_truth\n";
  for (int i = 0; i < 12; ++i) {
    out << "similarity_T" << (i + 1);
    for (const NamedProfile& e : entries) {
      out << "\t";
      print_double(out, e.similarity.values[i]);
    }
    out << "\t-\n";
  }
  const auto& names = HarmonyHistogram::bucket_names();
  for (int b = 0; b < 5; ++b) {
    out << "histogram_" << names[b];
    for (const NamedProfile& e : entries) {
      out << "\t";
      print_double(out, e.histogram.fractions[b]);
    }
    out << "\t";
    print_double(out, ground_truth.fractions[b]);
    out << "\n";
  }
}

}  // namespace harmonia
