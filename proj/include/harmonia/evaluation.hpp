#pragma once

#include <array>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "harmonia/corpus.hpp"
#include "harmonia/model.hpp"

namespace harmonia {

double cosine(const Tensor& a, const Tensor& b);

// values[i-1] = mean cos(z_x, z_{T_i(x)}) for i = 1..12, computed from
// posterior means; index 11 (T_12) is the identity and equals 1.
struct SimilarityProfile {
  std::array<double, 12> values{};
};

// Eval samples must be unaugmented (tag 0); chord and melody are transposed
// jointly so every probe pair stays harmonically valid.
SimilarityProfile transposition_similarity(const Model& model,
                                           const std::vector<Sample>& eval_samples);

// Distribution of melody onsets over the chord degree sounding underneath.
struct HarmonyHistogram {
  std::array<double, 5> fractions{};  // root, third, fifth, seventh, others
  long counted_notes = 0;

  static const std::array<const char*, 5>& bucket_names();
};

HarmonyHistogram harmony_histogram(
    const std::vector<std::pair<MelodyGrid, ChordGrid>>& pairs);

// z = posterior mean of (chord_A, melody_A); greedy decode under melody_B.
ChordGrid swap_harmonize(const Model& model, const Sample& source_a,
                         const MelodyGrid& melody_b);

struct ControllabilityResult {
  HarmonyHistogram generated;
  HarmonyHistogram ground_truth;
};

// Pairs eval samples by a seeded permutation, harmonizes every melody with
// its partner's style, and histograms the results next to the unswapped
// ground truth.
ControllabilityResult evaluate_controllability(const Model& model,
                                               const std::vector<Sample>& eval_samples,
                                               std::uint64_t seed);

// ---- report emission (one metric per file, plus plot CSVs) ----

void write_similarity_report(std::ostream& out, const SimilarityProfile& profile);
void write_similarity_csv(std::ostream& out, const SimilarityProfile& profile);
void write_histogram_report(std::ostream& out, const HarmonyHistogram& hist);
void write_histogram_csv(std::ostream& out, const HarmonyHistogram& hist);

struct NamedProfile {
  std::string name;
  SimilarityProfile similarity;
  HarmonyHistogram histogram;
};
// side-by-side table over several checkpoints
void write_compare_table(std::ostream& out, const std::vector<NamedProfile>& entries,
                         const HarmonyHistogram& ground_truth);

}  // namespace harmonia
