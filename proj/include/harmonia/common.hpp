#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace harmonia {

// Error kinds mirror the failure modes the library documents per operation.
struct error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad input data (range, shape, monophony, split size, schedule bounds, ...).
struct validation_error : error {
  using error::error;
};

// Malformed interchange text; carries the 1-based line number.
struct parse_error : error {
  int line;
  parse_error(const std::string& msg, int line_no)
      : error(msg + " (line " + std::to_string(line_no) + ")"), line(line_no) {}
};

// Inconsistent run configuration (missing mask_rate, bad variant, ...).
struct config_error : error {
  using error::error;
};

// A forward/step called outside its contract (shape mismatch, wrong variant).
struct contract_error : error {
  using error::error;
};

// File I/O and format failures (magic, version, counts, checksum).
struct io_error : error {
  using error::error;
};

// Deterministic RNG. The raw stream is std::mt19937_64 (fully specified by
// the standard); the distributions are hand-rolled so draws do not depend on
// the standard library's implementation-defined distribution algorithms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next() { return eng_(); }

  // [0, 1)
  double uniform() { return double(next() >> 11) * 0x1.0p-53; }

  // (0, 1]
  double uniform_pos() { return double((next() >> 11) + 1) * 0x1.0p-53; }

  // {0, ..., n-1}; modulo bias is below 2^-52 for the n used here
  int uniform_int(int n) { return int(next() % std::uint64_t(n)); }

  // standard normal via Box-Muller (two fresh draws per call)
  double normal();

  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 eng_;
};

// splitmix64-style combiner for deriving per-(purpose, step, sample) seeds
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c);
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c,
                       std::uint64_t d);

// FNV-1a over raw bytes; used for corpus checksums and parameter-group hashes
std::uint64_t fnv1a64(const void* data, std::size_t n,
                      std::uint64_t h = 0xcbf29ce484222325ull);

}  // namespace harmonia
