#pragma once

#include <string>

#include "harmonia/model.hpp"
#include "harmonia/training.hpp"

namespace harmonia {

// Merged run settings for the CLI: model + schedule + corruption + paths.
// Every field defaults to the full-scale value where one exists; the flat
// key=value config file and command-line flags override in that order.
struct RunConfig {
  ModelConfig model;
  TrainSchedule sched;
  Variant variant = Variant::Dat;
  double mask_rate = 0.15;  // mask-cr corruption rate
  std::uint64_t seed = 0;

  std::string corpus_path;
  std::string out_dir = "out";
  std::string checkpoint;

  // prepare
  std::string in_dir;
  bool synthetic = false;
  int synth_songs = 200;
  int synth_bars = 16;
  double val_fraction = 0.05;

  // eval
  std::uint64_t pairs_seed = 1;

  CorruptionSpec corruption() const;
  void apply(const std::string& key, const std::string& value);
};

// '#'-commented key=value lines
RunConfig load_run_config(const std::string& path, RunConfig base = {});

// the resolved configuration as key=value text (the --dry-run output)
std::string dump_run_config(const RunConfig& cfg);

}  // namespace harmonia
