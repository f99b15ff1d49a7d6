#include "harmonia/runconfig.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace harmonia {

CorruptionSpec RunConfig::corruption() const {
  CorruptionSpec spec;
  spec.rng_seed = seed;
  switch (variant) {
    case Variant::Dat:
      spec.method = CorruptionSpec::Method::Transpose;
      break;
    case Variant::MaskCr:
      spec.method = CorruptionSpec::Method::Mask;
      spec.mask_rate = mask_rate;
      break;
    case Variant::NonCr:
    case Variant::NonDat:
      spec.method = CorruptionSpec::Method::None;
      break;
  }
  return spec;
}

namespace {

int to_int(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const int x = std::stoi(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return x;
  } catch (const std::exception&) {
    throw config_error("bad integer for " + key + ": '" + value + "'");
  }
}

double to_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double x = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return x;
  } catch (const std::exception&) {
    throw config_error("bad number for " + key + ": '" + value + "'");
  }
}

std::uint64_t to_u64(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const unsigned long long x = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return x;
  } catch (const std::exception&) {
    throw config_error("bad seed for " + key + ": '" + value + "'");
  }
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw config_error("bad bool for " + key + ": '" + value + "'");
}

}  // namespace

void RunConfig::apply(const std::string& key, const std::string& value) {
  // model
  if (key == "d_emb") model.d_emb = to_int(key, value);
  else if (key == "d_z") model.d_z = to_int(key, value);
  else if (key == "d_p_enc") model.d_p_enc = to_int(key, value);
  else if (key == "d_t_enc") model.d_t_enc = to_int(key, value);
  else if (key == "d_t_dec") model.d_t_dec = to_int(key, value);
  else if (key == "d_p_dec") model.d_p_dec = to_int(key, value);
  else if (key == "disc_layers") model.disc_layers = to_int(key, value);
  else if (key == "disc_heads") model.disc_heads = to_int(key, value);
  else if (key == "d_model") model.d_model = to_int(key, value);
  else if (key == "d_ff") model.d_ff = to_int(key, value);
  else if (key == "dropout") model.dropout = to_double(key, value);
  else if (key == "alpha") model.alpha = to_double(key, value);
  else if (key == "rel_clip") model.rel_clip = to_int(key, value);
  else if (key == "gru_disc_hidden") model.gru_disc_hidden = to_int(key, value);
  else if (key == "gru_disc_layers") model.gru_disc_layers = to_int(key, value);
  // schedule
  else if (key == "i" || key == "vae_steps") sched.vae_steps = to_int(key, value);
  else if (key == "j" || key == "adv_blocks") sched.adv_blocks = to_int(key, value);
  else if (key == "k" || key == "disc_steps") sched.disc_steps = to_int(key, value);
  else if (key == "l" || key == "enc_steps") sched.enc_steps = to_int(key, value);
  else if (key == "batch_size") sched.batch_size = to_int(key, value);
  else if (key == "epochs") sched.epochs = to_int(key, value);
  else if (key == "lr_start") sched.lr_start = to_double(key, value);
  else if (key == "lr_end") sched.lr_end = to_double(key, value);
  else if (key == "tf_start") sched.tf_start = to_double(key, value);
  else if (key == "tf_end") sched.tf_end = to_double(key, value);
  else if (key == "clip_norm") sched.clip_norm = to_double(key, value);
  else if (key == "adv_fresh_batches") sched.adv_fresh_batches = to_bool(key, value);
  else if (key == "epoch_unit") {
    if (value == "augmented") sched.epoch_unit = TrainSchedule::EpochUnit::Augmented;
    else if (value == "raw") sched.epoch_unit = TrainSchedule::EpochUnit::Raw;
    else throw config_error("epoch_unit must be augmented|raw");
  }
  else if (key == "audit_group_hashes") sched.audit_group_hashes = to_bool(key, value);
  // run
  else if (key == "variant") variant = variant_from_string(value);
  else if (key == "mask_rate") mask_rate = to_double(key, value);
  else if (key == "seed") seed = to_u64(key, value);
  else if (key == "corpus") corpus_path = value;
  else if (key == "out") out_dir = value;
  else if (key == "checkpoint") checkpoint = value;
  else if (key == "in") in_dir = value;
  else if (key == "synthetic") synthetic = to_bool(key, value);
  else if (key == "synth_songs") synth_songs = to_int(key, value);
  else if (key == "synth_bars") synth_bars = to_int(key, value);
  else if (key == "val_fraction") val_fraction = to_double(key, value);
  else if (key == "pairs_seed") pairs_seed = to_u64(key, value);
  else throw config_error("unknown config key '" + key + "'");
}

RunConfig load_run_config(const std::string& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open config file " + path);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    // trim
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const auto e = line.find_last_not_of(" \t\r");
    line = line.substr(b, e - b + 1);
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw config_error("config line " + std::to_string(line_no) +
                         " is not key=value: '" + line + "'");
    auto strip = [](std::string s) {
      const auto b2 = s.find_first_not_of(" \t");
      if (b2 == std::string::npos) return std::string();
      const auto e2 = s.find_last_not_of(" \t");
      return s.substr(b2, e2 - b2 + 1);
    };
    base.apply(strip(line.substr(0, eq)), strip(line.substr(eq + 1)));
  }
  return base;
}

std::string dump_run_config(const RunConfig& cfg) {
  std::ostringstream out;
  auto num = [](double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", x);
    return std::string(buf);
  };
  out << "variant=" << variant_string(cfg.variant) << "\n";
  out << "seed=" << cfg.seed << "\n";
  out << "d_emb=" << cfg.model.d_emb << "\n";
  out << "d_z=" << cfg.model.d_z << "\n";
  out << "d_p_enc=" << cfg.model.d_p_enc << "\n";
  out << "d_t_enc=" << cfg.model.d_t_enc << "\n";
  out << "d_t_dec=" << cfg.model.d_t_dec << "\n";
  out << "d_p_dec=" << cfg.model.d_p_dec << "\n";
  out << "disc_layers=" << cfg.model.disc_layers << "\n";
  out << "disc_heads=" << cfg.model.disc_heads << "\n";
  out << "d_model=" << cfg.model.d_model << "\n";
  out << "d_ff=" << cfg.model.d_ff << "\n";
  out << "dropout=" << num(cfg.model.dropout) << "\n";
  out << "alpha=" << num(cfg.model.alpha) << "\n";
  out << "rel_clip=" << cfg.model.rel_clip << "\n";
  out << "i=" << cfg.sched.vae_steps << "\n";
  out << "j=" << cfg.sched.adv_blocks << "\n";
  out << "k=" << cfg.sched.disc_steps << "\n";
  out << "l=" << cfg.sched.enc_steps << "\n";
  out << "batch_size=" << cfg.sched.batch_size << "\n";
  out << "epochs=" << cfg.sched.epochs << "\n";
  out << "lr_start=" << num(cfg.sched.lr_start) << "\n";
  out << "lr_end=" << num(cfg.sched.lr_end) << "\n";
  out << "tf_start=" << num(cfg.sched.tf_start) << "\n";
  out << "tf_end=" << num(cfg.sched.tf_end) << "\n";
  out << "clip_norm=" << num(cfg.sched.clip_norm) << "\n";
  out << "adv_fresh_batches=" << (cfg.sched.adv_fresh_batches ? "true" : "false") << "\n";
  out << "epoch_unit="
      << (cfg.sched.epoch_unit == TrainSchedule::EpochUnit::Augmented ? "augmented"
                                                                      : "raw")
      << "\n";
  out << "mask_rate=" << num(cfg.mask_rate) << "\n";
  return out.str();
}

}  // namespace harmonia
