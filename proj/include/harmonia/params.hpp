#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "harmonia/common.hpp"
#include "harmonia/tensor.hpp"

namespace harmonia {

// The three disjoint parameter groups of the alternating objective. The
// shared pitch embedding lives in Enc and is frozen during discriminator
// steps.
enum class ParamGroup : int { Enc = 0, Dec = 1, Dis = 2 };

inline constexpr std::uint32_t group_bit(ParamGroup g) { return 1u << int(g); }
inline constexpr std::uint32_t kAllGroups = 0x7;

class ParamStore {
 public:
  struct Entry {
    std::string name;
    ParamGroup group;
    Tensor value;
  };

  int add(const std::string& name, ParamGroup group, int rows, int cols);

  int count() const { return int(entries_.size()); }
  Entry& entry(int id) { return entries_[id]; }
  const Entry& entry(int id) const { return entries_[id]; }
  Tensor& value(int id) { return entries_[id].value; }
  const Tensor& value(int id) const { return entries_[id].value; }

  int find(const std::string& name) const;  // -1 when absent

  std::vector<int> group_ids(ParamGroup g) const;
  std::vector<int> ids_in(std::uint32_t group_mask) const;

  long scalar_count(std::uint32_t group_mask) const;

  // FNV-1a over the group's raw tensor bytes, in registration order
  std::uint64_t group_hash(ParamGroup g) const;

 private:
  std::vector<Entry> entries_;
  std::map<std::string, int> by_name_;
};

// Flat per-parameter gradient buffers, indexed by parameter id. Entries
// stay empty until a tape touches them.
using GradVec = std::vector<Tensor>;

void grad_accumulate(GradVec& into, const GradVec& from);

}  // namespace harmonia
