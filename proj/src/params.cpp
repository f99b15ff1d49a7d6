#include "harmonia/params.hpp"

namespace harmonia {

int ParamStore::add(const std::string& name, ParamGroup group, int rows, int cols) {
  if (by_name_.count(name)) throw validation_error("duplicate parameter name " + name);
  const int id = int(entries_.size());
  entries_.push_back({name, group, Tensor(rows, cols)});
  by_name_[name] = id;
  return id;
}

int ParamStore::find(const std::string& name) const {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? -1 : it->second;
}

std::vector<int> ParamStore::group_ids(ParamGroup g) const {
  std::vector<int> ids;
  for (int i = 0; i < count(); ++i)
    if (entries_[i].group == g) ids.push_back(i);
  return ids;
}

std::vector<int> ParamStore::ids_in(std::uint32_t group_mask) const {
  std::vector<int> ids;
  for (int i = 0; i < count(); ++i)
    if (group_mask & group_bit(entries_[i].group)) ids.push_back(i);
  return ids;
}

long ParamStore::scalar_count(std::uint32_t group_mask) const {
  long n = 0;
  for (const Entry& e : entries_)
    if (group_mask & group_bit(e.group)) n += long(e.value.size());
  return n;
}

std::uint64_t ParamStore::group_hash(ParamGroup g) const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const Entry& e : entries_) {
    if (e.group != g) continue;
    h = fnv1a64(e.value.data(), e.value.size() * sizeof(double), h);
  }
  return h;
}

void grad_accumulate(GradVec& into, const GradVec& from) {
  if (into.size() < from.size()) into.resize(from.size());
  for (std::size_t i = 0; i < from.size(); ++i) {
    if (from[i].empty()) continue;
    if (into[i].empty())
      into[i] = from[i];
    else
      axpy(1.0, from[i], into[i]);
  }
}

}  // namespace harmonia
