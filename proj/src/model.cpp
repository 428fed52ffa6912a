#include "crisloc/model.hpp"

#include <algorithm>
#include <stdexcept>

namespace crisloc {

int SubcarrierMask::active_count() const {
  return static_cast<int>(std::count(keep.begin(), keep.end(), true));
}

std::vector<int> SubcarrierMask::active_indices() const {
  std::vector<int> idx;
  idx.reserve(keep.size());
  for (std::size_t s = 0; s < keep.size(); ++s)
    if (keep[s]) idx.push_back(static_cast<int>(s));
  return idx;
}

int RadioMap::ap_index(const ApId& id) const {
  for (std::size_t i = 0; i < ap_ids.size(); ++i)
    if (ap_ids[i] == id) return static_cast<int>(i);
  return -1;
}

AmplitudeVector RadioMap::mean_amplitude(int point_index, int ap) const {
  const auto& samples = points.at(point_index).samples.at(ap);
  const int dim = mask.active_count();
  AmplitudeVector out(std::vector<double>(dim, 0.0));
  if (samples.empty()) return out;
  for (const auto& s : samples)
    for (int d = 0; d < dim; ++d) out.values[d] += s.values[d];
  const double inv = 1.0 / static_cast<double>(samples.size());
  for (int d = 0; d < dim; ++d) out.values[d] *= inv;
  return out;
}

void validate(const RadioMap& map) {
  if (map.mask.active_count() < kMinActiveSubcarriers)
    throw std::invalid_argument("radio map mask keeps fewer than 8 subcarriers");
  const std::size_t dim = static_cast<std::size_t>(map.mask.active_count());
  for (std::size_t p = 0; p < map.points.size(); ++p) {
    const auto& point = map.points[p];
    if (point.samples.size() != map.ap_ids.size())
      throw std::invalid_argument("radio map point " + std::to_string(p) +
                                  " does not cover every AP");
    for (const auto& per_ap : point.samples)
      for (const auto& s : per_ap) {
        if (s.values.size() != dim)
          throw std::invalid_argument("amplitude vector does not conform to mask length");
        for (double v : s.values)
          if (!std::isfinite(v) || v < 0.0)
            throw std::invalid_argument("amplitude vector entries must be finite and >= 0");
      }
    for (std::size_t q = p + 1; q < map.points.size(); ++q)
      if (point.pos == map.points[q].pos)
        throw std::invalid_argument("radio map positions must be pairwise distinct");
  }
}

Fingerprint concat_fingerprint(const RadioMap& map, int point_index,
                               const std::set<ApId>& ap_subset) {
  if (point_index < 0 || point_index >= static_cast<int>(map.points.size()))
    throw std::invalid_argument("point index out of range");
  for (const auto& id : ap_subset)
    if (map.ap_index(id) < 0)
      throw std::invalid_argument("unknown AP id: " + id);

  Fingerprint fp;
  const int dim = map.mask.active_count();
  fp.values.reserve(ap_subset.size() * static_cast<std::size_t>(dim));
  // Concatenation runs in ap_ids order, not subset iteration order.
  for (std::size_t a = 0; a < map.ap_ids.size(); ++a) {
    if (ap_subset.count(map.ap_ids[a]) == 0) continue;
    const AmplitudeVector mean = map.mean_amplitude(point_index, static_cast<int>(a));
    fp.values.insert(fp.values.end(), mean.values.begin(), mean.values.end());
  }
  return fp;
}

}  // namespace crisloc
