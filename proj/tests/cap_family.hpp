#pragma once
// Domains with at most 12 primal edges used by the exhaustive checks.

#include <stdexcept>
#include <string>
#include <vector>

#include "fkloops/lattice_domain.hpp"

struct CapShape {
  std::string name;
  fkl::Domain domain;
};

inline std::vector<CapShape> cap_shapes() {
  using fkl::rect_black;
  std::vector<CapShape> s;
  for (auto [w, h] : {std::pair{2, 2}, {2, 3}, {3, 2}, {2, 4}, {4, 2}, {3, 3}})
    s.push_back({"rect" + std::to_string(w) + "x" + std::to_string(h), fkl::build_rect_domain(w, h)});
  // 3x3 with one corner square removed, and a trimmed box
  std::vector<fkl::LatticeCoord> l8;
  for (int j = 0; j < 3; ++j)
    for (int i = 0; i < 3; ++i)
      if (i < 2 || j < 2) l8.push_back(rect_black(i, j));
  s.push_back({"notch3x3", fkl::Domain(l8)});
  s.push_back({"box5x4", fkl::build_box_domain(5, 4)});
  for (auto& x : s)
    if (x.domain.has_pinch()) throw std::logic_error("cap family: " + x.name + " is pinched");
  return s;
}
