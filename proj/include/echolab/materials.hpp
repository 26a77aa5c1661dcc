#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

#include "echolab/rng.hpp"

namespace echolab::acoustics {

// Single-band scalar absorption per material. The coefficients are fixed
// constants of this simulator, not measured data.
struct Material {
  std::string_view id;
  double alpha;  // energy absorption, in [0, 1)
};

inline constexpr std::array<Material, 5> kSidewallMaterials{{
    {"hard_surface", 0.02},
    {"rough_concrete", 0.04},
    {"rough_lime_wash", 0.06},
    {"glass_window", 0.10},
    {"plasterboard", 0.12},
}};

inline constexpr std::array<Material, 3> kCeilingMaterials{{
    {"gypsum_board", 0.10},
    {"metal_panel", 0.15},
    {"plasterboard_ceiling", 0.12},
}};

inline constexpr std::array<Material, 3> kFloorMaterials{{
    {"linoleum_on_concrete", 0.03},
    {"carpet", 0.30},
    {"wooden_floor", 0.09},
}};

// All sidewalls share one material; floor and ceiling get their own.
struct MaterialAssignment {
  Material floor = kFloorMaterials[0];
  Material ceiling = kCeilingMaterials[0];
  Material sidewall = kSidewallMaterials[0];

  bool operator==(const MaterialAssignment& o) const {
    return floor.id == o.floor.id && ceiling.id == o.ceiling.id && sidewall.id == o.sidewall.id;
  }
};

inline MaterialAssignment assign_materials(Rng& rng) {
  MaterialAssignment m;
  m.floor = kFloorMaterials[static_cast<std::size_t>(rng.uniform_int(0, kFloorMaterials.size() - 1))];
  m.ceiling = kCeilingMaterials[static_cast<std::size_t>(rng.uniform_int(0, kCeilingMaterials.size() - 1))];
  m.sidewall = kSidewallMaterials[static_cast<std::size_t>(rng.uniform_int(0, kSidewallMaterials.size() - 1))];
  return m;
}

const Material* find_material(std::string_view id);

}  // namespace echolab::acoustics
