#include "echolab/materials.hpp"

namespace echolab::acoustics {

const Material* find_material(std::string_view id) {
  for (const auto& m : kSidewallMaterials)
    if (m.id == id) return &m;
  for (const auto& m : kCeilingMaterials)
    if (m.id == id) return &m;
  for (const auto& m : kFloorMaterials)
    if (m.id == id) return &m;
  return nullptr;
}

}  // namespace echolab::acoustics
