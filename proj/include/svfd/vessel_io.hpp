#pragma once

#include <optional>
#include <string>

#include "svfd/geometry.hpp"
#include "svfd/rigid.hpp"

namespace svfd {

/// JSON document:
/// {"portions": [{"name", "parent", "control_points": [[x,y,z],...],
///                "radii": [...], "reference": [x,y,z]}, ...],
///  "anchors": {"inlet_center": [...], "outlet_normal": [...]}}   (optional)
struct VesselDocument {
    VesselModel model;
    std::optional<Anchors> anchors;
};

VesselDocument parse_vessel_document(const std::string& text);
std::string vessel_document_to_json(const VesselDocument& doc);
VesselDocument load_vessel_document(const std::string& path);
void save_vessel_document(const VesselDocument& doc, const std::string& path);

}  // namespace svfd
