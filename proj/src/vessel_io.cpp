#include "svfd/vessel_io.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "svfd/error.hpp"

namespace svfd {

namespace {

using json = nlohmann::json;

Vec3 vec(const json& j, const std::string& where) {
    if (!j.is_array() || j.size() != 3) throw_validation(where + " must be a 3-vector");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

}  // namespace

VesselDocument parse_vessel_document(const std::string& text) {
    VesselDocument doc;
    try {
        const json j = json::parse(text);
        const auto& ps = j.at("portions");
        for (std::size_t i = 0; i < ps.size(); ++i) {
            const auto& p = ps[i];
            const std::string where = "portions[" + std::to_string(i) + "]";
            VesselPortion portion;
            portion.name = p.at("name").get<std::string>();
            portion.parent = p.value("parent", std::string());
            for (const auto& c : p.at("control_points")) portion.control_points.push_back(vec(c, where + ".control_points"));
            portion.radii = p.at("radii").get<std::vector<double>>();
            if (p.contains("reference")) portion.reference = vec(p.at("reference"), where + ".reference");
            doc.model.portions.push_back(std::move(portion));
        }
        if (j.contains("anchors")) {
            Anchors a;
            a.inlet_center = vec(j.at("anchors").at("inlet_center"), "anchors.inlet_center");
            a.outlet_normal = vec(j.at("anchors").at("outlet_normal"), "anchors.outlet_normal");
            doc.anchors = a;
        }
    } catch (const json::exception& e) {
        throw_validation(std::string("malformed vessel model: ") + e.what());
    }
    doc.model.validate();
    return doc;
}

std::string vessel_document_to_json(const VesselDocument& doc) {
    json ps = json::array();
    for (const auto& p : doc.model.portions) {
        json cps = json::array();
        for (const auto& c : p.control_points) cps.push_back(to_json(c));
        ps.push_back({{"name", p.name},
                      {"parent", p.parent},
                      {"control_points", cps},
                      {"radii", p.radii},
                      {"reference", to_json(p.reference)}});
    }
    json j = {{"portions", ps}};
    if (doc.anchors) {
        j["anchors"] = {{"inlet_center", to_json(doc.anchors->inlet_center)},
                        {"outlet_normal", to_json(doc.anchors->outlet_normal)}};
    }
    return j.dump(2);
}

VesselDocument load_vessel_document(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw_io("cannot open vessel model '" + path + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_vessel_document(ss.str());
}

void save_vessel_document(const VesselDocument& doc, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw_io("cannot open '" + path + "' for writing");
    f << vessel_document_to_json(doc) << '\n';
    if (!f) throw_io("failed writing '" + path + "'");
}

}  // namespace svfd
