#include "setmpc/bundle.hpp"

#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

namespace setmpc {

using nlohmann::json;

namespace {

json mat_to_json(const Mat& m) {
    std::vector<std::vector<double>> rows(m.rows(), std::vector<double>(m.cols()));
    for (int i = 0; i < m.rows(); ++i) {
        for (int j = 0; j < m.cols(); ++j) rows[i][j] = m(i, j);
    }
    return rows;
}

Mat mat_from_json(const json& j) {
    auto rows = j.get<std::vector<std::vector<double>>>();
    const int r = static_cast<int>(rows.size());
    const int c = r > 0 ? static_cast<int>(rows[0].size()) : 0;
    Mat m(r, c);
    for (int i = 0; i < r; ++i) {
        for (int k = 0; k < c; ++k) m(i, k) = rows.at(i).at(k);
    }
    return m;
}

json vec_to_json(const Vec& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

Vec vec_from_json(const json& j) {
    auto a = j.get<std::vector<double>>();
    return Eigen::Map<Vec>(a.data(), static_cast<Eigen::Index>(a.size()));
}

}  // namespace

std::string bundle_to_json(const FullPath& fp, const std::string& scenario_hash) {
    json j;
    j["schema"] = "setmpc-bundle-1";
    j["scenario_hash"] = scenario_hash;
    json fams = json::array();
    for (const auto& f : fp.families) {
        json rings = json::array();
        for (size_t i = 0; i < f.rings.size(); ++i) {
            rings.push_back({{"shape", mat_to_json(f.rings[i].shape())},
                             {"gain", mat_to_json(f.gains[i])},
                             {"target", mat_to_json(f.targets[i])}});
        }
        json model = {{"g", mat_to_json(f.model.g)},
                      {"gd", mat_to_json(f.model.gd)},
                      {"ts", f.model.ts},
                      {"phi", json::array()}};
        for (const auto& p : f.model.phi) model["phi"].push_back(mat_to_json(p));
        fams.push_back({{"index", f.index},
                        {"x_eq", vec_to_json(f.x_eq)},
                        {"u_eq", vec_to_json(f.u_eq)},
                        {"rings", rings},
                        {"d_level", f.d_level},
                        {"envelope",
                         {{"g1", f.envelope.g1},
                          {"g2", f.envelope.g2},
                          {"x2_row", f.envelope.x2_row},
                          {"x1_row", f.envelope.x1_row}}},
                        {"model", model},
                        {"segment", f.segment},
                        {"rho_scalar", f.rho_scalar},
                        {"rows", [&] {
                             json rows = json::array();
                             for (const auto& h : f.rows) {
                                 rows.push_back({{"a", vec_to_json(h.normal)}, {"b", h.offset}});
                             }
                             return rows;
                         }()}});
    }
    j["families"] = fams;
    json wps = json::array();
    for (const auto& w : fp.waypoints) {
        json sides = json::object();
        for (const auto& [id, side] : w.sides) sides[id] = pass_side_to_string(side);
        wps.push_back({{"state", vec_to_json(w.state)}, {"sides", sides}});
    }
    j["waypoints"] = wps;
    json obs = json::array();
    for (const auto& b : fp.obstacles) {
        obs.push_back({{"id", b.id},
                       {"y_center", b.y_center},
                       {"frame_offset", b.frame_offset},
                       {"l_ego", b.l_ego},
                       {"l_lead", b.l_lead},
                       {"eps_x", b.eps_x},
                       {"w_ego", b.w_ego},
                       {"w_lead", b.w_lead},
                       {"eps_y", b.eps_y},
                       {"behind_margin", b.behind_margin}});
    }
    j["obstacles"] = obs;
    j["input_box"] = {{"lower", vec_to_json(fp.input_box.lower)},
                      {"upper", vec_to_json(fp.input_box.upper)}};
    return j.dump(1);
}

FullPath bundle_from_json(const std::string& text, std::string* scenario_hash) {
    json j = json::parse(text);
    if (j.at("schema").get<std::string>() != "setmpc-bundle-1") {
        throw ConfigError("bundle: unsupported schema");
    }
    if (scenario_hash) *scenario_hash = j.at("scenario_hash").get<std::string>();
    FullPath fp;
    for (const auto& f : j.at("families")) {
        SegmentFamily fam;
        fam.index = f.at("index").get<int>();
        fam.x_eq = vec_from_json(f.at("x_eq"));
        fam.u_eq = vec_from_json(f.at("u_eq"));
        fam.d_level = f.at("d_level").get<double>();
        fam.envelope.g1 = f.at("envelope").at("g1").get<double>();
        fam.envelope.g2 = f.at("envelope").at("g2").get<double>();
        fam.envelope.x2_row = f.at("envelope").at("x2_row").get<double>();
        fam.envelope.x1_row = f.at("envelope").at("x1_row").get<double>();
        fam.model.g = mat_from_json(f.at("model").at("g"));
        fam.model.gd = mat_from_json(f.at("model").at("gd"));
        fam.model.ts = f.at("model").at("ts").get<double>();
        for (const auto& p : f.at("model").at("phi")) fam.model.phi.push_back(mat_from_json(p));
        fam.segment = f.at("segment").get<int>();
        fam.rho_scalar = f.at("rho_scalar").get<double>();
        for (const auto& r : f.at("rows")) {
            fam.rows.emplace_back(vec_from_json(r.at("a")), r.at("b").get<double>());
        }
        for (const auto& r : f.at("rings")) {
            fam.rings.emplace_back(fam.x_eq, mat_from_json(r.at("shape")));
            fam.gains.push_back(mat_from_json(r.at("gain")));
            fam.targets.push_back(mat_from_json(r.at("target")));
        }
        fp.families.push_back(std::move(fam));
    }
    for (const auto& e : j.at("waypoints")) {
        Waypoint w;
        w.state = vec_from_json(e.at("state"));
        for (auto it = e.at("sides").begin(); it != e.at("sides").end(); ++it) {
            w.sides[it.key()] = pass_side_from_string(it.value().get<std::string>());
        }
        fp.waypoints.push_back(w);
    }
    fp.input_box = BoxSet(vec_from_json(j.at("input_box").at("lower")),
                          vec_from_json(j.at("input_box").at("upper")));
    for (const auto& o : j.at("obstacles")) {
        ObstacleBox b;
        b.id = o.at("id").get<std::string>();
        b.y_center = o.at("y_center").get<double>();
        b.frame_offset = o.at("frame_offset").get<double>();
        b.l_ego = o.at("l_ego").get<double>();
        b.l_lead = o.at("l_lead").get<double>();
        b.eps_x = o.at("eps_x").get<double>();
        b.w_ego = o.at("w_ego").get<double>();
        b.w_lead = o.at("w_lead").get<double>();
        b.eps_y = o.at("eps_y").get<double>();
        b.behind_margin = o.at("behind_margin").get<double>();
        fp.obstacles.push_back(b);
    }
    return fp;
}

void save_bundle(const FullPath& fp, const std::string& scenario_hash, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write bundle file: " + path);
    out << bundle_to_json(fp, scenario_hash);
}

FullPath load_bundle(const std::string& path, std::string* scenario_hash) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open bundle file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return bundle_from_json(ss.str(), scenario_hash);
}

}  // namespace setmpc
