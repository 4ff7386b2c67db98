#include "crimelens/spatial.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numbers>
#include <sstream>

#include <boost/geometry.hpp>
#include <boost/geometry/geometries/linestring.hpp>
#include <boost/geometry/geometries/multi_polygon.hpp>
#include <boost/geometry/geometries/point_xy.hpp>
#include <boost/geometry/geometries/polygon.hpp>
#include <boost/geometry/index/rtree.hpp>

#include <json.hpp>

namespace crimelens {

namespace bg = boost::geometry;
namespace bgi = boost::geometry::index;

namespace {

using BPoint = bg::model::d2::point_xy<double>;
using BPolygon = bg::model::polygon<BPoint>;  // clockwise, closed
using BMulti = bg::model::multi_polygon<BPolygon>;
using BLine = bg::model::linestring<BPoint>;
using BBox = bg::model::box<BPoint>;
using TreeValue = std::pair<BBox, std::size_t>;

constexpr double kEarthRadius = 6371008.8;
constexpr double kDegToRad = std::numbers::pi / 180.0;

Ring open_ring(const Ring& ring) {
    Ring out = ring;
    if (out.size() > 1 && out.front() == out.back()) out.pop_back();
    return out;
}

}  // namespace

LocalProjection::LocalProjection(GeoPoint origin)
    : origin_(origin), cos_lat_(std::cos(origin.lat * kDegToRad)) {}

PlanePoint LocalProjection::to_plane(GeoPoint p) const {
    return {kEarthRadius * (p.lon - origin_.lon) * kDegToRad * cos_lat_,
            kEarthRadius * (p.lat - origin_.lat) * kDegToRad};
}

GeoPoint LocalProjection::to_geo(PlanePoint p) const {
    return {origin_.lon + p.x / (kEarthRadius * kDegToRad * cos_lat_),
            origin_.lat + p.y / (kEarthRadius * kDegToRad)};
}

struct SiteGeometrySet::Index {
    std::vector<BMulti> shapes;  // projected, parallel to ids_
    bgi::rtree<TreeValue, bgi::quadratic<16>> tree;
};

namespace {

std::vector<BPoint> project_ring(const Ring& ring, const LocalProjection& proj) {
    std::vector<BPoint> pts;
    for (const auto& g : open_ring(ring)) {
        auto p = proj.to_plane(g);
        pts.emplace_back(p.x, p.y);
    }
    if (!pts.empty()) pts.push_back(pts.front());
    return pts;
}

BPolygon project_part(const PolygonPart& part, const LocalProjection& proj) {
    BPolygon poly;
    for (const auto& p : project_ring(part.outer, proj)) bg::append(poly.outer(), p);
    for (const auto& hole : part.holes) {
        poly.inners().emplace_back();
        for (const auto& p : project_ring(hole, proj)) bg::append(poly.inners().back(), p);
    }
    bg::correct(poly);
    return poly;
}

BPolygon project_simple_ring(const Ring& ring, const LocalProjection& proj) {
    return project_part(PolygonPart{ring, {}}, proj);
}

bool ring_is_simple(const BPolygon& poly) {
    std::string reason;
    return bg::is_valid(poly, reason);
}

}  // namespace

SiteGeometrySet::SiteGeometrySet(std::map<std::string, SiteShape> sites)
    : shapes_(std::move(sites)), index_(std::make_unique<Index>()) {
    if (shapes_.empty()) throw InputError("geometry set is empty");

    double lon_sum = 0.0, lat_sum = 0.0;
    std::size_t count = 0;
    for (const auto& [id, shape] : shapes_) {
        if (shape.parts.empty()) throw InputError("site " + id + " has no rings");
        for (const auto& part : shape.parts) {
            if (open_ring(part.outer).size() < 3) throw InputError("site " + id + " has a ring with < 3 vertices");
            for (const auto& v : part.outer) {
                lon_sum += v.lon;
                lat_sum += v.lat;
                ++count;
            }
        }
    }
    projection_ = LocalProjection({lon_sum / count, lat_sum / count});

    std::vector<TreeValue> boxes;
    for (const auto& [id, shape] : shapes_) {
        BMulti multi;
        for (const auto& part : shape.parts) {
            auto poly = project_part(part, projection_);
            if (!ring_is_simple(poly)) throw InputError("site " + id + " has a non-simple polygon");
            multi.push_back(std::move(poly));
        }
        boxes.emplace_back(bg::return_envelope<BBox>(multi), ids_.size());
        ids_.push_back(id);
        index_->shapes.push_back(std::move(multi));
    }
    index_->tree = decltype(index_->tree)(boxes.begin(), boxes.end());
}

SiteGeometrySet::~SiteGeometrySet() = default;
SiteGeometrySet::SiteGeometrySet(SiteGeometrySet&&) noexcept = default;
SiteGeometrySet& SiteGeometrySet::operator=(SiteGeometrySet&&) noexcept = default;

namespace {

Ring ring_from_json(const nlohmann::json& coords) {
    Ring ring;
    for (const auto& c : coords) {
        if (!c.is_array() || c.size() < 2) throw InputError("geometry: malformed coordinate");
        ring.push_back({c[0].get<double>(), c[1].get<double>()});
    }
    return ring;
}

PolygonPart part_from_json(const nlohmann::json& rings) {
    if (!rings.is_array() || rings.empty()) throw InputError("geometry: polygon without rings");
    PolygonPart part;
    part.outer = ring_from_json(rings[0]);
    for (std::size_t i = 1; i < rings.size(); ++i) part.holes.push_back(ring_from_json(rings[i]));
    return part;
}

nlohmann::json ring_to_json(const Ring& ring) {
    auto out = nlohmann::json::array();
    auto r = open_ring(ring);
    if (!r.empty()) r.push_back(r.front());
    for (const auto& p : r) out.push_back({p.lon, p.lat});
    return out;
}

}  // namespace

SiteGeometrySet SiteGeometrySet::from_geojson(std::istream& in) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("geometry: invalid JSON: ") + e.what());
    }
    if (doc.value("type", "") != "FeatureCollection" || !doc.contains("features"))
        throw InputError("geometry: expected a FeatureCollection");
    std::map<std::string, SiteShape> sites;
    for (const auto& feature : doc["features"]) {
        const auto& props = feature.at("properties");
        if (!props.contains("site_id")) throw InputError("geometry: feature without site_id");
        std::string id = props["site_id"].is_string() ? props["site_id"].get<std::string>()
                                                      : props["site_id"].dump();
        const auto& geom = feature.at("geometry");
        const auto type = geom.value("type", "");
        SiteShape shape;
        if (type == "Polygon") {
            shape.parts.push_back(part_from_json(geom.at("coordinates")));
        } else if (type == "MultiPolygon") {
            for (const auto& poly : geom.at("coordinates")) shape.parts.push_back(part_from_json(poly));
        } else {
            throw InputError("geometry: site " + id + " is not a Polygon/MultiPolygon");
        }
        if (!sites.emplace(id, std::move(shape)).second) throw InputError("geometry: duplicate site_id " + id);
    }
    return SiteGeometrySet(std::move(sites));
}

void SiteGeometrySet::write_geojson(std::ostream& out) const {
    nlohmann::json features = nlohmann::json::array();
    for (const auto& [id, shape] : shapes_) {
        nlohmann::json polys = nlohmann::json::array();
        for (const auto& part : shape.parts) {
            nlohmann::json rings = nlohmann::json::array({ring_to_json(part.outer)});
            for (const auto& h : part.holes) rings.push_back(ring_to_json(h));
            polys.push_back(rings);
        }
        nlohmann::json geometry = shape.parts.size() == 1
                                      ? nlohmann::json{{"type", "Polygon"}, {"coordinates", polys[0]}}
                                      : nlohmann::json{{"type", "MultiPolygon"}, {"coordinates", polys}};
        features.push_back({{"type", "Feature"}, {"properties", {{"site_id", id}}}, {"geometry", geometry}});
    }
    out << nlohmann::json{{"type", "FeatureCollection"}, {"features", features}}.dump() << "\n";
}

bool SiteGeometrySet::contains(const std::string& site_id) const { return shapes_.count(site_id) > 0; }

std::size_t SiteGeometrySet::size() const { return shapes_.size(); }

const SiteShape& SiteGeometrySet::shape(const std::string& site_id) const {
    auto it = shapes_.find(site_id);
    if (it == shapes_.end()) throw InputError("unknown site " + site_id);
    return it->second;
}

namespace {
std::size_t index_of(const std::vector<std::string>& ids, const std::string& id) {
    auto it = std::lower_bound(ids.begin(), ids.end(), id);
    if (it == ids.end() || *it != id) throw InputError("unknown site " + id);
    return static_cast<std::size_t>(it - ids.begin());
}
}  // namespace

GeoPoint SiteGeometrySet::centroid(const std::string& site_id) const {
    BPoint c{0.0, 0.0};
    bg::centroid(index_->shapes[index_of(ids_, site_id)], c);
    return projection_.to_geo({c.x(), c.y()});
}

double SiteGeometrySet::area_m2(const std::string& site_id) const {
    return bg::area(index_->shapes[index_of(ids_, site_id)]);
}

std::vector<std::string> SiteGeometrySet::sites_covering(GeoPoint p) const {
    const auto q = projection_.to_plane(p);
    const BPoint pt(q.x, q.y);
    std::vector<TreeValue> hits;
    index_->tree.query(bgi::intersects(pt), std::back_inserter(hits));
    std::vector<std::string> out;
    for (const auto& [box, i] : hits)
        if (bg::covered_by(pt, index_->shapes[i])) out.push_back(ids_[i]);
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<std::string> SiteGeometrySet::sites_within_distance(std::span<const GeoPoint> path,
                                                                double meters) const {
    BLine line;
    for (const auto& g : path) {
        auto p = projection_.to_plane(g);
        line.emplace_back(p.x, p.y);
    }
    BBox box = bg::return_envelope<BBox>(line);
    box.min_corner() = BPoint(box.min_corner().x() - meters, box.min_corner().y() - meters);
    box.max_corner() = BPoint(box.max_corner().x() + meters, box.max_corner().y() + meters);
    std::vector<TreeValue> hits;
    index_->tree.query(bgi::intersects(box), std::back_inserter(hits));
    std::vector<std::string> out;
    for (const auto& [b, i] : hits)
        if (bg::distance(line, index_->shapes[i]) <= meters) out.push_back(ids_[i]);
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<std::string> SiteGeometrySet::sites_overlapping(const Ring& ring, double min_area_m2) const {
    const auto poly = project_simple_ring(ring, projection_);
    if (!ring_is_simple(poly)) throw SelectionError("selection polygon is not a simple ring");
    std::vector<TreeValue> hits;
    index_->tree.query(bgi::intersects(bg::return_envelope<BBox>(poly)), std::back_inserter(hits));
    std::vector<std::string> out;
    for (const auto& [b, i] : hits) {
        BMulti overlap;
        bg::intersection(poly, index_->shapes[i], overlap);
        if (bg::area(overlap) > min_area_m2) out.push_back(ids_[i]);
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<std::pair<std::string, std::string>> SiteGeometrySet::touching_pairs(double tolerance_m) const {
    std::vector<std::pair<std::string, std::string>> pairs;
    for (std::size_t i = 0; i < ids_.size(); ++i) {
        BBox box = bg::return_envelope<BBox>(index_->shapes[i]);
        box.min_corner() = BPoint(box.min_corner().x() - tolerance_m, box.min_corner().y() - tolerance_m);
        box.max_corner() = BPoint(box.max_corner().x() + tolerance_m, box.max_corner().y() + tolerance_m);
        std::vector<TreeValue> hits;
        index_->tree.query(bgi::intersects(box), std::back_inserter(hits));
        for (const auto& [b, j] : hits) {
            if (j <= i) continue;
            if (bg::distance(index_->shapes[i], index_->shapes[j]) <= tolerance_m)
                pairs.emplace_back(ids_[i], ids_[j]);
        }
    }
    std::sort(pairs.begin(), pairs.end());
    return pairs;
}

// ---------------------------------------------------------------------------

AdjacencyGraph::AdjacencyGraph(std::map<std::string, std::set<std::string>> neighbors)
    : neighbors_(std::move(neighbors)) {
    for (const auto& [a, ns] : neighbors_)
        for (const auto& b : ns) {
            if (a == b) throw InputError("adjacency: self-loop at " + a);
            auto it = neighbors_.find(b);
            if (it == neighbors_.end() || !it->second.count(a))
                throw InputError("adjacency: asymmetric edge " + a + " -> " + b);
        }
}

const std::set<std::string>& AdjacencyGraph::neighbors(const std::string& site_id) const {
    static const std::set<std::string> kEmpty;
    auto it = neighbors_.find(site_id);
    return it == neighbors_.end() ? kEmpty : it->second;
}

bool AdjacencyGraph::adjacent(const std::string& a, const std::string& b) const {
    return neighbors(a).count(b) > 0;
}

AdjacencyGraph AdjacencyGraph::restricted_to(const std::vector<std::string>& sites) const {
    const std::set<std::string> keep(sites.begin(), sites.end());
    std::map<std::string, std::set<std::string>> sub;
    for (const auto& s : keep) {
        auto& ns = sub[s];
        for (const auto& n : neighbors(s))
            if (keep.count(n)) ns.insert(n);
    }
    return AdjacencyGraph(std::move(sub));
}

AdjacencyGraph build_adjacency(const SiteGeometrySet& geometry, double tolerance_m) {
    std::map<std::string, std::set<std::string>> neighbors;
    for (const auto& id : geometry.ids()) neighbors[id];
    for (const auto& [a, b] : geometry.touching_pairs(tolerance_m)) {
        neighbors[a].insert(b);
        neighbors[b].insert(a);
    }
    return AdjacencyGraph(std::move(neighbors));
}

// ---------------------------------------------------------------------------

std::string to_string(Provenance p) {
    switch (p) {
        case Provenance::point: return "point";
        case Provenance::polyline: return "polyline";
        case Provenance::polygon: return "polygon";
        case Provenance::address: return "address";
        case Provenance::hotspot: return "hotspot";
    }
    return "unknown";
}

bool Region::contains(const std::string& site_id) const {
    return std::binary_search(site_ids.begin(), site_ids.end(), site_id);
}

Region make_region(std::vector<std::string> site_ids, Provenance provenance, std::vector<GeoPoint> source) {
    std::sort(site_ids.begin(), site_ids.end());
    site_ids.erase(std::unique(site_ids.begin(), site_ids.end()), site_ids.end());
    if (site_ids.empty()) throw SelectionError("empty selection");
    return Region{std::move(site_ids), provenance, std::move(source), {}};
}

Region select_by_point(const SiteGeometrySet& geometry, GeoPoint p) {
    auto hits = geometry.sites_covering(p);
    if (hits.empty()) throw SelectionError("empty selection: point lies outside every site");
    return make_region({hits.front()}, Provenance::point, {p});
}

Region select_by_polyline(const SiteGeometrySet& geometry, std::span<const GeoPoint> path, double buffer_m) {
    if (path.size() < 2) throw SelectionError("polyline needs at least 2 points");
    if (!(buffer_m > 0.0)) throw SelectionError("buffer must be positive");
    double length = 0.0;
    const auto& proj = geometry.projection();
    for (std::size_t i = 1; i < path.size(); ++i) {
        auto a = proj.to_plane(path[i - 1]);
        auto b = proj.to_plane(path[i]);
        length += std::hypot(b.x - a.x, b.y - a.y);
    }
    if (length <= 0.0) throw SelectionError("degenerate polyline: zero length");
    return make_region(geometry.sites_within_distance(path, buffer_m), Provenance::polyline,
                       {path.begin(), path.end()});
}

Region select_by_polygon(const SiteGeometrySet& geometry, const Ring& ring) {
    if (open_ring(ring).size() < 3) throw SelectionError("polygon needs at least 3 vertices");
    // Edge contact produces zero-area intersections up to round-off.
    constexpr double kMinOverlapM2 = 1e-6;
    return make_region(geometry.sites_overlapping(ring, kMinOverlapM2), Provenance::polygon, ring);
}

Region expand_region(const Region& r, const AdjacencyGraph& graph, int rings) {
    if (rings < 0) throw InputError("expansion rings must be >= 0");
    std::set<std::string> seen(r.site_ids.begin(), r.site_ids.end());
    std::deque<std::pair<std::string, int>> queue;
    for (const auto& s : r.site_ids) queue.emplace_back(s, 0);
    while (!queue.empty()) {
        auto [site, depth] = queue.front();
        queue.pop_front();
        if (depth == rings) continue;
        for (const auto& n : graph.neighbors(site))
            if (seen.insert(n).second) queue.emplace_back(n, depth + 1);
    }
    Region out = r;
    out.site_ids.assign(seen.begin(), seen.end());
    return out;
}

TableGeocoder::TableGeocoder(std::map<std::string, GeoPoint> table) : table_(std::move(table)) {}

TableGeocoder TableGeocoder::from_stream(std::istream& in) {
    std::map<std::string, GeoPoint> table;
    std::string line;
    while (std::getline(in, line)) {
        auto eq = line.rfind('=');
        if (line.empty() || line[0] == '#' || eq == std::string::npos) continue;
        auto key = line.substr(0, eq);
        auto value = line.substr(eq + 1);
        while (!key.empty() && std::isspace(static_cast<unsigned char>(key.back()))) key.pop_back();
        GeoPoint p;
        char comma = 0;
        std::istringstream vs(value);
        if (!(vs >> p.lon >> comma >> p.lat) || comma != ',')
            throw InputError("geocoder table: bad coordinates for '" + key + "'");
        table[key] = p;
    }
    return TableGeocoder(std::move(table));
}

std::optional<GeoPoint> TableGeocoder::lookup(const std::string& address) const {
    auto it = table_.find(address);
    if (it == table_.end()) return std::nullopt;
    return it->second;
}

Region select_by_address(const SiteGeometrySet& geometry, const Geocoder& geocoder, const std::string& address) {
    auto p = geocoder.lookup(address);
    if (!p) throw SelectionError("address not found: " + address);
    Region r = select_by_point(geometry, *p);
    r.provenance = Provenance::address;
    r.address = address;
    return r;
}

std::string grid_site_name(int row, int col) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "r%02dc%02d", row, col);
    return buf;
}

SiteGeometrySet make_grid_geometry(int rows, int cols, GeoPoint south_west, double cell_deg,
                                   std::string (*namer)(int, int)) {
    if (!namer) namer = grid_site_name;
    std::map<std::string, SiteShape> sites;
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            const double x0 = south_west.lon + c * cell_deg, y0 = south_west.lat + r * cell_deg;
            const double x1 = south_west.lon + (c + 1) * cell_deg, y1 = south_west.lat + (r + 1) * cell_deg;
            Ring ring{{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}, {x0, y0}};
            sites[namer(r, c)] = SiteShape{{PolygonPart{ring, {}}}};
        }
    return SiteGeometrySet(std::move(sites));
}

}  // namespace crimelens
