#pragma once

#include <istream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "crimelens/core.hpp"

namespace crimelens {

struct GeoPoint {
    double lon = 0.0;
    double lat = 0.0;
    bool operator==(const GeoPoint&) const = default;
};

/// Planar point in meters on the local projection.
struct PlanePoint {
    double x = 0.0;
    double y = 0.0;
};

/// Closed ring; the closing vertex may be repeated or omitted.
using Ring = std::vector<GeoPoint>;

struct PolygonPart {
    Ring outer;
    std::vector<Ring> holes;
};

/// One census unit: a polygon or multipolygon in lon/lat.
struct SiteShape {
    std::vector<PolygonPart> parts;
};

/// Equirectangular projection about a reference point. Distortion grows with
/// distance from the reference; at city scale (~50 km) the scale error stays
/// below 0.5%.
class LocalProjection {
public:
    LocalProjection() = default;
    explicit LocalProjection(GeoPoint origin);

    PlanePoint to_plane(GeoPoint p) const;
    GeoPoint to_geo(PlanePoint p) const;
    const GeoPoint& origin() const { return origin_; }

private:
    GeoPoint origin_{};
    double cos_lat_ = 1.0;
};

class SelectionError : public InputError {
public:
    using InputError::InputError;
};

/// Census-unit polygons, immutable once built.
class SiteGeometrySet {
public:
    /// Throws InputError for empty input, empty shapes or non-simple rings.
    explicit SiteGeometrySet(std::map<std::string, SiteShape> sites);
    ~SiteGeometrySet();
    SiteGeometrySet(SiteGeometrySet&&) noexcept;
    SiteGeometrySet& operator=(SiteGeometrySet&&) noexcept;

    /// GeoJSON FeatureCollection; each feature carries a `site_id` property
    /// and a Polygon or MultiPolygon geometry.
    static SiteGeometrySet from_geojson(std::istream& in);
    void write_geojson(std::ostream& out) const;

    bool contains(const std::string& site_id) const;
    std::size_t size() const;
    /// Sorted ids.
    const std::vector<std::string>& ids() const { return ids_; }
    const SiteShape& shape(const std::string& site_id) const;
    /// Area-weighted centroid.
    GeoPoint centroid(const std::string& site_id) const;
    /// Area in square meters on the local projection.
    double area_m2(const std::string& site_id) const;
    const LocalProjection& projection() const { return projection_; }

    // Queries in projected space. Results are sorted by site id.
    std::vector<std::string> sites_covering(GeoPoint p) const;
    std::vector<std::string> sites_within_distance(std::span<const GeoPoint> path, double meters) const;
    std::vector<std::string> sites_overlapping(const Ring& ring, double min_area_m2) const;
    std::vector<std::pair<std::string, std::string>> touching_pairs(double tolerance_m) const;

    struct Index;

private:
    std::map<std::string, SiteShape> shapes_;
    std::vector<std::string> ids_;
    LocalProjection projection_;
    std::unique_ptr<Index> index_;
};

/// Queen contiguity: two sites are neighbors when their boundaries share a point.
class AdjacencyGraph {
public:
    AdjacencyGraph() = default;
    explicit AdjacencyGraph(std::map<std::string, std::set<std::string>> neighbors);

    const std::set<std::string>& neighbors(const std::string& site_id) const;
    bool adjacent(const std::string& a, const std::string& b) const;
    const std::map<std::string, std::set<std::string>>& all() const { return neighbors_; }

    /// Graph induced on a subset of sites.
    AdjacencyGraph restricted_to(const std::vector<std::string>& sites) const;

private:
    std::map<std::string, std::set<std::string>> neighbors_;
};

AdjacencyGraph build_adjacency(const SiteGeometrySet& geometry, double tolerance_m = 1e-6);

enum class Provenance { point, polyline, polygon, address, hotspot };

std::string to_string(Provenance p);

struct Region {
    std::vector<std::string> site_ids;  // sorted, unique, non-empty
    Provenance provenance = Provenance::polygon;
    std::vector<GeoPoint> source;       // drawn geometry, when any
    std::string address;                // address provenance only

    bool contains(const std::string& site_id) const;
};

Region make_region(std::vector<std::string> site_ids, Provenance provenance,
                   std::vector<GeoPoint> source = {});

inline constexpr double kDefaultBufferMeters = 50.0;

/// The site whose polygon contains p. Boundary points count as inside; a
/// point on a shared boundary selects the lexicographically smallest id.
Region select_by_point(const SiteGeometrySet& geometry, GeoPoint p);

/// Sites whose polygon comes within buffer_m of the path.
Region select_by_polyline(const SiteGeometrySet& geometry, std::span<const GeoPoint> path,
                          double buffer_m = kDefaultBufferMeters);

/// Sites with positive-area overlap with the ring. Edge contact alone does not select.
Region select_by_polygon(const SiteGeometrySet& geometry, const Ring& ring);

/// Adds every site within `rings` hops. rings == 0 returns r unchanged.
Region expand_region(const Region& r, const AdjacencyGraph& graph, int rings);

class Geocoder {
public:
    virtual ~Geocoder() = default;
    virtual std::optional<GeoPoint> lookup(const std::string& address) const = 0;
};

/// Fixture-backed geocoder reading `address = lon,lat` lines.
class TableGeocoder final : public Geocoder {
public:
    explicit TableGeocoder(std::map<std::string, GeoPoint> table);
    static TableGeocoder from_stream(std::istream& in);
    std::optional<GeoPoint> lookup(const std::string& address) const override;

private:
    std::map<std::string, GeoPoint> table_;
};

Region select_by_address(const SiteGeometrySet& geometry, const Geocoder& geocoder,
                         const std::string& address);

/// Square-cell grid fixture: rows x cols cells of `cell_deg` degrees with ids
/// produced by `namer(row, col)`. Row 0 is the southern row.
SiteGeometrySet make_grid_geometry(int rows, int cols, GeoPoint south_west, double cell_deg,
                                   std::string (*namer)(int row, int col) = nullptr);
std::string grid_site_name(int row, int col);

}  // namespace crimelens
