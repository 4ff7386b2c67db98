#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "crimelens/analytics.hpp"
#include "crimelens/hotspot.hpp"
#include "crimelens/spatial.hpp"

namespace crimelens {

// ---------------------------------------------------------------------------
// Getis-Ord Gi*

struct GiStarSite {
    std::string site_id;
    double z_score = 0.0;
    double p_value = 0.5;  // one-sided, upper tail
    bool hotspot = false;
};

struct GiStarResult {
    std::vector<GiStarSite> sites;  // input order
    double confidence = 0.99;
    double critical_z = 0.0;
    std::vector<std::uint8_t> labels() const;
};

double normal_upper_tail(double z);
/// z with upper-tail probability 1 - confidence.
double normal_critical_value(double confidence);

/// Gi* with binary queen weights that include the site itself. A site is a
/// hotspot when z > 0 and its one-sided p-value is at most 1 - confidence.
/// Constant input yields z = 0 everywhere.
GiStarResult gi_star(const std::vector<std::string>& sites, const std::vector<double>& values,
                     const AdjacencyGraph& adjacency, double confidence = 0.99);

// ---------------------------------------------------------------------------
// k-means grouping of site centroids

struct RegionClustering {
    std::map<std::string, std::size_t> assignment;
    std::vector<GeoPoint> centroids;
    std::vector<double> objective_history;  // within-cluster sum of squares (m^2) per Lloyd pass
    std::size_t iterations = 0;

    std::vector<std::vector<std::string>> members() const;
};

struct KMeansOptions {
    std::size_t clusters = 300;
    std::uint64_t seed = 0;
    int max_iters = 100;
    double rel_tol = 1e-6;
    /// Independent k-means++ seedings; the run with the lowest final
    /// within-cluster sum of squares is kept (ties: earliest run).
    int inits = 10;
};

/// k-means++ seeding then Lloyd iterations on projected centroids. Empty
/// clusters take the point farthest from its centroid in the largest cluster.
RegionClustering kmeans_regions(const SiteGeometrySet& geometry, const KMeansOptions& options);
RegionClustering kmeans_points(const std::vector<std::string>& ids, const std::vector<PlanePoint>& points,
                               const LocalProjection& projection, const KMeansOptions& options);

// ---------------------------------------------------------------------------
// Sokal-Sneath agreement

enum class SsiCategory : char { P = 'P', F = 'F', G = 'G', N = 'N' };

struct SsiCounts {
    std::size_t p = 0, f = 0, g = 0, n = 0;
    /// (2P + 2N) / (2P + F + G + 2N); 1 for an empty universe.
    double ssi() const;
};

struct SsiReport {
    std::vector<std::string> sites;
    std::vector<SsiCategory> categories;
    SsiCounts counts;
    double ssi = 1.0;
};

double sokal_sneath(const SsiCounts& c);

/// P: both hot; F: NMF only; G: Gi* only; N: neither.
SsiReport ssi_compare(const std::vector<std::string>& sites, const std::vector<std::uint8_t>& nmf_labels,
                      const std::vector<std::uint8_t>& gi_labels);

// ---------------------------------------------------------------------------
// Synthetic corpora

struct SyntheticCorpus {
    SiteGeometrySet geometry;
    CrimeCatalog catalog;
    /// Site x month counts that generated the catalog (row order = site_order).
    std::vector<std::string> site_order;
    std::vector<std::vector<std::int64_t>> counts;
    std::map<std::string, std::vector<std::string>> roles;  // archetype -> sites
};

inline constexpr int kFig4Months = 60;
inline constexpr std::size_t kFig4SpikeA = 35;  // zero-based month index
inline constexpr std::size_t kFig4SpikeB = 47;

/// 5x5 region: correlated high sites A,B (N(8,4); B = A + U(-3,3)), a
/// frequent mild site C (N(1,4)), a spiky site D (N(0,0.25) with 15 and 10 at
/// the spike months) and 21 background sites (N(0,0.25)). All draws are
/// rounded to the nearest integer and clipped at zero; the second parameter
/// is a variance.
SyntheticCorpus synth_region(std::uint64_t seed);

struct CityOptions {
    int district_rows = 5;   // districts stacked north-south
    int district_cols = 4;
    int cells_x = 4;         // cells per district
    int cells_y = 5;
    int street_cells = 8;    // empty cells between districts
    int months = kFig4Months;
};

/// Desk-scale city (400 sites by default): districts of grid cells separated
/// by empty streets, background N(0,0.25) everywhere else. Each district has
/// a 2x2 high-crime block in its south-west corner (one N(8,4) series, three
/// copies perturbed by U(-3,3)). District d additionally gets a frequent mild
/// site (d % 3 == 1) or a spiky site (d % 3 == 2) on its north edge.
SyntheticCorpus synth_city(std::uint64_t seed, const CityOptions& options = {});

// ---------------------------------------------------------------------------
// NMF vs Gi* comparison over clustered regions

struct ClusterComparison {
    std::size_t cluster = 0;
    std::vector<std::string> sites;
    std::vector<std::uint8_t> nmf_labels;
    std::vector<std::uint8_t> gi_labels;
    SsiReport report;
};

struct SsiHistogram {
    double low = 0.9;
    double width = 0.01;
    std::vector<std::size_t> bins;  // [low + i*width, low + (i+1)*width), last bin closed
    std::size_t below = 0;

    static SsiHistogram of(const std::vector<double>& values, double low = 0.9, double width = 0.01);
    std::string render() const;
};

struct ComparisonReport {
    std::vector<ClusterComparison> clusters;
    std::vector<std::size_t> skipped;  // clusters with < 3 sites
    SsiHistogram histogram;
    double mean_ssi = 0.0;
    double min_ssi = 1.0;
    int rank = 3;
    double confidence = 0.99;
};

/// Label functions over a cluster's site x slice matrix and its adjacency.
using LabelDetector = std::function<std::vector<std::uint8_t>(const CrimeMatrix&, const AdjacencyGraph&)>;

struct Detectors {
    LabelDetector nmf;
    LabelDetector gi;
};

Detectors default_detectors(const NmfConfig& cfg, double confidence);

ComparisonReport run_comparison(const CrimeCatalog& catalog, const AdjacencyGraph& adjacency,
                                const RegionClustering& clustering, const TimeSlicing& slicing,
                                const NmfConfig& cfg, double confidence = 0.99,
                                const std::optional<Detectors>& detectors = std::nullopt);

}  // namespace crimelens
