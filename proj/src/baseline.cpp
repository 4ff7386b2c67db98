#include "crimelens/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include <boost/math/distributions/normal.hpp>

namespace crimelens {

// ---------------------------------------------------------------------------
// Gi*

double normal_upper_tail(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

double normal_critical_value(double confidence) {
    if (!(confidence > 0.0 && confidence < 1.0)) throw InputError("confidence must lie in (0, 1)");
    return boost::math::quantile(boost::math::normal_distribution<double>{}, confidence);
}

std::vector<std::uint8_t> GiStarResult::labels() const {
    std::vector<std::uint8_t> out;
    out.reserve(sites.size());
    for (const auto& s : sites) out.push_back(s.hotspot ? 1 : 0);
    return out;
}

GiStarResult gi_star(const std::vector<std::string>& sites, const std::vector<double>& values,
                     const AdjacencyGraph& adjacency, double confidence) {
    const std::size_t n = sites.size();
    if (values.size() != n) throw InputError("gi_star: values and sites differ in length");
    if (n < 3) throw InputError("gi_star needs at least 3 sites");
    if (std::any_of(values.begin(), values.end(), [](double v) { return v < 0.0 || !std::isfinite(v); }))
        throw InputError("gi_star: values must be finite and non-negative");

    GiStarResult out;
    out.confidence = confidence;
    out.critical_z = normal_critical_value(confidence);
    out.sites.resize(n);
    for (std::size_t i = 0; i < n; ++i) out.sites[i].site_id = sites[i];

    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    if (*lo == *hi) return out;

    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < n; ++i) index[sites[i]] = i;

    const double dn = static_cast<double>(n);
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / dn;
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    const double s = std::sqrt(ss / dn);

    for (std::size_t i = 0; i < n; ++i) {
        double local = values[i];
        double weight = 1.0;  // self
        for (const auto& nb : adjacency.neighbors(sites[i])) {
            auto it = index.find(nb);
            if (it == index.end()) continue;
            local += values[it->second];
            weight += 1.0;
        }
        // Binary weights: sum of squared weights equals the weight sum.
        const double spread = (dn * weight - weight * weight) / (dn - 1.0);
        if (spread <= 0.0) continue;
        auto& site = out.sites[i];
        site.z_score = (local - mean * weight) / (s * std::sqrt(spread));
        site.p_value = normal_upper_tail(site.z_score);
        site.hotspot = site.z_score > 0.0 && site.p_value <= 1.0 - confidence;
    }
    return out;
}

// ---------------------------------------------------------------------------
// k-means

std::vector<std::vector<std::string>> RegionClustering::members() const {
    std::vector<std::vector<std::string>> out(centroids.size());
    for (const auto& [site, c] : assignment) out.at(c).push_back(site);
    return out;
}

namespace {

double sq_dist(const PlanePoint& a, const PlanePoint& b) {
    const double dx = a.x - b.x, dy = a.y - b.y;
    return dx * dx + dy * dy;
}

}  // namespace

namespace {

RegionClustering kmeans_once(const std::vector<std::string>& ids, const std::vector<PlanePoint>& points,
                             const LocalProjection& projection, const KMeansOptions& options, std::mt19937_64& rng) {
    const std::size_t n = points.size(), k = options.clusters;
    std::vector<PlanePoint> centers;
    centers.reserve(k);
    centers.push_back(points[std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)]);
    std::vector<double> d2(n);
    for (std::size_t i = 0; i < n; ++i) d2[i] = sq_dist(points[i], centers[0]);
    while (centers.size() < k) {
        const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
        std::size_t pick = 0;
        if (total > 0.0) {
            double u = std::uniform_real_distribution<double>(0.0, total)(rng);
            for (pick = 0; pick + 1 < n; ++pick) {
                if (u < d2[pick]) break;
                u -= d2[pick];
            }
            while (d2[pick] == 0.0 && pick > 0) --pick;
        }
        centers.push_back(points[pick]);
        for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], sq_dist(points[i], centers.back()));
    }

    RegionClustering out;
    std::vector<std::size_t> assign(n, 0);
    auto assign_all = [&] {
        double obj = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            // Ties keep the current cluster so a repaired cluster is not
            // emptied again by an equidistant duplicate center.
            double best = sq_dist(points[i], centers[assign[i]]);
            for (std::size_t c = 0; c < k; ++c) {
                const double d = sq_dist(points[i], centers[c]);
                if (d < best) {
                    best = d;
                    assign[i] = c;
                }
            }
            obj += best;
        }
        return obj;
    };
    auto objective = [&] {
        double obj = 0.0;
        for (std::size_t i = 0; i < n; ++i) obj += sq_dist(points[i], centers[assign[i]]);
        return obj;
    };

    assign_all();
    out.objective_history.push_back(objective());
    for (int it = 0; it < options.max_iters; ++it) {
        std::vector<PlanePoint> sums(k);
        std::vector<std::size_t> sizes(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            sums[assign[i]].x += points[i].x;
            sums[assign[i]].y += points[i].y;
            ++sizes[assign[i]];
        }
        for (std::size_t c = 0; c < k; ++c)
            if (sizes[c]) centers[c] = {sums[c].x / sizes[c], sums[c].y / sizes[c]};
        // Repair: an empty cluster takes the worst-fitting point of the largest one.
        for (std::size_t c = 0; c < k; ++c) {
            if (sizes[c]) continue;
            const auto largest = static_cast<std::size_t>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
            std::size_t far = n;
            double far_d = -1.0;
            for (std::size_t i = 0; i < n; ++i)
                if (assign[i] == largest && sq_dist(points[i], centers[largest]) > far_d) {
                    far_d = sq_dist(points[i], centers[largest]);
                    far = i;
                }
            centers[c] = points[far];
            assign[far] = c;
            --sizes[largest];
            sizes[c] = 1;
        }
        const double prev = out.objective_history.back();
        const double cur = assign_all();
        out.objective_history.push_back(cur);
        out.iterations = static_cast<std::size_t>(it + 1);
        if (prev - cur <= options.rel_tol * prev) break;
    }

    for (std::size_t i = 0; i < n; ++i) out.assignment[ids[i]] = assign[i];
    for (const auto& c : centers) out.centroids.push_back(projection.to_geo(c));
    return out;
}

}  // namespace

RegionClustering kmeans_points(const std::vector<std::string>& ids, const std::vector<PlanePoint>& points,
                               const LocalProjection& projection, const KMeansOptions& options) {
    const std::size_t n = points.size(), k = options.clusters;
    if (ids.size() != n) throw InputError("kmeans: ids and points differ in length");
    if (k == 0) throw InputError("kmeans: need at least one cluster");
    if (k > n) throw InputError("kmeans: " + std::to_string(k) + " clusters for " + std::to_string(n) + " sites");
    if (options.inits < 1) throw InputError("kmeans: need at least one seeding");

    std::mt19937_64 rng(options.seed);
    RegionClustering best;
    for (int run = 0; run < options.inits; ++run) {
        auto r = kmeans_once(ids, points, projection, options, rng);
        if (run == 0 || r.objective_history.back() < best.objective_history.back()) best = std::move(r);
    }
    return best;
}

RegionClustering kmeans_regions(const SiteGeometrySet& geometry, const KMeansOptions& options) {
    std::vector<PlanePoint> pts;
    for (const auto& id : geometry.ids()) pts.push_back(geometry.projection().to_plane(geometry.centroid(id)));
    return kmeans_points(geometry.ids(), pts, geometry.projection(), options);
}

// ---------------------------------------------------------------------------
// SSI

double sokal_sneath(const SsiCounts& c) {
    const double matches = 2.0 * static_cast<double>(c.p + c.n);
    const double denom = matches + static_cast<double>(c.f + c.g);
    return denom > 0.0 ? matches / denom : 1.0;
}

double SsiCounts::ssi() const { return sokal_sneath(*this); }

SsiReport ssi_compare(const std::vector<std::string>& sites, const std::vector<std::uint8_t>& nmf_labels,
                      const std::vector<std::uint8_t>& gi_labels) {
    if (nmf_labels.size() != sites.size() || gi_labels.size() != sites.size())
        throw InputError("ssi_compare: label vectors cover different site universes");
    SsiReport r;
    r.sites = sites;
    for (std::size_t i = 0; i < sites.size(); ++i) {
        const bool a = nmf_labels[i] != 0, b = gi_labels[i] != 0;
        SsiCategory c = a && b ? SsiCategory::P : a ? SsiCategory::F : b ? SsiCategory::G : SsiCategory::N;
        r.categories.push_back(c);
        switch (c) {
            case SsiCategory::P: ++r.counts.p; break;
            case SsiCategory::F: ++r.counts.f; break;
            case SsiCategory::G: ++r.counts.g; break;
            case SsiCategory::N: ++r.counts.n; break;
        }
    }
    r.ssi = r.counts.ssi();
    return r;
}

// ---------------------------------------------------------------------------
// Synthetic corpora

namespace {

const std::vector<std::string> kSynthTypes = {"ROBBERY", "THEFT", "BURGLARY"};

std::int64_t draw_count(std::mt19937_64& rng, double mean, double variance) {
    const double v = std::normal_distribution<double>(mean, std::sqrt(variance))(rng);
    return std::max<std::int64_t>(0, std::llround(v));
}

/// Expands month counts into records with uniformly drawn day, hour, minute and type.
std::vector<CrimeRecord> expand_counts(std::mt19937_64& rng, const std::vector<std::string>& sites,
                                       const std::vector<std::vector<std::int64_t>>& counts,
                                       std::chrono::year_month first_month) {
    using namespace std::chrono;
    std::vector<CrimeRecord> records;
    std::uniform_int_distribution<int> minute_of_day_dist(0, 24 * 60 - 1);
    std::uniform_int_distribution<std::size_t> type_dist(0, kSynthTypes.size() - 1);
    for (std::size_t s = 0; s < sites.size(); ++s)
        for (std::size_t m = 0; m < counts[s].size(); ++m) {
            const year_month ym = first_month + months{static_cast<int>(m)};
            const unsigned last_day = static_cast<unsigned>((ym / last).day());
            std::uniform_int_distribution<unsigned> day_dist(1, last_day);
            for (std::int64_t c = 0; c < counts[s][m]; ++c) {
                const sys_days day{ym / std::chrono::day{day_dist(rng)}};
                records.push_back({sites[s], kSynthTypes[type_dist(rng)],
                                   Timestamp{day} + minutes{minute_of_day_dist(rng)}});
            }
        }
    return records;
}

DateRange month_range(std::chrono::year_month first, int months) {
    using namespace std::chrono;
    const year_month last_month = first + std::chrono::months{months - 1};
    return {sys_days{first / day{1}}, sys_days{last_month / last}};
}

/// Fills one Fig.4-style block: A/B correlated high, C mild frequent, D spiky.
void fill_archetypes(std::mt19937_64& rng, int months, std::vector<std::int64_t>& a, std::vector<std::int64_t>& b,
                     std::vector<std::int64_t>& c, std::vector<std::int64_t>& d) {
    std::uniform_real_distribution<double> perturb(-3.0, 3.0);
    for (int t = 0; t < months; ++t) {
        const std::int64_t raw_a = std::llround(std::normal_distribution<double>(8.0, 2.0)(rng));
        const std::int64_t raw_b = raw_a + std::llround(perturb(rng));  // B - A in [-3, 3] before clipping
        a.push_back(std::max<std::int64_t>(0, raw_a));
        b.push_back(std::max<std::int64_t>(0, raw_b));
        c.push_back(draw_count(rng, 1.0, 4.0));
        d.push_back(draw_count(rng, 0.0, 0.25));
    }
    if (static_cast<std::size_t>(months) > kFig4SpikeB) {
        d[kFig4SpikeA] = 15;
        d[kFig4SpikeB] = 10;
    }
}

std::string fig4_namer(int row, int col) {
    // Row 0 is south. A and B sit side by side; C and D are apart from them.
    if (row == 3 && col == 1) return "A";
    if (row == 3 && col == 2) return "B";
    if (row == 1 && col == 3) return "C";
    if (row == 1 && col == 0) return "D";
    int index = row * 5 + col;
    char buf[16];
    std::snprintf(buf, sizeof buf, "S%02d", index % 100);
    return buf;
}

}  // namespace

SyntheticCorpus synth_region(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto geometry = make_grid_geometry(5, 5, {-46.66, -23.56}, 0.002, fig4_namer);

    std::vector<std::int64_t> a, b, c, d;
    fill_archetypes(rng, kFig4Months, a, b, c, d);

    std::vector<std::string> order = geometry.ids();
    std::vector<std::vector<std::int64_t>> counts;
    for (const auto& site : order) {
        if (site == "A") counts.push_back(a);
        else if (site == "B") counts.push_back(b);
        else if (site == "C") counts.push_back(c);
        else if (site == "D") counts.push_back(d);
        else {
            std::vector<std::int64_t> row;
            for (int t = 0; t < kFig4Months; ++t) row.push_back(draw_count(rng, 0.0, 0.25));
            counts.push_back(std::move(row));
        }
    }
    const std::chrono::year_month first{std::chrono::year{2000}, std::chrono::January};
    auto records = expand_counts(rng, order, counts, first);
    CrimeCatalog catalog(std::move(records), month_range(first, kFig4Months), "synthetic-fig4");
    std::map<std::string, std::vector<std::string>> roles{
        {"high", {"A", "B"}}, {"frequent", {"C"}}, {"spiky", {"D"}}};
    return {std::move(geometry), std::move(catalog), std::move(order), std::move(counts), std::move(roles)};
}

SyntheticCorpus synth_city(std::uint64_t seed, const CityOptions& opt) {
    if (opt.cells_x < 3 || opt.cells_y < 3) throw InputError("districts need at least 3x3 cells");
    std::mt19937_64 rng(seed);
    constexpr double kCell = 0.002;
    const GeoPoint origin{-46.80, -23.70};
    const int pitch_x = opt.cells_x + opt.street_cells, pitch_y = opt.cells_y + opt.street_cells;

    std::map<std::string, SiteShape> shapes;
    std::map<std::string, std::vector<std::int64_t>> rows;
    std::map<std::string, std::vector<std::string>> roles;
    int district = 0;
    for (int dr = 0; dr < opt.district_rows; ++dr)
        for (int dc = 0; dc < opt.district_cols; ++dc, ++district) {
            std::vector<std::int64_t> a, b, c, d;
            fill_archetypes(rng, opt.months, a, b, c, d);
            std::vector<std::vector<std::int64_t>> block{a, b};
            for (int extra = 0; extra < 2; ++extra) {
                std::vector<std::int64_t> copy;
                std::uniform_real_distribution<double> perturb(-3.0, 3.0);
                for (auto v : a) copy.push_back(std::max<std::int64_t>(0, v + std::llround(perturb(rng))));
                block.push_back(std::move(copy));
            }
            char prefix[16];
            std::snprintf(prefix, sizeof prefix, "d%02d", district % 100);
            for (int cy = 0; cy < opt.cells_y; ++cy)
                for (int cx = 0; cx < opt.cells_x; ++cx) {
                    const int gx = dc * pitch_x + cx, gy = dr * pitch_y + cy;
                    const double x0 = origin.lon + gx * kCell, y0 = origin.lat + gy * kCell;
                    const double x1 = origin.lon + (gx + 1) * kCell, y1 = origin.lat + (gy + 1) * kCell;
                    char cell[16];
                    std::snprintf(cell, sizeof cell, "%d%d", cy % 10, cx % 10);
                    std::string id = std::string(prefix) + "-" + cell;
                    shapes[id] = SiteShape{{PolygonPart{{{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}}, {}}}};

                    std::vector<std::int64_t> series;
                    const bool north_mid = cy == opt.cells_y - 1 && cx == opt.cells_x - 2;
                    if (cy < 2 && cx < 2) {
                        series = block[static_cast<std::size_t>(cy * 2 + cx)];
                        roles["high"].push_back(id);
                    } else if (north_mid && district % 3 == 1) {
                        series = c;
                        roles["frequent"].push_back(id);
                    } else if (north_mid && district % 3 == 2) {
                        series = d;
                        roles["spiky"].push_back(id);
                    } else {
                        for (int t = 0; t < opt.months; ++t) series.push_back(draw_count(rng, 0.0, 0.25));
                    }
                    rows[id] = std::move(series);
                }
        }

    SiteGeometrySet geometry(std::move(shapes));
    std::vector<std::string> order = geometry.ids();
    std::vector<std::vector<std::int64_t>> counts;
    for (const auto& id : order) counts.push_back(rows.at(id));
    const std::chrono::year_month first{std::chrono::year{2000}, std::chrono::January};
    auto records = expand_counts(rng, order, counts, first);
    CrimeCatalog catalog(std::move(records), month_range(first, opt.months), "synthetic-city");
    return {std::move(geometry), std::move(catalog), std::move(order), std::move(counts), std::move(roles)};
}

// ---------------------------------------------------------------------------
// Comparison

SsiHistogram SsiHistogram::of(const std::vector<double>& values, double low, double width) {
    SsiHistogram h;
    h.low = low;
    h.width = width;
    const auto nbins = static_cast<std::size_t>(std::llround((1.0 - low) / width));
    h.bins.assign(nbins, 0);
    for (double v : values) {
        if (v < low) {
            ++h.below;
            continue;
        }
        auto b = static_cast<std::size_t>(std::floor((v - low) / width + 1e-9));
        ++h.bins[std::min(b, nbins - 1)];
    }
    return h;
}

std::string SsiHistogram::render() const {
    std::ostringstream out;
    out << std::fixed << std::setprecision(2);
    out << "  < " << low << " | " << std::string(below, '#') << " " << below << "\n";
    for (std::size_t i = 0; i < bins.size(); ++i)
        out << "  " << low + i * width << " | " << std::string(bins[i], '#') << " " << bins[i] << "\n";
    return out.str();
}

Detectors default_detectors(const NmfConfig& cfg, double confidence) {
    Detectors d;
    d.nmf = [cfg](const CrimeMatrix& X, const AdjacencyGraph&) {
        return nmf_site_labels(factorize(X, cfg));
    };
    d.gi = [confidence](const CrimeMatrix& X, const AdjacencyGraph& adjacency) {
        std::vector<double> totals;
        for (auto t : X.row_totals()) totals.push_back(static_cast<double>(t));
        return gi_star(X.row_sites, totals, adjacency, confidence).labels();
    };
    return d;
}

ComparisonReport run_comparison(const CrimeCatalog& catalog, const AdjacencyGraph& adjacency,
                                const RegionClustering& clustering, const TimeSlicing& slicing,
                                const NmfConfig& cfg, double confidence, const std::optional<Detectors>& detectors) {
    const Detectors det = detectors ? *detectors : default_detectors(cfg, confidence);
    ComparisonReport report;
    report.rank = cfg.rank;
    report.confidence = confidence;
    std::vector<double> values;
    const auto groups = clustering.members();
    for (std::size_t c = 0; c < groups.size(); ++c) {
        if (groups[c].size() < 3) {
            report.skipped.push_back(c);
            continue;
        }
        ClusterComparison cc;
        cc.cluster = c;
        cc.sites = groups[c];
        const auto X = count_matrix_entries(catalog, slicing, cc.sites);
        const auto local = adjacency.restricted_to(cc.sites);
        cc.nmf_labels = det.nmf(X, local);
        cc.gi_labels = det.gi(X, local);
        cc.report = ssi_compare(cc.sites, cc.nmf_labels, cc.gi_labels);
        values.push_back(cc.report.ssi);
        report.clusters.push_back(std::move(cc));
    }
    report.histogram = SsiHistogram::of(values);
    if (!values.empty()) {
        report.mean_ssi = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
        report.min_ssi = *std::min_element(values.begin(), values.end());
    }
    return report;
}

}  // namespace crimelens
