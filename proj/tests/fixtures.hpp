#pragma once

#include <random>
#include <string>
#include <tuple>
#include <vector>

#include "crimelens/analytics.hpp"
#include "crimelens/spatial.hpp"

namespace fixture {

using namespace crimelens;

inline constexpr GeoPoint kSouthWest{-46.70, -23.60};
inline constexpr double kCell = 0.001;  // ~100 m

inline SiteGeometrySet grid(int rows, int cols) { return make_grid_geometry(rows, cols, kSouthWest, kCell); }

/// Center of grid cell (row, col) in lon/lat.
inline GeoPoint cell_center(int row, int col) {
    return {kSouthWest.lon + (col + 0.5) * kCell, kSouthWest.lat + (row + 0.5) * kCell};
}

inline Timestamp ts(int y, unsigned m, unsigned d, int hh = 12, int mm = 0) { return make_timestamp(y, m, d, hh, mm); }

inline DateRange years(int first, int last) {
    using namespace std::chrono;
    return {sys_days{year{first} / January / 1}, sys_days{year{last} / December / 31}};
}

inline CrimeCatalog catalog(std::vector<CrimeRecord> records, DateRange range) {
    return CrimeCatalog(std::move(records), range, "fixture");
}

/// Random records over a grid's sites, spread over the given years.
inline CrimeCatalog random_catalog(const SiteGeometrySet& geo, std::size_t n, std::uint64_t seed, int first_year,
                                   int last_year, const std::vector<std::string>& types) {
    std::mt19937_64 rng(seed);
    const auto range = years(first_year, last_year);
    const auto span = (range.end - range.start).count() + 1;
    std::uniform_int_distribution<long> day(0, span - 1);
    std::uniform_int_distribution<int> minute(0, 24 * 60 - 1);
    std::uniform_int_distribution<std::size_t> site(0, geo.ids().size() - 1), type(0, types.size() - 1);
    std::vector<CrimeRecord> out;
    for (std::size_t i = 0; i < n; ++i)
        out.push_back({geo.ids()[site(rng)], types[type(rng)],
                       Timestamp{range.start + std::chrono::days{day(rng)}} + std::chrono::minutes{minute(rng)}});
    return catalog(std::move(out), range);
}

}  // namespace fixture
