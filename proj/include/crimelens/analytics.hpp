#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "crimelens/core.hpp"
#include "crimelens/spatial.hpp"

namespace crimelens {

/// Dense row-major site x slice count matrix.
struct CrimeMatrix {
    std::vector<std::string> row_sites;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::int64_t> counts;
    Granularity granularity = Granularity::month;
    std::vector<std::string> col_labels;
    std::optional<std::set<std::string>> type_filter;

    std::int64_t at(std::size_t site, std::size_t slice) const { return counts[site * cols + slice]; }
    std::int64_t& at(std::size_t site, std::size_t slice) { return counts[site * cols + slice]; }
    std::int64_t total() const;
    std::vector<std::int64_t> row_totals() const;
    std::vector<std::int64_t> column_totals() const;
};

/// X[i][j] = records at sites[i] within slices[j] whose type is in type_filter
/// (all types when absent).
CrimeMatrix count_matrix_entries(const CrimeCatalog& catalog, const TimeSlicing& slicing,
                                 const std::vector<std::string>& sites,
                                 const std::optional<std::set<std::string>>& type_filter = std::nullopt);

/// Inclusive slice index interval.
struct SliceWindow {
    std::size_t first = 0;
    std::size_t last = 0;
    bool operator==(const SliceWindow&) const = default;
};

/// The linked-view filter. All facets are conjunctive, so they commute.
struct FilterState {
    Region region;
    std::optional<SliceWindow> time_window;
    std::set<int> excluded_years;
    std::set<std::string> excluded_types;
    std::optional<std::string> selected_site;
    std::optional<std::size_t> selected_hotspot;
    /// Member sites of the selected hotspot, resolved by the caller.
    std::optional<std::set<std::string>> hotspot_sites;
};

FilterState make_filter(Region region);

/// Compiled filter predicate bound to a slicing.
class RecordFilter {
public:
    RecordFilter(const FilterState& state, const TimeSlicing& slicing);
    bool passes_space(const std::string& site_id) const;
    bool passes(const CrimeRecord& r) const;

private:
    const FilterState* state_;
    const TimeSlicing* slicing_;
};

/// True when every record passing `fine` also passes `coarse`, judged on the
/// facets themselves.
bool refines(const FilterState& fine, const FilterState& coarse);

/// Matrix over the region's sites (or the selected site/hotspot) with every
/// filter facet applied. A filter that removes everything yields zeros.
CrimeMatrix build_matrix(const CrimeCatalog& catalog, const TimeSlicing& slicing, const FilterState& filter);

/// Per-slice totals of filtered records.
std::vector<std::int64_t> global_series(const CrimeCatalog& catalog, const TimeSlicing& slicing,
                                        const FilterState& filter);

enum class DayPeriod { night, morning, afternoon, evening };
/// Six-hour quarters starting at midnight.
DayPeriod period_of_day(Timestamp t);

struct CumulativeCounts {
    std::array<std::int64_t, 12> by_month_of_year{};
    std::array<std::int64_t, 7> by_day_of_week{};  // Monday first
    std::array<std::int64_t, 4> by_period_of_day{};
    std::int64_t total = 0;
};

struct CumulativeSeries {
    CumulativeCounts base;
    std::optional<CumulativeCounts> overlay;
};

/// Throws InputError when overlay does not refine filter.
CumulativeSeries cumulative_series(const CrimeCatalog& catalog, const TimeSlicing& slicing,
                                   const FilterState& filter,
                                   const std::optional<FilterState>& overlay = std::nullopt);

struct RankedType {
    std::string crime_type;
    std::int64_t window_total = 0;
    std::vector<int> rank;             // per slice, 1 = most frequent
    std::vector<std::int64_t> count;  // per slice
};

struct RankingSeries {
    std::vector<RankedType> types;  // ordered by overall standing
    std::size_t first_slice = 0;    // slicing index of element 0
    std::size_t slices = 0;
};

inline constexpr std::size_t kDefaultTopTypes = 5;

/// Ranks the top_t types by windowed total; per slice, ranks order the same
/// types by slice count with ties going to the higher windowed total, then
/// the lexicographically smaller code.
RankingSeries ranking_series(const CrimeCatalog& catalog, const TimeSlicing& slicing,
                             const FilterState& filter, std::size_t top_t = kDefaultTopTypes);

struct RadialType {
    std::string crime_type;
    std::vector<int> years;
    std::vector<std::array<std::int64_t, 12>> grid;  // per year, per month
    std::int64_t total = 0;
    double share_percent = 0.0;
};

struct RadialSeries {
    std::vector<RadialType> types;
};

/// Year x month grids for the top types; shares are over the displayed types.
RadialSeries radial_series(const CrimeCatalog& catalog, const TimeSlicing& slicing, const FilterState& filter,
                           std::size_t top_t = kDefaultTopTypes);

/// Per-site filtered totals for every site of the region, in region order.
std::vector<std::pair<std::string, std::int64_t>> choropleth(const CrimeCatalog& catalog,
                                                             const TimeSlicing& slicing,
                                                             const FilterState& filter);

struct RepeatPair {
    CrimeRecord first;
    CrimeRecord second;
    double gap_days = 0.0;
};

/// Same-type record pairs 0 < gap < window_days apart at the same site, or at
/// queen-adjacent sites when include_neighbors is set. Both sites lie in the region.
std::vector<RepeatPair> near_repeat_pairs(const CrimeCatalog& catalog, const Region& region,
                                          const AdjacencyGraph& adjacency, int window_days = 30,
                                          bool include_neighbors = false);

}  // namespace crimelens
