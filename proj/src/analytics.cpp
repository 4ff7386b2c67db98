#include "crimelens/analytics.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <tuple>
#include <unordered_map>

namespace crimelens {

using namespace std::chrono;

std::int64_t CrimeMatrix::total() const { return std::accumulate(counts.begin(), counts.end(), std::int64_t{0}); }

std::vector<std::int64_t> CrimeMatrix::row_totals() const {
    std::vector<std::int64_t> out(rows, 0);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) out[i] += at(i, j);
    return out;
}

std::vector<std::int64_t> CrimeMatrix::column_totals() const {
    std::vector<std::int64_t> out(cols, 0);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) out[j] += at(i, j);
    return out;
}

namespace {

template <typename Pred>
CrimeMatrix fill_matrix(const CrimeCatalog& catalog, const TimeSlicing& slicing,
                        const std::vector<std::string>& sites, Pred&& keep) {
    if (sites.empty()) throw InputError("matrix needs at least one site");
    CrimeMatrix m;
    m.row_sites = sites;
    m.rows = sites.size();
    m.cols = slicing.size();
    m.counts.assign(m.rows * m.cols, 0);
    m.granularity = slicing.granularity();
    for (std::size_t j = 0; j < m.cols; ++j) m.col_labels.push_back(slicing.label(j));

    std::unordered_map<std::string, std::size_t> row_of;
    for (std::size_t i = 0; i < sites.size(); ++i)
        if (!row_of.emplace(sites[i], i).second) throw InputError("duplicate site in matrix rows: " + sites[i]);
    for (const auto& r : catalog.records()) {
        auto row = row_of.find(r.site_id);
        if (row == row_of.end() || !keep(r)) continue;
        if (auto col = slicing.index_of(r.timestamp)) ++m.at(row->second, *col);
    }
    return m;
}

int year_of(Timestamp t) { return static_cast<int>(civil_date(t).year()); }

}  // namespace

CrimeMatrix count_matrix_entries(const CrimeCatalog& catalog, const TimeSlicing& slicing,
                                 const std::vector<std::string>& sites,
                                 const std::optional<std::set<std::string>>& type_filter) {
    auto m = fill_matrix(catalog, slicing, sites, [&](const CrimeRecord& r) {
        return !type_filter || type_filter->count(r.crime_type) > 0;
    });
    m.type_filter = type_filter;
    return m;
}

FilterState make_filter(Region region) {
    FilterState f;
    f.region = std::move(region);
    return f;
}

RecordFilter::RecordFilter(const FilterState& state, const TimeSlicing& slicing)
    : state_(&state), slicing_(&slicing) {
    if (state.time_window) {
        const auto& w = *state.time_window;
        if (w.first > w.last || w.last >= slicing.size())
            throw InputError("time window outside the slicing");
    }
}

bool RecordFilter::passes_space(const std::string& site_id) const {
    if (!state_->region.contains(site_id)) return false;
    if (state_->selected_site && *state_->selected_site != site_id) return false;
    if (state_->hotspot_sites && !state_->hotspot_sites->count(site_id)) return false;
    return true;
}

bool RecordFilter::passes(const CrimeRecord& r) const {
    if (!passes_space(r.site_id)) return false;
    if (state_->excluded_types.count(r.crime_type)) return false;
    if (!state_->excluded_years.empty() && state_->excluded_years.count(year_of(r.timestamp))) return false;
    auto slice = slicing_->index_of(r.timestamp);
    if (!slice) return false;
    if (state_->time_window && (*slice < state_->time_window->first || *slice > state_->time_window->last))
        return false;
    return true;
}

bool refines(const FilterState& fine, const FilterState& coarse) {
    if (!std::includes(coarse.region.site_ids.begin(), coarse.region.site_ids.end(), fine.region.site_ids.begin(),
                       fine.region.site_ids.end()))
        return false;
    if (coarse.time_window) {
        if (!fine.time_window) return false;
        if (fine.time_window->first < coarse.time_window->first || fine.time_window->last > coarse.time_window->last)
            return false;
    }
    if (!std::includes(fine.excluded_years.begin(), fine.excluded_years.end(), coarse.excluded_years.begin(),
                       coarse.excluded_years.end()))
        return false;
    if (!std::includes(fine.excluded_types.begin(), fine.excluded_types.end(), coarse.excluded_types.begin(),
                       coarse.excluded_types.end()))
        return false;
    if (coarse.selected_site && fine.selected_site != coarse.selected_site) return false;
    if (coarse.hotspot_sites) {
        if (!fine.hotspot_sites) return false;
        if (!std::includes(coarse.hotspot_sites->begin(), coarse.hotspot_sites->end(), fine.hotspot_sites->begin(),
                           fine.hotspot_sites->end()))
            return false;
    }
    return true;
}

CrimeMatrix build_matrix(const CrimeCatalog& catalog, const TimeSlicing& slicing, const FilterState& filter) {
    const RecordFilter keep(filter, slicing);
    return fill_matrix(catalog, slicing, filter.region.site_ids, [&](const CrimeRecord& r) { return keep.passes(r); });
}

std::vector<std::int64_t> global_series(const CrimeCatalog& catalog, const TimeSlicing& slicing,
                                        const FilterState& filter) {
    const RecordFilter keep(filter, slicing);
    std::vector<std::int64_t> series(slicing.size(), 0);
    for (const auto& r : catalog.records())
        if (keep.passes(r)) ++series[*slicing.index_of(r.timestamp)];
    return series;
}

DayPeriod period_of_day(Timestamp t) { return static_cast<DayPeriod>(minute_of_day(t) / 360); }

namespace {

CumulativeCounts accumulate(const CrimeCatalog& catalog, const RecordFilter& keep) {
    CumulativeCounts c;
    for (const auto& r : catalog.records()) {
        if (!keep.passes(r)) continue;
        const auto day = floor<days>(r.timestamp);
        const year_month_day ymd{day};
        ++c.by_month_of_year[static_cast<unsigned>(ymd.month()) - 1];
        ++c.by_day_of_week[weekday{day}.iso_encoding() - 1];
        ++c.by_period_of_day[static_cast<std::size_t>(period_of_day(r.timestamp))];
        ++c.total;
    }
    return c;
}

struct TypeTally {
    std::map<std::string, std::int64_t> totals;

    /// Top types by (total desc, code asc).
    std::vector<std::pair<std::string, std::int64_t>> top(std::size_t t) const {
        std::vector<std::pair<std::string, std::int64_t>> v(totals.begin(), totals.end());
        std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
        if (v.size() > t) v.resize(t);
        return v;
    }
};

TypeTally tally_types(const CrimeCatalog& catalog, const RecordFilter& keep) {
    TypeTally tally;
    for (const auto& r : catalog.records())
        if (keep.passes(r)) ++tally.totals[r.crime_type];
    return tally;
}

}  // namespace

CumulativeSeries cumulative_series(const CrimeCatalog& catalog, const TimeSlicing& slicing,
                                   const FilterState& filter, const std::optional<FilterState>& overlay) {
    CumulativeSeries out;
    out.base = accumulate(catalog, RecordFilter(filter, slicing));
    if (overlay) {
        if (!refines(*overlay, filter)) throw InputError("overlay filter does not refine the base filter");
        out.overlay = accumulate(catalog, RecordFilter(*overlay, slicing));
    }
    return out;
}

RankingSeries ranking_series(const CrimeCatalog& catalog, const TimeSlicing& slicing, const FilterState& filter,
                             std::size_t top_t) {
    if (top_t == 0) throw InputError("top_t must be positive");
    const RecordFilter keep(filter, slicing);
    const auto top = tally_types(catalog, keep).top(top_t);

    RankingSeries out;
    out.first_slice = filter.time_window ? filter.time_window->first : 0;
    out.slices = filter.time_window ? filter.time_window->last - filter.time_window->first + 1 : slicing.size();

    std::map<std::string, std::size_t> slot;
    for (const auto& [type, total] : top) {
        slot[type] = out.types.size();
        out.types.push_back({type, total, std::vector<int>(out.slices, 0), std::vector<std::int64_t>(out.slices, 0)});
    }
    for (const auto& r : catalog.records()) {
        if (!keep.passes(r)) continue;
        auto it = slot.find(r.crime_type);
        if (it == slot.end()) continue;
        ++out.types[it->second].count[*slicing.index_of(r.timestamp) - out.first_slice];
    }

    // out.types is already in (window total desc, code asc) order, which is
    // the tie-break order within a slice.
    std::vector<std::size_t> order(out.types.size());
    for (std::size_t s = 0; s < out.slices; ++s) {
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return out.types[a].count[s] > out.types[b].count[s];
        });
        for (std::size_t pos = 0; pos < order.size(); ++pos) out.types[order[pos]].rank[s] = static_cast<int>(pos + 1);
    }
    return out;
}

RadialSeries radial_series(const CrimeCatalog& catalog, const TimeSlicing& slicing, const FilterState& filter,
                           std::size_t top_t) {
    if (top_t == 0) throw InputError("top_t must be positive");
    const RecordFilter keep(filter, slicing);
    const auto top = tally_types(catalog, keep).top(top_t);

    const int first_year = static_cast<int>(year_month_day{slicing.range().start}.year());
    const int last_year = static_cast<int>(year_month_day{slicing.range().end}.year());
    std::vector<int> years;
    for (int y = first_year; y <= last_year; ++y) years.push_back(y);

    RadialSeries out;
    std::map<std::string, std::size_t> slot;
    std::int64_t shown = 0;
    for (const auto& [type, total] : top) {
        slot[type] = out.types.size();
        out.types.push_back({type, years, std::vector<std::array<std::int64_t, 12>>(years.size()), total, 0.0});
        shown += total;
    }
    for (const auto& r : catalog.records()) {
        if (!keep.passes(r)) continue;
        auto it = slot.find(r.crime_type);
        if (it == slot.end()) continue;
        const auto ymd = civil_date(r.timestamp);
        const auto y = static_cast<std::size_t>(static_cast<int>(ymd.year()) - first_year);
        ++out.types[it->second].grid.at(y)[static_cast<unsigned>(ymd.month()) - 1];
    }
    for (auto& t : out.types) t.share_percent = shown > 0 ? 100.0 * static_cast<double>(t.total) / shown : 0.0;
    return out;
}

std::vector<std::pair<std::string, std::int64_t>> choropleth(const CrimeCatalog& catalog, const TimeSlicing& slicing,
                                                             const FilterState& filter) {
    const RecordFilter keep(filter, slicing);
    std::map<std::string, std::int64_t> counts;
    for (const auto& s : filter.region.site_ids) counts[s] = 0;
    for (const auto& r : catalog.records())
        if (keep.passes(r)) ++counts[r.site_id];
    return {counts.begin(), counts.end()};
}

std::vector<RepeatPair> near_repeat_pairs(const CrimeCatalog& catalog, const Region& region,
                                          const AdjacencyGraph& adjacency, int window_days, bool include_neighbors) {
    if (window_days <= 0) throw InputError("near-repeat window must be positive");
    const minutes window{static_cast<std::int64_t>(window_days) * 24 * 60};

    std::map<std::string, std::vector<const CrimeRecord*>> by_type;
    for (const auto& r : catalog.records())
        if (region.contains(r.site_id)) by_type[r.crime_type].push_back(&r);

    std::vector<RepeatPair> pairs;
    for (const auto& [type, recs] : by_type) {
        // recs inherits the catalog's timestamp order.
        for (std::size_t i = 0; i < recs.size(); ++i) {
            for (std::size_t j = i + 1; j < recs.size(); ++j) {
                const auto gap = recs[j]->timestamp - recs[i]->timestamp;
                if (gap >= window) break;
                if (gap <= minutes{0}) continue;
                const bool same = recs[i]->site_id == recs[j]->site_id;
                if (same || (include_neighbors && adjacency.adjacent(recs[i]->site_id, recs[j]->site_id)))
                    pairs.push_back({*recs[i], *recs[j], static_cast<double>(gap.count()) / (24.0 * 60.0)});
            }
        }
    }
    std::sort(pairs.begin(), pairs.end(), [](const RepeatPair& a, const RepeatPair& b) {
        return std::tie(a.first.timestamp, a.first.site_id, a.second.timestamp, a.second.site_id) <
               std::tie(b.first.timestamp, b.first.site_id, b.second.timestamp, b.second.site_id);
    });
    return pairs;
}

}  // namespace crimelens
