#include "doctest.h"

#include <algorithm>
#include <map>
#include <numeric>
#include <random>

#include "crimelens/baseline.hpp"
#include "fixtures.hpp"

using namespace crimelens;
using fixture::ts;

namespace {

Region whole(const SiteGeometrySet& g) { return make_region(g.ids(), Provenance::polygon); }

// Linear-scan oracle for the filter predicate, written against calendar
// arithmetic rather than the slicing object.
struct Oracle {
    const FilterState& f;
    int first_year;
    unsigned first_month;

    std::size_t month_index(Timestamp t) const {
        const auto ymd = civil_date(t);
        return static_cast<std::size_t>((static_cast<int>(ymd.year()) - first_year) * 12 +
                                        static_cast<int>(static_cast<unsigned>(ymd.month())) -
                                        static_cast<int>(first_month));
    }

    bool passes(const CrimeRecord& r) const {
        if (std::find(f.region.site_ids.begin(), f.region.site_ids.end(), r.site_id) == f.region.site_ids.end())
            return false;
        if (f.selected_site && *f.selected_site != r.site_id) return false;
        if (f.hotspot_sites && !f.hotspot_sites->count(r.site_id)) return false;
        if (f.excluded_types.count(r.crime_type)) return false;
        if (f.excluded_years.count(static_cast<int>(civil_date(r.timestamp).year()))) return false;
        if (f.time_window) {
            const auto s = month_index(r.timestamp);
            if (s < f.time_window->first || s > f.time_window->last) return false;
        }
        return true;
    }
};

std::int64_t sum(const auto& v) { return std::accumulate(std::begin(v), std::end(v), std::int64_t{0}); }

const std::vector<std::string> kTypes{"ASSAULT", "BURGLARY", "ROBBERY", "THEFT", "VANDALISM", "VEHICLE_THEFT"};

FilterState random_filter(const SiteGeometrySet& g, std::size_t slices, std::mt19937_64& rng) {
    std::vector<std::string> ids;
    for (const auto& id : g.ids())
        if (rng() % 3 != 0) ids.push_back(id);
    if (ids.empty()) ids.push_back(g.ids().front());
    FilterState f = make_filter(make_region(ids, Provenance::polygon));
    if (rng() % 2) {
        std::size_t a = rng() % slices, b = rng() % slices;
        if (a > b) std::swap(a, b);
        f.time_window = SliceWindow{a, b};
    }
    for (int y = 2000; y <= 2004; ++y)
        if (rng() % 5 == 0) f.excluded_years.insert(y);
    for (const auto& t : kTypes)
        if (rng() % 4 == 0) f.excluded_types.insert(t);
    if (rng() % 6 == 0) f.selected_site = ids[rng() % ids.size()];
    if (rng() % 6 == 0) {
        std::set<std::string> hs;
        for (const auto& id : ids)
            if (rng() % 2) hs.insert(id);
        f.hotspot_sites = hs;
    }
    return f;
}

}  // namespace

// ---------------------------------------------------------------------------
// matrices

TEST_CASE("build_matrix on the synthetic region is 25x60 and equals the generator counts") {
    const auto corpus = synth_region(3);
    const TimeSlicing months(Granularity::month, corpus.catalog.date_range());
    const auto m = build_matrix(corpus.catalog, months, make_filter(whole(corpus.geometry)));
    CHECK(m.rows == 25);
    CHECK(m.cols == 60);
    for (std::size_t k = 0; k < corpus.site_order.size(); ++k) {
        const auto row = std::find(m.row_sites.begin(), m.row_sites.end(), corpus.site_order[k]) - m.row_sites.begin();
        for (std::size_t j = 0; j < 60; ++j) CHECK(m.at(row, j) == corpus.counts[k][j]);
    }
}

TEST_CASE("build_matrix: excluding every type gives a valid zero matrix") {
    auto g = fixture::grid(3, 3);
    auto cat = fixture::random_catalog(g, 500, 1, 2000, 2001, kTypes);
    const TimeSlicing months(Granularity::month, cat.date_range());
    auto f = make_filter(whole(g));
    for (const auto& t : kTypes) f.excluded_types.insert(t);
    const auto m = build_matrix(cat, months, f);
    CHECK(m.rows == 9);
    CHECK(m.cols == 24);
    CHECK(m.total() == 0);
}

TEST_CASE("build_matrix: 2 sites, 3 slices, year exclusion, hand-counted") {
    auto g = fixture::grid(1, 2);
    const DateRange range{std::chrono::sys_days{std::chrono::year{2001} / 11 / 1},
                          std::chrono::sys_days{std::chrono::year{2002} / 1 / 31}};
    auto cat = fixture::catalog({{"r00c00", "THEFT", ts(2001, 11, 3)},
                                 {"r00c00", "THEFT", ts(2001, 11, 28)},
                                 {"r00c01", "ROBBERY", ts(2001, 12, 31, 23, 59)},
                                 {"r00c01", "THEFT", ts(2002, 1, 1, 0, 0)},
                                 {"r00c00", "THEFT", ts(2002, 1, 15)},
                                 {"r00c01", "THEFT", ts(2001, 12, 1)}},
                                range);
    const TimeSlicing months(Granularity::month, range);
    auto f = make_filter(whole(g));
    const auto all = build_matrix(cat, months, f);
    CHECK(all.counts == std::vector<std::int64_t>{2, 0, 1, 0, 2, 1});
    f.excluded_years = {2002};
    const auto no2002 = build_matrix(cat, months, f);
    CHECK(no2002.counts == std::vector<std::int64_t>{2, 0, 0, 0, 2, 0});
    f.excluded_years = {2001};
    CHECK(build_matrix(cat, months, f).counts == std::vector<std::int64_t>{0, 0, 1, 0, 0, 1});
}

TEST_CASE("build_matrix rejects a window outside the slicing") {
    auto g = fixture::grid(1, 1);
    auto cat = fixture::random_catalog(g, 10, 1, 2000, 2000, kTypes);
    const TimeSlicing months(Granularity::month, cat.date_range());
    auto f = make_filter(whole(g));
    f.time_window = SliceWindow{3, 12};
    CHECK_THROWS_AS(build_matrix(cat, months, f), InputError);
    f.time_window = SliceWindow{5, 4};
    CHECK_THROWS_AS(build_matrix(cat, months, f), InputError);
}

// ---------------------------------------------------------------------------
// global series

TEST_CASE("global_series equals the column sums of the matrix") {
    const auto corpus = synth_region(8);
    const TimeSlicing months(Granularity::month, corpus.catalog.date_range());
    const auto f = make_filter(whole(corpus.geometry));
    const auto series = global_series(corpus.catalog, months, f);
    std::vector<std::int64_t> colsum(60, 0);
    for (const auto& row : corpus.counts)
        for (std::size_t j = 0; j < 60; ++j) colsum[j] += row[j];
    CHECK(series == colsum);
}

TEST_CASE("global_series: single record, and an empty filter") {
    auto g = fixture::grid(2, 2);
    auto cat = fixture::catalog({{"r01c01", "THEFT", ts(2003, 4, 9)}}, fixture::years(2003, 2003));
    const TimeSlicing months(Granularity::month, cat.date_range());
    auto f = make_filter(whole(g));
    auto s = global_series(cat, months, f);
    std::vector<std::int64_t> want(12, 0);
    want[3] = 1;
    CHECK(s == want);
    f.excluded_types = {"THEFT"};
    CHECK(sum(global_series(cat, months, f)) == 0);

    const TimeSlicing days(Granularity::day, cat.date_range());
    auto d = global_series(cat, days, make_filter(whole(g)));
    CHECK(d.size() == 365);
    CHECK(d[31 + 28 + 31 + 8] == 1);
    CHECK(sum(d) == 1);
}

// ---------------------------------------------------------------------------
// cumulative series

TEST_CASE("period_of_day uses six-hour quarters") {
    CHECK(period_of_day(ts(2000, 1, 1, 0, 0)) == DayPeriod::night);
    CHECK(period_of_day(ts(2000, 1, 1, 5, 59)) == DayPeriod::night);
    CHECK(period_of_day(ts(2000, 1, 1, 6, 0)) == DayPeriod::morning);
    CHECK(period_of_day(ts(2000, 1, 1, 12, 0)) == DayPeriod::afternoon);
    CHECK(period_of_day(ts(2000, 1, 1, 17, 59)) == DayPeriod::afternoon);
    CHECK(period_of_day(ts(2000, 1, 1, 18, 0)) == DayPeriod::evening);
    CHECK(period_of_day(ts(2000, 1, 1, 23, 59)) == DayPeriod::evening);
}

TEST_CASE("cumulative_series: hand fixture, identity overlay, empty overlay") {
    auto g = fixture::grid(1, 1);
    // 2004-03-01 is a Monday, 2004-03-07 a Sunday.
    auto cat = fixture::catalog({{"r00c00", "THEFT", ts(2004, 3, 1, 1, 0)},
                                 {"r00c00", "THEFT", ts(2004, 3, 7, 19, 0)},
                                 {"r00c00", "ROBBERY", ts(2004, 12, 1, 9, 0)}},
                                fixture::years(2004, 2004));
    const TimeSlicing months(Granularity::month, cat.date_range());
    const auto base = make_filter(whole(g));
    const auto c = cumulative_series(cat, months, base, base);
    CHECK(c.base.total == 3);
    CHECK(c.base.by_month_of_year[2] == 2);
    CHECK(c.base.by_month_of_year[11] == 1);
    CHECK(c.base.by_day_of_week[0] == 1);  // Monday
    CHECK(c.base.by_day_of_week[6] == 1);  // Sunday
    CHECK(c.base.by_day_of_week[2] == 1);  // 2004-12-01 is a Wednesday
    CHECK(c.base.by_period_of_day == std::array<std::int64_t, 4>{1, 1, 0, 1});
    REQUIRE(c.overlay);
    CHECK(c.overlay->by_month_of_year == c.base.by_month_of_year);
    CHECK(c.overlay->by_day_of_week == c.base.by_day_of_week);
    CHECK(c.overlay->by_period_of_day == c.base.by_period_of_day);

    auto none = base;
    none.excluded_types = {"THEFT", "ROBBERY"};
    const auto e = cumulative_series(cat, months, base, none);
    CHECK(e.overlay->total == 0);
    CHECK(sum(e.overlay->by_month_of_year) == 0);
}

TEST_CASE("cumulative_series rejects an overlay that does not refine the base") {
    auto g = fixture::grid(2, 2);
    auto cat = fixture::random_catalog(g, 50, 2, 2000, 2000, kTypes);
    const TimeSlicing months(Granularity::month, cat.date_range());
    auto base = make_filter(make_region({"r00c00", "r00c01"}, Provenance::polygon));
    auto wider = make_filter(whole(g));
    CHECK_THROWS_AS(cumulative_series(cat, months, base, wider), InputError);
    auto fewer_exclusions = base;
    base.excluded_types = {"THEFT"};
    CHECK_THROWS_AS(cumulative_series(cat, months, base, fewer_exclusions), InputError);
    base.excluded_types.clear();
    base.time_window = SliceWindow{2, 5};
    auto outside = base;
    outside.time_window = SliceWindow{4, 7};
    CHECK_THROWS_AS(cumulative_series(cat, months, base, outside), InputError);
    auto inside = base;
    inside.time_window = SliceWindow{3, 5};
    CHECK_NOTHROW(cumulative_series(cat, months, base, inside));
}

TEST_CASE("cumulative_series: seasonal uplift in commercial burglary shows in the overlay") {
    auto g = fixture::grid(3, 3);
    std::mt19937_64 rng(77);
    std::vector<CrimeRecord> recs;
    const auto range = fixture::years(2000, 2004);
    for (int y = 2000; y <= 2004; ++y)
        for (unsigned m = 1; m <= 12; ++m) {
            const bool winter = m >= 6 && m <= 9;
            std::poisson_distribution<int> other(20), burglary(winter ? 30 : 6);
            for (const auto& [type, dist] : {std::pair{"THEFT", other}, std::pair{"COMMERCIAL_BURGLARY", burglary}}) {
                auto d = dist;
                for (int k = d(rng); k > 0; --k)
                    recs.push_back({g.ids()[rng() % 9], type, ts(y, m, 1 + rng() % 28, rng() % 24, rng() % 60)});
            }
        }
    auto cat = fixture::catalog(recs, range);
    const TimeSlicing months(Granularity::month, range);
    const auto base = make_filter(whole(g));
    auto overlay = base;
    overlay.excluded_types = {"THEFT"};
    const auto c = cumulative_series(cat, months, base, overlay);

    std::array<std::int64_t, 12> oracle{}, oracle_all{};
    for (const auto& r : recs) {
        const auto mo = static_cast<unsigned>(civil_date(r.timestamp).month()) - 1;
        ++oracle_all[mo];
        if (r.crime_type == "COMMERCIAL_BURGLARY") ++oracle[mo];
    }
    CHECK(c.overlay->by_month_of_year == oracle);
    CHECK(c.base.by_month_of_year == oracle_all);
    for (std::size_t m = 0; m < 12; ++m) CHECK(c.overlay->by_month_of_year[m] <= c.base.by_month_of_year[m]);
    double winter = 0, rest = 0;
    for (std::size_t m = 0; m < 12; ++m) (m >= 5 && m <= 8 ? winter : rest) += oracle[m];
    CHECK(winter / 4.0 > 3.0 * rest / 8.0);
}

// ---------------------------------------------------------------------------
// ranking

TEST_CASE("ranking_series: one type has rank 1 everywhere") {
    auto g = fixture::grid(1, 1);
    auto cat = fixture::random_catalog(g, 100, 3, 2000, 2000, {"THEFT"});
    const TimeSlicing months(Granularity::month, cat.date_range());
    const auto r = ranking_series(cat, months, make_filter(whole(g)));
    REQUIRE(r.types.size() == 1);
    CHECK(r.types[0].rank == std::vector<int>(12, 1));
    CHECK(r.types[0].window_total == 100);
}

TEST_CASE("ranking_series: counts (5,3) per slice give ranks (1,2); a 4-4 tie goes alphabetical") {
    auto g = fixture::grid(1, 1);
    std::vector<CrimeRecord> recs;
    for (unsigned m = 1; m <= 3; ++m) {
        for (int i = 0; i < 3; ++i) recs.push_back({"r00c00", "ARSON", ts(2001, m, 2 + i)});
        for (int i = 0; i < 5; ++i) recs.push_back({"r00c00", "THEFT", ts(2001, m, 2 + i)});
    }
    auto cat = fixture::catalog(recs, DateRange{std::chrono::sys_days{std::chrono::year{2001} / 1 / 1},
                                                std::chrono::sys_days{std::chrono::year{2001} / 3 / 31}});
    const TimeSlicing months(Granularity::month, cat.date_range());
    auto r = ranking_series(cat, months, make_filter(whole(g)));
    REQUIRE(r.types.size() == 2);
    CHECK(r.types[0].crime_type == "THEFT");
    CHECK(r.types[0].rank == std::vector<int>{1, 1, 1});
    CHECK(r.types[0].count == std::vector<std::int64_t>{5, 5, 5});
    CHECK(r.types[1].rank == std::vector<int>{2, 2, 2});

    std::vector<CrimeRecord> tie;
    for (int i = 0; i < 4; ++i) {
        tie.push_back({"r00c00", "ROBBERY", ts(2001, 1, 2 + i)});
        tie.push_back({"r00c00", "BURGLARY", ts(2001, 1, 10 + i)});
    }
    auto tcat = fixture::catalog(tie, cat.date_range());
    auto t = ranking_series(tcat, months, make_filter(whole(g)));
    REQUIRE(t.types.size() == 2);
    CHECK(t.types[0].crime_type == "BURGLARY");
    CHECK(t.types[0].rank[0] == 1);
    CHECK(t.types[1].rank[0] == 2);
    // Empty slices tie at zero as well; the same rule applies.
    CHECK(t.types[0].rank[1] == 1);
}

TEST_CASE("ranking_series: within-slice tie falls back to the windowed total") {
    auto g = fixture::grid(1, 1);
    std::vector<CrimeRecord> recs{{"r00c00", "ZED", ts(2001, 1, 5)},     {"r00c00", "ALPHA", ts(2001, 1, 6)},
                                  {"r00c00", "ZED", ts(2001, 2, 5)},     {"r00c00", "ZED", ts(2001, 2, 6)}};
    auto cat = fixture::catalog(recs, DateRange{std::chrono::sys_days{std::chrono::year{2001} / 1 / 1},
                                                std::chrono::sys_days{std::chrono::year{2001} / 2 / 28}});
    const TimeSlicing months(Granularity::month, cat.date_range());
    auto r = ranking_series(cat, months, make_filter(whole(g)));
    CHECK(r.types[0].crime_type == "ZED");
    CHECK(r.types[0].rank == std::vector<int>{1, 1});
    CHECK(r.types[1].rank == std::vector<int>{2, 2});
}

TEST_CASE("ranking_series: ranks are permutations and counts are per-slice counts") {
    auto g = fixture::grid(4, 4);
    auto cat = fixture::random_catalog(g, 3000, 11, 2000, 2002, kTypes);
    const TimeSlicing months(Granularity::month, cat.date_range());
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 20; ++trial) {
        const auto f = random_filter(g, months.size(), rng);
        const Oracle o{f, 2000, 1};
        for (std::size_t top : {3u, 5u}) {
            const auto r = ranking_series(cat, months, f, top);
            std::map<std::string, std::int64_t> totals;
            for (const auto& rec : cat.records())
                if (o.passes(rec)) ++totals[rec.crime_type];
            CHECK(r.types.size() == std::min(top, totals.size()));
            for (std::size_t s = 0; s < r.slices; ++s) {
                std::vector<int> ranks;
                for (const auto& t : r.types) ranks.push_back(t.rank[s]);
                std::sort(ranks.begin(), ranks.end());
                std::vector<int> want(r.types.size());
                std::iota(want.begin(), want.end(), 1);
                CHECK(ranks == want);
            }
            for (const auto& t : r.types) {
                CHECK(t.window_total == totals[t.crime_type]);
                std::vector<std::int64_t> want(r.slices, 0);
                for (const auto& rec : cat.records())
                    if (o.passes(rec) && rec.crime_type == t.crime_type) ++want[o.month_index(rec.timestamp) - r.first_slice];
                CHECK(t.count == want);
                // No type outside the top list has a larger total.
                for (const auto& [name, total] : totals) {
                    const bool listed = std::any_of(r.types.begin(), r.types.end(),
                                                    [&](const RankedType& x) { return x.crime_type == name; });
                    if (!listed) CHECK(total <= r.types.back().window_total);
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// radial

TEST_CASE("radial_series: single type 100%, two uniform types 50/50") {
    auto g = fixture::grid(1, 1);
    auto one = fixture::random_catalog(g, 40, 4, 2001, 2002, {"THEFT"});
    const TimeSlicing months(Granularity::month, one.date_range());
    auto r = radial_series(one, months, make_filter(whole(g)));
    REQUIRE(r.types.size() == 1);
    CHECK(r.types[0].share_percent == 100.0);
    CHECK(r.types[0].years == std::vector<int>{2001, 2002});

    std::vector<CrimeRecord> two;
    for (unsigned m = 1; m <= 12; ++m) {
        two.push_back({"r00c00", "THEFT", ts(2001, m, 3)});
        two.push_back({"r00c00", "ROBBERY", ts(2001, m, 4)});
    }
    auto cat = fixture::catalog(two, fixture::years(2001, 2001));
    const TimeSlicing m1(Granularity::month, cat.date_range());
    auto h = radial_series(cat, m1, make_filter(whole(g)));
    REQUIRE(h.types.size() == 2);
    CHECK(h.types[0].share_percent == 50.0);
    CHECK(h.types[1].share_percent == 50.0);
    for (const auto& t : h.types) CHECK(t.grid[0] == std::array<std::int64_t, 12>{1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1});
}

TEST_CASE("radial_series: five-type fixture against a linear scan") {
    auto g = fixture::grid(3, 3);
    auto cat = fixture::random_catalog(g, 2500, 21, 2000, 2004,
                                       {"ASSAULT", "BURGLARY", "ROBBERY", "THEFT", "THEFT", "THEFT", "VANDALISM",
                                        "VANDALISM", "VEHICLE_THEFT"});
    const TimeSlicing months(Granularity::month, cat.date_range());
    auto f = make_filter(whole(g));
    f.excluded_years = {2002};
    const Oracle o{f, 2000, 1};
    const auto r = radial_series(cat, months, f, 5);
    REQUIRE(r.types.size() == 5);

    std::map<std::string, std::int64_t> totals;
    std::map<std::string, std::vector<std::array<std::int64_t, 12>>> grids;
    for (const auto& rec : cat.records()) {
        if (!o.passes(rec)) continue;
        ++totals[rec.crime_type];
        auto& gr = grids[rec.crime_type];
        gr.resize(5);
        const auto ymd = civil_date(rec.timestamp);
        ++gr[static_cast<int>(ymd.year()) - 2000][static_cast<unsigned>(ymd.month()) - 1];
    }
    std::vector<std::pair<std::int64_t, std::string>> order;
    for (const auto& [t, n] : totals) order.push_back({-n, t});
    std::sort(order.begin(), order.end());
    std::int64_t shown = 0;
    for (std::size_t i = 0; i < 5; ++i) shown -= order[i].first;
    double share_sum = 0;
    for (std::size_t i = 0; i < 5; ++i) {
        const auto& t = r.types[i];
        CHECK(t.crime_type == order[i].second);
        CHECK(t.total == -order[i].first);
        CHECK(t.share_percent == doctest::Approx(100.0 * t.total / shown).epsilon(1e-12));
        CHECK(t.grid == grids[t.crime_type]);
        for (const auto& mo : t.grid[2]) CHECK(mo == 0);
        share_sum += t.share_percent;
    }
    CHECK(share_sum == doctest::Approx(100.0));
}

// ---------------------------------------------------------------------------
// conservation and commutativity

TEST_CASE("100 random filters: every aggregate conserves the filtered count") {
    auto g = fixture::grid(5, 5);
    auto cat = fixture::random_catalog(g, 4000, 31, 2000, 2004, kTypes);
    const TimeSlicing months(Granularity::month, cat.date_range());
    std::mt19937_64 rng(32);
    for (int trial = 0; trial < 100; ++trial) {
        const auto f = random_filter(g, months.size(), rng);
        const Oracle o{f, 2000, 1};
        const auto want = std::count_if(cat.records().begin(), cat.records().end(),
                                        [&](const CrimeRecord& r) { return o.passes(r); });
        const auto c = cumulative_series(cat, months, f);
        CHECK(sum(global_series(cat, months, f)) == want);
        CHECK(build_matrix(cat, months, f).total() == want);
        CHECK(c.base.total == want);
        CHECK(sum(c.base.by_month_of_year) == want);
        CHECK(sum(c.base.by_day_of_week) == want);
        CHECK(sum(c.base.by_period_of_day) == want);
        std::int64_t choro = 0;
        for (const auto& [site, n] : choropleth(cat, months, f)) choro += n;
        CHECK(choro == want);
    }
}

TEST_CASE("time and type filters commute") {
    auto g = fixture::grid(4, 4);
    auto cat = fixture::random_catalog(g, 3000, 41, 2000, 2004, kTypes);
    const TimeSlicing months(Granularity::month, cat.date_range());
    std::mt19937_64 rng(42);
    for (int trial = 0; trial < 50; ++trial) {
        const auto f = random_filter(g, months.size(), rng);
        // Stage 1 = time facets only, stage 2 = type facets only, applied as
        // successive catalog reductions in both orders.
        auto time_only = make_filter(f.region);
        time_only.time_window = f.time_window;
        time_only.excluded_years = f.excluded_years;
        auto type_only = make_filter(f.region);
        type_only.excluded_types = f.excluded_types;

        auto reduce = [&](const CrimeCatalog& in, const FilterState& s) {
            const RecordFilter keep(s, months);
            std::vector<CrimeRecord> out;
            for (const auto& r : in.records())
                if (keep.passes(r)) out.push_back(r);
            return CrimeCatalog(out, in.date_range(), in.label());
        };
        const auto a = reduce(reduce(cat, time_only), type_only);
        const auto b = reduce(reduce(cat, type_only), time_only);
        auto combined = make_filter(f.region);
        combined.time_window = f.time_window;
        combined.excluded_years = f.excluded_years;
        combined.excluded_types = f.excluded_types;
        const auto region_only = make_filter(f.region);

        CHECK(a.records() == b.records());
        CHECK(global_series(a, months, region_only) == global_series(cat, months, combined));
        CHECK(build_matrix(b, months, region_only).counts == build_matrix(cat, months, combined).counts);
        const auto ra = ranking_series(a, months, region_only, 5);
        const auto rc = ranking_series(cat, months, combined, 5);
        REQUIRE(ra.types.size() == rc.types.size());
        for (std::size_t i = 0; i < ra.types.size(); ++i) {
            CHECK(ra.types[i].crime_type == rc.types[i].crime_type);
            // The combined filter reports only the window's slices.
            for (std::size_t s = 0; s < rc.slices; ++s) CHECK(ra.types[i].count[rc.first_slice + s] == rc.types[i].count[s]);
        }
        CHECK(cumulative_series(b, months, region_only).base.by_day_of_week ==
              cumulative_series(cat, months, combined).base.by_day_of_week);
    }
}

TEST_CASE("choropleth lists every region site including zeros") {
    auto g = fixture::grid(2, 2);
    auto cat = fixture::catalog({{"r00c00", "THEFT", ts(2001, 1, 1)}, {"r00c00", "THEFT", ts(2001, 2, 1)},
                                 {"r01c01", "ROBBERY", ts(2001, 3, 1)}},
                                fixture::years(2001, 2001));
    const TimeSlicing months(Granularity::month, cat.date_range());
    auto f = make_filter(make_region({"r00c00", "r00c01", "r01c01"}, Provenance::polygon));
    const auto c = choropleth(cat, months, f);
    CHECK(c == std::vector<std::pair<std::string, std::int64_t>>{{"r00c00", 2}, {"r00c01", 0}, {"r01c01", 1}});
}

// ---------------------------------------------------------------------------
// near repeats

TEST_CASE("near_repeat_pairs: same site within and beyond the window") {
    auto g = fixture::grid(1, 3);
    const auto adj = build_adjacency(g);
    const auto region = whole(g);
    auto pairs_for = [&](int gap_days, const std::string& second_site, bool neighbors) {
        auto cat = fixture::catalog({{"r00c00", "BURGLARY", ts(2002, 1, 1)},
                                     {second_site, "BURGLARY", ts(2002, 1, 1) + std::chrono::days{gap_days}}},
                                    fixture::years(2002, 2002));
        return near_repeat_pairs(cat, region, adj, 30, neighbors);
    };
    CHECK(pairs_for(20, "r00c00", false).size() == 1);
    CHECK(pairs_for(40, "r00c00", false).empty());
    CHECK(pairs_for(5, "r00c00", false).size() == 1);
    CHECK(pairs_for(29, "r00c00", false).size() == 1);
    CHECK(pairs_for(30, "r00c00", false).empty());
    CHECK(pairs_for(45, "r00c00", false).empty());
    CHECK(pairs_for(0, "r00c00", false).empty());

    CHECK(pairs_for(10, "r00c01", true).size() == 1);
    CHECK(pairs_for(10, "r00c01", false).empty());
    CHECK(pairs_for(10, "r00c02", true).empty());

    const auto p = pairs_for(20, "r00c00", false).front();
    CHECK(p.first.timestamp < p.second.timestamp);
    CHECK(p.gap_days == 20.0);
}

TEST_CASE("near_repeat_pairs against a brute-force oracle") {
    auto g = fixture::grid(4, 4);
    const auto adj = build_adjacency(g);
    auto cat = fixture::random_catalog(g, 400, 51, 2001, 2001, {"BURGLARY", "THEFT"});
    const auto region = make_region({"r00c00", "r00c01", "r01c00", "r01c01", "r02c02", "r03c03"}, Provenance::polygon);
    for (bool neighbors : {false, true}) {
        const auto got = near_repeat_pairs(cat, region, adj, 30, neighbors);
        std::size_t want = 0;
        const auto& rs = cat.records();
        for (std::size_t i = 0; i < rs.size(); ++i)
            for (std::size_t j = 0; j < rs.size(); ++j) {
                if (!region.contains(rs[i].site_id) || !region.contains(rs[j].site_id)) continue;
                if (rs[i].crime_type != rs[j].crime_type) continue;
                const auto gap = rs[j].timestamp - rs[i].timestamp;
                if (gap <= std::chrono::minutes{0} || gap >= std::chrono::days{30}) continue;
                const int dr = std::abs(std::stoi(rs[i].site_id.substr(1, 2)) - std::stoi(rs[j].site_id.substr(1, 2)));
                const int dc = std::abs(std::stoi(rs[i].site_id.substr(4, 2)) - std::stoi(rs[j].site_id.substr(4, 2)));
                const bool same = dr == 0 && dc == 0;
                const bool queen = !same && dr <= 1 && dc <= 1;
                want += same || (neighbors && queen);
            }
        CHECK(got.size() == want);
        CHECK(want > 0);
        for (const auto& p : got) {
            CHECK(p.gap_days > 0.0);
            CHECK(p.gap_days < 30.0);
        }
    }
    CHECK_THROWS_AS(near_repeat_pairs(cat, region, adj, 0), InputError);
}
