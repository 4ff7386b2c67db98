#include "crimelens/service.hpp"

#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>

namespace crimelens {

// ---------------------------------------------------------------------------
// JSON shapes

json matrix_json(const Eigen::MatrixXd& m) {
    json data = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

json matrix_json(const Eigen::MatrixXi& m) {
    json data = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

json matrix_json(const CrimeMatrix& m) {
    return {{"rows", m.rows},
            {"cols", m.cols},
            {"data", m.counts},
            {"row_sites", m.row_sites},
            {"col_labels", m.col_labels},
            {"granularity", to_string(m.granularity)}};
}

namespace {

json points_json(const std::vector<GeoPoint>& pts) {
    json out = json::array();
    for (const auto& p : pts) out.push_back({p.lon, p.lat});
    return out;
}

json counts_json(const CumulativeCounts& c) {
    return {{"month_of_year", c.by_month_of_year},
            {"day_of_week", c.by_day_of_week},
            {"period_of_day", c.by_period_of_day},
            {"total", c.total}};
}

std::string slice_first_day(const TimeSlicing& slicing, std::size_t i) {
    return format_date(std::chrono::floor<std::chrono::days>(slicing.slices().at(i).begin));
}

std::string slice_last_day(const TimeSlicing& slicing, std::size_t i) {
    return format_date(std::chrono::floor<std::chrono::days>(slicing.slices().at(i).end) - std::chrono::days{1});
}

}  // namespace

json region_json(const Region& r) {
    json out = {{"sites", r.site_ids}, {"provenance", to_string(r.provenance)}, {"source", points_json(r.source)}};
    if (!r.address.empty()) out["address"] = r.address;
    return out;
}

json filter_json(const FilterState& f, const TimeSlicing& slicing) {
    json out;
    out["region"] = region_json(f.region);
    if (f.time_window) {
        out["time_window"] = {{"first", f.time_window->first},
                              {"last", f.time_window->last},
                              {"start", slice_first_day(slicing, f.time_window->first)},
                              {"end", slice_last_day(slicing, f.time_window->last)}};
    } else {
        out["time_window"] = nullptr;
    }
    out["excluded_years"] = f.excluded_years;
    out["excluded_types"] = f.excluded_types;
    out["site"] = f.selected_site ? json(*f.selected_site) : json(nullptr);
    out["hotspot"] = f.selected_hotspot ? json(*f.selected_hotspot) : json(nullptr);
    out["granularity"] = to_string(slicing.granularity());
    return out;
}

json global_json(const std::vector<std::int64_t>& series, const TimeSlicing& slicing) {
    json labels = json::array();
    for (std::size_t i = 0; i < slicing.size(); ++i) labels.push_back(slicing.label(i));
    std::int64_t total = 0;
    for (auto v : series) total += v;
    return {{"granularity", to_string(slicing.granularity())}, {"labels", labels}, {"counts", series}, {"total", total}};
}

json cumulative_json(const CumulativeSeries& s) {
    json out = {{"base", counts_json(s.base)}};
    out["overlay"] = s.overlay ? counts_json(*s.overlay) : json(nullptr);
    return out;
}

json ranking_json(const RankingSeries& s, const TimeSlicing& slicing) {
    json labels = json::array();
    for (std::size_t i = 0; i < s.slices; ++i) labels.push_back(slicing.label(s.first_slice + i));
    json types = json::array();
    for (const auto& t : s.types)
        types.push_back({{"type", t.crime_type}, {"total", t.window_total}, {"rank", t.rank}, {"count", t.count}});
    return {{"first_slice", s.first_slice}, {"labels", labels}, {"types", types}};
}

json radial_json(const RadialSeries& s) {
    json types = json::array();
    for (const auto& t : s.types) {
        json grid = json::array();
        for (const auto& row : t.grid) grid.push_back(row);
        types.push_back({{"type", t.crime_type},
                         {"years", t.years},
                         {"grid", grid},
                         {"total", t.total},
                         {"share_percent", t.share_percent}});
    }
    return {{"types", types}};
}

json choropleth_json(const std::vector<std::pair<std::string, std::int64_t>>& counts) {
    json sites = json::array();
    std::int64_t max = 0, total = 0;
    for (const auto& [id, c] : counts) {
        sites.push_back({{"site_id", id}, {"count", c}});
        max = std::max(max, c);
        total += c;
    }
    return {{"sites", sites}, {"max", max}, {"total", total}};
}

json model_json(const HotspotModel& model, const CrimeMatrix& X) {
    json hotspots = json::array();
    for (std::size_t h = 0; h < model.memberships.size(); ++h) {
        const auto g = gauge(model, h, X);
        hotspots.push_back({{"index", h},
                            {"sites", model.memberships[h].sites},
                            {"noise", model.is_noise(h)},
                            {"relative_strength", model.relative_strength(h)},
                            {"gauge",
                             {{"crime_count", g.crime_count},
                              {"frequency", g.frequency},
                              {"rate_of_crimes", g.rate_of_crimes},
                              {"importance", g.importance},
                              {"degenerate", g.degenerate}}}});
    }
    const auto& c = model.config;
    json config = {{"rank", c.rank},
                   {"sparsity_w", c.sparsity_w},
                   {"row_sparsity_w", c.row_sparsity_w},
                   {"sparsity_h", model.sparsity_h},
                   {"max_iters", c.max_iters},
                   {"rel_tol", c.rel_tol},
                   {"restarts", c.restarts},
                   {"seed", c.seed}};
    return {{"k", model.rank()},
            {"granularity", to_string(X.granularity)},
            {"row_sites", model.row_sites},
            {"col_labels", model.col_labels},
            {"W", matrix_json(model.W)},
            {"H", matrix_json(model.H)},
            {"H_bin", matrix_json(model.H_bin)},
            {"hotspots", hotspots},
            {"labels", nmf_site_labels(model)},
            {"objective", model.objective},
            {"penalized_objective", model.penalized_objective},
            {"restart_objectives", model.restart_objectives},
            {"restart_residuals", model.restart_residuals},
            {"best_restart", model.best_restart},
            {"degenerate", model.degenerate},
            {"config", config}};
}

json gi_star_json(const GiStarResult& r, const std::vector<double>& values) {
    json sites = json::array();
    for (std::size_t i = 0; i < r.sites.size(); ++i) {
        const auto& s = r.sites[i];
        sites.push_back({{"site_id", s.site_id},
                         {"value", values.at(i)},
                         {"z", s.z_score},
                         {"p", s.p_value},
                         {"hotspot", s.hotspot}});
    }
    return {{"confidence", r.confidence}, {"critical_z", r.critical_z}, {"p_values", "normal approximation"},
            {"sites", sites}};
}

json ssi_json(const SsiReport& r) {
    json cats = json::array();
    for (auto c : r.categories) cats.push_back(std::string(1, static_cast<char>(c)));
    return {{"sites", r.sites},
            {"categories", cats},
            {"counts", {{"P", r.counts.p}, {"F", r.counts.f}, {"G", r.counts.g}, {"N", r.counts.n}}},
            {"ssi", r.ssi}};
}

json comparison_json(const ComparisonReport& r) {
    json clusters = json::array();
    for (const auto& c : r.clusters) {
        json entry = ssi_json(c.report);
        entry["cluster"] = c.cluster;
        entry["nmf_labels"] = c.nmf_labels;
        entry["gi_labels"] = c.gi_labels;
        clusters.push_back(std::move(entry));
    }
    return {{"rank", r.rank},
            {"confidence", r.confidence},
            {"clusters", clusters},
            {"skipped", r.skipped},
            {"mean_ssi", r.mean_ssi},
            {"min_ssi", r.min_ssi},
            {"histogram",
             {{"low", r.histogram.low}, {"width", r.histogram.width}, {"bins", r.histogram.bins},
              {"below", r.histogram.below}}}};
}

// ---------------------------------------------------------------------------
// Configuration and dataset

ServiceConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw InputError("config " + path.string() + ": " + e.what());
    }
    const auto base = path.parent_path();
    auto resolve = [&](const std::string& p) {
        std::filesystem::path fp(p);
        return fp.is_absolute() ? fp : base / fp;
    };
    ServiceConfig cfg;
    try {
        if (!j.contains("geometry") || !j.contains("records"))
            throw InputError("config needs 'geometry' and 'records'");
        cfg.geometry = resolve(j.at("geometry").get<std::string>());
        cfg.records = resolve(j.at("records").get<std::string>());
        if (j.contains("type_groups")) cfg.type_groups = resolve(j["type_groups"].get<std::string>());
        if (j.contains("geocoder")) cfg.geocoder = resolve(j["geocoder"].get<std::string>());
        cfg.dataset_label = j.value("label", cfg.dataset_label);
        cfg.host = j.value("host", cfg.host);
        cfg.port = j.value("port", cfg.port);
        cfg.session_ttl = std::chrono::seconds{j.value("session_ttl_seconds", 3600)};
        if (j.contains("defaults")) {
            const auto& d = j["defaults"];
            cfg.granularity = granularity_from_string(d.value("granularity", std::string("month")));
            cfg.nmf.rank = d.value("rank", cfg.nmf.rank);
            cfg.nmf.restarts = d.value("restarts", cfg.nmf.restarts);
            cfg.nmf.seed = d.value("seed", cfg.nmf.seed);
            cfg.confidence = d.value("confidence", cfg.confidence);
            cfg.top_types = d.value("top_types", cfg.top_types);
            cfg.buffer_m = d.value("buffer_m", cfg.buffer_m);
        }
    } catch (const json::exception& e) {
        throw InputError("config " + path.string() + ": " + e.what());
    }
    return cfg;
}

std::optional<std::filesystem::path> resolve_config_path(const std::optional<std::filesystem::path>& explicit_path) {
    if (explicit_path) return explicit_path;
    if (const char* env = std::getenv(kConfigEnv); env && *env) return std::filesystem::path(env);
    return std::nullopt;
}

std::shared_ptr<const Dataset> load_dataset(const ServiceConfig& cfg, IngestReport* report) {
    std::ifstream geo(cfg.geometry);
    if (!geo) throw InputError("cannot open geometry " + cfg.geometry.string());
    auto geometry = SiteGeometrySet::from_geojson(geo);
    auto adjacency = build_adjacency(geometry);

    std::ifstream rec(cfg.records);
    if (!rec) throw InputError("cannot open records " + cfg.records.string());
    IngestOptions opt;
    opt.label = cfg.dataset_label;
    auto ingested = ingest_records(rec, geometry, opt);
    if (report) *report = ingested.report;

    CrimeCatalog catalog = std::move(ingested.catalog);
    if (cfg.type_groups) {
        std::ifstream groups(*cfg.type_groups);
        if (!groups) throw InputError("cannot open type groups " + cfg.type_groups->string());
        catalog = CrimeCatalog(catalog.records(), catalog.date_range(), catalog.label(), parse_type_groups(groups));
    }
    std::shared_ptr<const Geocoder> geocoder;
    if (cfg.geocoder) {
        std::ifstream table(*cfg.geocoder);
        if (!table) throw InputError("cannot open geocoder table " + cfg.geocoder->string());
        geocoder = std::make_shared<TableGeocoder>(TableGeocoder::from_stream(table));
    }
    return std::make_shared<const Dataset>(
        Dataset{std::move(geometry), std::move(adjacency), std::move(catalog), std::move(geocoder)});
}

// ---------------------------------------------------------------------------
// Sessions

SessionStore::SessionStore(std::chrono::seconds ttl, Clock clock) : ttl_(ttl), clock_(std::move(clock)) {}

void SessionStore::expire_locked(std::chrono::steady_clock::time_point now) {
    for (auto it = sessions_.begin(); it != sessions_.end();) {
        if (now - it->second->last_access > ttl_) it = sessions_.erase(it);
        else ++it;
    }
}

std::shared_ptr<SessionState> SessionStore::create(SessionFilter initial, NmfConfig nmf) {
    static thread_local std::mt19937_64 rng{std::random_device{}()};
    std::lock_guard lock(mutex_);
    const auto now = clock_();
    expire_locked(now);
    auto s = std::make_shared<SessionState>();
    char id[40];
    std::snprintf(id, sizeof id, "s%llu-%08llx", static_cast<unsigned long long>(++counter_),
                  static_cast<unsigned long long>(rng() & 0xffffffffULL));
    s->id = id;
    s->filter = std::move(initial);
    s->nmf = nmf;
    s->last_access = now;
    sessions_[s->id] = s;
    return s;
}

std::shared_ptr<SessionState> SessionStore::find(const std::string& id) {
    std::lock_guard lock(mutex_);
    const auto now = clock_();
    expire_locked(now);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw ApiError(404, "unknown_session", "unknown or expired session '" + id + "'");
    it->second->last_access = now;
    return it->second;
}

bool SessionStore::erase(const std::string& id) {
    std::lock_guard lock(mutex_);
    return sessions_.erase(id) > 0;
}

std::size_t SessionStore::size() {
    std::lock_guard lock(mutex_);
    expire_locked(clock_());
    return sessions_.size();
}

// ---------------------------------------------------------------------------
// Api

namespace {

GeoPoint point_of(const json& j) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
        throw ApiError(400, "invalid_geometry", "expected a [lon, lat] pair");
    return {j[0].get<double>(), j[1].get<double>()};
}

std::vector<GeoPoint> path_of(const json& j) {
    if (!j.is_array()) throw ApiError(400, "invalid_geometry", "expected an array of [lon, lat] pairs");
    std::vector<GeoPoint> out;
    for (const auto& p : j) out.push_back(point_of(p));
    return out;
}

std::size_t query_size(const std::map<std::string, std::string>& q, const std::string& key, std::size_t fallback) {
    auto it = q.find(key);
    if (it == q.end()) return fallback;
    try {
        const long v = std::stol(it->second);
        if (v < 0) throw std::invalid_argument("negative");
        return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
        throw ApiError(400, "invalid_request", "query parameter '" + key + "' must be a non-negative integer");
    }
}

std::chrono::sys_days date_of(const json& j, const char* what) {
    if (!j.is_string()) throw ApiError(400, "invalid_request", std::string(what) + " must be a YYYY-MM-DD string");
    auto d = parse_date(j.get<std::string>());
    if (!d) throw ApiError(400, "invalid_request", std::string(what) + ": bad date '" + j.get<std::string>() + "'");
    return *d;
}

}  // namespace

Api::Api(std::shared_ptr<const Dataset> dataset, ServiceConfig config, SessionStore::Clock clock)
    : dataset_(std::move(dataset)), config_(std::move(config)), sessions_(config_.session_ttl, std::move(clock)) {}

TimeSlicing Api::slicing_for(const std::map<std::string, std::string>& query) const {
    Granularity g = config_.granularity;
    if (auto it = query.find("granularity"); it != query.end()) {
        try {
            g = granularity_from_string(it->second);
        } catch (const InputError& e) {
            throw ApiError(400, "invalid_request", e.what());
        }
    }
    return TimeSlicing(g, dataset_->catalog.date_range());
}

FilterState Api::filter_state(const SessionState& s, const TimeSlicing& slicing) const {
    FilterState f = make_filter(s.filter.region);
    if (s.filter.window) {
        const auto first = slicing.index_of(Timestamp{s.filter.window->start});
        const auto last = slicing.index_of(Timestamp{s.filter.window->end});
        f.time_window = SliceWindow{first.value_or(0), last.value_or(slicing.size() - 1)};
    }
    f.excluded_years = s.filter.excluded_years;
    f.excluded_types = s.filter.excluded_types;
    f.selected_site = s.filter.selected_site;
    if (s.filter.selected_hotspot && s.hotspots) {
        const auto& mem = s.hotspots->model.memberships.at(*s.filter.selected_hotspot);
        f.selected_hotspot = s.filter.selected_hotspot;
        f.hotspot_sites = std::set<std::string>(mem.sites.begin(), mem.sites.end());
    }
    return f;
}

json Api::create_session() {
    SessionFilter initial;
    initial.region = make_region(dataset_->geometry.ids(), Provenance::polygon);
    auto s = sessions_.create(std::move(initial), config_.nmf);
    return {{"session", s->id}, {"dataset", dataset_->catalog.label()}, {"records", dataset_->catalog.size()},
            {"sites", dataset_->geometry.size()},
            {"date_range",
             {{"start", format_date(dataset_->catalog.date_range().start)},
              {"end", format_date(dataset_->catalog.date_range().end)}}}};
}

void Api::delete_session(const std::string& session) {
    if (!sessions_.erase(session)) throw ApiError(404, "unknown_session", "unknown session '" + session + "'");
}

json Api::select(const std::string& session, const json& body) {
    auto s = sessions_.find(session);
    std::lock_guard lock(s->mutex);
    const auto& geo = dataset_->geometry;
    const std::string mode = body.value("mode", std::string());
    if (!body.contains("geometry")) throw ApiError(400, "invalid_request", "missing 'geometry'");
    const auto& g = body["geometry"];
    Region region;
    try {
        if (mode == "point") {
            region = select_by_point(geo, point_of(g));
        } else if (mode == "polyline") {
            const auto path = path_of(g);
            region = select_by_polyline(geo, path, body.value("buffer_m", config_.buffer_m));
        } else if (mode == "polygon") {
            region = select_by_polygon(geo, path_of(g));
        } else if (mode == "address") {
            if (!dataset_->geocoder) throw ApiError(400, "no_geocoder", "no geocoder table configured");
            if (!g.is_string()) throw ApiError(400, "invalid_geometry", "address selection needs a string");
            region = select_by_address(geo, *dataset_->geocoder, g.get<std::string>());
        } else {
            throw ApiError(400, "invalid_request", "mode must be point, polyline, polygon or address");
        }
        const int rings = body.value("expand_rings", 0);
        if (rings < 0) throw ApiError(400, "invalid_request", "expand_rings must be >= 0");
        region = expand_region(region, dataset_->adjacency, rings);
    } catch (const SelectionError& e) {
        throw ApiError(400, "invalid_geometry", e.what());
    }
    s->filter.region = region;
    if (s->filter.selected_site && !region.contains(*s->filter.selected_site)) s->filter.selected_site.reset();
    return region_json(region);
}

json Api::filter(const std::string& session, const json& body) {
    auto s = sessions_.find(session);
    std::lock_guard lock(s->mutex);
    if (!body.is_object()) throw ApiError(400, "invalid_request", "filter body must be an object");
    const TimeSlicing slicing(config_.granularity, dataset_->catalog.date_range());
    SessionFilter next = s->filter;

    if (body.contains("time_window")) {
        const auto& w = body["time_window"];
        if (w.is_null()) {
            next.window.reset();
        } else if (w.contains("first") && w.contains("last")) {
            const auto first = w["first"].get<long>(), last = w["last"].get<long>();
            if (first < 0 || last < first || static_cast<std::size_t>(last) >= slicing.size())
                throw ApiError(400, "invalid_request", "time_window slice indices outside the slicing");
            const auto& sl = slicing.slices();
            next.window = DateRange{std::chrono::floor<std::chrono::days>(sl[static_cast<std::size_t>(first)].begin),
                                    std::chrono::floor<std::chrono::days>(sl[static_cast<std::size_t>(last)].end) -
                                        std::chrono::days{1}};
        } else if (w.contains("start") && w.contains("end")) {
            const DateRange r{date_of(w["start"], "time_window.start"), date_of(w["end"], "time_window.end")};
            const auto& full = dataset_->catalog.date_range();
            if (r.start > r.end || r.start < full.start || r.end > full.end)
                throw ApiError(400, "invalid_request", "time_window outside the dataset range");
            next.window = r;
        } else {
            throw ApiError(400, "invalid_request", "time_window needs {first, last} or {start, end}");
        }
    }
    try {
        if (body.contains("excluded_years")) next.excluded_years = body["excluded_years"].get<std::set<int>>();
        if (body.contains("excluded_types")) {
            next.excluded_types.clear();
            for (const auto& t : body["excluded_types"]) next.excluded_types.insert(normalize_type(t.get<std::string>()));
        }
    } catch (const json::exception& e) {
        throw ApiError(400, "invalid_request", e.what());
    }
    if (body.contains("site")) {
        if (body["site"].is_null()) {
            next.selected_site.reset();
        } else {
            const auto id = body["site"].get<std::string>();
            if (!next.region.contains(id)) throw ApiError(400, "invalid_request", "site '" + id + "' is not in the region");
            next.selected_site = id;
        }
    }
    if (body.contains("hotspot")) {
        if (body["hotspot"].is_null()) {
            next.selected_hotspot.reset();
        } else {
            const auto h = body["hotspot"].get<long>();
            if (!s->hotspots) throw ApiError(409, "no_hotspots", "recompute hotspots before selecting one");
            if (h < 0 || h >= s->hotspots->model.rank())
                throw ApiError(400, "invalid_request", "hotspot index out of range");
            next.selected_hotspot = static_cast<std::size_t>(h);
        }
    }
    s->filter = std::move(next);
    return filter_json(filter_state(*s, slicing), slicing);
}

json Api::current_filter(const std::string& session) {
    auto s = sessions_.find(session);
    std::lock_guard lock(s->mutex);
    const TimeSlicing slicing(config_.granularity, dataset_->catalog.date_range());
    return filter_json(filter_state(*s, slicing), slicing);
}

json Api::aggregates(const std::string& session, const std::string& kind,
                     const std::map<std::string, std::string>& query) {
    auto s = sessions_.find(session);
    std::lock_guard lock(s->mutex);
    const TimeSlicing slicing = slicing_for(query);
    const FilterState f = filter_state(*s, slicing);
    const auto& cat = dataset_->catalog;
    const std::size_t top = query_size(query, "top", config_.top_types);
    if (kind == "global") return global_json(global_series(cat, slicing, f), slicing);
    if (kind == "cumulative") {
        // Base: the whole region; overlay: the region under every active facet.
        const FilterState base = make_filter(f.region);
        return cumulative_json(cumulative_series(cat, slicing, base, f));
    }
    if (kind == "ranking") return ranking_json(ranking_series(cat, slicing, f, top), slicing);
    if (kind == "radial") return radial_json(radial_series(cat, slicing, f, top));
    throw ApiError(404, "not_found", "unknown aggregate '" + kind + "'");
}

json Api::recompute_hotspots(const std::string& session, const json& body) {
    auto s = sessions_.find(session);
    std::lock_guard lock(s->mutex);
    NmfConfig cfg = s->nmf;
    cfg.rank = body.value("k", cfg.rank);
    if (body.contains("seed")) cfg.seed = body["seed"].get<std::uint64_t>();
    if (body.contains("restarts")) cfg.restarts = body["restarts"].get<int>();
    std::map<std::string, std::string> q;
    if (body.contains("granularity")) q["granularity"] = body["granularity"].get<std::string>();
    const TimeSlicing slicing = slicing_for(q);

    // The snapshot at click time; a selected site or hotspot narrows the
    // other views, not the factorized region.
    FilterState f = filter_state(*s, slicing);
    f.selected_site.reset();
    f.selected_hotspot.reset();
    f.hotspot_sites.reset();
    CrimeMatrix X = build_matrix(dataset_->catalog, slicing, f);
    const auto limit = std::min(X.rows, X.cols);
    if (cfg.rank < 1 || static_cast<std::size_t>(cfg.rank) > limit)
        throw ApiError(400, "invalid_rank",
                       "k = " + std::to_string(cfg.rank) + " must lie in [1, " + std::to_string(limit) + "]");
    HotspotModel model = factorize(X, cfg);
    json out = model_json(model, X);
    s->hotspots = CachedHotspots{std::move(model), std::move(X), slicing.granularity()};
    s->filter.selected_hotspot.reset();
    return out;
}

json Api::hotspots(const std::string& session) {
    auto s = sessions_.find(session);
    std::lock_guard lock(s->mutex);
    if (!s->hotspots) throw ApiError(409, "no_hotspots", "no hotspot model computed yet");
    return model_json(s->hotspots->model, s->hotspots->matrix);
}

json Api::choropleth(const std::string& session, const std::map<std::string, std::string>& query) {
    auto s = sessions_.find(session);
    std::lock_guard lock(s->mutex);
    const TimeSlicing slicing = slicing_for(query);
    return choropleth_json(crimelens::choropleth(dataset_->catalog, slicing, filter_state(*s, slicing)));
}

json Api::compare(const std::string& session, const json& body) {
    auto s = sessions_.find(session);
    std::lock_guard lock(s->mutex);
    NmfConfig cfg = s->nmf;
    cfg.rank = body.value("k", cfg.rank);
    const double confidence = body.value("confidence", config_.confidence);
    if (!(confidence > 0.0 && confidence < 1.0))
        throw ApiError(400, "invalid_request", "confidence must lie in (0, 1)");
    const TimeSlicing slicing(config_.granularity, dataset_->catalog.date_range());
    FilterState f = filter_state(*s, slicing);
    f.selected_site.reset();
    f.hotspot_sites.reset();
    const CrimeMatrix X = build_matrix(dataset_->catalog, slicing, f);
    if (X.rows < 3) throw ApiError(400, "region_too_small", "comparison needs at least 3 sites");
    if (cfg.rank < 1 || static_cast<std::size_t>(cfg.rank) > std::min(X.rows, X.cols))
        throw ApiError(400, "invalid_rank", "k exceeds min(sites, slices)");

    const auto local = dataset_->adjacency.restricted_to(X.row_sites);
    const auto nmf = nmf_site_labels(factorize(X, cfg));
    std::vector<double> totals;
    for (auto t : X.row_totals()) totals.push_back(static_cast<double>(t));
    const auto gi = gi_star(X.row_sites, totals, local, confidence);
    json out = ssi_json(ssi_compare(X.row_sites, nmf, gi.labels()));
    out["k"] = cfg.rank;
    out["confidence"] = confidence;
    out["nmf_labels"] = nmf;
    out["gi_star"] = gi_star_json(gi, totals);
    return out;
}

ApiResponse Api::handle(const std::string& method, const std::string& path, const std::string& session,
                        const std::string& body, const std::map<std::string, std::string>& query) {
    try {
        json in = json::object();
        if (!body.empty()) {
            try {
                in = json::parse(body);
            } catch (const json::parse_error& e) {
                throw ApiError(400, "invalid_json", e.what());
            }
        }
        const std::string agg = "/aggregates/";
        if (method == "POST" && path == "/sessions") return {201, create_session()};
        if (method == "DELETE" && path == "/sessions") {
            delete_session(session);
            return {200, {{"deleted", session}}};
        }
        if (method == "POST" && path == "/select") return {200, select(session, in)};
        if (method == "POST" && path == "/filter") return {200, filter(session, in)};
        if (method == "GET" && path == "/filter") return {200, current_filter(session)};
        if (method == "GET" && path.rfind(agg, 0) == 0) return {200, aggregates(session, path.substr(agg.size()), query)};
        if (method == "POST" && path == "/hotspots/recompute") return {200, recompute_hotspots(session, in)};
        if (method == "GET" && path == "/hotspots") return {200, hotspots(session)};
        if (method == "GET" && path == "/choropleth") return {200, choropleth(session, query)};
        if (method == "POST" && path == "/compare") return {200, compare(session, in)};
        throw ApiError(404, "not_found", method + " " + path + " is not an endpoint");
    } catch (const ApiError& e) {
        return {e.status(), e.body()};
    } catch (const InputError& e) {
        return {400, {{"code", "invalid_request"}, {"message", e.what()}}};
    } catch (const json::exception& e) {
        return {400, {{"code", "invalid_request"}, {"message", e.what()}}};
    } catch (const std::exception& e) {
        return {500, {{"code", "internal"}, {"message", e.what()}}};
    }
}

}  // namespace crimelens
