#include <chrono>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "crimelens/service.hpp"

namespace fs = std::filesystem;
using namespace crimelens;

namespace {

struct DataArgs {
    std::string config;
    std::string geometry;
    std::string records;
    std::string groups;
    std::string label = "all";
};

struct FilterArgs {
    std::string region_file;
    std::string start, end;
    std::vector<int> exclude_years;
    std::vector<std::string> exclude_types;
    std::string site;
    std::string granularity = "month";
};

void add_data_options(CLI::App* cmd, DataArgs& a) {
    cmd->add_option("--config", a.config, "service config (JSON); overrides the file options")
        ->envname(kConfigEnv);
    cmd->add_option("--geometry", a.geometry, "site polygons (GeoJSON FeatureCollection)");
    cmd->add_option("--records", a.records, "crime records CSV (site_id,crime_type,timestamp)");
    cmd->add_option("--groups", a.groups, "type group table (crime_type = group)");
    cmd->add_option("--label", a.label, "dataset label");
}

void add_filter_options(CLI::App* cmd, FilterArgs& f) {
    cmd->add_option("--region", f.region_file, "site ids, one per line (default: all sites)");
    cmd->add_option("--start", f.start, "window start, YYYY-MM-DD");
    cmd->add_option("--end", f.end, "window end, YYYY-MM-DD");
    cmd->add_option("--exclude-year", f.exclude_years, "drop a year (repeatable)");
    cmd->add_option("--exclude-type", f.exclude_types, "drop a crime type (repeatable)");
    cmd->add_option("--site", f.site, "restrict to one site of the region");
    cmd->add_option("--granularity", f.granularity, "month or day")->check(CLI::IsMember({"month", "day"}));
}

ServiceConfig config_from(const DataArgs& a) {
    if (!a.config.empty()) return load_config(a.config);
    if (a.geometry.empty() || a.records.empty()) throw InputError("need --geometry and --records, or --config");
    ServiceConfig cfg;
    cfg.geometry = a.geometry;
    cfg.records = a.records;
    if (!a.groups.empty()) cfg.type_groups = fs::path(a.groups);
    cfg.dataset_label = a.label;
    return cfg;
}

std::vector<std::string> read_region_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open region file " + path);
    std::vector<std::string> ids;
    std::string line;
    while (std::getline(in, line)) {
        const auto b = line.find_first_not_of(" \t\r");
        if (b == std::string::npos || line[b] == '#') continue;
        const auto e = line.find_last_not_of(" \t\r");
        ids.push_back(line.substr(b, e - b + 1));
    }
    return ids;
}

Region region_from(const FilterArgs& f, const SiteGeometrySet& geo) {
    if (f.region_file.empty()) return make_region(geo.ids(), Provenance::polygon);
    auto ids = read_region_file(f.region_file);
    for (const auto& id : ids)
        if (!geo.contains(id)) throw InputError("region file names unknown site " + id);
    return make_region(std::move(ids), Provenance::polygon);
}

FilterState filter_from(const FilterArgs& f, const Dataset& d, const TimeSlicing& slicing) {
    FilterState state = make_filter(region_from(f, d.geometry));
    if (!f.start.empty() || !f.end.empty()) {
        const auto range = d.catalog.date_range();
        auto start = f.start.empty() ? std::optional(range.start) : parse_date(f.start);
        auto end = f.end.empty() ? std::optional(range.end) : parse_date(f.end);
        if (!start || !end) throw InputError("bad --start/--end date");
        const auto first = slicing.index_of(Timestamp{*start});
        const auto last = slicing.index_of(Timestamp{*end});
        if (!first || !last || *first > *last) throw InputError("window outside the dataset range");
        state.time_window = SliceWindow{*first, *last};
    }
    state.excluded_years.insert(f.exclude_years.begin(), f.exclude_years.end());
    for (const auto& t : f.exclude_types) state.excluded_types.insert(normalize_type(t));
    if (!f.site.empty()) {
        if (!state.region.contains(f.site)) throw InputError("--site is not in the region");
        state.selected_site = f.site;
    }
    return state;
}

void write_output(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path);
    out << text;
}

void write_corpus(const SyntheticCorpus& c, const fs::path& dir) {
    fs::create_directories(dir);
    std::ofstream geo(dir / "sites.geojson");
    c.geometry.write_geojson(geo);
    std::ofstream rec(dir / "records.csv");
    write_records_csv(rec, c.catalog);
    std::ofstream roles(dir / "roles.json");
    roles << json(c.roles).dump(2) << "\n";
}

extern "C" void on_signal(int) { stop_server(); }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"crimelens: crime hotspot analytics"};
    app.require_subcommand(1);

    // ingest
    DataArgs ingest_data;
    std::string ingest_out, split_dir, ingest_start, ingest_end;
    auto* ingest = app.add_subcommand("ingest", "validate a record file and report rejections");
    ingest->add_option("--geometry", ingest_data.geometry)->required();
    ingest->add_option("--records", ingest_data.records)->required();
    ingest->add_option("--groups", ingest_data.groups, "category table used by --split-dir");
    ingest->add_option("--label", ingest_data.label);
    ingest->add_option("--start", ingest_start, "declared range start, YYYY-MM-DD");
    ingest->add_option("--end", ingest_end, "declared range end, YYYY-MM-DD");
    ingest->add_option("--out", ingest_out, "write accepted records here");
    ingest->add_option("--split-dir", split_dir, "write one CSV per category");

    // synth
    bool fig4 = false, city = false;
    std::uint64_t synth_seed = 0;
    std::string synth_out = "synthetic";
    auto* synth = app.add_subcommand("synth", "write a synthetic corpus (sites.geojson, records.csv, roles.json)");
    auto* fig4_flag = synth->add_flag("--fig4", fig4, "5x5 region with the four planted archetypes");
    synth->add_flag("--city", city, "400-site desk-scale city")->excludes(fig4_flag);
    synth->add_option("--seed", synth_seed);
    synth->add_option("--out-dir", synth_out);

    // hotspot
    DataArgs hot_data;
    FilterArgs hot_filter;
    NmfConfig hot_cfg;
    std::string hot_out;
    auto* hotspot = app.add_subcommand("hotspot", "sparse NMF hotspots for a region, as model JSON");
    add_data_options(hotspot, hot_data);
    add_filter_options(hotspot, hot_filter);
    hotspot->add_option("--k", hot_cfg.rank, "number of hotspots");
    hotspot->add_option("--restarts", hot_cfg.restarts);
    hotspot->add_option("--seed", hot_cfg.seed);
    hotspot->add_option("--out", hot_out);

    // gistar
    DataArgs gi_data;
    FilterArgs gi_filter;
    double gi_conf = 0.99;
    std::string gi_out;
    auto* gistar = app.add_subcommand("gistar", "Getis-Ord Gi* on per-site totals, as CSV");
    add_data_options(gistar, gi_data);
    add_filter_options(gistar, gi_filter);
    gistar->add_option("--confidence", gi_conf)->check(CLI::Range(0.5, 0.9999));
    gistar->add_option("--out", gi_out);

    // compare
    DataArgs cmp_data;
    std::size_t cmp_clusters = 300;
    NmfConfig cmp_cfg;
    double cmp_conf = 0.99;
    std::uint64_t cmp_kseed = 0;
    std::string cmp_json;
    auto* compare = app.add_subcommand("compare", "NMF vs Gi* agreement over k-means regions");
    add_data_options(compare, cmp_data);
    compare->add_option("--clusters", cmp_clusters, "number of k-means regions");
    compare->add_option("--k", cmp_cfg.rank);
    compare->add_option("--seed", cmp_cfg.seed, "NMF seed");
    compare->add_option("--kmeans-seed", cmp_kseed);
    compare->add_option("--confidence", cmp_conf);
    compare->add_option("--json", cmp_json, "write the full report here");

    // aggregate
    DataArgs agg_data;
    FilterArgs agg_filter;
    std::string agg_kind = "global";
    std::size_t agg_top = kDefaultTopTypes;
    auto* aggregate = app.add_subcommand("aggregate", "one view aggregate under a filter, as JSON");
    add_data_options(aggregate, agg_data);
    add_filter_options(aggregate, agg_filter);
    aggregate->add_option("--kind", agg_kind)->check(CLI::IsMember({"global", "cumulative", "ranking", "radial", "choropleth"}));
    aggregate->add_option("--top", agg_top);

    // near-repeat
    DataArgs nr_data;
    FilterArgs nr_filter;
    int nr_window = 30;
    bool nr_neighbors = false;
    std::string nr_type, nr_out;
    auto* near = app.add_subcommand("near-repeat", "same-type event pairs close in time, as CSV");
    add_data_options(near, nr_data);
    near->add_option("--region", nr_filter.region_file);
    near->add_option("--window", nr_window, "days")->check(CLI::PositiveNumber);
    near->add_flag("--neighbors", nr_neighbors, "pair across queen-adjacent sites too");
    near->add_option("--type", nr_type, "restrict to one crime type");
    near->add_option("--out", nr_out);

    // serve
    DataArgs srv_data;
    int srv_port = 0;
    std::string srv_host;
    auto* serve = app.add_subcommand("serve", "start the HTTP API");
    add_data_options(serve, srv_data);
    serve->add_option("--port", srv_port, "overrides the config port");
    serve->add_option("--host", srv_host);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*ingest) {
            std::ifstream geo_in(ingest_data.geometry);
            if (!geo_in) throw InputError("cannot open " + ingest_data.geometry);
            const auto geometry = SiteGeometrySet::from_geojson(geo_in);
            std::ifstream rec(ingest_data.records);
            if (!rec) throw InputError("cannot open " + ingest_data.records);
            IngestOptions opt;
            opt.label = ingest_data.label;
            if (!ingest_start.empty() || !ingest_end.empty()) {
                auto s = parse_date(ingest_start), e = parse_date(ingest_end);
                if (!s || !e) throw InputError("--start and --end must both be YYYY-MM-DD");
                opt.declared_range = DateRange{*s, *e};
            }
            auto result = ingest_records(rec, geometry, opt);
            std::cout << result.report.summary();
            for (const auto& r : result.report.rejected) std::cerr << "line " << r.line << ": " << r.reason << "\n";
            if (!ingest_out.empty()) {
                std::ofstream out(ingest_out);
                write_records_csv(out, result.catalog);
            }
            if (!split_dir.empty()) {
                if (ingest_data.groups.empty()) throw InputError("--split-dir needs --groups");
                std::ifstream g(ingest_data.groups);
                if (!g) throw InputError("cannot open " + ingest_data.groups);
                const auto map = parse_type_groups(g);
                fs::create_directories(split_dir);
                for (const auto& part : split_by_category(result.catalog, map)) {
                    std::ofstream out(fs::path(split_dir) / (part.label() + ".csv"));
                    write_records_csv(out, part);
                    std::cout << part.label() << ": " << part.size() << "\n";
                }
            }
        } else if (*synth) {
            if (!fig4 && !city) throw InputError("choose --fig4 or --city");
            const auto corpus = fig4 ? synth_region(synth_seed) : synth_city(synth_seed);
            write_corpus(corpus, synth_out);
            std::cout << corpus.geometry.size() << " sites, " << corpus.catalog.size() << " records -> " << synth_out
                      << "\n";
        } else if (*hotspot) {
            const auto d = load_dataset(config_from(hot_data));
            const TimeSlicing slicing(granularity_from_string(hot_filter.granularity), d->catalog.date_range());
            const FilterState f = filter_from(hot_filter, *d, slicing);
            const auto X = build_matrix(d->catalog, slicing, f);
            if (hot_cfg.rank < 1 || static_cast<std::size_t>(hot_cfg.rank) > std::min(X.rows, X.cols))
                throw InputError("--k must lie in [1, min(sites, slices)]");
            write_output(hot_out, model_json(factorize(X, hot_cfg), X).dump(2) + "\n");
        } else if (*gistar) {
            const auto d = load_dataset(config_from(gi_data));
            const TimeSlicing slicing(granularity_from_string(gi_filter.granularity), d->catalog.date_range());
            const FilterState f = filter_from(gi_filter, *d, slicing);
            const auto X = build_matrix(d->catalog, slicing, f);
            std::vector<double> totals;
            for (auto t : X.row_totals()) totals.push_back(static_cast<double>(t));
            const auto r = gi_star(X.row_sites, totals, d->adjacency.restricted_to(X.row_sites), gi_conf);
            std::ostringstream csv;
            csv << "site_id,total,z,p,hotspot\n" << std::setprecision(10);
            for (std::size_t i = 0; i < r.sites.size(); ++i)
                csv << r.sites[i].site_id << ',' << totals[i] << ',' << r.sites[i].z_score << ','
                    << r.sites[i].p_value << ',' << (r.sites[i].hotspot ? 1 : 0) << '\n';
            write_output(gi_out, csv.str());
        } else if (*compare) {
            const auto t0 = std::chrono::steady_clock::now();
            const auto d = load_dataset(config_from(cmp_data));
            KMeansOptions ko;
            ko.clusters = cmp_clusters;
            ko.seed = cmp_kseed;
            const auto clustering = kmeans_regions(d->geometry, ko);
            const TimeSlicing slicing(Granularity::month, d->catalog.date_range());
            const auto report = run_comparison(d->catalog, d->adjacency, clustering, slicing, cmp_cfg, cmp_conf);
            const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            std::cout << "regions compared: " << report.clusters.size() << " (skipped " << report.skipped.size()
                      << " with < 3 sites)\n"
                      << "mean SSI " << report.mean_ssi << ", min SSI " << report.min_ssi << ", " << secs << " s\n"
                      << report.histogram.render();
            if (!cmp_json.empty()) write_output(cmp_json, comparison_json(report).dump(2) + "\n");
        } else if (*aggregate) {
            const auto d = load_dataset(config_from(agg_data));
            const TimeSlicing slicing(granularity_from_string(agg_filter.granularity), d->catalog.date_range());
            const FilterState f = filter_from(agg_filter, *d, slicing);
            json out;
            if (agg_kind == "global") out = global_json(global_series(d->catalog, slicing, f), slicing);
            else if (agg_kind == "cumulative")
                out = cumulative_json(cumulative_series(d->catalog, slicing, make_filter(f.region), f));
            else if (agg_kind == "ranking") out = ranking_json(ranking_series(d->catalog, slicing, f, agg_top), slicing);
            else if (agg_kind == "radial") out = radial_json(radial_series(d->catalog, slicing, f, agg_top));
            else out = choropleth_json(choropleth(d->catalog, slicing, f));
            std::cout << out.dump(2) << "\n";
        } else if (*near) {
            const auto d = load_dataset(config_from(nr_data));
            const Region region = region_from(nr_filter, d->geometry);
            auto pairs = near_repeat_pairs(d->catalog, region, d->adjacency, nr_window, nr_neighbors);
            std::ostringstream csv;
            csv << "first_site,second_site,crime_type,first_time,second_time,gap_days\n";
            std::size_t kept = 0;
            const std::string want = nr_type.empty() ? "" : normalize_type(nr_type);
            for (const auto& p : pairs) {
                if (!want.empty() && p.first.crime_type != want) continue;
                ++kept;
                csv << p.first.site_id << ',' << p.second.site_id << ',' << p.first.crime_type << ','
                    << format_timestamp(p.first.timestamp) << ',' << format_timestamp(p.second.timestamp) << ','
                    << p.gap_days << '\n';
            }
            write_output(nr_out, csv.str());
            std::cerr << kept << " pairs\n";
        } else if (*serve) {
            auto cfg_path = resolve_config_path(srv_data.config.empty() ? std::nullopt
                                                                        : std::optional<fs::path>(srv_data.config));
            ServiceConfig cfg = cfg_path ? load_config(*cfg_path) : config_from(srv_data);
            if (srv_port) cfg.port = srv_port;
            if (!srv_host.empty()) cfg.host = srv_host;
            IngestReport report;
            Api api(load_dataset(cfg, &report), cfg);
            std::cerr << report.summary() << "listening on " << cfg.host << ":" << cfg.port << "\n";
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            run_server(api, cfg.host, cfg.port);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
