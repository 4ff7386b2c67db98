#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include "json.hpp"

#include "crimelens/analytics.hpp"
#include "crimelens/baseline.hpp"
#include "crimelens/hotspot.hpp"
#include "crimelens/spatial.hpp"

namespace crimelens {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// JSON shapes shared by the HTTP API and the CLI. Dates are YYYY-MM-DD,
// matrices are {rows, cols, data} with data in row-major order.

json matrix_json(const Eigen::MatrixXd& m);
json matrix_json(const Eigen::MatrixXi& m);
json matrix_json(const CrimeMatrix& m);
json region_json(const Region& r);
json filter_json(const FilterState& f, const TimeSlicing& slicing);
json global_json(const std::vector<std::int64_t>& series, const TimeSlicing& slicing);
json cumulative_json(const CumulativeSeries& s);
json ranking_json(const RankingSeries& s, const TimeSlicing& slicing);
json radial_json(const RadialSeries& s);
json choropleth_json(const std::vector<std::pair<std::string, std::int64_t>>& counts);
/// Full model export: factors, binarized H, memberships with gauges,
/// objectives and the configuration that produced it.
json model_json(const HotspotModel& model, const CrimeMatrix& X);
json gi_star_json(const GiStarResult& r, const std::vector<double>& values);
json ssi_json(const SsiReport& r);
json comparison_json(const ComparisonReport& r);

// ---------------------------------------------------------------------------
// Configuration

struct ServiceConfig {
    std::filesystem::path geometry;
    std::filesystem::path records;
    std::optional<std::filesystem::path> type_groups;
    std::optional<std::filesystem::path> geocoder;
    std::string dataset_label = "all";
    std::string host = "127.0.0.1";
    int port = 8080;
    std::chrono::seconds session_ttl{3600};
    Granularity granularity = Granularity::month;
    NmfConfig nmf;
    double confidence = 0.99;
    std::size_t top_types = kDefaultTopTypes;
    double buffer_m = kDefaultBufferMeters;
};

inline constexpr const char* kConfigEnv = "CRIMELENS_CONFIG";

/// JSON config file. Relative paths resolve against the file's directory.
ServiceConfig load_config(const std::filesystem::path& path);
/// explicit_path if given, else $CRIMELENS_CONFIG, else nullopt.
std::optional<std::filesystem::path> resolve_config_path(const std::optional<std::filesystem::path>& explicit_path);

/// Everything the sessions share; immutable after loading.
struct Dataset {
    SiteGeometrySet geometry;
    AdjacencyGraph adjacency;
    CrimeCatalog catalog;
    std::shared_ptr<const Geocoder> geocoder;
};

std::shared_ptr<const Dataset> load_dataset(const ServiceConfig& cfg, IngestReport* report = nullptr);

// ---------------------------------------------------------------------------
// Sessions

/// Filter facets kept independent of any slicing, so that aggregates and
/// hotspot runs at different granularities read the same window.
struct SessionFilter {
    Region region;
    std::optional<DateRange> window;
    std::set<int> excluded_years;
    std::set<std::string> excluded_types;
    std::optional<std::string> selected_site;
    std::optional<std::size_t> selected_hotspot;
};

struct CachedHotspots {
    HotspotModel model;
    CrimeMatrix matrix;
    Granularity granularity = Granularity::month;
};

struct SessionState {
    std::string id;
    SessionFilter filter;
    NmfConfig nmf;
    /// Stale by design: only an explicit recompute replaces it.
    std::optional<CachedHotspots> hotspots;
    std::chrono::steady_clock::time_point last_access;
    std::mutex mutex;  // serializes this session's requests
};

/// Error surfaced to clients as {code, message} with an HTTP status.
class ApiError : public std::runtime_error {
public:
    ApiError(int status, std::string code, const std::string& message)
        : std::runtime_error(message), status_(status), code_(std::move(code)) {}
    int status() const { return status_; }
    const std::string& code() const { return code_; }
    json body() const { return {{"code", code_}, {"message", what()}}; }

private:
    int status_;
    std::string code_;
};

class SessionStore {
public:
    using Clock = std::function<std::chrono::steady_clock::time_point()>;

    explicit SessionStore(std::chrono::seconds ttl, Clock clock = std::chrono::steady_clock::now);

    std::shared_ptr<SessionState> create(SessionFilter initial, NmfConfig nmf);
    /// Throws ApiError(404, "unknown_session") for missing or expired ids.
    std::shared_ptr<SessionState> find(const std::string& id);
    bool erase(const std::string& id);
    std::size_t size();

private:
    void expire_locked(std::chrono::steady_clock::time_point now);

    std::chrono::seconds ttl_;
    Clock clock_;
    std::mutex mutex_;
    std::map<std::string, std::shared_ptr<SessionState>> sessions_;
    std::uint64_t counter_ = 0;
};

// ---------------------------------------------------------------------------
// API, usable without HTTP

struct ApiResponse {
    int status = 200;
    json body;
};

class Api {
public:
    Api(std::shared_ptr<const Dataset> dataset, ServiceConfig config,
        SessionStore::Clock clock = std::chrono::steady_clock::now);

    json create_session();
    void delete_session(const std::string& session);

    json select(const std::string& session, const json& body);
    json filter(const std::string& session, const json& body);
    json current_filter(const std::string& session);
    /// kind: global | cumulative | ranking | radial.
    json aggregates(const std::string& session, const std::string& kind,
                    const std::map<std::string, std::string>& query = {});
    json recompute_hotspots(const std::string& session, const json& body);
    /// The cached model, untouched by filter changes.
    json hotspots(const std::string& session);
    json choropleth(const std::string& session, const std::map<std::string, std::string>& query = {});
    json compare(const std::string& session, const json& body);

    /// Routes a request; never throws. Errors come back as {code, message}.
    ApiResponse handle(const std::string& method, const std::string& path, const std::string& session,
                       const std::string& body, const std::map<std::string, std::string>& query = {});

    const ServiceConfig& config() const { return config_; }
    const Dataset& dataset() const { return *dataset_; }
    SessionStore& sessions() { return sessions_; }

private:
    FilterState filter_state(const SessionState& s, const TimeSlicing& slicing) const;
    TimeSlicing slicing_for(const std::map<std::string, std::string>& query) const;

    std::shared_ptr<const Dataset> dataset_;
    ServiceConfig config_;
    SessionStore sessions_;
};

/// Blocks serving the API over HTTP until stop_server is called from another
/// thread. The session id travels in the X-Session header or ?session=.
void run_server(Api& api, const std::string& host, int port);
void stop_server();
/// Binds an ephemeral port, returns it through `bound` and serves until stop_server.
void run_server_any_port(Api& api, const std::string& host, std::function<void(int)> bound);

}  // namespace crimelens
