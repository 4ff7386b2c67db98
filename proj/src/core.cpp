#include "crimelens/core.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <sstream>
#include <tuple>

#include "crimelens/spatial.hpp"

namespace crimelens {

using namespace std::chrono;

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

bool parse_fixed(std::string_view s, int& out) {
    if (s.empty()) return false;
    for (char c : s)
        if (!std::isdigit(static_cast<unsigned char>(c))) return false;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && ptr == s.data() + s.size();
}

std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
        auto pos = line.find(',', start);
        fields.emplace_back(trim(line.substr(start, pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return fields;
}

}  // namespace

Timestamp make_timestamp(int year, unsigned month, unsigned day, int hour, int minute) {
    const sys_days d{year_month_day{std::chrono::year{year}, std::chrono::month{month}, std::chrono::day{day}}};
    return Timestamp{d} + hours{hour} + minutes{minute};
}

std::optional<sys_days> parse_date(std::string_view text) {
    text = trim(text);
    if (text.size() != 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
    int y = 0, m = 0, d = 0;
    if (!parse_fixed(text.substr(0, 4), y) || !parse_fixed(text.substr(5, 2), m) ||
        !parse_fixed(text.substr(8, 2), d))
        return std::nullopt;
    const year_month_day ymd{std::chrono::year{y}, std::chrono::month(static_cast<unsigned>(m)),
                             std::chrono::day(static_cast<unsigned>(d))};
    if (!ymd.ok()) return std::nullopt;
    return sys_days{ymd};
}

std::optional<Timestamp> parse_timestamp(std::string_view text) {
    text = trim(text);
    if (text.size() != 16 || text[10] != 'T' || text[13] != ':') return std::nullopt;
    auto day = parse_date(text.substr(0, 10));
    int hh = 0, mm = 0;
    if (!day || !parse_fixed(text.substr(11, 2), hh) || !parse_fixed(text.substr(14, 2), mm))
        return std::nullopt;
    if (hh > 23 || mm > 59) return std::nullopt;
    return Timestamp{*day} + hours{hh} + minutes{mm};
}

std::string format_date(sys_days d) {
    const year_month_day ymd{d};
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return buf;
}

std::string format_timestamp(Timestamp t) {
    const int mod = minute_of_day(t);
    char buf[16];
    std::snprintf(buf, sizeof buf, "T%02d:%02d", mod / 60, mod % 60);
    return format_date(floor<days>(t)) + buf;
}

year_month_day civil_date(Timestamp t) { return year_month_day{floor<days>(t)}; }

int minute_of_day(Timestamp t) {
    return static_cast<int>((t - floor<days>(t)).count());
}

std::string normalize_type(std::string_view raw) {
    std::string out{trim(raw)};
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    return out;
}

bool DateRange::contains(Timestamp t) const {
    const auto d = floor<days>(t);
    return d >= start && d <= end;
}

CrimeCatalog::CrimeCatalog(std::vector<CrimeRecord> records, DateRange range, std::string label,
                           std::map<std::string, std::string> type_groups)
    : records_(std::move(records)), range_(range), label_(std::move(label)),
      type_groups_(std::move(type_groups)) {
    if (range_.end < range_.start) throw InputError("date range end precedes start");
    std::sort(records_.begin(), records_.end(), [](const CrimeRecord& a, const CrimeRecord& b) {
        return std::tie(a.timestamp, a.site_id, a.crime_type) <
               std::tie(b.timestamp, b.site_id, b.crime_type);
    });
}

std::vector<std::string> CrimeCatalog::types() const {
    std::set<std::string> seen;
    for (const auto& r : records_) seen.insert(r.crime_type);
    return {seen.begin(), seen.end()};
}

std::string CrimeCatalog::group_of(const std::string& type) const {
    auto it = type_groups_.find(type);
    return it == type_groups_.end() ? type : it->second;
}

std::map<std::string, std::size_t> IngestReport::rejected_by_reason() const {
    std::map<std::string, std::size_t> counts;
    for (const auto& r : rejected) ++counts[r.reason];
    return counts;
}

std::string IngestReport::summary() const {
    std::ostringstream out;
    out << "accepted: " << accepted << "\n";
    out << "rejected: " << rejected.size() << "\n";
    for (const auto& [reason, count] : rejected_by_reason()) out << "  " << reason << ": " << count << "\n";
    return out.str();
}

IngestResult ingest_records(std::istream& source, const SiteGeometrySet& geometry,
                            const IngestOptions& options) {
    std::string line;
    if (!std::getline(source, line)) throw InputError("missing header row");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = split_csv_line(line);
    if (header != std::vector<std::string>{"site_id", "crime_type", "timestamp"})
        throw InputError("malformed header: expected site_id,crime_type,timestamp");

    std::vector<CrimeRecord> records;
    IngestReport report;
    std::size_t line_no = 1;
    while (std::getline(source, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        const auto fields = split_csv_line(line);
        auto reject = [&](const char* reason) { report.rejected.push_back({line_no, reason}); };
        if (fields.size() != 3) {
            reject("wrong field count");
            continue;
        }
        if (!geometry.contains(fields[0])) {
            reject("unknown site");
            continue;
        }
        std::string type = normalize_type(fields[1]);
        if (type.empty()) {
            reject("empty crime type");
            continue;
        }
        auto ts = parse_timestamp(fields[2]);
        if (!ts) {
            reject("unparseable timestamp");
            continue;
        }
        if (options.declared_range && !options.declared_range->contains(*ts)) {
            reject("outside date range");
            continue;
        }
        records.push_back({fields[0], std::move(type), *ts});
    }

    report.accepted = records.size();
    if (records.empty()) throw InputError("empty catalog: no valid records");
    const double total = static_cast<double>(records.size() + report.rejected.size());
    if (total >= static_cast<double>(options.min_rows_for_reject_rate) &&
        static_cast<double>(report.rejected.size()) > options.max_reject_fraction * total)
        throw InputError("too many rejected rows (" + std::to_string(report.rejected.size()) + " of " +
                         std::to_string(static_cast<std::size_t>(total)) + ")\n" + report.summary());

    DateRange range;
    if (options.declared_range) {
        range = *options.declared_range;
    } else {
        auto [lo, hi] = std::minmax_element(records.begin(), records.end(),
                                            [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; });
        range = {floor<days>(lo->timestamp), floor<days>(hi->timestamp)};
    }
    return {CrimeCatalog(std::move(records), range, options.label), std::move(report)};
}

std::map<std::string, std::string> parse_type_groups(std::istream& in) {
    std::map<std::string, std::string> groups;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view view = line;
        if (auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
        if (trim(view).empty()) continue;
        auto eq = view.find('=');
        if (eq == std::string_view::npos)
            throw InputError("type-group line " + std::to_string(line_no) + ": missing '='");
        auto type = normalize_type(view.substr(0, eq));
        std::string group{trim(view.substr(eq + 1))};
        if (type.empty() || group.empty())
            throw InputError("type-group line " + std::to_string(line_no) + ": empty key or value");
        auto [it, inserted] = groups.emplace(type, group);
        if (!inserted && it->second != group)
            throw InputError("crime type " + type + " mapped to two groups");
    }
    return groups;
}

std::vector<CrimeCatalog> split_by_category(const CrimeCatalog& catalog,
                                            const std::map<std::string, std::string>& category_map) {
    std::set<std::string> unmapped;
    std::map<std::string, std::vector<CrimeRecord>> parts;
    for (const auto& r : catalog.records()) {
        auto it = category_map.find(r.crime_type);
        if (it == category_map.end()) {
            unmapped.insert(r.crime_type);
            continue;
        }
        parts[it->second].push_back(r);
    }
    if (!unmapped.empty()) {
        std::string msg = "unmapped crime types:";
        for (const auto& t : unmapped) msg += " " + t;
        throw InputError(msg);
    }
    std::vector<CrimeCatalog> out;
    out.reserve(parts.size());
    for (auto& [label, records] : parts)
        out.emplace_back(std::move(records), catalog.date_range(), label, catalog.type_groups());
    return out;
}

void write_records_csv(std::ostream& out, const CrimeCatalog& catalog) {
    out << "site_id,crime_type,timestamp\n";
    for (const auto& r : catalog.records())
        out << r.site_id << ',' << r.crime_type << ',' << format_timestamp(r.timestamp) << '\n';
}

std::string to_string(Granularity g) { return g == Granularity::month ? "month" : "day"; }

Granularity granularity_from_string(std::string_view s) {
    if (s == "month") return Granularity::month;
    if (s == "day") return Granularity::day;
    throw InputError("granularity must be 'month' or 'day'");
}

TimeSlicing::TimeSlicing(Granularity granularity, DateRange range)
    : granularity_(granularity), range_(range) {
    if (range.end < range.start) throw InputError("date range end precedes start");
    if (granularity == Granularity::day) {
        for (sys_days d = range.start; d <= range.end; d += days{1})
            slices_.push_back({Timestamp{d}, Timestamp{d + days{1}}});
        return;
    }
    const year_month_day first{range.start};
    year_month ym{first.year(), first.month()};
    const year_month_day last{range.end};
    const year_month end_ym{last.year(), last.month()};
    for (; ym <= end_ym; ym += months{1}) {
        const sys_days b{ym / std::chrono::day{1}};
        const sys_days e{(ym + months{1}) / std::chrono::day{1}};
        slices_.push_back({Timestamp{b}, Timestamp{e}});
    }
}

std::optional<std::size_t> TimeSlicing::index_of(Timestamp t) const {
    if (slices_.empty() || t < slices_.front().begin || t >= slices_.back().end) return std::nullopt;
    auto it = std::upper_bound(slices_.begin(), slices_.end(), t,
                               [](Timestamp v, const TimeSlice& s) { return v < s.begin; });
    return static_cast<std::size_t>(std::distance(slices_.begin(), it) - 1);
}

std::string TimeSlicing::label(std::size_t index) const {
    const auto date = format_date(floor<days>(slices_.at(index).begin));
    return granularity_ == Granularity::month ? date.substr(0, 7) : date;
}

}  // namespace crimelens
