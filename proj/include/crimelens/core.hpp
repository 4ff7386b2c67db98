#pragma once

#include <chrono>
#include <cstddef>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace crimelens {

class SiteGeometrySet;

/// Raised for input that violates a documented contract (bad files, bad
/// arguments). Row-level ingestion problems are reported, not thrown.
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Naive local civil time at minute precision. No timezone arithmetic.
using Timestamp = std::chrono::sys_time<std::chrono::minutes>;

Timestamp make_timestamp(int year, unsigned month, unsigned day, int hour = 0, int minute = 0);
std::optional<Timestamp> parse_timestamp(std::string_view text);  // YYYY-MM-DDTHH:MM
std::optional<std::chrono::sys_days> parse_date(std::string_view text);  // YYYY-MM-DD
std::string format_timestamp(Timestamp t);
std::string format_date(std::chrono::sys_days d);

std::chrono::year_month_day civil_date(Timestamp t);
int minute_of_day(Timestamp t);

/// Trimmed, upper-cased crime type code.
std::string normalize_type(std::string_view raw);

struct CrimeRecord {
    std::string site_id;
    std::string crime_type;
    Timestamp timestamp;

    bool operator==(const CrimeRecord&) const = default;
};

/// Inclusive civil-day range.
struct DateRange {
    std::chrono::sys_days start;
    std::chrono::sys_days end;

    bool contains(Timestamp t) const;
    bool operator==(const DateRange&) const = default;
};

/// Immutable collection of records sorted by (timestamp, site, type).
class CrimeCatalog {
public:
    CrimeCatalog(std::vector<CrimeRecord> records, DateRange range, std::string label,
                 std::map<std::string, std::string> type_groups = {});

    const std::vector<CrimeRecord>& records() const { return records_; }
    std::size_t size() const { return records_.size(); }
    bool empty() const { return records_.empty(); }
    const DateRange& date_range() const { return range_; }
    const std::string& label() const { return label_; }
    const std::map<std::string, std::string>& type_groups() const { return type_groups_; }

    /// Sorted distinct crime types present.
    std::vector<std::string> types() const;
    /// Group label for a type, or the type itself when ungrouped.
    std::string group_of(const std::string& type) const;

private:
    std::vector<CrimeRecord> records_;
    DateRange range_;
    std::string label_;
    std::map<std::string, std::string> type_groups_;
};

struct RejectedRow {
    std::size_t line = 0;
    std::string reason;
};

struct IngestReport {
    std::size_t accepted = 0;
    std::vector<RejectedRow> rejected;

    std::map<std::string, std::size_t> rejected_by_reason() const;
    /// Plain-text summary: accepted count, then one line per reason.
    std::string summary() const;
};

struct IngestOptions {
    std::string label = "all";
    std::optional<DateRange> declared_range;
    /// Fraction of rejected rows above which ingestion fails outright.
    double max_reject_fraction = 0.10;
    /// The fraction rule only applies from this many data rows on; a handful
    /// of rows gives no meaningful rate.
    std::size_t min_rows_for_reject_rate = 20;
};

struct IngestResult {
    CrimeCatalog catalog;
    IngestReport report;
};

/// Reads `site_id,crime_type,timestamp` rows. Unknown sites, unparseable
/// timestamps, empty types and out-of-range dates are rejected per row.
IngestResult ingest_records(std::istream& source, const SiteGeometrySet& geometry,
                            const IngestOptions& options = {});

/// Parses `crime_type = group_label` lines. '#' starts a comment.
std::map<std::string, std::string> parse_type_groups(std::istream& in);

/// Partitions records by category. Output order follows sorted category label.
std::vector<CrimeCatalog> split_by_category(const CrimeCatalog& catalog,
                                            const std::map<std::string, std::string>& category_map);

void write_records_csv(std::ostream& out, const CrimeCatalog& catalog);

// ---------------------------------------------------------------------------
// Time slicing

enum class Granularity { month, day };

std::string to_string(Granularity g);
Granularity granularity_from_string(std::string_view s);

struct TimeSlice {
    Timestamp begin;  // inclusive
    Timestamp end;    // exclusive
};

/// Ordered calendar months or days covering a date range.
class TimeSlicing {
public:
    TimeSlicing(Granularity granularity, DateRange range);

    Granularity granularity() const { return granularity_; }
    const std::vector<TimeSlice>& slices() const { return slices_; }
    std::size_t size() const { return slices_.size(); }
    const DateRange& range() const { return range_; }

    /// Index of the slice containing t, or nullopt outside the covered span.
    std::optional<std::size_t> index_of(Timestamp t) const;
    std::string label(std::size_t index) const;

private:
    Granularity granularity_;
    DateRange range_;
    std::vector<TimeSlice> slices_;
};

}  // namespace crimelens
