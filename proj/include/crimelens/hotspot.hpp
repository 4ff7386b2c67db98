#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "crimelens/analytics.hpp"
#include "crimelens/nmf.hpp"

namespace crimelens {

inline constexpr int kOtsuBins = 256;

struct OtsuResult {
    /// Values in bins above cut_bin are foreground.
    int cut_bin = -1;
    /// Upper edge of cut_bin in value units.
    double threshold = 0.0;
    /// True for constant (or empty) input; every label is then 0.
    bool degenerate = true;
    std::vector<std::uint8_t> labels;
};

/// Bin index of v in a 256-bin histogram spanning [lo, hi].
int otsu_bin(double v, double lo, double hi);

/// Otsu's method on a 256-bin histogram between the vector's min and max.
/// The cut maximizes between-class variance (first maximum wins); ties are
/// resolved exactly with integer arithmetic.
OtsuResult otsu_binarize(std::span<const double> values);

/// Per-row Otsu binarization of H.
Eigen::MatrixXi binarize_h(const Eigen::MatrixXd& H);

struct HotspotMembership {
    std::vector<std::size_t> rows;   // indices into row_sites
    std::vector<std::string> sites;  // sorted
    bool noise = false;
};

/// Per-column Otsu binarization of W. A column whose entries are all
/// negligible relative to the largest W entry is flagged noise.
std::vector<HotspotMembership> extract_memberships(const Eigen::MatrixXd& W, const std::vector<std::string>& row_sites);

struct GaugeStats {
    std::int64_t crime_count = 0;
    double frequency = 0.0;
    double rate_of_crimes = 0.0;
    double importance = 0.0;
    bool degenerate = false;
};

/// Bilinear interpolation on the unit square with f(0,0)=0, f(0,1)=0.5,
/// f(1,0)=0.7, f(1,1)=1, i.e. 0.7 r + 0.5 q - 0.2 r q.
double gauge_importance(double rate_of_crimes, double frequency);

struct HotspotModel {
    std::vector<std::string> row_sites;
    std::vector<std::string> col_labels;
    Eigen::MatrixXd W;
    Eigen::MatrixXd H;
    Eigen::MatrixXi H_bin;
    std::vector<HotspotMembership> memberships;
    double objective = 0.0;            // ||X - WH||^2
    double penalized_objective = 0.0;  // the quantity the solver minimizes
    std::vector<double> restart_objectives;  // final penalized objective per restart
    std::vector<double> restart_residuals;
    std::vector<std::vector<double>> restart_traces;
    std::size_t best_restart = 0;
    NmfConfig config;
    double sparsity_h = 0.0;
    bool degenerate = false;

    int rank() const { return static_cast<int>(W.cols()); }
    /// ||w_h|| * ||h_h|| relative to the strongest component; with unit W
    /// columns this is the relative norm of the H row.
    double relative_strength(std::size_t hotspot) const;
    bool is_noise(std::size_t hotspot) const;
};

/// Components weaker than this fraction of the strongest one have a
/// near-null H row and are treated as noise.
inline constexpr double kNoiseStrength = 0.07;

Eigen::MatrixXd to_dense(const CrimeMatrix& X);

/// Sparse NMF plus binarization and membership extraction. A hotspot is noise
/// when its membership is empty, its H_bin row is all zero, or its
/// relative strength is below kNoiseStrength.
HotspotModel factorize(const CrimeMatrix& X, const NmfConfig& cfg);

GaugeStats gauge(const HotspotModel& model, std::size_t hotspot, const CrimeMatrix& X);

/// 1 for sites in any non-noise hotspot, in row_sites order.
std::vector<std::uint8_t> nmf_site_labels(const HotspotModel& model);

}  // namespace crimelens
