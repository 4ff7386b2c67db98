#include "crimelens/hotspot.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace crimelens {

int otsu_bin(double v, double lo, double hi) {
    const double t = (v - lo) / (hi - lo) * kOtsuBins;
    return std::clamp(static_cast<int>(std::floor(t)), 0, kOtsuBins - 1);
}

namespace {

using u128 = unsigned __int128;

/// Between-class variance for a cut, up to the constant factor 1/N^2, as the
/// exact fraction num/den with num = (s0 N - S n0)^2 and den = n0 n1.
struct Score {
    u128 num = 0;
    u128 den = 1;
    long double approx = 0.0L;
};

bool greater(const Score& a, const Score& b, bool exact) {
    if (exact) return a.num * b.den > b.num * a.den;
    return a.approx > b.approx;
}

}  // namespace

OtsuResult otsu_binarize(std::span<const double> values) {
    OtsuResult out;
    out.labels.assign(values.size(), 0);
    if (values.empty()) return out;
    const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
    const double lo = *lo_it, hi = *hi_it;
    if (!(hi > lo)) {
        out.threshold = hi;
        return out;
    }

    std::array<std::uint64_t, kOtsuBins> hist{};
    std::vector<int> bins(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        bins[i] = otsu_bin(values[i], lo, hi);
        ++hist[static_cast<std::size_t>(bins[i])];
    }
    const std::uint64_t total = values.size();
    std::uint64_t level_sum = 0;
    for (int b = 0; b < kOtsuBins; ++b) level_sum += static_cast<std::uint64_t>(b) * hist[static_cast<std::size_t>(b)];

    // num <= (255 N^2)^2 and den <= N^2 / 4; stay exact while the product fits.
    const bool exact = total < 300000;
    std::uint64_t n0 = 0, s0 = 0;
    Score best;
    int best_cut = -1;
    for (int t = 0; t < kOtsuBins - 1; ++t) {
        n0 += hist[static_cast<std::size_t>(t)];
        s0 += static_cast<std::uint64_t>(t) * hist[static_cast<std::size_t>(t)];
        const std::uint64_t n1 = total - n0;
        if (n0 == 0 || n1 == 0) continue;
        const std::int64_t diff =
            static_cast<std::int64_t>(s0 * total) - static_cast<std::int64_t>(level_sum * n0);
        const u128 mag = static_cast<u128>(diff < 0 ? -diff : diff);
        Score s;
        s.num = mag * mag;
        s.den = static_cast<u128>(n0) * n1;
        s.approx = static_cast<long double>(diff) * diff / (static_cast<long double>(n0) * n1);
        if (best_cut < 0 || greater(s, best, exact)) {
            best = s;
            best_cut = t;
        }
    }
    out.degenerate = false;
    out.cut_bin = best_cut;
    out.threshold = lo + (hi - lo) * (best_cut + 1) / kOtsuBins;
    for (std::size_t i = 0; i < values.size(); ++i) out.labels[i] = bins[i] > best_cut ? 1 : 0;
    return out;
}

Eigen::MatrixXi binarize_h(const Eigen::MatrixXd& H) {
    if ((H.array() < 0.0).any()) throw InputError("H has negative entries");
    Eigen::MatrixXi out = Eigen::MatrixXi::Zero(H.rows(), H.cols());
    std::vector<double> row(static_cast<std::size_t>(H.cols()));
    for (Eigen::Index i = 0; i < H.rows(); ++i) {
        for (Eigen::Index j = 0; j < H.cols(); ++j) row[static_cast<std::size_t>(j)] = H(i, j);
        const auto r = otsu_binarize(row);
        for (Eigen::Index j = 0; j < H.cols(); ++j) out(i, j) = r.labels[static_cast<std::size_t>(j)];
    }
    return out;
}

std::vector<HotspotMembership> extract_memberships(const Eigen::MatrixXd& W, const std::vector<std::string>& row_sites) {
    if (static_cast<std::size_t>(W.rows()) != row_sites.size()) throw InputError("W rows do not match the site list");
    if ((W.array() < 0.0).any()) throw InputError("W has negative entries");
    const double w_max = W.size() ? W.maxCoeff() : 0.0;
    constexpr double kNegligible = 1e-6;

    std::vector<HotspotMembership> out(static_cast<std::size_t>(W.cols()));
    std::vector<double> col(static_cast<std::size_t>(W.rows()));
    for (Eigen::Index j = 0; j < W.cols(); ++j) {
        auto& mem = out[static_cast<std::size_t>(j)];
        if (W.col(j).maxCoeff() <= kNegligible * w_max) {
            mem.noise = true;
            continue;
        }
        for (Eigen::Index i = 0; i < W.rows(); ++i) col[static_cast<std::size_t>(i)] = W(i, j);
        const auto r = otsu_binarize(col);
        for (std::size_t i = 0; i < col.size(); ++i)
            if (r.labels[i]) {
                mem.rows.push_back(i);
                mem.sites.push_back(row_sites[i]);
            }
        std::sort(mem.sites.begin(), mem.sites.end());
        mem.noise = mem.rows.empty();
    }
    return out;
}

double gauge_importance(double rate_of_crimes, double frequency) {
    return 0.7 * rate_of_crimes + 0.5 * frequency - 0.2 * rate_of_crimes * frequency;
}

double HotspotModel::relative_strength(std::size_t hotspot) const {
    double strongest = 0.0;
    for (Eigen::Index h = 0; h < W.cols(); ++h) strongest = std::max(strongest, W.col(h).norm() * H.row(h).norm());
    if (strongest == 0.0) return 0.0;
    const auto h = static_cast<Eigen::Index>(hotspot);
    return W.col(h).norm() * H.row(h).norm() / strongest;
}

bool HotspotModel::is_noise(std::size_t hotspot) const {
    const auto& mem = memberships.at(hotspot);
    return mem.noise || mem.rows.empty() || H_bin.row(static_cast<Eigen::Index>(hotspot)).sum() == 0 ||
           relative_strength(hotspot) < kNoiseStrength;
}

Eigen::MatrixXd to_dense(const CrimeMatrix& X) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(X.rows), static_cast<Eigen::Index>(X.cols));
    for (std::size_t i = 0; i < X.rows; ++i)
        for (std::size_t j = 0; j < X.cols; ++j)
            out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = static_cast<double>(X.at(i, j));
    return out;
}

HotspotModel factorize(const CrimeMatrix& X, const NmfConfig& cfg) {
    const Eigen::MatrixXd dense = to_dense(X);
    auto sol = sparse_nmf(dense, cfg);

    HotspotModel model;
    model.row_sites = X.row_sites;
    model.col_labels = X.col_labels;
    model.W = std::move(sol.W);
    model.H = std::move(sol.H);
    model.H_bin = binarize_h(model.H);
    model.memberships = extract_memberships(model.W, model.row_sites);
    model.objective = residual_norm2(dense, model.W, model.H);
    model.penalized_objective = sol.objective;
    for (const auto& r : sol.restarts) {
        model.restart_objectives.push_back(r.objective.back());
        model.restart_residuals.push_back(r.residual);
        model.restart_traces.push_back(r.objective);
    }
    model.best_restart = sol.best_restart;
    model.config = cfg;
    model.sparsity_h = sol.sparsity_h;
    model.degenerate = sol.degenerate;
    for (std::size_t h = 0; h < model.memberships.size(); ++h)
        if (model.is_noise(h)) model.memberships[h].noise = true;
    return model;
}

GaugeStats gauge(const HotspotModel& model, std::size_t hotspot, const CrimeMatrix& X) {
    if (hotspot >= static_cast<std::size_t>(model.rank())) throw InputError("hotspot index out of range");
    if (X.rows != model.row_sites.size() || X.cols != static_cast<std::size_t>(model.H.cols()))
        throw InputError("matrix does not match the model");
    GaugeStats g;
    const auto total = X.total();
    const auto& mem = model.memberships[hotspot];
    if (total == 0) {
        g.degenerate = true;
        return g;
    }
    if (mem.rows.empty()) return g;
    for (auto i : mem.rows)
        for (std::size_t j = 0; j < X.cols; ++j) g.crime_count += X.at(i, j);
    g.rate_of_crimes = static_cast<double>(g.crime_count) / static_cast<double>(total);
    g.frequency = static_cast<double>(model.H_bin.row(static_cast<Eigen::Index>(hotspot)).sum()) /
                  static_cast<double>(X.cols);
    g.importance = gauge_importance(g.rate_of_crimes, g.frequency);
    return g;
}

std::vector<std::uint8_t> nmf_site_labels(const HotspotModel& model) {
    std::vector<std::uint8_t> labels(model.row_sites.size(), 0);
    for (std::size_t h = 0; h < model.memberships.size(); ++h) {
        if (model.is_noise(h)) continue;
        for (auto i : model.memberships[h].rows) labels[i] = 1;
    }
    return labels;
}

}  // namespace crimelens
