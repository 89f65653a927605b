#include "pktseer/featsel.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace pktseer {

FeatureMatrix records_to_matrix(const std::vector<std::string>& feature_names,
                                const std::vector<PacketRecord>& records) {
    FeatureMatrix m;
    m.column_names = feature_names;
    m.n_rows = records.size();
    m.values.reserve(records.size() * feature_names.size());
    for (const auto& r : records) {
        if (r.features.size() != feature_names.size())
            throw DataError("records_to_matrix: feature count mismatch");
        for (const auto& [name, v] : r.features) m.values.push_back(v);
    }
    return m;
}

FeatureMatrix min_max_scale(const FeatureMatrix& m) {
    FeatureMatrix out = m;
    size_t cols = m.n_cols();
    for (size_t c = 0; c < cols; ++c) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (size_t r = 0; r < m.n_rows; ++r) {
            lo = std::min(lo, m.at(r, c));
            hi = std::max(hi, m.at(r, c));
        }
        double range = hi - lo;
        for (size_t r = 0; r < m.n_rows; ++r)
            out.at(r, c) = range > 0 ? (m.at(r, c) - lo) / range : 0.0;
    }
    return out;
}

double column_variance(const FeatureMatrix& m, size_t col) {
    if (m.n_rows == 0) return 0.0;
    double mean = 0.0;
    for (size_t r = 0; r < m.n_rows; ++r) mean += m.at(r, col);
    mean /= static_cast<double>(m.n_rows);
    double acc = 0.0;
    for (size_t r = 0; r < m.n_rows; ++r) {
        double d = m.at(r, col) - mean;
        acc += d * d;
    }
    return acc / static_cast<double>(m.n_rows);
}

double pearson_r(const FeatureMatrix& m, size_t a, size_t b) {
    size_t n = m.n_rows;
    if (n == 0) return 0.0;
    double ma = 0, mb = 0;
    for (size_t r = 0; r < n; ++r) {
        ma += m.at(r, a);
        mb += m.at(r, b);
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double sab = 0, saa = 0, sbb = 0;
    for (size_t r = 0; r < n; ++r) {
        double da = m.at(r, a) - ma;
        double db = m.at(r, b) - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa == 0 || sbb == 0) return 0.0;
    return sab / std::sqrt(saa * sbb);
}

SelectionReport variance_filter(const FeatureMatrix& scaled, double threshold) {
    SelectionReport rep;
    rep.var_threshold = threshold;
    rep.var_cutoff = threshold * 0.25;
    for (size_t c = 0; c < scaled.n_cols(); ++c) {
        double v = column_variance(scaled, c);
        if (v < rep.var_cutoff)
            rep.dropped_low_variance.emplace_back(scaled.column_names[c], v);
        else
            rep.kept.push_back(scaled.column_names[c]);
    }
    return rep;
}

SelectionReport pearson_filter(const FeatureMatrix& m, double threshold) {
    SelectionReport rep;
    rep.corr_threshold = threshold;
    size_t cols = m.n_cols();
    std::vector<bool> dropped(cols, false);
    for (size_t i = 0; i < cols; ++i) {
        if (dropped[i]) continue;
        for (size_t j = i + 1; j < cols; ++j) {
            if (dropped[j]) continue;
            double r = pearson_r(m, i, j);
            if (std::abs(r) > threshold) {
                dropped[j] = true;
                rep.dropped_correlated.push_back({m.column_names[j], m.column_names[i], r});
            }
        }
    }
    for (size_t c = 0; c < cols; ++c)
        if (!dropped[c]) rep.kept.push_back(m.column_names[c]);
    return rep;
}

namespace {

FeatureMatrix keep_columns(const FeatureMatrix& m, const std::vector<std::string>& kept) {
    std::vector<size_t> idx;
    for (const auto& name : kept) {
        auto it = std::find(m.column_names.begin(), m.column_names.end(), name);
        idx.push_back(static_cast<size_t>(it - m.column_names.begin()));
    }
    FeatureMatrix out;
    out.column_names = kept;
    out.n_rows = m.n_rows;
    out.values.reserve(m.n_rows * idx.size());
    for (size_t r = 0; r < m.n_rows; ++r)
        for (size_t c : idx) out.values.push_back(m.at(r, c));
    return out;
}

}  // namespace

std::pair<FeatureMatrix, SelectionReport> select_features(const FeatureMatrix& m,
                                                          double var_threshold,
                                                          double corr_threshold) {
    FeatureMatrix scaled = min_max_scale(m);
    SelectionReport var_rep = variance_filter(scaled, var_threshold);
    FeatureMatrix survivors = keep_columns(scaled, var_rep.kept);
    SelectionReport corr_rep = pearson_filter(survivors, corr_threshold);

    SelectionReport rep;
    rep.var_threshold = var_rep.var_threshold;
    rep.var_cutoff = var_rep.var_cutoff;
    rep.corr_threshold = corr_rep.corr_threshold;
    rep.dropped_low_variance = var_rep.dropped_low_variance;
    rep.dropped_correlated = corr_rep.dropped_correlated;
    rep.kept = corr_rep.kept;
    if (rep.kept.empty()) throw DataError("select_features: no features survive selection");
    return {keep_columns(m, rep.kept), rep};
}

std::string selection_report_table(const SelectionReport& r) {
    std::ostringstream os;
    os << "feature selection (variance cutoff " << r.var_cutoff << " = " << r.var_threshold
       << " x 0.25 on scaled data, |r| > " << r.corr_threshold << ")\n";
    os << "kept (" << r.kept.size() << "):";
    for (const auto& k : r.kept) os << ' ' << k;
    os << "\ndropped low-variance (" << r.dropped_low_variance.size() << "):\n";
    for (const auto& [name, v] : r.dropped_low_variance)
        os << "  " << name << "  var=" << v << "\n";
    os << "dropped correlated (" << r.dropped_correlated.size() << "):\n";
    for (const auto& d : r.dropped_correlated)
        os << "  " << d.name << "  ~ " << d.partner << "  r=" << d.correlation << "\n";
    return os.str();
}

}  // namespace pktseer
