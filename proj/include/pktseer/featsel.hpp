#pragma once

#include <string>
#include <vector>

#include "pktseer/common.hpp"
#include "pktseer/ingest.hpp"

namespace pktseer {

struct FeatureMatrix {
    std::vector<std::string> column_names;
    std::vector<double> values;  // row-major, n_rows x column_names.size()
    size_t n_rows = 0;

    size_t n_cols() const { return column_names.size(); }
    double at(size_t r, size_t c) const { return values[r * n_cols() + c]; }
    double& at(size_t r, size_t c) { return values[r * n_cols() + c]; }
};

struct SelectionReport {
    std::vector<std::string> kept;
    std::vector<std::pair<std::string, double>> dropped_low_variance;  // (name, variance)
    struct CorrDrop {
        std::string name;
        std::string partner;
        double correlation;
    };
    std::vector<CorrDrop> dropped_correlated;
    double var_threshold = 0.25;   // fraction of the max variance of a [0,1] column
    double var_cutoff = 0.0625;    // resolved absolute cutoff on scaled data
    double corr_threshold = 0.98;  // |r| above this drops the later column
};

FeatureMatrix records_to_matrix(const std::vector<std::string>& feature_names,
                                const std::vector<PacketRecord>& records);

// Maps each column to [0,1]; constant columns become all-zeros.
FeatureMatrix min_max_scale(const FeatureMatrix& m);

// Population (1/n) variance per column of a min-max scaled matrix; drops
// columns with variance below threshold * 0.25 (the max a [0,1] variable can
// attain). Fills only the low-variance part of the report.
SelectionReport variance_filter(const FeatureMatrix& scaled, double threshold = 0.25);

// Scans pairs (i,j), i<j, in column order and drops the later column when
// |r| exceeds the threshold and neither column is dropped yet. Expects
// nonzero-variance columns.
SelectionReport pearson_filter(const FeatureMatrix& m, double threshold = 0.98);

// scale -> variance filter -> pearson filter. The returned matrix carries the
// original (unscaled) values of the kept columns, rows in input order.
std::pair<FeatureMatrix, SelectionReport> select_features(const FeatureMatrix& m,
                                                          double var_threshold = 0.25,
                                                          double corr_threshold = 0.98);

double column_variance(const FeatureMatrix& m, size_t col);
double pearson_r(const FeatureMatrix& m, size_t col_a, size_t col_b);

std::string selection_report_table(const SelectionReport& r);

}  // namespace pktseer
