#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ganinv/dataset.hpp"
#include "ganinv/recovery.hpp"
#include "ganinv/tensor.hpp"

namespace ganinv {

struct EvalRecord {
    std::string id;
    Provenance provenance = Provenance::Generated;
    double recon_mse = 0.0;
    double initial_mse = 0.0;
    std::optional<double> z_error; // absent for real images
    int label_true = -1;
    int label_decoded = -1;
    bool regularizer_enabled = true;
    int iterations = 0;
};

struct AggregateReport {
    double mean_recon_mse = 0.0;
    double mean_initial_mse = 0.0; // the bracketed baseline
    double accuracy = 0.0;
    std::optional<double> mean_z_error;
    int count = 0;
    std::string config_digest;
};

// Mean over all pixels/channels of squared difference ([-1,1]-scaled pixels).
double reconstruction_loss(const Tensor& a, const Tensor& b);

// Euclidean distance || z - z_p ||_2.
double z_recovery_error(const Tensor& z, const Tensor& z_p);

double label_accuracy(const std::vector<EvalRecord>& records);

AggregateReport aggregate(const std::vector<EvalRecord>& records, std::string config_digest = "");

// RFC-4180-style CSV with a fixed, versioned header row. Round trips are
// lossless for finite values.
void write_records_csv(const std::vector<EvalRecord>& records, const std::string& path);
std::vector<EvalRecord> read_records_csv(const std::string& path);

// Columns: iteration, recon_mse, recon_sum, reg_term, z_error, label_correct.
void write_trace_csv(const RecoveryTrace& trace, const std::string& path);
RecoveryTrace read_trace_csv(const std::string& path);

struct CurveSeries {
    std::string name;
    std::string color = "#cc0000";
    bool dashed = false;
    std::vector<std::pair<double, double>> points; // (iteration, value)
};

// Static SVG 1.1 line plot; one polyline per series.
void write_svg_curves(const std::vector<CurveSeries>& series, const std::string& y_label,
                      const std::string& path);

// FNV-1a over a canonical string, hex-encoded; used for config digests.
std::string digest_string(const std::string& text);

} // namespace ganinv
