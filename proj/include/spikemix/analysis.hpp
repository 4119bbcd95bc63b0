#pragma once

#include <string>
#include <vector>

#include "spikemix/infer.hpp"

namespace spikemix {

// 45nm CMOS estimate: one accumulate costs 0.9 pJ, one MAC costs 4.6 pJ.
constexpr double kJoulesPerAdd = 0.9e-12;
constexpr double kJoulesPerMac = 4.6e-12;

double estimate_energy(double adds, double macs);  // joules

struct AuditReport {
  infer::OpTrace trace;
  std::vector<std::string> violations;  // layers with real*real products outside the allowed set
  uint64_t classifier_real_mults = 0;   // reported separately, not a violation
  uint64_t patch_real_mults = 0;
  int64_t samples = 0;
  bool ok() const { return violations.empty(); }
  std::string text() const;
};

// Runs the folded model over `images` in batches and classifies every scalar
// product. Real*real products are allowed only in the patch layer (real
// pixels) and the classifier (pooled spike averages; the pooling is a head
// design choice and is reported separately). Refuses unfolded models.
AuditReport audit_mfi(const infer::ModelF& model, const Tensor& images, int batch_size = 8);

struct RateReport {
  std::vector<std::pair<std::string, double>> sites;  // per LIF site
  double mean = 0.0;
  infer::RunStats stats;
  std::string text() const;
};

RateReport measure_spike_rate(const infer::ModelF& model, const Tensor& images, int batch_size = 8);

// additions = s * T * A per weighted spike-fed layer, with s measured at the
// layer's input sites and A the dense in-bounds accumulation count.
struct AddsEstimate {
  struct Row {
    std::string layer;
    double rate = 0.0;
    uint64_t accums = 0;
    double adds = 0.0;  // per sample
  };
  std::vector<Row> rows;
  double total = 0.0;
};

AddsEstimate count_additions(const infer::ModelF& model, const infer::RunStats& stats, int t_steps);

struct CostReport {
  struct Row {
    std::string layer;
    std::string kind;  // "adds" or "macs"
    double adds = 0.0;
    double macs = 0.0;
    double input_rate = 0.0;
  };
  std::vector<Row> rows;
  double total_adds = 0.0;   // per sample
  double total_macs = 0.0;   // per sample
  double energy_joules = 0.0;
  double mean_spike_rate = 0.0;
  int64_t params = 0;
  int t_steps = 0;
  std::string text() const;
};

// Measures rates on a sample batch, then applies the additions formula and
// the dense MAC accounting (patch layer once per sample, classifier per
// step).
CostReport build_cost_report(const infer::ModelF& model, const Tensor& images, int batch_size = 8);

// weight export --------------------------------------------------------------

void export_matrix_csv(const Tensor& m, const std::string& path);
Tensor import_matrix_csv(const std::string& path);
// 8-bit binary portable graymap, normalized per matrix to [min,max]
void export_matrix_pgm(const Tensor& m, const std::string& path);

// fraction of total |w| mass within the band |i-j| <= band
double band_fraction(const Tensor& m, int band);

enum class ExportFormat { csv, pgm };

// `block` is a parameter path like "stage1.mixer0.token.w_h"; with rf_row >=
// 0 it must name a token block ("stage1.mixer0.token") and the export is the
// outer product of that row of W_h with the same row of W_w (the neuron's 2D
// receptive field).
void export_token_weights(Network& net, const std::string& block, const std::string& out_path, ExportFormat format,
                          int rf_row = -1);

}  // namespace spikemix
