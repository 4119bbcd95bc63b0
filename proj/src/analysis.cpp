#include "spikemix/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "spikemix/names.hpp"
#include "spikemix/runconfig.hpp"

namespace spikemix {

double estimate_energy(double adds, double macs) {
  if (adds < 0 || macs < 0) throw ConfigError("estimate_energy: counts must be nonnegative");
  return kJoulesPerAdd * adds + kJoulesPerMac * macs;
}

namespace {

Tensor slice_batch(const Tensor& images, int64_t lo, int64_t hi) {
  const int64_t per = images.size() / images.dim(0);
  Tensor out({hi - lo, images.dim(1), images.dim(2), images.dim(3)});
  std::memcpy(out.data(), images.data() + lo * per, static_cast<size_t>((hi - lo) * per) * sizeof(double));
  return out;
}

}  // namespace

AuditReport audit_mfi(const infer::ModelF& model, const Tensor& images, int batch_size) {
  if (!model.folded)
    throw ConfigError("audit: model is not folded (eval batch norm applies real scaling): fold first");
  if (images.rank() != 4 || images.dim(0) == 0) throw ConfigError("audit: empty sample batch");
  AuditReport report;
  report.samples = images.dim(0);
  for (int64_t lo = 0; lo < images.dim(0); lo += batch_size) {
    const int64_t hi = std::min(images.dim(0), lo + batch_size);
    infer::OpTrace trace;
    infer::RunOptions opts;
    opts.trace = &trace;
    infer::run(model, infer::TensorF::from(slice_batch(images, lo, hi)), opts);
    report.trace.merge(trace);
  }
  for (const auto& layer : report.trace.layers) {
    if (layer.mul_real_real == 0) continue;
    if (layer.name == names::patch_conv()) {
      report.patch_real_mults = layer.mul_real_real;
    } else if (layer.name == names::head_classifier()) {
      report.classifier_real_mults = layer.mul_real_real;
    } else {
      report.violations.push_back(layer.name);
    }
  }
  return report;
}

std::string AuditReport::text() const {
  std::ostringstream os;
  os << "mfi_audit samples=" << samples << " verdict=" << (ok() ? "pass" : "VIOLATION") << "\n";
  os << "  patch_layer_real_mults=" << patch_real_mults << " (input layer, allowed)\n";
  os << "  classifier_real_mults=" << classifier_real_mults << " (pooled spike averages, reported separately)\n";
  for (const auto& l : trace.layers)
    os << "  layer=" << l.name << " adds=" << l.adds << " mul_real_binary=" << l.mul_real_binary
       << " mul_real_real=" << l.mul_real_real << "\n";
  for (const auto& v : violations) os << "  violation: real*real multiply in " << v << "\n";
  return os.str();
}

RateReport measure_spike_rate(const infer::ModelF& model, const Tensor& images, int batch_size) {
  if (images.rank() != 4 || images.dim(0) == 0) throw ConfigError("spike rate: empty sample");
  RateReport report;
  for (int64_t lo = 0; lo < images.dim(0); lo += batch_size) {
    const int64_t hi = std::min(images.dim(0), lo + batch_size);
    infer::RunStats stats;
    infer::RunOptions opts;
    opts.stats = &stats;
    infer::run(model, infer::TensorF::from(slice_batch(images, lo, hi)), opts);
    report.stats.merge(stats);
  }
  for (const auto& s : report.stats.sites) report.sites.emplace_back(s.name, s.rate());
  report.mean = report.stats.mean_rate();
  return report;
}

std::string RateReport::text() const {
  std::ostringstream os;
  os << "mean_spike_rate=" << fmt_double(mean) << "\n";
  for (const auto& [name, rate] : sites) os << "site=" << name << " rate=" << fmt_double(rate) << "\n";
  return os.str();
}

AddsEstimate count_additions(const infer::ModelF& model, const infer::RunStats& stats, int t_steps) {
  AddsEstimate est;
  for (const auto& info : infer::dense_layer_info(model)) {
    if (info.real_input) continue;
    double rate = 0.0;
    for (const auto& site : info.input_sites) {
      const infer::RunStats::Site* s = stats.find(site);
      if (!s) throw ConfigError("count_additions: no measured rate for site '" + site + "' (rate/architecture mismatch)");
      rate += s->rate();
    }
    rate /= static_cast<double>(info.input_sites.size());  // equal-size parts
    AddsEstimate::Row row;
    row.layer = info.name;
    row.rate = rate;
    row.accums = info.accums;
    row.adds = rate * static_cast<double>(t_steps) * static_cast<double>(info.accums);
    est.total += row.adds;
    est.rows.push_back(std::move(row));
  }
  return est;
}

CostReport build_cost_report(const infer::ModelF& model, const Tensor& images, int batch_size) {
  RateReport rates = measure_spike_rate(model, images, batch_size);
  const int T = model.cfg().t_steps;
  AddsEstimate adds = count_additions(model, rates.stats, T);

  CostReport report;
  report.t_steps = T;
  report.params = count_params(model.cfg());
  report.mean_spike_rate = rates.mean;
  for (const auto& row : adds.rows) {
    CostReport::Row r;
    r.layer = row.layer;
    r.kind = "adds";
    r.adds = row.adds;
    r.input_rate = row.rate;
    report.rows.push_back(std::move(r));
    report.total_adds += row.adds;
  }
  for (const auto& info : infer::dense_layer_info(model)) {
    if (!info.real_input) continue;
    CostReport::Row r;
    r.layer = info.name;
    r.kind = "macs";
    r.macs = static_cast<double>(info.accums) * (info.once_per_sample ? 1.0 : static_cast<double>(T));
    report.rows.push_back(std::move(r));
    report.total_macs += r.macs;
  }
  report.energy_joules = estimate_energy(report.total_adds, report.total_macs);
  return report;
}

std::string CostReport::text() const {
  std::ostringstream os;
  os << "params=" << params << " t_steps=" << t_steps << "\n";
  for (const auto& r : rows) {
    os << "layer=" << r.layer << " kind=" << r.kind;
    if (r.kind == "adds") os << " input_rate=" << fmt_double(r.input_rate) << " adds=" << fmt_double(r.adds);
    else os << " macs=" << fmt_double(r.macs);
    os << "\n";
  }
  os << "total_adds=" << fmt_double(total_adds) << "\n";
  os << "total_macs=" << fmt_double(total_macs) << "\n";
  os << "mean_spike_rate=" << fmt_double(mean_spike_rate) << "\n";
  os << "energy_joules=" << fmt_double(energy_joules) << "\n";
  os << "energy_millijoules=" << fmt_double(energy_joules * 1e3) << "\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// weight export

void export_matrix_csv(const Tensor& m, const std::string& path) {
  if (m.rank() != 2) throw ShapeError("csv export: expected a matrix, got " + shape_str(m.shape()));
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("csv export: cannot open " + path);
  for (int64_t r = 0; r < m.dim(0); ++r) {
    for (int64_t c = 0; c < m.dim(1); ++c) {
      if (c) os << ",";
      os << fmt_double(m[r * m.dim(1) + c]);
    }
    os << "\n";
  }
  if (!os) throw IoError("csv export: write failed for " + path);
}

Tensor import_matrix_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("csv import: cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (!rows.empty() && row.size() != rows[0].size()) throw IoError("csv import: ragged rows in " + path);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw IoError("csv import: empty file " + path);
  Tensor out({static_cast<int64_t>(rows.size()), static_cast<int64_t>(rows[0].size())});
  for (size_t r = 0; r < rows.size(); ++r)
    for (size_t c = 0; c < rows[r].size(); ++c)
      out[static_cast<int64_t>(r * rows[0].size() + c)] = rows[r][c];
  return out;
}

void export_matrix_pgm(const Tensor& m, const std::string& path) {
  if (m.rank() != 2) throw ShapeError("pgm export: expected a matrix, got " + shape_str(m.shape()));
  double lo = m[0], hi = m[0];
  for (int64_t i = 0; i < m.size(); ++i) {
    lo = std::min(lo, m[i]);
    hi = std::max(hi, m[i]);
  }
  const double span = hi > lo ? hi - lo : 1.0;
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("pgm export: cannot open " + path);
  os << "P5\n" << m.dim(1) << " " << m.dim(0) << "\n255\n";
  for (int64_t i = 0; i < m.size(); ++i) {
    const int v = static_cast<int>(std::lround((m[i] - lo) / span * 255.0));
    os.put(static_cast<char>(std::clamp(v, 0, 255)));
  }
  if (!os) throw IoError("pgm export: write failed for " + path);
}

double band_fraction(const Tensor& m, int band) {
  if (m.rank() != 2) throw ShapeError("band_fraction: expected a matrix");
  double total = 0.0, in_band = 0.0;
  for (int64_t i = 0; i < m.dim(0); ++i)
    for (int64_t j = 0; j < m.dim(1); ++j) {
      const double v = std::abs(m[i * m.dim(1) + j]);
      total += v;
      if (std::llabs(i - j) <= band) in_band += v;
    }
  return total > 0 ? in_band / total : 0.0;
}

void export_token_weights(Network& net, const std::string& block, const std::string& out_path, ExportFormat format,
                          int rf_row) {
  Tensor matrix;
  if (rf_row >= 0) {
    Parameter* wh = net.find_parameter(block + ".w_h");
    Parameter* ww = net.find_parameter(block + ".w_w");
    if (!wh || !ww)
      throw ConfigError("export: unknown token block path '" + block + "' (expected e.g. stage1.mixer0.token)");
    const Tensor& H = wh->value;
    const Tensor& W = ww->value;
    if (rf_row >= H.dim(0) || rf_row >= W.dim(0))
      throw ConfigError("export: rf row " + std::to_string(rf_row) + " out of range");
    matrix = Tensor({H.dim(1), W.dim(1)});
    for (int64_t i = 0; i < H.dim(1); ++i)
      for (int64_t j = 0; j < W.dim(1); ++j)
        matrix[i * W.dim(1) + j] = H[rf_row * H.dim(1) + i] * W[rf_row * W.dim(1) + j];
  } else {
    Parameter* p = net.find_parameter(block);
    if (!p) throw ConfigError("export: unknown block path '" + block + "'");
    if (p->value.rank() != 2)
      throw ConfigError("export: parameter '" + block + "' is not a matrix (" + shape_str(p->value.shape()) + ")");
    matrix = p->value;
  }
  if (format == ExportFormat::csv) export_matrix_csv(matrix, out_path);
  else export_matrix_pgm(matrix, out_path);
}

}  // namespace spikemix
