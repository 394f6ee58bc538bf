#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "sonn/data.hpp"
#include "sonn/errors.hpp"
#include "sonn/layers.hpp"

namespace sonn {

inline double psnr_from_mse(double mse) {
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

// Peak-1.0 PSNR in dB; identical images give +infinity.
double psnr(const Image& reference, const Image& test);

// Full-image forward pass through the network, clipped back into [0,1].
Image denoise_image(const Network& net, const Image& noisy);

// Corrupt each image with per-index seeded noise, denoise, and average the
// per-image PSNR. All-infinite results stay infinite; a mix of infinite and
// finite entries is an error.
double evaluate_dataset(const Network& net, const std::vector<Image>& images,
                        const NoiseConfig& cfg);

// Dense (method, dataset, sigma) -> dB grid. Methods stay sorted in report
// order (BM3D first, then ascending Q, then width), datasets in benchmark
// order, sigmas ascending.
struct EvalGrid {
  std::vector<std::string> methods;
  std::vector<std::string> datasets;
  std::vector<int> sigmas;
  std::vector<double> psnr_db;  // [method][dataset][sigma], NaN = missing

  void set(const std::string& method, const std::string& dataset, int sigma,
           double db);
  bool has(const std::string& method, const std::string& dataset,
           int sigma) const;
  // Missing cells raise IncompleteGridError naming the cell.
  double get(const std::string& method, const std::string& dataset,
             int sigma) const;
};

struct AggregateReport {
  std::vector<std::string> methods;
  std::vector<int> sigmas;
  std::vector<std::vector<double>> sigma_means;  // [method][sigma], cross-dataset
  std::vector<double> overall;                   // [method], mean of all cells
  std::string baseline;
  std::vector<double> margin;                    // overall - overall[baseline]
};

AggregateReport aggregate_report(const EvalGrid& grid,
                                 const std::string& baseline = "BM3D");

struct DeltaQTable {
  int width = 0;
  std::vector<std::pair<int, int>> q_pairs;
  std::vector<int> sigmas;
  std::vector<std::vector<double>> pct;  // [pair][sigma]
};

// Percentage PSNR change per q step: mean over datasets of 100*(Pb-Pa)/Pa.
DeltaQTable delta_q_table(const EvalGrid& grid, int width,
                          const std::vector<std::pair<int, int>>& q_pairs);

// Report renderings (2-decimal dB / percentage points).
std::string render_table1(const EvalGrid& grid);
std::string render_table2(const std::vector<DeltaQTable>& tables);

// results.csv: "method,dataset,sigma,psnr_db", 4-decimal dB, report order.
std::string write_results_csv(const EvalGrid& grid);
EvalGrid read_results_csv(const std::string& text, const std::string& origin);

// fig2.csv: "sigma,method,mean_psnr_db" cross-dataset means.
std::string write_fig2_csv(const AggregateReport& report);

// The published benchmark grid (BM3D and the eight trained networks on
// KODAK / McMaster / CBSD68 at sigma 30/60/90) used by the report tooling.
const EvalGrid& reference_table1();

}  // namespace sonn
