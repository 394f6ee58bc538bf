#include "sonn/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <stdexcept>
#include <tuple>

#include "sonn/parallel.hpp"
#include "sonn/rng.hpp"

namespace sonn {

double psnr(const Image& reference, const Image& test) {
  if (reference.height != test.height || reference.width != test.width ||
      reference.channels != test.channels)
    throw std::invalid_argument(
        "psnr: image shapes differ (" + std::to_string(reference.height) + "x" +
        std::to_string(reference.width) + "x" +
        std::to_string(reference.channels) + " vs " +
        std::to_string(test.height) + "x" + std::to_string(test.width) + "x" +
        std::to_string(test.channels) + ")");
  double acc = 0.0;
  for (std::size_t i = 0; i < reference.pixels.size(); ++i) {
    const double d = static_cast<double>(reference.pixels[i]) - test.pixels[i];
    acc += d * d;
  }
  return psnr_from_mse(acc / static_cast<double>(reference.pixels.size()));
}

Image denoise_image(const Network& net, const Image& noisy) {
  if (noisy.height < 3 || noisy.width < 3)
    throw std::invalid_argument("denoise_image: image is " +
                                std::to_string(noisy.height) + "x" +
                                std::to_string(noisy.width) +
                                ", smaller than 3x3");
  if (noisy.channels != net.channels())
    throw std::invalid_argument(
        "denoise_image: image has " + std::to_string(noisy.channels) +
        " channels but the model expects " + std::to_string(net.channels()));
  const auto [y, caches] = network_forward(net, image_to_tensor(noisy));
  return tensor_to_image(y, 0);
}

double evaluate_dataset(const Network& net, const std::vector<Image>& images,
                        const NoiseConfig& cfg) {
  if (images.empty())
    throw std::invalid_argument("evaluate_dataset: empty image list");
  std::vector<double> scores(images.size());
  parallel_for(images.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const Image noisy =
          add_awgn(images[i], cfg, stream_key(stream::eval_noise, i));
      scores[i] = psnr(images[i], denoise_image(net, noisy));
    }
  });
  std::size_t infinities = 0;
  double sum = 0.0;
  for (const double s : scores) {
    if (std::isinf(s))
      ++infinities;
    else
      sum += s;
  }
  if (infinities == scores.size())
    return std::numeric_limits<double>::infinity();
  if (infinities > 0)
    throw NumericError(
        "evaluate_dataset: mix of infinite and finite per-image PSNR (" +
        std::to_string(infinities) + " of " + std::to_string(scores.size()) +
        " infinite)");
  return sum / static_cast<double>(scores.size());
}

namespace {

// Report row order: BM3D, then networks by (Q, width), then anything else
// alphabetically.
std::tuple<int, int, int, std::string> method_key(const std::string& name) {
  if (name == "BM3D") return {0, 0, 0, name};
  try {
    const auto [q, width] = parse_network_name(name);
    return {1, q, width, name};
  } catch (const std::invalid_argument&) {
    return {2, 0, 0, name};
  }
}

int dataset_key(const std::string& name) {
  if (name == "KODAK") return 0;
  if (name == "McMaster") return 1;
  if (name == "CBSD68") return 2;
  return 3;
}

// Index of value in axis, inserting it at its ordered position when absent.
// *grown reports whether the axis widened.
template <class T, class Key>
std::size_t axis_index(std::vector<T>& axis, const T& value, Key key,
                       bool* grown) {
  const auto it = std::find(axis.begin(), axis.end(), value);
  if (it != axis.end()) {
    *grown = false;
    return static_cast<std::size_t>(it - axis.begin());
  }
  *grown = true;
  const auto at = std::lower_bound(
      axis.begin(), axis.end(), value,
      [&](const T& a, const T& b) { return key(a) < key(b); });
  // sequence the insert before begin(): insert reallocates, and the two
  // operands of operator- are unsequenced
  const auto inserted = axis.insert(at, value);
  return static_cast<std::size_t>(inserted - axis.begin());
}

}  // namespace

void EvalGrid::set(const std::string& method, const std::string& dataset,
                   int sigma, double db) {
  const std::size_t old_m = methods.size();
  const std::size_t old_d = datasets.size();
  const std::size_t old_s = sigmas.size();
  bool gm = false, gd = false, gs = false;
  const std::size_t m = axis_index(
      methods, method, [](const std::string& v) { return method_key(v); }, &gm);
  const std::size_t d = axis_index(
      datasets, dataset,
      [](const std::string& v) { return std::make_pair(dataset_key(v), v); },
      &gd);
  const std::size_t s =
      axis_index(sigmas, sigma, [](int v) { return v; }, &gs);
  if (gm || gd || gs) {
    // rebuild the dense grid around the widened axes, shifting old cells
    // past each insertion point
    const std::vector<double> old_cells = std::move(psnr_db);
    psnr_db.assign(methods.size() * datasets.size() * sigmas.size(),
                   std::numeric_limits<double>::quiet_NaN());
    for (std::size_t om = 0; om < old_m; ++om)
      for (std::size_t od = 0; od < old_d; ++od)
        for (std::size_t os = 0; os < old_s; ++os) {
          const std::size_t mm = om + (gm && om >= m ? 1 : 0);
          const std::size_t dd = od + (gd && od >= d ? 1 : 0);
          const std::size_t ss = os + (gs && os >= s ? 1 : 0);
          psnr_db[(mm * datasets.size() + dd) * sigmas.size() + ss] =
              old_cells[(om * old_d + od) * old_s + os];
        }
  }
  psnr_db[(m * datasets.size() + d) * sigmas.size() + s] = db;
}

bool EvalGrid::has(const std::string& method, const std::string& dataset,
                   int sigma) const {
  const auto m = std::find(methods.begin(), methods.end(), method);
  const auto d = std::find(datasets.begin(), datasets.end(), dataset);
  const auto s = std::find(sigmas.begin(), sigmas.end(), sigma);
  if (m == methods.end() || d == datasets.end() || s == sigmas.end())
    return false;
  const double v =
      psnr_db[((m - methods.begin()) * datasets.size() + (d - datasets.begin())) *
                  sigmas.size() +
              (s - sigmas.begin())];
  return !std::isnan(v);
}

double EvalGrid::get(const std::string& method, const std::string& dataset,
                     int sigma) const {
  if (!has(method, dataset, sigma))
    throw IncompleteGridError("missing cell: method " + method + ", dataset " +
                              dataset + ", sigma " + std::to_string(sigma));
  const auto m = std::find(methods.begin(), methods.end(), method);
  const auto d = std::find(datasets.begin(), datasets.end(), dataset);
  const auto s = std::find(sigmas.begin(), sigmas.end(), sigma);
  return psnr_db[((m - methods.begin()) * datasets.size() +
                  (d - datasets.begin())) *
                     sigmas.size() +
                 (s - sigmas.begin())];
}

AggregateReport aggregate_report(const EvalGrid& grid,
                                 const std::string& baseline) {
  AggregateReport rep;
  rep.methods = grid.methods;
  rep.sigmas = grid.sigmas;
  rep.baseline = baseline;
  rep.sigma_means.resize(grid.methods.size());
  rep.overall.resize(grid.methods.size());
  for (std::size_t m = 0; m < grid.methods.size(); ++m) {
    rep.sigma_means[m].resize(grid.sigmas.size());
    double total = 0.0;
    for (std::size_t s = 0; s < grid.sigmas.size(); ++s) {
      double acc = 0.0;
      for (const auto& d : grid.datasets)
        acc += grid.get(grid.methods[m], d, grid.sigmas[s]);
      rep.sigma_means[m][s] = acc / static_cast<double>(grid.datasets.size());
      total += acc;
    }
    rep.overall[m] =
        total / static_cast<double>(grid.datasets.size() * grid.sigmas.size());
  }
  const auto b = std::find(rep.methods.begin(), rep.methods.end(), baseline);
  if (b == rep.methods.end())
    throw IncompleteGridError("missing cell: baseline method " + baseline +
                              " not in grid");
  const double base = rep.overall[b - rep.methods.begin()];
  rep.margin.resize(rep.methods.size());
  for (std::size_t m = 0; m < rep.methods.size(); ++m)
    rep.margin[m] = rep.overall[m] - base;
  return rep;
}

DeltaQTable delta_q_table(const EvalGrid& grid, int width,
                          const std::vector<std::pair<int, int>>& q_pairs) {
  DeltaQTable t;
  t.width = width;
  t.q_pairs = q_pairs;
  t.sigmas = grid.sigmas;
  t.pct.resize(q_pairs.size());
  for (std::size_t p = 0; p < q_pairs.size(); ++p) {
    const std::string a = render_network_name(q_pairs[p].first, width);
    const std::string b = render_network_name(q_pairs[p].second, width);
    t.pct[p].resize(grid.sigmas.size());
    for (std::size_t s = 0; s < grid.sigmas.size(); ++s) {
      double acc = 0.0;
      for (const auto& d : grid.datasets) {
        const double pa = grid.get(a, d, grid.sigmas[s]);
        const double pb = grid.get(b, d, grid.sigmas[s]);
        acc += 100.0 * (pb - pa) / pa;
      }
      t.pct[p][s] = acc / static_cast<double>(grid.datasets.size());
    }
  }
  return t;
}

namespace {

std::string fixed(double v, int decimals, int width) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%*.*f", width, decimals, v);
  return buf;
}

}  // namespace

std::string render_table1(const EvalGrid& grid) {
  const int name_w = 16;
  std::string out;
  // dataset group header
  out += std::string(name_w, ' ');
  for (const auto& d : grid.datasets) {
    const int group = static_cast<int>(grid.sigmas.size()) * 8;
    const int lead = std::max(1, (group - static_cast<int>(d.size())) / 2);
    const int tail = std::max(0, group - lead - static_cast<int>(d.size()));
    out += " |" + std::string(lead, ' ') + d + std::string(tail, ' ');
  }
  out += "\n" + std::string(name_w, ' ');
  for (std::size_t d = 0; d < grid.datasets.size(); ++d) {
    out += " |";
    for (const int s : grid.sigmas)
      out += "  s=" + std::to_string(s) + std::string(s < 100 ? 2 : 1, ' ');
  }
  out += "\n";
  for (const auto& m : grid.methods) {
    out += m + std::string(name_w > static_cast<int>(m.size())
                               ? name_w - m.size()
                               : 1,
                           ' ');
    for (const auto& d : grid.datasets) {
      out += " |";
      for (const int s : grid.sigmas) out += fixed(grid.get(m, d, s), 2, 8);
    }
    out += "\n";
  }
  return out;
}

std::string render_table2(const std::vector<DeltaQTable>& tables) {
  std::string out = "Neurons  dQ    ";
  if (!tables.empty())
    for (const int s : tables[0].sigmas)
      out += "  sigma=" + std::to_string(s);
  out += "\n";
  for (const auto& t : tables) {
    for (std::size_t p = 0; p < t.q_pairs.size(); ++p) {
      const std::string neurons = p == 0 ? std::to_string(t.width) : "";
      out += neurons + std::string(9 - neurons.size(), ' ');
      const std::string pair = std::to_string(t.q_pairs[p].first) + "->" +
                               std::to_string(t.q_pairs[p].second);
      out += pair + std::string(6 - pair.size(), ' ');
      for (std::size_t s = 0; s < t.sigmas.size(); ++s)
        out += fixed(t.pct[p][s], 2, 10);
      out += "\n";
    }
  }
  return out;
}

std::string write_results_csv(const EvalGrid& grid) {
  std::string out = "method,dataset,sigma,psnr_db\n";
  for (const auto& m : grid.methods)
    for (const auto& d : grid.datasets)
      for (const int s : grid.sigmas)
        if (grid.has(m, d, s)) {
          char buf[64];
          std::snprintf(buf, sizeof buf, "%.4f", grid.get(m, d, s));
          out += m + "," + d + "," + std::to_string(s) + "," + buf + "\n";
        }
  return out;
}

EvalGrid read_results_csv(const std::string& text, const std::string& origin) {
  EvalGrid grid;
  std::size_t pos = 0;
  int lineno = 0;
  bool saw_header = false;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) nl = text.size();
    const std::string line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    if (!saw_header) {
      if (line != "method,dataset,sigma,psnr_db")
        throw DecodeError(DecodeError::Code::malformed,
                          origin + ": line 1 must be the header "
                                   "\"method,dataset,sigma,psnr_db\"");
      saw_header = true;
      continue;
    }
    std::vector<std::string> fields;
    std::size_t f0 = 0;
    while (true) {
      const std::size_t comma = line.find(',', f0);
      fields.push_back(line.substr(f0, comma - f0));
      if (comma == std::string::npos) break;
      f0 = comma + 1;
    }
    if (fields.size() != 4)
      throw DecodeError(DecodeError::Code::malformed,
                        origin + ": line " + std::to_string(lineno) +
                            ": expected 4 comma-separated fields");
    char* end = nullptr;
    const long sigma = std::strtol(fields[2].c_str(), &end, 10);
    if (fields[2].empty() || *end != '\0' || sigma < 0)
      throw DecodeError(DecodeError::Code::malformed,
                        origin + ": line " + std::to_string(lineno) +
                            ": bad sigma \"" + fields[2] + "\"");
    const double db = std::strtod(fields[3].c_str(), &end);
    if (fields[3].empty() || *end != '\0')
      throw DecodeError(DecodeError::Code::malformed,
                        origin + ": line " + std::to_string(lineno) +
                            ": bad psnr \"" + fields[3] + "\"");
    grid.set(fields[0], fields[1], static_cast<int>(sigma), db);
  }
  return grid;
}

std::string write_fig2_csv(const AggregateReport& report) {
  std::string out = "sigma,method,mean_psnr_db\n";
  for (std::size_t s = 0; s < report.sigmas.size(); ++s)
    for (std::size_t m = 0; m < report.methods.size(); ++m) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.4f", report.sigma_means[m][s]);
      out += std::to_string(report.sigmas[s]) + "," + report.methods[m] + "," +
             buf + "\n";
    }
  return out;
}

const EvalGrid& reference_table1() {
  static const EvalGrid grid = [] {
    // rows: KODAK 30/60/90, McMaster 30/60/90, CBSD68 30/60/90
    struct Row {
      const char* method;
      double v[9];
    };
    static constexpr Row rows[] = {
        {"BM3D", {28.58, 25.05, 22.44, 29.30, 24.76, 21.59, 27.17, 23.65, 21.27}},
        {"CNN-64", {28.43, 25.01, 23.08, 29.29, 25.69, 23.55, 27.45, 24.26, 22.40}},
        {"CNN-128", {28.47, 25.08, 23.11, 29.28, 25.73, 23.55, 27.47, 24.28, 22.43}},
        {"Self-ONN-3-64",
         {28.54, 25.09, 23.12, 29.39, 25.77, 23.66, 27.55, 24.31, 22.47}},
        {"Self-ONN-3-128",
         {28.55, 25.12, 23.10, 29.41, 25.82, 23.59, 27.56, 24.33, 22.45}},
        {"Self-ONN-5-64",
         {28.56, 25.10, 23.12, 29.40, 25.81, 23.65, 27.55, 24.34, 22.46}},
        {"Self-ONN-5-128",
         {28.58, 25.12, 23.11, 29.39, 25.76, 23.64, 27.56, 24.32, 22.47}},
        {"Self-ONN-7-64",
         {28.54, 25.12, 23.12, 29.40, 25.77, 23.64, 27.56, 24.33, 22.46}},
        {"Self-ONN-7-128",
         {28.57, 25.13, 23.12, 29.47, 25.76, 23.65, 27.57, 24.33, 22.48}},
    };
    static const char* datasets[] = {"KODAK", "McMaster", "CBSD68"};
    static const int sigmas[] = {30, 60, 90};
    EvalGrid g;
    for (const Row& r : rows)
      for (int d = 0; d < 3; ++d)
        for (int s = 0; s < 3; ++s)
          g.set(r.method, datasets[d], sigmas[s], r.v[d * 3 + s]);
    return g;
  }();
  return grid;
}

}  // namespace sonn
