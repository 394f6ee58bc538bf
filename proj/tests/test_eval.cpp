#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "sonn/eval.hpp"
#include "support/synth.hpp"
#include "support/testutil.hpp"

using namespace sonn;
using namespace sonn::testing;

namespace {

// all-zero weights except a constant bias on the output layer
Network constant_net(float level) {
  Network net;
  net.spec.name = "constant";
  net.spec.channels = 1;
  for (int li = 0; li < 3; ++li) {
    net.spec.layers[li] = {1, 1, 3, 1,
                           li == 2 ? Activation::linear : Activation::tanh};
    net.layers.emplace_back(1, 1, 1, 3);
  }
  net.layers[2].kernels[0].bias[0] = level;
  return net;
}

double round2(double v) { return std::round(v * 100.0) / 100.0; }

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("psnr basics: identity, known offset, and shape checks") {
  const Image img = make_smooth_image(12, 12, 3, 1);
  CHECK(psnr(img, img) == std::numeric_limits<double>::infinity());

  const Image a(8, 8, 1, 0.25f);
  const Image b(8, 8, 1, 0.35f);
  CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-6));

  CHECK_THROWS_AS(psnr(a, Image(8, 7, 1, 0.0f)), std::invalid_argument);
  CHECK_THROWS_AS(psnr(a, Image(8, 8, 3, 0.0f)), std::invalid_argument);
}

TEST_CASE("psnr agrees with a two-pass reference and is symmetric") {
  const Image x = make_smooth_image(16, 16, 1, 2);
  const Image y = add_awgn(x, {40.0f, 9}, 77);

  double acc = 0.0;
  for (std::size_t i = 0; i < x.pixels.size(); ++i) {
    const double d = static_cast<double>(x.pixels[i]) - y.pixels[i];
    acc += d * d;
  }
  const double expected = 10.0 * std::log10(x.pixels.size() / acc);
  CHECK(std::fabs(psnr(x, y) - expected) < 1e-9);
  CHECK(psnr(x, y) == psnr(y, x));

  // same pairs in reversed order: identical up to summation order
  Image xr = x, yr = y;
  std::reverse(xr.pixels.begin(), xr.pixels.end());
  std::reverse(yr.pixels.begin(), yr.pixels.end());
  CHECK(rel_err(psnr(xr, yr), psnr(x, y)) < 1e-12);
}

TEST_CASE("stronger noise always scores lower against the same image") {
  const Image img = make_smooth_image(24, 24, 1, 3);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const double p15 = psnr(img, add_awgn(img, {15.0f, seed}, 5));
    const double p30 = psnr(img, add_awgn(img, {30.0f, seed}, 5));
    CHECK(p15 > p30);
  }
}

TEST_CASE("denoised output stays inside the pixel range") {
  const auto net = build_network("Self-ONN-3-4", 1, 11);
  const Image img = make_smooth_image(20, 20, 1, 4);
  const Image out = denoise_image(net, img);
  REQUIRE(out.height == img.height);
  REQUIRE(out.width == img.width);
  for (const float v : out.pixels) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }
  CHECK_THROWS_WITH_AS(denoise_image(net, Image(2, 2, 1, 0.0f)),
                       doctest::Contains("smaller than 3x3"),
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(denoise_image(net, Image(8, 8, 3, 0.0f)),
                       doctest::Contains("channels"), std::invalid_argument);
}

TEST_CASE("a constant network emits its output bias everywhere") {
  const Network net = constant_net(0.5f);
  const Image out = denoise_image(net, make_smooth_image(10, 14, 1, 5));
  for (const float v : out.pixels) CHECK(v == 0.5f);
}

TEST_CASE("interior pixels only depend on their receptive field") {
  const auto net = build_network("Self-ONN-2-4", 1, 99);
  const Image big = make_smooth_image(80, 80, 1, 6);
  Image crop(40, 40, 1, 0.0f);
  for (int y = 0; y < 40; ++y)
    for (int x = 0; x < 40; ++x) crop.at(0, y, x) = big.at(0, y + 20, x + 20);

  const Image big_out = denoise_image(net, big);
  const Image crop_out = denoise_image(net, crop);
  // three stacked 3x3 layers see 7x7: pixels >= 3 away from the crop border
  // never observe the padding, so both passes compute identical values
  for (int y = 3; y < 37; ++y)
    for (int x = 3; x < 37; ++x)
      CHECK(crop_out.at(0, y, x) == big_out.at(0, y + 20, x + 20));
}

TEST_CASE("evaluate_dataset averages per-image scores with frozen noise") {
  const auto net = build_network("CNN-4", 1, 7);
  const std::vector<Image> images = {make_smooth_image(16, 16, 1, 8),
                                     make_smooth_image(16, 16, 1, 9)};
  const NoiseConfig cfg{30.0f, 11};
  double p[2];
  for (std::size_t i = 0; i < 2; ++i)
    p[i] = psnr(images[i],
                denoise_image(net, add_awgn(images[i], cfg,
                                            stream_key(stream::eval_noise, i))));
  CHECK(evaluate_dataset(net, images, cfg) == (p[0] + p[1]) / 2.0);
  CHECK_THROWS_AS(evaluate_dataset(net, {}, cfg), std::invalid_argument);
}

TEST_CASE("all-perfect reconstructions stay infinite; a mix is an error") {
  const Network net = constant_net(0.5f);
  const std::vector<Image> flat = {Image(8, 8, 1, 0.5f), Image(8, 8, 1, 0.5f)};
  CHECK(evaluate_dataset(net, flat, {0.0f, 1}) ==
        std::numeric_limits<double>::infinity());

  const std::vector<Image> mixed = {Image(8, 8, 1, 0.5f),
                                    make_smooth_image(8, 8, 1, 10)};
  CHECK_THROWS_WITH_AS(evaluate_dataset(net, mixed, {0.0f, 1}),
                       doctest::Contains("mix"), NumericError);
}

TEST_CASE("grid axes normalize to report order regardless of insertions") {
  const std::vector<std::string> methods = {
      "BM3D",           "CNN-64",         "CNN-128",       "Self-ONN-3-64",
      "Self-ONN-3-128", "Self-ONN-5-128", "Self-ONN-7-64"};
  const std::vector<std::string> datasets = {"KODAK", "McMaster", "CBSD68"};
  const std::vector<int> sigmas = {30, 60, 90};

  EvalGrid grid;
  const std::size_t cells = methods.size() * datasets.size() * sigmas.size();
  for (std::size_t i = 0; i < cells; ++i) {
    const std::size_t k = (i * 37) % cells;  // deterministic shuffle
    const std::size_t m = k / 9, d = (k / 3) % 3, s = k % 3;
    grid.set(methods[m], datasets[d], sigmas[s], static_cast<double>(k));
  }
  CHECK(grid.methods == methods);
  CHECK(grid.datasets == datasets);
  CHECK(grid.sigmas == sigmas);
  for (std::size_t k = 0; k < cells; ++k)
    CHECK(grid.get(methods[k / 9], datasets[(k / 3) % 3], sigmas[k % 3]) ==
          static_cast<double>(k));
}

TEST_CASE("grid cells upsert and missing cells are named") {
  EvalGrid grid;
  grid.set("BM3D", "KODAK", 30, 1.0);
  grid.set("BM3D", "KODAK", 30, 2.0);
  CHECK(grid.get("BM3D", "KODAK", 30) == 2.0);
  CHECK(grid.has("BM3D", "KODAK", 30));
  CHECK(!grid.has("CNN-64", "KODAK", 30));
  CHECK_THROWS_WITH_AS(grid.get("CNN-64", "KODAK", 30),
                       doctest::Contains("missing cell: method CNN-64"),
                       IncompleteGridError);
}

TEST_CASE("aggregate means match independent arithmetic on the benchmark") {
  const EvalGrid& grid = reference_table1();
  const AggregateReport rep = aggregate_report(grid);
  REQUIRE(rep.methods.size() == 9);
  REQUIRE(rep.sigmas == std::vector<int>{30, 60, 90});
  CHECK(rep.baseline == "BM3D");

  for (std::size_t m = 0; m < rep.methods.size(); ++m) {
    double sum = 0.0;
    for (const auto& d : grid.datasets)
      for (const int s : grid.sigmas) sum += grid.get(rep.methods[m], d, s);
    CHECK(rel_err(rep.overall[m], sum / 9.0) < 1e-12);
    for (std::size_t s = 0; s < rep.sigmas.size(); ++s) {
      double ssum = 0.0;
      for (const auto& d : grid.datasets)
        ssum += grid.get(rep.methods[m], d, rep.sigmas[s]);
      CHECK(rel_err(rep.sigma_means[m][s], ssum / 3.0) < 1e-12);
    }
  }
}

TEST_CASE("benchmark margins reproduce the published differences") {
  const AggregateReport rep = aggregate_report(reference_table1());
  const auto mi = [&](const std::string& name) {
    return static_cast<std::size_t>(
        std::find(rep.methods.begin(), rep.methods.end(), name) -
        rep.methods.begin());
  };
  const std::size_t base = mi("BM3D");
  REQUIRE(base < rep.methods.size());
  CHECK(rep.margin[base] == 0.0);

  CHECK(round2(rep.overall[mi("Self-ONN-7-128")]) == 25.56);
  CHECK(round2(rep.margin[mi("Self-ONN-7-128")]) == 0.70);

  const double m30 =
      rep.sigma_means[mi("Self-ONN-7-128")][0] - rep.sigma_means[base][0];
  const double m60 =
      rep.sigma_means[mi("Self-ONN-3-128")][1] - rep.sigma_means[base][1];
  const double m90 =
      rep.sigma_means[mi("Self-ONN-7-128")][2] - rep.sigma_means[base][2];
  CHECK(round2(m30) == 0.19);
  CHECK(round2(m60) == 0.60);
  CHECK(round2(m90) == 1.32);
  CHECK(std::round(m90 * 10.0) / 10.0 == 1.3);

  EvalGrid no_baseline;
  no_baseline.set("CNN-64", "KODAK", 30, 28.0);
  CHECK_THROWS_WITH_AS(aggregate_report(no_baseline),
                       doctest::Contains("baseline"), IncompleteGridError);
}

TEST_CASE("per-q gains match independent arithmetic on the benchmark") {
  const EvalGrid& grid = reference_table1();
  const DeltaQTable t = delta_q_table(grid, 64, {{1, 3}, {3, 5}, {5, 7}});
  CHECK(t.width == 64);
  REQUIRE(t.pct.size() == 3);
  REQUIRE(t.pct[0].size() == 3);

  double acc = 0.0;
  for (const std::string& d : {std::string("KODAK"), std::string("McMaster"),
                               std::string("CBSD68")}) {
    const double pa = grid.get("CNN-64", d, 30);
    const double pb = grid.get("Self-ONN-3-64", d, 30);
    acc += 100.0 * (pb - pa) / pa;
  }
  CHECK(rel_err(t.pct[0][0], acc / 3.0) < 1e-12);
  CHECK(std::fabs(t.pct[0][0] - 0.35) < 0.05);   // published: 0.35
  CHECK(std::fabs(t.pct[2][0] - (-0.01)) < 0.05);  // published: -0.01

  EvalGrid flat;
  for (const int s : {30, 60}) {
    flat.set("CNN-16", "KODAK", s, 24.0);
    flat.set("Self-ONN-3-16", "KODAK", s, 24.0);
  }
  const DeltaQTable zero = delta_q_table(flat, 16, {{1, 3}});
  CHECK(zero.pct[0][0] == 0.0);
  CHECK(zero.pct[0][1] == 0.0);
}

TEST_CASE("table renderings carry the fixed layout") {
  const std::string t1 = render_table1(reference_table1());
  CHECK(t1.find("KODAK") != std::string::npos);
  CHECK(t1.find("McMaster") != std::string::npos);
  CHECK(t1.find("CBSD68") != std::string::npos);
  CHECK(t1.find("  s=30    s=60    s=90") != std::string::npos);
  const std::string bm3d_row =
      "BM3D             |   28.58   25.05   22.44"
      " |   29.30   24.76   21.59 |   27.17   23.65   21.27\n";
  CHECK(t1.find(bm3d_row) != std::string::npos);
  // report order: the baseline row comes first
  CHECK(t1.find("BM3D") < t1.find("CNN-64"));
  CHECK(t1.find("\nCNN-64 ") < t1.find("\nSelf-ONN-3-64"));

  EvalGrid flat;
  for (const int s : {30, 60}) {
    flat.set("CNN-2", "KODAK", s, 20.0);
    flat.set("Self-ONN-3-2", "KODAK", s, 20.5);
  }
  const std::string t2 = render_table2({delta_q_table(flat, 2, {{1, 3}})});
  CHECK(t2 == "Neurons  dQ      sigma=30  sigma=60\n"
              "2        1->3        2.50      2.50\n");
}

TEST_CASE("results csv round-trips bit-for-bit") {
  const EvalGrid& grid = reference_table1();
  const std::string text = write_results_csv(grid);
  CHECK(text.rfind("method,dataset,sigma,psnr_db\n", 0) == 0);
  CHECK(text.find("BM3D,KODAK,30,28.5800\n") != std::string::npos);

  const EvalGrid back = read_results_csv(text, "results.csv");
  CHECK(back.methods == grid.methods);
  CHECK(back.datasets == grid.datasets);
  CHECK(back.sigmas == grid.sigmas);
  for (const auto& m : grid.methods)
    for (const auto& d : grid.datasets)
      for (const int s : grid.sigmas)
        CHECK(back.get(m, d, s) == grid.get(m, d, s));
}

TEST_CASE("results csv reader rejects malformed input by name") {
  const auto read = [](const std::string& text) {
    return read_results_csv(text, "in.csv");
  };
  CHECK_THROWS_WITH_AS(read("method,dataset,psnr_db\n"),
                       doctest::Contains("header"), DecodeError);
  CHECK_THROWS_WITH_AS(read("method,dataset,sigma,psnr_db\nBM3D,KODAK,30\n"),
                       doctest::Contains("expected 4"), DecodeError);
  CHECK_THROWS_WITH_AS(
      read("method,dataset,sigma,psnr_db\nBM3D,KODAK,3x,28.0\n"),
      doctest::Contains("bad sigma"), DecodeError);
  CHECK_THROWS_WITH_AS(
      read("method,dataset,sigma,psnr_db\nBM3D,KODAK,30,fast\n"),
      doctest::Contains("bad psnr"), DecodeError);

  // comments and blank lines are fine; duplicate rows upsert
  const EvalGrid g = read(
      "# produced by a tool\n\nmethod,dataset,sigma,psnr_db\n"
      "BM3D,KODAK,30,28.0000\n# note\nBM3D,KODAK,30,29.0000\n");
  CHECK(g.get("BM3D", "KODAK", 30) == 29.0);
}

TEST_CASE("fig2 csv lists cross-dataset means per sigma") {
  const std::string text = write_fig2_csv(aggregate_report(reference_table1()));
  CHECK(text.rfind("sigma,method,mean_psnr_db\n30,BM3D,28.3500\n", 0) == 0);
  CHECK(text.find("\n60,Self-ONN-3-128,25.0900\n") != std::string::npos);
  CHECK(text.find("\n90,") != std::string::npos);
}

TEST_CASE("the benchmark grid matches its pinned csv") {
  std::ifstream in(std::string(SONN_DATA_DIR) + "/table1_reference.csv",
                   std::ios::binary);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  CHECK(ss.str() == write_results_csv(reference_table1()));
}

}  // TEST_SUITE
