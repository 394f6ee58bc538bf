// selfonn: train / denoise / eval / report front end for the denoising stack.
// Exit codes: 0 success, 2 usage/config/data error, 3 numeric failure.

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"

#include "sonn/data.hpp"
#include "sonn/errors.hpp"
#include "sonn/eval.hpp"
#include "sonn/layers.hpp"
#include "sonn/parallel.hpp"
#include "sonn/rng.hpp"
#include "sonn/train.hpp"

namespace fs = std::filesystem;
using namespace sonn;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;

// Anything wrong with flags, config files, or input data.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Fully resolved run parameters (flags > config file > defaults); echoed to
// <out>/run.cfg so any run can be reproduced from its output directory alone.
struct RunConfig {
  std::string command;
  std::string model;
  std::string data;
  std::string test;
  std::vector<int> sigmas;
  std::uint64_t seed = 0;
  int epochs = 100;
  int batch = 64;
  int patches = 2000;
  int patch_size = 40;
  int channels = 1;
  std::string out = ".";
  int threads = 0;
};

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

long long parse_int(const std::string& tok, const std::string& what,
                    long long lo, long long hi) {
  const std::string t = trim(tok);
  std::size_t pos = 0;
  long long v = 0;
  try {
    v = std::stoll(t, &pos);
  } catch (const std::exception&) {
    throw UsageError(what + ": \"" + tok + "\" is not an integer");
  }
  if (pos != t.size())
    throw UsageError(what + ": \"" + tok + "\" is not an integer");
  if (v < lo || v > hi)
    throw UsageError(what + ": " + std::to_string(v) + " is out of range [" +
                     std::to_string(lo) + ", " + std::to_string(hi) + "]");
  return v;
}

std::uint64_t parse_u64(const std::string& tok, const std::string& what) {
  const std::string t = trim(tok);
  if (t.empty() || t.find_first_not_of("0123456789") != std::string::npos)
    throw UsageError(what + ": \"" + tok + "\" is not a non-negative integer");
  try {
    return std::stoull(t);
  } catch (const std::exception&) {
    throw UsageError(what + ": \"" + tok + "\" is out of range");
  }
}

std::vector<int> parse_sigma_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ','))
    out.push_back(static_cast<int>(parse_int(tok, "sigma", 0, 255)));
  if (out.empty()) throw UsageError("sigma: empty list");
  return out;
}

std::string join_sigmas(const std::vector<int>& sigmas) {
  std::string s;
  for (std::size_t i = 0; i < sigmas.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(sigmas[i]);
  }
  return s;
}

// key = value lines, # comments, last duplicate wins.
std::map<std::string, std::string> parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("config: cannot open " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw UsageError("config: " + path + ":" + std::to_string(lineno) +
                       ": expected key = value");
    const std::string key = trim(t.substr(0, eq));
    if (key.empty())
      throw UsageError("config: " + path + ":" + std::to_string(lineno) +
                       ": empty key");
    kv[key] = trim(t.substr(eq + 1));
  }
  return kv;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError(path + ": cannot open");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::uint8_t> read_bytes(const std::string& path) {
  const std::string s = read_text(path);
  return std::vector<std::uint8_t>(s.begin(), s.end());
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError(path + ": cannot write");
  out << text;
  if (!out) throw UsageError(path + ": write failed");
}

void write_bytes(const std::string& path, const std::vector<std::uint8_t>& b) {
  write_text(path, std::string(b.begin(), b.end()));
}

bool has_image_ext(const fs::path& p) {
  std::string e = p.extension().string();
  for (char& c : e) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return e == ".pgm" || e == ".ppm";
}

// A directory of .pgm/.ppm files (or one image file), sorted by path so every
// per-index noise key is stable across runs.
std::vector<std::string> list_image_files(const std::string& where) {
  if (!fs::exists(where)) throw UsageError(where + ": no such file or directory");
  if (fs::is_regular_file(where)) return {where};
  if (!fs::is_directory(where)) throw UsageError(where + ": not a directory");
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(where))
    if (entry.is_regular_file() && has_image_ext(entry.path()))
      files.push_back(entry.path().string());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw UsageError(where + ": no .pgm/.ppm images");
  return files;
}

std::vector<Image> load_images(const std::vector<std::string>& files) {
  std::vector<Image> images;
  images.reserve(files.size());
  for (const auto& f : files) images.push_back(load_image(f));
  return images;
}

std::string dataset_name(const std::string& where) {
  std::string s = where;
  while (s.size() > 1 && (s.back() == '/' || s.back() == '\\')) s.pop_back();
  fs::path p(s);
  if (fs::is_regular_file(p)) return p.stem().string();
  std::string name = p.filename().string();
  if (name.empty() || name == "." || name == "..")
    name = fs::absolute(p).lexically_normal().filename().string();
  if (name.empty()) throw UsageError(where + ": cannot derive a dataset name");
  return name;
}

std::string render_run_cfg(const RunConfig& rc) {
  std::ostringstream o;
  o << "# resolved selfonn run; re-run with: selfonn " << rc.command
    << " --config run.cfg\n";
  o << "command = " << rc.command << "\n";
  o << "model = " << rc.model << "\n";
  o << "data = " << rc.data << "\n";
  o << "test = " << rc.test << "\n";
  o << "sigma = " << join_sigmas(rc.sigmas.empty() ? std::vector<int>{} : rc.sigmas)
    << "\n";
  o << "seed = " << rc.seed << "\n";
  o << "epochs = " << rc.epochs << "\n";
  o << "batch = " << rc.batch << "\n";
  o << "patches = " << rc.patches << "\n";
  o << "patch-size = " << rc.patch_size << "\n";
  o << "channels = " << rc.channels << "\n";
  o << "out = " << rc.out << "\n";
  o << "threads = " << rc.threads << "\n";
  return o.str();
}

void write_run_cfg(const RunConfig& rc) {
  fs::create_directories(rc.out);
  write_text((fs::path(rc.out) / "run.cfg").string(), render_run_cfg(rc));
}

int cmd_train(const RunConfig& rc) {
  if (rc.model.empty()) throw UsageError("train: --model is required");
  if (rc.data.empty()) throw UsageError("train: --data is required");
  if (rc.sigmas.empty()) throw UsageError("train: --sigma is required");
  parse_network_name(rc.model);
  if (rc.channels != 1 && rc.channels != 3)
    throw UsageError("train: channels must be 1 or 3");
  if (rc.epochs < 1) throw UsageError("train: epochs must be >= 1");
  if (rc.batch < 1) throw UsageError("train: batch must be >= 1");
  if (rc.patches < 1) throw UsageError("train: patches must be >= 1");

  const auto files = list_image_files(rc.data);
  const auto images = load_images(files);
  const PatchSet pset = extract_patches(images, rc.patch_size, rc.patches, rc.seed);
  write_run_cfg(rc);

  for (const int sigma : rc.sigmas) {
    const Network net = build_network(rc.model, rc.channels, rc.seed);
    TrainConfig tc;
    tc.epochs = rc.epochs;
    tc.batch_size = rc.batch;
    tc.seed = rc.seed;
    tc.noise = {static_cast<float>(sigma), rc.seed};
    const FitResult r = fit(net, pset, tc);
    const std::string stem = rc.model + "-sigma" + std::to_string(sigma);
    write_bytes((fs::path(rc.out) / (stem + ".sonn")).string(),
                serialize_model(r.best));
    write_text((fs::path(rc.out) / (stem + "-history.csv")).string(),
               history_csv(r.history));
    std::printf("%s: best epoch %d, val PSNR %.2f dB (identity %.2f dB)\n",
                stem.c_str(), r.best_epoch, r.best_val_psnr,
                r.identity_val_psnr);
  }
  return 0;
}

int cmd_denoise(const RunConfig& rc) {
  if (rc.model.empty()) throw UsageError("denoise: --model is required");
  if (rc.data.empty()) throw UsageError("denoise: --data is required");
  if (rc.sigmas.size() > 1)
    throw UsageError("denoise: --sigma takes at most one value");
  const Network net = deserialize_model(read_bytes(rc.model));
  const auto files = list_image_files(rc.data);
  write_run_cfg(rc);

  const bool corrupt = !rc.sigmas.empty() && rc.sigmas[0] > 0;
  for (std::size_t i = 0; i < files.size(); ++i) {
    const Image img = load_image(files[i]);
    if (img.channels != net.spec.channels)
      throw UsageError(files[i] + ": " + std::to_string(img.channels) +
                       "-channel image but model " + net.spec.name +
                       " expects " + std::to_string(net.spec.channels));
    Image noisy = img;
    if (corrupt) {
      const NoiseConfig nc{static_cast<float>(rc.sigmas[0]), rc.seed};
      noisy = add_awgn(img, nc, stream_key(stream::eval_noise, i));
    }
    const Image denoised = denoise_image(net, noisy);
    const std::string ext = img.channels == 3 ? ".ppm" : ".pgm";
    const std::string outp =
        (fs::path(rc.out) /
         (fs::path(files[i]).stem().string() + "_denoised" + ext))
            .string();
    save_image(denoised, outp);
    if (corrupt)
      std::printf("%s: noisy %.2f dB -> denoised %.2f dB (%s)\n",
                  files[i].c_str(), psnr(img, noisy), psnr(img, denoised),
                  outp.c_str());
    else
      std::printf("%s -> %s\n", files[i].c_str(), outp.c_str());
  }
  return 0;
}

int cmd_eval(const RunConfig& rc) {
  if (rc.model.empty()) throw UsageError("eval: --model is required");
  if (rc.test.empty()) throw UsageError("eval: --test is required");
  if (rc.sigmas.empty()) throw UsageError("eval: --sigma is required");
  const Network net = deserialize_model(read_bytes(rc.model));
  const auto files = list_image_files(rc.test);
  const auto images = load_images(files);
  const std::string dataset = dataset_name(rc.test);

  EvalGrid grid;
  const std::string csv_path = (fs::path(rc.out) / "results.csv").string();
  if (fs::exists(csv_path))
    grid = read_results_csv(read_text(csv_path), "results.csv");

  // seed the published baseline rows for any benchmark dataset we touch
  const EvalGrid& ref = reference_table1();
  for (const int sigma : rc.sigmas)
    if (ref.has("BM3D", dataset, sigma))
      grid.set("BM3D", dataset, sigma, ref.get("BM3D", dataset, sigma));

  write_run_cfg(rc);
  for (const int sigma : rc.sigmas) {
    const NoiseConfig nc{static_cast<float>(sigma), rc.seed};
    const double db = evaluate_dataset(net, images, nc);
    grid.set(net.spec.name, dataset, sigma, db);
    std::printf("%s,%s,%d,%.4f\n", net.spec.name.c_str(), dataset.c_str(),
                sigma, db);
  }
  write_text(csv_path, write_results_csv(grid));
  return 0;
}

int cmd_report(const RunConfig& rc) {
  const std::string csv_path = (fs::path(rc.out) / "results.csv").string();
  if (!fs::exists(csv_path))
    throw UsageError(csv_path + ": not found (run eval first, or copy in a "
                                "results file)");
  const EvalGrid grid = read_results_csv(read_text(csv_path), "results.csv");
  const AggregateReport rep = aggregate_report(grid);
  const std::string table1 = render_table1(grid);

  // one ladder of q steps per width that has at least two q values
  std::map<int, std::set<int>> qs_by_width;
  for (const auto& m : grid.methods) {
    try {
      const auto [q, width] = parse_network_name(m);
      qs_by_width[width].insert(q);
    } catch (const std::invalid_argument&) {
    }
  }
  std::vector<DeltaQTable> tables;
  for (const auto& [width, qs] : qs_by_width) {
    if (qs.size() < 2) continue;
    std::vector<std::pair<int, int>> pairs;
    for (auto it = qs.begin(); std::next(it) != qs.end(); ++it)
      pairs.emplace_back(*it, *std::next(it));
    tables.push_back(delta_q_table(grid, width, pairs));
  }

  write_run_cfg(rc);
  write_text((fs::path(rc.out) / "table1.txt").string(), table1);
  write_text((fs::path(rc.out) / "table2.txt").string(), render_table2(tables));
  write_text((fs::path(rc.out) / "fig2.csv").string(), write_fig2_csv(rep));
  for (std::size_t mi = 0; mi < rep.methods.size(); ++mi)
    if (rep.methods[mi] != rep.baseline)
      std::printf("%s: overall %.2f dB, margin over %s %+.2f dB\n",
                  rep.methods[mi].c_str(), rep.overall[mi],
                  rep.baseline.c_str(), rep.margin[mi]);
  std::printf("wrote %s/table1.txt %s/table2.txt %s/fig2.csv\n",
              rc.out.c_str(), rc.out.c_str(), rc.out.c_str());
  return 0;
}

struct SubOpts {
  CLI::App* cmd = nullptr;
  std::map<std::string, CLI::Option*> opt;
};

int run(int argc, char** argv) {
  RunConfig rc;
  std::string sigma_str;
  std::string config_path;
  int threads_flag = 0;

  CLI::App app{"two-hidden-layer convolutional / generative-neuron image "
               "denoisers: train, denoise, eval, report"};
  app.require_subcommand(1);

  auto add_sub = [&](const char* name, const char* desc) {
    SubOpts s;
    s.cmd = app.add_subcommand(name, desc);
    s.opt["model"] = s.cmd->add_option(
        "--model", rc.model, "network name (train) or model file (others)");
    s.opt["data"] = s.cmd->add_option("--data", rc.data,
                                      "directory of .pgm/.ppm input images");
    s.opt["test"] =
        s.cmd->add_option("--test", rc.test, "directory of test images");
    s.opt["sigma"] = s.cmd->add_option("--sigma", sigma_str,
                                       "noise sigma on the 0-255 scale, comma "
                                       "list");
    s.opt["seed"] = s.cmd->add_option("--seed", rc.seed, "master RNG seed");
    s.opt["epochs"] = s.cmd->add_option("--epochs", rc.epochs, "training epochs");
    s.opt["batch"] = s.cmd->add_option("--batch", rc.batch, "minibatch size");
    s.opt["patches"] =
        s.cmd->add_option("--patches", rc.patches, "patches to extract");
    s.opt["patch-size"] =
        s.cmd->add_option("--patch-size", rc.patch_size, "square patch side");
    s.opt["channels"] =
        s.cmd->add_option("--channels", rc.channels, "image channels (1 or 3)");
    s.opt["out"] = s.cmd->add_option("--out", rc.out, "output directory");
    s.opt["threads"] = s.cmd->add_option("--threads", threads_flag,
                                         "worker cap (default: all cores, or "
                                         "SELFONN_THREADS)");
    s.cmd->add_option("--config", config_path,
                      "key = value config file; flags override it");
    return s;
  };

  std::vector<SubOpts> subs;
  subs.push_back(add_sub("train", "train a denoiser on noisy patches"));
  subs.push_back(add_sub("denoise", "run a trained model over images"));
  subs.push_back(add_sub("eval", "PSNR over a test set into results.csv"));
  subs.push_back(add_sub("report", "render table/figure files from results.csv"));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == static_cast<int>(CLI::ExitCodes::Success))
      return app.exit(e);
    app.exit(e);
    return kExitUsage;
  }

  const SubOpts* sub = nullptr;
  for (const auto& s : subs)
    if (s.cmd->parsed()) sub = &s;
  rc.command = sub->cmd->get_name();

  std::optional<int> threads;
  if (sub->opt.at("threads")->count()) threads = threads_flag;

  if (!config_path.empty()) {
    const auto kv = parse_config_file(config_path);
    for (const auto& [key, value] : kv) {
      if (key == "command" || key == "config") continue;
      const auto it = sub->opt.find(key);
      if (it == sub->opt.end())
        throw UsageError("config: unknown key \"" + key + "\"");
      if (it->second->count() > 0) continue;  // flags win
      if (key == "model") rc.model = value;
      else if (key == "data") rc.data = value;
      else if (key == "test") rc.test = value;
      else if (key == "sigma") sigma_str = value;
      else if (key == "seed") rc.seed = parse_u64(value, "seed");
      else if (key == "epochs")
        rc.epochs = static_cast<int>(parse_int(value, "epochs", 1, 1000000));
      else if (key == "batch")
        rc.batch = static_cast<int>(parse_int(value, "batch", 1, 1000000));
      else if (key == "patches")
        rc.patches = static_cast<int>(parse_int(value, "patches", 1, 100000000));
      else if (key == "patch-size")
        rc.patch_size = static_cast<int>(parse_int(value, "patch-size", 1, 4096));
      else if (key == "channels")
        rc.channels = static_cast<int>(parse_int(value, "channels", 1, 3));
      else if (key == "out") rc.out = value;
      else if (key == "threads" && !threads)
        threads = static_cast<int>(parse_int(value, "threads", 1, 4096));
    }
  }

  if (!sigma_str.empty()) rc.sigmas = parse_sigma_list(sigma_str);
  if (!threads) {
    if (const char* env = std::getenv("SELFONN_THREADS"))
      threads = static_cast<int>(parse_int(env, "SELFONN_THREADS", 1, 4096));
  }
  if (threads && *threads < 1) throw UsageError("threads must be >= 1");
  set_threads(threads.value_or(0));
  rc.threads = thread_count();

  if (rc.command == "train") return cmd_train(rc);
  if (rc.command == "denoise") return cmd_denoise(rc);
  if (rc.command == "eval") return cmd_eval(rc);
  return cmd_report(rc);
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const NumericError& e) {
    std::fprintf(stderr, "selfonn: %s\n", e.what());
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "selfonn: %s\n", e.what());
    return kExitUsage;
  }
}
