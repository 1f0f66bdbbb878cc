// Acceptance gate. Prints one PASS/FAIL line per criterion and exits non-zero
// if any criterion fails.

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "support.hpp"
#include "synthetic.hpp"
#include "texanom/autoencoder.hpp"
#include "texanom/cli.hpp"
#include "texanom/metrics.hpp"
#include "texanom/pipeline.hpp"
#include "texanom/pyramid.hpp"
#include "texanom/similarity.hpp"

using namespace texanom;
namespace fs = std::filesystem;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& title, const std::function<Outcome()>& body) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  if (!o.pass) ++failures;
  std::printf("C%-2d %s  %s  [%s] (%.1f s)\n", id, o.pass ? "PASS" : "FAIL", title.c_str(), o.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "texanom");
  return cli::run(args);
}

std::vector<double> loss_column(const fs::path& csv) {
  std::ifstream in(csv);
  std::string line;
  std::getline(in, line);
  std::vector<double> out;
  while (std::getline(in, line)) {
    const auto a = line.find(',');
    const auto b = line.find(',', a + 1);
    out.push_back(std::stod(line.substr(a + 1, b - a - 1)));
  }
  return out;
}

// -- C1 ---------------------------------------------------------------------

Outcome c1() {
  const auto t0 = Clock::now();
  int checked = 0;
  for (int o = 1; o <= 8; ++o)
    for (int s = 2; s <= 9; ++s) {
      const int expected = o * (s - 2) + 2;
      const int side = 1 << (s - 1);
      const pyramid::Decomposer d(pyramid::DecomposerConfig::square(side, o, s));
      const auto dec = d.decompose(RealGrid(side, side, 0.5));
      if (pyramid::subband_count(o, s) != expected || d.subband_count() != expected ||
          static_cast<int>(dec.size()) != expected)
        return {false, fmt("mismatch at O=%d S=%d", o, s)};
      ++checked;
    }
  const double t = seconds_since(t0);
  return {t < 1.0, fmt("%d (O,S) pairs, %.3f s of 1 s budget", checked, t)};
}

// -- C2 ---------------------------------------------------------------------

Outcome c2() {
  Rng rng(2024);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> theta(-std::numbers::pi, std::numbers::pi);
  std::uniform_int_distribution<int> len(1, 81);
  std::uniform_real_distribution<double> scale_exp(-3.0, 2.0);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double scale = std::pow(10.0, scale_exp(rng));
    std::vector<cplx> w(static_cast<std::size_t>(len(rng)));
    for (auto& v : w) v = scale * cplx(n(rng), n(rng));
    const cplx rot = std::polar(1.0, theta(rng));
    std::vector<cplx> wr(w.size());
    for (std::size_t j = 0; j < w.size(); ++j) wr[j] = rot * w[j];
    worst = std::max(worst, std::fabs(similarity::cwssim_window(w, w, 0.01) - 1.0));
    worst = std::max(worst, std::fabs(similarity::cwssim_window(w, wr, 0.01) - 1.0));
  }
  return {worst <= 1e-9, fmt("1000 windows, max |score - 1| = %.2e (tol 1e-9)", worst)};
}

// -- C3 ---------------------------------------------------------------------

Outcome c3() {
  const auto t0 = Clock::now();
  const auto cfg = pyramid::DecomposerConfig::square(32, 4, 3);
  const pyramid::Decomposer dec(cfg);
  const similarity::CwssimConfig cw{};

  const auto x = testing::random_grid(32, 32, 31);
  auto y = x;
  Rng rng(32);
  std::normal_distribution<double> n(0.0, 0.1);
  for (auto& v : y.values()) v = std::clamp(v + n(rng), 0.0, 1.0);
  const auto analytic = similarity::cwssim_loss_grad(x, y, dec, cw);
  const auto numeric = testing::numeric_gradient([&](const RealGrid& yy) { return similarity::cwssim_loss(x, yy, dec, cw); }, y);
  const double loss_err = testing::max_rel_error(analytic.values(), numeric.values());

  // Two layers: one encoder convolution and one decoder deconvolution.
  auto m = autoencoder::init_model(autoencoder::ArchitectureSpec::symmetric({4}), 33);
  const similarity::Loss loss(similarity::LossKind::cwssim, 32, cfg, cw);
  const auto input = testing::random_grid(32, 32, 34);
  const auto fr = autoencoder::forward(std::vector<RealGrid>{input}, m);
  const auto lg = loss.value_and_grad(input, fr.outputs[0]);
  const auto g = autoencoder::backward(fr.cache, std::vector<RealGrid>{lg.grad}, m).flatten();
  auto flat = m.flatten();
  std::vector<double> fd(flat.size());
  const double h = 1e-5;
  for (std::size_t i = 0; i < flat.size(); ++i) {
    const double keep = flat[i];
    flat[i] = keep + h;
    m.assign(flat);
    const double up = loss.value(input, autoencoder::reconstruct(input, m));
    flat[i] = keep - h;
    m.assign(flat);
    const double down = loss.value(input, autoencoder::reconstruct(input, m));
    flat[i] = keep;
    fd[i] = (up - down) / (2 * h);
  }
  const double net_err = testing::max_rel_error(g, fd);
  const double t = seconds_since(t0);
  return {loss_err < 1e-4 && net_err < 1e-4 && t < 120.0,
          fmt("loss grad rel err %.2e, network (%zu params) rel err %.2e, tol 1e-4, %.1f s of 120 s", loss_err,
              flat.size(), net_err, t)};
}

// -- C4 ---------------------------------------------------------------------

Outcome c4() {
  Rng rng(44);
  std::uniform_int_distribution<int> pick_o(1, 6), pick_s(2, 4), pick_k(2, 5);
  std::uniform_real_distribution<double> coef(-2.0, 2.0);
  double lin = 0.0, adj = 0.0;
  for (int i = 0; i < 100; ++i) {
    const int o = pick_o(rng), s = pick_s(rng);
    const int unit = 1 << (s - 1);
    const int rows = unit * pick_k(rng), cols = unit * pick_k(rng);
    const pyramid::Decomposer d({o, s, rows, cols});
    const auto x = testing::random_grid(rows, cols, 1000 + i, -1, 1);
    const auto y = testing::random_grid(rows, cols, 2000 + i, -1, 1);
    const double a = coef(rng), b = coef(rng);
    RealGrid z(rows, cols);
    for (std::size_t j = 0; j < z.size(); ++j) z[j] = a * x[j] + b * y[j];
    const auto dz = d.decompose(z), dx = d.decompose(x), dy = d.decompose(y);
    double num = 0.0, den = 1e-300;
    for (std::size_t k = 0; k < dz.size(); ++k) {
      const auto& gz = dz[k].coeffs;
      for (std::size_t j = 0; j < gz.size(); ++j) {
        const cplx want = a * dx[k].coeffs[j] + b * dy[k].coeffs[j];
        num = std::max(num, std::abs(gz[j] - want));
        den = std::max(den, std::abs(want));
      }
    }
    lin = std::max(lin, num / den);

    auto g = d.zeros();
    for (std::size_t k = 0; k < g.size(); ++k) g[k].coeffs = testing::random_complex(g[k].coeffs.rows(), g[k].coeffs.cols(), 3000 + 10 * i + k);
    const double lhs = pyramid::inner(dx, g);
    const auto at = d.adjoint(g);
    double rhs = 0.0, scale = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      rhs += x[j] * at[j];
      scale += std::fabs(x[j] * at[j]);
    }
    adj = std::max(adj, std::fabs(lhs - rhs) / std::max(scale, 1e-300));
  }
  return {lin <= 1e-10 && adj <= 1e-10,
          fmt("100 instances, linearity rel err %.2e, adjoint rel err %.2e (tol 1e-10)", lin, adj)};
}

// -- C5 ---------------------------------------------------------------------

std::vector<int> flood_fill_labels(const AnomalyMask& m, int connectivity) {
  const int rows = m.rows(), cols = m.cols();
  std::vector<int> lab(m.size(), 0);
  int next = 0;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      if (!m(r, c) || lab[r * cols + c]) continue;
      lab[r * cols + c] = ++next;
      std::deque<std::pair<int, int>> q{{r, c}};
      while (!q.empty()) {
        const auto [pr, pc] = q.front();
        q.pop_front();
        for (int dr = -1; dr <= 1; ++dr)
          for (int dc = -1; dc <= 1; ++dc) {
            if ((dr == 0 && dc == 0) || (connectivity == 4 && dr != 0 && dc != 0)) continue;
            const int nr = pr + dr, nc = pc + dc;
            if (nr < 0 || nc < 0 || nr >= rows || nc >= cols || !m(nr, nc) || lab[nr * cols + nc]) continue;
            lab[nr * cols + nc] = next;
            q.emplace_back(nr, nc);
          }
      }
    }
  return lab;
}

Outcome c5() {
  Rng rng(55);
  std::uniform_int_distribution<int> size(2, 300), levels(1, 40);
  std::bernoulli_distribution coin(0.5);
  double auc_err = 0.0, pauc_err = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const int n = size(rng);
    const bool discrete = coin(rng);
    std::uniform_int_distribution<int> level(0, levels(rng));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> s(n);
    std::vector<std::uint8_t> l(n);
    for (int j = 0; j < n; ++j) {
      s[j] = discrete ? level(rng) / 8.0 : u(rng);
      l[j] = coin(rng);
    }
    l[0] = 1;
    l[1] = 0;
    double wins = 0.0, pos = 0.0, neg = 0.0;
    for (int a = 0; a < n; ++a) {
      (l[a] ? pos : neg) += 1.0;
      if (!l[a]) continue;
      for (int b = 0; b < n; ++b)
        if (!l[b]) wins += s[a] > s[b] ? 1.0 : (s[a] == s[b] ? 0.5 : 0.0);
    }
    const auto curve = metrics::roc_curve(s, l);
    const double a = metrics::auc(curve);
    auc_err = std::max(auc_err, std::fabs(a - wins / (pos * neg)));
    pauc_err = std::max(pauc_err, std::fabs(metrics::partial_auc_normalized(curve, 1.0) - a));
  }

  int mismatched = 0;
  std::uniform_real_distribution<double> density(0.05, 0.7);
  for (int i = 0; i < 200; ++i) {
    AnomalyMask m(64, 64, 0);
    std::bernoulli_distribution on(density(rng));
    for (auto& v : m.values()) v = on(rng);
    for (int conn : {4, 8}) {
      const auto cc = metrics::connected_components(m, conn);
      const auto want = flood_fill_labels(m, conn);
      const auto got = cc.labels.values();
      if (!std::equal(got.begin(), got.end(), want.begin())) ++mismatched;
      const int oracle_count = want.empty() ? 0 : *std::max_element(want.begin(), want.end());
      if (static_cast<int>(cc.count()) != oracle_count) ++mismatched;
    }
  }
  return {auc_err <= 1e-12 && pauc_err <= 1e-12 && mismatched == 0,
          fmt("AUC vs Mann-Whitney %.1e, pAUC(1.0) vs AUC %.1e (tol 1e-12); %d/400 component labelings differ",
              auc_err, pauc_err, mismatched)};
}

// -- C6 ---------------------------------------------------------------------

Outcome c6() {
  Rng rng(66);
  std::uniform_int_distribution<int> size(10000, 60000);
  double worst = 0.0;
  const int pools = 20;
  for (int i = 0; i < pools; ++i) {
    const int n = size(rng);
    std::vector<double> s(n);
    switch (i % 4) {
      case 0: { std::uniform_real_distribution<double> d(0, 1); for (auto& v : s) v = d(rng); break; }
      case 1: { std::normal_distribution<double> d(0.2, 0.05); for (auto& v : s) v = d(rng); break; }
      case 2: { std::exponential_distribution<double> d(8.0); for (auto& v : s) v = d(rng); break; }
      default: { std::gamma_distribution<double> d(2.0, 0.1); for (auto& v : s) v = d(rng); }
    }
    const double gamma = pipeline::calibrate_threshold(s, 0.05);
    worst = std::max(worst, std::fabs(pipeline::empirical_fpr(s, gamma) - 0.05));
  }
  return {worst <= 0.005, fmt("%d pools of 10k-60k scores, max |FPR - 0.05| = %.2e (tol 5e-3)", pools, worst)};
}

// -- C7 / C9 ----------------------------------------------------------------

struct DeskRun {
  std::vector<double> losses;
  double auc = 0.0;
  double seconds = 0.0;
};

struct Desk {
  fs::path root = testing::scratch_dir("acceptance_desk");
  fs::path data = root / "data";
  std::vector<std::string> validation;

  Desk() { validation = synthetic::write_dataset(data, synthetic::DatasetLayout{}, {}, 7); }

  fs::path config(const std::string& name, const std::string& loss) const {
    const auto path = root / (name + ".toml");
    std::ofstream out(path);
    out << "seed = 5\n[dataset]\nroot = \"" << data.string() << "\"\nvalidation = [";
    for (std::size_t i = 0; i < validation.size(); ++i) out << (i ? ", " : "") << "\"" << validation[i] << "\"";
    out << "]\n[architecture]\nwidths = [8, 16, 32]\n"
        << "[train]\nloss = \"" << loss << "\"\nepochs = 20\npatch_count = 2000\npatch_size = 64\nbatch_size = 8\n"
        << "[pyramid]\norientations = 4\nscales = 3\n"
        << "[inference]\npatch_size = 64\nstride = 16\nfusion_scales = [3, 4, 5]\n"
        << "[output]\ndir = \"" << (root / name).string() << "\"\n";
    return path;
  }

  DeskRun run(const std::string& name, const std::string& loss) const {
    const auto t0 = Clock::now();
    const auto cfg = config(name, loss);
    const auto out = root / name;
    if (run_cli({"train", "--config", cfg.string()}) != 0) throw std::runtime_error(name + ": train failed");
    const auto model = (out / "model.cwae").string();
    if (run_cli({"calibrate", "--config", cfg.string(), "--model", model}) != 0)
      throw std::runtime_error(name + ": calibrate failed");
    if (run_cli({"evaluate", "--config", cfg.string(), "--model", model, "--dump-maps", (out / "maps").string()}) != 0)
      throw std::runtime_error(name + ": evaluate failed");
    DeskRun r;
    r.losses = loss_column(out / "loss.csv");
    r.auc = json::parse(slurp(out / "report.json"))["auc"].get<double>();
    r.seconds = seconds_since(t0);
    return r;
  }
};

Outcome c7(const Desk& desk, DeskRun& cw) {
  cw = desk.run("cwssim", "cwssim");
  const auto mse = desk.run("mse", "mse");
  const double first = cw.losses.front(), last = cw.losses.back();
  const double drop = 1.0 - last / first;
  const double minutes = (cw.seconds + mse.seconds) / 60.0;
  const bool drop_ok = cw.losses.size() == 20 && drop >= 0.5;
  const bool auc_ok = cw.auc >= 0.90;
  const bool order_ok = mse.auc < cw.auc;
  const bool time_ok = cw.seconds < 1800.0;
  auto mark = [](bool b) { return b ? "ok" : "FAILED"; };
  return {drop_ok && auc_ok && order_ok && time_ok,
          fmt("loss %.4f -> %.4f, drop %.1f%% >= 50%% %s; AUC %.4f >= 0.90 %s; MSE AUC %.4f < %.4f %s; "
              "CW-SSIM run %.1f min < 30 %s (both runs %.1f min)",
              first, last, 100 * drop, mark(drop_ok), cw.auc, mark(auc_ok), mse.auc, cw.auc, mark(order_ok),
              cw.seconds / 60.0, mark(time_ok), minutes)};
}

Outcome c9(const Desk& desk) {
  desk.run("cwssim_repeat", "cwssim");
  const auto a = desk.root / "cwssim", b = desk.root / "cwssim_repeat";
  if (slurp(a / "loss.csv") != slurp(b / "loss.csv")) return {false, "loss CSVs differ"};
  int maps = 0, differ = 0;
  for (const auto& e : fs::recursive_directory_iterator(a / "maps")) {
    if (!e.is_regular_file()) continue;
    ++maps;
    const auto other = b / "maps" / fs::relative(e.path(), a / "maps");
    if (!fs::exists(other) || slurp(e.path()) != slurp(other)) ++differ;
  }
  const bool model_same = slurp(a / "model.cwae") == slurp(b / "model.cwae");
  return {maps > 0 && differ == 0 && model_same,
          fmt("loss CSVs identical, %d/%d map files differ, model files %s", differ, maps,
              model_same ? "identical" : "differ")};
}

// -- C8 ---------------------------------------------------------------------

Outcome c8() {
  const auto spec = autoencoder::ArchitectureSpec::default_spec();
  const auto n = spec.param_count();
  const auto m = autoencoder::init_model(spec, 0);
  const auto stored = m.flatten().size();
  char sig[32];
  std::snprintf(sig, sizeof sig, "%.2e", static_cast<double>(n));
  return {n == 5573057 && stored == n && std::string(sig) == "5.57e+06",
          fmt("%zu parameters (%zu allocated), %s to 3 significant figures", n, stored, sig)};
}

// -- C10 --------------------------------------------------------------------

Outcome c10() {
  const auto root = testing::scratch_dir("acceptance_full");
  synthetic::DatasetLayout L;
  L.train = 4;
  L.validation = 2;
  L.test_defective = 3;
  L.test_good = 1;
  const auto validation = synthetic::write_dataset(root / "mvtec", L, {}, 10);
  std::size_t images = 0;
  for (const auto& e : fs::recursive_directory_iterator(root / "mvtec"))
    if (e.path().extension() == ".png" && e.path().string().find("ground_truth") == std::string::npos) ++images;

  const auto cfg = root / "run.toml";
  {
    std::ofstream out(cfg);
    out << "seed = 3\n[dataset]\nroot = \"mvtec\"\nvalidation = [\"" << validation[0] << "\", \"" << validation[1]
        << "\"]\n[architecture]\nwidths = [8, 16]\n[train]\nepochs = 2\npatch_count = 32\npatch_size = 64\n"
        << "[pyramid]\norientations = 4\nscales = 3\n[inference]\nfusion_scales = [3, 4]\n"
        << "[output]\ndir = \"out\"\n";
  }
  const auto model = (root / "out" / "model.cwae").string();
  for (const auto& args : std::vector<std::vector<std::string>>{
           {"train", "--config", cfg.string()},
           {"calibrate", "--config", cfg.string(), "--model", model},
           {"evaluate", "--config", cfg.string(), "--model", model}})
    if (run_cli(args) != 0) return {false, args[0] + " failed"};

  const auto rep = json::parse(slurp(root / "out" / "report.json"));
  std::vector<std::string> problems;
  auto need = [&](bool ok, const std::string& what) {
    if (!ok) problems.push_back(what);
  };
  auto unit = [](const json& v) { return v.is_number() && v.get<double>() >= 0.0 && v.get<double>() <= 1.0; };
  need(rep.is_object(), "not an object");
  need(rep.contains("auc") && unit(rep["auc"]), "auc");
  need(rep.contains("normalized_auc_03") && unit(rep["normalized_auc_03"]), "normalized_auc_03");
  need(rep.contains("coverages") && rep["coverages"].is_array() &&
           std::all_of(rep["coverages"].begin(), rep["coverages"].end(), unit),
       "coverages");
  need(rep.contains("median_coverage") && (rep["median_coverage"].is_null() || unit(rep["median_coverage"])),
       "median_coverage");
  need(rep.contains("gamma") && rep["gamma"].is_number(), "gamma");
  need(rep.contains("config_hash") && rep["config_hash"].is_string() && rep["config_hash"].get<std::string>().size() == 16,
       "config_hash");
  need(rep.contains("pixels") && rep["pixels"].contains("positive") && rep["pixels"]["positive"].is_number_unsigned() &&
           rep["pixels"].contains("negative") && rep["pixels"]["negative"].is_number_unsigned(),
       "pixels");
  need(rep.contains("images") && rep["images"].get<std::size_t>() == L.test_defective + L.test_good, "images");
  need(rep.contains("coverage_definition") && rep["coverage_definition"].is_string(), "coverage_definition");
  std::string joined;
  for (const auto& p : problems) joined += (joined.empty() ? "" : ", ") + p;
  return {problems.empty(), problems.empty() ? fmt("%zu-image dataset, report has all fields", images)
                                             : "invalid fields: " + joined};
}

}  // namespace

int main() {
  report(1, "subband count", c1);
  report(2, "CW-SSIM identities", c2);
  report(3, "gradient correctness", c3);
  report(4, "linearity and adjoint", c4);
  report(5, "metric oracles", c5);
  report(6, "calibration contract", c6);
  Desk desk;
  DeskRun cw;
  report(7, "desk-scale end-to-end", [&] { return c7(desk, cw); });
  report(8, "parameter count", c8);
  report(9, "determinism", [&] { return c9(desk); });
  report(10, "full-protocol readiness", c10);
  std::printf("%s: %d of 10 criteria failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
