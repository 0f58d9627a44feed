#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <random>
#include <thread>

#include "CLI11.hpp"
#include "geld/generate.hpp"
#include "geld/heuristics.hpp"
#include "geld/inference.hpp"
#include "geld/io.hpp"
#include "geld/training.hpp"

namespace fs = std::filesystem;
using namespace geld;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

/// Per-item seed derived from the run seed; independent of scheduling.
std::uint64_t item_seed(std::uint64_t seed, std::size_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (std::uint64_t(out[0]) << 32) | out[1];
}

/// Runs fn(i) for i in [0, count) on up to `jobs` threads.
void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(std::max(jobs, 1), std::max<std::size_t>(count, 1));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mu);
          if (!error) error = std::current_exception();
        }
      }
    });
  pool.clear();
  if (error) std::rethrow_exception(error);
}

struct Input {
  TspInstance instance;
  std::optional<double> reference;  // optimal or best-known length
};

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// A reference tour is picked up from `<stem>.opt.tour` or `<stem>.tour`.
Input load_input(const fs::path& path) {
  Input in{load_tsplib(path), std::nullopt};
  for (const char* ext : {".opt.tour", ".tour"}) {
    fs::path ref = path;
    ref.replace_extension(ext);
    if (fs::exists(ref)) {
      in.reference = Tour(in.instance, parse_tsplib_tour(read_text(ref))).length();
      break;
    }
  }
  return in;
}

std::vector<Input> load_inputs(const std::vector<std::string>& paths) {
  std::vector<fs::path> files;
  for (const auto& p : paths) {
    if (fs::is_directory(p)) {
      for (const auto& e : fs::directory_iterator(p))
        if (e.path().extension() == ".tsp") files.push_back(e.path());
    } else {
      files.emplace_back(p);
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw std::runtime_error("no .tsp inputs found");
  std::vector<Input> out;
  out.reserve(files.size());
  for (const auto& f : files) out.push_back(load_input(f));
  return out;
}

struct SolveOptions {
  int beam_width = 16;
  int k_m = 20;
  int two_opt_iters = 1000;
};

Tour construct(const std::string& method, const TspInstance& inst, const InferParams* params,
               const SolveOptions& opt, std::uint64_t seed) {
  auto need_model = [&] {
    if (!params) throw std::runtime_error("method '" + method + "' needs --ckpt");
    return params;
  };
  if (method == "greedy") return greedy_rollout(inst, *need_model(), opt.k_m);
  if (method == "beam") return beam_search(inst, *need_model(), opt.beam_width, opt.k_m);
  if (method == "ri") return random_insertion(inst, seed);
  if (method == "nn") return nearest_neighbor(inst);
  if (method == "nn2opt") return two_opt(inst, nearest_neighbor(inst), opt.two_opt_iters);
  if (method == "brute") return brute_force_optimal(inst);
  throw std::runtime_error("unknown method '" + method + "'");
}

void emit_report(const RunReport& report, const std::string& path, bool quiet) {
  if (!path.empty()) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << report.to_json().dump(2) << "\n";
  }
  if (!quiet) std::cout << report.to_table();
}

ReportRow make_row(const Input& in, const std::string& method, const Tour& tour, double secs,
                   std::uint64_t seed) {
  ReportRow row{in.instance.name(), in.instance.size(), method, tour.length(), std::nullopt, secs, seed};
  if (in.reference) row.gap_pct = gap(tour.length(), *in.reference);
  return row;
}

std::vector<LabeledSample> make_labeled(std::size_t n, std::size_t count, std::uint64_t seed) {
  const auto insts = generate_instances(Pattern::uniform, n, count, seed);
  return n <= kMaxBruteForceNodes ? label_brute_force(insts) : label_nn_two_opt(insts);
}

void log_line(std::ofstream& log, const std::string& line) {
  std::cout << line << "\n" << std::flush;
  if (log) log << line << "\n" << std::flush;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"geld: neural TSP solver with region-average linear attention"};
  app.require_subcommand(1);
  // Global options are also accepted after the subcommand.
  app.fallthrough();
  int jobs = 1;
  std::uint64_t seed = 1;
  app.add_option("--jobs", jobs, "Worker threads for instance-level parallelism")
      ->check(CLI::PositiveNumber);
  app.add_option("--seed", seed, "Run seed; all randomness derives from it");

  // gen
  auto* gen = app.add_subcommand("gen", "Generate synthetic instances as TSPLIB files");
  std::string pattern = "uniform", out_dir;
  std::size_t gen_n = 100, gen_count = 1;
  bool gen_label = false;
  GeneratorParams gp;
  gen->add_option("--pattern", pattern)->check(CLI::IsMember({"uniform", "clustered", "explosion", "implosion"}));
  gen->add_option("--n", gen_n)->required()->check(CLI::Range(4, 1 << 24));
  gen->add_option("--count", gen_count)->required();
  gen->add_option("--out", out_dir)->required();
  gen->add_option("--sigma", gp.cluster_sigma, "Cluster standard deviation");
  gen->add_option("--radius", gp.radius, "Explosion/implosion radius");
  gen->add_flag("--label", gen_label, "Write reference tours (brute force for n<=10, else NN+2-opt)");

  // train
  auto* train = app.add_subcommand("train", "Train a model");
  train->require_subcommand(1);
  train->fallthrough();
  ModelConfig mc;
  TrainConfig tc;
  std::string ckpt_in, ckpt_out, log_path;
  std::size_t train_n = 10, train_count = 50000, small_count = 2000;
  auto* s1 = train->add_subcommand("stage1", "Supervised learning on small instances");
  s1->add_option("--hidden", mc.hidden);
  s1->add_option("--heads", mc.heads);
  s1->add_option("--layers", mc.decoder_layers, "Decoder layers");
  s1->add_option("--n", train_n, "Training instance size");
  s1->add_option("--count", train_count, "Training instances");
  s1->add_option("--epochs", tc.n_e1);
  s1->add_option("--batch", tc.sl_batch);
  s1->add_option("--lr", tc.lr1);
  s1->add_option("--lr-decay", tc.lr_decay);
  s1->add_option("--k-m", tc.k_m);
  s1->add_option("--init", ckpt_in, "Continue from a checkpoint");
  s1->add_option("--out", ckpt_out)->required();
  s1->add_option("--log", log_path);
  auto* s2 = train->add_subcommand("stage2", "Self-improvement with a size curriculum");
  s2->add_option("--ckpt", ckpt_in)->required();
  s2->add_option("--out", ckpt_out)->required();
  s2->add_option("--epochs", tc.n_e2);
  s2->add_option("--batch", tc.n_bs_t);
  s2->add_option("--lr", tc.lr2);
  s2->add_option("--k-m", tc.k_m);
  s2->add_option("--n-max", tc.n_max);
  s2->add_option("--t-max", tc.t_max);
  s2->add_option("--t-imp", tc.t_imp);
  s2->add_option("--eps", tc.eps_gap);
  s2->add_option("--beam", tc.beam_width);
  s2->add_option("--prc", tc.prc_iterations);
  s2->add_option("--updates", tc.sil_updates, "Gradient steps per inner iteration");
  s2->add_option("--small-count", small_count, "Labeled TSP-k_m pool size");
  s2->add_option("--log", log_path);

  // solve / improve / bench
  SolveOptions so;
  std::string mode = "greedy", report_path, init = "greedy";
  std::vector<std::string> inputs;
  std::string ckpt;
  int prc_iters = 1000;
  bool quiet = false;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--in", inputs, "TSPLIB files or directories")->required();
    sub->add_option("--ckpt", ckpt);
    sub->add_option("--k-m", so.k_m);
    sub->add_option("--beam", so.beam_width);
    sub->add_option("--report", report_path, "JSON report path");
    sub->add_flag("--quiet", quiet, "Skip the table on stdout");
  };
  auto* solve = app.add_subcommand("solve", "Construct tours");
  add_common(solve);
  solve->add_option("--mode", mode)->check(CLI::IsMember({"greedy", "beam", "ri", "nn", "nn2opt", "brute"}));
  auto* improve = app.add_subcommand("improve", "Construct tours, then apply PRC");
  add_common(improve);
  improve->add_option("--init", init)->check(CLI::IsMember({"greedy", "beam", "ri", "nn", "nn2opt"}));
  improve->add_option("--prc", prc_iters)->check(CLI::PositiveNumber);
  auto* bench = app.add_subcommand("bench", "Methods x datasets matrix");
  add_common(bench);
  std::vector<std::string> methods{"greedy", "ri", "nn2opt"};
  bench->add_option("--methods", methods)->delimiter(',');

  // grad-check
  auto* gc = app.add_subcommand("grad-check", "Compare analytic and numeric gradients");
  std::size_t gc_n = 10, gc_steps = 5, gc_coords = 8;
  gc->add_option("--hidden", mc.hidden);
  gc->add_option("--heads", mc.heads);
  gc->add_option("--layers", mc.decoder_layers);
  gc->add_option("--n", gc_n);
  gc->add_option("--samples", gc_steps, "Partial solutions in the batch");
  gc->add_option("--coords", gc_coords, "Coordinates checked per tensor");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      fs::create_directories(out_dir);
      const auto insts = generate_instances(parse_pattern(pattern), gen_n, gen_count, seed, gp);
      parallel_for(insts.size(), jobs, [&](std::size_t i) {
        const auto& inst = insts[i];
        save_tsplib(fs::path(out_dir) / (inst.name() + ".tsp"), inst);
        if (!gen_label) return;
        const Tour t = inst.size() <= kMaxBruteForceNodes
                           ? brute_force_optimal(inst)
                           : two_opt(inst, nearest_neighbor(inst), 1000);
        std::ofstream out(fs::path(out_dir) / (inst.name() + ".tour"));
        out << "NAME : " << inst.name() << ".tour\nTYPE : TOUR\nDIMENSION : " << inst.size()
            << "\nTOUR_SECTION\n";
        for (int v : t.order()) out << v + 1 << "\n";
        out << "-1\nEOF\n";
      });
      std::cout << "wrote " << insts.size() << " instances to " << out_dir << "\n";
      return 0;
    }

    if (train->parsed()) {
      std::ofstream log;
      if (!log_path.empty()) log.open(log_path);
      tc.seed = seed;
      if (s1->parsed()) {
        tc.n_max = std::max(tc.n_max, tc.k_m + 1);
        tc.validate();
        TrainParams params = ckpt_in.empty() ? TrainParams::init(mc, seed)
                                             : load_checkpoint(ckpt_in).cast<double>();
        const auto t0 = Clock::now();
        const auto data = make_labeled(train_n, train_count, seed);
        log_line(log, "{\"labels\":" + std::to_string(data.size()) +
                          ",\"seconds\":" + std::to_string(seconds_since(t0)) + "}");
        train_stage1(params, data, tc, [&](const SlEpochLog& l, const TrainParams& p) {
          log_line(log, l.to_json());
          save_checkpoint(p.cast<float>(), ckpt_out);
        });
        save_checkpoint(params.cast<float>(), ckpt_out);
      } else {
        tc.validate();
        TrainParams params = load_checkpoint(ckpt_in).cast<double>();
        const auto data_s = make_labeled(static_cast<std::size_t>(tc.k_m), small_count, seed + 1);
        train_stage2(params, data_s, tc, [&](const SilEpochLog& l, const TrainParams& p) {
          log_line(log, l.to_json());
          save_checkpoint(p.cast<float>(), ckpt_out);
        });
        save_checkpoint(params.cast<float>(), ckpt_out);
      }
      return 0;
    }

    if (gc->parsed()) {
      mc.validate();
      TrainParams params = TrainParams::init(mc, seed);
      // Perturb zero-initialised tensors so every parameter carries gradient.
      std::mt19937_64 rng(seed);
      std::normal_distribution<double> g(0.0, 0.3);
      for (auto& l : params.dec.layers)
        for (auto& v : l.dist_scale.data) v = g(rng);
      for (auto& v : params.dec.role_prev.data) v = g(rng);
      for (auto& v : params.dec.role_dest.data) v = g(rng);
      const auto labeled = make_labeled(gc_n, gc_steps, seed);
      std::vector<PartialSolution> batch;
      for (const auto& s : labeled)
        batch.push_back(sample_partial_solution(s.instance, s.label, static_cast<int>(gc_n), rng));
      enable_grads(params);
      zero_grads(params);
      sl_loss(batch, params, true);
      nn::GradCheckOptions opt;
      opt.coords_per_param = gc_coords;
      opt.seed = seed;
      const auto named = named_params(params);
      const auto rep = nn::check_gradients([&] { return sl_loss(batch, params, false).loss; }, named, opt);
      for (const auto& e : rep.per_parameter)
        std::printf("%-28s [%zu] analytic % .6e numeric % .6e rel %.3e\n", e.name.c_str(), e.index,
                    e.analytic, e.numeric, e.rel_diff);
      std::printf("max rel diff %.3e (tolerance %.1e): %s\n", rep.max_rel_diff, opt.tolerance,
                  rep.flagged.empty() ? "ok" : "FAILED");
      return rep.flagged.empty() ? 0 : 1;
    }

    // solve / improve / bench share input loading and the optional model.
    const auto data = load_inputs(inputs);
    std::optional<InferParams> model;
    if (!ckpt.empty()) model = load_checkpoint(ckpt);
    const InferParams* mp = model ? &*model : nullptr;
    RunReport report;

    if (solve->parsed() || improve->parsed()) {
      std::vector<ReportRow> rows(data.size());
      const std::string label = solve->parsed() ? mode : init + "+prc" + std::to_string(prc_iters);
      parallel_for(data.size(), jobs, [&](std::size_t i) {
        const std::uint64_t s = item_seed(seed, i);
        const auto t0 = Clock::now();
        Tour t = construct(solve->parsed() ? mode : init, data[i].instance, mp, so, s);
        if (improve->parsed()) {
          if (!mp) throw std::runtime_error("improve needs --ckpt");
          t = prc(data[i].instance, t, *mp, prc_iters, s, so.k_m);
        }
        rows[i] = make_row(data[i], label, t, seconds_since(t0), s);
      });
      report.rows = std::move(rows);
    } else if (bench->parsed()) {
      for (const auto& m : methods) {
        std::vector<ReportRow> rows(data.size());
        parallel_for(data.size(), jobs, [&](std::size_t i) {
          const std::uint64_t s = item_seed(seed, i);
          const auto t0 = Clock::now();
          const Tour t = construct(m, data[i].instance, mp, so, s);
          rows[i] = make_row(data[i], m, t, seconds_since(t0), s);
        });
        report.rows.insert(report.rows.end(), rows.begin(), rows.end());
      }
    }
    emit_report(report, report_path, quiet);
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
