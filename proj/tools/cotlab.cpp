// cotlab: generation, verification, gradient experiments, training and
// interaction metrics behind one entry point. Every invocation writes its
// outputs and a manifest.json into a fresh run directory.

#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "cotlab/errors.hpp"
#include "cotlab/gradient_lab.hpp"
#include "cotlab/interaction_metrics.hpp"
#include "cotlab/natbool.hpp"
#include "cotlab/parity_task.hpp"
#include "cotlab/run_manifest.hpp"
#include "cotlab/training.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace cotlab;
using json = nlohmann::ordered_json;

namespace {

enum Exit { kOk = 0, kAssertion = 1, kUsage = 2, kInput = 3, kConfig = 4 };

// "3..10" or "1,2,5".
std::vector<int> parse_ints(const std::string& text) {
  std::vector<int> out;
  if (const auto dots = text.find(".."); dots != std::string::npos) {
    const int a = std::stoi(text.substr(0, dots));
    const int b = std::stoi(text.substr(dots + 2));
    if (b < a) throw InputError("empty range '" + text + "'");
    for (int i = a; i <= b; ++i) out.push_back(i);
    return out;
  }
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stoi(item));
  }
  return out;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw InputError("cannot write " + path.string());
  f << text;
}

EmbeddingBasis random_basis(int d_model, Rng& rng) {
  EmbeddingBasis b;
  b.v = uniform_vector(rng, d_model, -1.0, 1.0);
  b.u = uniform_vector(rng, d_model, -1.0, 1.0);
  return b;
}

// Shared by every subcommand: where to write, and what ended up there.
struct Run {
  std::string name;
  std::uint64_t seed = 1;
  std::string out;
  fs::path dir;
  std::vector<std::string> artifacts;

  void open() {
    if (out.empty()) {
      dir = make_run_dir(run_root(), name, seed);
    } else {
      dir = out;
      fs::create_directories(dir);
    }
  }
  fs::path file(const std::string& rel) {
    artifacts.push_back(rel);
    const auto p = dir / rel;
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    return p;
  }
};

// Resolved option values of one subcommand, defaults included.
std::string resolved_config(const CLI::App& app) {
  json j = json::object();
  for (const auto* opt : app.get_options()) {
    if (opt->get_lnames().empty()) {
      if (opt->get_name().empty() || opt->get_name() == "--help") continue;
    }
    const auto name = opt->get_lnames().empty() ? opt->get_name() : opt->get_lnames().front();
    if (name == "help") continue;
    if (opt->count() > 0) {
      const auto& res = opt->results();
      if (opt->get_type_size() == 0) {
        j[name] = true;
      } else if (res.size() == 1) {
        j[name] = res.front();
      } else {
        j[name] = res;
      }
    } else if (opt->get_type_size() == 0) {
      j[name] = false;
    } else {
      j[name] = opt->get_default_str();
    }
  }
  return j.dump();
}

// ---- training flags shared by train and sweep ----

struct TrainFlags {
  TrainConfig cfg;
  std::string mode = "explicit";
  std::string support;
  std::string layout = "per-node";
  std::string readout = "token";
  std::string head = "factored";
  std::string config_file;

  void add(CLI::App* app, bool with_mode) {
    if (with_mode) app->add_option("--mode", mode, "explicit|impbase1|impbase2|alicot-classifier|alicot-cosine")->capture_default_str();
    app->add_option("--config", config_file, "TrainConfig JSON; flags given explicitly override it");
    app->add_option("--d", cfg.d, "input bits")->capture_default_str();
    app->add_option("--k", cfg.k, "support size")->capture_default_str();
    app->add_option("--support", support, "comma list; default is the even-position layout");
    if (with_mode) app->add_option("--s", cfg.s, "concealed steps")->capture_default_str();
    app->add_option("--layout", layout, "single|per-node")->capture_default_str();
    app->add_option("--readout", readout, "injected|processed|token")->capture_default_str();
    app->add_option("--head", head, "factored|joint")->capture_default_str();
    app->add_option("--d-model", cfg.d_model)->capture_default_str();
    app->add_option("--ffn", cfg.ffn, "standard|parity-exact")->capture_default_str();
    app->add_option("--ffn-c", cfg.ffn_c)->capture_default_str();
    app->add_option("--lr-logits", cfg.lr_logits)->capture_default_str();
    app->add_option("--lr-output", cfg.lr_output)->capture_default_str();
    app->add_option("--lr-latent", cfg.lr_latent)->capture_default_str();
    app->add_option("--lr-head", cfg.lr_head)->capture_default_str();
    app->add_option("--batch", cfg.batch)->capture_default_str();
    app->add_option("--max-steps", cfg.max_steps)->capture_default_str();
    app->add_option("--eval-interval", cfg.eval_interval)->capture_default_str();
    app->add_option("--eval-batch", cfg.eval_batch)->capture_default_str();
    app->add_option("--lambda", cfg.lambda, "alignment weight")->capture_default_str();
    app->add_option("--latent-init", cfg.latent_init, "static latents ~ U(-x, x)")
        ->capture_default_str();
    app->add_option("--gradcheck-points", cfg.gradcheck_points)->capture_default_str();
  }

  TrainConfig resolve(const CLI::App& app, std::uint64_t seed) const {
    TrainConfig c = cfg;
    if (!config_file.empty()) {
      std::ifstream f(config_file);
      if (!f) throw InputError("cannot read " + config_file);
      std::stringstream buf;
      buf << f.rdbuf();
      c = config_from_json(buf.str());
      // Explicit flags win over the file.
      const auto given = [&](const char* name) { return app.count(name) > 0; };
      if (given("--d")) c.d = cfg.d;
      if (given("--k")) c.k = cfg.k;
      if (app.get_option_no_throw("--s") && given("--s")) c.s = cfg.s;
      if (given("--d-model")) c.d_model = cfg.d_model;
      if (given("--ffn")) c.ffn = cfg.ffn;
      if (given("--ffn-c")) c.ffn_c = cfg.ffn_c;
      if (given("--lr-logits")) c.lr_logits = cfg.lr_logits;
      if (given("--lr-output")) c.lr_output = cfg.lr_output;
      if (given("--lr-latent")) c.lr_latent = cfg.lr_latent;
      if (given("--lr-head")) c.lr_head = cfg.lr_head;
      if (given("--batch")) c.batch = cfg.batch;
      if (given("--max-steps")) c.max_steps = cfg.max_steps;
      if (given("--eval-interval")) c.eval_interval = cfg.eval_interval;
      if (given("--eval-batch")) c.eval_batch = cfg.eval_batch;
      if (given("--lambda")) c.lambda = cfg.lambda;
      if (given("--latent-init")) c.latent_init = cfg.latent_init;
      if (given("--gradcheck-points")) c.gradcheck_points = cfg.gradcheck_points;
      if (app.get_option_no_throw("--mode") && given("--mode")) c.mode = train_mode_from_string(mode);
      if (given("--layout")) c.layout = latent_layout_from_string(layout);
      if (given("--readout")) c.readout = latent_readout_from_string(readout);
      if (given("--head")) c.head = head_kind_from_string(head);
      if (given("--support")) c.support = parse_ints(support);
      if (app.count("--seed")) c.seed = seed;
      return c;
    }
    c.mode = train_mode_from_string(mode);
    c.layout = latent_layout_from_string(layout);
    c.readout = latent_readout_from_string(readout);
    c.head = head_kind_from_string(head);
    if (!support.empty()) c.support = parse_ints(support);
    c.seed = seed;
    return c;
  }
};

void print_record(const ConvergenceRecord& r) {
  std::cout << to_string(r.mode) << " s=" << r.s << " seed=" << r.seed << " steps_to_100%="
            << (r.converged() ? std::to_string(r.steps_to_full) : std::string("inf"))
            << (r.diverged ? " diverged" : "") << " final_acc=" << r.final_eval_acc;
  if (r.gradchecks > 0) std::cout << " gradcheck_max_relerr=" << r.max_gradcheck_error;
  std::cout << " (" << r.seconds << " s)\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cotlab: chain-of-thought parity and NatBool-DAG experiments"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(COTLAB_VERSION));

  Run run;
  const auto common = [&](CLI::App* sub) {
    sub->add_option("--seed", run.seed, "user seed; every component derives its own stream")->capture_default_str();
    sub->add_option("--out", run.out, "output directory (default: $COTLAB_RUN_ROOT/<subcommand>-<seed>-<n>)");
  };

  // gen-parity
  auto* gen_parity = app.add_subcommand("gen-parity", "sample parity instances with their CoT traces");
  int gp_d = 16, gp_k = 8;
  long gp_n = 1000;
  std::string gp_support;
  gen_parity->add_option("--d", gp_d)->capture_default_str();
  gen_parity->add_option("--k", gp_k)->capture_default_str();
  gen_parity->add_option("--n", gp_n, "instances")->capture_default_str();
  gen_parity->add_option("--support", gp_support, "comma list; default is the even-position layout");
  common(gen_parity);

  // gen-natbool
  auto* gen_nb = app.add_subcommand("gen-natbool", "generate NatBool-DAG samples");
  std::string nb_hops = "3..10", nb_spec, nb_themes = "medical,logistics,access-control";
  long nb_count = 100;
  DagConfig nb_cfg;
  gen_nb->add_option("--spec", nb_spec, "split spec JSON (per-hop train/val/test counts)");
  gen_nb->add_option("--hops", nb_hops, "hop range A..B, used without --spec")->capture_default_str();
  gen_nb->add_option("--count", nb_count, "samples per hop without --spec")->capture_default_str();
  gen_nb->add_option("--themes", nb_themes)->capture_default_str();
  gen_nb->add_option("--dup-prob", nb_cfg.duplicate_prob, "probability of X op X")->capture_default_str();
  gen_nb->add_option("--node-budget", nb_cfg.node_budget, "total nodes per dag; 0 draws one")->capture_default_str();
  common(gen_nb);

  // verify-natbool
  auto* verify_nb = app.add_subcommand("verify-natbool", "re-derive every sample of a JSONL corpus");
  std::string vn_file;
  verify_nb->add_option("corpus", vn_file, "JSONL file")->required();
  common(verify_nb);

  // grad-check
  auto* grad_check = app.add_subcommand("grad-check", "analytic attention gradient against finite differences");
  int gc_d = 8, gc_m = 12, gc_n = 32, gc_k = 2, gc_dm = 16, gc_trials = 20;
  double gc_tol = 1e-5, gc_eps = 1e-5;
  grad_check->add_option("--d", gc_d, "input bits the label may depend on")->capture_default_str();
  grad_check->add_option("--m", gc_m, "predicting position; keys are 1..m-1")->capture_default_str();
  grad_check->add_option("--n", gc_n, "contexts per batch")->capture_default_str();
  grad_check->add_option("--k", gc_k, "support size")->capture_default_str();
  grad_check->add_option("--d-model", gc_dm)->capture_default_str();
  grad_check->add_option("--trials", gc_trials)->capture_default_str();
  grad_check->add_option("--tol", gc_tol, "max relative error")->capture_default_str();
  grad_check->add_option("--eps", gc_eps, "finite-difference step")->capture_default_str();
  common(grad_check);

  // signal-scan
  auto* signal_scan = app.add_subcommand("signal-scan", "order-r signal magnitude against context length");
  ScalingConfig ss_cfg;
  std::string ss_grid;
  signal_scan->add_option("--r", ss_cfg.r)->capture_default_str();
  signal_scan->add_option("--m-grid", ss_grid, "comma list (default 8,16,32,64 for r=2, 6,8,12,16 for r=4)");
  signal_scan->add_option("--seeds", ss_cfg.seeds)->capture_default_str();
  signal_scan->add_option("--p", ss_cfg.p)->capture_default_str();
  signal_scan->add_option("--n-constant", ss_cfg.n_constant, "0 picks the smallest valid constant")->capture_default_str();
  signal_scan->add_option("--d-model", ss_cfg.d_model)->capture_default_str();
  common(signal_scan);

  // sample-complexity
  auto* sample_cx = app.add_subcommand("sample-complexity", "smallest n separating relevant from irrelevant indices");
  ComplexityConfig sc_cfg;
  sample_cx->add_option("--r", sc_cfg.r)->capture_default_str();
  sample_cx->add_option("--m", sc_cfg.m, "keys")->capture_default_str();
  sample_cx->add_option("--p", sc_cfg.p)->capture_default_str();
  sample_cx->add_option("--seeds", sc_cfg.seeds)->capture_default_str();
  sample_cx->add_option("--max-n", sc_cfg.max_n)->capture_default_str();
  common(sample_cx);

  // latent-probe
  auto* latent_probe = app.add_subcommand("latent-probe", "static latent inertness and dynamic latent variance");
  std::string lp_kind = "both", lp_support = "2,4", lp_R = "2";
  StaticLatentConfig lp_static;
  DynamicLatentConfig lp_dyn;
  int lp_dm = 64;
  latent_probe->add_option("--kind", lp_kind, "static|dynamic|both")->capture_default_str();
  latent_probe->add_option("--keys", lp_static.keys)->capture_default_str();
  latent_probe->add_option("--r", lp_static.r, "static: inputs in the contraction")->capture_default_str();
  latent_probe->add_option("--n", lp_static.n)->capture_default_str();
  latent_probe->add_option("--trials", lp_static.trials)->capture_default_str();
  latent_probe->add_option("--dyn-keys", lp_dyn.keys)->capture_default_str();
  latent_probe->add_option("--dyn-n", lp_dyn.n)->capture_default_str();
  latent_probe->add_option("--dyn-trials", lp_dyn.trials)->capture_default_str();
  latent_probe->add_option("--support", lp_support, "dynamic: label support")->capture_default_str();
  latent_probe->add_option("--R", lp_R, "dynamic: probed input set")->capture_default_str();
  latent_probe->add_option("--d-model", lp_dm)->capture_default_str();
  common(latent_probe);

  // train
  auto* train_cmd = app.add_subcommand("train", "train one mode on the parity task");
  TrainFlags tf;
  tf.add(train_cmd, true);
  common(train_cmd);

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "steps-to-100% over concealed steps, modes and seeds");
  TrainFlags sw;
  std::string sw_modes = "impbase1,alicot-classifier", sw_s = "1..4";
  int sw_seeds = 5;
  sw.add(sweep_cmd, false);
  sweep_cmd->add_option("--modes", sw_modes)->capture_default_str();
  sweep_cmd->add_option("--s-range", sw_s, "A..B or comma list")->capture_default_str();
  sweep_cmd->add_option("--seeds", sw_seeds, "seeds seed..seed+n-1")->capture_default_str();
  common(sweep_cmd);

  // metrics / landscape
  ProbeConfig probe;
  const auto probe_flags = [&](CLI::App* sub) {
    sub->add_option("--gamma", probe.gamma, "PMI threshold")->capture_default_str();
    sub->add_option("--max-order", probe.max_order)->capture_default_str();
    sub->add_option("--budget", probe.budget, "subsets per sample at order 2, halved per order")->capture_default_str();
    sub->add_option("--smoothing", probe.smoothing)->capture_default_str();
    sub->add_option("--min-joint", probe.min_joint)->capture_default_str();
    sub->add_flag("--normalized", probe.normalized, "normalized PMI");
  };
  auto* metrics_cmd = app.add_subcommand("metrics", "interaction density and quality of a tokenized corpus");
  std::string mt_corpus, mt_natbool;
  bool mt_cot = false;
  metrics_cmd->add_option("--corpus", mt_corpus, "JSONL {tokens, y}");
  metrics_cmd->add_option("--natbool", mt_natbool, "NatBool JSONL, tokenized on the fly");
  metrics_cmd->add_flag("--cot", mt_cot, "include CoT tokens for --natbool");
  probe_flags(metrics_cmd);
  common(metrics_cmd);

  auto* landscape_cmd = app.add_subcommand("landscape", "input-only vs input+CoT interaction landscape on NatBool");
  std::string ls_natbool;
  int ls_hops = 3;
  long ls_count = 3000;
  landscape_cmd->add_option("--natbool", ls_natbool, "NatBool JSONL; generated when absent");
  landscape_cmd->add_option("--hops", ls_hops)->capture_default_str();
  landscape_cmd->add_option("--count", ls_count)->capture_default_str();
  probe_flags(landscape_cmd);
  common(landscape_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  const auto t0 = std::chrono::steady_clock::now();
  CLI::App* sub = app.get_subcommands().front();
  run.name = sub->get_name();
  int rc = kOk;
  try {
    run.open();
    probe.seed = run.seed;

    if (sub == gen_parity) {
      const auto support =
          gp_support.empty() ? default_support(gp_d, gp_k) : normalize_support(gp_d, parse_ints(gp_support));
      auto rng = make_rng(run.seed, "gen-parity");
      std::ofstream f(run.file("instances.jsonl"));
      for (long i = 0; i < gp_n; ++i) {
        const auto inst = sample_instance(gp_d, support, rng);
        f << instance_to_jsonl(inst, build_cot_trace(inst)) << "\n";
      }
      std::cout << "wrote " << gp_n << " instances to " << (run.dir / "instances.jsonl").string() << "\n";

    } else if (sub == gen_nb) {
      const auto themes = split_list(nb_themes);
      if (!nb_spec.empty()) {
        const auto spec = load_split_spec(nb_spec);
        const auto summary = build_dataset(spec, themes, run.seed, run.dir, nb_cfg);
        for (const auto* name : {"train.jsonl", "val.jsonl", "test.jsonl"}) run.artifacts.push_back(name);
        json j;
        for (const auto& [split, by_hops] : summary.counts) {
          for (const auto& [h, n] : by_hops) {
            j[split][std::to_string(h)] = {{"count", n}, {"true_rate", summary.true_rate.at(split).at(h)}};
          }
        }
        write_text(run.file("summary.json"), j.dump(2) + "\n");
        std::cout << j.dump(2) << "\n";
      } else {
        SplitSpec spec;
        for (const int h : parse_ints(nb_hops)) spec.rows.push_back({h, nb_count, 0, 0});
        const auto samples = generate_split(spec, "train", themes, run.seed, nb_cfg);
        std::ofstream f(run.file("samples.jsonl"));
        for (const auto& s : samples) f << sample_to_json(s) << "\n";
        std::cout << "wrote " << samples.size() << " samples to " << (run.dir / "samples.jsonl").string() << "\n";
      }

    } else if (sub == verify_nb) {
      std::ifstream f(vn_file);
      if (!f) throw InputError("cannot read " + vn_file);
      std::string line;
      long lineno = 0, checked = 0, failed = 0;
      json failures = json::array();
      while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        ++checked;
        Verdict v;
        std::string id = "?";
        try {
          const auto s = sample_from_json(line);
          id = s.id;
          v = verify_sample(s);
        } catch (const InputError& e) {
          v.failures.push_back(VerifyFailure::Structural);
          v.details.push_back(e.what());
        }
        if (!v.ok()) {
          ++failed;
          for (std::size_t i = 0; i < v.failures.size(); ++i) {
            std::cout << "line " << lineno << " id " << id << ": " << to_string(v.failures[i]) << " (" << v.details[i]
                      << ")\n";
            failures.push_back({{"line", lineno}, {"id", id}, {"kind", to_string(v.failures[i])},
                                {"detail", v.details[i]}});
          }
        }
      }
      json rep{{"file", vn_file}, {"checked", checked}, {"failed", failed}, {"failures", failures}};
      write_text(run.file("verify.json"), rep.dump(2) + "\n");
      std::cout << checked - failed << "/" << checked << " samples pass\n";
      if (failed > 0) rc = kAssertion;

    } else if (sub == grad_check) {
      if (gc_m < 2 || gc_k < 1 || gc_k > std::min(gc_d, gc_m - 1)) throw InputError("need 1 <= k <= min(d, m-1)");
      double worst = 0.0;
      json trials = json::array();
      for (int t = 0; t < gc_trials; ++t) {
        Rng rng{derive_seed(run.seed, "grad-check", static_cast<std::uint64_t>(t))};
        InitConfig ic;
        ic.d_model = gc_dm;
        ic.max_positions = gc_m;
        auto params = init_params(ic, rng);
        for (auto& w : params.logits.row(gc_m)) w = uniform_open(rng, -1.0, 1.0);
        auto idx = sample_without_replacement(rng, static_cast<std::size_t>(std::min(gc_d, gc_m - 1)), gc_k);
        std::vector<int> support;
        for (const auto i : idx) support.push_back(static_cast<int>(i) + 1);
        std::sort(support.begin(), support.end());
        const auto batch = sample_context_batch(gc_m, support, gc_n, rng);
        const auto analytic = analytic_grad_attention(params, batch);
        const auto fd = fd_grad(params, batch, gc_eps);
        const double err = fd.nonfinite.empty() ? relative_error(analytic, fd.grad, 1e-8) : INFINITY;
        worst = std::max(worst, err);
        trials.push_back({{"trial", t}, {"support", support}, {"relerr", err}});
      }
      json rep{{"d", gc_d}, {"m", gc_m}, {"n", gc_n}, {"k", gc_k}, {"d_model", gc_dm},
               {"trials", trials}, {"max_relerr", worst}, {"tol", gc_tol}, {"pass", worst <= gc_tol}};
      write_text(run.file("grad_check.json"), rep.dump(2) + "\n");
      std::cout << "max relative error " << worst << " over " << gc_trials << " trials (tol " << gc_tol << ")\n";
      if (!(worst <= gc_tol)) rc = kAssertion;

    } else if (sub == signal_scan) {
      ss_cfg.seed = run.seed;
      ss_cfg.m_grid = ss_grid.empty() ? (ss_cfg.r >= 4 ? std::vector<int>{6, 8, 12, 16} : std::vector<int>{8, 16, 32, 64})
                                      : parse_ints(ss_grid);
      const auto fit = scaling_experiment(ss_cfg);
      json pts = json::array();
      std::ostringstream csv;
      csv << "m,n,magnitude,predicted,kappa,bias,undersampled\n";
      for (const auto& p : fit.points) {
        pts.push_back({{"m", p.m}, {"n", p.n}, {"magnitude", p.magnitude}, {"predicted", p.predicted},
                       {"kappa", p.kappa}, {"bias", p.bias}, {"undersampled", p.undersampled}});
        csv << p.m << "," << p.n << "," << p.magnitude << "," << p.predicted << "," << p.kappa << "," << p.bias << ","
            << p.undersampled << "\n";
      }
      json rep{{"r", fit.r}, {"slope", fit.slope}, {"slope_lo", fit.slope_lo}, {"slope_hi", fit.slope_hi},
               {"n_constant", fit.n_constant}, {"seed_slopes", fit.seed_slopes}, {"points", pts}};
      write_text(run.file("scaling.json"), rep.dump(2) + "\n");
      write_text(run.file("points.csv"), csv.str());
      std::cout << "r=" << fit.r << " log-log slope " << fit.slope << " [" << fit.slope_lo << ", " << fit.slope_hi
                << "]\n";

    } else if (sub == sample_cx) {
      sc_cfg.seed = run.seed;
      const auto r = sample_complexity_probe(sc_cfg);
      json rep{{"r", r.r}, {"m", r.m}, {"p", r.p}, {"n_star", r.n_star}, {"reference", r.reference},
               {"ratio", r.ratio}, {"required_seeds", r.required_seeds}, {"vacuous", r.vacuous}};
      write_text(run.file("complexity.json"), rep.dump(2) + "\n");
      std::cout << rep.dump() << "\n";

    } else if (sub == latent_probe) {
      if (lp_kind != "static" && lp_kind != "dynamic" && lp_kind != "both") throw InputError("--kind must be static|dynamic|both");
      auto rng = make_rng(run.seed, "latent-probe-basis");
      const auto basis = random_basis(lp_dm, rng);
      json rep;
      if (lp_kind != "dynamic") {
        lp_static.seed = run.seed;
        const auto c_s = uniform_vector(rng, lp_dm, -1.0, 1.0);
        const auto s = static_latent_probe(lp_static, basis, c_s);
        rep["static"] = {{"c_c", s.c_c}, {"mean", s.mean}, {"std", s.std}, {"predicted_std", s.predicted_std},
                         {"ratio", s.predicted_std != 0.0 ? s.std / s.predicted_std : 0.0},
                         {"kappa_s", s.kappa_s}, {"coverage", s.coverage}};
      }
      if (lp_kind != "static") {
        lp_dyn.seed = run.seed;
        lp_dyn.support = parse_ints(lp_support);
        lp_dyn.R = parse_ints(lp_R);
        const auto d = dynamic_latent_probe(lp_dyn, basis);
        json terms = json::array();
        for (const auto& t : d.terms) {
          terms.push_back({{"ell", t.ell}, {"coefficient", t.coefficient}, {"mean", t.mean}, {"variance", t.variance}});
        }
        rep["dynamic"] = {{"dynamic_variance", d.dynamic_variance}, {"static_variance", d.static_variance},
                          {"dynamic_wins", d.dynamic_wins}, {"trials", d.trials},
                          {"any_stable_constant", d.any_stable_constant}, {"terms", terms}};
      }
      write_text(run.file("latent_probe.json"), rep.dump(2) + "\n");
      std::cout << rep.dump(2) << "\n";

    } else if (sub == train_cmd) {
      const auto cfg = tf.resolve(*train_cmd, run.seed);
      const auto res = train(cfg);
      write_train_artifacts(run.dir, cfg, res.record);
      for (const auto* name : {"config.json", "curve.csv", "record.json"}) run.artifacts.push_back(name);
      write_text(run.file("params.json"), params_to_json(res.params) + "\n");
      print_record(res.record);

    } else if (sub == sweep_cmd) {
      const auto base = sw.resolve(*sweep_cmd, run.seed);
      std::vector<TrainMode> modes;
      for (const auto& m : split_list(sw_modes)) modes.push_back(train_mode_from_string(m));
      const auto s_range = parse_ints(sw_s);
      SweepReport rep;
      std::ofstream records(run.file("records.jsonl"));
      for (int i = 0; i < sw_seeds; ++i) {
        for (const int s : s_range) {
          for (const auto mode : modes) {
            TrainConfig cfg = base;
            cfg.seed = base.seed + static_cast<std::uint64_t>(i);
            cfg.s = s;
            cfg.mode = mode;
            const auto res = train(cfg);
            const std::string rel = std::string("runs/") + to_string(mode) + "-s" + std::to_string(s) + "-seed" +
                                    std::to_string(cfg.seed);
            write_train_artifacts(run.dir / rel, cfg, res.record);
            records << json::parse(record_to_json(res.record)).dump() << "\n" << std::flush;
            print_record(res.record);
            rep.records.push_back(res.record);
          }
        }
      }
      const bool has_classifier = std::find(modes.begin(), modes.end(), TrainMode::AlicotClassifier) != modes.end();
      check_sweep_orderings(rep, has_classifier ? TrainMode::AlicotClassifier : TrainMode::AlicotCosine);
      json j{{"alicot_not_slower", rep.alicot_not_slower}, {"impbase1_monotone", rep.impbase1_monotone},
             {"notes", rep.notes}};
      write_text(run.file("sweep.json"), j.dump(2) + "\n");
      std::cout << "alicot_not_slower=" << rep.alicot_not_slower << " impbase1_monotone=" << rep.impbase1_monotone
                << "\n";
      for (const auto& n : rep.notes) std::cout << "  " << n << "\n";
      if (!rep.alicot_not_slower || !rep.impbase1_monotone) rc = kAssertion;

    } else if (sub == metrics_cmd) {
      if (mt_corpus.empty() == mt_natbool.empty()) throw InputError("give exactly one of --corpus or --natbool");
      TokenizedCorpus corpus;
      if (!mt_corpus.empty()) {
        corpus = load_corpus_jsonl(mt_corpus);
      } else {
        std::ifstream f(mt_natbool);
        if (!f) throw InputError("cannot read " + mt_natbool);
        std::vector<NatBoolSample> samples;
        std::string line;
        while (std::getline(f, line)) {
          if (!line.empty()) samples.push_back(sample_from_json(line));
        }
        corpus = natbool_corpus(samples, mt_cot);
      }
      const auto rows = interaction_landscape({{mt_cot ? "input+cot" : "input", corpus}}, probe);
      const auto csv = landscape_to_csv(rows);
      write_text(run.file("metrics.csv"), csv);
      std::cout << csv;

    } else if (sub == landscape_cmd) {
      std::vector<NatBoolSample> samples;
      if (!ls_natbool.empty()) {
        std::ifstream f(ls_natbool);
        if (!f) throw InputError("cannot read " + ls_natbool);
        std::string line;
        while (std::getline(f, line)) {
          if (!line.empty()) samples.push_back(sample_from_json(line));
        }
      } else {
        SplitSpec spec;
        spec.rows.push_back({ls_hops, ls_count, 0, 0});
        samples = generate_split(spec, "train", {"medical", "logistics", "access-control"}, run.seed);
      }
      const auto rows = interaction_landscape(
          {{"input", natbool_corpus(samples, false)}, {"input+cot", natbool_corpus(samples, true)}}, probe);
      const auto csv = landscape_to_csv(rows);
      write_text(run.file("landscape.csv"), csv);
      std::cout << csv;
    }
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kInput;
  } catch (const StructuralError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kInput;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kInput;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kInput;
  }

  RunManifest m;
  m.subcommand = run.name;
  m.argv.assign(argv, argv + argc);
  m.config_json = resolved_config(*sub);
  m.seed = run.seed;
  m.artifacts = run.artifacts;
  m.version = COTLAB_VERSION;
  m.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_manifest(run.dir, m);
  std::cerr << "run dir: " << run.dir.string() << "\n";
  return rc;
}
