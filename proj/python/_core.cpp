// Thin bindings. Structured results cross the boundary as JSON text and are
// decoded on the Python side.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "cotlab/errors.hpp"
#include "cotlab/gradient_lab.hpp"
#include "cotlab/interaction_metrics.hpp"
#include "cotlab/natbool.hpp"
#include "cotlab/parity_task.hpp"
#include "cotlab/training.hpp"
#include "json.hpp"

namespace py = pybind11;
using namespace cotlab;
using json = nlohmann::ordered_json;

namespace {

std::vector<std::string> parity_samples(int d, std::vector<int> support, long n, std::uint64_t seed) {
  if (support.empty()) support = default_support(d, 2);
  support = normalize_support(d, support);
  auto rng = make_rng(seed, "gen-parity");
  std::vector<std::string> out;
  for (long i = 0; i < n; ++i) {
    const auto inst = sample_instance(d, support, rng);
    out.push_back(instance_to_jsonl(inst, build_cot_trace(inst)));
  }
  return out;
}

double grad_check(int m, std::vector<int> support, int n, int d_model, std::uint64_t seed, double eps) {
  Rng rng{derive_seed(seed, "grad-check")};
  InitConfig ic;
  ic.d_model = d_model;
  ic.max_positions = m;
  auto params = init_params(ic, rng);
  for (auto& w : params.logits.row(m)) w = uniform_open(rng, -1.0, 1.0);
  const auto batch = sample_context_batch(m, support, n, rng);
  const auto fd = fd_grad(params, batch, eps);
  if (!fd.nonfinite.empty()) return INFINITY;
  return relative_error(analytic_grad_attention(params, batch), fd.grad, 1e-8);
}

std::string train_json(const std::string& config) {
  const auto res = train(config_from_json(config));
  return record_to_json(res.record);
}

std::vector<std::string> natbool_samples(int hops, long count, std::uint64_t seed, std::vector<std::string> themes) {
  SplitSpec spec;
  spec.rows.push_back({hops, count, 0, 0});
  std::vector<std::string> out;
  for (const auto& s : generate_split(spec, "train", themes, seed)) out.push_back(sample_to_json(s));
  return out;
}

std::vector<std::pair<std::string, std::string>> verify_json(const std::string& line) {
  const auto v = verify_sample(sample_from_json(line));
  std::vector<std::pair<std::string, std::string>> out;
  for (std::size_t i = 0; i < v.failures.size(); ++i) out.emplace_back(to_string(v.failures[i]), v.details[i]);
  return out;
}

std::string shortcut_json(const std::vector<std::string>& lines, long min_support) {
  std::vector<NatBoolSample> samples;
  for (const auto& l : lines) samples.push_back(sample_from_json(l));
  json j = json::array();
  for (const auto& r : shortcut_marginals(samples, min_support)) {
    j.push_back({{"hops", r.hops}, {"samples", r.samples}, {"base_rate", r.base_rate}, {"max_gap", r.max_gap},
                 {"worst", r.worst}});
  }
  return j.dump();
}

TokenizedCorpus make_corpus(const std::vector<std::vector<std::string>>& tokens, const std::vector<int>& labels) {
  if (tokens.size() != labels.size()) throw InputError("tokens and labels differ in length");
  TokenizedCorpus c;
  for (std::size_t i = 0; i < tokens.size(); ++i) c.add(tokens[i], labels[i]);
  return c;
}

ProbeConfig probe_config(const py::dict& kw) {
  ProbeConfig cfg;
  for (const auto& [k, v] : kw) {
    const auto key = py::cast<std::string>(k);
    if (key == "gamma") cfg.gamma = py::cast<double>(v);
    else if (key == "max_order") cfg.max_order = py::cast<int>(v);
    else if (key == "budget") cfg.budget = py::cast<long>(v);
    else if (key == "smoothing") cfg.smoothing = py::cast<double>(v);
    else if (key == "min_joint") cfg.min_joint = py::cast<long>(v);
    else if (key == "normalized") cfg.normalized = py::cast<bool>(v);
    else if (key == "seed") cfg.seed = py::cast<std::uint64_t>(v);
    else throw ConfigError("unknown probe option '" + key + "'");
  }
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "cotlab core bindings";
  m.attr("__version__") = COTLAB_VERSION;

  py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_RuntimeError);
  py::register_exception<StructuralError>(m, "StructuralError", PyExc_RuntimeError);

  m.def("default_support", &default_support, py::arg("d"), py::arg("k"));
  m.def("parity_samples", &parity_samples, py::arg("d"), py::arg("support"), py::arg("n"), py::arg("seed") = 1);
  m.def("grad_check", &grad_check, py::arg("m"), py::arg("support"), py::arg("n") = 32, py::arg("d_model") = 16,
        py::arg("seed") = 1, py::arg("eps") = 1e-5);
  m.def(
      "check_parity_invariance",
      [](const std::vector<double>& u, const std::vector<double>& v, int r) { return check_parity_invariance(u, v, r); },
      py::arg("u"), py::arg("v"), py::arg("r"));
  m.def(
      "scaling_slope",
      [](int r, std::vector<int> m_grid, int seeds, std::uint64_t seed) {
        ScalingConfig cfg;
        cfg.r = r;
        cfg.m_grid = std::move(m_grid);
        cfg.seeds = seeds;
        cfg.seed = seed;
        return scaling_experiment(cfg).slope;
      },
      py::arg("r"), py::arg("m_grid"), py::arg("seeds") = 20, py::arg("seed") = 1);

  m.def("default_train_config", [] { return config_to_json(TrainConfig{}); });
  m.def("train_json", &train_json, py::arg("config"), py::call_guard<py::gil_scoped_release>());

  m.def(
      "apply_gate", [](const std::string& gate, bool a, bool b) { return apply_gate(gate_from_string(gate), a, b); },
      py::arg("gate"), py::arg("a"), py::arg("b") = false);
  m.def("natbool_samples", &natbool_samples, py::arg("hops"), py::arg("count"), py::arg("seed") = 1,
        py::arg("themes") = std::vector<std::string>{"medical", "logistics", "access-control"});
  m.def("verify_json", &verify_json, py::arg("line"));
  m.def("shortcut_json", &shortcut_json, py::arg("lines"), py::arg("min_support") = 1000);
  m.def(
      "build_dataset",
      [](const std::filesystem::path& spec, const std::filesystem::path& out, std::uint64_t seed,
         std::vector<std::string> themes) {
        const auto sum = build_dataset(load_split_spec(spec), themes, seed, out);
        std::map<std::string, std::map<int, long>> counts(sum.counts.begin(), sum.counts.end());
        return counts;
      },
      py::arg("spec"), py::arg("out"), py::arg("seed") = 1,
      py::arg("themes") = std::vector<std::string>{"medical", "logistics", "access-control"});

  m.def(
      "pmi",
      [](const std::vector<std::vector<std::string>>& tokens, const std::vector<int>& labels,
         const std::vector<std::string>& subset, int y, const py::kwargs& kw) {
        const auto c = make_corpus(tokens, labels);
        InteractionProbe probe(c, probe_config(kw));
        return probe.pmi(c.ids(subset), y);
      },
      py::arg("tokens"), py::arg("labels"), py::arg("subset"), py::arg("y"));
  m.def(
      "synergy",
      [](const std::vector<std::vector<std::string>>& tokens, const std::vector<int>& labels,
         const std::vector<std::string>& subset, int y, const py::kwargs& kw) {
        const auto c = make_corpus(tokens, labels);
        InteractionProbe probe(c, probe_config(kw));
        return probe.synergy(c.ids(subset), y);
      },
      py::arg("tokens"), py::arg("labels"), py::arg("subset"), py::arg("y"));
  m.def(
      "density_quality",
      [](const std::vector<std::vector<std::string>>& tokens, const std::vector<int>& labels, int order,
         const py::kwargs& kw) {
        const auto st = density_quality(make_corpus(tokens, labels), order, probe_config(kw));
        py::dict d;
        d["order"] = st.order;
        d["rho"] = st.rho;
        d["phi"] = st.phi;
        d["valid_count"] = st.valid_count;
        d["sampled_count"] = st.sampled_count;
        return d;
      },
      py::arg("tokens"), py::arg("labels"), py::arg("order"));
  m.def(
      "natbool_tokens",
      [](const std::string& line, bool with_cot) { return natbool_tokens(sample_from_json(line), with_cot); },
      py::arg("line"), py::arg("with_cot") = false);
}
