#include "cotlab/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "cotlab/errors.hpp"
#include "json.hpp"

namespace cotlab {

const char* to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::Explicit: return "explicit";
    case TrainMode::ImpBase1: return "impbase1";
    case TrainMode::ImpBase2: return "impbase2";
    case TrainMode::AlicotClassifier: return "alicot-classifier";
    case TrainMode::AlicotCosine: return "alicot-cosine";
  }
  return "?";
}

TrainMode train_mode_from_string(const std::string& name) {
  for (const auto m : {TrainMode::Explicit, TrainMode::ImpBase1, TrainMode::ImpBase2, TrainMode::AlicotClassifier,
                       TrainMode::AlicotCosine}) {
    if (name == to_string(m)) {
      return m;
    }
  }
  throw InputError("unknown training mode '" + name + "'");
}

const char* to_string(HeadKind kind) { return kind == HeadKind::Factored ? "factored" : "joint"; }

HeadKind head_kind_from_string(const std::string& name) {
  if (name == "factored") return HeadKind::Factored;
  if (name == "joint") return HeadKind::Joint;
  throw InputError("unknown head kind '" + name + "'");
}

std::string config_to_json(const TrainConfig& cfg) {
  nlohmann::ordered_json j;
  j["mode"] = to_string(cfg.mode);
  j["d"] = cfg.d;
  j["k"] = cfg.k;
  j["support"] = cfg.support;
  j["s"] = cfg.s;
  j["layout"] = to_string(cfg.layout);
  j["readout"] = to_string(cfg.readout);
  j["head"] = to_string(cfg.head);
  j["d_model"] = cfg.d_model;
  j["ffn"] = cfg.ffn;
  j["ffn_c"] = cfg.ffn_c;
  j["lr_logits"] = cfg.lr_logits;
  j["lr_output"] = cfg.lr_output;
  j["lr_latent"] = cfg.lr_latent;
  j["lr_head"] = cfg.lr_head;
  j["batch"] = cfg.batch;
  j["max_steps"] = cfg.max_steps;
  j["eval_interval"] = cfg.eval_interval;
  j["eval_batch"] = cfg.eval_batch;
  j["lambda"] = cfg.lambda;
  j["latent_init"] = cfg.latent_init;
  j["seed"] = cfg.seed;
  j["gradcheck_points"] = cfg.gradcheck_points;
  return j.dump(2);
}

TrainConfig config_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    TrainConfig c;
    c.mode = train_mode_from_string(j.value("mode", std::string(to_string(c.mode))));
    c.d = j.value("d", c.d);
    c.k = j.value("k", c.k);
    c.support = j.value("support", c.support);
    c.s = j.value("s", c.s);
    c.layout = latent_layout_from_string(j.value("layout", std::string(to_string(c.layout))));
    c.readout = latent_readout_from_string(j.value("readout", std::string(to_string(c.readout))));
    c.head = head_kind_from_string(j.value("head", std::string(to_string(c.head))));
    c.d_model = j.value("d_model", c.d_model);
    c.ffn = j.value("ffn", c.ffn);
    c.ffn_c = j.value("ffn_c", c.ffn_c);
    c.lr_logits = j.value("lr_logits", c.lr_logits);
    c.lr_output = j.value("lr_output", c.lr_output);
    c.lr_latent = j.value("lr_latent", c.lr_latent);
    c.lr_head = j.value("lr_head", c.lr_head);
    c.batch = j.value("batch", c.batch);
    c.max_steps = j.value("max_steps", c.max_steps);
    c.eval_interval = j.value("eval_interval", c.eval_interval);
    c.eval_batch = j.value("eval_batch", c.eval_batch);
    c.lambda = j.value("lambda", c.lambda);
    c.latent_init = j.value("latent_init", c.latent_init);
    c.seed = j.value("seed", c.seed);
    c.gradcheck_points = j.value("gradcheck_points", c.gradcheck_points);
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("train config: ") + e.what());
  }
}

TrainMode effective_mode(const TrainConfig& cfg) { return cfg.s == 0 ? TrainMode::Explicit : cfg.mode; }

namespace {

bool is_alicot(TrainMode m) { return m == TrainMode::AlicotClassifier || m == TrainMode::AlicotCosine; }

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// log(1 + exp(-x)) without overflow.
double softplus_neg(double x) { return x > 0 ? std::log1p(std::exp(-x)) : -x + std::log1p(std::exp(x)); }

}  // namespace

AlignHead AlignHead::create(HeadKind kind, int tau, int slots, int d_model) {
  if (tau < 1) {
    throw ConfigError("align head: tau must be positive");
  }
  if (kind == HeadKind::Joint && tau > 8) {
    throw ConfigError("align head: joint head limited to tau <= 8, got " + std::to_string(tau));
  }
  AlignHead h;
  h.kind = kind;
  h.tau = tau;
  h.slots = slots;
  h.d_model = d_model;
  if (kind == HeadKind::Factored) {
    h.weight.assign(static_cast<std::size_t>(tau), Vec(static_cast<std::size_t>(d_model), 0.0));
    h.bias.assign(static_cast<std::size_t>(tau), 0.0);
  } else {
    h.weight.assign(static_cast<std::size_t>(1 << tau), Vec(static_cast<std::size_t>(slots * d_model), 0.0));
    h.bias.assign(static_cast<std::size_t>(1 << tau), 0.0);
  }
  return h;
}

Vec AlignHead::flatten() const {
  Vec out;
  for (const auto& row : weight) {
    out.insert(out.end(), row.begin(), row.end());
  }
  out.insert(out.end(), bias.begin(), bias.end());
  return out;
}

void AlignHead::unflatten(std::span<const double> flat) {
  std::size_t k = 0;
  for (auto& row : weight) {
    for (auto& x : row) {
      x = flat[k++];
    }
  }
  for (auto& x : bias) {
    x = flat[k++];
  }
}

HeadGrad HeadGrad::zeros_like(const AlignHead& head) {
  HeadGrad g;
  for (const auto& row : head.weight) {
    g.weight.emplace_back(row.size(), 0.0);
  }
  g.bias.assign(head.bias.size(), 0.0);
  return g;
}

double loss_align_classifier(const std::vector<Vec>& states, std::span<const int> targets, const AlignHead& head,
                             double scale, std::vector<Vec>* d_states, HeadGrad* head_grad) {
  if (static_cast<int>(targets.size()) != head.tau) {
    throw ConfigError("align head: expects " + std::to_string(head.tau) + " concealed values, got " +
                      std::to_string(targets.size()));
  }
  if (static_cast<int>(states.size()) != head.slots) {
    throw ConfigError("align head: expects " + std::to_string(head.slots) + " latent states, got " +
                      std::to_string(states.size()));
  }
  const auto dm = static_cast<std::size_t>(head.d_model);
  double loss = 0.0;
  if (head.kind == HeadKind::Factored) {
    for (int i = 0; i < head.tau; ++i) {
      const auto ii = static_cast<std::size_t>(i);
      const std::size_t si = head.slots == 1 ? 0 : ii;
      const Vec& x = states[si];
      double logit = head.bias[ii];
      for (std::size_t c = 0; c < dm; ++c) {
        logit += head.weight[ii][c] * x[c];
      }
      const double z = targets[ii];
      loss += softplus_neg(z * logit);
      const double dl = -z * sigmoid(-z * logit) * scale;
      if (d_states != nullptr) {
        for (std::size_t c = 0; c < dm; ++c) {
          (*d_states)[si][c] += dl * head.weight[ii][c];
        }
      }
      if (head_grad != nullptr) {
        for (std::size_t c = 0; c < dm; ++c) {
          head_grad->weight[ii][c] += dl * x[c];
        }
        head_grad->bias[ii] += dl;
      }
    }
    return loss;
  }

  std::size_t label = 0;
  for (int i = 0; i < head.tau; ++i) {
    if (targets[static_cast<std::size_t>(i)] == 1) {
      label |= std::size_t{1} << i;
    }
  }
  const std::size_t classes = head.weight.size();
  Vec logits(classes);
  for (std::size_t c = 0; c < classes; ++c) {
    double l = head.bias[c];
    for (std::size_t s = 0; s < states.size(); ++s) {
      for (std::size_t i = 0; i < dm; ++i) {
        l += head.weight[c][s * dm + i] * states[s][i];
      }
    }
    logits[c] = l;
  }
  const Vec prob = softmax(logits);
  const double mx = *std::max_element(logits.begin(), logits.end());
  double lse = 0.0;
  for (const double l : logits) {
    lse += std::exp(l - mx);
  }
  loss = -(logits[label] - mx - std::log(lse));
  for (std::size_t c = 0; c < classes; ++c) {
    const double dl = (prob[c] - (c == label ? 1.0 : 0.0)) * scale;
    for (std::size_t s = 0; s < states.size(); ++s) {
      for (std::size_t i = 0; i < dm; ++i) {
        if (d_states != nullptr) {
          (*d_states)[s][i] += dl * head.weight[c][s * dm + i];
        }
        if (head_grad != nullptr) {
          head_grad->weight[c][s * dm + i] += dl * states[s][i];
        }
      }
    }
    if (head_grad != nullptr) {
      head_grad->bias[c] += dl;
    }
  }
  return loss;
}

CosineResult loss_align_cosine(std::span<const double> c, std::span<const double> t, double scale, Vec* d_c) {
  if (c.size() != t.size()) {
    throw InputError("cosine: length mismatch");
  }
  double ct = 0.0, cc = 0.0, tt = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    ct += c[i] * t[i];
    cc += c[i] * c[i];
    tt += t[i] * t[i];
  }
  CosineResult out;
  if (cc == 0.0 || tt == 0.0) {
    out.value = 1.0;
    out.degenerate = true;
    return out;
  }
  const double nc = std::sqrt(cc);
  const double nt = std::sqrt(tt);
  const double cosv = ct / (nc * nt);
  out.value = 1.0 - cosv;
  if (d_c != nullptr) {
    for (std::size_t i = 0; i < c.size(); ++i) {
      (*d_c)[i] += -scale * (t[i] / (nc * nt) - cosv * c[i] / cc);
    }
  }
  return out;
}

double loss_explicit(const ModelParams& params, std::span<const SequenceEncoding> batch) {
  for (const auto& e : batch) {
    if (e.concealed_step != 0) {
      throw InputError("loss_explicit: implicit encoding in batch");
    }
  }
  return batch_loss(params, batch);
}

double loss_implicit(const ModelParams& params, std::span<const SequenceEncoding> batch) {
  for (const auto& e : batch) {
    if (e.concealed_step == 0) {
      throw InputError("loss_implicit: explicit encoding in batch");
    }
  }
  return batch_loss(params, batch);
}

TrainSetup make_setup(const TrainConfig& cfg) {
  if (cfg.batch < 1 || cfg.eval_batch < 1 || cfg.eval_interval < 1 || cfg.max_steps < 0) {
    throw ConfigError("train: batch, eval batch and eval interval must be positive");
  }
  if (cfg.lambda < 0.0) {
    throw ConfigError("train: lambda must be non-negative");
  }
  TrainSetup st;
  st.cfg = cfg;
  st.mode = effective_mode(cfg);
  if (st.mode == TrainMode::ImpBase2) {
    // One extraction from <bot>; chaining dynamic slots would truncate gradients.
    st.cfg.layout = LatentLayout::Single;
  }
  st.support = cfg.support.empty() ? default_support(cfg.d, cfg.k) : normalize_support(cfg.d, cfg.support);
  if (static_cast<int>(st.support.size()) < 2) {
    throw ConfigError("train: k must be at least 2");
  }
  std::vector<int> ones(static_cast<std::size_t>(cfg.d), 1);
  const auto probe = make_instance(ones, st.support);
  const auto trace = build_cot_trace(probe);
  const int explicit_len = encode_explicit(trace, probe).length();
  st.positions = explicit_len;
  if (st.mode != TrainMode::Explicit) {
    if (cfg.s < 1 || cfg.s > trace.height) {
      throw ConfigError("train: concealed steps " + std::to_string(cfg.s) + " outside [1, " +
                        std::to_string(trace.height) + "]");
    }
    const auto enc = encode_implicit(trace, probe, cfg.s, st.cfg.layout);
    st.tau = enc.tau;
    st.slots = enc.slot_count();
    st.positions = std::max(explicit_len, enc.length());
  }
  return st;
}

SequenceEncoding encode_for(const TrainSetup& setup, const ParityInstance& inst) {
  const auto trace = build_cot_trace(inst);
  if (setup.mode == TrainMode::Explicit) {
    return encode_explicit(trace, inst);
  }
  return encode_implicit(trace, inst, setup.cfg.s, setup.cfg.layout);
}

ModelParams init_model(const TrainSetup& setup) {
  InitConfig ic;
  ic.d_model = setup.cfg.d_model;
  ic.max_positions = setup.positions;
  ic.poly = FfnPoly::from_name(setup.cfg.ffn, setup.cfg.ffn_c);
  ic.readout = setup.cfg.readout;
  ic.latent_slots = setup.slots;
  ic.latent_scale = setup.cfg.latent_init;
  switch (setup.mode) {
    case TrainMode::Explicit:
      ic.latent = LatentMode::None;
      break;
    case TrainMode::ImpBase2:
      ic.latent = LatentMode::DynamicHidden;
      break;
    default:
      ic.latent = LatentMode::StaticParam;
      break;
  }
  Rng rng = make_rng(setup.cfg.seed, "model-init");
  return init_params(ic, rng);
}

std::vector<Vec> explicit_node_hiddens(const ModelParams& model, const ParityInstance& inst,
                                       std::span<const CotNode> nodes) {
  const auto trace = build_cot_trace(inst);
  const auto enc = encode_explicit(trace, inst);
  std::vector<Vec> out;
  for (const auto& node : nodes) {
    const int P = node.index;
    if (P < 2 || P > enc.length() || P > model.logits.max_positions) {
      throw InputError("explicit_node_hiddens: node position outside the teacher's table");
    }
    const Vec sigma = softmax(model.logits.row(P));
    double a = 0.0;
    for (int j = 1; j < P; ++j) {
      a += sigma[static_cast<std::size_t>(j - 1)] * enc.at(j).value;
    }
    Vec h(model.basis.v.size());
    for (std::size_t i = 0; i < h.size(); ++i) {
      h[i] = model.poly.eval(a * model.basis.v[i]);
    }
    out.push_back(std::move(h));
  }
  return out;
}

std::pair<double, double> objective(const TrainSetup& setup, const ModelParams& params, const AlignHead& head,
                                    std::span<const ParityInstance> batch, ModelGrad* grad, HeadGrad* head_grad) {
  if (batch.empty()) {
    throw InputError("objective: empty batch");
  }
  SequenceEngine engine(params);
  const double scale = 1.0 / static_cast<double>(batch.size());
  const double lambda = setup.cfg.lambda;
  double task = 0.0;
  double align = 0.0;
  HeadGrad local = head_grad != nullptr ? HeadGrad::zeros_like(head) : HeadGrad{};
  for (const auto& inst : batch) {
    const auto enc = encode_for(setup, inst);
    LatentObjective obj;
    if (setup.mode == TrainMode::AlicotClassifier) {
      obj = [&](const std::vector<Vec>& states, std::vector<Vec>* d_states) {
        return loss_align_classifier(states, enc.concealed_targets, head, lambda, d_states,
                                     head_grad != nullptr ? &local : nullptr);
      };
    } else if (setup.mode == TrainMode::AlicotCosine) {
      if (!setup.teacher) {
        throw ConfigError("alicot-cosine needs a teacher model");
      }
      obj = [&](const std::vector<Vec>& states, std::vector<Vec>* d_states) {
        const auto targets = explicit_node_hiddens(*setup.teacher, inst, enc.concealed);
        const double pairs = static_cast<double>(targets.size());
        double total = 0.0;
        for (std::size_t i = 0; i < targets.size(); ++i) {
          const std::size_t si = states.size() == 1 ? 0 : i;
          const auto r = loss_align_cosine(states[si], targets[i], lambda / pairs,
                                           d_states != nullptr ? &(*d_states)[si] : nullptr);
          total += r.value;
        }
        return total / pairs;
      };
    }
    // The classifier reads what later positions see; cosine targets are hidden states.
    const SlotView view = setup.mode == TrainMode::AlicotCosine ? SlotView::Hidden : SlotView::Key;
    const auto res = engine.run(enc, scale, grad, obj ? &obj : nullptr, view);
    task += res.task_loss;
    align += res.latent_loss;
  }
  if (grad != nullptr) {
    engine.finish(*grad);
  }
  if (head_grad != nullptr) {
    for (std::size_t r = 0; r < local.weight.size(); ++r) {
      for (std::size_t c = 0; c < local.weight[r].size(); ++c) {
        head_grad->weight[r][c] += scale * local.weight[r][c];
      }
    }
    for (std::size_t r = 0; r < local.bias.size(); ++r) {
      head_grad->bias[r] += scale * local.bias[r];
    }
  }
  return {task * scale, align * scale};
}

double evaluate_accuracy(const TrainSetup& setup, const ModelParams& params, std::span<const ParityInstance> batch) {
  if (batch.empty()) {
    throw InputError("evaluate: empty batch");
  }
  SequenceEngine engine(params);
  int ok = 0;
  for (const auto& inst : batch) {
    const auto res = engine.run(encode_for(setup, inst), 1.0, nullptr);
    ok += res.correct == res.supervised ? 1 : 0;
  }
  return static_cast<double>(ok) / static_cast<double>(batch.size());
}

namespace {

std::vector<ParityInstance> draw_batch(int d, std::span<const int> support, int n, Rng& rng) {
  std::vector<ParityInstance> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    out.push_back(sample_instance(d, support, rng));
  }
  return out;
}

double gradcheck(const TrainSetup& setup, const ModelParams& params, const AlignHead& head,
                 std::span<const ParityInstance> batch) {
  auto g = ModelGrad::zeros_like(params);
  auto hg = HeadGrad::zeros_like(head);
  objective(setup, params, head, batch, &g, is_alicot(setup.mode) ? &hg : nullptr);
  Vec analytic = flatten(g, kAllParams);
  Vec x = flatten(params, kAllParams);
  const std::size_t model_size = x.size();
  if (is_alicot(setup.mode)) {
    const Vec hx = head.flatten();
    x.insert(x.end(), hx.begin(), hx.end());
    AlignHead tmp = head;
    tmp.weight = hg.weight;
    tmp.bias = hg.bias;
    const Vec ha = tmp.flatten();
    analytic.insert(analytic.end(), ha.begin(), ha.end());
  }
  const auto fd = fd_gradient(
      [&](std::span<const double> flat) {
        ModelParams p = params;
        unflatten(p, kAllParams, flat.subspan(0, model_size));
        AlignHead h = head;
        if (is_alicot(setup.mode)) {
          h.unflatten(flat.subspan(model_size));
        }
        const auto [task, align] = objective(setup, p, h, batch, nullptr, nullptr);
        return task + setup.cfg.lambda * align;
      },
      x, 1e-5);
  return relative_error(analytic, fd.grad, 1e-8);
}

}  // namespace

void decode_basis(AlignHead& head, std::span<const double> v) {
  double vv = 0.0;
  for (const double x : v) {
    vv += x * x;
  }
  if (vv == 0.0) {
    return;
  }
  const auto dm = static_cast<std::size_t>(head.d_model);
  if (head.kind == HeadKind::Factored) {
    for (auto& row : head.weight) {
      for (std::size_t c = 0; c < dm; ++c) {
        row[c] = v[c] / vv;
      }
    }
    return;
  }
  for (std::size_t cls = 0; cls < head.weight.size(); ++cls) {
    for (int i = 0; i < head.tau; ++i) {
      const std::size_t si = head.slots == 1 ? 0 : static_cast<std::size_t>(i);
      const double sign = (cls >> i) & 1u ? 1.0 : -1.0;
      for (std::size_t c = 0; c < dm; ++c) {
        head.weight[cls][si * dm + c] += sign * v[c] / vv;
      }
    }
  }
}

TrainResult train(const TrainConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  TrainSetup setup = make_setup(cfg);
  if (setup.mode == TrainMode::AlicotCosine) {
    TrainConfig tc = cfg;
    tc.mode = TrainMode::Explicit;
    tc.s = 0;
    tc.gradcheck_points = 0;
    setup.teacher = std::make_shared<const ModelParams>(train(tc).params);
  }
  TrainResult out;
  out.params = init_model(setup);
  if (is_alicot(setup.mode)) {
    out.head = AlignHead::create(cfg.head, setup.tau, setup.slots, cfg.d_model);
    if (setup.mode == TrainMode::AlicotClassifier && cfg.readout == LatentReadout::Token) {
      decode_basis(out.head, out.params.basis.v);
    }
  }
  auto& rec = out.record;
  rec.mode = setup.mode;
  rec.s = setup.mode == TrainMode::Explicit ? 0 : cfg.s;
  rec.seed = cfg.seed;

  Rng train_rng = make_rng(cfg.seed, "train-data");
  Rng eval_rng = make_rng(cfg.seed, "eval-data");
  const auto eval_set = draw_batch(cfg.d, setup.support, cfg.eval_batch, eval_rng);

  auto& p = out.params;
  for (long step = 1; step <= cfg.max_steps; ++step) {
    const auto batch = draw_batch(cfg.d, setup.support, cfg.batch, train_rng);
    auto g = ModelGrad::zeros_like(p);
    auto hg = HeadGrad::zeros_like(out.head);
    const auto [task, align] = objective(setup, p, out.head, batch, &g, is_alicot(setup.mode) ? &hg : nullptr);
    rec.final_task_loss = task;
    rec.final_align_loss = align;
    if (!std::isfinite(task) || !std::isfinite(align)) {
      rec.diverged = true;
      break;
    }
    const bool eval_now = step % cfg.eval_interval == 0;
    if (eval_now && rec.gradchecks < cfg.gradcheck_points) {
      const std::size_t n = std::min<std::size_t>(4, batch.size());
      rec.max_gradcheck_error = std::max(
          rec.max_gradcheck_error, gradcheck(setup, p, out.head, std::span<const ParityInstance>(batch).first(n)));
      rec.gradchecks += 1;
    }
    for (std::size_t i = 0; i < p.logits.w.size(); ++i) {
      p.logits.w[i] -= cfg.lr_logits * g.w[i];
    }
    for (std::size_t i = 0; i < p.basis.u.size(); ++i) {
      p.basis.u[i] -= cfg.lr_output * g.u[i];
    }
    for (std::size_t s = 0; s < p.latent.slots.size(); ++s) {
      for (std::size_t i = 0; i < p.latent.slots[s].size(); ++i) {
        p.latent.slots[s][i] -= cfg.lr_latent * g.latent[s][i];
      }
    }
    for (std::size_t r = 0; r < out.head.weight.size(); ++r) {
      for (std::size_t c = 0; c < out.head.weight[r].size(); ++c) {
        out.head.weight[r][c] -= cfg.lr_head * hg.weight[r][c];
      }
      out.head.bias[r] -= cfg.lr_head * hg.bias[r];
    }
    if (eval_now) {
      const double acc = evaluate_accuracy(setup, p, eval_set);
      rec.curve.push_back({step, task, align, acc});
      rec.final_eval_acc = acc;
      if (acc >= 1.0) {
        rec.steps_to_full = step;
        break;
      }
    }
  }
  rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

SweepReport sweep_concealed_steps(const TrainConfig& base, std::span<const int> s_range,
                                  std::span<const TrainMode> modes) {
  SweepReport rep;
  for (const int s : s_range) {
    for (const auto mode : modes) {
      TrainConfig cfg = base;
      cfg.s = s;
      cfg.mode = mode;
      rep.records.push_back(train(cfg).record);
    }
  }
  const bool has_classifier =
      std::find(modes.begin(), modes.end(), TrainMode::AlicotClassifier) != modes.end();
  check_sweep_orderings(rep, has_classifier ? TrainMode::AlicotClassifier : TrainMode::AlicotCosine);
  return rep;
}

void check_sweep_orderings(SweepReport& report, TrainMode alicot_mode) {
  report.alicot_not_slower = true;
  report.impbase1_monotone = true;
  report.notes.clear();
  auto steps = [](const ConvergenceRecord& r) {
    return r.converged() ? static_cast<double>(r.steps_to_full) : std::numeric_limits<double>::infinity();
  };
  std::map<std::uint64_t, std::map<int, const ConvergenceRecord*>> imp, ali;
  for (const auto& r : report.records) {
    if (r.mode == TrainMode::ImpBase1) {
      imp[r.seed][r.s] = &r;
    } else if (r.mode == alicot_mode) {
      ali[r.seed][r.s] = &r;
    }
  }
  for (const auto& [seed, by_s] : imp) {
    double prev = -1.0;
    int prev_s = 0;
    for (const auto& [s, r] : by_s) {
      const double v = steps(*r);
      if (v < prev) {
        report.impbase1_monotone = false;
        report.notes.push_back("seed " + std::to_string(seed) + ": impbase1 steps drop from s=" +
                               std::to_string(prev_s) + " to s=" + std::to_string(s));
      }
      prev = v;
      prev_s = s;
      if (s < 2) {
        continue;
      }
      const auto it = ali[seed].find(s);
      if (it == ali[seed].end()) {
        continue;
      }
      if (!r->converged() || !it->second->converged()) {
        report.notes.push_back("seed " + std::to_string(seed) + " s=" + std::to_string(s) +
                               ": not compared (a run did not converge)");
        continue;
      }
      if (steps(*it->second) > v) {
        report.alicot_not_slower = false;
        report.notes.push_back("seed " + std::to_string(seed) + " s=" + std::to_string(s) + ": " +
                               to_string(alicot_mode) + " slower than impbase1");
      }
    }
  }
}

std::string record_to_json(const ConvergenceRecord& rec) {
  nlohmann::ordered_json j;
  j["mode"] = to_string(rec.mode);
  j["s"] = rec.s;
  j["seed"] = rec.seed;
  j["converged"] = rec.converged();
  if (rec.converged()) {
    j["steps_to_full_accuracy"] = rec.steps_to_full;
  } else {
    j["steps_to_full_accuracy"] = nullptr;
  }
  j["diverged"] = rec.diverged;
  j["final_task_loss"] = rec.final_task_loss;
  j["final_align_loss"] = rec.final_align_loss;
  j["final_eval_acc"] = rec.final_eval_acc;
  j["gradchecks"] = rec.gradchecks;
  j["max_gradcheck_error"] = rec.max_gradcheck_error;
  j["eval_points"] = rec.curve.size();
  return j.dump(2);
}

void write_train_artifacts(const std::filesystem::path& dir, const TrainConfig& cfg, const ConvergenceRecord& rec) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream f(dir / "config.json");
    f << config_to_json(cfg) << "\n";
  }
  {
    std::ofstream f(dir / "curve.csv");
    f << "step,mode,s,train_loss,align_loss,eval_acc\n";
    f.precision(10);
    for (const auto& row : rec.curve) {
      f << row.step << ',' << to_string(rec.mode) << ',' << rec.s << ',' << row.train_loss << ',' << row.align_loss
        << ',' << row.eval_acc << '\n';
    }
  }
  {
    std::ofstream f(dir / "record.json");
    f << record_to_json(rec) << "\n";
  }
}

}  // namespace cotlab
