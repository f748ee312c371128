#include "cotlab/micro_transformer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cotlab/errors.hpp"
#include "json.hpp"

namespace cotlab {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    s += a[i] * b[i];
  }
  return s;
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    y[i] += alpha * x[i];
  }
}

// p(y) for score s = u.h; both classes use the same expression so negating
// the score swaps the pair exactly.
double class_prob(double s, int y) { return 1.0 / (1.0 + std::exp(-2.0 * static_cast<double>(y) * s)); }

}  // namespace

FfnPoly FfnPoly::from_name(const std::string& name, double c) {
  if (name == "standard") {
    return standard(c);
  }
  if (name == "parity-exact") {
    return parity_exact(c);
  }
  throw InputError("unknown ffn preset '" + name + "' (expected standard|parity-exact)");
}

double FfnPoly::gamma(int r) const {
  if (r == 2) {
    return 2.0 * a2;
  }
  if (r == 4) {
    return 4.0 * a4;
  }
  return 0.0;
}

AttentionLogits::AttentionLogits(int positions) : max_positions(positions) {
  if (positions < 0) {
    throw InputError("attention: negative position count");
  }
  w.assign(positions >= 2 ? row_offset(positions + 1) : 0, 0.0);
}

const char* to_string(LatentMode mode) {
  switch (mode) {
    case LatentMode::None: return "none";
    case LatentMode::StaticParam: return "static";
    case LatentMode::DynamicHidden: return "dynamic";
  }
  return "?";
}

const char* to_string(LatentReadout readout) {
  switch (readout) {
    case LatentReadout::Injected: return "injected";
    case LatentReadout::Processed: return "processed";
    case LatentReadout::Token: return "token";
  }
  return "?";
}

LatentMode latent_mode_from_string(const std::string& name) {
  if (name == "none") return LatentMode::None;
  if (name == "static") return LatentMode::StaticParam;
  if (name == "dynamic") return LatentMode::DynamicHidden;
  throw InputError("unknown latent mode '" + name + "'");
}

LatentReadout latent_readout_from_string(const std::string& name) {
  if (name == "injected") return LatentReadout::Injected;
  if (name == "processed") return LatentReadout::Processed;
  if (name == "token") return LatentReadout::Token;
  throw InputError("unknown latent readout '" + name + "'");
}

ModelParams init_params(const InitConfig& cfg, Rng& rng) {
  if (cfg.d_model < 1) {
    throw InputError("init: d_model must be positive");
  }
  ModelParams p;
  p.poly = cfg.poly;
  p.readout = cfg.readout;
  p.basis.v = uniform_vector(rng, static_cast<std::size_t>(cfg.d_model), -1.0, 1.0);
  p.basis.u = uniform_vector(rng, static_cast<std::size_t>(cfg.d_model), -cfg.u_scale, cfg.u_scale);
  p.logits = AttentionLogits(cfg.max_positions);
  p.latent.mode = cfg.latent;
  if (cfg.latent == LatentMode::StaticParam) {
    for (int i = 0; i < cfg.latent_slots; ++i) {
      p.latent.slots.push_back(
          uniform_vector(rng, static_cast<std::size_t>(cfg.d_model), -cfg.latent_scale, cfg.latent_scale));
    }
  }
  return p;
}

Vec embed(int token, const EmbeddingBasis& basis) {
  if (token != 1 && token != -1) {
    throw InputError("embed: token must be +1 or -1");
  }
  Vec e(basis.v.size());
  for (std::size_t i = 0; i < e.size(); ++i) {
    e[i] = token * basis.v[i];
  }
  return e;
}

Vec softmax(std::span<const double> logits) {
  Vec out(logits.size());
  if (logits.empty()) {
    return out;
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    total += out[i];
  }
  for (auto& x : out) {
    x /= total;
  }
  return out;
}

Vec attention_forward(const AttentionLogits& logits, std::span<const Vec> prefix, int m) {
  if (m < 2) {
    throw InputError("attention: position " + std::to_string(m) + " has no keys");
  }
  if (m > logits.max_positions) {
    throw InputError("attention: position " + std::to_string(m) + " beyond logit table");
  }
  if (static_cast<int>(prefix.size()) < m - 1) {
    throw InputError("attention: prefix shorter than m-1");
  }
  const Vec sigma = softmax(logits.row(m));
  Vec z(prefix[0].size(), 0.0);
  for (int j = 0; j < m - 1; ++j) {
    axpy(sigma[static_cast<std::size_t>(j)], prefix[static_cast<std::size_t>(j)], z);
  }
  return z;
}

Vec ffn(std::span<const double> z, const FfnPoly& poly) {
  Vec h(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    h[i] = poly.eval(z[i]);
  }
  return h;
}

std::pair<double, double> output_probs(std::span<const double> h, const EmbeddingBasis& basis) {
  const double s = dot(basis.u, h);
  return {class_prob(s, 1), class_prob(s, -1)};
}

double ce_loss(std::pair<double, double> y_hat, int y, double floor, bool* clamped) {
  if (y != 1 && y != -1) {
    throw InputError("ce_loss: label must be +1 or -1");
  }
  const double p = y == 1 ? y_hat.first : y_hat.second;
  if (p < floor) {
    if (clamped != nullptr) {
      *clamped = true;
    }
    return -std::log(floor);
  }
  return -std::log(p);
}

namespace {

std::vector<int> slot_ordinals(const SequenceEncoding& enc) {
  std::vector<int> out(static_cast<std::size_t>(enc.length()) + 1, -1);
  for (int m = 1; m <= enc.length(); ++m) {
    if (enc.at(m).kind == TokenKind::LatentSlot) {
      out[static_cast<std::size_t>(m)] = enc.at(m).slot;
    }
  }
  return out;
}

void check_fits(const ModelParams& params, const SequenceEncoding& enc) {
  if (enc.length() > params.logits.max_positions) {
    throw InputError("sequence of length " + std::to_string(enc.length()) + " exceeds the logit table (" +
                     std::to_string(params.logits.max_positions) + " positions)");
  }
}

const Vec& static_slot(const ModelParams& params, int ordinal) {
  if (ordinal < 0 || ordinal >= static_cast<int>(params.latent.slots.size())) {
    throw ConfigError("latent slot " + std::to_string(ordinal) + " has no static value configured");
  }
  return params.latent.slots[static_cast<std::size_t>(ordinal)];
}

}  // namespace

Vec latent_inject(const ModelParams& params, const SequenceEncoding& enc, const ForwardState& state, int slot) {
  int position = 0;
  for (int m = 1; m <= enc.length(); ++m) {
    if (enc.at(m).kind == TokenKind::LatentSlot && enc.at(m).slot == slot) {
      position = m;
    }
  }
  if (position == 0) {
    throw InputError("latent_inject: no slot " + std::to_string(slot));
  }
  switch (params.latent.mode) {
    case LatentMode::None:
      throw ConfigError("latent slot present but no latent token configured");
    case LatentMode::StaticParam:
      return static_slot(params, slot);
    case LatentMode::DynamicHidden:
      if (position - 1 < 2) {
        throw InputError("latent_inject: <bot> is the first position, nothing to extract");
      }
      if (static_cast<int>(state.h.size()) < position - 1) {
        throw InputError("latent_inject: state does not reach the slot");
      }
      return state.h[static_cast<std::size_t>(position - 2)];
  }
  return {};
}

ForwardState forward_sequence(const ModelParams& params, const SequenceEncoding& enc, Feed feed) {
  check_fits(params, enc);
  const int T = enc.length();
  const auto dm = static_cast<std::size_t>(params.d_model());
  ForwardState st;
  st.z_hat.reserve(static_cast<std::size_t>(T));
  std::vector<bool> supervised(static_cast<std::size_t>(T) + 1, false);
  for (const int pos : enc.supervised) {
    supervised[static_cast<std::size_t>(pos)] = true;
  }

  for (int m = 1; m <= T; ++m) {
    const Token& tok = enc.at(m);
    Vec z = m >= 2 ? attention_forward(params.logits, st.keys, m) : Vec(dm, 0.0);
    Vec h;
    Vec key;
    if (tok.kind == TokenKind::LatentSlot) {
      if (params.latent.mode == LatentMode::None) {
        throw ConfigError("latent slot present but no latent token configured");
      }
      if (static_cast<int>(st.injected.size()) <= tok.slot) {
        st.injected.resize(static_cast<std::size_t>(tok.slot) + 1);
      }
      Vec c = latent_inject(params, enc, st, tok.slot);
      if (params.readout != LatentReadout::Injected) {
        Vec pre = z;
        axpy(1.0, c, pre);
        h = ffn(pre, params.poly);
        key = h;
        if (params.readout == LatentReadout::Token) {
          key = embed(1, params.basis);
          const double t = std::tanh(dot(params.basis.u, h));
          for (auto& x : key) {
            x *= t;
          }
        }
      } else {
        h = ffn(z, params.poly);
        key = c;
      }
      st.injected[static_cast<std::size_t>(tok.slot)] = std::move(c);
    } else {
      h = ffn(z, params.poly);
      switch (tok.kind) {
        case TokenKind::InputBit:
          key = embed(tok.value, params.basis);
          break;
        case TokenKind::ExplicitStep:
          key = feed == Feed::TeacherForced ? embed(tok.value, params.basis) : h;
          break;
        default:
          key.assign(dm, 0.0);
          break;
      }
    }
    const auto yh = output_probs(h, params.basis);
    if (supervised[static_cast<std::size_t>(m)]) {
      bool clamped = false;
      st.loss += ce_loss(yh, tok.value, kProbFloor, &clamped);
      st.clamped = st.clamped || clamped;
      st.p_t.push_back(tok.value == 1 ? yh.first : yh.second);
    }
    st.z_hat.push_back(std::move(z));
    st.h.push_back(std::move(h));
    st.keys.push_back(std::move(key));
    st.y_hat.push_back(yh);
  }
  return st;
}

ModelGrad ModelGrad::zeros_like(const ModelParams& params) {
  ModelGrad g;
  g.w.assign(params.logits.w.size(), 0.0);
  g.u.assign(params.basis.u.size(), 0.0);
  for (const auto& s : params.latent.slots) {
    g.latent.emplace_back(s.size(), 0.0);
  }
  return g;
}

void ModelGrad::add(const ModelGrad& other, double scale) {
  axpy(scale, other.w, w);
  axpy(scale, other.u, u);
  for (std::size_t i = 0; i < latent.size() && i < other.latent.size(); ++i) {
    axpy(scale, other.latent[i], latent[i]);
  }
}

SequenceEngine::SequenceEngine(const ModelParams& params) : p_(params) {
  const int L = params.logits.max_positions;
  sigma_.resize(static_cast<std::size_t>(std::max(L, 1)) + 1);
  for (int m = 2; m <= L; ++m) {
    sigma_[static_cast<std::size_t>(m)] = softmax(params.logits.row(m));
  }
  g_sigma_.assign(params.logits.w.size(), 0.0);
  const auto& u = params.basis.u;
  const auto& v = params.basis.v;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double v2 = v[i] * v[i];
    U0_ += u[i];
    M2_ += u[i] * v2;
    M4_ += u[i] * v2 * v2;
  }
}

SampleResult SequenceEngine::run(const SequenceEncoding& enc, double scale, ModelGrad* grad,
                                 const LatentObjective* objective, SlotView view) {
  check_fits(p_, enc);
  const int T = enc.length();
  const auto n1 = static_cast<std::size_t>(T) + 1;
  const auto dm = static_cast<std::size_t>(p_.d_model());
  const auto& v = p_.basis.v;
  const auto& u = p_.basis.u;
  const auto& poly = p_.poly;
  const bool dynamic = p_.latent.mode == LatentMode::DynamicHidden;
  const bool processed = p_.readout == LatentReadout::Processed;
  const bool token = p_.readout == LatentReadout::Token;

  std::vector<bool> sup(n1, false);
  for (const int pos : enc.supervised) {
    sup[static_cast<std::size_t>(pos)] = true;
  }
  const auto ordinal = slot_ordinals(enc);

  std::vector<double> alpha(n1, 0.0);
  std::vector<double> A(n1, 0.0);
  std::vector<double> score(n1, 0.0);
  std::vector<double> pt(n1, 0.0);
  std::vector<char> need(n1, 0), vec(n1, 0), clamp(n1, 0);
  std::vector<Vec> pre(n1), h(n1), key(n1), inj(n1);
  std::vector<int> key_positions;   // positions whose key is a full vector
  std::vector<int> slot_positions;  // latent slots in ordinal order
  std::vector<int> token_positions;  // slots whose key is alpha * v

  SampleResult res;
  for (int m = 1; m <= T; ++m) {
    const auto mi = static_cast<std::size_t>(m);
    const Token& tok = enc.at(m);
    const bool slot = tok.kind == TokenKind::LatentSlot;
    const bool feeds_slot = dynamic && m < T && enc.at(m + 1).kind == TokenKind::LatentSlot;
    need[mi] = m >= 2 && (sup[mi] || slot || feeds_slot);
    if (need[mi]) {
      const auto& sg = sigma_[mi];
      double a = 0.0;
      for (int j = 1; j < m; ++j) {
        a += sg[static_cast<std::size_t>(j - 1)] * alpha[static_cast<std::size_t>(j)];
      }
      A[mi] = a;
      if (slot || feeds_slot || !key_positions.empty()) {
        vec[mi] = 1;
        Vec z(dm);
        for (std::size_t i = 0; i < dm; ++i) {
          z[i] = a * v[i];
        }
        for (const int j : key_positions) {
          axpy(sg[static_cast<std::size_t>(j - 1)], key[static_cast<std::size_t>(j)], z);
        }
        pre[mi] = std::move(z);
      }
    }
    if (slot) {
      if (p_.latent.mode == LatentMode::None) {
        throw ConfigError("latent slot present but no latent token configured");
      }
      if (p_.latent.mode == LatentMode::StaticParam) {
        inj[mi] = static_slot(p_, tok.slot);
      } else {
        if (m - 1 < 2 || h[mi - 1].empty()) {
          throw InputError("latent_inject: <bot> is the first position, nothing to extract");
        }
        inj[mi] = h[mi - 1];
      }
      if (m < 2) {
        pre[mi].assign(dm, 0.0);
        vec[mi] = 1;
      }
      slot_positions.push_back(m);
      if (token) {
        axpy(1.0, inj[mi], pre[mi]);
        h[mi] = ffn(pre[mi], poly);
        alpha[mi] = std::tanh(dot(u, h[mi]));
        token_positions.push_back(m);
        if (view == SlotView::Hidden) {
          res.slot_states.push_back(h[mi]);
        } else {
          Vec k(v);
          for (auto& x : k) {
            x *= alpha[mi];
          }
          res.slot_states.push_back(std::move(k));
        }
      } else {
        if (processed) {
          axpy(1.0, inj[mi], pre[mi]);
          h[mi] = ffn(pre[mi], poly);
          key[mi] = h[mi];
        } else {
          h[mi] = ffn(pre[mi], poly);
          key[mi] = inj[mi];
        }
        key_positions.push_back(m);
        res.slot_states.push_back(view == SlotView::Hidden ? h[mi] : key[mi]);
      }
    } else {
      if (tok.kind == TokenKind::InputBit || tok.kind == TokenKind::ExplicitStep) {
        alpha[mi] = tok.value;
      }
      if (vec[mi]) {
        h[mi] = ffn(pre[mi], poly);
      }
    }
    if (sup[mi]) {
      double s = 0.0;
      if (vec[mi]) {
        s = dot(u, h[mi]);
      } else {
        const double a2 = A[mi] * A[mi];
        s = poly.a0 * U0_ + a2 * (poly.a2 * M2_ + poly.a4 * a2 * M4_);
      }
      score[mi] = s;
      const double p = class_prob(s, tok.value);
      pt[mi] = p;
      if (p < kProbFloor) {
        clamp[mi] = 1;
        res.clamped = true;
        res.task_loss += -std::log(kProbFloor);
      } else {
        res.task_loss += -std::log(p);
      }
      res.supervised += 1;
      res.correct += static_cast<double>(tok.value) * s > 0.0 ? 1 : 0;
    }
  }

  std::vector<Vec> d_states;
  if (objective != nullptr) {
    if (grad != nullptr) {
      for (const auto& s : res.slot_states) {
        d_states.emplace_back(s.size(), 0.0);
      }
    }
    res.latent_loss = (*objective)(res.slot_states, grad != nullptr ? &d_states : nullptr);
  }
  if (grad == nullptr) {
    return res;
  }

  // Reverse pass. dh_direct collects gradients from the loss, from later
  // positions attending to this key, and from the latent objective;
  // dh_inject collects gradients arriving through a dynamic injection.
  std::vector<Vec> dh_direct(n1), dh_inject(n1), dkey_inj(n1);
  std::vector<double> dalpha(n1, 0.0);
  auto ensure = [dm](Vec& x) {
    if (x.empty()) {
      x.assign(dm, 0.0);
    }
  };
  for (std::size_t i = 0; i < d_states.size(); ++i) {
    const int m = slot_positions[i];
    const auto mi = static_cast<std::size_t>(m);
    if (token && view == SlotView::Key) {
      dalpha[mi] += scale * dot(d_states[i], v);
      continue;
    }
    // Injected slots only expose h under the hidden view; c otherwise.
    Vec& target = processed || token || view == SlotView::Hidden ? dh_direct[mi] : dkey_inj[mi];
    ensure(target);
    axpy(scale, d_states[i], target);
  }

  for (int m = T; m >= 2; --m) {
    const auto mi = static_cast<std::size_t>(m);
    if (!need[mi]) {
      continue;
    }
    const Token& tok = enc.at(m);
    const auto& sg = sigma_[mi];
    const std::size_t off = AttentionLogits::row_offset(m);
    double g = 0.0;
    if (sup[mi] && !clamp[mi]) {
      g = scale * -2.0 * static_cast<double>(tok.value) * (1.0 - pt[mi]);
    }
    if (!vec[mi]) {
      if (g == 0.0) {
        continue;
      }
      const double a = A[mi];
      const double a2 = a * a;
      G0_ += g;
      G2_ += g * a2;
      G4_ += g * a2 * a2;
      const double D = g * (2.0 * poly.a2 * a * M2_ + 4.0 * poly.a4 * a * a2 * M4_);
      for (int j = 1; j < m; ++j) {
        g_sigma_[off + static_cast<std::size_t>(j - 1)] += alpha[static_cast<std::size_t>(j)] * D;
      }
      for (const int j : token_positions) {
        if (j >= m) {
          break;
        }
        dalpha[static_cast<std::size_t>(j)] += sg[static_cast<std::size_t>(j - 1)] * D;
      }
      continue;
    }

    ensure(dh_direct[mi]);
    ensure(dh_inject[mi]);
    if (g != 0.0) {
      axpy(g, u, dh_direct[mi]);
      axpy(g, h[mi], grad->u);
    }
    if (dalpha[mi] != 0.0) {
      const double ds = dalpha[mi] * (1.0 - alpha[mi] * alpha[mi]);
      axpy(ds, u, dh_direct[mi]);
      axpy(ds, h[mi], grad->u);
    }
    Vec dz(dm);
    Vec dc_direct;
    const bool slot = tok.kind == TokenKind::LatentSlot;
    for (std::size_t i = 0; i < dm; ++i) {
      const double d1 = poly.deriv(pre[mi][i]);
      dz[i] = (dh_direct[mi][i] + dh_inject[mi][i]) * d1;
    }
    if (slot) {
      Vec dc;
      if (processed || token) {
        dc.resize(dm);
        for (std::size_t i = 0; i < dm; ++i) {
          dc[i] = dh_direct[mi][i] * poly.deriv(pre[mi][i]);
        }
      } else {
        ensure(dkey_inj[mi]);
        dc = dkey_inj[mi];
      }
      if (p_.latent.mode == LatentMode::StaticParam) {
        axpy(1.0, dc, grad->latent[static_cast<std::size_t>(ordinal[mi])]);
      } else {
        ensure(dh_inject[mi - 1]);
        axpy(1.0, dc, dh_inject[mi - 1]);
      }
    }
    const double dv = dot(dz, v);
    for (int j = 1; j < m; ++j) {
      const auto ji = static_cast<std::size_t>(j);
      g_sigma_[off + ji - 1] += alpha[ji] * dv;
    }
    for (const int j : token_positions) {
      if (j >= m) {
        break;
      }
      dalpha[static_cast<std::size_t>(j)] += sg[static_cast<std::size_t>(j - 1)] * dv;
    }
    for (const int j : key_positions) {
      if (j >= m) {
        break;
      }
      const auto ji = static_cast<std::size_t>(j);
      g_sigma_[off + ji - 1] += dot(dz, key[ji]);
      Vec& target = processed ? dh_direct[ji] : dkey_inj[ji];
      ensure(target);
      axpy(sg[ji - 1], dz, target);
    }
  }
  return res;
}

void SequenceEngine::finish(ModelGrad& grad) const {
  const int L = p_.logits.max_positions;
  for (int m = 2; m <= L; ++m) {
    const auto& sg = sigma_[static_cast<std::size_t>(m)];
    const std::size_t off = AttentionLogits::row_offset(m);
    double mean = 0.0;
    for (int j = 0; j < m - 1; ++j) {
      mean += sg[static_cast<std::size_t>(j)] * g_sigma_[off + static_cast<std::size_t>(j)];
    }
    for (int j = 0; j < m - 1; ++j) {
      const auto ji = static_cast<std::size_t>(j);
      grad.w[off + ji] += sg[ji] * (g_sigma_[off + ji] - mean);
    }
  }
  const auto& v = p_.basis.v;
  for (std::size_t i = 0; i < grad.u.size(); ++i) {
    const double v2 = v[i] * v[i];
    grad.u[i] += p_.poly.a0 * G0_ + p_.poly.a2 * v2 * G2_ + p_.poly.a4 * v2 * v2 * G4_;
  }
}

double batch_loss(const ModelParams& params, std::span<const SequenceEncoding> batch) {
  if (batch.empty()) {
    throw InputError("batch_loss: empty batch");
  }
  SequenceEngine engine(params);
  double total = 0.0;
  for (const auto& enc : batch) {
    total += engine.run(enc, 1.0, nullptr).task_loss;
  }
  return total / static_cast<double>(batch.size());
}

ContextBatch sample_context_batch(int m, std::span<const int> support, int n, Rng& rng) {
  if (m < 2) {
    throw InputError("context batch: m must be at least 2");
  }
  if (n < 1) {
    throw InputError("context batch: n must be positive");
  }
  const auto sorted = normalize_support(m - 1, support);
  ContextBatch b;
  b.m = m;
  for (int i = 0; i < n; ++i) {
    std::vector<int> x(static_cast<std::size_t>(m - 1));
    int y = 1;
    for (auto& bit : x) {
      bit = rademacher(rng);
    }
    for (const int j : sorted) {
      y *= x[static_cast<std::size_t>(j - 1)];
    }
    b.tokens.push_back(std::move(x));
    b.labels.push_back(y);
  }
  return b;
}

namespace {

void check_context(const ModelParams& params, const ContextBatch& batch) {
  if (batch.n() == 0) {
    throw InputError("context batch is empty");
  }
  if (batch.m < 2 || batch.m > params.logits.max_positions) {
    throw InputError("context batch: m outside the logit table");
  }
}

}  // namespace

double context_loss(const ModelParams& params, const ContextBatch& batch) {
  check_context(params, batch);
  const Vec sigma = softmax(params.logits.row(batch.m));
  const auto dm = static_cast<std::size_t>(params.d_model());
  double total = 0.0;
  for (int s = 0; s < batch.n(); ++s) {
    Vec z(dm, 0.0);
    const auto& x = batch.tokens[static_cast<std::size_t>(s)];
    for (int j = 0; j < batch.m - 1; ++j) {
      axpy(sigma[static_cast<std::size_t>(j)] * x[static_cast<std::size_t>(j)], params.basis.v, z);
    }
    const Vec h = ffn(z, params.poly);
    total += ce_loss(output_probs(h, params.basis), batch.labels[static_cast<std::size_t>(s)]);
  }
  return total / batch.n();
}

Vec analytic_grad_attention(const ModelParams& params, const ContextBatch& batch) {
  check_context(params, batch);
  const int m = batch.m;
  const Vec sigma = softmax(params.logits.row(m));
  const auto dm = static_cast<std::size_t>(params.d_model());
  const double g2 = params.poly.gamma(2);
  const double g4 = params.poly.gamma(4);
  const auto& v = params.basis.v;
  Vec grad(static_cast<std::size_t>(m - 1), 0.0);
  Vec z(dm), c(dm), cz(dm), cz3(dm);
  for (int s = 0; s < batch.n(); ++s) {
    const auto& x = batch.tokens[static_cast<std::size_t>(s)];
    const int y = batch.labels[static_cast<std::size_t>(s)];
    std::fill(z.begin(), z.end(), 0.0);
    for (int j = 0; j < m - 1; ++j) {
      axpy(sigma[static_cast<std::size_t>(j)] * x[static_cast<std::size_t>(j)], v, z);
    }
    for (std::size_t i = 0; i < dm; ++i) {
      c[i] = y * params.basis.u[i];
      cz[i] = c[i] * z[i];
      cz3[i] = cz[i] * z[i] * z[i];
    }
    const double p_t = output_probs(ffn(z, params.poly), params.basis).first;
    const double pt = y == 1 ? p_t : 1.0 - p_t;
    const double weight = -2.0 * (1.0 - pt) / batch.n();
    const double t2 = g2 * dot(cz, z);   // <c, z, z>
    const double t4 = g4 * dot(cz3, z);  // <c, z^3, z>
    for (int j = 0; j < m - 1; ++j) {
      // e_j = x_j v, so <c, z, e_j> = x_j <c, z, v>.
      const double xj = x[static_cast<std::size_t>(j)];
      const double t1 = g2 * xj * dot(cz, v);
      const double t3 = g4 * xj * dot(cz3, v);
      grad[static_cast<std::size_t>(j)] += weight * sigma[static_cast<std::size_t>(j)] * (t1 - t2 + t3 - t4);
    }
  }
  return grad;
}

FdResult fd_gradient(const std::function<double(std::span<const double>)>& f, Vec x, double epsilon) {
  if (!(epsilon > 0.0)) {
    throw InputError("fd: epsilon must be positive");
  }
  FdResult out;
  out.grad.assign(x.size(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + epsilon;
    const double fp = f(x);
    x[i] = orig - epsilon;
    const double fm = f(x);
    x[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      out.nonfinite.push_back(i);
      out.grad[i] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    out.grad[i] = (fp - fm) / (2.0 * epsilon);
  }
  return out;
}

FdResult fd_grad(const ModelParams& params, const ContextBatch& batch, double epsilon) {
  check_context(params, batch);
  ModelParams work = params;
  const auto row = params.logits.row(batch.m);
  const Vec x(row.begin(), row.end());
  return fd_gradient(
      [&](std::span<const double> r) {
        std::copy(r.begin(), r.end(), work.logits.row(batch.m).begin());
        return context_loss(work, batch);
      },
      x, epsilon);
}

double relative_error(std::span<const double> analytic, std::span<const double> reference, double floor) {
  if (analytic.size() != reference.size()) {
    throw InputError("relative_error: length mismatch");
  }
  double diff = 0.0;
  double scale = floor;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff = std::max(diff, std::abs(analytic[i] - reference[i]));
    scale = std::max(scale, std::abs(reference[i]));
  }
  return diff / scale;
}

Vec flatten(const ModelParams& params, unsigned groups) {
  Vec out;
  if (groups & kLogits) {
    out.insert(out.end(), params.logits.w.begin(), params.logits.w.end());
  }
  if (groups & kOutputBase) {
    out.insert(out.end(), params.basis.u.begin(), params.basis.u.end());
  }
  if (groups & kLatent) {
    for (const auto& s : params.latent.slots) {
      out.insert(out.end(), s.begin(), s.end());
    }
  }
  return out;
}

void unflatten(ModelParams& params, unsigned groups, std::span<const double> flat) {
  std::size_t k = 0;
  auto take = [&](Vec& dst) {
    if (k + dst.size() > flat.size()) {
      throw InputError("unflatten: vector too short");
    }
    std::copy(flat.begin() + static_cast<std::ptrdiff_t>(k),
              flat.begin() + static_cast<std::ptrdiff_t>(k + dst.size()), dst.begin());
    k += dst.size();
  };
  if (groups & kLogits) {
    take(params.logits.w);
  }
  if (groups & kOutputBase) {
    take(params.basis.u);
  }
  if (groups & kLatent) {
    for (auto& s : params.latent.slots) {
      take(s);
    }
  }
  if (k != flat.size()) {
    throw InputError("unflatten: vector too long");
  }
}

Vec flatten(const ModelGrad& grad, unsigned groups) {
  Vec out;
  if (groups & kLogits) {
    out.insert(out.end(), grad.w.begin(), grad.w.end());
  }
  if (groups & kOutputBase) {
    out.insert(out.end(), grad.u.begin(), grad.u.end());
  }
  if (groups & kLatent) {
    for (const auto& s : grad.latent) {
      out.insert(out.end(), s.begin(), s.end());
    }
  }
  return out;
}

std::string params_to_json(const ModelParams& params) {
  nlohmann::ordered_json j;
  j["d_model"] = params.d_model();
  j["v"] = params.basis.v;
  j["u"] = params.basis.u;
  j["a0"] = params.poly.a0;
  j["a2"] = params.poly.a2;
  j["a4"] = params.poly.a4;
  j["max_positions"] = params.logits.max_positions;
  j["w"] = params.logits.w;
  j["readout"] = to_string(params.readout);
  j["latent"] = {{"mode", to_string(params.latent.mode)}, {"value", params.latent.slots}};
  return j.dump();
}

ModelParams params_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("checkpoint: ") + e.what());
  }
  try {
    ModelParams p;
    p.basis.v = j.at("v").get<Vec>();
    p.basis.u = j.at("u").get<Vec>();
    p.poly = {j.at("a0").get<double>(), j.at("a2").get<double>(), j.at("a4").get<double>()};
    p.logits = AttentionLogits(j.at("max_positions").get<int>());
    p.logits.w = j.at("w").get<Vec>();
    p.readout = latent_readout_from_string(j.value("readout", std::string("processed")));
    p.latent.mode = latent_mode_from_string(j.at("latent").at("mode").get<std::string>());
    p.latent.slots = j.at("latent").at("value").get<std::vector<Vec>>();
    if (static_cast<int>(p.basis.v.size()) != j.at("d_model").get<int>() || p.basis.u.size() != p.basis.v.size()) {
      throw InputError("checkpoint: basis length does not match d_model");
    }
    if (p.logits.w.size() != AttentionLogits(p.logits.max_positions).w.size()) {
      throw InputError("checkpoint: logit table size does not match max_positions");
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("checkpoint: ") + e.what());
  }
}

}  // namespace cotlab
