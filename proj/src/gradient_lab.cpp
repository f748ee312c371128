#include "cotlab/gradient_lab.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "cotlab/errors.hpp"

namespace cotlab {

double contraction(std::span<const Vec> vectors) {
  if (vectors.empty()) {
    throw InputError("contraction: no vectors");
  }
  const std::size_t len = vectors[0].size();
  for (const auto& z : vectors) {
    if (z.size() != len) {
      throw InputError("contraction: length mismatch");
    }
  }
  long double total = 0.0L;
  for (std::size_t i = 0; i < len; ++i) {
    long double prod = 1.0L;
    for (const auto& z : vectors) {
      prod *= z[i];
    }
    total += prod;
  }
  return static_cast<double>(total);
}

const char* to_string(Membership m) { return m == Membership::Relevant ? "relevant" : "irrelevant"; }

Membership classify_tuple(std::span<const int> J, std::span<const int> support) {
  std::map<int, int> count;
  for (const int j : J) {
    if (j < 1) {
      throw InputError("classify_tuple: index " + std::to_string(j) + " is not positive");
    }
    count[j] += 1;
  }
  for (const int s : support) {
    count[s] += 1;  // y contributes each support index once
  }
  for (const auto& [index, c] : count) {
    if (c % 2 != 0) {
      return Membership::Irrelevant;
    }
  }
  return Membership::Relevant;
}

Membership classify_tuple_bruteforce(std::span<const int> J, std::span<const int> support, int d) {
  if (d < 1 || d > 20) {
    throw InputError("classify_tuple_bruteforce: d must lie in [1, 20]");
  }
  for (const int j : J) {
    if (j < 1 || j > d) {
      throw InputError("classify_tuple_bruteforce: index outside [1, d]");
    }
  }
  for (std::uint32_t bits = 0; bits < (1u << d); ++bits) {
    auto x = [bits](int i) { return ((bits >> (i - 1)) & 1u) ? -1 : 1; };
    int value = 1;
    for (const int s : support) {
      value *= x(s);
    }
    for (const int j : J) {
      value *= x(j);
    }
    if (value != 1) {
      return Membership::Irrelevant;
    }
  }
  return Membership::Relevant;
}

Vec parity_invariant_vector(std::span<const double> u, std::span<const double> v, int r) {
  if (u.size() != v.size()) {
    throw InputError("parity_invariant_vector: length mismatch");
  }
  if (r < 1) {
    throw InputError("parity_invariant_vector: r must be positive");
  }
  Vec out(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    double prod = u[i];
    for (int k = 0; k < r; ++k) {
      prod *= v[i];
    }
    out[i] = prod;
  }
  return out;
}

bool check_parity_invariance(std::span<const double> u, std::span<const double> v, int r) {
  const Vec target = parity_invariant_vector(u, v, r);
  for (std::uint32_t pattern = 0; pattern < (1u << r); ++pattern) {
    int y = 1;
    std::vector<int> x(static_cast<std::size_t>(r));
    for (int k = 0; k < r; ++k) {
      x[static_cast<std::size_t>(k)] = ((pattern >> k) & 1u) ? -1 : 1;
      y *= x[static_cast<std::size_t>(k)];
    }
    for (std::size_t i = 0; i < u.size(); ++i) {
      double prod = y * u[i];
      for (int k = 0; k < r; ++k) {
        prod *= x[static_cast<std::size_t>(k)] * v[i];
      }
      if (prod != target[i]) {
        return false;
      }
    }
  }
  return true;
}

std::vector<double> taylor_coeffs(const FfnPoly& poly, int max_r) {
  std::vector<double> out;
  for (int r = 1; r <= max_r; ++r) {
    out.push_back(poly.gamma(r));
  }
  return out;
}

double hoeffding_kappa(double n, double set_size, double p, double C) {
  if (n < 1.0) {
    throw InputError("hoeffding_kappa: n must be at least 1");
  }
  if (!(p > 0.0 && p < 1.0)) {
    throw InputError("hoeffding_kappa: p must lie in (0, 1)");
  }
  if (set_size <= 0.0) {
    return 0.0;
  }
  return C * std::sqrt((2.0 / n) * std::log(2.0 * set_size / p));
}

PackedSampler::PackedSampler(int keys_, std::span<const int> support) : keys(keys_) {
  if (keys < 1 || keys > 64) {
    throw InputError("packed sampler: keys must lie in [1, 64]");
  }
  key_mask = keys == 64 ? ~std::uint64_t{0} : ((std::uint64_t{1} << keys) - 1);
  for (const int s : normalize_support(keys, support)) {
    support_mask |= std::uint64_t{1} << (s - 1);
  }
}

namespace {

std::uint64_t index_bit(int j) { return std::uint64_t{1} << (j - 1); }

// Parity masks of all ordered tuples of length len over [1, keys], visited
// with a callback; the mask of a tuple is the XOR of its index bits.
template <typename F>
void for_each_tuple_mask(int keys, int len, std::uint64_t start, F&& f) {
  if (len == 0) {
    f(start);
    return;
  }
  for (int j = 1; j <= keys; ++j) {
    for_each_tuple_mask(keys, len - 1, start ^ index_bit(j), f);
  }
}

double power(double x, int e) {
  double out = 1.0;
  for (int i = 0; i < e; ++i) {
    out *= x;
  }
  return out;
}

long double powerl(long double x, int e) {
  long double out = 1.0L;
  for (int i = 0; i < e; ++i) {
    out *= x;
  }
  return out;
}

double c_signal(const EmbeddingBasis& basis, int r) {
  std::vector<Vec> vs{basis.u};
  for (int k = 0; k < r; ++k) {
    vs.push_back(basis.v);
  }
  return contraction(vs);
}

std::uint64_t support_mask_of(std::span<const int> support) {
  std::uint64_t mask = 0;
  for (const int s : support) {
    mask |= index_bit(s);
  }
  return mask;
}

}  // namespace

std::pair<long, long> count_completions(int keys, int r, int j, std::span<const int> support) {
  if (keys < 1 || keys > 64) {
    throw InputError("count_completions: keys must lie in [1, 64]");
  }
  if (r < 1 || r > 6) {
    throw InputError("count_completions: r must lie in [1, 6]");
  }
  if (j < 1 || j > keys) {
    throw InputError("count_completions: j outside the keys");
  }
  const std::uint64_t target = support_mask_of(normalize_support(keys, support));
  long relevant = 0;
  long total = 0;
  for_each_tuple_mask(keys, r - 1, index_bit(j), [&](std::uint64_t mask) {
    ++total;
    relevant += mask == target ? 1 : 0;
  });
  return {relevant, total - relevant};
}

SignalEntry estimate_signal(const ContextBatch& batch, int r, int j, std::span<const int> support,
                            const EmbeddingBasis& basis, double p) {
  if (batch.n() == 0) {
    throw InputError("estimate_signal: empty batch");
  }
  const int keys = batch.m - 1;
  SignalEntry e;
  e.m = batch.m;
  e.r = r;
  e.j = j;
  e.n = batch.n();
  const auto [rel, irr] = count_completions(keys, r, j, support);
  e.relevant_completions = rel;
  e.irrelevant_completions = irr;
  // j is relevant when at least one completion recovers the label.
  e.membership = rel > 0 ? Membership::Relevant : Membership::Irrelevant;
  e.c_signal = c_signal(basis, r);

  // Sum over completions of y x_j prod x = y x_j S^{r-1} with S the key sum.
  long double acc = 0.0L;
  for (int s = 0; s < batch.n(); ++s) {
    const auto& x = batch.tokens[static_cast<std::size_t>(s)];
    long S = 0;
    for (int i = 0; i < keys; ++i) {
      S += x[static_cast<std::size_t>(i)];
    }
    acc += static_cast<long double>(batch.labels[static_cast<std::size_t>(s)] * x[static_cast<std::size_t>(j - 1)]) *
           powerl(static_cast<long double>(S), r - 1);
  }
  e.estimate = static_cast<double>(acc / batch.n()) * e.c_signal;
  e.expected = e.c_signal * static_cast<double>(rel);
  e.kappa = hoeffding_kappa(static_cast<double>(e.n), static_cast<double>(irr), p, std::abs(e.c_signal));
  e.bound = static_cast<double>(irr) * e.kappa;
  e.within_bound = std::abs(e.estimate - e.expected) <= e.bound;
  return e;
}

ConcentrationReport empirical_concentration(const ConcentrationConfig& cfg, const EmbeddingBasis& basis) {
  if (cfg.trials < 1 || cfg.n < 1) {
    throw InputError("concentration: trials and n must be positive");
  }
  const int keys = cfg.m - 1;
  const auto support = default_support(keys, std::min(cfg.r, keys));
  PackedSampler sampler(keys, support);

  // Distinct parity masks of irrelevant ordered tuples, with multiplicity.
  std::map<std::uint64_t, long> masks;
  for_each_tuple_mask(keys, cfg.r, 0, [&](std::uint64_t mask) {
    if (mask != sampler.support_mask) {
      masks[mask] += 1;
    }
  });
  ConcentrationReport rep;
  rep.trials = cfg.trials;
  for (const auto& [mask, count] : masks) {
    rep.irrelevant_tuples += count;
  }
  rep.c_signal = c_signal(basis, cfg.r);
  rep.kappa = hoeffding_kappa(static_cast<double>(cfg.n), static_cast<double>(rep.irrelevant_tuples), cfg.p,
                              std::abs(rep.c_signal));

  std::vector<std::uint64_t> mask_list;
  for (const auto& [mask, count] : masks) {
    mask_list.push_back(mask);
  }
  std::vector<long> sums(mask_list.size());
  double max_total = 0.0;
  for (int t = 0; t < cfg.trials; ++t) {
    Rng rng{derive_seed(cfg.seed, "concentration", static_cast<std::uint64_t>(t))};
    std::fill(sums.begin(), sums.end(), 0);
    for (long i = 0; i < cfg.n; ++i) {
      const std::uint64_t bits = sampler.draw(rng);
      // y * prod x_J is -1 exactly when bits overlap (support xor J) oddly.
      for (std::size_t k = 0; k < mask_list.size(); ++k) {
        sums[k] += (std::popcount(bits & (mask_list[k] ^ sampler.support_mask)) & 1) ? -1 : 1;
      }
    }
    double mx = 0.0;
    for (const long s : sums) {
      mx = std::max(mx, std::abs(static_cast<double>(s)) / static_cast<double>(cfg.n) * std::abs(rep.c_signal));
    }
    max_total += mx;
    rep.violations += mx > rep.kappa ? 1 : 0;
  }
  rep.violation_rate = static_cast<double>(rep.violations) / cfg.trials;
  rep.mean_max = max_total / cfg.trials;
  return rep;
}

double reference_sample_size(int m, int r, double p) {
  return power(static_cast<double>(m), 2 * (r - 1)) * std::log(static_cast<double>(m) / p);
}

std::pair<double, double> loglog_fit(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw InputError("loglog_fit: need at least two points of equal length");
  }
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) {
      throw InputError("loglog_fit: values must be positive");
    }
    const double lx = std::log(x[i]);
    const double ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  const double intercept = (sy - slope * sx) / n;
  return {slope, intercept};
}

ScalingFit scaling_experiment(const ScalingConfig& cfg) {
  if (cfg.m_grid.size() < 4) {
    throw InputError("scaling: need at least 4 grid points");
  }
  if (cfg.seeds < 1) {
    throw InputError("scaling: seeds must be positive");
  }
  const int r = cfg.r;
  ScalingFit fit;
  fit.r = r;

  struct GridInfo {
    std::vector<int> support;
    long rel = 0;
    long irr = 0;
  };
  std::vector<GridInfo> info;
  double c = cfg.n_constant;
  double c_needed = 0.0;
  for (const int m : cfg.m_grid) {
    GridInfo g;
    g.support = default_support(m, r);
    std::tie(g.rel, g.irr) = count_completions(m, r, g.support.front(), g.support);
    // n > 8 |I|^2 ln(2|I|/p) / count^2 keeps the summed floor below half the signal.
    const double need = 8.0 * static_cast<double>(g.irr) * static_cast<double>(g.irr) *
                        std::log(2.0 * static_cast<double>(g.irr) / cfg.p) /
                        (static_cast<double>(g.rel) * static_cast<double>(g.rel));
    c_needed = std::max(c_needed, need / reference_sample_size(m, r, cfg.p));
    info.push_back(std::move(g));
  }
  if (c <= 0.0) {
    c = 1.1 * c_needed;
  }
  fit.n_constant = c;

  const double gamma = cfg.poly.gamma(r);
  std::vector<std::vector<double>> mags(static_cast<std::size_t>(cfg.seeds));
  std::vector<double> mag_sum(cfg.m_grid.size(), 0.0), bias_sum(cfg.m_grid.size(), 0.0),
      pred_sum(cfg.m_grid.size(), 0.0);
  for (int s = 0; s < cfg.seeds; ++s) {
    Rng brng{derive_seed(cfg.seed, "scaling-basis", static_cast<std::uint64_t>(s))};
    EmbeddingBasis basis;
    basis.v = uniform_vector(brng, static_cast<std::size_t>(cfg.d_model), -1.0, 1.0);
    basis.u = uniform_vector(brng, static_cast<std::size_t>(cfg.d_model), -1.0, 1.0);
    const double scale = gamma * c_signal(basis, r);
    for (std::size_t g = 0; g < cfg.m_grid.size(); ++g) {
      const int m = cfg.m_grid[g];
      const auto& gi = info[g];
      const long n = static_cast<long>(std::ceil(c * reference_sample_size(m, r, cfg.p)));
      PackedSampler sampler(m, gi.support);
      const int j = gi.support.front();
      Rng rng{derive_seed(cfg.seed, "scaling-samples",
                          static_cast<std::uint64_t>(s) * 1000003u + static_cast<std::uint64_t>(m))};
      long double acc = 0.0L;
      long double acc_bias = 0.0L;
      for (long i = 0; i < n; ++i) {
        const std::uint64_t bits = sampler.draw(rng);
        const long double S = sampler.sum(bits);
        const long double yS = sampler.label(bits) * powerl(S, r - 1);
        acc += PackedSampler::bit(bits, j) * yS;
        acc_bias += yS * S;
      }
      const double md = static_cast<double>(m);
      // gamma_r * sigma_j * <c_t, z^{r-1}, e_j> with z = (S/m) v, sigma_j = 1/m.
      const double signal = scale * static_cast<double>(acc / n) / power(md, r);
      const double bias = scale * static_cast<double>(acc_bias / n) / power(md, r + 1);
      mags[static_cast<std::size_t>(s)].push_back(std::abs(signal));
      mag_sum[g] += std::abs(signal);
      bias_sum[g] += std::abs(bias);
      pred_sum[g] += std::abs(scale) * static_cast<double>(gi.rel) / power(md, r);
      if (s == 0) {
        ScalingPoint pt;
        pt.m = m;
        pt.n = n;
        const double k1 = hoeffding_kappa(static_cast<double>(n), static_cast<double>(gi.irr), cfg.p, 1.0);
        pt.undersampled = static_cast<double>(gi.irr) * k1 >= 0.5 * static_cast<double>(gi.rel);
        fit.points.push_back(pt);
      }
    }
  }
  for (std::size_t g = 0; g < cfg.m_grid.size(); ++g) {
    auto& pt = fit.points[g];
    pt.magnitude = mag_sum[g] / cfg.seeds;
    pt.bias = bias_sum[g] / cfg.seeds;
    pt.predicted = pred_sum[g] / cfg.seeds;
    const double k1 = hoeffding_kappa(static_cast<double>(pt.n), static_cast<double>(info[g].irr), cfg.p, 1.0);
    pt.kappa = pt.predicted / static_cast<double>(info[g].rel) * static_cast<double>(info[g].irr) * k1;
  }

  std::vector<double> xs;
  std::vector<std::size_t> used;
  for (std::size_t g = 0; g < cfg.m_grid.size(); ++g) {
    if (!fit.points[g].undersampled) {
      xs.push_back(cfg.m_grid[g]);
      used.push_back(g);
    }
  }
  if (xs.size() < 2) {
    throw InputError("scaling: fewer than two adequately sampled grid points");
  }
  for (const auto& seed_mags : mags) {
    std::vector<double> ys;
    for (const auto g : used) {
      ys.push_back(std::max(seed_mags[g], 1e-300));
    }
    fit.seed_slopes.push_back(loglog_fit(xs, ys).first);
  }
  const double mean =
      std::accumulate(fit.seed_slopes.begin(), fit.seed_slopes.end(), 0.0) / static_cast<double>(fit.seed_slopes.size());
  double var = 0.0;
  for (const double s : fit.seed_slopes) {
    var += (s - mean) * (s - mean);
  }
  const double sd = fit.seed_slopes.size() > 1 ? std::sqrt(var / static_cast<double>(fit.seed_slopes.size() - 1)) : 0.0;
  const double half = 1.96 * sd / std::sqrt(static_cast<double>(fit.seed_slopes.size()));
  fit.slope = mean;
  fit.slope_lo = mean - half;
  fit.slope_hi = mean + half;
  return fit;
}

ComplexityReport sample_complexity_probe(const ComplexityConfig& cfg) {
  if (!(cfg.p > 0.0 && cfg.p < 1.0)) {
    throw InputError("sample complexity: p must lie in (0, 1)");
  }
  ComplexityReport rep;
  rep.r = cfg.r;
  rep.m = cfg.m;
  rep.p = cfg.p;
  rep.reference = reference_sample_size(cfg.m, cfg.r, cfg.p);
  rep.required_seeds = static_cast<int>(std::ceil((1.0 - cfg.p) * cfg.seeds - 1e-9));
  const auto support = default_support(cfg.m, cfg.r);
  if (static_cast<int>(support.size()) == cfg.m) {
    rep.vacuous = true;
    rep.n_star = 0;
    return rep;
  }
  PackedSampler sampler(cfg.m, support);
  std::vector<bool> relevant(static_cast<std::size_t>(cfg.m) + 1, false);
  for (const int s : support) {
    relevant[static_cast<std::size_t>(s)] = true;
  }

  const auto seeds = static_cast<std::size_t>(cfg.seeds);
  std::vector<Rng> rngs;
  for (std::size_t s = 0; s < seeds; ++s) {
    rngs.emplace_back(derive_seed(cfg.seed, "complexity", s * 1000003u + static_cast<std::uint64_t>(cfg.m)));
  }
  std::vector<std::vector<long double>> sums(seeds, std::vector<long double>(static_cast<std::size_t>(cfg.m) + 1, 0.0L));
  long drawn = 0;
  double next = 4.0;
  while (true) {
    const long target = static_cast<long>(std::ceil(next));
    if (target > cfg.max_n) {
      rep.n_star = -1;
      break;
    }
    for (std::size_t s = 0; s < seeds; ++s) {
      for (long i = drawn; i < target; ++i) {
        const std::uint64_t bits = sampler.draw(rngs[s]);
        const long double w = sampler.label(bits) * powerl(sampler.sum(bits), cfg.r - 1);
        for (int j = 1; j <= cfg.m; ++j) {
          sums[s][static_cast<std::size_t>(j)] += PackedSampler::bit(bits, j) * w;
        }
      }
    }
    drawn = target;
    int separated = 0;
    for (std::size_t s = 0; s < seeds; ++s) {
      long double min_rel = 1e300L, max_irr = 0.0L;
      for (int j = 1; j <= cfg.m; ++j) {
        const long double a = std::fabs(sums[s][static_cast<std::size_t>(j)]);
        if (relevant[static_cast<std::size_t>(j)]) {
          min_rel = std::min(min_rel, a);
        } else {
          max_irr = std::max(max_irr, a);
        }
      }
      separated += min_rel > max_irr ? 1 : 0;
    }
    if (separated >= rep.required_seeds) {
      rep.n_star = target;
      break;
    }
    next *= 1.189207115002721;  // 2^(1/4)
  }
  rep.ratio = rep.n_star > 0 ? static_cast<double>(rep.n_star) / rep.reference : 0.0;
  return rep;
}

StaticLatentReport static_latent_probe(const StaticLatentConfig& cfg, const EmbeddingBasis& basis,
                                       std::span<const double> c_s) {
  if (cfg.r < 2) {
    throw InputError("static latent probe: r must be at least 2");
  }
  if (cfg.n < 1 || cfg.trials < 2) {
    throw InputError("static latent probe: need n >= 1 and at least two trials");
  }
  if (c_s.size() != basis.v.size()) {
    throw InputError("static latent probe: latent length differs from d_model");
  }
  StaticLatentReport rep;
  std::vector<Vec> vs{basis.u};
  for (int k = 0; k < cfg.r - 1; ++k) {
    vs.push_back(basis.v);
  }
  vs.emplace_back(c_s.begin(), c_s.end());
  rep.c_c = contraction(vs);

  const auto support = default_support(cfg.keys, cfg.r);
  PackedSampler sampler(cfg.keys, support);
  // Probed tuple: the support without its last index, so the latent would
  // have to supply the missing factor.
  std::uint64_t probe = 0;
  for (std::size_t i = 0; i + 1 < support.size(); ++i) {
    probe ^= index_bit(support[i]);
  }
  std::map<std::uint64_t, long> masks;
  for_each_tuple_mask(cfg.keys, cfg.r - 1, 0, [&](std::uint64_t mask) { masks[mask] += 1; });
  for (const auto& [mask, count] : masks) {
    rep.tuples += count;
  }
  rep.kappa_s = hoeffding_kappa(static_cast<double>(cfg.n), static_cast<double>(rep.tuples), cfg.p, std::abs(rep.c_c));
  rep.predicted_std = std::abs(rep.c_c) / std::sqrt(static_cast<double>(cfg.n));

  std::vector<std::uint64_t> mask_list;
  for (const auto& [mask, count] : masks) {
    mask_list.push_back(mask ^ sampler.support_mask);
  }
  std::vector<long> sums(mask_list.size());
  std::vector<double> avgs;
  int covered = 0;
  for (int t = 0; t < cfg.trials; ++t) {
    Rng rng{derive_seed(cfg.seed, "static-latent", static_cast<std::uint64_t>(t))};
    std::fill(sums.begin(), sums.end(), 0);
    long probe_sum = 0;
    for (long i = 0; i < cfg.n; ++i) {
      const std::uint64_t bits = sampler.draw(rng);
      const int sign = (std::popcount(bits & (probe ^ sampler.support_mask)) & 1) ? -1 : 1;
      if (t == 0 && i == 0) {
        rep.single_sample = std::abs(sign * rep.c_c);
      }
      probe_sum += sign;
      for (std::size_t k = 0; k < mask_list.size(); ++k) {
        sums[k] += (std::popcount(bits & mask_list[k]) & 1) ? -1 : 1;
      }
    }
    avgs.push_back(static_cast<double>(probe_sum) / static_cast<double>(cfg.n) * rep.c_c);
    double mx = 0.0;
    for (const long s : sums) {
      mx = std::max(mx, std::abs(static_cast<double>(s)) / static_cast<double>(cfg.n) * std::abs(rep.c_c));
    }
    covered += mx <= rep.kappa_s ? 1 : 0;
  }
  const double mean = std::accumulate(avgs.begin(), avgs.end(), 0.0) / static_cast<double>(avgs.size());
  double var = 0.0;
  for (const double a : avgs) {
    var += (a - mean) * (a - mean);
  }
  rep.mean = mean;
  rep.std = std::sqrt(var / static_cast<double>(avgs.size() - 1));
  rep.coverage = static_cast<double>(covered) / cfg.trials;
  return rep;
}

DynamicLatentReport dynamic_latent_probe(const DynamicLatentConfig& cfg, const EmbeddingBasis& basis) {
  if (cfg.n < 2 || cfg.trials < 1) {
    throw InputError("dynamic latent probe: need n >= 2 and trials >= 1");
  }
  const auto support = normalize_support(cfg.keys, cfg.support);
  const auto R = normalize_support(cfg.keys, cfg.R);
  const int r = static_cast<int>(R.size());
  PackedSampler sampler(cfg.keys, support);
  const std::uint64_t r_mask = support_mask_of(R);
  const auto dm = basis.v.size();
  const double md = cfg.keys;

  // w = u (.) v^r; Psi depends on the sample only through y prod x_R and S.
  Vec w(dm);
  for (std::size_t i = 0; i < dm; ++i) {
    w[i] = basis.u[i] * power(basis.v[i], r);
  }
  const int span = 2 * cfg.keys + 1;
  auto h_dot = [&](int S) {
    double total = 0.0;
    for (std::size_t i = 0; i < dm; ++i) {
      total += w[i] * cfg.poly.eval(S / md * basis.v[i]);
    }
    return total;
  };
  std::vector<double> f(static_cast<std::size_t>(span));
  for (int S = -cfg.keys; S <= cfg.keys; S += 2) {
    f[static_cast<std::size_t>(S + cfg.keys)] = h_dot(S);
  }
  // Matched static latent: E[h_m] over the binomial law of S.
  DynamicLatentReport rep;
  rep.static_latent.assign(dm, 0.0);
  for (int minus = 0; minus <= cfg.keys; ++minus) {
    const int S = cfg.keys - 2 * minus;
    const double prob = std::exp(std::lgamma(md + 1) - std::lgamma(minus + 1.0) - std::lgamma(md - minus + 1) -
                                 md * std::log(2.0));
    for (std::size_t i = 0; i < dm; ++i) {
      rep.static_latent[i] += prob * cfg.poly.eval(S / md * basis.v[i]);
    }
  }
  double static_dot = 0.0;
  for (std::size_t i = 0; i < dm; ++i) {
    static_dot += w[i] * rep.static_latent[i];
  }
  const double coef[3] = {cfg.poly.a0, cfg.poly.a2, cfg.poly.a4};
  double geo[3];
  for (int l = 0; l < 3; ++l) {
    geo[l] = 0.0;
    for (std::size_t i = 0; i < dm; ++i) {
      geo[l] += w[i] * power(basis.v[i], 2 * l);
    }
  }

  long double t_sum[3] = {0, 0, 0}, t_sq[3] = {0, 0, 0};
  long total = 0;
  double dyn_var_sum = 0.0, stat_var_sum = 0.0;
  rep.trials = cfg.trials;
  for (int t = 0; t < cfg.trials; ++t) {
    Rng rng{derive_seed(cfg.seed, "dynamic-latent", static_cast<std::uint64_t>(t))};
    long double ds = 0, dq = 0, ss = 0, sq = 0;
    for (long i = 0; i < cfg.n; ++i) {
      const std::uint64_t bits = sampler.draw(rng);
      const int sign = (std::popcount(bits & (r_mask ^ sampler.support_mask)) & 1) ? -1 : 1;
      const int S = sampler.sum(bits);
      const double dyn = sign * f[static_cast<std::size_t>(S + cfg.keys)];
      const double stat = sign * static_dot;
      ds += dyn;
      dq += static_cast<long double>(dyn) * dyn;
      ss += stat;
      sq += static_cast<long double>(stat) * stat;
      for (int l = 0; l < 3; ++l) {
        const double term = sign * coef[l] * power(S / md, 2 * l) * geo[l];
        t_sum[l] += term;
        t_sq[l] += static_cast<long double>(term) * term;
      }
      ++total;
    }
    const long double nn = cfg.n;
    const double dv = static_cast<double>((dq - ds * ds / nn) / (nn - 1));
    const double sv = static_cast<double>((sq - ss * ss / nn) / (nn - 1));
    dyn_var_sum += dv;
    stat_var_sum += sv;
    rep.dynamic_wins += dv > sv ? 1 : 0;
  }
  rep.dynamic_variance = dyn_var_sum / cfg.trials;
  rep.static_variance = stat_var_sum / cfg.trials;
  for (int l = 0; l < 3; ++l) {
    TaylorTerm term;
    term.ell = 2 * l;
    term.coefficient = coef[l];
    term.mean = static_cast<double>(t_sum[l] / total);
    term.variance = static_cast<double>(t_sq[l] / total - (t_sum[l] / total) * (t_sum[l] / total));
    const bool nonzero = coef[l] != 0.0 && geo[l] != 0.0;
    if (nonzero && term.variance <= 1e-12 * std::max(term.mean * term.mean, 1e-300)) {
      rep.any_stable_constant = true;
    }
    rep.terms.push_back(term);
  }
  return rep;
}

}  // namespace cotlab
