#include "cotlab/parity_task.hpp"

#include <algorithm>
#include "json.hpp"

#include "cotlab/errors.hpp"

namespace cotlab {

std::vector<int> normalize_support(int d, std::span<const int> support) {
  if (d < 1) {
    throw InputError("parity: d must be at least 1");
  }
  if (support.empty() || static_cast<int>(support.size()) > d) {
    throw InputError("parity: support size must lie in [1, d]");
  }
  std::vector<int> sorted(support.begin(), support.end());
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (sorted[i] < 1 || sorted[i] > d) {
      throw InputError("parity: support index " + std::to_string(sorted[i]) + " outside [1, " +
                       std::to_string(d) + "]");
    }
    if (i > 0 && sorted[i] == sorted[i - 1]) {
      throw InputError("parity: duplicate support index " + std::to_string(sorted[i]));
    }
  }
  return sorted;
}

ParityInstance make_instance(std::vector<int> bits, std::span<const int> support) {
  for (const int b : bits) {
    if (b != 1 && b != -1) {
      throw InputError("parity: bits must be +1 or -1");
    }
  }
  ParityInstance inst;
  inst.support = normalize_support(static_cast<int>(bits.size()), support);
  inst.bits = std::move(bits);
  inst.label = 1;
  for (const int j : inst.support) {
    inst.label *= inst.bit(j);
  }
  return inst;
}

ParityInstance sample_instance(int d, std::span<const int> support, Rng& rng) {
  auto sorted = normalize_support(d, support);
  std::vector<int> bits(static_cast<std::size_t>(d));
  for (auto& b : bits) {
    b = rademacher(rng);
  }
  return make_instance(std::move(bits), sorted);
}

std::vector<int> default_support(int d, int k) {
  if (k < 1 || k > d) {
    throw InputError("parity: k must lie in [1, d]");
  }
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(k));
  const bool spread = 2 * k <= d;
  for (int i = 1; i <= k; ++i) {
    out.push_back(spread ? 2 * i : i);
  }
  return out;
}

int CotTrace::node_count() const {
  int n = 0;
  for (const auto& layer : layers) {
    n += static_cast<int>(layer.size());
  }
  return n;
}

int CotTrace::tau(int s) const {
  if (s < 0 || s > height) {
    throw InputError("trace: step " + std::to_string(s) + " outside [0, " + std::to_string(height) + "]");
  }
  int n = 0;
  for (int i = 0; i < s; ++i) {
    n += static_cast<int>(layers[static_cast<std::size_t>(i)].size());
  }
  return n;
}

int CotTrace::frontier_size(int s) const {
  // ceil(k / 2^s), computed by repeated halving so it matches the pairing loop.
  int width = k;
  for (int i = 0; i < s; ++i) {
    width = (width + 1) / 2;
  }
  return width;
}

std::vector<CotNode> CotTrace::nodes() const {
  std::vector<CotNode> out;
  for (const auto& layer : layers) {
    out.insert(out.end(), layer.begin(), layer.end());
  }
  return out;
}

int CotTrace::value_of(int index, const ParityInstance& instance) const {
  if (index >= 1 && index <= d) {
    return instance.bit(index);
  }
  for (const auto& layer : layers) {
    for (const auto& node : layer) {
      if (node.index == index) {
        return node.value;
      }
    }
  }
  throw InputError("trace: unknown index " + std::to_string(index));
}

CotTrace build_cot_trace(const ParityInstance& instance) {
  CotTrace trace;
  trace.d = instance.d();
  trace.k = instance.k();
  if (trace.k < 1) {
    throw InputError("trace: empty support");
  }

  struct Item {
    int index;
    int value;
  };
  std::vector<Item> frontier;
  for (const int j : instance.support) {
    frontier.push_back({j, instance.bit(j)});
  }

  int next_index = trace.d + 1;
  while (frontier.size() > 1) {
    std::vector<CotNode> layer;
    std::vector<Item> next;
    for (std::size_t i = 0; i + 1 < frontier.size(); i += 2) {
      const CotNode node{next_index++, frontier[i].index, frontier[i + 1].index,
                         frontier[i].value * frontier[i + 1].value};
      layer.push_back(node);
      next.push_back({node.index, node.value});
    }
    if (frontier.size() % 2 == 1) {
      next.push_back(frontier.back());
    }
    trace.layers.push_back(std::move(layer));
    frontier = std::move(next);
  }
  trace.height = static_cast<int>(trace.layers.size());
  trace.root_index = frontier.front().index;
  trace.root_value = frontier.front().value;
  return trace;
}

const char* to_string(TokenKind kind) {
  switch (kind) {
    case TokenKind::InputBit: return "input";
    case TokenKind::ExplicitStep: return "step";
    case TokenKind::LatentSlot: return "latent";
    case TokenKind::BotMarker: return "bot";
    case TokenKind::EotMarker: return "eot";
  }
  return "?";
}

const char* to_string(LatentLayout layout) {
  return layout == LatentLayout::Single ? "single" : "per-node";
}

LatentLayout latent_layout_from_string(const std::string& name) {
  if (name == "single") {
    return LatentLayout::Single;
  }
  if (name == "per-node") {
    return LatentLayout::PerNode;
  }
  throw InputError("unknown latent layout '" + name + "' (expected single|per-node)");
}

std::optional<int> SequenceEncoding::bot_position() const {
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i].kind == TokenKind::BotMarker) {
      return static_cast<int>(i) + 1;
    }
  }
  return std::nullopt;
}

std::vector<int> SequenceEncoding::slot_positions() const {
  std::vector<int> out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i].kind == TokenKind::LatentSlot) {
      out.push_back(static_cast<int>(i) + 1);
    }
  }
  return out;
}

int SequenceEncoding::slot_count() const { return static_cast<int>(slot_positions().size()); }

std::optional<std::pair<int, int>> SequenceEncoding::supervised_range() const {
  if (supervised.empty()) {
    return std::nullopt;
  }
  return std::make_pair(supervised.front(), supervised.back());
}

int SequenceEncoding::explicit_value_tokens() const {
  return static_cast<int>(std::count_if(tokens.begin(), tokens.end(), [](const Token& t) {
    return t.kind == TokenKind::InputBit || t.kind == TokenKind::ExplicitStep;
  }));
}

namespace {

void push_inputs(SequenceEncoding& enc, const ParityInstance& instance) {
  for (int j = 1; j <= instance.d(); ++j) {
    enc.tokens.push_back({TokenKind::InputBit, instance.bit(j), j, -1});
  }
}

void push_step(SequenceEncoding& enc, const CotNode& node) {
  enc.tokens.push_back({TokenKind::ExplicitStep, node.value, node.index, -1});
  enc.supervised.push_back(enc.length());
}

}  // namespace

SequenceEncoding encode_explicit(const CotTrace& trace, const ParityInstance& instance) {
  SequenceEncoding enc;
  enc.d = instance.d();
  push_inputs(enc, instance);
  for (const auto& layer : trace.layers) {
    for (const auto& node : layer) {
      push_step(enc, node);
    }
  }
  return enc;
}

SequenceEncoding encode_implicit(const CotTrace& trace, const ParityInstance& instance, int s,
                                 LatentLayout layout) {
  if (s < 1 || s > trace.height) {
    throw InputError("encode_implicit: concealed step " + std::to_string(s) + " outside [1, " +
                     std::to_string(trace.height) + "]");
  }
  SequenceEncoding enc;
  enc.d = instance.d();
  enc.concealed_step = s;
  enc.tau = trace.tau(s);
  push_inputs(enc, instance);

  for (int layer = 0; layer < s; ++layer) {
    for (const auto& node : trace.layers[static_cast<std::size_t>(layer)]) {
      enc.concealed.push_back(node);
      enc.concealed_targets.push_back(node.value);
    }
  }

  enc.tokens.push_back({TokenKind::BotMarker, 0, 0, -1});
  if (layout == LatentLayout::Single) {
    enc.tokens.push_back({TokenKind::LatentSlot, 0, s, 0});
  } else {
    int ordinal = 0;
    for (const auto& node : enc.concealed) {
      enc.tokens.push_back({TokenKind::LatentSlot, 0, node.index, ordinal++});
    }
  }
  enc.tokens.push_back({TokenKind::EotMarker, 0, 0, -1});

  for (int layer = s; layer < trace.height; ++layer) {
    for (const auto& node : trace.layers[static_cast<std::size_t>(layer)]) {
      push_step(enc, node);
    }
  }
  if (s == trace.height) {
    // Everything is latent; the root still has to be produced as the answer.
    push_step(enc, trace.layers.back().back());
  }
  return enc;
}

SequenceEncoding reinflate(const SequenceEncoding& implicit_encoding, const CotTrace& trace,
                           const ParityInstance& instance) {
  if (implicit_encoding.concealed_step == 0) {
    return implicit_encoding;
  }
  SequenceEncoding out;
  out.d = implicit_encoding.d;
  bool in_latent = false;
  bool skip_answer = implicit_encoding.concealed_step == trace.height;
  for (const auto& tok : implicit_encoding.tokens) {
    switch (tok.kind) {
      case TokenKind::BotMarker:
        in_latent = true;
        for (const auto& node : implicit_encoding.concealed) {
          push_step(out, node);
        }
        break;
      case TokenKind::EotMarker:
        in_latent = false;
        break;
      case TokenKind::LatentSlot:
        break;
      case TokenKind::InputBit:
        out.tokens.push_back(tok);
        break;
      case TokenKind::ExplicitStep:
        if (in_latent) {
          throw StructuralError("reinflate: explicit token inside latent region");
        }
        if (skip_answer) {
          skip_answer = false;  // the root is already part of the concealed nodes
          break;
        }
        push_step(out, CotNode{tok.source_index, 0, 0, tok.value});
        break;
    }
  }
  (void)instance;
  return out;
}

std::string instance_to_jsonl(const ParityInstance& instance, const CotTrace& trace) {
  nlohmann::ordered_json rec;
  rec["bits"] = instance.bits;
  rec["support"] = instance.support;
  rec["label"] = instance.label;
  auto layers = nlohmann::ordered_json::array();
  for (const auto& layer : trace.layers) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& node : layer) {
      arr.push_back({{"index", node.index}, {"left", node.left}, {"right", node.right}, {"value", node.value}});
    }
    layers.push_back(std::move(arr));
  }
  rec["trace"] = std::move(layers);
  return rec.dump();
}

}  // namespace cotlab
