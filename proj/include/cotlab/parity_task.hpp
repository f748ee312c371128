#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cotlab/rng.hpp"

namespace cotlab {

/// One k-parity example. Indices are 1-based, as in the x_1..x_d notation;
/// the support is kept in ascending order.
struct ParityInstance {
  std::vector<int> bits;     // d values in {+1, -1}
  std::vector<int> support;  // ascending, distinct, within [1, d]
  int label = 1;             // product of bits over the support

  int d() const { return static_cast<int>(bits.size()); }
  int k() const { return static_cast<int>(support.size()); }
  int bit(int index) const { return bits.at(static_cast<std::size_t>(index - 1)); }
};

/// Validates and sorts a support set; throws InputError on duplicates or
/// indices outside [1, d].
std::vector<int> normalize_support(int d, std::span<const int> support);

ParityInstance make_instance(std::vector<int> bits, std::span<const int> support);
ParityInstance sample_instance(int d, std::span<const int> support, Rng& rng);

/// Evenly spread default support: {2, 4, ..., 2k} when 2k <= d, otherwise {1..k}.
std::vector<int> default_support(int d, int k);

struct CotNode {
  int index = 0;  // d+1, d+2, ...
  int left = 0;   // child indices (inputs or earlier nodes)
  int right = 0;
  int value = 1;
};

/// Binary-tree decomposition of a parity into 2-parities. `layers[s-1]` holds
/// the nodes created at step s; an odd element left over at a layer is
/// carried into the next layer's pairing without creating a node.
struct CotTrace {
  int d = 0;
  int k = 0;
  int height = 0;  // ceil(log2 k)
  std::vector<std::vector<CotNode>> layers;
  int root_value = 1;
  int root_index = 0;  // equals the single support index when k == 1

  int node_count() const;
  /// Nodes of layers 1..s (tau_s). tau_0 = 0.
  int tau(int s) const;
  /// Number of values being paired at layer s (new nodes plus the carried one).
  int frontier_size(int s) const;
  std::vector<CotNode> nodes() const;
  /// Value of x_index for inputs and intermediate nodes alike.
  int value_of(int index, const ParityInstance& instance) const;
};

CotTrace build_cot_trace(const ParityInstance& instance);

enum class TokenKind { InputBit, ExplicitStep, LatentSlot, BotMarker, EotMarker };

const char* to_string(TokenKind kind);

struct Token {
  TokenKind kind = TokenKind::InputBit;
  int value = 0;         // +1/-1 for value-bearing tokens, 0 otherwise
  int source_index = 0;  // x index for InputBit/ExplicitStep; node index for a slot
  int slot = -1;         // latent slot ordinal, -1 elsewhere
};

/// How concealed nodes map onto latent slots: a single slot for the whole
/// concealed region, or one slot per concealed node.
enum class LatentLayout { Single, PerNode };

const char* to_string(LatentLayout layout);
LatentLayout latent_layout_from_string(const std::string& name);

/// Token sequence fed to the micro-transformer. Positions are 1-based.
struct SequenceEncoding {
  int d = 0;
  int concealed_step = 0;  // s; 0 for the explicit encoding
  int tau = 0;             // tau_s
  std::vector<Token> tokens;
  std::vector<int> supervised;         // positions carrying loss, ascending
  std::vector<CotNode> concealed;      // nodes hidden behind the latent region
  std::vector<int> concealed_targets;  // their values, same order

  int length() const { return static_cast<int>(tokens.size()); }
  const Token& at(int position) const { return tokens.at(static_cast<std::size_t>(position - 1)); }
  std::optional<int> bot_position() const;
  std::vector<int> slot_positions() const;
  int slot_count() const;
  /// First and last supervised positions; nullopt when nothing is supervised.
  std::optional<std::pair<int, int>> supervised_range() const;
  int explicit_value_tokens() const;
};

SequenceEncoding encode_explicit(const CotTrace& trace, const ParityInstance& instance);

/// Conceals layers 1..s behind [<bot>, latent..., <eot>]. When s equals the
/// height the root is still emitted after <eot> as the answer token.
SequenceEncoding encode_implicit(const CotTrace& trace, const ParityInstance& instance, int s,
                                 LatentLayout layout = LatentLayout::Single);

/// Replaces the latent region with the concealed explicit tokens again.
SequenceEncoding reinflate(const SequenceEncoding& implicit_encoding, const CotTrace& trace,
                           const ParityInstance& instance);

/// One JSONL record: {bits, support, label, trace: [[{index,left,right,value}...]...]}.
std::string instance_to_jsonl(const ParityInstance& instance, const CotTrace& trace);

}  // namespace cotlab
