#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qtw/ad.hpp"
#include "qtw/errors.hpp"

namespace qtw::backbones {

enum class Kind { rnn, gru, lstm, esn };

Kind kind_from_string(const std::string& s);
std::string to_string(Kind k);

struct ModelConfig {
  Kind kind = Kind::gru;
  int hidden_dim = 32;
  int layers = 1;
  int input_dim = 1;
  double esn_scaling = 0.5;
  uint64_t seed = 1;  // run seed; parameter init and the ESN reservoir derive from it

  void validate() const;
};

// Named range in the flat parameter vector. Frozen blocks (the ESN reservoir)
// are stored but never registered on the tape, so their gradients are
// identically zero and the optimizer skips them.
struct ParamBlock {
  std::string name;
  int offset = 0;
  int len = 0;
  bool trainable = true;
};

struct ParamLayout {
  std::vector<ParamBlock> blocks;
  int total = 0;

  int add(const std::string& name, int len, bool trainable = true);
  const ParamBlock& find(const std::string& name) const;  // throws ContractError
};

// Backbone parameter blocks. Per layer l with input size `in`:
//   rnn:  l{l}.Wx (h x in), l{l}.Wh (h x h), l{l}.b (h)
//   gru:  gates z, r, c each with Wx, Wh, b
//   lstm: gates i, f, g, o each with Wx, Wh, b
//   esn:  l{l}.Win (h x in), l{l}.Wres (h x h), both frozen
ParamLayout backbone_layout(const ModelConfig& cfg);

// Uniform(-1/sqrt(hidden), +1/sqrt(hidden)) for trainable blocks, drawn in
// offset order from mix64(seed, kTagParamInit); frozen reservoir blocks are
// Uniform(-1, 1) from mix64(seed, kTagReservoir).
void init_params(const ModelConfig& cfg, const ParamLayout& layout, std::vector<double>& values);

// Plain (non-tape) causal encoding: h_t for the top layer, one entry per
// record step. Throws DivergenceError (with the step index) on NaN.
std::vector<std::vector<double>> encode_sequence(const ModelConfig& cfg, const ParamLayout& layout,
                                                 const std::vector<double>& values,
                                                 const std::vector<double>& record);

// Tape leaves for every block, created once per tape and shared across steps.
struct TapeParams {
  std::vector<ad::Var> vars;  // aligned with layout.blocks; invalid for frozen blocks
};

TapeParams bind_params(ad::Tape& tape, const ModelConfig& cfg, const ParamLayout& layout,
                       const std::vector<double>& values);

// Recurrent state for the tape forward pass (h per layer, plus c for LSTM).
struct TapeState {
  std::vector<ad::Var> h;
  std::vector<ad::Var> c;
};

TapeState initial_state(ad::Tape& tape, const ModelConfig& cfg);

// One step through all layers; returns the top-layer hidden Var.
ad::Var step_tape(ad::Tape& tape, const ModelConfig& cfg, const ParamLayout& layout,
                  const TapeParams& params, TapeState& state, ad::Var x);

}  // namespace qtw::backbones
