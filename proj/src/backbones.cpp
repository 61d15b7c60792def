#include "qtw/backbones.hpp"

#include <algorithm>
#include <cmath>

#include "qtw/rng.hpp"

namespace qtw::backbones {

Kind kind_from_string(const std::string& s) {
  if (s == "rnn") return Kind::rnn;
  if (s == "gru") return Kind::gru;
  if (s == "lstm") return Kind::lstm;
  if (s == "esn") return Kind::esn;
  throw ConfigError("unknown backbone kind: " + s);
}

std::string to_string(Kind k) {
  switch (k) {
    case Kind::rnn: return "rnn";
    case Kind::gru: return "gru";
    case Kind::lstm: return "lstm";
    case Kind::esn: return "esn";
  }
  throw ContractError("bad Kind");
}

void ModelConfig::validate() const {
  if (hidden_dim < 1) throw ConfigError("hidden_dim must be >= 1");
  if (layers != 1 && layers != 2) throw ConfigError("layers must be 1 or 2");
  if (input_dim < 1) throw ConfigError("input_dim must be >= 1");
  if (kind == Kind::esn && layers != 1) throw ConfigError("esn supports a single layer");
}

int ParamLayout::add(const std::string& name, int len, bool trainable) {
  blocks.push_back({name, total, len, trainable});
  total += len;
  return blocks.back().offset;
}

const ParamBlock& ParamLayout::find(const std::string& name) const {
  for (const auto& b : blocks)
    if (b.name == name) return b;
  throw ContractError("unknown parameter block: " + name);
}

namespace {

const char* kGruGates[] = {"z", "r", "c"};
const char* kLstmGates[] = {"i", "f", "g", "o"};

void add_gate(ParamLayout& lay, const std::string& prefix, int h, int in) {
  lay.add(prefix + ".Wx", h * in);
  lay.add(prefix + ".Wh", h * h);
  lay.add(prefix + ".b", h);
}

}  // namespace

ParamLayout backbone_layout(const ModelConfig& cfg) {
  cfg.validate();
  ParamLayout lay;
  for (int l = 0; l < cfg.layers; ++l) {
    int in = l == 0 ? cfg.input_dim : cfg.hidden_dim;
    int h = cfg.hidden_dim;
    std::string p = "l" + std::to_string(l);
    switch (cfg.kind) {
      case Kind::rnn:
        add_gate(lay, p, h, in);
        break;
      case Kind::gru:
        for (const char* g : kGruGates) add_gate(lay, p + "." + g, h, in);
        break;
      case Kind::lstm:
        for (const char* g : kLstmGates) add_gate(lay, p + "." + g, h, in);
        break;
      case Kind::esn:
        lay.add(p + ".Win", h * in, /*trainable=*/false);
        lay.add(p + ".Wres", h * h, /*trainable=*/false);
        break;
    }
  }
  return lay;
}

void init_params(const ModelConfig& cfg, const ParamLayout& layout, std::vector<double>& values) {
  values.assign(layout.total, 0.0);
  double bound = 1.0 / std::sqrt(static_cast<double>(cfg.hidden_dim));
  rng::SplitMix64 train_stream{rng::mix64(cfg.seed, rng::kTagParamInit)};
  rng::SplitMix64 frozen_stream{rng::mix64(cfg.seed, rng::kTagReservoir)};
  for (const auto& b : layout.blocks) {
    if (b.trainable) {
      for (int i = 0; i < b.len; ++i) values[b.offset + i] = train_stream.next_uniform(-bound, bound);
    } else {
      for (int i = 0; i < b.len; ++i) values[b.offset + i] = frozen_stream.next_uniform(-1.0, 1.0);
    }
  }
}

namespace {

// y = W x (+ y0), W row-major h x in.
void matvec(const double* w, const double* x, int h, int in, double* y) {
  for (int i = 0; i < h; ++i) {
    double s = 0.0;
    const double* row = w + i * in;
    for (int j = 0; j < in; ++j) s += row[j] * x[j];
    y[i] += s;
  }
}

struct PlainGate {
  const double* wx;
  const double* wh;
  const double* b;
};

PlainGate gate_of(const ParamLayout& lay, const std::vector<double>& v, const std::string& prefix) {
  return {v.data() + lay.find(prefix + ".Wx").offset, v.data() + lay.find(prefix + ".Wh").offset,
          v.data() + lay.find(prefix + ".b").offset};
}

void affine(const PlainGate& g, const std::vector<double>& x, const std::vector<double>& h,
            std::vector<double>& out) {
  int hd = static_cast<int>(h.size());
  int in = static_cast<int>(x.size());
  for (int i = 0; i < hd; ++i) out[i] = g.b[i];
  matvec(g.wx, x.data(), hd, in, out.data());
  matvec(g.wh, h.data(), hd, hd, out.data());
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

std::vector<std::vector<double>> encode_sequence(const ModelConfig& cfg, const ParamLayout& layout,
                                                 const std::vector<double>& values,
                                                 const std::vector<double>& record) {
  cfg.validate();
  if (cfg.input_dim != 1) throw ContractError("record encoding expects input_dim = 1");
  int h = cfg.hidden_dim;
  std::vector<std::vector<double>> hs(cfg.layers, std::vector<double>(h, 0.0));
  std::vector<std::vector<double>> cs(cfg.layers, std::vector<double>(h, 0.0));
  std::vector<double> pre(h), z(h), r(h), cand(h), tmp(h), gi(h), gf(h), gg(h), go(h);
  std::vector<std::vector<double>> out;
  out.reserve(record.size());

  for (size_t t = 0; t < record.size(); ++t) {
    std::vector<double> input{record[t]};
    for (int l = 0; l < cfg.layers; ++l) {
      std::string p = "l" + std::to_string(l);
      std::vector<double>& hl = hs[l];
      switch (cfg.kind) {
        case Kind::rnn: {
          affine(gate_of(layout, values, p), input, hl, pre);
          for (int i = 0; i < h; ++i) hl[i] = std::tanh(pre[i]);
          break;
        }
        case Kind::gru: {
          affine(gate_of(layout, values, p + ".z"), input, hl, z);
          affine(gate_of(layout, values, p + ".r"), input, hl, r);
          for (int i = 0; i < h; ++i) {
            z[i] = sigmoid(z[i]);
            r[i] = sigmoid(r[i]);
            tmp[i] = r[i] * hl[i];
          }
          affine(gate_of(layout, values, p + ".c"), input, tmp, cand);
          for (int i = 0; i < h; ++i) {
            cand[i] = std::tanh(cand[i]);
            hl[i] = z[i] * hl[i] + (1.0 - z[i]) * cand[i];
          }
          break;
        }
        case Kind::lstm: {
          affine(gate_of(layout, values, p + ".i"), input, hl, gi);
          affine(gate_of(layout, values, p + ".f"), input, hl, gf);
          affine(gate_of(layout, values, p + ".g"), input, hl, gg);
          affine(gate_of(layout, values, p + ".o"), input, hl, go);
          std::vector<double>& cl = cs[l];
          for (int i = 0; i < h; ++i) {
            double ig = sigmoid(gi[i]);
            double fg = sigmoid(gf[i]);
            double og = sigmoid(go[i]);
            double gc = std::tanh(gg[i]);
            cl[i] = fg * cl[i] + ig * gc;
            hl[i] = og * std::tanh(cl[i]);
          }
          break;
        }
        case Kind::esn: {
          const double* win = values.data() + layout.find(p + ".Win").offset;
          const double* wres = values.data() + layout.find(p + ".Wres").offset;
          std::fill(pre.begin(), pre.end(), 0.0);
          matvec(win, input.data(), h, static_cast<int>(input.size()), pre.data());
          matvec(wres, hl.data(), h, h, pre.data());
          for (int i = 0; i < h; ++i) hl[i] = std::tanh(cfg.esn_scaling * pre[i]);
          break;
        }
      }
      input = hl;
    }
    const std::vector<double>& top = hs[cfg.layers - 1];
    for (double v : top)
      if (!std::isfinite(v))
        throw DivergenceError("hidden state diverged at step " + std::to_string(t));
    out.push_back(top);
  }
  return out;
}

TapeParams bind_params(ad::Tape& tape, const ModelConfig& cfg, const ParamLayout& layout,
                       const std::vector<double>& values) {
  TapeParams tp;
  tp.vars.resize(layout.blocks.size());
  for (size_t i = 0; i < layout.blocks.size(); ++i) {
    const ParamBlock& b = layout.blocks[i];
    ad::Shape shape;
    if (b.name.ends_with(".b")) {
      shape = ad::vec(b.len);
    } else if (b.name.ends_with(".Wh") || b.name.ends_with(".Wres")) {
      shape = {cfg.hidden_dim, cfg.hidden_dim};
    } else if (b.name.ends_with(".Wx") || b.name.ends_with(".Win")) {
      shape = {cfg.hidden_dim, b.len / cfg.hidden_dim};
    } else if (b.name == "head.W") {
      shape = {b.len / cfg.hidden_dim, cfg.hidden_dim};
    } else {
      shape = ad::vec(b.len);
    }
    if (b.trainable) {
      tp.vars[i] = tape.param(b.offset, shape);
    } else {
      // Frozen blocks enter as constants: no gradient path exists at all.
      tp.vars[i] = tape.constant(
          std::vector<double>(values.begin() + b.offset, values.begin() + b.offset + b.len), shape);
    }
  }
  return tp;
}

TapeState initial_state(ad::Tape& tape, const ModelConfig& cfg) {
  TapeState st;
  for (int l = 0; l < cfg.layers; ++l) {
    st.h.push_back(tape.zeros(ad::vec(cfg.hidden_dim)));
    st.c.push_back(tape.zeros(ad::vec(cfg.hidden_dim)));
  }
  return st;
}

namespace {

struct GateVars {
  ad::Var wx, wh, b;
};

GateVars tape_gate(const ParamLayout& lay, const TapeParams& tp, const std::string& prefix) {
  auto var_of = [&](const std::string& name) {
    for (size_t i = 0; i < lay.blocks.size(); ++i)
      if (lay.blocks[i].name == name) return tp.vars[i];
    throw ContractError("unknown parameter block: " + name);
  };
  return {var_of(prefix + ".Wx"), var_of(prefix + ".Wh"), var_of(prefix + ".b")};
}

ad::Var tape_affine(ad::Tape& t, const GateVars& g, ad::Var x, ad::Var h) {
  return t.add(t.add(t.matmul(g.wx, x), t.matmul(g.wh, h)), g.b);
}

}  // namespace

ad::Var step_tape(ad::Tape& tape, const ModelConfig& cfg, const ParamLayout& layout,
                  const TapeParams& params, TapeState& state, ad::Var x) {
  ad::Var input = x;
  for (int l = 0; l < cfg.layers; ++l) {
    std::string p = "l" + std::to_string(l);
    ad::Var h = state.h[l];
    switch (cfg.kind) {
      case Kind::rnn: {
        state.h[l] = tape.tanh(tape_affine(tape, tape_gate(layout, params, p), input, h));
        break;
      }
      case Kind::gru: {
        ad::Var z = tape.sigmoid(tape_affine(tape, tape_gate(layout, params, p + ".z"), input, h));
        ad::Var r = tape.sigmoid(tape_affine(tape, tape_gate(layout, params, p + ".r"), input, h));
        ad::Var rh = tape.mul(r, h);
        ad::Var cand = tape.tanh(tape_affine(tape, tape_gate(layout, params, p + ".c"), input, rh));
        ad::Var ones = tape.constant(std::vector<double>(cfg.hidden_dim, 1.0), ad::vec(cfg.hidden_dim));
        state.h[l] = tape.add(tape.mul(z, h), tape.mul(tape.sub(ones, z), cand));
        break;
      }
      case Kind::lstm: {
        ad::Var ig = tape.sigmoid(tape_affine(tape, tape_gate(layout, params, p + ".i"), input, h));
        ad::Var fg = tape.sigmoid(tape_affine(tape, tape_gate(layout, params, p + ".f"), input, h));
        ad::Var og = tape.sigmoid(tape_affine(tape, tape_gate(layout, params, p + ".o"), input, h));
        ad::Var gc = tape.tanh(tape_affine(tape, tape_gate(layout, params, p + ".g"), input, h));
        state.c[l] = tape.add(tape.mul(fg, state.c[l]), tape.mul(ig, gc));
        state.h[l] = tape.mul(og, tape.tanh(state.c[l]));
        break;
      }
      case Kind::esn: {
        auto var_of = [&](const std::string& name) {
          for (size_t i = 0; i < layout.blocks.size(); ++i)
            if (layout.blocks[i].name == name) return params.vars[i];
          throw ContractError("unknown parameter block: " + name);
        };
        ad::Var pre = tape.add(tape.matmul(var_of(p + ".Win"), input),
                               tape.matmul(var_of(p + ".Wres"), h));
        state.h[l] = tape.tanh(tape.scale(pre, cfg.esn_scaling));
        break;
      }
    }
    input = state.h[l];
  }
  return input;
}

}  // namespace qtw::backbones
