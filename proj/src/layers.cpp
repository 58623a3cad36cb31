#include "prosody/layers.hpp"

#include "prosody/error.hpp"

namespace prosody::nn {

LinearBound bind(Tape& tape, const LinearRef& layer) {
  return {tape.param(*layer.W), tape.param(*layer.b)};
}

LstmBound bind(Tape& tape, const LstmRef& cell) {
  return {tape.param(*cell.Wx), tape.param(*cell.Wh), tape.param(*cell.b),
          cell.hidden};
}

Id linear(Tape& tape, const LinearBound& layer, Id x) {
  return tape.add(tape.matmul(layer.W, x), layer.b);
}

Id linear(Tape& tape, const LinearRef& layer, Id x) {
  return linear(tape, bind(tape, layer), x);
}

LstmState lstm_zero_state(Tape& tape, std::size_t hidden) {
  return {tape.leaf(Tensor({hidden})), tape.leaf(Tensor({hidden}))};
}

LstmState lstm_step(Tape& tape, const LstmBound& cell, Id x, LstmState prev) {
  const std::size_t H = cell.hidden;
  Id z = tape.add(tape.add(tape.matmul(cell.Wx, x), tape.matmul(cell.Wh, prev.h)),
                  cell.b);
  Id i = tape.sigmoid(tape.slice(z, 0, H));
  Id f = tape.sigmoid(tape.slice(z, H, H));
  Id o = tape.sigmoid(tape.slice(z, 2 * H, H));
  Id g = tape.tanh(tape.slice(z, 3 * H, H));
  Id c = tape.add(tape.emul(f, prev.c), tape.emul(i, g));
  Id h = tape.emul(o, tape.tanh(c));
  return {h, c};
}

LstmState lstm_step(Tape& tape, const LstmRef& cell, Id x, LstmState prev) {
  return lstm_step(tape, bind(tape, cell), x, prev);
}

std::vector<Id> lstm_run(Tape& tape, const LstmRef& cell,
                         const std::vector<Id>& inputs, bool reverse) {
  if (inputs.empty()) fail("lstm: empty input sequence");
  const LstmBound bound = bind(tape, cell);
  std::vector<Id> out(inputs.size(), -1);
  LstmState state = lstm_zero_state(tape, cell.hidden);
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const std::size_t t = reverse ? inputs.size() - 1 - k : k;
    state = lstm_step(tape, bound, inputs[t], state);
    out[t] = state.h;
  }
  return out;
}

std::vector<Id> bilstm(Tape& tape, const LstmRef& fwd, const LstmRef& bwd,
                       const std::vector<Id>& inputs) {
  if (inputs.empty()) fail("bilstm: empty input sequence");
  std::vector<Id> hf = lstm_run(tape, fwd, inputs, false);
  std::vector<Id> hb = lstm_run(tape, bwd, inputs, true);
  std::vector<Id> out(inputs.size());
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    out[t] = tape.concat({hf[t], hb[t]});
  }
  return out;
}

LinearRef add_linear(ParamSet& params, const std::string& prefix,
                     std::size_t out, std::size_t in) {
  LinearRef ref;
  ref.W = &params.add(prefix + ".W", {out, in});
  ref.b = &params.add(prefix + ".b", {out});
  return ref;
}

LstmRef add_lstm(ParamSet& params, const std::string& prefix, std::size_t hidden,
                 std::size_t in) {
  LstmRef ref;
  ref.Wx = &params.add(prefix + ".Wx", {4 * hidden, in});
  ref.Wh = &params.add(prefix + ".Wh", {4 * hidden, hidden});
  ref.b = &params.add(prefix + ".b", {4 * hidden});
  ref.hidden = hidden;
  return ref;
}

LinearRef linear_ref(ParamSet& params, const std::string& prefix) {
  return {&params.get(prefix + ".W"), &params.get(prefix + ".b")};
}

LstmRef lstm_ref(ParamSet& params, const std::string& prefix) {
  LstmRef ref{&params.get(prefix + ".Wx"), &params.get(prefix + ".Wh"),
              &params.get(prefix + ".b"), 0};
  ref.hidden = ref.Wh->tensor.cols();
  return ref;
}

}  // namespace prosody::nn
