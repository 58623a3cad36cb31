#pragma once

#include <vector>

#include "prosody/autodiff.hpp"
#include "prosody/params.hpp"

namespace prosody::nn {

using Id = Tape::Id;

struct LinearRef {
  Parameter* W = nullptr;  // [out x in]
  Parameter* b = nullptr;  // [out]
};

struct LstmRef {
  Parameter* Wx = nullptr;  // [4H x in], gate order i, f, o, g
  Parameter* Wh = nullptr;  // [4H x H]
  Parameter* b = nullptr;   // [4H]
  std::size_t hidden = 0;
};

// Parameters entered into a tape once; cheap to reuse across timesteps.
struct LinearBound {
  Id W = -1;
  Id b = -1;
};

struct LstmBound {
  Id Wx = -1;
  Id Wh = -1;
  Id b = -1;
  std::size_t hidden = 0;
};

struct LstmState {
  Id h = -1;
  Id c = -1;
};

LinearBound bind(Tape& tape, const LinearRef& layer);
LstmBound bind(Tape& tape, const LstmRef& cell);

// Wx + b
Id linear(Tape& tape, const LinearBound& layer, Id x);
Id linear(Tape& tape, const LinearRef& layer, Id x);

// i,f,o = sigmoid gates, g = tanh candidate; c' = f.c + i.g, h' = o.tanh(c')
LstmState lstm_step(Tape& tape, const LstmBound& cell, Id x, LstmState prev);
LstmState lstm_step(Tape& tape, const LstmRef& cell, Id x, LstmState prev);

LstmState lstm_zero_state(Tape& tape, std::size_t hidden);

// Hidden sequence over the inputs, in input order. reverse=true runs the
// recurrence from the last element backwards (output still aligned to input
// positions).
std::vector<Id> lstm_run(Tape& tape, const LstmRef& cell,
                         const std::vector<Id>& inputs, bool reverse = false);

// Per-timestep [h_fwd ; h_bwd]; output width 2*hidden.
std::vector<Id> bilstm(Tape& tape, const LstmRef& fwd, const LstmRef& bwd,
                       const std::vector<Id>& inputs);

// Declares the parameters of a linear layer / LSTM cell inside a set.
LinearRef add_linear(ParamSet& params, const std::string& prefix,
                     std::size_t out, std::size_t in);
LstmRef add_lstm(ParamSet& params, const std::string& prefix, std::size_t hidden,
                 std::size_t in);

LinearRef linear_ref(ParamSet& params, const std::string& prefix);
LstmRef lstm_ref(ParamSet& params, const std::string& prefix);

}  // namespace prosody::nn
