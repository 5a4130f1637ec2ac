#pragma once

// Minimal batch-first neural network layers with hand-written backward
// passes. Forward passes are const and record what backward needs in a tape;
// backward accumulates into Parameter::grad.

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "svebm/rng.hpp"
#include "svebm/tensor.hpp"

namespace svebm {

struct Parameter {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> value;
  std::vector<double> grad;

  Parameter() = default;
  Parameter(std::string name, std::vector<std::size_t> shape);

  std::size_t size() const noexcept { return value.size(); }
  void zero_grad();
};

using ParamRefs = std::vector<Parameter*>;

void zero_grads(const ParamRefs& params);
/// Global L2 norm of the gradients.
double grad_norm(const ParamRefs& params);
/// Rescales gradients so their global norm is at most max_norm; returns the
/// pre-clipping norm. max_norm <= 0 disables clipping.
double clip_grad_norm(const ParamRefs& params, double max_norm);

enum class Activation { Identity, Tanh, Swish };

Activation parse_activation(std::string_view name);
std::string_view activation_name(Activation a);
double activate(Activation a, double x);
/// Derivative expressed through the pre-activation x and output y = act(x).
double activate_grad(Activation a, double x, double y);

class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, std::size_t in, std::size_t out);

  /// Weights ~ N(0, gain^2 / fan_in), zero bias.
  void init(Rng& rng, double gain = 1.0);

  std::size_t in_dim() const noexcept { return in_; }
  std::size_t out_dim() const noexcept { return out_; }

  Matrix forward(const Matrix& x) const;
  /// Accumulates weight/bias gradients (when accumulate_params) and writes
  /// the input gradient into dx when non-null.
  void backward(const Matrix& x, const Matrix& dy, Matrix* dx, bool accumulate_params = true);

  void collect(ParamRefs& out);

  Parameter weight;  // [out x in]
  Parameter bias;    // [out]

 private:
  std::size_t in_ = 0;
  std::size_t out_ = 0;
};

struct MlpSpec {
  std::size_t in = 0;
  std::vector<std::size_t> hidden;
  std::size_t out = 0;
  Activation activation = Activation::Swish;
  bool activate_output = false;
};

class Mlp {
 public:
  struct Tape {
    std::vector<Matrix> values;  // values[0] = input, values[l+1] = output of layer l
    std::vector<Matrix> pre;     // pre-activations of every layer
  };

  Mlp() = default;
  Mlp(const std::string& name, const MlpSpec& spec);

  void init(Rng& rng, double output_gain = 1.0);

  const MlpSpec& spec() const noexcept { return spec_; }
  std::size_t in_dim() const noexcept { return spec_.in; }
  std::size_t out_dim() const noexcept { return spec_.out; }
  std::size_t num_layers() const noexcept { return layers_.size(); }
  Linear& layer(std::size_t i) { return layers_[i]; }
  const Linear& layer(std::size_t i) const { return layers_[i]; }

  Matrix forward(const Matrix& x, Tape* tape = nullptr) const;
  /// Backpropagates dy through the tape; returns d(input) when need_dx.
  Matrix backward(const Tape& tape, const Matrix& dy, bool need_dx, bool accumulate_params = true);
  /// d(input) only; leaves parameter gradients untouched.
  Matrix input_gradient(const Tape& tape, const Matrix& dy) const;

  void collect(ParamRefs& out);

 private:
  bool activated(std::size_t layer) const;

  MlpSpec spec_;
  std::vector<Linear> layers_;
};

class Embedding {
 public:
  Embedding() = default;
  Embedding(const std::string& name, std::size_t vocab, std::size_t dim);
  void init(Rng& rng);

  std::size_t vocab_size() const noexcept { return vocab_; }
  std::size_t dim() const noexcept { return dim_; }

  /// Rows of the table for each id (ids must be < vocab).
  Matrix lookup(std::span<const int> ids) const;
  void backward(std::span<const int> ids, const Matrix& dy);

  void collect(ParamRefs& out);

  Parameter table;  // [vocab x dim]

 private:
  std::size_t vocab_ = 0;
  std::size_t dim_ = 0;
};

/// Single-layer gated recurrent unit, gates ordered (reset, update, new):
///   r = sig(Wir x + bir + Whr h + bhr)
///   u = sig(Wiu x + biu + Whu h + bhu)
///   n = tanh(Win x + bin + r * (Whn h + bhn))
///   h' = (1 - u) * n + u * h
/// Rows whose mask entry is 0 carry h through unchanged.
class Gru {
 public:
  struct StepTape {
    Matrix x, h_prev, r, u, n, hn;
    std::vector<double> mask;
  };
  struct Tape {
    std::vector<StepTape> steps;
  };

  Gru() = default;
  Gru(const std::string& name, std::size_t input, std::size_t hidden);
  void init(Rng& rng);

  std::size_t input_dim() const noexcept { return in_; }
  std::size_t hidden_dim() const noexcept { return hidden_; }

  /// One step: returns the new hidden state.
  Matrix step(const Matrix& x, const Matrix& h, std::span<const double> mask,
              StepTape* tape) const;

  /// Runs inputs[0..T) from h0; returns the hidden state after each step.
  std::vector<Matrix> forward(const std::vector<Matrix>& inputs, const Matrix& h0,
                              const std::vector<std::vector<double>>& masks, Tape* tape) const;

  /// dh_out[t] is the loss gradient w.r.t. the hidden state after step t
  /// (empty matrices allowed). Writes input gradients (when non-null) and the
  /// gradient w.r.t. h0.
  void backward(const Tape& tape, const std::vector<Matrix>& dh_out,
                std::vector<Matrix>* dinputs, Matrix* dh0, bool accumulate_params = true);
  /// Same as backward() without touching parameter gradients.
  void input_gradient(const Tape& tape, const std::vector<Matrix>& dh_out,
                      std::vector<Matrix>* dinputs, Matrix* dh0) const;

  void collect(ParamRefs& out);

  Parameter w_ih;  // [3H x I]
  Parameter w_hh;  // [3H x H]
  Parameter b_ih;  // [3H]
  Parameter b_hh;  // [3H]

 private:
  std::size_t in_ = 0;
  std::size_t hidden_ = 0;
};

}  // namespace svebm
