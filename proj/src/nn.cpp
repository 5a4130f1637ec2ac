#include "svebm/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "svebm/errors.hpp"
#include "svebm/kernels.hpp"

namespace svebm {

namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void add_bias(Matrix& y, std::span<const double> bias) {
  for (std::size_t r = 0; r < y.rows(); ++r) {
    auto row = y.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += bias[c];
  }
}

void accumulate_colsum(const Matrix& dy, std::span<double> out) {
  for (std::size_t r = 0; r < dy.rows(); ++r) kernels::axpy(1.0, dy.row(r), out);
}

}  // namespace

// ---------------------------------------------------------------------------
// Parameter helpers
// ---------------------------------------------------------------------------

Parameter::Parameter(std::string n, std::vector<std::size_t> s)
    : name(std::move(n)), shape(std::move(s)), value(product(shape), 0.0), grad(value.size(), 0.0) {}

void Parameter::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

void zero_grads(const ParamRefs& params) {
  for (Parameter* p : params) p->zero_grad();
}

double grad_norm(const ParamRefs& params) {
  double s = 0.0;
  for (const Parameter* p : params) s += kernels::sum_squares(p->grad);
  return std::sqrt(s);
}

double clip_grad_norm(const ParamRefs& params, double max_norm) {
  const double norm = grad_norm(params);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (Parameter* p : params)
      for (double& g : p->grad) g *= scale;
  }
  return norm;
}

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

Activation parse_activation(std::string_view name) {
  if (name == "identity" || name == "linear") return Activation::Identity;
  if (name == "tanh") return Activation::Tanh;
  if (name == "swish" || name == "silu") return Activation::Swish;
  throw ConfigError("unknown activation '" + std::string(name) + "' (expected identity|tanh|swish)");
}

std::string_view activation_name(Activation a) {
  switch (a) {
    case Activation::Identity:
      return "identity";
    case Activation::Tanh:
      return "tanh";
    case Activation::Swish:
      return "swish";
  }
  return "identity";
}

double activate(Activation a, double x) {
  switch (a) {
    case Activation::Identity:
      return x;
    case Activation::Tanh:
      return std::tanh(x);
    case Activation::Swish:
      return x * sigmoid(x);
  }
  return x;
}

double activate_grad(Activation a, double x, double y) {
  switch (a) {
    case Activation::Identity:
      return 1.0;
    case Activation::Tanh:
      return 1.0 - y * y;
    case Activation::Swish: {
      const double s = sigmoid(x);
      return s + y * (1.0 - s);
    }
  }
  return 1.0;
}

// ---------------------------------------------------------------------------
// Linear
// ---------------------------------------------------------------------------

Linear::Linear(const std::string& name, std::size_t in, std::size_t out)
    : weight(name + ".weight", {out, in}), bias(name + ".bias", {out}), in_(in), out_(out) {}

void Linear::init(Rng& rng, double gain) {
  const double sd = gain / std::sqrt(static_cast<double>(std::max<std::size_t>(in_, 1)));
  for (double& w : weight.value) w = sd * rng.normal();
  std::fill(bias.value.begin(), bias.value.end(), 0.0);
}

Matrix Linear::forward(const Matrix& x) const {
  require(x.cols() == in_, "Linear '" + weight.name + "': input has " + std::to_string(x.cols()) +
                               " columns, expected " + std::to_string(in_));
  Matrix y;
  matmul_nt(x, weight.value, out_, y);
  add_bias(y, bias.value);
  return y;
}

void Linear::backward(const Matrix& x, const Matrix& dy, Matrix* dx, bool accumulate_params) {
  require(dy.cols() == out_ && dy.rows() == x.rows(), "Linear::backward: shape mismatch");
  const auto& k = kernels::active();
  if (accumulate_params) {
    k.gemm_tn(out_, in_, x.rows(), dy.data(), x.data(), weight.grad.data(), true);
    accumulate_colsum(dy, bias.grad);
  }
  if (dx != nullptr) {
    dx->resize(x.rows(), in_);
    k.gemm_nn(x.rows(), in_, out_, dy.data(), weight.value.data(), dx->data(), false);
  }
}

void Linear::collect(ParamRefs& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

// ---------------------------------------------------------------------------
// Mlp
// ---------------------------------------------------------------------------

Mlp::Mlp(const std::string& name, const MlpSpec& spec) : spec_(spec) {
  require(spec.in >= 1 && spec.out >= 1, "Mlp: input and output dimensions must be >= 1");
  std::size_t prev = spec.in;
  for (std::size_t i = 0; i < spec.hidden.size(); ++i) {
    layers_.emplace_back(name + ".l" + std::to_string(i), prev, spec.hidden[i]);
    prev = spec.hidden[i];
  }
  layers_.emplace_back(name + ".l" + std::to_string(spec.hidden.size()), prev, spec.out);
}

void Mlp::init(Rng& rng, double output_gain) {
  for (std::size_t i = 0; i < layers_.size(); ++i)
    layers_[i].init(rng, i + 1 == layers_.size() ? output_gain : 1.0);
}

bool Mlp::activated(std::size_t layer) const {
  return layer + 1 < layers_.size() || spec_.activate_output;
}

Matrix Mlp::forward(const Matrix& x, Tape* tape) const {
  if (tape != nullptr) {
    tape->values.assign(1, x);
    tape->pre.clear();
  }
  Matrix h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Matrix pre = layers_[l].forward(h);
    if (activated(l) && spec_.activation != Activation::Identity) {
      h = pre;
      for (double& v : h.flat()) v = activate(spec_.activation, v);
    } else {
      h = pre;
    }
    if (tape != nullptr) {
      tape->pre.push_back(std::move(pre));
      tape->values.push_back(h);
    }
  }
  return h;
}

Matrix Mlp::backward(const Tape& tape, const Matrix& dy, bool need_dx, bool accumulate_params) {
  require(tape.values.size() == layers_.size() + 1, "Mlp::backward: tape does not match network");
  Matrix grad = dy;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    if (activated(l) && spec_.activation != Activation::Identity) {
      const Matrix& pre = tape.pre[l];
      const Matrix& post = tape.values[l + 1];
      auto g = grad.flat();
      for (std::size_t i = 0; i < g.size(); ++i)
        g[i] *= activate_grad(spec_.activation, pre.flat()[i], post.flat()[i]);
    }
    const bool want_dx = l > 0 || need_dx;
    Matrix dx;
    layers_[l].backward(tape.values[l], grad, want_dx ? &dx : nullptr, accumulate_params);
    if (!want_dx) return {};
    grad = std::move(dx);
  }
  return grad;
}

Matrix Mlp::input_gradient(const Tape& tape, const Matrix& dy) const {
  // backward() only writes parameter gradients when accumulate_params is set.
  return const_cast<Mlp*>(this)->backward(tape, dy, true, false);
}

void Mlp::collect(ParamRefs& out) {
  for (auto& l : layers_) l.collect(out);
}

// ---------------------------------------------------------------------------
// Embedding
// ---------------------------------------------------------------------------

Embedding::Embedding(const std::string& name, std::size_t vocab, std::size_t dim)
    : table(name + ".table", {vocab, dim}), vocab_(vocab), dim_(dim) {}

void Embedding::init(Rng& rng) {
  for (double& w : table.value) w = rng.normal();
}

Matrix Embedding::lookup(std::span<const int> ids) const {
  Matrix out(ids.size(), dim_);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const int id = ids[i];
    if (id < 0 || static_cast<std::size_t>(id) >= vocab_)
      throw DataError("token id " + std::to_string(id) + " outside vocabulary of size " +
                      std::to_string(vocab_));
    std::copy_n(table.value.begin() + static_cast<long>(id * dim_), dim_, out.row(i).begin());
  }
  return out;
}

void Embedding::backward(std::span<const int> ids, const Matrix& dy) {
  for (std::size_t i = 0; i < ids.size(); ++i)
    kernels::axpy(1.0, dy.row(i),
                  std::span<double>(table.grad.data() + static_cast<std::size_t>(ids[i]) * dim_, dim_));
}

void Embedding::collect(ParamRefs& out) { out.push_back(&table); }

// ---------------------------------------------------------------------------
// Gru
// ---------------------------------------------------------------------------

Gru::Gru(const std::string& name, std::size_t input, std::size_t hidden)
    : w_ih(name + ".w_ih", {3 * hidden, input}),
      w_hh(name + ".w_hh", {3 * hidden, hidden}),
      b_ih(name + ".b_ih", {3 * hidden}),
      b_hh(name + ".b_hh", {3 * hidden}),
      in_(input),
      hidden_(hidden) {}

void Gru::init(Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_));
  for (Parameter* p : {&w_ih, &w_hh, &b_ih, &b_hh})
    for (double& w : p->value) w = bound * (2.0 * rng.uniform() - 1.0);
}

Matrix Gru::step(const Matrix& x, const Matrix& h, std::span<const double> mask,
                 StepTape* tape) const {
  const std::size_t B = x.rows();
  const std::size_t H = hidden_;
  require(x.cols() == in_ && h.rows() == B && h.cols() == H && mask.size() == B,
          "Gru::step: shape mismatch");
  Matrix gi, gh;
  matmul_nt(x, w_ih.value, 3 * H, gi);
  matmul_nt(h, w_hh.value, 3 * H, gh);
  add_bias(gi, b_ih.value);
  add_bias(gh, b_hh.value);

  Matrix r(B, H), u(B, H), n(B, H), hn(B, H), out(B, H);
  for (std::size_t b = 0; b < B; ++b) {
    const auto gib = gi.row(b);
    const auto ghb = gh.row(b);
    for (std::size_t j = 0; j < H; ++j) {
      const double rj = sigmoid(gib[j] + ghb[j]);
      const double uj = sigmoid(gib[H + j] + ghb[H + j]);
      const double hnj = ghb[2 * H + j];
      const double nj = std::tanh(gib[2 * H + j] + rj * hnj);
      r(b, j) = rj;
      u(b, j) = uj;
      n(b, j) = nj;
      hn(b, j) = hnj;
      const double cand = (1.0 - uj) * nj + uj * h(b, j);
      out(b, j) = mask[b] != 0.0 ? cand : h(b, j);
    }
  }
  if (tape != nullptr) {
    tape->x = x;
    tape->h_prev = h;
    tape->r = std::move(r);
    tape->u = std::move(u);
    tape->n = std::move(n);
    tape->hn = std::move(hn);
    tape->mask.assign(mask.begin(), mask.end());
  }
  return out;
}

std::vector<Matrix> Gru::forward(const std::vector<Matrix>& inputs, const Matrix& h0,
                                 const std::vector<std::vector<double>>& masks, Tape* tape) const {
  require(masks.size() == inputs.size(), "Gru::forward: one mask per step required");
  std::vector<Matrix> hs;
  hs.reserve(inputs.size());
  if (tape != nullptr) tape->steps.assign(inputs.size(), {});
  const Matrix* h = &h0;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    hs.push_back(step(inputs[t], *h, masks[t], tape ? &tape->steps[t] : nullptr));
    h = &hs.back();
  }
  return hs;
}

void Gru::backward(const Tape& tape, const std::vector<Matrix>& dh_out,
                   std::vector<Matrix>* dinputs, Matrix* dh0, bool accumulate_params) {
  const std::size_t T = tape.steps.size();
  require(dh_out.size() == T, "Gru::backward: gradient list length mismatch");
  const std::size_t H = hidden_;
  const auto& k = kernels::active();
  if (dinputs != nullptr) dinputs->assign(T, {});
  if (T == 0) return;
  const std::size_t B = tape.steps.front().x.rows();
  Matrix dh(B, H, 0.0);
  Matrix dgi(B, 3 * H), dgh(B, 3 * H);
  for (std::size_t t = T; t-- > 0;) {
    const StepTape& st = tape.steps[t];
    if (!dh_out[t].empty()) kernels::axpy(1.0, dh_out[t].flat(), dh.flat());
    Matrix dh_prev(B, H);
    for (std::size_t b = 0; b < B; ++b) {
      const double m = st.mask[b];
      for (std::size_t j = 0; j < H; ++j) {
        const double g = dh(b, j);
        const double dcand = m * g;
        const double uj = st.u(b, j), nj = st.n(b, j), rj = st.r(b, j);
        const double dn = dcand * (1.0 - uj);
        const double du = dcand * (st.h_prev(b, j) - nj);
        const double dpre_n = dn * (1.0 - nj * nj);
        const double dr = dpre_n * st.hn(b, j);
        const double dpre_r = dr * rj * (1.0 - rj);
        const double dpre_u = du * uj * (1.0 - uj);
        dgi(b, j) = dpre_r;
        dgi(b, H + j) = dpre_u;
        dgi(b, 2 * H + j) = dpre_n;
        dgh(b, j) = dpre_r;
        dgh(b, H + j) = dpre_u;
        dgh(b, 2 * H + j) = dpre_n * rj;
        dh_prev(b, j) = (1.0 - m) * g + dcand * uj;
      }
    }
    if (accumulate_params) {
      k.gemm_tn(3 * H, in_, B, dgi.data(), st.x.data(), w_ih.grad.data(), true);
      k.gemm_tn(3 * H, H, B, dgh.data(), st.h_prev.data(), w_hh.grad.data(), true);
      accumulate_colsum(dgi, b_ih.grad);
      accumulate_colsum(dgh, b_hh.grad);
    }
    if (dinputs != nullptr) {
      Matrix dx(B, in_);
      k.gemm_nn(B, in_, 3 * H, dgi.data(), w_ih.value.data(), dx.data(), false);
      (*dinputs)[t] = std::move(dx);
    }
    k.gemm_nn(B, H, 3 * H, dgh.data(), w_hh.value.data(), dh_prev.data(), true);
    dh = std::move(dh_prev);
  }
  if (dh0 != nullptr) *dh0 = std::move(dh);
}

void Gru::input_gradient(const Tape& tape, const std::vector<Matrix>& dh_out,
                         std::vector<Matrix>* dinputs, Matrix* dh0) const {
  const_cast<Gru*>(this)->backward(tape, dh_out, dinputs, dh0, false);
}

void Gru::collect(ParamRefs& out) {
  out.push_back(&w_ih);
  out.push_back(&w_hh);
  out.push_back(&b_ih);
  out.push_back(&b_hh);
}

}  // namespace svebm
