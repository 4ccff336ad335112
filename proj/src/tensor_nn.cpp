#include "scar/tensor_nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>

namespace scar {

const Tensor& Var::value() const { return tape->value(id); }

// ---------------------------------------------------------------- tape

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::parameter(const Tensor& value, Tensor* sink) {
  Node n;
  n.value = value;
  n.needs_grad = sink != nullptr;
  n.sink = sink;
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::push(Tensor value, std::vector<int> parents, Backward fn) {
  Node n;
  n.value = std::move(value);
  for (int p : parents) n.needs_grad = n.needs_grad || nodes_[p].needs_grad;
  n.parents = std::move(parents);
  if (n.needs_grad) n.back = std::move(fn);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Tensor& Tape::grad_of(int id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0) n.grad = Tensor::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(Var loss) {
  if (nodes_.empty() || loss.tape != this || loss.id < 0 ||
      loss.id >= static_cast<int>(nodes_.size()))
    throw StateError("backward: no recorded computation");
  if (nodes_[loss.id].value.size() != 1) throw DimensionError("backward: loss must be a scalar");
  grad_of(loss.id).setOnes();
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.needs_grad || n.grad.size() == 0) continue;
    if (n.back) n.back(*this, i);
  }
  for (Node& n : nodes_)
    if (n.sink && n.grad.size() != 0) {
      if (n.sink->size() == 0) *n.sink = Tensor::Zero(n.value.rows(), n.value.cols());
      *n.sink += n.grad;
    }
  clear();
}

void Tape::clear() { nodes_.clear(); }

// ---------------------------------------------------------------- ops

Var matmul(Var a, Var b) {
  Tape& t = *a.tape;
  if (a.value().cols() != b.value().rows()) throw DimensionError("matmul: inner dimensions differ");
  Tensor out = a.value() * b.value();
  return t.push(std::move(out), {a.id, b.id}, [a = a.id, b = b.id](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    if (t.needs_grad(a)) t.grad_of(a).noalias() += g * t.value(b).transpose();
    if (t.needs_grad(b)) t.grad_of(b).noalias() += t.value(a).transpose() * g;
  });
}

Var add(Var a, Var b) {
  Tape& t = *a.tape;
  if (a.value().rows() != b.value().rows() || a.value().cols() != b.value().cols())
    throw DimensionError("add: shape mismatch");
  Tensor out = a.value() + b.value();
  return t.push(std::move(out), {a.id, b.id}, [a = a.id, b = b.id](Tape& t, int self) {
    if (t.needs_grad(a)) t.grad_of(a) += t.grad(self);
    if (t.needs_grad(b)) t.grad_of(b) += t.grad(self);
  });
}

Var add_row(Var x, Var row) {
  Tape& t = *x.tape;
  if (row.value().rows() != 1 || row.value().cols() != x.value().cols())
    throw DimensionError("add_row: bias width mismatch");
  Tensor out = x.value().rowwise() + row.value().row(0);
  return t.push(std::move(out), {x.id, row.id}, [x = x.id, r = row.id](Tape& t, int self) {
    if (t.needs_grad(x)) t.grad_of(x) += t.grad(self);
    if (t.needs_grad(r)) t.grad_of(r) += t.grad(self).colwise().sum();
  });
}

Var scale(Var a, double s) {
  Tape& t = *a.tape;
  return t.push(a.value() * s, {a.id}, [a = a.id, s](Tape& t, int self) {
    t.grad_of(a) += s * t.grad(self);
  });
}

Var sum(Var a) {
  Tape& t = *a.tape;
  Tensor out(1, 1);
  out(0, 0) = a.value().sum();
  return t.push(std::move(out), {a.id}, [a = a.id](Tape& t, int self) {
    t.grad_of(a).array() += t.grad(self)(0, 0);
  });
}

Var relu(Var x) {
  Tape& t = *x.tape;
  Tensor out = x.value().cwiseMax(0.0);
  return t.push(std::move(out), {x.id}, [x = x.id](Tape& t, int self) {
    t.grad_of(x).array() += (t.value(x).array() > 0.0).cast<double>() * t.grad(self).array();
  });
}

Var tukey(Var x, double delta) {
  if (!(delta > 0.0 && delta <= 1.0)) throw ParameterError("tukey: delta must lie in (0, 1]");
  Tape& t = *x.tape;
  const Tensor& v = x.value();
  Tensor out = v.unaryExpr([delta](double a) {
    return a == 0.0 ? 0.0 : std::copysign(std::pow(std::abs(a), delta), a);
  });
  return t.push(std::move(out), {x.id}, [x = x.id, delta](Tape& t, int self) {
    Tensor d = t.value(x).unaryExpr([delta](double a) {
      return a == 0.0 ? (delta == 1.0 ? 1.0 : 0.0) : delta * std::pow(std::abs(a), delta - 1.0);
    });
    t.grad_of(x).array() += d.array() * t.grad(self).array();
  });
}

namespace {

// im2col for one sample: (H*W) x (9*C)
Tensor im2col(const double* img, ImageShape s) {
  Tensor cols = Tensor::Zero(s.height * s.width, 9 * s.channels);
  for (int y = 0; y < s.height; ++y)
    for (int x = 0; x < s.width; ++x)
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx) {
          int yy = y + ky - 1, xx = x + kx - 1;
          if (yy < 0 || yy >= s.height || xx < 0 || xx >= s.width) continue;
          const double* src = img + (yy * s.width + xx) * s.channels;
          double* dst = &cols(y * s.width + x, (ky * 3 + kx) * s.channels);
          std::copy(src, src + s.channels, dst);
        }
  return cols;
}

void col2im_add(const Tensor& cols, double* img, ImageShape s) {
  for (int y = 0; y < s.height; ++y)
    for (int x = 0; x < s.width; ++x)
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx) {
          int yy = y + ky - 1, xx = x + kx - 1;
          if (yy < 0 || yy >= s.height || xx < 0 || xx >= s.width) continue;
          double* dst = img + (yy * s.width + xx) * s.channels;
          const double* src = &cols(y * s.width + x, (ky * 3 + kx) * s.channels);
          for (int c = 0; c < s.channels; ++c) dst[c] += src[c];
        }
}

}  // namespace

Var conv3x3(Var x, Var weights, Var bias, ImageShape in) {
  Tape& t = *x.tape;
  const Tensor& X = x.value();
  const Tensor& W = weights.value();
  if (X.cols() != in.size()) throw DimensionError("conv3x3: input width does not match image shape");
  if (W.rows() != 9 * in.channels) throw DimensionError("conv3x3: weight rows must be 9*channels");
  const int cout = static_cast<int>(W.cols());
  const int hw = in.height * in.width;
  Tensor out(X.rows(), hw * cout);
  for (Eigen::Index n = 0; n < X.rows(); ++n) {
    Tensor o = im2col(X.row(n).data(), in) * W;
    o.rowwise() += bias.value().row(0);
    out.row(n) = Eigen::Map<const Eigen::RowVectorXd>(o.data(), o.size());
  }
  return t.push(std::move(out), {x.id, weights.id, bias.id},
                [xi = x.id, wi = weights.id, bi = bias.id, in, cout, hw](Tape& t, int self) {
                  const Tensor& G = t.grad(self);
                  const Tensor& X = t.value(xi);
                  const Tensor& W = t.value(wi);
                  for (Eigen::Index n = 0; n < X.rows(); ++n) {
                    Eigen::Map<const Tensor> g(G.row(n).data(), hw, cout);
                    Tensor cols = im2col(X.row(n).data(), in);
                    if (t.needs_grad(wi)) t.grad_of(wi).noalias() += cols.transpose() * g;
                    if (t.needs_grad(bi)) t.grad_of(bi) += g.colwise().sum();
                    if (t.needs_grad(xi)) {
                      Tensor dcols = g * W.transpose();
                      Tensor& gx = t.grad_of(xi);
                      col2im_add(dcols, gx.row(n).data(), in);
                    }
                  }
                });
}

Var maxpool2(Var x, ImageShape in) {
  Tape& t = *x.tape;
  const Tensor& X = x.value();
  if (X.cols() != in.size()) throw DimensionError("maxpool2: input width does not match image shape");
  const int oh = in.height / 2, ow = in.width / 2, c = in.channels;
  const int per = oh * ow * c;
  Tensor out(X.rows(), per);
  std::vector<int> arg(static_cast<std::size_t>(X.rows()) * per);
  for (Eigen::Index n = 0; n < X.rows(); ++n)
    for (int y = 0; y < oh; ++y)
      for (int xx = 0; xx < ow; ++xx)
        for (int ch = 0; ch < c; ++ch) {
          int best = -1;
          double bv = -std::numeric_limits<double>::infinity();
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
              int idx = ((2 * y + dy) * in.width + (2 * xx + dx)) * c + ch;
              if (X(n, idx) > bv) bv = X(n, idx), best = idx;
            }
          int o = (y * ow + xx) * c + ch;
          out(n, o) = bv;
          arg[n * per + o] = best;
        }
  return t.push(std::move(out), {x.id}, [xi = x.id, arg = std::move(arg), per](Tape& t, int self) {
    const Tensor& G = t.grad(self);
    Tensor& gx = t.grad_of(xi);
    for (Eigen::Index n = 0; n < G.rows(); ++n)
      for (int o = 0; o < per; ++o) gx(n, arg[n * per + o]) += G(n, o);
  });
}

Tensor log_softmax(const Tensor& logits, double temperature) {
  if (!(temperature > 0.0)) throw ParameterError("softmax: temperature must be positive");
  Tensor z = logits / temperature;
  Eigen::VectorXd mx = z.rowwise().maxCoeff();
  z.colwise() -= mx;
  Eigen::VectorXd lse = z.array().exp().rowwise().sum().log();
  z.colwise() -= lse;
  return z;
}

Tensor softmax(const Tensor& logits, double temperature) {
  Tensor p = log_softmax(logits, temperature).array().exp();
  // renormalise so rows sum to one to rounding
  Eigen::VectorXd s = p.rowwise().sum();
  for (Eigen::Index i = 0; i < p.rows(); ++i) p.row(i) /= s(i);
  return p;
}

Var cross_entropy(Var logits, const std::vector<int>& labels) {
  Tape& t = *logits.tape;
  const Tensor& Z = logits.value();
  if (static_cast<Eigen::Index>(labels.size()) != Z.rows())
    throw DimensionError("cross_entropy: label count differs from batch size");
  if (labels.empty()) throw ParameterError("cross_entropy: empty batch");
  for (int y : labels)
    if (y < 0 || y >= Z.cols()) throw ParameterError("cross_entropy: label out of range");
  Tensor lp = log_softmax(Z);
  double loss = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) loss -= lp(i, labels[i]);
  Tensor out(1, 1);
  out(0, 0) = loss / labels.size();
  return t.push(std::move(out), {logits.id}, [z = logits.id, labels](Tape& t, int self) {
    Tensor g = softmax(t.value(z));
    for (std::size_t i = 0; i < labels.size(); ++i) g(i, labels[i]) -= 1.0;
    t.grad_of(z) += g * (t.grad(self)(0, 0) / labels.size());
  });
}

double js_divergence(const Vector& p, const Vector& q) {
  if (p.size() != q.size()) throw DimensionError("js_divergence: length mismatch");
  double d = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    double lr = std::log(p(i)) - std::log(q(i));
    d += 0.5 * (p(i) - q(i)) * lr;
  }
  return d;
}

Var js_divergence(Var student_logits, const Tensor& teacher_logits, double temperature) {
  if (!(temperature > 0.0)) throw ParameterError("distillation: temperature must be positive");
  Tape& t = *student_logits.tape;
  const Tensor& Z = student_logits.value();
  if (Z.rows() != teacher_logits.rows() || Z.cols() != teacher_logits.cols())
    throw DimensionError("distillation: student and teacher shapes differ");
  Tensor lp = log_softmax(Z);
  Tensor lq = log_softmax(teacher_logits, temperature);
  Tensor p = lp.array().exp(), q = lq.array().exp();
  // 0.5 KL(p||q) + 0.5 KL(q||p) = 0.5 sum (p - q)(log p - log q)
  Tensor diff = lp - lq;
  Eigen::VectorXd per = 0.5 * ((p - q).array() * diff.array()).rowwise().sum();
  Tensor out(1, 1);
  out(0, 0) = per.mean();
  return t.push(std::move(out), {student_logits.id},
                [z = student_logits.id, p = std::move(p), q = std::move(q),
                 diff = std::move(diff)](Tape& t, int self) {
                  // dJ/dp_i = 0.5 (log p_i - log q_i + 1 - q_i / p_i), then through softmax
                  Tensor g = 0.5 * (diff.array() + 1.0 - q.array() / p.array());
                  Eigen::VectorXd pg = (p.array() * g.array()).rowwise().sum();
                  Tensor dz = p.array() * (g.colwise() - pg).array();
                  t.grad_of(z) += dz * (t.grad(self)(0, 0) / p.rows());
                });
}

Var mahalanobis_rows(Var z, const Tensor& means, const std::vector<const Tensor*>& inverses) {
  Tape& t = *z.tape;
  const Tensor& Z = z.value();
  if (Z.rows() == 0) throw ParameterError("mahalanobis: empty batch");
  if (means.rows() != Z.rows() || means.cols() != Z.cols() ||
      static_cast<Eigen::Index>(inverses.size()) != Z.rows())
    throw DimensionError("mahalanobis: target shape mismatch");
  Tensor dir(Z.rows(), Z.cols());
  double total = 0.0;
  for (Eigen::Index j = 0; j < Z.rows(); ++j) {
    Eigen::RowVectorXd r = Z.row(j) - means.row(j);
    Eigen::RowVectorXd ar = r * (*inverses[j]);
    double d = std::sqrt(std::max(0.0, ar.dot(r)));
    total += d;
    dir.row(j) = d > 0.0 ? Eigen::RowVectorXd(ar / d) : Eigen::RowVectorXd::Zero(Z.cols());
  }
  Tensor out(1, 1);
  out(0, 0) = total / Z.rows();
  return t.push(std::move(out), {z.id}, [zi = z.id, dir = std::move(dir)](Tape& t, int self) {
    t.grad_of(zi) += dir * (t.grad(self)(0, 0) / dir.rows());
  });
}

// ---------------------------------------------------------------- model

namespace {

struct Layout {
  int conv_layers = 0;
  int hidden_layers = 0;
  int flat_dim = 0;
  int feature_dim = 0;
};

Layout layout_of(const ModelSpec& s) {
  Layout l;
  l.flat_dim = s.input_dim;
  if (s.image) {
    if (s.image->size() != s.input_dim) throw DimensionError("model: image shape does not match input_dim");
    l.conv_layers = 2;
    l.flat_dim = (s.image->height / 4) * (s.image->width / 4) * s.conv_channels;
  }
  l.hidden_layers = static_cast<int>(s.hidden.size());
  l.feature_dim = s.hidden.empty() ? l.flat_dim : s.hidden.back();
  return l;
}

std::vector<Var> bind_params(Tape& t, const Model& m, std::vector<Tensor>* sinks, std::size_t from,
                      std::size_t to) {
  std::vector<Var> v;
  for (std::size_t i = from; i < to; ++i)
    v.push_back(t.parameter(m.params[i], sinks ? &(*sinks)[i] : nullptr));
  return v;
}

void ensure_grads(Model& m) {
  if (m.grads.size() != m.params.size()) zero_grad(m);
}

Var backbone_impl(Tape& t, const Model& m, std::vector<Tensor>* sinks, const Tensor& batch) {
  const ModelSpec& s = m.spec;
  if (batch.cols() != s.input_dim) throw DimensionError("forward: batch width does not match model input");
  Layout l = layout_of(s);
  std::size_t nb = 2 * (l.conv_layers + l.hidden_layers);
  std::vector<Var> p = bind_params(t, m, sinks, 0, nb);
  Var h = t.constant(batch);
  std::size_t k = 0;
  if (s.image) {
    ImageShape sh = *s.image;
    for (int c = 0; c < l.conv_layers; ++c) {
      h = relu(conv3x3(h, p[k], p[k + 1], sh));
      k += 2;
      sh.channels = s.conv_channels;
      h = maxpool2(h, sh);
      sh.height /= 2;
      sh.width /= 2;
    }
  }
  for (int i = 0; i < l.hidden_layers; ++i) {
    h = add_row(matmul(h, p[k]), p[k + 1]);
    k += 2;
    if (i + 1 < l.hidden_layers || s.relu_features) h = relu(h);
  }
  return h;
}

Var head_impl(Tape& t, const Model& m, std::vector<Tensor>* sinks, Var features) {
  if (features.value().cols() != m.feature_dim()) throw DimensionError("head: feature width mismatch");
  std::size_t n = m.params.size();
  std::vector<Var> p = bind_params(t, m, sinks, n - 2, n);
  return add_row(matmul(features, p[0]), p[1]);
}

}  // namespace

int Model::feature_dim() const { return layout_of(spec).feature_dim; }

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor& p : params) n += p.size();
  return n;
}

Model make_model(const ModelSpec& spec, std::uint64_t seed) {
  if (spec.input_dim <= 0 || spec.num_classes <= 0) throw ParameterError("model: dimensions must be positive");
  Layout l = layout_of(spec);
  Model m;
  m.spec = spec;
  std::mt19937_64 rng(seed);
  auto layer = [&](int in, int out) {
    double a = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> u(-a, a);
    Tensor w(in, out), b(1, out);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = u(rng);
    for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = u(rng);
    m.params.push_back(std::move(w));
    m.params.push_back(std::move(b));
  };
  if (spec.image) {
    layer(9 * spec.image->channels, spec.conv_channels);
    layer(9 * spec.conv_channels, spec.conv_channels);
  }
  int in = l.flat_dim;
  for (int h : spec.hidden) {
    layer(in, h);
    in = h;
  }
  layer(in, spec.num_classes);
  return m;
}

Var feature_extract(Tape& tape, Model& model, const Tensor& batch) {
  ensure_grads(model);
  return backbone_impl(tape, model, &model.grads, batch);
}

Var head(Tape& tape, Model& model, Var features) {
  ensure_grads(model);
  return head_impl(tape, model, &model.grads, features);
}

Var forward(Tape& tape, Model& model, const Tensor& batch) {
  return head(tape, model, feature_extract(tape, model, batch));
}

Tensor features_of(const Model& model, const Tensor& batch) {
  Tape t;
  return backbone_impl(t, model, nullptr, batch).value();
}

Tensor logits_of(const Model& model, const Tensor& batch) {
  Tape t;
  return head_impl(t, model, nullptr, backbone_impl(t, model, nullptr, batch)).value();
}

std::vector<int> predict(const Model& model, const Tensor& batch) {
  Tensor z = logits_of(model, batch);
  std::vector<int> out(z.rows());
  for (Eigen::Index i = 0; i < z.rows(); ++i) z.row(i).maxCoeff(&out[i]);
  return out;
}

void zero_grad(Model& model) {
  model.grads.resize(model.params.size());
  for (std::size_t i = 0; i < model.params.size(); ++i)
    model.grads[i] = Tensor::Zero(model.params[i].rows(), model.params[i].cols());
}

void backward(Tape& tape, Var loss) { tape.backward(loss); }

// ---------------------------------------------------------------- optimizer

OptimState make_optimizer(const Model& model, double lr, double weight_decay) {
  OptimState s;
  s.lr = lr;
  s.weight_decay = weight_decay;
  for (const Tensor& p : model.params) {
    s.m.push_back(Tensor::Zero(p.rows(), p.cols()));
    s.v.push_back(Tensor::Zero(p.rows(), p.cols()));
  }
  return s;
}

void optimizer_step(Model& model, OptimState& s) {
  if (model.grads.size() != model.params.size()) throw StateError("optimizer_step: no gradients");
  if (s.m.size() != model.params.size()) throw StateError("optimizer_step: state does not match model");
  ++s.step;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (std::size_t i = 0; i < model.params.size(); ++i) {
    Tensor& p = model.params[i];
    const Tensor& g = model.grads[i];
    p *= 1.0 - s.lr * s.weight_decay;
    s.m[i] = s.beta1 * s.m[i] + (1.0 - s.beta1) * g;
    s.v[i] = s.beta2 * s.v[i] + (1.0 - s.beta2) * g.cwiseProduct(g);
    p.array() -= s.lr * (s.m[i].array() / c1) / ((s.v[i].array() / c2).sqrt() + s.eps);
  }
  model.grads.clear();
}

// ---------------------------------------------------------------- training

Tensor gather_rows(const Tensor& x, const std::vector<int>& idx) {
  Tensor out(idx.size(), x.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(i) = x.row(idx[i]);
  return out;
}

std::vector<int> gather(const std::vector<int>& v, const std::vector<int>& idx) {
  std::vector<int> out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) out[i] = v[idx[i]];
  return out;
}

std::vector<int> permutation(int n, std::mt19937_64& rng) {
  std::vector<int> p(n);
  std::iota(p.begin(), p.end(), 0);
  for (int i = n - 1; i > 0; --i) {
    int j = static_cast<int>(rng() % static_cast<std::uint64_t>(i + 1));
    std::swap(p[i], p[j]);
  }
  return p;
}

double fit_cross_entropy(Model& model, const Tensor& x, const std::vector<int>& y,
                         const TrainConfig& cfg) {
  if (x.rows() == 0) throw ParameterError("training: empty dataset");
  if (static_cast<Eigen::Index>(y.size()) != x.rows()) throw DimensionError("training: label count mismatch");
  std::mt19937_64 rng(cfg.seed);
  OptimState opt = make_optimizer(model, cfg.lr, cfg.weight_decay);
  double last = 0.0;
  const int n = static_cast<int>(x.rows());
  for (int e = 0; e < cfg.epochs; ++e) {
    std::vector<int> perm = permutation(n, rng);
    double total = 0.0;
    int batches = 0;
    for (int b = 0; b < n; b += cfg.batch) {
      std::vector<int> idx(perm.begin() + b, perm.begin() + std::min(n, b + cfg.batch));
      Tape t;
      zero_grad(model);
      Var loss = cross_entropy(forward(t, model, gather_rows(x, idx)), gather(y, idx));
      total += loss.scalar();
      ++batches;
      backward(t, loss);
      optimizer_step(model, opt);
    }
    last = total / batches;
  }
  return last;
}

// ---------------------------------------------------------------- checkpoints

nlohmann::json to_json(const ModelSpec& s) {
  nlohmann::json j{{"input_dim", s.input_dim},
                   {"num_classes", s.num_classes},
                   {"hidden", s.hidden},
                   {"relu_features", s.relu_features},
                   {"conv_channels", s.conv_channels}};
  if (s.image) j["image"] = {s.image->height, s.image->width, s.image->channels};
  return j;
}

ModelSpec model_spec_from_json(const nlohmann::json& j) {
  ModelSpec s;
  s.input_dim = j.at("input_dim").get<int>();
  s.num_classes = j.at("num_classes").get<int>();
  s.hidden = j.at("hidden").get<std::vector<int>>();
  s.relu_features = j.value("relu_features", true);
  s.conv_channels = j.value("conv_channels", 8);
  if (j.contains("image")) {
    auto v = j["image"].get<std::vector<int>>();
    s.image = ImageShape{v.at(0), v.at(1), v.at(2)};
  }
  return s;
}

namespace {
constexpr char kMagic[8] = {'S', 'C', 'A', 'R', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

void save_container(const std::string& path, const nlohmann::json& meta,
                    const std::vector<Tensor>& tensors) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  std::string m = meta.dump();
  std::uint64_t len = m.size(), count = tensors.size();
  f.write(kMagic, 8);
  f.write(reinterpret_cast<const char*>(&kVersion), sizeof kVersion);
  f.write(reinterpret_cast<const char*>(&len), sizeof len);
  f.write(m.data(), static_cast<std::streamsize>(len));
  f.write(reinterpret_cast<const char*>(&count), sizeof count);
  for (const Tensor& t : tensors) {
    std::int64_t r = t.rows(), c = t.cols();
    f.write(reinterpret_cast<const char*>(&r), sizeof r);
    f.write(reinterpret_cast<const char*>(&c), sizeof c);
    f.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!f) throw std::runtime_error("write failed for " + path);
}

std::pair<nlohmann::json, std::vector<Tensor>> load_container(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw MissingArtifact("cannot open " + path);
  auto fail = [&](const std::string& what) -> FormatError {
    long long off = f ? static_cast<long long>(f.tellg()) : -1;
    return FormatError(path + ": " + what, off);
  };
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t len = 0, count = 0;
  if (!f.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) throw fail("bad magic");
  if (!f.read(reinterpret_cast<char*>(&version), sizeof version) || version != kVersion)
    throw fail("unsupported version");
  if (!f.read(reinterpret_cast<char*>(&len), sizeof len) || len > (1u << 26)) throw fail("bad header");
  std::string m(len, '\0');
  if (!f.read(m.data(), static_cast<std::streamsize>(len))) throw fail("truncated header");
  if (!f.read(reinterpret_cast<char*>(&count), sizeof count)) throw fail("truncated tensor count");
  std::vector<Tensor> out;
  for (std::uint64_t i = 0; i < count; ++i) {
    std::int64_t r = 0, c = 0;
    if (!f.read(reinterpret_cast<char*>(&r), sizeof r) || !f.read(reinterpret_cast<char*>(&c), sizeof c) ||
        r < 0 || c < 0)
      throw fail("bad tensor header");
    Tensor t(r, c);
    if (!f.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double))))
      throw fail("truncated tensor data");
    out.push_back(std::move(t));
  }
  return {nlohmann::json::parse(m), std::move(out)};
}

void save_model(const std::string& path, const Model& model) {
  save_container(path, {{"kind", "model"}, {"spec", to_json(model.spec)}}, model.params);
}

Model load_model(const std::string& path) {
  auto [meta, tensors] = load_container(path);
  if (meta.value("kind", "") != "model") throw FormatError(path + ": not a model checkpoint", 0);
  Model m = make_model(model_spec_from_json(meta.at("spec")), 0);
  if (tensors.size() != m.params.size()) throw FormatError(path + ": parameter count mismatch", 0);
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (tensors[i].rows() != m.params[i].rows() || tensors[i].cols() != m.params[i].cols())
      throw FormatError(path + ": parameter shape mismatch", 0);
    m.params[i] = std::move(tensors[i]);
  }
  return m;
}

}  // namespace scar
