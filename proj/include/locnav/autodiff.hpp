#pragma once

#include <Eigen/Core>
#include <cmath>
#include <deque>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "locnav/rng.hpp"
#include "locnav/tensor.hpp"

namespace locnav {

using MatrixR = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVecR = Eigen::Matrix<Real, 1, Eigen::Dynamic>;

// Learnable tensor with its gradient accumulator and optimizer slots. Lives in
// a ParamStore; graphs reference it, never own it.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor adam_m;  // allocated by the optimizer on first update
  Tensor adam_v;
};

class ParamStore {
 public:
  Param& create(const std::string& name, std::vector<int> shape) {
    if (find(name)) throw ContractError("param '" + name + "' registered twice");
    params_.push_back(std::make_unique<Param>());
    Param& p = *params_.back();
    p.name = name;
    p.value = Tensor(shape);
    p.grad = Tensor(std::move(shape));
    return p;
  }

  Param* find(const std::string& name) {
    for (auto& p : params_)
      if (p->name == name) return p.get();
    return nullptr;
  }

  Param& require(const std::string& name) {
    Param* p = find(name);
    if (!p) throw ContractError("param '" + name + "' not found");
    return *p;
  }

  void zero_grads() {
    for (auto& p : params_) std::fill(p->grad.data.begin(), p->grad.data.end(), Real(0));
  }

  std::vector<Param*> all() {
    std::vector<Param*> out;
    out.reserve(params_.size());
    for (auto& p : params_) out.push_back(p.get());
    return out;
  }

  size_t size() const { return params_.size(); }

 private:
  std::vector<std::unique_ptr<Param>> params_;
};

// Centered uniform init scaled by fan-in; biases stay zero.
inline void init_he_uniform(Param& p, int fan_in, Rng& rng) {
  if (fan_in < 1) throw ContractError("init: fan_in must be >= 1");
  double limit = std::sqrt(6.0 / fan_in);
  for (Real& v : p.value.data) v = static_cast<Real>(rng.uniform(-limit, limit));
}

// Single-use reverse-mode tape. Build the forward pass with the op methods,
// seed one or more output nodes, then run one backward sweep. Reusing a swept
// graph is a contract violation; record a fresh forward pass instead.
class Graph {
 public:
  int input(Tensor value) { return add_node(std::move(value), {}); }

  const Tensor& value(int id) const { return nodes_[check_id(id)].value; }

  // y = x * W^T + b with x (N,in), W (out,in), b (out).
  int linear(int x, Param& w, Param& b) {
    const Tensor& xv = value(x);
    if (xv.rank() != 2) throw ContractError("linear: input must be (N,in), got " + xv.shape_str());
    int n = xv.dim(0), in = xv.dim(1);
    if (w.value.rank() != 2 || w.value.dim(1) != in)
      throw ContractError("linear: weight " + w.value.shape_str() + " does not accept input " +
                          xv.shape_str());
    int out = w.value.dim(0);
    check_shape(b.value, {out}, "linear bias");

    Tensor y({n, out});
    {
      Eigen::Map<const MatrixR> X(xv.data.data(), n, in);
      Eigen::Map<const MatrixR> W(w.value.data.data(), out, in);
      Eigen::Map<MatrixR> Y(y.data.data(), n, out);
      Y.noalias() = X * W.transpose();
      Y.rowwise() += Eigen::Map<const RowVecR>(b.value.data.data(), out);
    }
    int id = add_node(std::move(y), {});
    nodes_[id].backward_fn = [this, id, x, &w, &b, n, in, out]() {
      Eigen::Map<const MatrixR> GY(nodes_[id].grad.data.data(), n, out);
      Eigen::Map<const MatrixR> X(nodes_[x].value.data.data(), n, in);
      Eigen::Map<MatrixR> GW(w.grad.data.data(), out, in);
      GW.noalias() += GY.transpose() * X;
      Eigen::Map<RowVecR> GB(b.grad.data.data(), out);
      GB += GY.colwise().sum();
      if (Tensor* gx = maybe_grad(x)) {
        Eigen::Map<const MatrixR> W(w.value.data.data(), out, in);
        Eigen::Map<MatrixR> GX(gx->data.data(), n, in);
        GX.noalias() += GY * W;
      }
    };
    return id;
  }

  // Valid (no padding) 1D cross-correlation: x (N,C,L), k (F,C,kw) -> (N,F,Lo).
  int conv1d(int x, Param& k, Param& b, int stride) {
    const Tensor& xv = value(x);
    if (xv.rank() != 3)
      throw ContractError("conv1d: input must be (N,C,L), got " + xv.shape_str());
    if (k.value.rank() != 3 || k.value.dim(1) != xv.dim(1))
      throw ContractError("conv1d: kernel " + k.value.shape_str() + " does not accept input " +
                          xv.shape_str());
    if (stride < 1) throw ContractError("conv1d: stride must be >= 1");
    int n = xv.dim(0), c = xv.dim(1), l = xv.dim(2);
    int f = k.value.dim(0), kw = k.value.dim(2);
    if (l < kw) throw ContractError("conv1d: input shorter than kernel");
    int lo = (l - kw) / stride + 1;
    check_shape(b.value, {f}, "conv1d bias");

    // im2col for the whole batch, kept alive for the backward pass.
    auto col = std::make_shared<Tensor>(std::vector<int>{c * kw, n * lo});
    for (int ni = 0; ni < n; ++ni) {
      for (int ci = 0; ci < c; ++ci) {
        const Real* src = &xv.data[(static_cast<size_t>(ni) * c + ci) * l];
        for (int j = 0; j < kw; ++j) {
          Real* dst = &col->data[(static_cast<size_t>(ci) * kw + j) * (n * lo) +
                                 static_cast<size_t>(ni) * lo];
          for (int t = 0; t < lo; ++t) dst[t] = src[t * stride + j];
        }
      }
    }

    Tensor y({n, f, lo});
    {
      Eigen::Map<const MatrixR> K(k.value.data.data(), f, c * kw);
      Eigen::Map<const MatrixR> COL(col->data.data(), c * kw, n * lo);
      Eigen::Map<const RowVecR> B(b.value.data.data(), f);
      for (int ni = 0; ni < n; ++ni) {
        Eigen::Map<MatrixR> Yn(&y.data[static_cast<size_t>(ni) * f * lo], f, lo);
        Yn.noalias() = K * COL.middleCols(static_cast<Eigen::Index>(ni) * lo, lo);
        Yn.colwise() += B.transpose();
      }
    }
    int id = add_node(std::move(y), {});
    nodes_[id].backward_fn = [this, id, x, &k, &b, col, n, c, l, f, kw, lo, stride]() {
      Eigen::Map<const MatrixR> COL(col->data.data(), c * kw, n * lo);
      Eigen::Map<MatrixR> GK(k.grad.data.data(), f, c * kw);
      Eigen::Map<RowVecR> GB(b.grad.data.data(), f);
      Tensor* gx = maybe_grad(x);
      Tensor gcol;
      if (gx) gcol = Tensor({c * kw, lo});
      for (int ni = 0; ni < n; ++ni) {
        Eigen::Map<const MatrixR> GYn(&nodes_[id].grad.data[static_cast<size_t>(ni) * f * lo], f,
                                      lo);
        GK.noalias() += GYn * COL.middleCols(static_cast<Eigen::Index>(ni) * lo, lo).transpose();
        GB += GYn.rowwise().sum().transpose();
        if (gx) {
          Eigen::Map<const MatrixR> K(k.value.data.data(), f, c * kw);
          Eigen::Map<MatrixR> GCOL(gcol.data.data(), c * kw, lo);
          GCOL.noalias() = K.transpose() * GYn;
          for (int ci = 0; ci < c; ++ci) {
            Real* dst = &gx->data[(static_cast<size_t>(ni) * c + ci) * l];
            for (int j = 0; j < kw; ++j) {
              const Real* src = &gcol.data[(static_cast<size_t>(ci) * kw + j) * lo];
              for (int t = 0; t < lo; ++t) dst[t * stride + j] += src[t];
            }
          }
        }
      }
    };
    return id;
  }

  // Stride-1 2D cross-correlation with symmetric zero padding:
  // x (N,C,H,W), k (F,C,kh,kw) -> (N,F,H+2p-kh+1,W+2p-kw+1).
  int conv2d(int x, Param& k, Param& b, int pad) {
    const Tensor& xv = value(x);
    if (xv.rank() != 4)
      throw ContractError("conv2d: input must be (N,C,H,W), got " + xv.shape_str());
    if (k.value.rank() != 4 || k.value.dim(1) != xv.dim(1))
      throw ContractError("conv2d: kernel " + k.value.shape_str() + " does not accept input " +
                          xv.shape_str());
    if (pad < 0) throw ContractError("conv2d: pad must be >= 0");
    int n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
    int f = k.value.dim(0), kh = k.value.dim(2), kw = k.value.dim(3);
    int ho = h + 2 * pad - kh + 1, wo = w + 2 * pad - kw + 1;
    if (ho < 1 || wo < 1) throw ContractError("conv2d: kernel larger than padded input");
    check_shape(b.value, {f}, "conv2d bias");

    Tensor y({n, f, ho, wo});
    {
      Tensor col({c * kh * kw, ho * wo});
      Eigen::Map<const MatrixR> K(k.value.data.data(), f, c * kh * kw);
      Eigen::Map<const RowVecR> B(b.value.data.data(), f);
      for (int ni = 0; ni < n; ++ni) {
        im2col_2d(xv, ni, c, h, w, kh, kw, pad, ho, wo, col);
        Eigen::Map<const MatrixR> COL(col.data.data(), c * kh * kw, ho * wo);
        Eigen::Map<MatrixR> Yn(&y.data[static_cast<size_t>(ni) * f * ho * wo], f, ho * wo);
        Yn.noalias() = K * COL;
        Yn.colwise() += B.transpose();
      }
    }
    int id = add_node(std::move(y), {});
    nodes_[id].backward_fn = [this, id, x, &k, &b, n, c, h, w, f, kh, kw, pad, ho, wo]() {
      // The per-sample column matrix is rebuilt here instead of kept: for the
      // larger conv layers storing every sample's columns costs gigabytes.
      Tensor col({c * kh * kw, ho * wo});
      Tensor gcol({c * kh * kw, ho * wo});
      Eigen::Map<const MatrixR> K(k.value.data.data(), f, c * kh * kw);
      Eigen::Map<MatrixR> GK(k.grad.data.data(), f, c * kh * kw);
      Eigen::Map<RowVecR> GB(b.grad.data.data(), f);
      Tensor* gx = maybe_grad(x);
      for (int ni = 0; ni < n; ++ni) {
        im2col_2d(nodes_[x].value, ni, c, h, w, kh, kw, pad, ho, wo, col);
        Eigen::Map<const MatrixR> COL(col.data.data(), c * kh * kw, ho * wo);
        Eigen::Map<const MatrixR> GYn(&nodes_[id].grad.data[static_cast<size_t>(ni) * f * ho * wo],
                                      f, ho * wo);
        GK.noalias() += GYn * COL.transpose();
        GB += GYn.rowwise().sum().transpose();
        if (gx) {
          Eigen::Map<MatrixR> GCOL(gcol.data.data(), c * kh * kw, ho * wo);
          GCOL.noalias() = K.transpose() * GYn;
          col2im_2d(gcol, ni, c, h, w, kh, kw, pad, ho, wo, *gx);
        }
      }
    };
    return id;
  }

  int relu(int x) {
    const Tensor& xv = value(x);
    Tensor y = xv;
    for (Real& v : y.data) v = v > Real(0) ? v : Real(0);
    int id = add_node(std::move(y), {});
    nodes_[id].backward_fn = [this, id, x]() {
      Tensor* gx = maybe_grad(x);
      if (!gx) return;
      const Tensor& xv = nodes_[x].value;
      const Tensor& gy = nodes_[id].grad;
      for (size_t i = 0; i < gy.numel(); ++i)
        if (xv.data[i] > Real(0)) gx->data[i] += gy.data[i];
    };
    return id;
  }

  // Average pooling to a fixed output grid; window sizes must divide evenly.
  int avg_pool2d(int x, int oh, int ow) {
    const Tensor& xv = value(x);
    if (xv.rank() != 4)
      throw ContractError("avg_pool2d: input must be (N,C,H,W), got " + xv.shape_str());
    int n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
    if (oh < 1 || ow < 1 || h % oh != 0 || w % ow != 0)
      throw ContractError("avg_pool2d: output " + std::to_string(oh) + "x" + std::to_string(ow) +
                          " does not tile input " + xv.shape_str());
    int wh = h / oh, ww = w / ow;
    Real inv = Real(1) / static_cast<Real>(wh * ww);

    Tensor y({n, c, oh, ow});
    for (int ni = 0; ni < n; ++ni) {
      for (int ci = 0; ci < c; ++ci) {
        const Real* src = &xv.data[(static_cast<size_t>(ni) * c + ci) * h * w];
        Real* dst = &y.data[(static_cast<size_t>(ni) * c + ci) * oh * ow];
        for (int i = 0; i < oh; ++i) {
          for (int j = 0; j < ow; ++j) {
            Real sum = 0;
            for (int a = 0; a < wh; ++a)
              for (int bcol = 0; bcol < ww; ++bcol)
                sum += src[(i * wh + a) * w + j * ww + bcol];
            dst[i * ow + j] = sum * inv;
          }
        }
      }
    }
    int id = add_node(std::move(y), {});
    nodes_[id].backward_fn = [this, id, x, n, c, h, w, oh, ow, wh, ww, inv]() {
      Tensor* gx = maybe_grad(x);
      if (!gx) return;
      const Tensor& gy = nodes_[id].grad;
      for (int ni = 0; ni < n; ++ni) {
        for (int ci = 0; ci < c; ++ci) {
          const Real* src = &gy.data[(static_cast<size_t>(ni) * c + ci) * oh * ow];
          Real* dst = &gx->data[(static_cast<size_t>(ni) * c + ci) * h * w];
          for (int i = 0; i < oh; ++i) {
            for (int j = 0; j < ow; ++j) {
              Real g = src[i * ow + j] * inv;
              for (int a = 0; a < wh; ++a)
                for (int bcol = 0; bcol < ww; ++bcol)
                  dst[(i * wh + a) * w + j * ww + bcol] += g;
            }
          }
        }
      }
    };
    return id;
  }

  // (N, ...) -> (N, D); the underlying layout is already flat.
  int flatten2(int x) {
    const Tensor& xv = value(x);
    if (xv.rank() < 2) throw ContractError("flatten2: need a batch dimension");
    int n = xv.dim(0);
    int d = static_cast<int>(xv.numel()) / n;
    Tensor y = xv;
    y.shape = {n, d};
    int id = add_node(std::move(y), {});
    nodes_[id].backward_fn = [this, id, x]() {
      Tensor* gx = maybe_grad(x);
      if (!gx) return;
      const Tensor& gy = nodes_[id].grad;
      for (size_t i = 0; i < gy.numel(); ++i) gx->data[i] += gy.data[i];
    };
    return id;
  }

  // Feature-axis concatenation of (N, D_i) tensors.
  int concat(const std::vector<int>& xs) {
    if (xs.empty()) throw ContractError("concat: no inputs");
    int n = value(xs[0]).dim(0);
    int total = 0;
    for (int x : xs) {
      const Tensor& xv = value(x);
      if (xv.rank() != 2 || xv.dim(0) != n)
        throw ContractError("concat: all inputs must be (N,D) with matching N");
      total += xv.dim(1);
    }
    Tensor y({n, total});
    int off = 0;
    for (int x : xs) {
      const Tensor& xv = value(x);
      int d = xv.dim(1);
      for (int ni = 0; ni < n; ++ni)
        std::copy_n(&xv.data[static_cast<size_t>(ni) * d], d,
                    &y.data[static_cast<size_t>(ni) * total + off]);
      off += d;
    }
    int id = add_node(std::move(y), {});
    std::vector<int> inputs = xs;
    nodes_[id].backward_fn = [this, id, inputs, n, total]() {
      const Tensor& gy = nodes_[id].grad;
      int off = 0;
      for (int x : inputs) {
        int d = nodes_[x].value.dim(1);
        if (Tensor* gx = maybe_grad(x)) {
          for (int ni = 0; ni < n; ++ni) {
            const Real* src = &gy.data[static_cast<size_t>(ni) * total + off];
            Real* dst = &gx->data[static_cast<size_t>(ni) * d];
            for (int j = 0; j < d; ++j) dst[j] += src[j];
          }
        }
        off += d;
      }
    };
    return id;
  }

  // Row-wise log softmax on (N, D).
  int log_softmax(int x) {
    const Tensor& xv = value(x);
    if (xv.rank() != 2)
      throw ContractError("log_softmax: input must be (N,D), got " + xv.shape_str());
    int n = xv.dim(0), d = xv.dim(1);
    Tensor y({n, d});
    for (int ni = 0; ni < n; ++ni) {
      const Real* src = &xv.data[static_cast<size_t>(ni) * d];
      Real* dst = &y.data[static_cast<size_t>(ni) * d];
      Real m = src[0];
      for (int j = 1; j < d; ++j) m = std::max(m, src[j]);
      Real lse = 0;
      for (int j = 0; j < d; ++j) lse += std::exp(src[j] - m);
      lse = std::log(lse) + m;
      for (int j = 0; j < d; ++j) dst[j] = src[j] - lse;
    }
    int id = add_node(std::move(y), {});
    nodes_[id].backward_fn = [this, id, x, n, d]() {
      Tensor* gx = maybe_grad(x);
      if (!gx) return;
      const Tensor& gy = nodes_[id].grad;
      const Tensor& yv = nodes_[id].value;
      for (int ni = 0; ni < n; ++ni) {
        const Real* g = &gy.data[static_cast<size_t>(ni) * d];
        const Real* lp = &yv.data[static_cast<size_t>(ni) * d];
        Real* out = &gx->data[static_cast<size_t>(ni) * d];
        Real gsum = 0;
        for (int j = 0; j < d; ++j) gsum += g[j];
        for (int j = 0; j < d; ++j) out[j] += g[j] - std::exp(lp[j]) * gsum;
      }
    };
    return id;
  }

  // Accumulates an upstream gradient at a node before the backward sweep.
  void seed(int id, const Tensor& g) {
    if (swept_) throw ContractError("graph: backward already ran; record a new forward pass");
    Node& node = nodes_[check_id(id)];
    if (!node.value.same_shape(g))
      throw ContractError("graph: seed shape " + g.shape_str() + " does not match node " +
                          node.value.shape_str());
    Tensor& grad = ensure_grad(id);
    for (size_t i = 0; i < g.numel(); ++i) grad.data[i] += g.data[i];
  }

  // One reverse sweep over everything recorded so far. Single use.
  void run_backward() {
    if (swept_) throw ContractError("graph: backward already ran; record a new forward pass");
    swept_ = true;
    for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
      Node& node = nodes_[static_cast<size_t>(i)];
      if (node.backward_fn && !node.grad.empty()) node.backward_fn();
    }
  }

  void backward(int id, const Tensor& g) {
    seed(id, g);
    run_backward();
  }

  size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;  // empty until seeded or touched by a consumer's backward
    std::function<void()> backward_fn;
  };

  int add_node(Tensor value, std::function<void()> fn) {
    nodes_.push_back(Node{std::move(value), Tensor(), std::move(fn)});
    return static_cast<int>(nodes_.size()) - 1;
  }

  int check_id(int id) const {
    if (id < 0 || static_cast<size_t>(id) >= nodes_.size())
      throw ContractError("graph: bad node id " + std::to_string(id));
    return id;
  }

  Tensor& ensure_grad(int id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.empty() && n.value.numel() > 0) n.grad = Tensor(n.value.shape);
    return n.grad;
  }

  // Gradient buffer for an input node, or null for leaves (their gradients
  // are never consumed, so the work and memory are skipped).
  Tensor* maybe_grad(int id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.backward_fn) return nullptr;
    return &ensure_grad(id);
  }

  static void im2col_2d(const Tensor& x, int ni, int c, int h, int w, int kh, int kw, int pad,
                        int ho, int wo, Tensor& col) {
    for (int ci = 0; ci < c; ++ci) {
      const Real* src = &x.data[(static_cast<size_t>(ni) * c + ci) * h * w];
      for (int a = 0; a < kh; ++a) {
        for (int bcol = 0; bcol < kw; ++bcol) {
          Real* dst = &col.data[((static_cast<size_t>(ci) * kh + a) * kw + bcol) * (ho * wo)];
          for (int i = 0; i < ho; ++i) {
            int yi = i + a - pad;
            if (yi < 0 || yi >= h) {
              std::fill_n(dst + static_cast<size_t>(i) * wo, wo, Real(0));
              continue;
            }
            for (int j = 0; j < wo; ++j) {
              int xj = j + bcol - pad;
              dst[static_cast<size_t>(i) * wo + j] =
                  (xj >= 0 && xj < w) ? src[yi * w + xj] : Real(0);
            }
          }
        }
      }
    }
  }

  static void col2im_2d(const Tensor& gcol, int ni, int c, int h, int w, int kh, int kw, int pad,
                        int ho, int wo, Tensor& gx) {
    for (int ci = 0; ci < c; ++ci) {
      Real* dst = &gx.data[(static_cast<size_t>(ni) * c + ci) * h * w];
      for (int a = 0; a < kh; ++a) {
        for (int bcol = 0; bcol < kw; ++bcol) {
          const Real* src = &gcol.data[((static_cast<size_t>(ci) * kh + a) * kw + bcol) * (ho * wo)];
          for (int i = 0; i < ho; ++i) {
            int yi = i + a - pad;
            if (yi < 0 || yi >= h) continue;
            for (int j = 0; j < wo; ++j) {
              int xj = j + bcol - pad;
              if (xj >= 0 && xj < w) dst[yi * w + xj] += src[static_cast<size_t>(i) * wo + j];
            }
          }
        }
      }
    }
  }

  std::deque<Node> nodes_;
  bool swept_ = false;
};

}  // namespace locnav
