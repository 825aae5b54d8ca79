#include "cetx/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

namespace cetx {

std::string shape_str(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

namespace {

template <typename T>
void require_rank(const Tensor<T>& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got shape " +
                     shape_str(t.shape()));
  }
}

template <typename T>
void add_into(Tensor<T>* dst, const Tensor<T>& src) {
  if (dst == nullptr) return;
  for (std::size_t i = 0; i < src.size(); ++i) (*dst)[i] += src[i];
}

}  // namespace

template <typename T>
Var<T> conv1d(Var<T> x, Var<T> w, Var<T> b) {
  const auto& xv = x.value();
  const auto& wv = w.value();
  const auto& bv = b.value();
  require_rank(xv, 2, "conv1d input");
  require_rank(wv, 3, "conv1d weights");
  require_rank(bv, 1, "conv1d bias");
  const std::size_t cin = xv.dim(0), len = xv.dim(1);
  const std::size_t cout = wv.dim(0), k = wv.dim(2);
  if (wv.dim(1) != cin) {
    throw ShapeError("conv1d: input has " + std::to_string(cin) + " channels, weights expect " +
                     std::to_string(wv.dim(1)));
  }
  if (bv.dim(0) != cout) throw ShapeError("conv1d: bias length does not match output channels");
  if (k == 0) throw ShapeError("conv1d: kernel size must be >= 1");
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
  const auto L = static_cast<std::ptrdiff_t>(len);

  Tensor<T> out({cout, len});
  for (std::size_t co = 0; co < cout; ++co) {
    T* o = &out[co * len];
    std::fill(o, o + len, bv[co]);
    for (std::size_t ci = 0; ci < cin; ++ci) {
      const T* xi = &xv[ci * len];
      for (std::size_t kk = 0; kk < k; ++kk) {
        const T wk = wv[(co * cin + ci) * k + kk];
        const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(kk) - pad;
        const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -shift);
        const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(L, L - shift);
        for (std::ptrdiff_t i = lo; i < hi; ++i) o[i] += wk * xi[i + shift];
      }
    }
  }

  auto* tape = x.tape;
  return tape->push(std::move(out), {x, w, b}, [x, w, b, cin, cout, k, pad, L, len](Tape<T>& tp, const Tensor<T>& g) {
    const auto& xv = tp.value(x);
    const auto& wv = tp.value(w);
    auto* gx = tp.grad_sink(x);
    auto* gw = tp.grad_sink(w);
    auto* gb = tp.grad_sink(b);
    for (std::size_t co = 0; co < cout; ++co) {
      const T* go = &g[co * len];
      if (gb != nullptr) {
        T s{0};
        for (std::size_t i = 0; i < len; ++i) s += go[i];
        (*gb)[co] += s;
      }
      for (std::size_t ci = 0; ci < cin; ++ci) {
        const T* xi = &xv[ci * len];
        for (std::size_t kk = 0; kk < k; ++kk) {
          const std::size_t widx = (co * cin + ci) * k + kk;
          const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(kk) - pad;
          const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -shift);
          const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(L, L - shift);
          if (gw != nullptr) {
            T s{0};
            for (std::ptrdiff_t i = lo; i < hi; ++i) s += go[i] * xi[i + shift];
            (*gw)[widx] += s;
          }
          if (gx != nullptr) {
            const T wk = wv[widx];
            T* gxi = &(*gx)[ci * len];
            for (std::ptrdiff_t i = lo; i < hi; ++i) gxi[i + shift] += wk * go[i];
          }
        }
      }
    }
  });
}

template <typename T>
Var<T> max_pool1d(Var<T> x, std::size_t pool, std::size_t stride) {
  const auto& xv = x.value();
  require_rank(xv, 2, "max_pool1d input");
  const std::size_t c = xv.dim(0), len = xv.dim(1);
  if (len == 0) throw ShapeError("max_pool1d: input length is zero");
  if (pool == 0 || stride == 0) throw ShapeError("max_pool1d: pool and stride must be >= 1");
  const std::size_t out_len = (len + stride - 1) / stride;
  Tensor<T> out({c, out_len});
  auto argmax = std::make_shared<std::vector<std::size_t>>(c * out_len);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t o = 0; o < out_len; ++o) {
      const std::size_t start = o * stride;
      const std::size_t stop = std::min(start + pool, len);
      std::size_t best = start;
      for (std::size_t i = start + 1; i < stop; ++i) {
        if (xv[ch * len + i] > xv[ch * len + best]) best = i;
      }
      out[ch * out_len + o] = xv[ch * len + best];
      (*argmax)[ch * out_len + o] = ch * len + best;
    }
  }
  return x.tape->push(std::move(out), {x}, [x, argmax](Tape<T>& tp, const Tensor<T>& g) {
    auto* gx = tp.grad_sink(x);
    if (gx == nullptr) return;
    for (std::size_t i = 0; i < g.size(); ++i) (*gx)[(*argmax)[i]] += g[i];
  });
}

template <typename T>
Var<T> global_avg_pool(Var<T> x) {
  const auto& xv = x.value();
  require_rank(xv, 2, "global_avg_pool input");
  const std::size_t c = xv.dim(0), len = xv.dim(1);
  if (len == 0) throw ShapeError("global_avg_pool: input length is zero");
  Tensor<T> out({c});
  for (std::size_t ch = 0; ch < c; ++ch) {
    double s = 0;
    for (std::size_t i = 0; i < len; ++i) s += xv[ch * len + i];
    out[ch] = static_cast<T>(s / static_cast<double>(len));
  }
  return x.tape->push(std::move(out), {x}, [x, c, len](Tape<T>& tp, const Tensor<T>& g) {
    auto* gx = tp.grad_sink(x);
    if (gx == nullptr) return;
    const T inv = T{1} / static_cast<T>(len);
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t i = 0; i < len; ++i) (*gx)[ch * len + i] += g[ch] * inv;
    }
  });
}

template <typename T>
Var<T> dense(Var<T> x, Var<T> w, Var<T> b) {
  const auto& xv = x.value();
  const auto& wv = w.value();
  const auto& bv = b.value();
  require_rank(xv, 1, "dense input");
  require_rank(wv, 2, "dense weights");
  require_rank(bv, 1, "dense bias");
  const std::size_t din = xv.dim(0), dout = wv.dim(0);
  if (wv.dim(1) != din) {
    throw ShapeError("dense: input length " + std::to_string(din) + " does not match weights " +
                     shape_str(wv.shape()));
  }
  if (bv.dim(0) != dout) throw ShapeError("dense: bias length does not match output size");
  Tensor<T> out({dout});
  for (std::size_t o = 0; o < dout; ++o) {
    T s = bv[o];
    const T* row = &wv[o * din];
    for (std::size_t i = 0; i < din; ++i) s += row[i] * xv[i];
    out[o] = s;
  }
  return x.tape->push(std::move(out), {x, w, b}, [x, w, b, din, dout](Tape<T>& tp, const Tensor<T>& g) {
    const auto& xv = tp.value(x);
    const auto& wv = tp.value(w);
    auto* gx = tp.grad_sink(x);
    auto* gw = tp.grad_sink(w);
    auto* gb = tp.grad_sink(b);
    for (std::size_t o = 0; o < dout; ++o) {
      if (gb != nullptr) (*gb)[o] += g[o];
      if (gw != nullptr) {
        for (std::size_t i = 0; i < din; ++i) (*gw)[o * din + i] += g[o] * xv[i];
      }
      if (gx != nullptr) {
        for (std::size_t i = 0; i < din; ++i) (*gx)[i] += g[o] * wv[o * din + i];
      }
    }
  });
}

template <typename T>
Var<T> prelu(Var<T> x, Var<T> slopes) {
  const auto& xv = x.value();
  const auto& av = slopes.value();
  if (xv.rank() == 0) throw ShapeError("prelu: scalar input");
  const std::size_t c = xv.dim(0);
  const std::size_t inner = xv.size() / std::max<std::size_t>(c, 1);
  if (av.size() != c) {
    throw ShapeError("prelu: " + std::to_string(av.size()) + " slopes for " + std::to_string(c) +
                     " channels");
  }
  Tensor<T> out(xv.shape());
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < inner; ++i) {
      const T v = xv[ch * inner + i];
      out[ch * inner + i] = v >= T{0} ? v : av[ch] * v;
    }
  }
  return x.tape->push(std::move(out), {x, slopes}, [x, slopes, c, inner](Tape<T>& tp, const Tensor<T>& g) {
    const auto& xv = tp.value(x);
    const auto& av = tp.value(slopes);
    auto* gx = tp.grad_sink(x);
    auto* ga = tp.grad_sink(slopes);
    for (std::size_t ch = 0; ch < c; ++ch) {
      T sa{0};
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t j = ch * inner + i;
        const T v = xv[j];
        if (v >= T{0}) {
          if (gx != nullptr) (*gx)[j] += g[j];
        } else {
          if (gx != nullptr) (*gx)[j] += g[j] * av[ch];
          sa += g[j] * v;
        }
      }
      if (ga != nullptr) (*ga)[ch] += sa;
    }
  });
}

template <typename T>
Var<T> normalize(Var<T> x, NormMode mode, Var<T> gain, Var<T> shift, double eps) {
  const auto& xv = x.value();
  require_rank(xv, 2, "normalize input");
  const std::size_t c = xv.dim(0), len = xv.dim(1);
  if (gain.value().size() != c || shift.value().size() != c) {
    throw ShapeError("normalize: gain/shift must have one entry per channel");
  }
  if (len == 0) throw ShapeError("normalize: input length is zero");
  // Groups of contiguous elements standardized together.
  const std::size_t groups = mode == NormMode::instance ? c : 1;
  const std::size_t group_len = xv.size() / groups;

  auto xhat = std::make_shared<Tensor<T>>(xv.shape());
  auto inv_std = std::make_shared<std::vector<double>>(groups);
  for (std::size_t gi = 0; gi < groups; ++gi) {
    const T* src = &xv[gi * group_len];
    double mean = 0;
    for (std::size_t i = 0; i < group_len; ++i) mean += src[i];
    mean /= static_cast<double>(group_len);
    double var = 0;
    for (std::size_t i = 0; i < group_len; ++i) {
      const double d = src[i] - mean;
      var += d * d;
    }
    var /= static_cast<double>(group_len);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[gi] = is;
    for (std::size_t i = 0; i < group_len; ++i) {
      (*xhat)[gi * group_len + i] = static_cast<T>((src[i] - mean) * is);
    }
  }
  const auto& gv = gain.value();
  const auto& sv = shift.value();
  Tensor<T> out(xv.shape());
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < len; ++i) out[ch * len + i] = gv[ch] * (*xhat)[ch * len + i] + sv[ch];
  }
  return x.tape->push(
      std::move(out), {x, gain, shift},
      [x, gain, shift, xhat, inv_std, c, len, groups, group_len](Tape<T>& tp, const Tensor<T>& g) {
        const auto& gv = tp.value(gain);
        auto* gx = tp.grad_sink(x);
        auto* gg = tp.grad_sink(gain);
        auto* gs = tp.grad_sink(shift);
        for (std::size_t ch = 0; ch < c; ++ch) {
          T sg{0}, ss{0};
          for (std::size_t i = 0; i < len; ++i) {
            sg += g[ch * len + i] * (*xhat)[ch * len + i];
            ss += g[ch * len + i];
          }
          if (gg != nullptr) (*gg)[ch] += sg;
          if (gs != nullptr) (*gs)[ch] += ss;
        }
        if (gx == nullptr) return;
        for (std::size_t gi = 0; gi < groups; ++gi) {
          double mean_dy = 0, mean_dy_xhat = 0;
          for (std::size_t i = 0; i < group_len; ++i) {
            const std::size_t j = gi * group_len + i;
            const double dy = static_cast<double>(g[j]) * gv[j / len];
            mean_dy += dy;
            mean_dy_xhat += dy * (*xhat)[j];
          }
          mean_dy /= static_cast<double>(group_len);
          mean_dy_xhat /= static_cast<double>(group_len);
          const double is = (*inv_std)[gi];
          for (std::size_t i = 0; i < group_len; ++i) {
            const std::size_t j = gi * group_len + i;
            const double dy = static_cast<double>(g[j]) * gv[j / len];
            (*gx)[j] += static_cast<T>(is * (dy - mean_dy - (*xhat)[j] * mean_dy_xhat));
          }
        }
      });
}

template <typename T>
Var<T> dropout(Var<T> x, double rate, bool training, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw Error("dropout: rate must be in [0, 1)");
  if (!training || rate == 0.0) return x;
  const auto& xv = x.value();
  auto mask = std::make_shared<Tensor<T>>(xv.shape());
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    (*mask)[i] = u(rng) < rate ? T{0} : keep_scale;
    out[i] = xv[i] * (*mask)[i];
  }
  return x.tape->push(std::move(out), {x}, [x, mask](Tape<T>& tp, const Tensor<T>& g) {
    auto* gx = tp.grad_sink(x);
    if (gx == nullptr) return;
    for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i] * (*mask)[i];
  });
}

template <typename T>
Tensor<T> softmax_values(const Tensor<T>& logits) {
  Tensor<T> p(logits.shape());
  if (logits.empty()) return p;
  const T mx = *std::max_element(logits.data().begin(), logits.data().end());
  double s = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double e = std::exp(static_cast<double>(logits[i]) - mx);
    p[i] = static_cast<T>(e);
    s += e;
  }
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = static_cast<T>(static_cast<double>(p[i]) / s);
  return p;
}

namespace {

template <typename T>
Tensor<T> log_softmax_values(const Tensor<T>& logits) {
  Tensor<T> out(logits.shape());
  const T mx = *std::max_element(logits.data().begin(), logits.data().end());
  double s = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) s += std::exp(static_cast<double>(logits[i]) - mx);
  const double lse = std::log(s) + mx;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = static_cast<T>(static_cast<double>(logits[i]) - lse);
  }
  return out;
}

}  // namespace

template <typename T>
Var<T> softmax(Var<T> logits) {
  require_rank(logits.value(), 1, "softmax input");
  auto p = softmax_values(logits.value());
  auto saved = std::make_shared<Tensor<T>>(p);
  return logits.tape->push(std::move(p), {logits}, [logits, saved](Tape<T>& tp, const Tensor<T>& g) {
    auto* gx = tp.grad_sink(logits);
    if (gx == nullptr) return;
    double dot = 0;
    for (std::size_t i = 0; i < g.size(); ++i) dot += static_cast<double>(g[i]) * (*saved)[i];
    for (std::size_t i = 0; i < g.size(); ++i) {
      (*gx)[i] += static_cast<T>((*saved)[i] * (g[i] - dot));
    }
  });
}

template <typename T>
Var<T> log_softmax(Var<T> logits) {
  require_rank(logits.value(), 1, "log_softmax input");
  auto out = log_softmax_values(logits.value());
  auto p = std::make_shared<Tensor<T>>(softmax_values(logits.value()));
  return logits.tape->push(std::move(out), {logits}, [logits, p](Tape<T>& tp, const Tensor<T>& g) {
    auto* gx = tp.grad_sink(logits);
    if (gx == nullptr) return;
    double gs = 0;
    for (std::size_t i = 0; i < g.size(); ++i) gs += g[i];
    for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += static_cast<T>(g[i] - (*p)[i] * gs);
  });
}

template <typename T>
Var<T> cross_entropy_with_logits(Var<T> logits, const Tensor<T>& target) {
  const auto& lv = logits.value();
  require_rank(lv, 1, "cross_entropy logits");
  if (target.size() != lv.size()) throw ShapeError("cross_entropy: target length does not match logits");
  const auto logp = log_softmax_values(lv);
  double loss = 0, tsum = 0;
  for (std::size_t i = 0; i < lv.size(); ++i) {
    if (target[i] != T{0}) loss -= static_cast<double>(target[i]) * logp[i];
    tsum += target[i];
  }
  auto p = std::make_shared<Tensor<T>>(softmax_values(lv));
  auto t = std::make_shared<Tensor<T>>(target);
  return logits.tape->push(Tensor<T>::scalar(static_cast<T>(loss)), {logits},
                           [logits, p, t, tsum](Tape<T>& tp, const Tensor<T>& g) {
                             auto* gx = tp.grad_sink(logits);
                             if (gx == nullptr) return;
                             const T go = g[0];
                             for (std::size_t i = 0; i < p->size(); ++i) {
                               (*gx)[i] += go * static_cast<T>((*p)[i] * tsum - (*t)[i]);
                             }
                           });
}

template <typename T>
Var<T> cross_entropy_with_label(Var<T> logits, std::size_t label) {
  const std::size_t k = logits.value().size();
  if (label >= k) {
    throw ShapeError("cross_entropy: label " + std::to_string(label) + " out of range for " +
                     std::to_string(k) + " classes");
  }
  Tensor<T> target({k});
  target[label] = T{1};
  return cross_entropy_with_logits(logits, target);
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.shape() != bv.shape()) {
    throw ShapeError("add: shape " + shape_str(av.shape()) + " vs " + shape_str(bv.shape()));
  }
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
  return a.tape->push(std::move(out), {a, b}, [a, b](Tape<T>& tp, const Tensor<T>& g) {
    add_into(tp.grad_sink(a), g);
    add_into(tp.grad_sink(b), g);
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.shape() != bv.shape()) {
    throw ShapeError("mul: shape " + shape_str(av.shape()) + " vs " + shape_str(bv.shape()));
  }
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
  return a.tape->push(std::move(out), {a, b}, [a, b](Tape<T>& tp, const Tensor<T>& g) {
    const auto& av = tp.value(a);
    const auto& bv = tp.value(b);
    if (auto* ga = tp.grad_sink(a)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * bv[i];
    }
    if (auto* gb = tp.grad_sink(b)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * av[i];
    }
  });
}

template <typename T>
Var<T> scale(Var<T> a, T factor) {
  const auto& av = a.value();
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * factor;
  return a.tape->push(std::move(out), {a}, [a, factor](Tape<T>& tp, const Tensor<T>& g) {
    if (auto* ga = tp.grad_sink(a)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * factor;
    }
  });
}

template <typename T>
Var<T> sum(Var<T> a) {
  const auto& av = a.value();
  double s = 0;
  for (auto v : av.data()) s += v;
  return a.tape->push(Tensor<T>::scalar(static_cast<T>(s)), {a}, [a](Tape<T>& tp, const Tensor<T>& g) {
    if (auto* ga = tp.grad_sink(a)) {
      for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += g[0];
    }
  });
}

template <typename T>
Var<T> sum_squares(Var<T> a) {
  const auto& av = a.value();
  double s = 0;
  for (auto v : av.data()) s += static_cast<double>(v) * v;
  return a.tape->push(Tensor<T>::scalar(static_cast<T>(s)), {a}, [a](Tape<T>& tp, const Tensor<T>& g) {
    const auto& av = tp.value(a);
    if (auto* ga = tp.grad_sink(a)) {
      for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += T{2} * av[i] * g[0];
    }
  });
}

#define CETX_INSTANTIATE_OPS(T)                                                        \
  template Var<T> conv1d(Var<T>, Var<T>, Var<T>);                                      \
  template Var<T> max_pool1d(Var<T>, std::size_t, std::size_t);                        \
  template Var<T> global_avg_pool(Var<T>);                                             \
  template Var<T> dense(Var<T>, Var<T>, Var<T>);                                       \
  template Var<T> prelu(Var<T>, Var<T>);                                               \
  template Var<T> normalize(Var<T>, NormMode, Var<T>, Var<T>, double);                 \
  template Var<T> dropout(Var<T>, double, bool, Rng&);                                 \
  template Var<T> softmax(Var<T>);                                                     \
  template Var<T> log_softmax(Var<T>);                                                 \
  template Var<T> cross_entropy_with_logits(Var<T>, const Tensor<T>&);                 \
  template Var<T> cross_entropy_with_label(Var<T>, std::size_t);                       \
  template Var<T> add(Var<T>, Var<T>);                                                 \
  template Var<T> mul(Var<T>, Var<T>);                                                 \
  template Var<T> scale(Var<T>, T);                                                    \
  template Var<T> sum(Var<T>);                                                         \
  template Var<T> sum_squares(Var<T>);                                                 \
  template Tensor<T> softmax_values(const Tensor<T>&);

CETX_INSTANTIATE_OPS(float)
CETX_INSTANTIATE_OPS(double)

}  // namespace cetx
