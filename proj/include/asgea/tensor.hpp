#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <limits>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "asgea/types.hpp"

namespace asgea::nn {

// Dense row-major 2-D tensor. Vectors are 1×d or n×1.
template <typename T>
struct Tensor {
  int rows = 0, cols = 0;
  std::vector<T> v;

  Tensor() = default;
  Tensor(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * c, T(0)) {}
  Tensor(int r, int c, std::vector<T> data) : rows(r), cols(c), v(std::move(data)) {
    assert(v.size() == static_cast<size_t>(r) * c);
  }

  size_t size() const { return v.size(); }
  T& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
  T at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
};

// Reverse-mode tape. Nodes are created by the op builders below; backward()
// walks the tape once in reverse. One tape per forward pass, single thread.
template <typename T>
class Tape {
 public:
  using Ref = int32_t;

  struct Node {
    int rows, cols;
    std::vector<T> val;
    std::vector<T> grad;
    std::function<void(Tape&)> back;  // null for leaves/constants
  };

  std::vector<Node> nodes;

  Ref leaf(const Tensor<T>& t) { return push(t.rows, t.cols, t.v); }
  Ref zeros(int r, int c) { return push(r, c, std::vector<T>(static_cast<size_t>(r) * c, T(0))); }

  int rows(Ref a) const { return nodes[a].rows; }
  int cols(Ref a) const { return nodes[a].cols; }
  std::vector<T>& val(Ref a) { return nodes[a].val; }
  const std::vector<T>& val(Ref a) const { return nodes[a].val; }
  std::vector<T>& grad(Ref a) { return nodes[a].grad; }
  T scalar(Ref a) const {
    assert(nodes[a].val.size() == 1);
    return nodes[a].val[0];
  }

  Ref add(Ref a, Ref b) {
    check_same_shape(a, b);
    auto out = clone_shape(a);
    for (size_t i = 0; i < val(a).size(); ++i) val(out)[i] = val(a)[i] + val(b)[i];
    nodes[out].back = [a, b, out](Tape& t) {
      for (size_t i = 0; i < t.grad(out).size(); ++i) {
        t.grad(a)[i] += t.grad(out)[i];
        t.grad(b)[i] += t.grad(out)[i];
      }
    };
    return out;
  }

  Ref sub(Ref a, Ref b) {
    check_same_shape(a, b);
    auto out = clone_shape(a);
    for (size_t i = 0; i < val(a).size(); ++i) val(out)[i] = val(a)[i] - val(b)[i];
    nodes[out].back = [a, b, out](Tape& t) {
      for (size_t i = 0; i < t.grad(out).size(); ++i) {
        t.grad(a)[i] += t.grad(out)[i];
        t.grad(b)[i] -= t.grad(out)[i];
      }
    };
    return out;
  }

  Ref mul(Ref a, Ref b) {  // elementwise
    check_same_shape(a, b);
    auto out = clone_shape(a);
    for (size_t i = 0; i < val(a).size(); ++i) val(out)[i] = val(a)[i] * val(b)[i];
    nodes[out].back = [a, b, out](Tape& t) {
      for (size_t i = 0; i < t.grad(out).size(); ++i) {
        t.grad(a)[i] += t.grad(out)[i] * t.val(b)[i];
        t.grad(b)[i] += t.grad(out)[i] * t.val(a)[i];
      }
    };
    return out;
  }

  Ref scale(Ref a, T c) {
    auto out = clone_shape(a);
    for (size_t i = 0; i < val(a).size(); ++i) val(out)[i] = val(a)[i] * c;
    nodes[out].back = [a, c, out](Tape& t) {
      for (size_t i = 0; i < t.grad(out).size(); ++i) t.grad(a)[i] += t.grad(out)[i] * c;
    };
    return out;
  }

  Ref one_minus(Ref a) {
    auto out = clone_shape(a);
    for (size_t i = 0; i < val(a).size(); ++i) val(out)[i] = T(1) - val(a)[i];
    nodes[out].back = [a, out](Tape& t) {
      for (size_t i = 0; i < t.grad(out).size(); ++i) t.grad(a)[i] -= t.grad(out)[i];
    };
    return out;
  }

  // (n×d) + (1×d), bias broadcast over rows.
  Ref add_bias(Ref a, Ref bias) {
    if (cols(a) != cols(bias) || rows(bias) != 1) throw ConfigError("add_bias: shape mismatch");
    auto out = clone_shape(a);
    int n = rows(a), d = cols(a);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j)
        val(out)[idx(i, j, d)] = val(a)[idx(i, j, d)] + val(bias)[j];
    nodes[out].back = [a, bias, out, n, d](Tape& t) {
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) {
          t.grad(a)[idx(i, j, d)] += t.grad(out)[idx(i, j, d)];
          t.grad(bias)[j] += t.grad(out)[idx(i, j, d)];
        }
    };
    return out;
  }

  // (n×1) ⊙ (n×d): per-row scalar gate.
  Ref colmul(Ref gate, Ref a) {
    if (rows(gate) != rows(a) || cols(gate) != 1) throw ConfigError("colmul: shape mismatch");
    auto out = clone_shape(a);
    int n = rows(a), d = cols(a);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j)
        val(out)[idx(i, j, d)] = val(gate)[i] * val(a)[idx(i, j, d)];
    nodes[out].back = [gate, a, out, n, d](Tape& t) {
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) {
          t.grad(gate)[i] += t.grad(out)[idx(i, j, d)] * t.val(a)[idx(i, j, d)];
          t.grad(a)[idx(i, j, d)] += t.grad(out)[idx(i, j, d)] * t.val(gate)[i];
        }
    };
    return out;
  }

  Ref matmul(Ref a, Ref b) {
    if (cols(a) != rows(b)) throw ConfigError("matmul: inner dimension mismatch");
    int n = rows(a), k = cols(a), m = cols(b);
    Ref out = push(n, m, std::vector<T>(static_cast<size_t>(n) * m, T(0)));
    for (int i = 0; i < n; ++i)
      for (int p = 0; p < k; ++p) {
        T av = val(a)[idx(i, p, k)];
        if (av == T(0)) continue;
        for (int j = 0; j < m; ++j) val(out)[idx(i, j, m)] += av * val(b)[idx(p, j, m)];
      }
    nodes[out].back = [a, b, out, n, k, m](Tape& t) {
      // dA = dOut · Bᵀ ; dB = Aᵀ · dOut
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) {
          T go = t.grad(out)[idx(i, j, m)];
          if (go == T(0)) continue;
          for (int p = 0; p < k; ++p) {
            t.grad(a)[idx(i, p, k)] += go * t.val(b)[idx(p, j, m)];
            t.grad(b)[idx(p, j, m)] += go * t.val(a)[idx(i, p, k)];
          }
        }
    };
    return out;
  }

  Ref concat_cols(std::span<const Ref> parts) {
    if (parts.empty()) throw ConfigError("concat_cols: empty input");
    int n = rows(parts[0]);
    int total = 0;
    for (Ref p : parts) {
      if (rows(p) != n) throw ConfigError("concat_cols: row mismatch");
      total += cols(p);
    }
    Ref out = push(n, total, std::vector<T>(static_cast<size_t>(n) * total, T(0)));
    std::vector<Ref> ps(parts.begin(), parts.end());
    int off = 0;
    for (Ref p : ps) {
      int d = cols(p);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j)
          val(out)[idx(i, off + j, total)] = val(p)[idx(i, j, d)];
      off += d;
    }
    nodes[out].back = [ps, out, n, total](Tape& t) {
      int off2 = 0;
      for (Ref p : ps) {
        int d = t.cols(p);
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < d; ++j)
            t.grad(p)[idx(i, j, d)] += t.grad(out)[idx(i, off2 + j, total)];
        off2 += d;
      }
    };
    return out;
  }

  Ref gather_rows(Ref a, std::vector<int32_t> rows_idx) {
    int d = cols(a);
    int n = static_cast<int>(rows_idx.size());
    Ref out = push(n, d, std::vector<T>(static_cast<size_t>(n) * d, T(0)));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j)
        val(out)[idx(i, j, d)] = val(a)[idx(rows_idx[i], j, d)];
    nodes[out].back = [a, out, ri = std::move(rows_idx), d](Tape& t) {
      for (size_t i = 0; i < ri.size(); ++i)
        for (int j = 0; j < d; ++j)
          t.grad(a)[idx(ri[i], j, d)] += t.grad(out)[idx(static_cast<int>(i), j, d)];
    };
    return out;
  }

  Ref scatter_add_rows(Ref a, std::vector<int32_t> rows_idx, int out_rows) {
    if (static_cast<int>(rows_idx.size()) != rows(a))
      throw ConfigError("scatter_add_rows: index count mismatch");
    int d = cols(a);
    Ref out = push(out_rows, d, std::vector<T>(static_cast<size_t>(out_rows) * d, T(0)));
    for (size_t i = 0; i < rows_idx.size(); ++i)
      for (int j = 0; j < d; ++j)
        val(out)[idx(rows_idx[i], j, d)] += val(a)[idx(static_cast<int>(i), j, d)];
    nodes[out].back = [a, out, ri = std::move(rows_idx), d](Tape& t) {
      for (size_t i = 0; i < ri.size(); ++i)
        for (int j = 0; j < d; ++j)
          t.grad(a)[idx(static_cast<int>(i), j, d)] += t.grad(out)[idx(ri[i], j, d)];
    };
    return out;
  }

  Ref sigmoid(Ref a) {
    auto out = clone_shape(a);
    for (size_t i = 0; i < val(a).size(); ++i) val(out)[i] = T(1) / (T(1) + std::exp(-val(a)[i]));
    nodes[out].back = [a, out](Tape& t) {
      for (size_t i = 0; i < t.grad(out).size(); ++i) {
        T s = t.val(out)[i];
        t.grad(a)[i] += t.grad(out)[i] * s * (T(1) - s);
      }
    };
    return out;
  }

  Ref tanh_(Ref a) {
    auto out = clone_shape(a);
    for (size_t i = 0; i < val(a).size(); ++i) val(out)[i] = std::tanh(val(a)[i]);
    nodes[out].back = [a, out](Tape& t) {
      for (size_t i = 0; i < t.grad(out).size(); ++i) {
        T y = t.val(out)[i];
        t.grad(a)[i] += t.grad(out)[i] * (T(1) - y * y);
      }
    };
    return out;
  }

  Ref relu(Ref a) {
    auto out = clone_shape(a);
    for (size_t i = 0; i < val(a).size(); ++i) val(out)[i] = val(a)[i] > T(0) ? val(a)[i] : T(0);
    nodes[out].back = [a, out](Tape& t) {
      for (size_t i = 0; i < t.grad(out).size(); ++i)
        if (t.val(a)[i] > T(0)) t.grad(a)[i] += t.grad(out)[i];
    };
    return out;
  }

  Ref softmax_rows(Ref a) {
    auto out = clone_shape(a);
    int n = rows(a), d = cols(a);
    for (int i = 0; i < n; ++i) {
      T mx = val(a)[idx(i, 0, d)];
      for (int j = 1; j < d; ++j) mx = std::max(mx, val(a)[idx(i, j, d)]);
      T denom = T(0);
      for (int j = 0; j < d; ++j) {
        T e = std::exp(val(a)[idx(i, j, d)] - mx);
        val(out)[idx(i, j, d)] = e;
        denom += e;
      }
      for (int j = 0; j < d; ++j) val(out)[idx(i, j, d)] /= denom;
    }
    nodes[out].back = [a, out, n, d](Tape& t) {
      for (int i = 0; i < n; ++i) {
        T dot = T(0);
        for (int j = 0; j < d; ++j)
          dot += t.grad(out)[idx(i, j, d)] * t.val(out)[idx(i, j, d)];
        for (int j = 0; j < d; ++j) {
          T y = t.val(out)[idx(i, j, d)];
          t.grad(a)[idx(i, j, d)] += y * (t.grad(out)[idx(i, j, d)] - dot);
        }
      }
    };
    return out;
  }

  // Softmax over groups of rows of an (n×1) column, e.g. attention logits
  // grouped by destination node.
  Ref segment_softmax(Ref a, const std::vector<int32_t>& segments) {
    if (cols(a) != 1 || static_cast<int>(segments.size()) != rows(a))
      throw ConfigError("segment_softmax: expects (n×1) with one segment id per row");
    int n = rows(a);
    int nseg = 0;
    for (int32_t s : segments) nseg = std::max(nseg, s + 1);
    std::vector<std::vector<int32_t>> groups(nseg);
    for (int i = 0; i < n; ++i) groups[segments[i]].push_back(i);
    auto out = clone_shape(a);
    for (const auto& grp : groups) {
      if (grp.empty()) continue;
      T mx = val(a)[grp[0]];
      for (int32_t i : grp) mx = std::max(mx, val(a)[i]);
      T denom = T(0);
      for (int32_t i : grp) {
        val(out)[i] = std::exp(val(a)[i] - mx);
        denom += val(out)[i];
      }
      for (int32_t i : grp) val(out)[i] /= denom;
    }
    nodes[out].back = [a, out, groups](Tape& t) {
      for (const auto& grp : groups) {
        T dot = T(0);
        for (int32_t i : grp) dot += t.grad(out)[i] * t.val(out)[i];
        for (int32_t i : grp) t.grad(a)[i] += t.val(out)[i] * (t.grad(out)[i] - dot);
      }
    };
    return out;
  }

  Ref concat_rows(std::span<const Ref> parts) {
    if (parts.empty()) throw ConfigError("concat_rows: empty input");
    int d = cols(parts[0]);
    int total = 0;
    for (Ref p : parts) {
      if (cols(p) != d) throw ConfigError("concat_rows: column mismatch");
      total += rows(p);
    }
    Ref out = push(total, d, std::vector<T>(static_cast<size_t>(total) * d, T(0)));
    std::vector<Ref> ps(parts.begin(), parts.end());
    size_t off = 0;
    for (Ref p : ps) {
      std::copy(val(p).begin(), val(p).end(), val(out).begin() + off);
      off += val(p).size();
    }
    nodes[out].back = [ps, out](Tape& t) {
      size_t off2 = 0;
      for (Ref p : ps) {
        for (size_t i = 0; i < t.grad(p).size(); ++i) t.grad(p)[i] += t.grad(out)[off2 + i];
        off2 += t.grad(p).size();
      }
    };
    return out;
  }

  Ref row_sum(Ref a) {  // (n×d) → (n×1)
    int n = rows(a), d = cols(a);
    Ref out = push(n, 1, std::vector<T>(n, T(0)));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) val(out)[i] += val(a)[idx(i, j, d)];
    nodes[out].back = [a, out, n, d](Tape& t) {
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) t.grad(a)[idx(i, j, d)] += t.grad(out)[i];
    };
    return out;
  }

  Ref col_sum(Ref a) {  // (n×d) → (1×d)
    int n = rows(a), d = cols(a);
    Ref out = push(1, d, std::vector<T>(d, T(0)));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) val(out)[j] += val(a)[idx(i, j, d)];
    nodes[out].back = [a, out, n, d](Tape& t) {
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) t.grad(a)[idx(i, j, d)] += t.grad(out)[j];
    };
    return out;
  }

  // Full pairwise cosine-similarity matrix between the rows of a (n×d) and
  // b (m×d). Rows are assumed nonzero.
  Ref cosine_rows(Ref a, Ref b) {
    if (cols(a) != cols(b)) throw ConfigError("cosine_rows: column mismatch");
    int n = rows(a), m = rows(b), d = cols(a);
    auto norm = [&](Ref x, int r) {
      T s = T(0);
      for (int j = 0; j < d; ++j) s += val(x)[idx(r, j, d)] * val(x)[idx(r, j, d)];
      return std::sqrt(std::max(s, std::numeric_limits<T>::min()));
    };
    std::vector<T> na(n), nb(m);
    for (int i = 0; i < n; ++i) na[i] = norm(a, i);
    for (int j = 0; j < m; ++j) nb[j] = norm(b, j);
    Ref out = push(n, m, std::vector<T>(static_cast<size_t>(n) * m, T(0)));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) {
        T dot = T(0);
        for (int k = 0; k < d; ++k) dot += val(a)[idx(i, k, d)] * val(b)[idx(j, k, d)];
        val(out)[idx(i, j, m)] = dot / (na[i] * nb[j]);
      }
    nodes[out].back = [a, b, out, n, m, d, na, nb](Tape& t) {
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) {
          T go = t.grad(out)[idx(i, j, m)];
          if (go == T(0)) continue;
          T c = t.val(out)[idx(i, j, m)];
          for (int k = 0; k < d; ++k) {
            T ai = t.val(a)[idx(i, k, d)], bj = t.val(b)[idx(j, k, d)];
            t.grad(a)[idx(i, k, d)] += go * (bj / (na[i] * nb[j]) - c * ai / (na[i] * na[i]));
            t.grad(b)[idx(j, k, d)] += go * (ai / (na[i] * nb[j]) - c * bj / (nb[j] * nb[j]));
          }
        }
    };
    return out;
  }

  Ref dropout(Ref a, double rate, std::mt19937_64& rng, bool training) {
    if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout rate must lie in [0, 1)");
    if (!training || rate == 0.0) return a;
    auto out = clone_shape(a);
    std::vector<T> mask(val(a).size());
    T keep = T(1) - static_cast<T>(rate);
    for (size_t i = 0; i < mask.size(); ++i) {
      double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;  // uniform [0,1)
      mask[i] = u < rate ? T(0) : T(1) / keep;
      val(out)[i] = val(a)[i] * mask[i];
    }
    nodes[out].back = [a, out, mask = std::move(mask)](Tape& t) {
      for (size_t i = 0; i < mask.size(); ++i) t.grad(a)[i] += t.grad(out)[i] * mask[i];
    };
    return out;
  }

  Ref sum(Ref a) {
    Ref out = push(1, 1, {T(0)});
    for (T x : val(a)) val(out)[0] += x;
    nodes[out].back = [a, out](Tape& t) {
      for (auto& g : t.grad(a)) g += t.grad(out)[0];
    };
    return out;
  }

  // Max-shifted log-sum-exp of every element.
  Ref logsumexp(Ref a) {
    T mx = val(a)[0];
    for (T x : val(a)) mx = std::max(mx, x);
    T acc = T(0);
    for (T x : val(a)) acc += std::exp(x - mx);
    Ref out = push(1, 1, {mx + std::log(acc)});
    nodes[out].back = [a, out](Tape& t) {
      T lse = t.val(out)[0];
      for (size_t i = 0; i < t.grad(a).size(); ++i)
        t.grad(a)[i] += t.grad(out)[0] * std::exp(t.val(a)[i] - lse);
    };
    return out;
  }

  Ref pick(Ref a, int r, int c) {
    int d = cols(a);
    Ref out = push(1, 1, {val(a)[idx(r, c, d)]});
    nodes[out].back = [a, out, r, c, d](Tape& t) {
      t.grad(a)[idx(r, c, d)] += t.grad(out)[0];
    };
    return out;
  }

  void backward(Ref root) {
    if (nodes[root].val.size() != 1) throw ConfigError("backward: root must be scalar");
    for (auto& n : nodes) n.grad.assign(n.val.size(), T(0));
    nodes[root].grad[0] = T(1);
    for (Ref i = static_cast<Ref>(nodes.size()) - 1; i >= 0; --i)
      if (nodes[i].back) nodes[i].back(*this);
  }

 private:
  static size_t idx(int r, int c, int ncols) { return static_cast<size_t>(r) * ncols + c; }

  Ref push(int r, int c, std::vector<T> v) {
    nodes.push_back({r, c, std::move(v), {}, nullptr});
    return static_cast<Ref>(nodes.size() - 1);
  }

  Ref clone_shape(Ref a) { return push(rows(a), cols(a), std::vector<T>(val(a).size(), T(0))); }

  void check_same_shape(Ref a, Ref b) const {
    if (rows(a) != rows(b) || cols(a) != cols(b))
      throw ConfigError("elementwise op: shape mismatch");
  }
};

}  // namespace asgea::nn
