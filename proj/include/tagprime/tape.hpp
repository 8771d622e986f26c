#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace tagprime {

// Named parameter tensor with its gradient accumulator.
template <typename T>
struct Tensor {
  std::string name;
  Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic> value;
  Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic> grad;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

// Reverse-mode autodiff over dense matrices. A fresh tape is built per
// forward pass; node ids are indices into the tape, already topologically
// ordered by construction.
template <typename T>
class Tape {
 public:
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

  struct Node {
    Mat val;
    Mat grad;
    std::function<void(Tape&)> back;
    Tensor<T>* param = nullptr;
  };

  const Mat& val(int id) const { return nodes_[id].val; }
  Mat& grad(int id) { return nodes_[id].grad; }
  size_t size() const { return nodes_.size(); }

  int input(Mat v) { return push(std::move(v), {}); }

  int param(Tensor<T>& p) {
    int id = push(p.value, {});
    nodes_[id].param = &p;
    return id;
  }

  int matmul(int a, int b) {
    Mat v = nodes_[a].val * nodes_[b].val;
    return push(std::move(v), [a, b](Tape& t) {
      int id = t.cursor_;
      t.nodes_[a].grad.noalias() += t.nodes_[id].grad * t.nodes_[b].val.transpose();
      t.nodes_[b].grad.noalias() += t.nodes_[a].val.transpose() * t.nodes_[id].grad;
    });
  }

  // A * B^T
  int matmul_nt(int a, int b) {
    Mat v = nodes_[a].val * nodes_[b].val.transpose();
    return push(std::move(v), [a, b](Tape& t) {
      int id = t.cursor_;
      t.nodes_[a].grad.noalias() += t.nodes_[id].grad * t.nodes_[b].val;
      t.nodes_[b].grad.noalias() += t.nodes_[id].grad.transpose() * t.nodes_[a].val;
    });
  }

  int add(int a, int b) {
    Mat v = nodes_[a].val + nodes_[b].val;
    return push(std::move(v), [a, b](Tape& t) {
      int id = t.cursor_;
      t.nodes_[a].grad += t.nodes_[id].grad;
      t.nodes_[b].grad += t.nodes_[id].grad;
    });
  }

  // Broadcast a 1 x d row vector over every row of a.
  int add_rowvec(int a, int b) {
    Mat v = nodes_[a].val.rowwise() + nodes_[b].val.row(0);
    return push(std::move(v), [a, b](Tape& t) {
      int id = t.cursor_;
      t.nodes_[a].grad += t.nodes_[id].grad;
      t.nodes_[b].grad.row(0) += t.nodes_[id].grad.colwise().sum();
    });
  }

  int scale(int a, T s) {
    Mat v = nodes_[a].val * s;
    return push(std::move(v), [a, s](Tape& t) {
      int id = t.cursor_;
      t.nodes_[a].grad += t.nodes_[id].grad * s;
    });
  }

  // tanh-form GELU; smooth everywhere, which keeps finite-difference
  // gradient checks clean.
  int gelu(int a) {
    const T c = static_cast<T>(0.7978845608028654);  // sqrt(2/pi)
    const T k = static_cast<T>(0.044715);
    const Mat& x = nodes_[a].val;
    Mat inner = c * (x.array() + k * x.array().cube()).matrix();
    Mat th = inner.array().tanh().matrix();
    Mat v = (static_cast<T>(0.5) * x.array() * (1 + th.array())).matrix();
    return push(std::move(v), [a, c, k, th = std::move(th)](Tape& t) {
      int id = t.cursor_;
      const Mat& x = t.nodes_[a].val;
      auto sech2 = (1 - th.array().square());
      auto dinner = c * (1 + 3 * k * x.array().square());
      auto dv = static_cast<T>(0.5) * (1 + th.array()) +
                static_cast<T>(0.5) * x.array() * sech2 * dinner;
      t.nodes_[a].grad.array() += t.nodes_[id].grad.array() * dv;
    });
  }

  int softmax_rows(int a) {
    Mat v = nodes_[a].val;
    for (Eigen::Index r = 0; r < v.rows(); ++r) {
      T m = v.row(r).maxCoeff();
      v.row(r) = (v.row(r).array() - m).exp();
      v.row(r) /= v.row(r).sum();
    }
    return push(std::move(v), [a](Tape& t) {
      int id = t.cursor_;
      const Mat& y = t.nodes_[id].val;
      const Mat& g = t.nodes_[id].grad;
      for (Eigen::Index r = 0; r < y.rows(); ++r) {
        T dot = y.row(r).dot(g.row(r));
        t.nodes_[a].grad.row(r).array() +=
            y.row(r).array() * (g.row(r).array() - dot);
      }
    });
  }

  // Per-row layer normalization with learnable 1 x d gain/bias nodes.
  int layernorm_rows(int a, int gamma, int beta) {
    const T eps = static_cast<T>(1e-5);
    const Mat& x = nodes_[a].val;
    const Eigen::Index d = x.cols();
    Mat xhat(x.rows(), d);
    Mat inv_sigma(x.rows(), 1);
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      T mu = x.row(r).mean();
      T var = (x.row(r).array() - mu).square().sum() / static_cast<T>(d);
      T is = static_cast<T>(1) / std::sqrt(var + eps);
      xhat.row(r) = (x.row(r).array() - mu) * is;
      inv_sigma(r, 0) = is;
    }
    Mat v = (xhat.array().rowwise() * nodes_[gamma].val.row(0).array()).rowwise() +
            nodes_[beta].val.row(0).array();
    return push(std::move(v),
                [a, gamma, beta, xhat = std::move(xhat),
                 inv_sigma = std::move(inv_sigma)](Tape& t) {
      int id = t.cursor_;
      const Mat& g = t.nodes_[id].grad;
      const Eigen::Index d = g.cols();
      t.nodes_[gamma].grad.row(0).array() +=
          (g.array() * xhat.array()).colwise().sum();
      t.nodes_[beta].grad.row(0) += g.colwise().sum();
      for (Eigen::Index r = 0; r < g.rows(); ++r) {
        Eigen::Matrix<T, 1, Eigen::Dynamic> gh =
            g.row(r).array() * t.nodes_[gamma].val.row(0).array();
        T m1 = gh.mean();
        T m2 = (gh.array() * xhat.row(r).array()).mean();
        t.nodes_[a].grad.row(r).array() +=
            inv_sigma(r, 0) * (gh.array() - m1 - xhat.row(r).array() * m2);
      }
    });
  }

  int concat_rows(int a, int b) {
    Mat v(nodes_[a].val.rows() + nodes_[b].val.rows(), nodes_[a].val.cols());
    v << nodes_[a].val, nodes_[b].val;
    return push(std::move(v), [a, b](Tape& t) {
      int id = t.cursor_;
      Eigen::Index ra = t.nodes_[a].val.rows();
      t.nodes_[a].grad += t.nodes_[id].grad.topRows(ra);
      t.nodes_[b].grad += t.nodes_[id].grad.bottomRows(t.nodes_[b].val.rows());
    });
  }

  int concat_cols(const std::vector<int>& parts) {
    Eigen::Index rows = nodes_[parts[0]].val.rows(), cols = 0;
    for (int p : parts) cols += nodes_[p].val.cols();
    Mat v(rows, cols);
    Eigen::Index c = 0;
    for (int p : parts) {
      v.middleCols(c, nodes_[p].val.cols()) = nodes_[p].val;
      c += nodes_[p].val.cols();
    }
    return push(std::move(v), [parts](Tape& t) {
      int id = t.cursor_;
      Eigen::Index c = 0;
      for (int p : parts) {
        Eigen::Index w = t.nodes_[p].val.cols();
        t.nodes_[p].grad += t.nodes_[id].grad.middleCols(c, w);
        c += w;
      }
    });
  }

  int slice_rows(int a, int r0, int nrows) {
    Mat v = nodes_[a].val.middleRows(r0, nrows);
    return push(std::move(v), [a, r0, nrows](Tape& t) {
      int id = t.cursor_;
      t.nodes_[a].grad.middleRows(r0, nrows) += t.nodes_[id].grad;
    });
  }

  int slice_cols(int a, int c0, int ncols) {
    Mat v = nodes_[a].val.middleCols(c0, ncols);
    return push(std::move(v), [a, c0, ncols](Tape& t) {
      int id = t.cursor_;
      t.nodes_[a].grad.middleCols(c0, ncols) += t.nodes_[id].grad;
    });
  }

  // out.row(i) = table.row(indices[i])
  int rows_gather(int table, std::vector<int> indices) {
    Mat v(static_cast<Eigen::Index>(indices.size()), nodes_[table].val.cols());
    for (size_t i = 0; i < indices.size(); ++i) {
      v.row(static_cast<Eigen::Index>(i)) = nodes_[table].val.row(indices[i]);
    }
    return push(std::move(v), [table, indices = std::move(indices)](Tape& t) {
      int id = t.cursor_;
      for (size_t i = 0; i < indices.size(); ++i) {
        t.nodes_[table].grad.row(indices[i]) +=
            t.nodes_[id].grad.row(static_cast<Eigen::Index>(i));
      }
    });
  }

  // One output row per [start, end) row range: the mean of those rows.
  int segment_mean(int a, std::vector<std::pair<int, int>> groups) {
    Mat v(static_cast<Eigen::Index>(groups.size()), nodes_[a].val.cols());
    for (size_t g = 0; g < groups.size(); ++g) {
      auto [s, e] = groups[g];
      v.row(static_cast<Eigen::Index>(g)) =
          nodes_[a].val.middleRows(s, e - s).colwise().mean();
    }
    return push(std::move(v), [a, groups = std::move(groups)](Tape& t) {
      int id = t.cursor_;
      for (size_t g = 0; g < groups.size(); ++g) {
        auto [s, e] = groups[g];
        T w = static_cast<T>(1) / static_cast<T>(e - s);
        for (int r = s; r < e; ++r) {
          t.nodes_[a].grad.row(r) +=
              w * t.nodes_[id].grad.row(static_cast<Eigen::Index>(g));
        }
      }
    });
  }

  // Inverted dropout; identity when rate == 0.
  int dropout(int a, T rate, std::mt19937_64& rng) {
    if (rate <= 0) return a;
    std::bernoulli_distribution keep(1.0 - static_cast<double>(rate));
    Mat mask(nodes_[a].val.rows(), nodes_[a].val.cols());
    T s = static_cast<T>(1) / (static_cast<T>(1) - rate);
    for (Eigen::Index r = 0; r < mask.rows(); ++r) {
      for (Eigen::Index c = 0; c < mask.cols(); ++c) {
        mask(r, c) = keep(rng) ? s : static_cast<T>(0);
      }
    }
    Mat v = nodes_[a].val.cwiseProduct(mask);
    return push(std::move(v), [a, mask = std::move(mask)](Tape& t) {
      int id = t.cursor_;
      t.nodes_[a].grad += t.nodes_[id].grad.cwiseProduct(mask);
    });
  }

  // Custom op escape hatch: value plus a hand-written backward.
  int custom(Mat v, std::function<void(Tape&)> back) {
    return push(std::move(v), std::move(back));
  }

  int cursor() const { return cursor_; }

  // Seeds the (1 x 1) loss node with `seed` and propagates; parameter
  // leaves accumulate into their Tensor::grad.
  void backward(int loss, T seed = static_cast<T>(1)) {
    if (nodes_[loss].val.size() != 1) {
      throw std::invalid_argument("backward expects a scalar loss node");
    }
    nodes_[loss].grad(0, 0) = seed;
    for (int id = loss; id >= 0; --id) {
      Node& n = nodes_[id];
      if (n.back) {
        cursor_ = id;
        n.back(*this);
      }
      if (n.param) n.param->grad += n.grad;
    }
  }

 private:
  int push(Mat v, std::function<void(Tape&)> back) {
    Node n;
    n.grad = Mat::Zero(v.rows(), v.cols());
    n.val = std::move(v);
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  std::vector<Node> nodes_;
  int cursor_ = -1;  // id of the node whose backward is running
};

}  // namespace tagprime
