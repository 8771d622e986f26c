#pragma once

#include <limits>
#include <stdexcept>
#include <vector>

#include "tagprime/tape.hpp"

namespace tagprime {

// Masked transitions score a large negative finite constant so gradients
// stay defined everywhere.
inline constexpr double kMaskedScore = -1e4;

using BoolMat = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

// Transition structure over tagset of size K plus synthetic START (row/col
// K) and END (row/col K+1) states. allowed(i, j) == transition i -> j is
// scoreable.
struct CrfMask {
  BoolMat allowed;

  int num_tags() const { return static_cast<int>(allowed.rows()) - 2; }
  int start() const { return num_tags(); }
  int end() const { return num_tags() + 1; }
};

// BIO constraints for a tagset laid out as [O, B-r0, I-r0, B-r1, I-r1, ...]:
// forbids O->I, START->I, and B-r/I-r -> I-r' for r != r'. Pass
// constrain = false for the unmasked ablation.
inline CrfMask make_bio_mask(int num_tags, bool constrain = true) {
  CrfMask m;
  m.allowed = BoolMat::Constant(num_tags + 2, num_tags + 2, true);
  const int start = num_tags, end = num_tags + 1;
  for (int i = 0; i < num_tags + 2; ++i) m.allowed(i, start) = false;
  for (int j = 0; j < num_tags + 2; ++j) m.allowed(end, j) = false;
  m.allowed(start, end) = false;
  if (!constrain) return m;
  auto is_i = [](int t) { return t != 0 && (t - 1) % 2 == 1; };
  auto role = [](int t) { return (t - 1) / 2; };
  for (int j = 0; j < num_tags; ++j) {
    if (!is_i(j)) continue;
    m.allowed(start, j) = false;
    m.allowed(0, j) = false;
    for (int i = 1; i < num_tags; ++i) {
      if (role(i) != role(j)) m.allowed(i, j) = false;
    }
  }
  return m;
}

inline bool mask_valid_path(const CrfMask& mask, const std::vector<int>& tags) {
  if (tags.empty()) return false;
  if (!mask.allowed(mask.start(), tags.front())) return false;
  for (size_t t = 1; t < tags.size(); ++t) {
    if (!mask.allowed(tags[t - 1], tags[t])) return false;
  }
  return mask.allowed(tags.back(), mask.end());
}

namespace detail {

template <typename T>
Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic> masked_scores(
    const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>& transitions,
    const CrfMask& mask) {
  Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic> s = transitions;
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    for (Eigen::Index j = 0; j < s.cols(); ++j) {
      if (!mask.allowed(i, j)) s(i, j) = static_cast<T>(kMaskedScore);
    }
  }
  return s;
}

template <typename T>
T logsumexp(const Eigen::Matrix<T, Eigen::Dynamic, 1>& v) {
  T m = v.maxCoeff();
  return m + std::log((v.array() - m).exp().sum());
}

// alphas(t, j) = log sum over prefixes ending in tag j at position t,
// including emissions up to t and the START transition.
template <typename T>
Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic> forward_alphas(
    const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>& emissions,
    const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>& s) {
  const Eigen::Index n = emissions.rows(), K = emissions.cols();
  Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic> alphas(n, K);
  alphas.row(0) = emissions.row(0) + s.row(K).head(K);
  for (Eigen::Index t = 1; t < n; ++t) {
    for (Eigen::Index j = 0; j < K; ++j) {
      Eigen::Matrix<T, Eigen::Dynamic, 1> acc =
          alphas.row(t - 1).transpose() + s.col(j).head(K);
      alphas(t, j) = logsumexp<T>(acc) + emissions(t, j);
    }
  }
  return alphas;
}

}  // namespace detail

// Log of the sum over all mask-valid tag sequences of exp(path score).
template <typename T>
T log_partition(const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>& emissions,
                const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>& transitions,
                const CrfMask& mask) {
  if (emissions.rows() < 1) throw std::invalid_argument("log_partition: empty sequence");
  auto s = detail::masked_scores(transitions, mask);
  auto alphas = detail::forward_alphas(emissions, s);
  const Eigen::Index n = emissions.rows(), K = emissions.cols();
  Eigen::Matrix<T, Eigen::Dynamic, 1> fin =
      alphas.row(n - 1).transpose() + s.col(K + 1).head(K);
  return detail::logsumexp<T>(fin);
}

template <typename T>
T path_score(const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>& emissions,
             const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>& transitions,
             const CrfMask& mask, const std::vector<int>& tags) {
  auto s = detail::masked_scores(transitions, mask);
  const Eigen::Index n = emissions.rows();
  T score = s(mask.start(), tags[0]) + emissions(0, tags[0]);
  for (Eigen::Index t = 1; t < n; ++t) {
    score += s(tags[t - 1], tags[t]) + emissions(t, tags[t]);
  }
  return score + s(tags[n - 1], mask.end());
}

// Maximum-score mask-valid sequence. Ties break toward the lower tag id at
// the latest differing position (backpointers prefer the smaller
// predecessor, final state prefers the smaller id).
template <typename T>
std::pair<std::vector<int>, T> viterbi(
    const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>& emissions,
    const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>& transitions,
    const CrfMask& mask) {
  if (emissions.rows() < 1) throw std::invalid_argument("viterbi: empty sequence");
  auto s = detail::masked_scores(transitions, mask);
  const Eigen::Index n = emissions.rows(), K = emissions.cols();
  Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic> best(n, K);
  Eigen::MatrixXi back(n, K);
  best.row(0) = emissions.row(0) + s.row(K).head(K);
  for (Eigen::Index t = 1; t < n; ++t) {
    for (Eigen::Index j = 0; j < K; ++j) {
      T bs = best(t - 1, 0) + s(0, j);
      int bi = 0;
      for (Eigen::Index i = 1; i < K; ++i) {
        T cand = best(t - 1, i) + s(i, j);
        if (cand > bs) {
          bs = cand;
          bi = static_cast<int>(i);
        }
      }
      best(t, j) = bs + emissions(t, j);
      back(t, j) = bi;
    }
  }
  T bs = best(n - 1, 0) + s(0, K + 1);
  int bj = 0;
  for (Eigen::Index j = 1; j < K; ++j) {
    T cand = best(n - 1, j) + s(j, K + 1);
    if (cand > bs) {
      bs = cand;
      bj = static_cast<int>(j);
    }
  }
  std::vector<int> tags(n);
  tags[n - 1] = bj;
  for (Eigen::Index t = n - 1; t > 0; --t) tags[t - 1] = back(t, tags[t]);
  return {tags, bs};
}

// log_partition - gold path score; always >= 0 for mask-valid gold.
template <typename T>
T nll_loss(const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>& emissions,
           const std::vector<int>& gold,
           const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>& transitions,
           const CrfMask& mask) {
  if (static_cast<Eigen::Index>(gold.size()) != emissions.rows()) {
    throw std::invalid_argument("nll_loss: gold length mismatch");
  }
  if (!mask_valid_path(mask, gold)) {
    throw std::invalid_argument("nll_loss: gold sequence violates the transition mask");
  }
  return log_partition(emissions, transitions, mask) -
         path_score(emissions, transitions, mask, gold);
}

// Tape op: NLL of the gold sequence given an emissions node and the
// transitions parameter node. Backward uses forward-backward marginals;
// masked transition cells receive no gradient.
template <typename T>
int crf_nll_node(Tape<T>& tape, int emissions, int transitions, const CrfMask& mask,
                 std::vector<int> gold) {
  using Mat = typename Tape<T>::Mat;
  const Mat& e = tape.val(emissions);
  const Mat s = detail::masked_scores<T>(tape.val(transitions), mask);
  const Eigen::Index n = e.rows(), K = e.cols();
  if (static_cast<Eigen::Index>(gold.size()) != n) {
    throw std::invalid_argument("crf_nll_node: gold length mismatch");
  }
  if (!mask_valid_path(mask, gold)) {
    throw std::invalid_argument("crf_nll_node: gold sequence violates the transition mask");
  }

  Mat alphas = detail::forward_alphas<T>(e, s);
  Eigen::Matrix<T, Eigen::Dynamic, 1> fin = alphas.row(n - 1).transpose() + s.col(K + 1).head(K);
  T log_z = detail::logsumexp<T>(fin);

  T gold_score = s(K, gold[0]) + e(0, gold[0]);
  for (Eigen::Index t = 1; t < n; ++t) gold_score += s(gold[t - 1], gold[t]) + e(t, gold[t]);
  gold_score += s(gold[n - 1], K + 1);

  // betas(t, j) = log sum over suffixes starting after t given tag j at t,
  // including the END transition, excluding emissions at t.
  Mat betas(n, K);
  betas.row(n - 1) = s.col(K + 1).head(K).transpose();
  for (Eigen::Index t = n - 2; t >= 0; --t) {
    for (Eigen::Index j = 0; j < K; ++j) {
      Eigen::Matrix<T, Eigen::Dynamic, 1> acc =
          s.row(j).head(K).transpose() + e.row(t + 1).transpose() +
          betas.row(t + 1).transpose();
      betas(t, j) = detail::logsumexp<T>(acc);
    }
  }

  Mat loss(1, 1);
  loss(0, 0) = log_z - gold_score;
  return tape.custom(
      std::move(loss),
      [emissions, transitions, mask, gold = std::move(gold), s, alphas, betas,
       log_z](Tape<T>& t) {
        const T up = t.grad(t.cursor())(0, 0);
        const Mat& e = t.val(emissions);
        const Eigen::Index n = e.rows(), K = e.cols();

        Mat de = Mat::Zero(n, K);
        for (Eigen::Index tt = 0; tt < n; ++tt) {
          for (Eigen::Index j = 0; j < K; ++j) {
            de(tt, j) = std::exp(alphas(tt, j) + betas(tt, j) - log_z);
          }
          de(tt, gold[tt]) -= static_cast<T>(1);
        }
        t.grad(emissions) += up * de;

        Mat dtr = Mat::Zero(K + 2, K + 2);
        for (Eigen::Index j = 0; j < K; ++j) {
          dtr(K, j) = std::exp(s(K, j) + e(0, j) + betas(0, j) - log_z);
          dtr(j, K + 1) = std::exp(alphas(n - 1, j) + s(j, K + 1) - log_z);
        }
        dtr(K, gold[0]) -= static_cast<T>(1);
        dtr(gold[n - 1], K + 1) -= static_cast<T>(1);
        for (Eigen::Index tt = 0; tt + 1 < n; ++tt) {
          for (Eigen::Index i = 0; i < K; ++i) {
            for (Eigen::Index j = 0; j < K; ++j) {
              dtr(i, j) += std::exp(alphas(tt, i) + s(i, j) + e(tt + 1, j) +
                                    betas(tt + 1, j) - log_z);
            }
          }
          dtr(gold[tt], gold[tt + 1]) -= static_cast<T>(1);
        }
        for (Eigen::Index i = 0; i < K + 2; ++i) {
          for (Eigen::Index j = 0; j < K + 2; ++j) {
            if (!mask.allowed(i, j)) dtr(i, j) = 0;
          }
        }
        t.grad(transitions) += up * dtr;
      });
}

}  // namespace tagprime
