#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

#include "tagprime/bio.hpp"
#include "tagprime/crf.hpp"
#include "tagprime/net.hpp"
#include "tagprime/priming.hpp"
#include "tagprime/synth.hpp"
#include "tagprime/tape.hpp"

using namespace tagprime;

using Matd = Eigen::MatrixXd;

namespace {

Matd random_mat(std::mt19937_64& rng, int r, int c, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  Matd m(r, c);
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < c; ++j) m(i, j) = dist(rng);
  }
  return m;
}

// Analytic gradient of `loss(tape after params registered)` w.r.t. every
// entry of every tensor in `params`, against central finite differences.
void check_gradients(std::vector<Tensor<double>*> params,
                     const std::function<double()>& forward, double tol = 1e-6,
                     double eps = 1e-5) {
  for (Tensor<double>* p : params) p->zero_grad();
  // One backward pass to fill analytic grads: forward() must build a fresh
  // tape, call backward, and return the loss value.
  forward();
  for (Tensor<double>* p : params) {
    Eigen::MatrixXd analytic = p->grad;
    for (Eigen::Index r = 0; r < p->value.rows(); ++r) {
      for (Eigen::Index c = 0; c < p->value.cols(); ++c) {
        double saved = p->value(r, c);
        std::vector<Eigen::MatrixXd> grads;  // keep grads untouched by probes
        p->value(r, c) = saved + eps;
        for (Tensor<double>* q : params) grads.push_back(q->grad), q->zero_grad();
        double up = forward();
        p->value(r, c) = saved - eps;
        for (Tensor<double>* q : params) q->zero_grad();
        double down = forward();
        p->value(r, c) = saved;
        for (size_t i = 0; i < params.size(); ++i) params[i]->grad = grads[i];
        double numeric = (up - down) / (2 * eps);
        double denom = std::max({1.0, std::abs(numeric), std::abs(analytic(r, c))});
        CHECK(std::abs(analytic(r, c) - numeric) / denom < tol);
      }
    }
  }
}

}  // namespace

TEST_CASE("tape op gradients match finite differences") {
  std::mt19937_64 rng(1);
  Tensor<double> a{"a", random_mat(rng, 3, 4), {}};
  Tensor<double> b{"b", random_mat(rng, 4, 2), {}};
  Tensor<double> row{"row", random_mat(rng, 1, 4), {}};
  Tensor<double> gamma{"gamma", random_mat(rng, 1, 4, 0.1), {}};
  Tensor<double> beta{"beta", random_mat(rng, 1, 4, 0.1), {}};
  gamma.value.array() += 1.0;

  auto scalarize = [](Tape<double>& t, int node) {
    // Squared sum keeps every output entry in play.
    const auto& v = t.val(node);
    typename Tape<double>::Mat loss(1, 1);
    loss(0, 0) = v.array().square().sum();
    return t.custom(std::move(loss), [node](Tape<double>& tt) {
      tt.grad(node) += 2 * tt.grad(tt.cursor())(0, 0) * tt.val(node);
    });
  };

  SUBCASE("matmul") {
    check_gradients({&a, &b}, [&] {
      Tape<double> t;
      int l = scalarize(t, t.matmul(t.param(a), t.param(b)));
      t.backward(l);
      return t.val(l)(0, 0);
    });
  }
  SUBCASE("matmul_nt") {
    Tensor<double> bt{"bt", random_mat(rng, 2, 4), {}};
    check_gradients({&a, &bt}, [&] {
      Tape<double> t;
      int l = scalarize(t, t.matmul_nt(t.param(a), t.param(bt)));
      t.backward(l);
      return t.val(l)(0, 0);
    });
  }
  SUBCASE("add_rowvec") {
    check_gradients({&a, &row}, [&] {
      Tape<double> t;
      int l = scalarize(t, t.add_rowvec(t.param(a), t.param(row)));
      t.backward(l);
      return t.val(l)(0, 0);
    });
  }
  SUBCASE("gelu") {
    check_gradients({&a}, [&] {
      Tape<double> t;
      int l = scalarize(t, t.gelu(t.param(a)));
      t.backward(l);
      return t.val(l)(0, 0);
    });
  }
  SUBCASE("softmax_rows") {
    check_gradients({&a}, [&] {
      Tape<double> t;
      int l = scalarize(t, t.softmax_rows(t.param(a)));
      t.backward(l);
      return t.val(l)(0, 0);
    });
  }
  SUBCASE("layernorm_rows") {
    check_gradients({&a, &gamma, &beta}, [&] {
      Tape<double> t;
      int l = scalarize(t, t.layernorm_rows(t.param(a), t.param(gamma), t.param(beta)));
      t.backward(l);
      return t.val(l)(0, 0);
    });
  }
  SUBCASE("segment_mean + slices + concat") {
    check_gradients({&a}, [&] {
      Tape<double> t;
      int x = t.param(a);
      int seg = t.segment_mean(x, {{0, 2}, {2, 3}});
      int cat = t.concat_cols({t.slice_cols(seg, 0, 2), t.slice_cols(seg, 2, 2)});
      int l = scalarize(t, t.concat_rows(cat, t.slice_rows(x, 1, 1)));
      t.backward(l);
      return t.val(l)(0, 0);
    });
  }
  SUBCASE("rows_gather with repeated rows") {
    check_gradients({&a}, [&] {
      Tape<double> t;
      int l = scalarize(t, t.rows_gather(t.param(a), {0, 2, 0}));
      t.backward(l);
      return t.val(l)(0, 0);
    });
  }
}

// --- CRF vs brute force ---

namespace {

struct Brute {
  double log_z;
  std::vector<int> best_tags;
  double best_score;
};

// Exhaustive enumeration over all K^n tag sequences using the same masked
// score convention as the implementation (masked = -1e4, not excluded).
Brute brute_force(const Matd& emissions, const Matd& transitions, const CrfMask& mask) {
  const int n = static_cast<int>(emissions.rows());
  const int K = static_cast<int>(emissions.cols());
  Matd s = detail::masked_scores<double>(transitions, mask);
  Brute out;
  out.best_score = -std::numeric_limits<double>::infinity();
  std::vector<double> scores;
  std::vector<int> tags(n, 0);
  // Tie rule: lowest tag id at the latest differing position == reversed-
  // lexicographic minimum among max-score paths.
  auto rev_less = [&](const std::vector<int>& x, const std::vector<int>& y) {
    for (int i = n - 1; i >= 0; --i) {
      if (x[i] != y[i]) return x[i] < y[i];
    }
    return false;
  };
  while (true) {
    double sc = s(K, tags[0]) + emissions(0, tags[0]);
    for (int t = 1; t < n; ++t) sc += s(tags[t - 1], tags[t]) + emissions(t, tags[t]);
    sc += s(tags[n - 1], K + 1);
    scores.push_back(sc);
    if (sc > out.best_score ||
        (sc == out.best_score && rev_less(tags, out.best_tags))) {
      out.best_score = sc;
      out.best_tags = tags;
    }
    int i = 0;
    while (i < n && ++tags[i] == K) tags[i++] = 0;
    if (i == n) break;
  }
  double m = *std::max_element(scores.begin(), scores.end());
  double acc = 0;
  for (double sc : scores) acc += std::exp(sc - m);
  out.log_z = m + std::log(acc);
  return out;
}

}  // namespace

TEST_CASE("crf closed-form single position") {
  Matd e(1, 2);
  e << 1.3, -0.4;
  Matd tr = Matd::Zero(4, 4);
  CrfMask mask;
  mask.allowed = BoolMat::Constant(4, 4, true);
  double lz = log_partition<double>(e, tr, mask);
  CHECK(lz == doctest::Approx(std::log(std::exp(1.3) + std::exp(-0.4))));
}

TEST_CASE("crf matches brute force on random instances") {
  std::mt19937_64 rng(5);
  auto uniform = [&](int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
  };
  for (int iter = 0; iter < 300; ++iter) {
    const int K = uniform(2, 5);
    const int n = uniform(1, 6);
    Matd e = random_mat(rng, n, K, 2.0);
    Matd tr = random_mat(rng, K + 2, K + 2, 1.0);
    CrfMask mask;
    if (iter % 3 == 0) {
      mask = make_bio_mask(K % 2 == 1 ? K : 3, true);
      if (mask.num_tags() != K) mask.allowed = BoolMat::Constant(K + 2, K + 2, true);
    } else {
      mask.allowed = BoolMat::Constant(K + 2, K + 2, true);
    }

    Brute brute = brute_force(e, tr, mask);
    CHECK(log_partition<double>(e, tr, mask) == doctest::Approx(brute.log_z).epsilon(1e-9));

    auto [tags, score] = viterbi<double>(e, tr, mask);
    CHECK(score == doctest::Approx(brute.best_score).epsilon(1e-9));
    CHECK(tags == brute.best_tags);
    CHECK(path_score<double>(e, tr, mask, tags) == doctest::Approx(score).epsilon(1e-9));

    // NLL of a random gold path equals -log p(gold) under the enumerated
    // distribution, and is never negative beyond noise.
    std::vector<int> gold(n);
    for (int t = 0; t < n; ++t) gold[t] = uniform(0, K - 1);
    if (mask_valid_path(mask, gold)) {
      double nll = nll_loss<double>(e, gold, tr, mask);
      double ps = path_score<double>(e, tr, mask, gold);
      CHECK(nll == doctest::Approx(brute.log_z - ps).epsilon(1e-9));
      CHECK(nll >= -1e-9);
      CHECK(nll >= nll_loss<double>(e, tags, tr, mask) - 1e-9);
    }
  }
}

TEST_CASE("viterbi tie-breaking picks the lower tag id") {
  Matd e = Matd::Zero(2, 2);  // every path ties
  Matd tr = Matd::Zero(4, 4);
  CrfMask mask;
  mask.allowed = BoolMat::Constant(4, 4, true);
  auto [tags, score] = viterbi<double>(e, tr, mask);
  CHECK(tags == std::vector<int>{0, 0});
  CHECK(score == doctest::Approx(0.0));
}

TEST_CASE("degenerate mask leaves exactly one path") {
  const int K = 3;
  CrfMask mask;
  mask.allowed = BoolMat::Constant(K + 2, K + 2, false);
  mask.allowed(K, 1) = true;      // START -> 1
  mask.allowed(1, 2) = true;      // 1 -> 2
  mask.allowed(2, K + 1) = true;  // 2 -> END
  std::mt19937_64 rng(9);
  Matd e = random_mat(rng, 2, K);
  Matd tr = random_mat(rng, K + 2, K + 2);
  auto [tags, score] = viterbi<double>(e, tr, mask);
  CHECK(tags == std::vector<int>{1, 2});
  double expect = tr(K, 1) + e(0, 1) + tr(1, 2) + e(1, 2) + tr(2, K + 1);
  CHECK(score == doctest::Approx(expect));
  CHECK(log_partition<double>(e, tr, mask) == doctest::Approx(expect).epsilon(1e-6));
  CHECK(nll_loss<double>(e, {1, 2}, tr, mask) == doctest::Approx(0.0).epsilon(1e-6));
  CHECK_THROWS_AS(nll_loss<double>(e, {2, 1}, tr, mask), std::invalid_argument);
}

TEST_CASE("masked viterbi output always decodes without the repair rule") {
  std::mt19937_64 rng(17);
  std::vector<std::string> rels{"R0", "R1"};
  auto tagset = make_tagset(TagScheme::RoleTyped, rels);
  const int K = static_cast<int>(tagset.size());
  CrfMask mask = make_bio_mask(K, true);
  for (int iter = 0; iter < 200; ++iter) {
    Matd e = random_mat(rng, 6, K, 3.0);
    Matd tr = random_mat(rng, K + 2, K + 2);
    auto [tags, score] = viterbi<double>(e, tr, mask);
    TagSequence seq;
    seq.tags = tags;
    seq.scheme = TagScheme::RoleTyped;
    seq.tagset = tagset;
    CHECK(bio_valid(seq));
  }
}

TEST_CASE("crf_nll_node gradients match finite differences") {
  std::mt19937_64 rng(23);
  for (int iter = 0; iter < 20; ++iter) {
    const int K = 5, n = 4;
    Tensor<double> e{"e", random_mat(rng, n, K), {}};
    Tensor<double> tr{"tr", random_mat(rng, K + 2, K + 2), {}};
    CrfMask mask = make_bio_mask(K, iter % 2 == 0);
    std::vector<int> gold{1, 2, 0, 3};
    REQUIRE(mask_valid_path(mask, gold));
    check_gradients({&e, &tr}, [&] {
      Tape<double> t;
      int l = crf_nll_node(t, t.param(e), t.param(tr), mask, gold);
      t.backward(l);
      return t.val(l)(0, 0);
    });
  }
}

// --- encoder ---

namespace {

struct Fixture {
  RelationSchema schema;
  SubwordVocab vocab;
  EncoderConfig cfg;
  Passage passage;
  Condition condition;

  explicit Fixture(int layers = 2, int model_dim = 16, uint64_t seed = 0) {
    SynthSpec spec;
    spec.seed = seed;
    auto corpus = generate(spec, 8);
    schema = corpus.schema;
    vocab = SubwordVocab::build(corpus.instances, schema);
    cfg.vocab_size = vocab.size();
    cfg.model_dim = model_dim;
    cfg.layers = layers;
    cfg.heads = 2;
    cfg.feedforward_dim = 2 * model_dim;
    cfg.feature_dim = 8;
    cfg.head_hidden = 8;
    cfg.dropout = 0.2;
    passage = corpus.instances[0].passage;
    condition = corpus.instances[0].condition;
  }
};

}  // namespace

TEST_CASE("encode shape, finiteness and determinism") {
  Fixture f;
  auto st = init_stack<float>(f.cfg, f.schema.condition_types, f.schema.relation_labels, 1);
  PrimedInput in = plain_input(f.passage);
  auto z1 = encode<float>(st, f.vocab, in, nullptr);
  CHECK(z1.rows() == f.passage.length());
  CHECK(z1.cols() == f.cfg.model_dim);
  CHECK(z1.allFinite());
  auto z2 = encode<float>(st, f.vocab, in, nullptr);
  CHECK((z1 - z2).cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("priming changes the passage representations") {
  Fixture f;
  auto st = init_stack<float>(f.cfg, f.schema.condition_types, f.schema.relation_labels, 1);
  auto plain = encode<float>(st, f.vocab, plain_input(f.passage), nullptr);
  auto primed = encode<float>(
      st, f.vocab, build_input(f.passage, f.condition, f.schema), nullptr);
  CHECK(primed.rows() == plain.rows());
  CHECK((primed - plain).cwiseAbs().maxCoeff() > 1e-6f);
}

TEST_CASE("feature requests widen the output rows") {
  Fixture f;
  auto st = init_stack<float>(f.cfg, f.schema.condition_types, f.schema.relation_labels, 1);
  FeatureRequest req;
  req.type_id = f.schema.condition_types[0];
  auto z = encode<float>(st, f.vocab, plain_input(f.passage), &req);
  CHECK(z.cols() == f.cfg.model_dim + f.cfg.feature_dim);

  req.span_feature = Span{0, 1};
  req.relation_id = f.schema.relation_labels[0];
  z = encode<float>(st, f.vocab, plain_input(f.passage), &req);
  CHECK(z.cols() == 2 * f.cfg.model_dim + 2 * f.cfg.feature_dim);
}

TEST_CASE("max_len overflow raises a length error") {
  Fixture f;
  f.cfg.max_len = 4;
  auto st = init_stack<float>(f.cfg, f.schema.condition_types, f.schema.relation_labels, 1);
  CHECK_THROWS_AS(encode<float>(st, f.vocab, plain_input(f.passage), nullptr),
                  std::length_error);
}

TEST_CASE("split endpoints match the two unsplit encodes for L in {2,4}") {
  for (int L : {2, 4}) {
    Fixture f(L);
    auto st = init_stack<float>(f.cfg, f.schema.condition_types,
                                f.schema.relation_labels, 1);
    const std::string rel = f.schema.relation_labels[2];

    PrimedInput base = build_input(f.passage, f.condition, f.schema);
    PrimedInput full = build_input(f.passage, f.condition, f.schema, rel);
    std::vector<std::vector<std::string>> rel_words{f.schema.verbalize_relation(rel)};

    Tape<float> t0;
    auto out0 = encode_split_on_tape(t0, st, f.vocab, base, rel_words, SplitConfig{0},
                                     {nullptr});
    auto z_full = encode<float>(st, f.vocab, full, nullptr);
    CHECK((t0.val(out0[0]) - z_full).cwiseAbs().maxCoeff() <= 1e-6f);

    Tape<float> tL;
    auto outL = encode_split_on_tape(tL, st, f.vocab, base, rel_words, SplitConfig{L},
                                     {nullptr});
    auto z_cond = encode<float>(st, f.vocab, base, nullptr);
    CHECK((tL.val(outL[0]) - z_cond).cwiseAbs().maxCoeff() <= 1e-6f);

    CHECK_THROWS_AS(encode_split_on_tape(tL, st, f.vocab, base, rel_words,
                                         SplitConfig{L + 1}, {nullptr}),
                    std::invalid_argument);
  }
}

TEST_CASE("split computes the passage first half once and is order-equivariant") {
  Fixture f(4);
  auto st = init_stack<float>(f.cfg, f.schema.condition_types, f.schema.relation_labels, 1);
  PrimedInput base = build_input(f.passage, f.condition, f.schema);
  std::vector<std::vector<std::string>> words;
  for (int r = 0; r < 4; ++r) {
    words.push_back(f.schema.verbalize_relation(f.schema.relation_labels[r]));
  }
  st.passage_first_half_calls = 0;
  Tape<float> t;
  auto outs = encode_split_on_tape(t, st, f.vocab, base, words, SplitConfig{2},
                                   {nullptr, nullptr, nullptr, nullptr});
  CHECK(st.passage_first_half_calls == 1);
  REQUIRE(outs.size() == 4);

  std::vector<std::vector<std::string>> rev(words.rbegin(), words.rend());
  Tape<float> t2;
  auto outs2 = encode_split_on_tape(t2, st, f.vocab, base, rev, SplitConfig{2},
                                    {nullptr, nullptr, nullptr, nullptr});
  for (int r = 0; r < 4; ++r) {
    CHECK((t.val(outs[r]) - t2.val(outs2[3 - r])).cwiseAbs().maxCoeff() == 0.0f);
  }
}

TEST_CASE("end-to-end gradient check: encoder + head + crf at 64-bit") {
  Fixture f(2, 8);
  f.cfg.dropout = 0.0;
  f.cfg.heads = 2;
  f.cfg.feature_dim = 4;
  auto st = init_stack<double>(f.cfg, f.schema.condition_types,
                               f.schema.relation_labels, 3);
  Passage tiny;
  tiny.id = "g";
  tiny.tokens = {f.passage.tokens[0], f.passage.tokens[1], f.passage.tokens[2]};
  Condition cond{ConditionKind::Span, {0, 1}, f.schema.condition_types[0]};
  PrimedInput in = build_input(tiny, cond, f.schema, f.schema.relation_labels[0]);
  FeatureRequest req;
  req.span_feature = Span{0, 1};
  req.type_id = cond.type_label;
  req.relation_id = f.schema.relation_labels[0];

  const int num_tags = 3;
  auto head = init_head<double>(2 * f.cfg.model_dim + 2 * f.cfg.feature_dim,
                                f.cfg.head_hidden, num_tags, 4);
  std::mt19937_64 rng(5);
  Tensor<double> tr{"tr", random_mat(rng, num_tags + 2, num_tags + 2, 0.1), {}};
  CrfMask mask = make_bio_mask(num_tags, true);
  std::vector<int> gold{1, 2, 0};

  auto params = st.parameters();
  for (auto* p : head.parameters()) params.push_back(p);
  params.push_back(&tr);

  check_gradients(params, [&] {
    Tape<double> t;
    int reps = encode_on_tape(t, st, f.vocab, in, &req, Mode::Infer);
    int em = head_on_tape(t, head, reps, f.cfg, Mode::Infer);
    int l = crf_nll_node(t, em, t.param(tr), mask, gold);
    t.backward(l);
    return t.val(l)(0, 0);
  }, 1e-4, 1e-6);
}

TEST_CASE("dropout is inverted and only active in train mode") {
  Fixture f;
  f.cfg.dropout = 0.5;
  auto st = init_stack<float>(f.cfg, f.schema.condition_types, f.schema.relation_labels, 1);
  std::mt19937_64 rng(7);
  PrimedInput in = plain_input(f.passage);
  auto train1 = encode<float>(st, f.vocab, in, nullptr, Mode::Train, &rng);
  auto train2 = encode<float>(st, f.vocab, in, nullptr, Mode::Train, &rng);
  CHECK((train1 - train2).cwiseAbs().maxCoeff() > 0.0f);  // different masks
  auto infer1 = encode<float>(st, f.vocab, in, nullptr, Mode::Infer);
  auto infer2 = encode<float>(st, f.vocab, in, nullptr, Mode::Infer);
  CHECK((infer1 - infer2).cwiseAbs().maxCoeff() == 0.0f);
}
