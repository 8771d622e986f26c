#pragma once

#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "tagprime/priming.hpp"
#include "tagprime/subword.hpp"
#include "tagprime/tape.hpp"

namespace tagprime {

enum class Mode { Train, Infer };

struct EncoderConfig {
  int vocab_size = 0;
  int model_dim = 32;
  int layers = 2;
  int heads = 2;
  int feedforward_dim = 64;
  double dropout = 0.2;
  int max_len = 256;
  int feature_dim = 100;
  int head_hidden = 64;  // MLP width between encoder and CRF emissions
  bool tied_split_branch = true;

  void validate() const {
    if (model_dim <= 0 || model_dim % heads != 0) {
      throw std::invalid_argument("model_dim must be a positive multiple of heads");
    }
    if (layers < 1) throw std::invalid_argument("layers must be >= 1");
    if (dropout < 0 || dropout >= 1) throw std::invalid_argument("dropout must be in [0,1)");
    if (feature_dim <= 0) throw std::invalid_argument("feature_dim must be positive");
    if (vocab_size <= 0) throw std::invalid_argument("vocab_size must be positive");
    if (max_len <= 0 || feedforward_dim <= 0 || head_hidden <= 0) {
      throw std::invalid_argument("dims must be positive");
    }
  }
};

// First k layers run separately on the passage branch and the relation
// branch; the rest run jointly. k = 0 is full relationship priming,
// k = L is condition priming only.
struct SplitConfig {
  int k = 0;
};

template <typename T>
struct EncoderLayer {
  Tensor<T> ln1_g, ln1_b;
  Tensor<T> wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor<T> ln2_g, ln2_b;
  Tensor<T> w1, b1, w2, b2;
};

template <typename T>
struct EncoderStack {
  EncoderConfig cfg;
  Tensor<T> tok_emb, pos_emb;
  std::vector<EncoderLayer<T>> layers;
  std::vector<EncoderLayer<T>> branch_layers;  // empty when tied
  Tensor<T> final_ln_g, final_ln_b;
  Tensor<T> cond_type_emb, rel_emb;
  std::vector<std::string> cond_type_names, rel_names;

  // Instrumentation: how many times the passage side went through the
  // first-half layers in split mode.
  mutable long passage_first_half_calls = 0;

  std::vector<Tensor<T>*> parameters();
  void zero_grads();
  bool all_finite() const;
};

template <typename T>
EncoderStack<T> init_stack(const EncoderConfig& cfg,
                           std::vector<std::string> cond_type_names,
                           std::vector<std::string> rel_names, uint64_t seed);

// ---------------------------------------------------------------------------

namespace netdetail {

template <typename T>
void init_tensor(Tensor<T>& t, const std::string& name, int rows, int cols,
                 std::mt19937_64& rng, T stddev) {
  t.name = name;
  t.value.resize(rows, cols);
  if (stddev > 0) {
    std::normal_distribution<double> dist(0.0, static_cast<double>(stddev));
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) t.value(r, c) = static_cast<T>(dist(rng));
    }
  } else {
    t.value.setZero();
  }
  t.zero_grad();
}

template <typename T>
void init_layer(EncoderLayer<T>& l, const std::string& prefix, const EncoderConfig& cfg,
                std::mt19937_64& rng) {
  const int d = cfg.model_dim, f = cfg.feedforward_dim;
  const T s = static_cast<T>(0.02);
  init_tensor(l.ln1_g, prefix + ".ln1_g", 1, d, rng, T(0));
  l.ln1_g.value.setOnes();
  init_tensor(l.ln1_b, prefix + ".ln1_b", 1, d, rng, T(0));
  init_tensor(l.wq, prefix + ".wq", d, d, rng, s);
  init_tensor(l.bq, prefix + ".bq", 1, d, rng, T(0));
  init_tensor(l.wk, prefix + ".wk", d, d, rng, s);
  init_tensor(l.bk, prefix + ".bk", 1, d, rng, T(0));
  init_tensor(l.wv, prefix + ".wv", d, d, rng, s);
  init_tensor(l.bv, prefix + ".bv", 1, d, rng, T(0));
  init_tensor(l.wo, prefix + ".wo", d, d, rng, s);
  init_tensor(l.bo, prefix + ".bo", 1, d, rng, T(0));
  init_tensor(l.ln2_g, prefix + ".ln2_g", 1, d, rng, T(0));
  l.ln2_g.value.setOnes();
  init_tensor(l.ln2_b, prefix + ".ln2_b", 1, d, rng, T(0));
  init_tensor(l.w1, prefix + ".w1", d, f, rng, s);
  init_tensor(l.b1, prefix + ".b1", 1, f, rng, T(0));
  init_tensor(l.w2, prefix + ".w2", f, d, rng, s);
  init_tensor(l.b2, prefix + ".b2", 1, d, rng, T(0));
}

template <typename T>
void collect_layer(EncoderLayer<T>& l, std::vector<Tensor<T>*>& out) {
  for (Tensor<T>* p : {&l.ln1_g, &l.ln1_b, &l.wq, &l.bq, &l.wk, &l.bk, &l.wv, &l.bv,
                       &l.wo, &l.bo, &l.ln2_g, &l.ln2_b, &l.w1, &l.b1, &l.w2, &l.b2}) {
    out.push_back(p);
  }
}

}  // namespace netdetail

template <typename T>
std::vector<Tensor<T>*> EncoderStack<T>::parameters() {
  std::vector<Tensor<T>*> out{&tok_emb, &pos_emb};
  for (auto& l : layers) netdetail::collect_layer(l, out);
  for (auto& l : branch_layers) netdetail::collect_layer(l, out);
  out.push_back(&final_ln_g);
  out.push_back(&final_ln_b);
  out.push_back(&cond_type_emb);
  out.push_back(&rel_emb);
  return out;
}

template <typename T>
void EncoderStack<T>::zero_grads() {
  for (Tensor<T>* p : parameters()) p->zero_grad();
}

template <typename T>
bool EncoderStack<T>::all_finite() const {
  auto& self = const_cast<EncoderStack<T>&>(*this);
  for (Tensor<T>* p : self.parameters()) {
    if (!p->value.allFinite()) return false;
  }
  return true;
}

template <typename T>
EncoderStack<T> init_stack(const EncoderConfig& cfg,
                           std::vector<std::string> cond_type_names,
                           std::vector<std::string> rel_names, uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  EncoderStack<T> st;
  st.cfg = cfg;
  st.cond_type_names = std::move(cond_type_names);
  st.rel_names = std::move(rel_names);
  const T s = static_cast<T>(0.02);
  netdetail::init_tensor(st.tok_emb, "enc.tok_emb", cfg.vocab_size, cfg.model_dim, rng, s);
  netdetail::init_tensor(st.pos_emb, "enc.pos_emb", cfg.max_len, cfg.model_dim, rng, s);
  st.layers.resize(cfg.layers);
  for (int i = 0; i < cfg.layers; ++i) {
    netdetail::init_layer(st.layers[i], "enc.layer" + std::to_string(i), cfg, rng);
  }
  if (!cfg.tied_split_branch) {
    st.branch_layers.resize(cfg.layers);
    for (int i = 0; i < cfg.layers; ++i) {
      netdetail::init_layer(st.branch_layers[i], "enc.branch" + std::to_string(i), cfg, rng);
    }
  }
  netdetail::init_tensor(st.final_ln_g, "enc.final_ln_g", 1, cfg.model_dim, rng, T(0));
  st.final_ln_g.value.setOnes();
  netdetail::init_tensor(st.final_ln_b, "enc.final_ln_b", 1, cfg.model_dim, rng, T(0));
  netdetail::init_tensor(st.cond_type_emb, "feat.cond_type_emb",
                         std::max<int>(1, static_cast<int>(st.cond_type_names.size())),
                         cfg.feature_dim, rng, s);
  netdetail::init_tensor(st.rel_emb, "feat.rel_emb",
                         std::max<int>(1, static_cast<int>(st.rel_names.size())),
                         cfg.feature_dim, rng, s);
  return st;
}

// ---------------------------------------------------------------------------
// Forward passes (tape-building). All functions return node ids.

namespace netdetail {

// Subword expansion of a token sequence: flat piece ids plus per-token
// piece row ranges.
struct PieceLayout {
  std::vector<int> piece_ids;
  std::vector<std::pair<int, int>> token_groups;
};

inline PieceLayout expand(const SubwordVocab& vocab,
                          const std::vector<std::string>& tokens, int begin, int end) {
  PieceLayout out;
  for (int t = begin; t < end; ++t) {
    int s = static_cast<int>(out.piece_ids.size());
    for (int id : vocab.split(tokens[t])) out.piece_ids.push_back(id);
    out.token_groups.emplace_back(s, static_cast<int>(out.piece_ids.size()));
  }
  return out;
}

template <typename T>
int embed(Tape<T>& tape, EncoderStack<T>& st, const std::vector<int>& piece_ids,
          int pos_offset, Mode mode, std::mt19937_64* rng) {
  std::vector<int> pos(piece_ids.size());
  for (size_t i = 0; i < pos.size(); ++i) pos[i] = pos_offset + static_cast<int>(i);
  if (!pos.empty() && pos.back() >= st.cfg.max_len) {
    throw std::length_error("input exceeds max_len after subword expansion");
  }
  int tok = tape.param(st.tok_emb);
  int pe = tape.param(st.pos_emb);
  int x = tape.add(tape.rows_gather(tok, piece_ids), tape.rows_gather(pe, pos));
  if (mode == Mode::Train && st.cfg.dropout > 0) {
    x = tape.dropout(x, static_cast<T>(st.cfg.dropout), *rng);
  }
  return x;
}

template <typename T>
int transformer_layer(Tape<T>& tape, EncoderLayer<T>& l, const EncoderConfig& cfg, int x,
                      Mode mode, std::mt19937_64* rng) {
  const int d = cfg.model_dim;
  const int dh = d / cfg.heads;
  const T scl = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));

  int h = tape.layernorm_rows(x, tape.param(l.ln1_g), tape.param(l.ln1_b));
  int q = tape.add_rowvec(tape.matmul(h, tape.param(l.wq)), tape.param(l.bq));
  int k = tape.add_rowvec(tape.matmul(h, tape.param(l.wk)), tape.param(l.bk));
  int v = tape.add_rowvec(tape.matmul(h, tape.param(l.wv)), tape.param(l.bv));
  std::vector<int> heads;
  for (int hd = 0; hd < cfg.heads; ++hd) {
    int qh = tape.slice_cols(q, hd * dh, dh);
    int kh = tape.slice_cols(k, hd * dh, dh);
    int vh = tape.slice_cols(v, hd * dh, dh);
    int att = tape.softmax_rows(tape.scale(tape.matmul_nt(qh, kh), scl));
    heads.push_back(tape.matmul(att, vh));
  }
  int ctx = cfg.heads == 1 ? heads[0] : tape.concat_cols(heads);
  int attn_out = tape.add_rowvec(tape.matmul(ctx, tape.param(l.wo)), tape.param(l.bo));
  if (mode == Mode::Train && cfg.dropout > 0) {
    attn_out = tape.dropout(attn_out, static_cast<T>(cfg.dropout), *rng);
  }
  x = tape.add(x, attn_out);

  int h2 = tape.layernorm_rows(x, tape.param(l.ln2_g), tape.param(l.ln2_b));
  int ff = tape.add_rowvec(
      tape.matmul(tape.gelu(tape.add_rowvec(tape.matmul(h2, tape.param(l.w1)),
                                            tape.param(l.b1))),
                  tape.param(l.w2)),
      tape.param(l.b2));
  if (mode == Mode::Train && cfg.dropout > 0) {
    ff = tape.dropout(ff, static_cast<T>(cfg.dropout), *rng);
  }
  return tape.add(x, ff);
}

// Broadcast a 1 x d node to n rows.
template <typename T>
int repeat_rows(Tape<T>& tape, int row_node, int n) {
  typename Tape<T>::Mat ones(n, 1);
  ones.setOnes();
  return tape.matmul(tape.input(std::move(ones)), row_node);
}

inline int lookup_index(const std::vector<std::string>& names, const std::string& label) {
  for (size_t i = 0; i < names.size(); ++i) {
    if (names[i] == label) return static_cast<int>(i);
  }
  throw std::invalid_argument("unknown label for feature embedding: " + label);
}

// token_reps: token-level representations covering the whole input
// (passage first). Appends the requested conditional features to the
// passage rows.
template <typename T>
int append_features(Tape<T>& tape, EncoderStack<T>& st, int token_reps, int passage_len,
                    const FeatureRequest& req) {
  int passage = tape.slice_rows(token_reps, 0, passage_len);
  if (!req.any()) return passage;
  // Feature dropout zeroes the vectors but keeps the head input width.
  auto maybe_zero = [&](int node) { return req.zeroed ? tape.scale(node, T(0)) : node; };
  std::vector<int> parts{passage};
  if (req.span_feature) {
    int avg = tape.segment_mean(
        token_reps, {{req.span_feature->start, req.span_feature->end}});
    parts.push_back(maybe_zero(repeat_rows(tape, avg, passage_len)));
  }
  if (req.type_id) {
    int row = tape.rows_gather(tape.param(st.cond_type_emb),
                               {lookup_index(st.cond_type_names, *req.type_id)});
    parts.push_back(maybe_zero(repeat_rows(tape, row, passage_len)));
  }
  if (req.relation_id) {
    int row = tape.rows_gather(tape.param(st.rel_emb),
                               {lookup_index(st.rel_names, *req.relation_id)});
    parts.push_back(maybe_zero(repeat_rows(tape, row, passage_len)));
  }
  return tape.concat_cols(parts);
}

}  // namespace netdetail

// Full encode: self-attention over the whole primed input, word-piece
// averaging back to token level, passage rows sliced out and optionally
// concatenated with conditional features. The relation segment (when
// present) restarts positional indices at 0, matching split mode.
template <typename T>
int encode_on_tape(Tape<T>& tape, EncoderStack<T>& st, const SubwordVocab& vocab,
                   const PrimedInput& input, const FeatureRequest* features, Mode mode,
                   std::mt19937_64* rng = nullptr) {
  using netdetail::expand;
  const int rel_start =
      input.relation_segment_start >= 0 ? input.relation_segment_start : input.length();
  auto main = expand(vocab, input.tokens, 0, rel_start);
  auto rel = expand(vocab, input.tokens, rel_start, input.length());

  int x = netdetail::embed(tape, st, main.piece_ids, 0, mode, rng);
  if (!rel.piece_ids.empty()) {
    int xr = netdetail::embed(tape, st, rel.piece_ids, 0, mode, rng);
    x = tape.concat_rows(x, xr);
  }
  for (auto& l : st.layers) {
    x = netdetail::transformer_layer(tape, l, st.cfg, x, mode, rng);
  }
  x = tape.layernorm_rows(x, tape.param(st.final_ln_g), tape.param(st.final_ln_b));

  std::vector<std::pair<int, int>> groups = main.token_groups;
  int offset = static_cast<int>(main.piece_ids.size());
  for (auto [s, e] : rel.token_groups) groups.emplace_back(s + offset, e + offset);
  int token_reps = tape.segment_mean(x, std::move(groups));

  FeatureRequest none;
  return netdetail::append_features(tape, st, token_reps, input.passage_len,
                                    features ? *features : none);
}

// Convenience value-only encode.
template <typename T>
typename Tape<T>::Mat encode(EncoderStack<T>& st, const SubwordVocab& vocab,
                             const PrimedInput& input, const FeatureRequest* features,
                             Mode mode = Mode::Infer, std::mt19937_64* rng = nullptr) {
  Tape<T> tape;
  int out = encode_on_tape(tape, st, vocab, input, features, mode, rng);
  return tape.val(out);
}

// Split encode: `base_input` must carry no relation segment. The passage
// branch runs the first k layers once; each relation word sequence runs
// the (tied or copied) first k layers separately with positions from 0;
// layers k..L run jointly per relation. Outputs are ordered by relation
// index. `features[i]` may be null.
template <typename T>
std::vector<int> encode_split_on_tape(
    Tape<T>& tape, EncoderStack<T>& st, const SubwordVocab& vocab,
    const PrimedInput& base_input,
    const std::vector<std::vector<std::string>>& relation_words, SplitConfig split,
    const std::vector<const FeatureRequest*>& features, Mode mode = Mode::Infer,
    std::mt19937_64* rng = nullptr, const std::string& separator = "[SEP]") {
  const int L = st.cfg.layers;
  if (split.k < 0 || split.k > L) {
    throw std::invalid_argument("split k out of range [0, L]");
  }
  if (relation_words.empty()) {
    throw std::invalid_argument("encode_split requires at least one relation");
  }
  if (base_input.relation_segment_start >= 0) {
    throw std::invalid_argument("base input already carries a relation segment");
  }

  auto main = netdetail::expand(vocab, base_input.tokens, 0, base_input.length());
  int x = netdetail::embed(tape, st, main.piece_ids, 0, mode, rng);
  for (int i = 0; i < split.k; ++i) {
    x = netdetail::transformer_layer(tape, st.layers[i], st.cfg, x, mode, rng);
  }
  st.passage_first_half_calls += 1;

  auto& first_half = st.branch_layers.empty() ? st.layers : st.branch_layers;
  std::vector<int> outputs;
  for (size_t r = 0; r < relation_words.size(); ++r) {
    std::vector<std::string> branch_tokens{separator};
    branch_tokens.insert(branch_tokens.end(), relation_words[r].begin(),
                         relation_words[r].end());
    auto rel = netdetail::expand(vocab, branch_tokens, 0,
                                 static_cast<int>(branch_tokens.size()));
    int xr = netdetail::embed(tape, st, rel.piece_ids, 0, mode, rng);
    for (int i = 0; i < split.k; ++i) {
      xr = netdetail::transformer_layer(tape, first_half[i], st.cfg, xr, mode, rng);
    }
    int joint = tape.concat_rows(x, xr);
    for (int i = split.k; i < L; ++i) {
      joint = netdetail::transformer_layer(tape, st.layers[i], st.cfg, joint, mode, rng);
    }
    joint = tape.layernorm_rows(joint, tape.param(st.final_ln_g), tape.param(st.final_ln_b));

    std::vector<std::pair<int, int>> groups = main.token_groups;
    int offset = static_cast<int>(main.piece_ids.size());
    for (auto [s, e] : rel.token_groups) groups.emplace_back(s + offset, e + offset);
    int token_reps = tape.segment_mean(joint, std::move(groups));

    FeatureRequest none;
    outputs.push_back(netdetail::append_features(
        tape, st, token_reps, base_input.passage_len,
        features.size() > r && features[r] ? *features[r] : none));
  }
  return outputs;
}

// MLP between encoder output and CRF emissions.
template <typename T>
struct TagHead {
  Tensor<T> w1, b1, w2, b2;

  std::vector<Tensor<T>*> parameters() { return {&w1, &b1, &w2, &b2}; }
  void zero_grads() {
    for (Tensor<T>* p : parameters()) p->zero_grad();
  }
};

template <typename T>
TagHead<T> init_head(int in_dim, int hidden, int num_tags, uint64_t seed) {
  std::mt19937_64 rng(seed);
  TagHead<T> h;
  const T s = static_cast<T>(0.02);
  netdetail::init_tensor(h.w1, "head.w1", in_dim, hidden, rng, s);
  netdetail::init_tensor(h.b1, "head.b1", 1, hidden, rng, T(0));
  netdetail::init_tensor(h.w2, "head.w2", hidden, num_tags, rng, s);
  netdetail::init_tensor(h.b2, "head.b2", 1, num_tags, rng, T(0));
  return h;
}

template <typename T>
int head_on_tape(Tape<T>& tape, TagHead<T>& head, int reps, const EncoderConfig& cfg,
                 Mode mode, std::mt19937_64* rng = nullptr) {
  int h = tape.gelu(
      tape.add_rowvec(tape.matmul(reps, tape.param(head.w1)), tape.param(head.b1)));
  if (mode == Mode::Train && cfg.dropout > 0) {
    h = tape.dropout(h, static_cast<T>(cfg.dropout), *rng);
  }
  return tape.add_rowvec(tape.matmul(h, tape.param(head.w2)), tape.param(head.b2));
}

}  // namespace tagprime
