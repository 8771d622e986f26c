#include "tagprime/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "tagprime/jsonio.hpp"

namespace tagprime {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'T', 'P', 'C', 'K'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
         static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
}

void write_f32(std::ostream& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  write_u32(out, bits);
}

float read_f32(std::istream& in) {
  uint32_t bits = read_u32(in);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

json enc_cfg_to_json(const EncoderConfig& c) {
  return json{{"vocab_size", c.vocab_size},
              {"model_dim", c.model_dim},
              {"layers", c.layers},
              {"heads", c.heads},
              {"feedforward_dim", c.feedforward_dim},
              {"dropout", c.dropout},
              {"max_len", c.max_len},
              {"feature_dim", c.feature_dim},
              {"head_hidden", c.head_hidden},
              {"tied_split_branch", c.tied_split_branch}};
}

EncoderConfig enc_cfg_from_json(const json& j) {
  EncoderConfig c;
  c.vocab_size = j.at("vocab_size");
  c.model_dim = j.at("model_dim");
  c.layers = j.at("layers");
  c.heads = j.at("heads");
  c.feedforward_dim = j.at("feedforward_dim");
  c.dropout = j.at("dropout");
  c.max_len = j.at("max_len");
  c.feature_dim = j.at("feature_dim");
  c.head_hidden = j.at("head_hidden");
  c.tied_split_branch = j.at("tied_split_branch");
  return c;
}

}  // namespace

void save_checkpoint(TagPrimeModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);

  json header;
  header["encoder"] = enc_cfg_to_json(model.enc_cfg);
  header["variant"] = {{"cond_feature", model.variant.cond_feature},
                       {"cond_priming", model.variant.cond_priming},
                       {"rel_feature", model.variant.rel_feature},
                       {"rel_priming", model.variant.rel_priming},
                       {"decompose_by_relation", model.variant.decompose_by_relation}};
  header["split_k"] = model.infer_split.k;
  header["tagset"] = model.tagset;
  header["scheme"] = model.scheme == TagScheme::Binary ? "binary" : "role_typed";
  header["schema"] = schema_to_json(model.schema);
  header["schema_hash"] = model.schema_hash;
  header["conditions_are_spans"] = model.conditions_are_spans;
  header["crf_constrained"] = model.crf_constrained;

  std::vector<Tensor<float>*> params = model.parameters();
  json tensors = json::array();
  for (Tensor<float>* p : params) {
    tensors.push_back({{"name", p->name},
                       {"rows", p->value.rows()},
                       {"cols", p->value.cols()}});
  }
  header["tensors"] = tensors;

  std::string hs = header.dump();
  out.write(kMagic, 4);
  write_u32(out, kVersion);
  write_u32(out, static_cast<uint32_t>(hs.size()));
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (Tensor<float>* p : params) {
    for (Eigen::Index r = 0; r < p->value.rows(); ++r) {
      for (Eigen::Index c = 0; c < p->value.cols(); ++c) write_f32(out, p->value(r, c));
    }
  }
  if (!out) throw std::runtime_error("checkpoint write failed: " + path);
  model.vocab.save(path + ".vocab");
}

TagPrimeModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw std::runtime_error("not a checkpoint file: " + path);
  }
  uint32_t version = read_u32(in);
  if (version != kVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  }
  uint32_t hlen = read_u32(in);
  std::string hs(hlen, '\0');
  in.read(hs.data(), hlen);
  if (!in) throw std::runtime_error("truncated checkpoint header: " + path);
  json header = json::parse(hs);

  TagPrimeModel model;
  model.enc_cfg = enc_cfg_from_json(header.at("encoder"));
  const json& v = header.at("variant");
  model.variant.cond_feature = v.at("cond_feature");
  model.variant.cond_priming = v.at("cond_priming");
  model.variant.rel_feature = v.at("rel_feature");
  model.variant.rel_priming = v.at("rel_priming");
  model.variant.decompose_by_relation = v.at("decompose_by_relation");
  model.infer_split.k = header.at("split_k");
  model.tagset = header.at("tagset").get<std::vector<std::string>>();
  model.scheme = header.at("scheme") == "binary" ? TagScheme::Binary : TagScheme::RoleTyped;
  model.schema = schema_from_json(header.at("schema"));
  model.schema_hash = header.at("schema_hash");
  model.conditions_are_spans = header.at("conditions_are_spans");
  model.crf_constrained = header.at("crf_constrained");
  if (model.schema.hash() != model.schema_hash) {
    throw std::runtime_error("schema hash mismatch in checkpoint header");
  }

  model.vocab = SubwordVocab::load(path + ".vocab");
  model.stack = init_stack<float>(model.enc_cfg, model.schema.condition_types,
                                  model.schema.relation_labels, 0);
  model.head = init_head<float>(model.head_input_dim(), model.enc_cfg.head_hidden,
                                model.num_tags(), 0);
  model.mask = make_bio_mask(model.num_tags(), model.crf_constrained);
  model.transitions.name = "crf.transitions";
  model.transitions.value.resize(model.num_tags() + 2, model.num_tags() + 2);
  model.transitions.zero_grad();

  std::vector<Tensor<float>*> params = model.parameters();
  const json& tensors = header.at("tensors");
  if (tensors.size() != params.size()) {
    throw std::runtime_error("checkpoint tensor count mismatch");
  }
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor<float>* p = params[i];
    const json& t = tensors.at(i);
    if (t.at("name") != p->name) {
      throw std::runtime_error("checkpoint tensor order mismatch at " + p->name);
    }
    Eigen::Index rows = t.at("rows"), cols = t.at("cols");
    if (rows != p->value.rows() || cols != p->value.cols()) {
      throw std::runtime_error("checkpoint tensor shape mismatch at " + p->name);
    }
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) p->value(r, c) = read_f32(in);
    }
  }
  if (!in) throw std::runtime_error("truncated checkpoint tensors: " + path);
  return model;
}

}  // namespace tagprime
