// Copyright 2026 The msaasr Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "msaasr/speaker_module.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "msaasr/error.hpp"
#include "msaasr/hash.hpp"
#include "msaasr/rng.hpp"

namespace msaasr {
namespace {

constexpr double kEmbeddingNormFloor = 1e-8;

std::string layer_name(std::string_view stack, std::size_t layer, std::string_view leaf) {
  return std::string(stack) + "." + std::to_string(layer) + "." + std::string(leaf);
}

struct Spec {
  std::string name;
  Shape shape;
  enum Init { kUniform, kZero, kOne } init;
};

void add_attention(std::vector<Spec>& out, const std::string& prefix, std::size_t d) {
  for (const char* w : {"wq", "wk", "wv", "wo"}) out.push_back({prefix + "." + w, {d, d}, Spec::kUniform});
  out.push_back({prefix + ".bo", {d}, Spec::kZero});
}

void add_norm(std::vector<Spec>& out, const std::string& prefix, std::size_t d) {
  out.push_back({prefix + ".g", {d}, Spec::kOne});
  out.push_back({prefix + ".b", {d}, Spec::kZero});
}

void add_ffn(std::vector<Spec>& out, const std::string& prefix, std::size_t d, std::size_t ff) {
  out.push_back({prefix + ".w1", {d, ff}, Spec::kUniform});
  out.push_back({prefix + ".b1", {ff}, Spec::kZero});
  out.push_back({prefix + ".w2", {ff, d}, Spec::kUniform});
  out.push_back({prefix + ".b2", {d}, Spec::kZero});
}

std::vector<Spec> layout(const SpeakerModuleConfig& c) {
  std::vector<Spec> s;
  const std::size_t d = c.model_dim;
  s.push_back({"enc.in.w", {c.feature_dim, d}, Spec::kUniform});
  s.push_back({"enc.in.b", {d}, Spec::kZero});
  for (std::size_t l = 0; l < c.encoder_layers; ++l) {
    add_norm(s, layer_name("enc", l, "ln1"), d);
    add_attention(s, layer_name("enc", l, "attn"), d);
    add_norm(s, layer_name("enc", l, "ln2"), d);
    add_ffn(s, layer_name("enc", l, "ffn"), d, c.ffn_dim);
  }
  add_norm(s, "enc.ln", d);
  for (std::size_t l = 0; l < c.decoder_layers; ++l) {
    add_norm(s, layer_name("dec", l, "ln1"), d);
    add_attention(s, layer_name("dec", l, "self"), d);
    add_norm(s, layer_name("dec", l, "ln2"), d);
    add_attention(s, layer_name("dec", l, "cross"), d);
    add_norm(s, layer_name("dec", l, "ln3"), d);
    add_ffn(s, layer_name("dec", l, "ffn"), d, c.ffn_dim);
  }
  add_norm(s, "dec.ln", d);
  s.push_back({"out.w", {d, c.embedding_dim}, Spec::kUniform});
  s.push_back({"out.b", {c.embedding_dim}, Spec::kZero});
  return s;
}

Tensor position_table(std::size_t rows, std::size_t dim) {
  Tensor t = Tensor::zeros(rows, dim);
  for (std::size_t l = 0; l < rows; ++l) sinusoidal_position(static_cast<double>(l), t.row(l));
  return t;
}

ad::Var attention(const BoundParams& p, const std::string& prefix, ad::Var query_in,
                  ad::Var key_in, ad::Var value_in, bool causal) {
  const ad::Var q = ad::matmul(query_in, p[prefix + ".wq"]);
  const ad::Var k = ad::matmul(key_in, p[prefix + ".wk"]);
  const ad::Var v = ad::matmul(value_in, p[prefix + ".wv"]);
  const ad::Var merged = ad::attention(q, k, v, p.config().heads, causal);
  return ad::add_bias(ad::matmul(merged, p[prefix + ".wo"]), p[prefix + ".bo"]);
}

ad::Var norm_layer(const BoundParams& p, const std::string& prefix, ad::Var x) {
  return ad::layer_norm(x, p[prefix + ".g"], p[prefix + ".b"]);
}

ad::Var feed_forward(const BoundParams& p, const std::string& prefix, ad::Var x) {
  const ad::Var h = ad::gelu(ad::add_bias(ad::matmul(x, p[prefix + ".w1"]), p[prefix + ".b1"]));
  return ad::add_bias(ad::matmul(h, p[prefix + ".w2"]), p[prefix + ".b2"]);
}

}  // namespace

void SpeakerModuleConfig::validate() const {
  require(model_dim >= 2 && heads >= 1 && model_dim % heads == 0, ErrorKind::kConfig,
          "model.model_dim must be divisible by model.heads");
  require(embedding_dim >= 2, ErrorKind::kConfig, "model.embedding_dim must be >= 2");
  require(asr_keyed_layers <= decoder_layers, ErrorKind::kConfig,
          "model.asr_keyed_layers must not exceed model.decoder_layers");
  require(decoder_layers >= 1, ErrorKind::kConfig, "model.decoder_layers must be >= 1");
  require(feature_dim >= 1 && ffn_dim >= 1, ErrorKind::kConfig, "model dims must be positive");
  require(vocab_size > static_cast<std::size_t>(kFirstContentToken), ErrorKind::kConfig,
          "model.vocab_size too small");
  require(max_positions >= 3, ErrorKind::kConfig, "model.max_positions must be >= 3");
}

std::string SpeakerModuleConfig::canonical() const {
  std::ostringstream os;
  os << "fa=" << feature_dim << ";fe=" << model_dim << ";fd=" << embedding_dim
     << ";vocab=" << vocab_size << ";maxpos=" << max_positions << ";enc=" << encoder_layers
     << ";dec=" << decoder_layers << ";asr_keyed=" << asr_keyed_layers << ";heads=" << heads
     << ";ffn=" << ffn_dim << ";init_seed=" << init_seed;
  return os.str();
}

SpeakerModuleParams SpeakerModuleParams::initialize(const SpeakerModuleConfig& config) {
  config.validate();
  SpeakerModuleParams p;
  p.config_ = config;
  Rng rng(config.init_seed);
  for (const Spec& s : layout(config)) {
    Tensor t(s.shape);
    switch (s.init) {
      case Spec::kUniform: {
        const double bound = 1.0 / std::sqrt(static_cast<double>(s.shape.front()));
        for (double& v : t.data()) v = rng.uniform(-bound, bound);
        break;
      }
      case Spec::kOne: t.fill(1.0); break;
      case Spec::kZero: break;
    }
    p.index_.emplace(s.name, p.tensors_.size());
    p.tensors_.push_back({s.name, std::move(t)});
  }
  return p;
}

SpeakerModuleParams SpeakerModuleParams::from_tensors(const SpeakerModuleConfig& config,
                                                      std::vector<NamedTensor> tensors) {
  config.validate();
  const auto specs = layout(config);
  require(specs.size() == tensors.size(), ErrorKind::kData,
          "parameter count " + std::to_string(tensors.size()) + " does not match the model layout (" +
              std::to_string(specs.size()) + ")");
  SpeakerModuleParams p;
  p.config_ = config;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    require(specs[i].name == tensors[i].name, ErrorKind::kData,
            "unexpected parameter " + tensors[i].name + " (wanted " + specs[i].name + ")");
    require(specs[i].shape == tensors[i].value.shape(), ErrorKind::kData,
            "parameter " + specs[i].name + " has shape " + shape_string(tensors[i].value.shape()));
    require(tensors[i].value.all_finite(), ErrorKind::kNumeric,
            "parameter " + specs[i].name + " is not finite");
    p.index_.emplace(specs[i].name, i);
  }
  p.tensors_ = std::move(tensors);
  return p;
}

std::size_t SpeakerModuleParams::index_of(std::string_view name) const {
  auto it = index_.find(std::string(name));
  require(it != index_.end(), ErrorKind::kInvalidArgument, "no parameter named " + std::string(name));
  return it->second;
}

std::size_t SpeakerModuleParams::scalar_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.value.size();
  return n;
}

std::uint64_t SpeakerModuleParams::hash() const {
  Fnv1a h;
  for (const auto& t : tensors_) {
    h.text(t.name);
    h.doubles(t.value.data());
  }
  return h.digest();
}

BoundParams::BoundParams(ad::Graph& graph, const SpeakerModuleParams& params, bool trainable)
    : params_(&params) {
  vars_.reserve(params.tensors().size());
  for (const auto& t : params.tensors())
    vars_.push_back(trainable ? graph.variable(t.value) : graph.constant(t.value));
}

BoundParams::BoundParams(const SpeakerModuleParams& params, std::vector<ad::Var> vars)
    : params_(&params), vars_(std::move(vars)) {
  require(vars_.size() == params.tensors().size(), ErrorKind::kInvalidArgument,
          "BoundParams: expected " + std::to_string(params.tensors().size()) + " variables");
  for (std::size_t i = 0; i < vars_.size(); ++i) {
    require(vars_[i].value().shape() == params.tensors()[i].value.shape(), ErrorKind::kDimension,
            "BoundParams: variable " + params.tensors()[i].name + " has the wrong shape");
  }
}

ad::Var speaker_encode(ad::Graph& g, const BoundParams& p, const Tensor& frames) {
  const auto& c = p.config();
  require(frames.rank() == 2 && frames.rows() >= 1, ErrorKind::kDegenerate,
          "speaker_encode: empty feature stream");
  require(frames.cols() == c.feature_dim, ErrorKind::kDimension,
          "speaker_encode: feature dim " + std::to_string(frames.cols()) + " != " +
              std::to_string(c.feature_dim));
  ad::Var x = ad::add_bias(ad::matmul(g.constant(frames), p["enc.in.w"]), p["enc.in.b"]);
  x = ad::add(x, g.constant(position_table(frames.rows(), c.model_dim)));
  for (std::size_t l = 0; l < c.encoder_layers; ++l) {
    const ad::Var h = norm_layer(p, layer_name("enc", l, "ln1"), x);
    x = ad::add(x, attention(p, layer_name("enc", l, "attn"), h, h, h, false));
    x = ad::add(x, feed_forward(p, layer_name("enc", l, "ffn"), norm_layer(p, layer_name("enc", l, "ln2"), x)));
  }
  x = norm_layer(p, "enc.ln", x);
  require(x.value().all_finite(), ErrorKind::kNumeric, "speaker_encode: non-finite activations");
  return x;
}

ad::Var speaker_decode(ad::Graph& g, const BoundParams& p, std::span<const std::int32_t> tokens,
                       const SharedTokenEmbedding& embedding, ad::Var h_asr, ad::Var h_spk) {
  const auto& c = p.config();
  require(!tokens.empty(), ErrorKind::kDegenerate, "speaker_decode: no tokens");
  require(h_asr.value().shape() == h_spk.value().shape(), ErrorKind::kDimension,
          "speaker_decode: H^asr " + shape_string(h_asr.value().shape()) + " vs H^spk " +
              shape_string(h_spk.value().shape()));
  require(h_spk.value().cols() == c.model_dim, ErrorKind::kDimension,
          "speaker_decode: encoder width does not match model_dim");
  require(embedding.word().cols() == c.model_dim, ErrorKind::kDimension,
          "speaker_decode: token embedding width does not match model_dim");
  for (auto t : tokens) {
    require(t >= 0 && static_cast<std::size_t>(t) < c.vocab_size, ErrorKind::kInvalidArgument,
            "speaker_decode: token id " + std::to_string(t) + " out of vocabulary");
  }
  ad::Var x = g.constant(embedding.embed(tokens));
  for (std::size_t l = 0; l < c.decoder_layers; ++l) {
    const ad::Var h = norm_layer(p, layer_name("dec", l, "ln1"), x);
    x = ad::add(x, attention(p, layer_name("dec", l, "self"), h, h, h, true));
    const ad::Var q = norm_layer(p, layer_name("dec", l, "ln2"), x);
    const ad::Var keys = l < c.asr_keyed_layers ? h_asr : h_spk;
    x = ad::add(x, attention(p, layer_name("dec", l, "cross"), q, keys, h_spk, false));
    x = ad::add(x, feed_forward(p, layer_name("dec", l, "ffn"), norm_layer(p, layer_name("dec", l, "ln3"), x)));
  }
  x = norm_layer(p, "dec.ln", x);
  const ad::Var e = ad::add_bias(ad::matmul(x, p["out.w"]), p["out.b"]);
  require(e.value().all_finite(), ErrorKind::kNumeric, "speaker_decode: non-finite activations");
  return ad::row_norm_floor(e, kEmbeddingNormFloor);
}

Tensor speaker_encode(const SpeakerModuleParams& params, const AcousticFeatures& feats) {
  feats.validate();
  ad::Graph g;
  const BoundParams p(g, params, false);
  return speaker_encode(g, p, feats.frames).value();
}

EmbeddingSequence speaker_decode(const SpeakerModuleParams& params,
                                 std::span<const std::int32_t> tokens,
                                 const SharedTokenEmbedding& embedding, const Tensor& h_asr,
                                 const Tensor& h_spk) {
  ad::Graph g;
  const BoundParams p(g, params, false);
  const ad::Var e = speaker_decode(g, p, tokens, embedding, g.constant(h_asr), g.constant(h_spk));
  EmbeddingSequence out{e.value(), std::vector<bool>(tokens.size())};
  for (std::size_t i = 0; i < tokens.size(); ++i) out.mask[i] = !is_special_token(tokens[i]);
  return out;
}

TokenAttribution attribute_tokens(const SpeakerModuleParams& params, const SyntheticWorld& world,
                                  const AcousticFeatures& feats,
                                  std::optional<std::span<const std::int32_t>> gold_tokens) {
  TokenAttribution out;
  out.asr = gold_tokens ? gold_transcript_output(world, feats, *gold_tokens)
                        : asr_transcribe(world, feats);
  ad::Graph g;
  const BoundParams p(g, params, false);
  const ad::Var h_spk = speaker_encode(g, p, feats.frames);
  const ad::Var e = speaker_decode(g, p, out.asr.tokens, world.token_embedding(),
                                   g.constant(out.asr.encoder_features), h_spk);
  out.embeddings = EmbeddingSequence{e.value(), out.asr.content_mask()};
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoint container

namespace {

enum class RecordType : std::uint8_t { kFloat64 = 0, kText = 1 };

class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void raw(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }

  void tensor(const std::string& name, const Tensor& t) {
    u32(static_cast<std::uint32_t>(name.size()));
    raw(name);
    u8(static_cast<std::uint8_t>(RecordType::kFloat64));
    u32(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) u64(d);
    for (double v : t.data()) u64(std::bit_cast<std::uint64_t>(v));
  }
  void text(const std::string& name, const std::string& body) {
    u32(static_cast<std::uint32_t>(name.size()));
    raw(name);
    u8(static_cast<std::uint8_t>(RecordType::kText));
    u32(1);
    u64(body.size());
    raw(body);
  }

  const std::vector<unsigned char>& bytes() const { return buf_; }

 private:
  std::vector<unsigned char> buf_;
};

class Reader {
 public:
  Reader(std::vector<unsigned char> buf, std::string source)
      : buf_(std::move(buf)), source_(std::move(source)) {}

  bool done() const { return pos_ == buf_.size(); }
  std::uint8_t u8() { need(1); return buf_[pos_++]; }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf_[pos_++]) << (8 * i);
    return v;
  }
  std::string raw(std::size_t n) {
    need(n);
    std::string s(buf_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  buf_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n) {
    require(pos_ + n <= buf_.size(), ErrorKind::kData, source_ + ": truncated checkpoint");
  }

  std::vector<unsigned char> buf_;
  std::string source_;
  std::size_t pos_ = 0;
};

nlohmann::ordered_json config_json(const SpeakerModuleConfig& c) {
  return {{"feature_dim", c.feature_dim},       {"model_dim", c.model_dim},
          {"embedding_dim", c.embedding_dim},   {"vocab_size", c.vocab_size},
          {"max_positions", c.max_positions},   {"encoder_layers", c.encoder_layers},
          {"decoder_layers", c.decoder_layers}, {"asr_keyed_layers", c.asr_keyed_layers},
          {"heads", c.heads},                   {"ffn_dim", c.ffn_dim},
          {"init_seed", c.init_seed}};
}

SpeakerModuleConfig config_from_json(const nlohmann::json& j) {
  SpeakerModuleConfig c;
  c.feature_dim = j.at("feature_dim").get<std::size_t>();
  c.model_dim = j.at("model_dim").get<std::size_t>();
  c.embedding_dim = j.at("embedding_dim").get<std::size_t>();
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.max_positions = j.at("max_positions").get<std::size_t>();
  c.encoder_layers = j.at("encoder_layers").get<std::size_t>();
  c.decoder_layers = j.at("decoder_layers").get<std::size_t>();
  c.asr_keyed_layers = j.at("asr_keyed_layers").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.ffn_dim = j.at("ffn_dim").get<std::size_t>();
  c.init_seed = j.at("init_seed").get<std::uint64_t>();
  return c;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto& tensors = ckpt.params.tensors();
  const bool with_optimizer = !ckpt.adam_m.empty();
  if (with_optimizer) {
    require(ckpt.adam_m.size() == tensors.size() && ckpt.adam_v.size() == tensors.size(),
            ErrorKind::kInvalidArgument, "optimizer moments do not match parameters");
  }
  nlohmann::ordered_json meta;
  meta["config"] = config_json(ckpt.params.config());
  meta["world_seed"] = ckpt.world_seed;
  meta["world_config_hash"] = ckpt.world_config_hash;
  meta["experiment_config_hash"] = ckpt.experiment_config_hash;
  meta["optimizer_step"] = ckpt.optimizer_step;
  meta["notes"] = ckpt.notes;

  Writer w;
  w.raw("MSAS");
  w.u32(kCheckpointVersion);
  const std::size_t records = 1 + tensors.size() * (with_optimizer ? 3 : 1);
  w.u32(static_cast<std::uint32_t>(records));
  w.text("meta", meta.dump());
  for (const auto& t : tensors) w.tensor("param/" + t.name, t.value);
  if (with_optimizer) {
    for (std::size_t i = 0; i < tensors.size(); ++i) w.tensor("adam.m/" + tensors[i].name, ckpt.adam_m[i]);
    for (std::size_t i = 0; i < tensors.size(); ++i) w.tensor("adam.v/" + tensors[i].name, ckpt.adam_v[i]);
  }
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    require(static_cast<bool>(out), ErrorKind::kIo, "cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(w.bytes().data()),
              static_cast<std::streamsize>(w.bytes().size()));
    require(static_cast<bool>(out), ErrorKind::kIo, "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::kIo, "cannot read checkpoint " + path.string());
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(std::move(buf), path.string());
  require(r.raw(4) == "MSAS", ErrorKind::kData, path.string() + ": not a checkpoint (bad magic)");
  const std::uint32_t version = r.u32();
  require(version == kCheckpointVersion, ErrorKind::kData,
          path.string() + ": unsupported checkpoint version " + std::to_string(version));
  const std::uint32_t count = r.u32();

  nlohmann::json meta;
  std::vector<NamedTensor> params, m, v;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.raw(r.u32());
    const auto type = static_cast<RecordType>(r.u8());
    const std::uint32_t rank = r.u32();
    Shape shape(rank);
    for (auto& d : shape) d = r.u64();
    if (type == RecordType::kText) {
      const std::string body = r.raw(shape.at(0));
      if (name == "meta") {
        try {
          meta = nlohmann::json::parse(body);
        } catch (const nlohmann::json::exception& e) {
          fail(ErrorKind::kData, path.string() + ": bad meta record: " + e.what());
        }
      }
      continue;
    }
    require(type == RecordType::kFloat64, ErrorKind::kData,
            path.string() + ": unknown record type for " + name);
    std::vector<double> data(shape_size(shape));
    for (double& x : data) x = std::bit_cast<double>(r.u64());
    Tensor t(shape, std::move(data));
    auto slash = name.find('/');
    const std::string kind = name.substr(0, slash);
    const std::string leaf = slash == std::string::npos ? name : name.substr(slash + 1);
    if (kind == "param") params.push_back({leaf, std::move(t)});
    else if (kind == "adam.m") m.push_back({leaf, std::move(t)});
    else if (kind == "adam.v") v.push_back({leaf, std::move(t)});
  }
  require(r.done(), ErrorKind::kData, path.string() + ": trailing bytes after records");
  require(!meta.is_null(), ErrorKind::kData, path.string() + ": missing meta record");

  Checkpoint ckpt;
  try {
    ckpt.params = SpeakerModuleParams::from_tensors(config_from_json(meta.at("config")), std::move(params));
    ckpt.world_seed = meta.at("world_seed").get<std::uint64_t>();
    ckpt.world_config_hash = meta.at("world_config_hash").get<std::string>();
    ckpt.experiment_config_hash = meta.at("experiment_config_hash").get<std::string>();
    ckpt.optimizer_step = meta.at("optimizer_step").get<std::int64_t>();
    ckpt.notes = meta.value("notes", "");
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kData, path.string() + ": bad meta record: " + e.what());
  }
  for (auto& t : m) ckpt.adam_m.push_back(std::move(t.value));
  for (auto& t : v) ckpt.adam_v.push_back(std::move(t.value));
  return ckpt;
}

}  // namespace msaasr
