#include <cstring>
#include <string>

#include "dataclone/errors.hpp"
#include "dataclone/jsonl.hpp"
#include "dataclone/model.hpp"
#include "dataclone/rng.hpp"

namespace dataclone::model {

namespace {

constexpr char kMagic[6] = {'C', 'L', 'O', 'N', 'E', '1'};
constexpr uint32_t kVersion = 1;

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

struct Reader {
  const std::string& buf;
  size_t pos = 0;

  void need(size_t n) const {
    // pos <= buf.size() always holds; phrased to resist length overflow
    if (n > buf.size() - pos) fail(ErrorCode::BadCheckpoint, "truncated checkpoint");
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<uint8_t>(buf[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<uint8_t>(buf[pos + i])) << (8 * i);
    pos += 8;
    return v;
  }
  std::string bytes(size_t n) {
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

// Each record is length-prefixed: u64 byte length, then the record body of
// name (u32 length + UTF-8 bytes), shape (u32 count + u32 dims), and the f32
// little-endian payload whose element count is the shape product.
std::string tensor_records(const TensorMap& tensors) {
  std::string out;
  for (const auto& [name, t] : tensors) {
    std::string body;
    put_u32(body, static_cast<uint32_t>(name.size()));
    body += name;
    put_u32(body, static_cast<uint32_t>(t.shape.size()));
    for (size_t dim : t.shape) {
      if (dim > 0xffffffffULL) fail(ErrorCode::InvalidArgument, "tensor dimension too large");
      put_u32(body, static_cast<uint32_t>(dim));
    }
    for (double x : t.data) put_f32(body, static_cast<float>(x));
    put_u64(out, body.size());
    out += body;
  }
  return out;
}

TensorMap read_tensor_records(Reader& r) {
  TensorMap tensors;
  while (r.pos < r.buf.size()) {
    const uint64_t len = r.u64();
    r.need(len);
    const size_t end = r.pos + len;
    const std::string name = r.bytes(r.u32());
    const uint32_t ndim = r.u32();
    if (ndim > 8) fail(ErrorCode::BadCheckpoint, "implausible tensor rank for " + name);
    std::vector<size_t> shape(ndim);
    for (size_t& dim : shape) dim = r.u32();
    uint64_t expected = 1;
    for (size_t dim : shape) expected *= dim;
    if (r.pos + expected * 4 != end)
      fail(ErrorCode::BadCheckpoint, "record length mismatch for " + name);
    Tensor t(shape);
    for (size_t j = 0; j < t.size(); ++j) {
      const uint32_t bits = r.u32();
      float v;
      std::memcpy(&v, &bits, 4);
      t.data[j] = static_cast<double>(v);
    }
    if (r.pos != end) fail(ErrorCode::BadCheckpoint, "record length mismatch for " + name);
    if (!tensors.emplace(name, std::move(t)).second)
      fail(ErrorCode::BadCheckpoint, "duplicate tensor " + name);
  }
  return tensors;
}

std::string header(const Json& meta) {
  std::string out(kMagic, sizeof(kMagic));
  put_u32(out, kVersion);
  const std::string meta_str = meta.dump();
  put_u64(out, meta_str.size());
  out += meta_str;
  return out;
}

Json open_checkpoint(Reader& r, const std::string& expected_kind) {
  if (r.bytes(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic)))
    fail(ErrorCode::BadCheckpoint, "bad magic");
  const uint32_t version = r.u32();
  if (version != kVersion)
    fail(ErrorCode::BadCheckpoint, "unsupported checkpoint version " + std::to_string(version));
  Json meta;
  try {
    meta = Json::parse(r.bytes(r.u64()));
  } catch (const Json::parse_error& e) {
    fail(ErrorCode::BadCheckpoint, std::string("bad metadata: ") + e.what());
  }
  if (meta.value("kind", "") != expected_kind)
    fail(ErrorCode::BadCheckpoint, "expected a " + expected_kind + " checkpoint");
  return meta;
}

Json hparams_to_json(const HParams& hp) {
  return Json{{"d_model", hp.d_model},   {"n_layers", hp.n_layers},
              {"n_heads", hp.n_heads},   {"context_len", hp.context_len},
              {"vocab_size", hp.vocab_size}, {"causal", hp.causal}};
}

HParams hparams_from_json(const Json& j) {
  HParams hp;
  try {
    hp.d_model = j.at("d_model").get<size_t>();
    hp.n_layers = j.at("n_layers").get<size_t>();
    hp.n_heads = j.at("n_heads").get<size_t>();
    hp.context_len = j.at("context_len").get<size_t>();
    hp.vocab_size = j.at("vocab_size").get<size_t>();
    hp.causal = j.at("causal").get<bool>();
  } catch (const Json::exception& e) {
    fail(ErrorCode::BadCheckpoint, std::string("bad hparams: ") + e.what());
  }
  return hp;
}

}  // namespace

uint64_t params_checksum(const ModelParams& params) {
  const std::string bytes = tensor_records(params.tensors);
  return fnv1a64(bytes.data(), bytes.size());
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params) {
  std::string out = header(Json{{"kind", "model"}, {"hparams", hparams_to_json(params.hparams)}});
  out += tensor_records(params.tensors);
  write_file_atomic(path, out);
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  const std::string buf = read_file(path);
  Reader r{buf};
  const Json meta = open_checkpoint(r, "model");
  ModelParams params;
  params.hparams = hparams_from_json(meta.at("hparams"));
  params.tensors = read_tensor_records(r);
  if (r.pos != buf.size()) fail(ErrorCode::BadCheckpoint, "trailing bytes");
  if (params.tensors.find("tok_emb") == params.tensors.end())
    fail(ErrorCode::BadCheckpoint, "checkpoint has no model tensors");
  return params;
}

void save_adapter(const std::filesystem::path& path, const LoraAdapter& adapter,
                  uint64_t base_checksum) {
  Json meta{{"kind", "adapter"},
            {"rank", adapter.rank},
            {"alpha", adapter.alpha},
            {"targets", adapter.targets},
            {"base_checksum", base_checksum}};
  std::string out = header(meta);
  out += tensor_records(adapter.tensors);
  write_file_atomic(path, out);
}

std::pair<LoraAdapter, uint64_t> load_adapter(const std::filesystem::path& path) {
  const std::string buf = read_file(path);
  Reader r{buf};
  const Json meta = open_checkpoint(r, "adapter");
  LoraAdapter adapter;
  uint64_t base_checksum = 0;
  try {
    adapter.rank = meta.at("rank").get<size_t>();
    adapter.alpha = meta.at("alpha").get<double>();
    adapter.targets = meta.at("targets").get<std::vector<std::string>>();
    base_checksum = meta.at("base_checksum").get<uint64_t>();
  } catch (const Json::exception& e) {
    fail(ErrorCode::BadCheckpoint, std::string("bad adapter metadata: ") + e.what());
  }
  adapter.tensors = read_tensor_records(r);
  if (r.pos != buf.size()) fail(ErrorCode::BadCheckpoint, "trailing bytes");
  return {std::move(adapter), base_checksum};
}

}  // namespace dataclone::model
