// Copyright 2026 The MixRep Authors
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

#include "mixrep/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include "mixrep/errors.h"

namespace mixrep {
namespace {

constexpr char kMagic[4] = {'M', 'X', 'R', 'C'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u32(std::uint64_t v) {
    if (v > UINT32_MAX) throw FormatError("value exceeds u32", out_.size());
    const auto x = std::uint32_t(v);
    bytes(&x, 4);
  }
  void f64(double v) { bytes(&v, 8); }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& in) : in_(in) {}
  void bytes(void* p, std::size_t n) {
    if (in_.size() - pos_ < n) throw FormatError("truncated checkpoint", in_.size());
    std::memcpy(p, in_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, 4);
    return v;
  }
  double f64() {
    double v;
    bytes(&v, 8);
    return v;
  }
  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == in_.size(); }

 private:
  const std::vector<std::uint8_t>& in_;
  std::size_t pos_ = 0;
};

void write_config(Writer& w, const ModelConfig& c) {
  w.u32(c.featureDim);
  w.u32(c.modelDim);
  w.u32(c.encoderLayers);
  w.u32(c.decoderLayers);
  w.u32(c.attentionHeads);
  w.u32(c.ffnDim);
  w.u32(c.convKernel);
  w.u32(c.subsampleChannels);
  w.u32(c.vocabSize);
  w.u32(c.maxTargetLength);
  w.f64(c.dropout);
}

ModelConfig read_header(Reader& r) {
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("bad checkpoint magic", 0);
  const std::size_t versionAt = r.pos();
  if (r.u32() != kVersion) throw FormatError("unsupported checkpoint version", versionAt);
  ModelConfig c;
  c.featureDim = r.u32();
  c.modelDim = r.u32();
  c.encoderLayers = r.u32();
  c.decoderLayers = r.u32();
  c.attentionHeads = r.u32();
  c.ffnDim = r.u32();
  c.convKernel = r.u32();
  c.subsampleChannels = r.u32();
  c.vocabSize = r.u32();
  c.maxTargetLength = r.u32();
  c.dropout = r.f64();
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("invalid model config in checkpoint: ") + e.what(), 4);
  }
  return c;
}

std::vector<std::uint8_t> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

template <typename Real>
std::vector<std::uint8_t> encode_checkpoint(const Model<Real>& model) {
  Writer w;
  w.bytes(kMagic, 4);
  w.u32(kVersion);
  write_config(w, model.config());
  const auto& params = model.parameters();
  w.u32(params.size());
  for (const auto& p : params) {
    w.u32(p.name.size());
    w.bytes(p.name.data(), p.name.size());
    w.u32(p.tensor.rank());
    for (std::size_t d : p.tensor.shape()) w.u32(d);
    for (Real v : p.tensor.data()) {
      const float f = float(v);
      w.bytes(&f, 4);
    }
  }
  return w.take();
}

template <typename Real>
Model<Real> decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  Model<Real> model(read_header(r));
  std::map<std::string, Tensor<Real>*> byName;
  for (auto& p : model.parameters()) byName[p.name] = &p.tensor;

  const std::size_t countAt = r.pos();
  if (r.u32() != byName.size()) {
    throw FormatError("checkpoint parameter count does not match its config", countAt);
  }
  for (std::size_t i = 0; i < byName.size(); ++i) {
    const std::size_t at = r.pos();
    std::string name(r.u32(), '\0');
    r.bytes(name.data(), name.size());
    auto it = byName.find(name);
    if (it == byName.end() || !it->second) {
      throw FormatError("unexpected or repeated parameter '" + name + "'", at);
    }
    Tensor<Real>& t = *it->second;
    it->second = nullptr;
    Shape shape(r.u32());
    for (auto& d : shape) d = r.u32();
    if (shape != t.shape()) {
      throw FormatError("parameter '" + name + "' has shape " + shape_string(shape) +
                            ", expected " + shape_string(t.shape()),
                        at);
    }
    for (Real& v : t.mutable_data()) {
      float f;
      r.bytes(&f, 4);
      v = Real(f);
    }
  }
  if (!r.done()) throw FormatError("trailing bytes after checkpoint", r.pos());
  return model;
}

template <typename Real>
void save_checkpoint(const Model<Real>& model, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

template <typename Real>
Model<Real> load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint<Real>(read_all(path));
}

ModelConfig read_checkpoint_config(const std::filesystem::path& path) {
  const auto bytes = read_all(path);
  Reader r(bytes);
  return read_header(r);
}

template std::vector<std::uint8_t> encode_checkpoint(const Model<float>&);
template std::vector<std::uint8_t> encode_checkpoint(const Model<double>&);
template Model<float> decode_checkpoint(const std::vector<std::uint8_t>&);
template Model<double> decode_checkpoint(const std::vector<std::uint8_t>&);
template void save_checkpoint(const Model<float>&, const std::filesystem::path&);
template void save_checkpoint(const Model<double>&, const std::filesystem::path&);
template Model<float> load_checkpoint(const std::filesystem::path&);
template Model<double> load_checkpoint(const std::filesystem::path&);

}  // namespace mixrep
