#include "toolwear/io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "toolwear/error.hpp"

namespace toolwear {

namespace {

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <typename T>
  void le(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { le(v); }
  void u32(std::uint32_t v) { le(v); }
  void u64(std::uint64_t v) { le(v); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  Bytes take() { return std::move(out_); }

 private:
  Bytes out_;
};

class Reader {
 public:
  Reader(std::span<const std::uint8_t> in, const char* what) : in_(in), what_(what) {}

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return in_.size() - pos_; }

  [[noreturn]] void fail(const std::string& msg, std::size_t at) const {
    throw Error(ErrorKind::data_format, std::string(what_) + ": " + msg + " at offset " + std::to_string(at));
  }
  void need(std::size_t n) const {
    if (remaining() < n) fail("unexpected end of data (need " + std::to_string(n) + " bytes)", pos_);
  }
  template <typename T>
  T le() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(in_[pos_ + i]) << (8 * i));
    pos_ += sizeof(T);
    return v;
  }
  std::uint8_t u8() { return le<std::uint8_t>(); }
  std::uint16_t u16() { return le<std::uint16_t>(); }
  std::uint32_t u32() { return le<std::uint32_t>(); }
  std::uint64_t u64() { return le<std::uint64_t>(); }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }

 private:
  std::span<const std::uint8_t> in_;
  const char* what_;
  std::size_t pos_ = 0;
};

std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > 0xffffffffu) throw Error(ErrorKind::invalid_argument, std::string(what) + " does not fit in 32 bits");
  return static_cast<std::uint32_t>(v);
}

}  // namespace

Bytes encode_dataset(const SpectrogramDataset& ds) {
  if (ds.runs.empty()) throw Error(ErrorKind::empty_input, "dataset has no runs");
  const std::size_t bins = ds.runs.front().bins;
  const std::size_t frames = ds.runs.front().frames;
  Writer w;
  w.bytes("TWPS", 4);
  w.u16(kDatasetVersion);
  w.u32(checked_u32(bins, "bin count"));
  w.u32(checked_u32(frames, "frame count"));
  w.u32(checked_u32(ds.runs.size(), "run count"));
  w.u32(checked_u32(static_cast<std::size_t>(ds.n_total), "n_total"));
  w.u8(static_cast<std::uint8_t>(ds.sensor));
  w.u8(2);
  for (Material m : {Material::c45, Material::chromoly}) {
    const std::string name = to_string(m);
    w.u8(static_cast<std::uint8_t>(name.size()));
    w.bytes(name.data(), name.size());
  }
  for (const Spectrogram& sg : ds.runs) {
    if (sg.bins != bins || sg.frames != frames || sg.values.size() != bins * frames)
      throw Error(ErrorKind::dimension, "runs in a dataset must share one spectrogram shape");
    w.u32(checked_u32(static_cast<std::size_t>(sg.run_label), "run label"));
    w.u8(static_cast<std::uint8_t>(sg.material));
    for (float v : sg.values) w.f32(v);
  }
  return w.take();
}

SpectrogramDataset decode_dataset(std::span<const std::uint8_t> bytes) {
  Reader r(bytes, "dataset container");
  if (r.str(4 <= bytes.size() ? 4 : bytes.size()) != "TWPS") r.fail("bad magic (expected TWPS)", 0);
  const std::size_t version_at = r.offset();
  if (const auto v = r.u16(); v != kDatasetVersion) r.fail("unsupported version " + std::to_string(v), version_at);
  const std::uint32_t bins = r.u32();
  const std::uint32_t frames = r.u32();
  const std::size_t count_at = r.offset();
  const std::uint32_t run_count = r.u32();
  const std::uint32_t n_total = r.u32();
  if (bins == 0 || frames == 0) r.fail("zero spectrogram dimension", count_at - 8);
  if (run_count == 0) r.fail("no run records", count_at);
  if (n_total == 0 || n_total > 0x7fffffffu) r.fail("invalid n_total", count_at + 4);
  const std::size_t sensor_at = r.offset();
  const std::uint8_t sensor = r.u8();
  if (sensor > 1) r.fail("unknown sensor position " + std::to_string(sensor), sensor_at);
  const std::uint8_t material_count = r.u8();
  std::vector<Material> table;
  for (std::uint8_t i = 0; i < material_count; ++i) {
    const std::size_t at = r.offset();
    const std::string name = r.str(r.u8());
    if (name == to_string(Material::c45))
      table.push_back(Material::c45);
    else if (name == to_string(Material::chromoly))
      table.push_back(Material::chromoly);
    else
      r.fail("unknown material '" + name + "'", at);
  }
  const std::size_t values = static_cast<std::size_t>(bins) * frames;
  const std::size_t record = 5 + 4 * values;
  if (r.remaining() != record * run_count)
    r.fail("declared " + std::to_string(run_count) + " records of " + std::to_string(record) + " bytes but " +
               std::to_string(r.remaining()) + " bytes follow",
           r.offset());

  SpectrogramDataset ds;
  ds.n_total = static_cast<int>(n_total);
  ds.sensor = static_cast<SensorPosition>(sensor);
  ds.runs.reserve(run_count);
  for (std::uint32_t i = 0; i < run_count; ++i) {
    Spectrogram sg;
    sg.bins = bins;
    sg.frames = frames;
    sg.sensor = ds.sensor;
    const std::size_t label_at = r.offset();
    const std::uint32_t label = r.u32();
    if (label < 1 || label > n_total) r.fail("run label " + std::to_string(label) + " out of range", label_at);
    sg.run_label = static_cast<int>(label);
    const std::size_t mat_at = r.offset();
    const std::uint8_t mat = r.u8();
    if (mat >= table.size()) r.fail("material index " + std::to_string(mat) + " not in table", mat_at);
    sg.material = table[mat];
    sg.values.resize(values);
    for (std::size_t k = 0; k < values; ++k) {
      const std::size_t at = r.offset();
      const float v = r.f32();
      if (!(v >= 0.0f && v <= kDbCeiling)) r.fail("value outside [0, 90] dB", at);
      sg.values[k] = v;
    }
    ds.runs.push_back(std::move(sg));
  }
  return ds;
}

Bytes encode_checkpoint(const CheckpointFile& ckpt) {
  const nn::ModelParams& p = ckpt.checkpoint.params;
  const nn::Architecture& a = p.architecture();
  Writer w;
  w.bytes("TWCK", 4);
  w.u16(kCheckpointVersion);
  w.u32(checked_u32(a.input_height, "input height"));
  w.u32(checked_u32(a.input_width, "input width"));
  w.u32(checked_u32(a.kernel, "kernel"));
  w.u32(checked_u32(a.stride, "stride"));
  w.u32(checked_u32(a.padding, "padding"));
  w.u32(checked_u32(a.pool, "pool"));
  w.u8(static_cast<std::uint8_t>(a.pool_kind));
  w.u8(static_cast<std::uint8_t>(a.norm_kind));
  w.f64(a.leaky_slope);
  w.f64(a.dropout);
  w.u32(checked_u32(a.fc_hidden, "fc hidden"));
  w.u32(checked_u32(a.channels.size(), "block count"));
  for (std::size_t c : a.channels) w.u32(checked_u32(c, "channels"));
  w.u32(checked_u32(static_cast<std::size_t>(ckpt.n_total), "n_total"));
  w.u32(checked_u32(p.layout().size(), "tensor count"));
  for (const nn::ParamTensor& t : p.layout()) {
    w.u16(static_cast<std::uint16_t>(t.name.size()));
    w.bytes(t.name.data(), t.name.size());
    w.u8(static_cast<std::uint8_t>(t.shape.size()));
    for (std::size_t d : t.shape) w.u32(checked_u32(d, "tensor dim"));
    w.u8(t.trainable ? 1 : 0);
  }
  w.u64(p.size());
  for (double v : p.values()) w.f64(v);
  w.f64(ckpt.checkpoint.val_loss);
  w.u32(checked_u32(ckpt.checkpoint.epoch, "epoch"));
  return w.take();
}

CheckpointFile decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes, "checkpoint");
  if (r.str(4 <= bytes.size() ? 4 : bytes.size()) != "TWCK") r.fail("bad magic (expected TWCK)", 0);
  const std::size_t version_at = r.offset();
  if (const auto v = r.u16(); v != kCheckpointVersion) r.fail("unsupported version " + std::to_string(v), version_at);
  nn::Architecture a;
  a.input_height = r.u32();
  a.input_width = r.u32();
  a.kernel = r.u32();
  a.stride = r.u32();
  a.padding = r.u32();
  a.pool = r.u32();
  const std::size_t kinds_at = r.offset();
  const std::uint8_t pool_kind = r.u8();
  const std::uint8_t norm_kind = r.u8();
  if (pool_kind > 1 || norm_kind > 1) r.fail("unknown pool/norm variant", kinds_at);
  a.pool_kind = static_cast<nn::PoolKind>(pool_kind);
  a.norm_kind = static_cast<nn::NormKind>(norm_kind);
  a.leaky_slope = r.f64();
  a.dropout = r.f64();
  a.fc_hidden = r.u32();
  const std::size_t blocks_at = r.offset();
  const std::uint32_t blocks = r.u32();
  if (blocks == 0 || blocks > 64) r.fail("implausible block count " + std::to_string(blocks), blocks_at);
  a.channels.clear();
  for (std::uint32_t b = 0; b < blocks; ++b) a.channels.push_back(r.u32());

  CheckpointFile out;
  out.n_total = static_cast<int>(r.u32());
  nn::ModelParams params;
  try {
    params = nn::ModelParams(a);
  } catch (const Error& e) {
    r.fail(std::string("invalid architecture: ") + e.what(), kinds_at);
  }
  const std::size_t tensors_at = r.offset();
  const std::uint32_t tensor_count = r.u32();
  if (tensor_count != params.layout().size())
    r.fail("descriptor lists " + std::to_string(tensor_count) + " tensors, architecture has " +
               std::to_string(params.layout().size()),
           tensors_at);
  for (const nn::ParamTensor& expected : params.layout()) {
    const std::size_t at = r.offset();
    const std::string name = r.str(r.u16());
    const std::uint8_t rank = r.u8();
    nn::Shape shape;
    for (std::uint8_t i = 0; i < rank; ++i) shape.push_back(r.u32());
    const bool trainable = r.u8() != 0;
    if (name != expected.name || shape != expected.shape || trainable != expected.trainable)
      r.fail("tensor '" + name + "' " + nn::shape_string(shape) + " does not match expected '" + expected.name +
                 "' " + nn::shape_string(expected.shape),
             at);
  }
  const std::size_t count_at = r.offset();
  const std::uint64_t count = r.u64();
  if (count != params.size())
    r.fail("parameter count " + std::to_string(count) + " differs from architecture total " +
               std::to_string(params.size()),
           count_at);
  if (r.remaining() != count * 8 + 12)
    r.fail("payload length " + std::to_string(r.remaining()) + " does not match " + std::to_string(count) +
               " parameters",
           r.offset());
  for (double& v : params.values()) v = r.f64();
  out.checkpoint.params = std::move(params);
  out.checkpoint.val_loss = r.f64();
  out.checkpoint.epoch = r.u32();
  return out;
}

Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open '" + path.string() + "' for reading");
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::io, "cannot open '" + tmp.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorKind::io, "write to '" + tmp.string() + "' failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error(ErrorKind::io, "cannot move output into place at '" + path.string() + "'");
  }
}

void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

void ensure_writable(const std::filesystem::path& path) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::io, "cannot write '" + path.string() + "'");
  }
  std::error_code ec;
  std::filesystem::remove(tmp, ec);
}

void write_dataset(const std::filesystem::path& path, const SpectrogramDataset& ds) {
  write_file_atomic(path, encode_dataset(ds));
}

SpectrogramDataset read_dataset(const std::filesystem::path& path) { return decode_dataset(read_file(path)); }

void write_checkpoint(const std::filesystem::path& path, const CheckpointFile& ckpt) {
  write_file_atomic(path, encode_checkpoint(ckpt));
}

CheckpointFile read_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

}  // namespace toolwear
