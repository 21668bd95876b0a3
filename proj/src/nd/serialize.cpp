#include "clip/nd/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <stdexcept>

namespace clip::nd {

namespace {

constexpr std::string_view kCheckpointMagic = "CLIPCKPT";
constexpr std::string_view kMatrixMagic = "CLIPMAT1";

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f64(std::string& out, double d) { put_u64(out, std::bit_cast<std::uint64_t>(d)); }

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::string_view take(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw std::runtime_error("truncated binary file");
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint64_t u64() {
    auto s = take(8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(s[i]);
    return v;
  }
  std::uint32_t u32() {
    auto s = take(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(s[i]);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const Tensor* Checkpoint::find(std::string_view name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t.tensor;
  return nullptr;
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  nlohmann::json header;
  header["format_version"] = kCheckpointVersion;
  header["tensors"] = nlohmann::json::array();
  for (const auto& t : ckpt.tensors)
    header["tensors"].push_back({{"name", t.name}, {"shape", t.tensor.shape()}});
  header["meta"] = ckpt.meta;
  const std::string hdr = header.dump();

  std::string out(kCheckpointMagic);
  put_u32(out, kCheckpointVersion);
  put_u64(out, hdr.size());
  out += hdr;
  for (const auto& t : ckpt.tensors)
    for (double v : t.tensor.values()) put_f64(out, v);
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  if (r.take(kCheckpointMagic.size()) != kCheckpointMagic) {
    throw std::runtime_error("not a checkpoint file (bad magic)");
  }
  const auto version = r.u32();
  if (version != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  }
  const auto hlen = r.u64();
  const auto header = nlohmann::json::parse(r.take(hlen));
  Checkpoint ckpt;
  ckpt.meta = header.value("meta", nlohmann::json::object());
  for (const auto& entry : header.at("tensors")) {
    Shape shape = entry.at("shape").get<Shape>();
    Tensor t(shape);
    for (auto& v : t.values()) v = r.f64();
    ckpt.tensors.push_back({entry.at("name").get<std::string>(), std::move(t)});
  }
  if (!r.done()) throw std::runtime_error("trailing bytes after checkpoint payload");
  return ckpt;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path));
}

Checkpoint snapshot(const ParamList& params, nlohmann::json meta) {
  Checkpoint c;
  c.meta = std::move(meta);
  for (const auto& p : params) c.tensors.push_back({p.name, p.var.value()});
  return c;
}

void restore(ParamList& params, const Checkpoint& ckpt) {
  for (auto& p : params) {
    const Tensor* t = ckpt.find(p.name);
    if (!t) throw std::runtime_error("checkpoint is missing parameter '" + p.name + "'");
    if (t->shape() != p.var.shape()) {
      throw ShapeError("checkpoint parameter '" + p.name + "' has shape " + shape_str(t->shape()) +
                       ", model expects " + shape_str(p.var.shape()));
    }
    p.var.mutable_value() = *t;
  }
}

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) out[static_cast<std::size_t>(i)] = kHex[h & 0xF];
  return out;
}

std::string fingerprint(const Checkpoint& ckpt) { return fnv1a_hex(encode_checkpoint(ckpt)); }

std::string encode_matrix_file(const MatrixFile& file) {
  const Tensor& m = file.matrix;
  if (m.rank() != 2) throw ShapeError("matrix file needs a 2-d tensor, got " + shape_str(m.shape()));
  nlohmann::json header = file.header;
  header["rows"] = m.shape()[0];
  header["cols"] = m.shape()[1];
  const std::string hdr = header.dump();
  std::string out(kMatrixMagic);
  put_u64(out, hdr.size());
  out += hdr;
  for (double v : m.values()) put_f64(out, v);
  return out;
}

MatrixFile decode_matrix_file(std::string_view bytes) {
  Reader r(bytes);
  if (r.take(kMatrixMagic.size()) != kMatrixMagic) {
    throw std::runtime_error("not a matrix file (bad magic)");
  }
  const auto hlen = r.u64();
  MatrixFile f;
  f.header = nlohmann::json::parse(r.take(hlen));
  const auto rows = f.header.at("rows").get<std::size_t>();
  const auto cols = f.header.at("cols").get<std::size_t>();
  f.matrix = Tensor({rows, cols});
  for (auto& v : f.matrix.values()) v = r.f64();
  if (!r.done()) throw std::runtime_error("trailing bytes after matrix payload");
  return f;
}

void save_matrix_file(const std::filesystem::path& path, const MatrixFile& file) {
  write_file(path, encode_matrix_file(file));
}

MatrixFile load_matrix_file(const std::filesystem::path& path) {
  return decode_matrix_file(read_file(path));
}

}  // namespace clip::nd
