#include "clip/datakit/datakit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include <boost/archive/iterators/base64_from_binary.hpp>
#include <boost/archive/iterators/binary_from_base64.hpp>
#include <boost/archive/iterators/transform_width.hpp>

#include "clip/nd/serialize.hpp"
#include "clip/textproc/bpe.hpp"

namespace clip::datakit {

namespace fs = std::filesystem;

PairDataset build_pairs(std::span<const PairRecord> source, const std::vector<std::string>& queries,
                        std::size_t per_query_cap) {
  if (queries.empty()) throw std::invalid_argument("build_pairs: no queries");
  if (per_query_cap == 0) throw std::invalid_argument("build_pairs: per-query cap must be at least 1");
  std::vector<std::string> needles;
  for (const auto& q : queries) {
    if (q.empty()) throw std::invalid_argument("build_pairs: empty query");
    needles.push_back(textproc::lowercase(q));
  }
  PairDataset out;
  for (const auto& q : queries) out.manifest.push_back({q, 0, 0});
  for (const auto& rec : source) {
    const auto caption = textproc::lowercase(rec.text);
    std::ptrdiff_t claimer = -1;
    for (std::size_t q = 0; q < needles.size(); ++q) {
      if (caption.find(needles[q]) == std::string::npos) continue;
      ++out.manifest[q].matched;
      if (claimer < 0 && out.manifest[q].admitted < per_query_cap) claimer = static_cast<std::ptrdiff_t>(q);
    }
    if (claimer < 0) continue;
    ++out.manifest[static_cast<std::size_t>(claimer)].admitted;
    auto admitted = rec;
    admitted.metadata["query"] = queries[static_cast<std::size_t>(claimer)];
    out.records.push_back(std::move(admitted));
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<std::string> known_shapes() { return {"circle", "square", "triangle", "diamond", "cross", "ring"}; }

std::vector<std::pair<std::string, RGB>> known_colors() {
  return {{"red", {0.90, 0.10, 0.10}},    {"green", {0.10, 0.75, 0.20}}, {"blue", {0.15, 0.30, 0.95}},
          {"yellow", {0.95, 0.90, 0.10}}, {"purple", {0.60, 0.20, 0.80}}, {"orange", {1.00, 0.55, 0.05}},
          {"white", {0.95, 0.95, 0.95}},  {"cyan", {0.10, 0.85, 0.90}}};
}

namespace {

bool is_known_shape(const std::string& s) {
  const auto all = known_shapes();
  return std::find(all.begin(), all.end(), s) != all.end();
}

RGB color_of(const std::string& name) {
  for (const auto& [n, c] : known_colors())
    if (n == name) return c;
  throw std::invalid_argument("unknown color '" + name + "'");
}

// Radius band in pixels at 32×32; scaled linearly for other sizes.
std::pair<double, double> radius_band(const std::string& size) {
  if (size == "small") return {5.0, 7.0};
  if (size == "medium") return {7.0, 9.0};
  if (size == "large") return {9.0, 12.0};
  throw std::invalid_argument("unknown size '" + size + "'");
}

bool inside(const std::string& shape, double x, double y, double r, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  const double u = c * x + s * y, v = -s * x + c * y;
  if (shape == "circle") return u * u + v * v <= r * r;
  if (shape == "square") return std::abs(u) <= 0.8 * r && std::abs(v) <= 0.8 * r;
  if (shape == "diamond") return std::abs(u) + std::abs(v) <= r;
  if (shape == "cross") {
    const double t = r / 3.0;
    return (std::abs(u) <= t && std::abs(v) <= r) || (std::abs(v) <= t && std::abs(u) <= r);
  }
  if (shape == "ring") {
    const double d2 = u * u + v * v;
    return d2 <= r * r && d2 >= 0.36 * r * r;
  }
  if (shape == "triangle") {
    // Equilateral, circumradius r: inside all three edges at distance r/2.
    for (int k = 0; k < 3; ++k) {
      const double a = std::numbers::pi / 2 + k * 2 * std::numbers::pi / 3;
      if (u * std::cos(a) + v * std::sin(a) > r / 2) return false;
    }
    return true;
  }
  throw std::invalid_argument("unknown shape '" + shape + "'");
}

double quantize(double v) { return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }

std::string fill_template(std::string t, const std::string& key, const std::string& value) {
  for (auto pos = t.find(key); pos != std::string::npos; pos = t.find(key, pos + value.size()))
    t.replace(pos, key.size(), value);
  return t;
}

std::uint64_t mix(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

void background(nd::Image& img, nd::Rng& rng) {
  const double base = rng.uniform(0.02, 0.15);
  for (auto& p : img.pixels) p = base + rng.uniform(-0.03, 0.03);
}

void paint(nd::Image& img, const std::string& shape, RGB color, double cx, double cy, double radius,
           double angle) {
  constexpr int kSub = 4;
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      int hits = 0;
      for (int sy = 0; sy < kSub; ++sy)
        for (int sx = 0; sx < kSub; ++sx) {
          const double px = static_cast<double>(x) + (sx + 0.5) / kSub - cx;
          const double py = static_cast<double>(y) + (sy + 0.5) / kSub - cy;
          hits += inside(shape, px, py, radius, angle);
        }
      if (!hits) continue;
      const double a = static_cast<double>(hits) / (kSub * kSub);
      const double rgb[3] = {color.r, color.g, color.b};
      for (std::size_t c = 0; c < 3; ++c) img.at(y, x, c) = (1 - a) * img.at(y, x, c) + a * rgb[c];
    }
  }
}

void finish(nd::Image& img) {
  for (auto& p : img.pixels) p = quantize(p);
}

}  // namespace

void SyntheticSpec::validate() const {
  if (shapes.size() < 2) throw std::invalid_argument("synthetic data needs at least 2 shapes");
  if (colors.size() < 2) throw std::invalid_argument("synthetic data needs at least 2 colors");
  if (sizes.empty()) throw std::invalid_argument("synthetic data needs at least one size");
  if (templates.empty()) throw std::invalid_argument("synthetic data needs at least one caption template");
  if (images_per_combo == 0) throw std::invalid_argument("images_per_combo must be positive");
  if (image_size < 8) throw std::invalid_argument("synthetic image_size must be at least 8");
  for (const auto& s : shapes)
    if (!is_known_shape(s)) throw std::invalid_argument("unknown shape '" + s + "'");
  for (const auto& c : colors) color_of(c);
  for (const auto& s : sizes) radius_band(s);
  const auto all = all_combos();
  for (const auto& h : held_out)
    if (std::find(all.begin(), all.end(), h) == all.end())
      throw std::invalid_argument("held-out combo '" + h.label() + "' is not in the grid");
  if (seen_combos().empty()) throw std::invalid_argument("held-out set covers every (shape, color) combination");
}

std::vector<ShapeColor> SyntheticSpec::all_combos() const {
  std::vector<ShapeColor> out;
  for (const auto& s : shapes)
    for (const auto& c : colors) out.push_back({s, c});
  return out;
}

std::vector<ShapeColor> SyntheticSpec::seen_combos() const {
  std::vector<ShapeColor> out;
  for (const auto& combo : all_combos())
    if (std::find(held_out.begin(), held_out.end(), combo) == held_out.end()) out.push_back(combo);
  return out;
}

nd::Image render_shape(const std::string& shape, RGB color, double cx, double cy, double radius, double angle,
                       std::size_t size, nd::Rng& rng) {
  nd::Image img(size, size);
  background(img, rng);
  paint(img, shape, color, cx, cy, radius, angle);
  finish(img);
  return img;
}

std::vector<unsigned char> shape_mask(const std::string& shape, double cx, double cy, double radius,
                                      double angle, std::size_t size) {
  std::vector<unsigned char> mask(size * size);
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x)
      mask[y * size + x] = inside(shape, static_cast<double>(x) + 0.5 - cx, static_cast<double>(y) + 0.5 - cy,
                                  radius, angle);
  return mask;
}

SyntheticCorpus gen_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const double scale = static_cast<double>(spec.image_size) / 32.0;
  SyntheticCorpus out;
  const auto combos = spec.all_combos();
  for (std::size_t ci = 0; ci < combos.size(); ++ci) {
    const auto& combo = combos[ci];
    const bool held = std::find(spec.held_out.begin(), spec.held_out.end(), combo) != spec.held_out.end();
    auto& dest = held ? out.held_out : out.seen;
    // Per-combo streams keep a combo's images fixed when the held-out set changes.
    nd::Rng rng(mix(spec.seed, ci));
    const RGB nominal = color_of(combo.color);
    for (std::size_t i = 0; i < spec.images_per_combo; ++i) {
      const auto& size_name = spec.sizes[rng.index(spec.sizes.size())];
      const auto [lo, hi] = radius_band(size_name);
      const double r = rng.uniform(lo, hi) * scale;
      const double margin = r + 1.0;
      const double side = static_cast<double>(spec.image_size);
      const double cx = rng.uniform(margin, std::max(margin, side - margin));
      const double cy = rng.uniform(margin, std::max(margin, side - margin));
      const double angle = combo.shape == "circle" || combo.shape == "ring"
                               ? 0.0
                               : rng.uniform(-0.26, 0.26);
      RGB c = nominal;
      c.r = std::clamp(c.r + rng.uniform(-0.06, 0.06), 0.0, 1.0);
      c.g = std::clamp(c.g + rng.uniform(-0.06, 0.06), 0.0, 1.0);
      c.b = std::clamp(c.b + rng.uniform(-0.06, 0.06), 0.0, 1.0);
      auto image = render_shape(combo.shape, c, cx, cy, r, angle, spec.image_size, rng);
      auto text = spec.templates[rng.index(spec.templates.size())];
      text = fill_template(text, "{shape}", combo.shape);
      text = fill_template(text, "{color}", combo.color);
      text = fill_template(text, "{size}", size_name);
      PairRecord rec;
      rec.image_ref = "synthetic:" + std::to_string(ci) + ":" + std::to_string(i);
      rec.image = std::move(image);
      rec.text = std::move(text);
      rec.metadata = {{"shape", combo.shape}, {"color", combo.color}, {"size", size_name},
                      {"label", combo.label()}, {"cx", cx}, {"cy", cy}, {"radius", r}, {"angle", angle}};
      dest.records.push_back(std::move(rec));
    }
  }
  return out;
}

nd::Image render_scene(nd::Rng& rng, std::size_t size) {
  nd::Image img(size, size);
  const double side = static_cast<double>(size);
  // Linear gradient between two random colours. A flat backdrop makes sparse
  // scenes look alike, which no duplicate detector can resolve.
  {
    double from[3], to[3];
    for (std::size_t c = 0; c < 3; ++c) {
      from[c] = rng.uniform(0.0, 0.6);
      to[c] = rng.uniform(0.0, 0.6);
    }
    const double angle = rng.uniform(0.0, 6.2832);
    const double dx = std::cos(angle), dy = std::sin(angle);
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x) {
        const double t = 0.5 + ((static_cast<double>(x) + 0.5) / side - 0.5) * dx +
                         ((static_cast<double>(y) + 0.5) / side - 0.5) * dy;
        const double u = std::clamp(t, 0.0, 1.0);
        for (std::size_t c = 0; c < 3; ++c) img.at(y, x, c) = from[c] + u * (to[c] - from[c]);
      }
  }
  if (rng.uniform() < 0.3) {
    // Stripes: high-frequency texture that resampling treats very differently.
    const std::size_t period = 2 + rng.index(4);
    const bool vertical = rng.uniform() < 0.5;
    const double level = rng.uniform(0.3, 0.7);
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x)
        if (((vertical ? x : y) / (period / 2)) % 2 == 0)
          for (std::size_t c = 0; c < 3; ++c) img.at(y, x, c) = level;
  }
  const auto shapes = known_shapes();
  const auto colors = known_colors();
  const std::size_t count = 2 + rng.index(4);
  for (std::size_t k = 0; k < count; ++k) {
    const auto& shape = shapes[rng.index(shapes.size())];
    RGB c = colors[rng.index(colors.size())].second;
    c.r = std::clamp(c.r + rng.uniform(-0.2, 0.2), 0.0, 1.0);
    c.g = std::clamp(c.g + rng.uniform(-0.2, 0.2), 0.0, 1.0);
    c.b = std::clamp(c.b + rng.uniform(-0.2, 0.2), 0.0, 1.0);
    const double r = rng.uniform(0.12, 0.35) * side;
    paint(img, shape, c, rng.uniform(0.0, side), rng.uniform(0.0, side), r, rng.uniform(0.0, 6.2832));
  }
  finish(img);
  return img;
}

// ---------------------------------------------------------------------------

std::string encode_ppm(const nd::Image& image) {
  if (!image.valid() || image.channels != 3) throw std::invalid_argument("encode_ppm: need a valid RGB image");
  std::string out = "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  out.reserve(out.size() + image.pixels.size());
  for (double p : image.pixels) out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(p, 0.0, 1.0) * 255.0))));
  return out;
}

nd::Image decode_ppm(std::string_view bytes) {
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    const auto start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    return std::string(bytes.substr(start, pos - start));
  };
  if (token() != "P6") throw std::invalid_argument("decode_ppm: not a binary PPM (P6)");
  std::size_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoul(token());
    h = std::stoul(token());
    maxval = std::stoul(token());
  } catch (const std::exception&) {
    throw std::invalid_argument("decode_ppm: malformed header");
  }
  if (maxval != 255) throw std::invalid_argument("decode_ppm: only maxval 255 is supported");
  ++pos;  // single whitespace after maxval
  if (w == 0 || h == 0 || bytes.size() < pos + w * h * 3) throw std::invalid_argument("decode_ppm: truncated data");
  nd::Image img(h, w);
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    img.pixels[i] = static_cast<unsigned char>(bytes[pos + i]) / 255.0;
  return img;
}

std::string base64_encode(std::string_view bytes) {
  using namespace boost::archive::iterators;
  using It = base64_from_binary<transform_width<std::string_view::const_iterator, 6, 8>>;
  std::string out(It(bytes.begin()), It(bytes.end()));
  out.append((3 - bytes.size() % 3) % 3, '=');
  return out;
}

std::string base64_decode(std::string_view text) {
  using namespace boost::archive::iterators;
  using It = transform_width<binary_from_base64<std::string::const_iterator>, 8, 6>;
  if (text.size() % 4) throw std::invalid_argument("base64: length is not a multiple of 4");
  std::string padded(text);
  std::size_t pad = 0;
  while (pad < padded.size() && padded[padded.size() - 1 - pad] == '=') {
    padded[padded.size() - 1 - pad] = 'A';
    ++pad;
  }
  if (pad > 2) throw std::invalid_argument("base64: too much padding");
  try {
    std::string out(It(padded.cbegin()), It(padded.cend()));
    // The iterator adaptor may emit trailing filler bytes; the length is fixed by the input.
    out.resize(padded.size() / 4 * 3 - pad);
    return out;
  } catch (const std::exception& e) {
    throw std::invalid_argument(std::string("base64: ") + e.what());
  }
}

namespace {

constexpr std::string_view kPpmDataUri = "data:image/x-portable-pixmap;base64,";

nd::Image read_image_field(const std::string& field, const fs::path& base) {
  if (field.starts_with(kPpmDataUri)) return decode_ppm(base64_decode(std::string_view(field).substr(kPpmDataUri.size())));
  const fs::path p = fs::path(field).is_absolute() ? fs::path(field) : base / field;
  if (!fs::exists(p)) throw std::invalid_argument("image reference '" + field + "' does not resolve");
  return decode_ppm(nd::read_file(p));
}

}  // namespace

void save_dataset(const fs::path& dir, const PairDataset& data, bool inline_images) {
  fs::create_directories(dir);
  std::string jsonl;
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    const auto& rec = data.records[i];
    std::string field;
    if (inline_images) {
      field = std::string(kPpmDataUri) + base64_encode(encode_ppm(rec.image));
    } else {
      std::ostringstream name;
      name << "images/" << std::setw(6) << std::setfill('0') << i << ".ppm";
      field = name.str();
      nd::write_file(dir / field, encode_ppm(rec.image));
    }
    nlohmann::json line{{"image", field}, {"text", rec.text}, {"meta", rec.metadata}};
    jsonl += line.dump() + "\n";
  }
  nd::write_file(dir / "pairs.jsonl", jsonl);
  if (!data.manifest.empty()) {
    nlohmann::json m = nlohmann::json::array();
    for (const auto& t : data.manifest) m.push_back({{"query", t.query}, {"matched", t.matched}, {"admitted", t.admitted}});
    nd::write_file(dir / "manifest.json", m.dump(2) + "\n");
  }
}

PairDataset load_dataset(const fs::path& path) {
  const fs::path file = fs::is_directory(path) ? path / "pairs.jsonl" : path;
  const fs::path base = file.parent_path();
  std::istringstream in(nd::read_file(file));
  PairDataset out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw std::invalid_argument(file.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (!j.contains("image") || !j.contains("text") || !j["image"].is_string() || !j["text"].is_string()) {
      throw std::invalid_argument(file.string() + ":" + std::to_string(lineno) + ": needs string 'image' and 'text'");
    }
    PairRecord rec;
    rec.text = j["text"].get<std::string>();
    if (rec.text.empty()) throw std::invalid_argument(file.string() + ":" + std::to_string(lineno) + ": empty caption");
    const auto field = j["image"].get<std::string>();
    rec.image_ref = field.starts_with(kPpmDataUri) ? "inline" : field;
    rec.image = read_image_field(field, base);
    if (j.contains("meta")) rec.metadata = j["meta"];
    out.records.push_back(std::move(rec));
  }
  const auto manifest = base / "manifest.json";
  if (fs::is_directory(path) && fs::exists(manifest)) {
    for (const auto& t : nlohmann::json::parse(nd::read_file(manifest)))
      out.manifest.push_back({t.at("query"), t.at("matched"), t.at("admitted")});
  }
  return out;
}

// ---------------------------------------------------------------------------

void EmbeddingCache::validate() const {
  if (embeddings.rank() != 2 && !(embeddings.empty() && ids.empty())) {
    throw nd::ShapeError("embedding cache needs a matrix, got " + nd::shape_str(embeddings.shape()));
  }
  if (!embeddings.empty() && embeddings.rows() != ids.size()) {
    throw std::invalid_argument("embedding cache has " + std::to_string(embeddings.rows()) + " rows but " +
                                std::to_string(ids.size()) + " ids");
  }
}

void EmbeddingCache::append(const EmbeddingCache& more) {
  if (more.fingerprint != fingerprint) {
    throw std::invalid_argument("embedding cache fingerprint mismatch: " + fingerprint + " vs " + more.fingerprint);
  }
  more.validate();
  if (more.ids.empty()) return;
  if (ids.empty()) {
    embeddings = more.embeddings;
    ids = more.ids;
    return;
  }
  if (more.embeddings.cols() != embeddings.cols()) {
    throw nd::ShapeError("embedding cache width " + std::to_string(embeddings.cols()) + " vs " +
                         std::to_string(more.embeddings.cols()));
  }
  std::vector<double> data(embeddings.values().begin(), embeddings.values().end());
  data.insert(data.end(), more.embeddings.values().begin(), more.embeddings.values().end());
  embeddings = nd::Tensor({ids.size() + more.ids.size(), embeddings.cols()}, std::move(data));
  ids.insert(ids.end(), more.ids.begin(), more.ids.end());
}

void save_cache(const fs::path& path, const EmbeddingCache& cache) {
  cache.validate();
  nd::MatrixFile f;
  f.matrix = cache.embeddings;
  f.header = cache.extra.is_object() ? cache.extra : nlohmann::json::object();
  f.header["kind"] = "embedding_cache";
  f.header["ids"] = cache.ids;
  f.header["fingerprint"] = cache.fingerprint;
  nd::save_matrix_file(path, f);
}

EmbeddingCache load_cache(const fs::path& path) {
  auto f = nd::load_matrix_file(path);
  if (f.header.value("kind", "") != "embedding_cache") {
    throw std::invalid_argument(path.string() + " is not an embedding cache");
  }
  EmbeddingCache c;
  c.embeddings = std::move(f.matrix);
  c.ids = f.header.at("ids").get<std::vector<std::string>>();
  c.fingerprint = f.header.at("fingerprint").get<std::string>();
  for (const char* k : {"kind", "ids", "fingerprint", "rows", "cols"}) f.header.erase(k);
  c.extra = std::move(f.header);
  c.validate();
  return c;
}

EmbeddingCache load_cache_for_append(const fs::path& path, const std::string& expected_fingerprint) {
  auto c = load_cache(path);
  if (c.fingerprint != expected_fingerprint) {
    throw std::invalid_argument("embedding cache " + path.string() + " was produced by checkpoint " + c.fingerprint +
                                ", not " + expected_fingerprint);
  }
  return c;
}

}  // namespace clip::datakit
