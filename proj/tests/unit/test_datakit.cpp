#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <map>

#include "clip/datakit/datakit.hpp"
#include "clip/nd/serialize.hpp"

using namespace clip;
using datakit::PairRecord;

namespace {

PairRecord rec(std::string text) {
  PairRecord r;
  r.image_ref = "mem";
  r.image = nd::Image(2, 2, 3, 0.5);
  r.text = std::move(text);
  return r;
}

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("clip_datakit_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("build_pairs admission and manifest") {
  std::vector<PairRecord> src{rec("A Red Circle"), rec("a blue square"), rec("my dog"), rec("another DOG"),
                              rec("a dog and a circle")};
  auto d = datakit::build_pairs(src, {"circle"});
  REQUIRE(d.size() == 2);
  CHECK(d.records[0].text == "A Red Circle");
  CHECK(d.records[0].metadata["query"] == "circle");

  auto capped = datakit::build_pairs(std::span(src).subspan(2, 2), {"dog"}, 1);
  CHECK(capped.size() == 1);
  CHECK(capped.manifest == std::vector<datakit::QueryTally>{{"dog", 2, 1}});

  // A record matching two queries is admitted once, counted as matched by both.
  auto multi = datakit::build_pairs(src, {"dog", "circle"}, 10);
  CHECK(multi.size() == 4);
  CHECK(multi.manifest[0] == datakit::QueryTally{"dog", 3, 3});
  CHECK(multi.manifest[1] == datakit::QueryTally{"circle", 2, 1});

  // First-listed query with room claims the slot.
  auto tie = datakit::build_pairs(std::span(src).subspan(4, 1), {"dog", "circle"}, 1);
  CHECK(tie.records[0].metadata["query"] == "dog");

  CHECK(datakit::kDefaultPerQueryCap == 20000);
  CHECK_THROWS_AS(datakit::build_pairs(src, {}), std::invalid_argument);
  CHECK(datakit::build_pairs(src, {"zebra"}).empty());
}

TEST_CASE("synthetic corpus counts, determinism and held-out validation") {
  datakit::SyntheticSpec spec;
  spec.images_per_combo = 50;
  spec.held_out = {{"circle", "blue"}, {"square", "red"}};
  spec.seed = 11;
  const auto a = datakit::gen_synthetic(spec);
  CHECK(a.seen.size() == 600 - 100);
  CHECK(a.held_out.size() == 100);
  std::map<std::string, int> per_label;
  for (const auto& r : a.seen.records) {
    ++per_label[r.metadata["label"].get<std::string>()];
    CHECK(!r.text.empty());
    CHECK(r.text.find(r.metadata["color"].get<std::string>()) != std::string::npos);
    for (double p : r.image.pixels) CHECK(p * 255.0 == std::round(p * 255.0));
  }
  CHECK(per_label.size() == 10);
  for (const auto& [label, n] : per_label) CHECK(n == 50);

  const auto b = datakit::gen_synthetic(spec);
  REQUIRE(b.seen.size() == a.seen.size());
  for (std::size_t i = 0; i < a.seen.size(); ++i) {
    CHECK(a.seen.records[i].image == b.seen.records[i].image);
    CHECK(a.seen.records[i].text == b.seen.records[i].text);
  }

  // A combo renders the same images whatever else is held out.
  auto spec2 = spec;
  spec2.held_out.clear();
  const auto c = datakit::gen_synthetic(spec2);
  CHECK(c.seen.records.front().image == a.seen.records.front().image);

  auto bad = spec;
  bad.held_out = bad.all_combos();
  CHECK_THROWS_AS(datakit::gen_synthetic(bad), std::invalid_argument);
  bad = spec;
  bad.shapes = {"circle"};
  CHECK_THROWS_AS(datakit::gen_synthetic(bad), std::invalid_argument);
}

TEST_CASE("rendered red circle is mostly red inside its mask") {
  nd::Rng rng(3);
  const datakit::RGB red{0.9, 0.1, 0.1};
  const auto img = datakit::render_shape("circle", red, 16, 16, 10, 0, 32, rng);
  const auto mask = datakit::shape_mask("circle", 16, 16, 10, 0, 32);
  std::size_t inside = 0, red_pixels = 0;
  for (std::size_t y = 0; y < 32; ++y)
    for (std::size_t x = 0; x < 32; ++x) {
      if (!mask[y * 32 + x]) continue;
      ++inside;
      const double r = img.at(y, x, 0), g = img.at(y, x, 1), b = img.at(y, x, 2);
      red_pixels += r > 0.5 && r > 2 * g && r > 2 * b;
    }
  REQUIRE(inside > 250);
  CHECK(red_pixels * 2 > inside);
}

TEST_CASE("ppm and base64 round trips") {
  nd::Rng rng(4);
  const auto img = datakit::render_scene(rng, 16);
  CHECK(datakit::decode_ppm(datakit::encode_ppm(img)) == img);
  for (std::string s : {std::string(), std::string("a"), std::string("ab"), std::string("abc"),
                        std::string("abcd"), std::string("\0\xff\x10", 3)})
    CHECK(datakit::base64_decode(datakit::base64_encode(s)) == s);
  CHECK(datakit::base64_encode("Man") == "TWFu");
  CHECK(datakit::base64_encode("Ma") == "TWE=");
  CHECK_THROWS_AS(datakit::decode_ppm("P3\n1 1\n255\n"), std::invalid_argument);
}

TEST_CASE("dataset save and load") {
  datakit::SyntheticSpec spec;
  spec.images_per_combo = 2;
  const auto corpus = datakit::gen_synthetic(spec);
  for (bool inline_images : {false, true}) {
    const auto dir = scratch(inline_images ? "inline" : "files");
    datakit::save_dataset(dir, corpus.seen, inline_images);
    const auto back = datakit::load_dataset(dir);
    REQUIRE(back.size() == corpus.seen.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
      CHECK(back.records[i].image == corpus.seen.records[i].image);
      CHECK(back.records[i].text == corpus.seen.records[i].text);
      CHECK(back.records[i].metadata == corpus.seen.records[i].metadata);
    }
  }
  const auto dir = scratch("bad");
  nd::write_file(dir / "pairs.jsonl", "{\"image\": \"missing.ppm\", \"text\": \"x\"}\n");
  CHECK_THROWS_AS(datakit::load_dataset(dir), std::invalid_argument);
  nd::write_file(dir / "pairs.jsonl", "{\"image\": \"missing.ppm\", \"text\": \"\"}\n");
  CHECK_THROWS_AS(datakit::load_dataset(dir), std::invalid_argument);
}

TEST_CASE("embedding cache round trip and fingerprint guard") {
  datakit::EmbeddingCache c;
  c.embeddings = nd::Tensor::matrix({{0.1, 0.2}, {1.0 / 3.0, -7e-300}});
  c.ids = {"a", "b"};
  c.fingerprint = "00112233aabbccdd";
  const auto path = scratch("cache") / "c.bin";
  datakit::save_cache(path, c);
  auto back = datakit::load_cache(path);
  CHECK(back.embeddings == c.embeddings);
  CHECK(back.ids == c.ids);
  CHECK(back.fingerprint == c.fingerprint);

  auto appendable = datakit::load_cache_for_append(path, c.fingerprint);
  appendable.append(c);
  CHECK(appendable.ids.size() == 4);
  CHECK_THROWS_AS(datakit::load_cache_for_append(path, "ffffffffffffffff"), std::invalid_argument);
  auto other = c;
  other.fingerprint = "1";
  CHECK_THROWS_AS(appendable.append(other), std::invalid_argument);

  c.ids.pop_back();
  CHECK_THROWS_AS(datakit::save_cache(path, c), std::invalid_argument);
}
