#include <CLI11.hpp>

#include <memory>
#include <sstream>

#include "clip/nd/serialize.hpp"
#include "clip/zeroshot/zeroshot.hpp"
#include "commands.hpp"
#include "common.hpp"

namespace clip::cli {

namespace {

datakit::ShapeColor parse_combo(const nlohmann::json& j) {
  if (j.is_array() && j.size() == 2) return {j[0].get<std::string>(), j[1].get<std::string>()};
  if (j.is_string()) {
    // "shape:color" or the class-name form "color shape".
    const auto s = j.get<std::string>();
    if (const auto colon = s.find(':'); colon != std::string::npos) return {s.substr(0, colon), s.substr(colon + 1)};
    if (const auto space = s.find(' '); space != std::string::npos) return {s.substr(space + 1), s.substr(0, space)};
  }
  throw ValidationError("held-out combination " + j.dump() + " is not \"shape:color\"");
}

datakit::SyntheticSpec spec_from_json(const nlohmann::json& j) {
  datakit::SyntheticSpec s;
  for (const auto& [key, value] : j.items()) {
    if (key == "shapes") s.shapes = value.get<std::vector<std::string>>();
    else if (key == "colors") s.colors = value.get<std::vector<std::string>>();
    else if (key == "sizes") s.sizes = value.get<std::vector<std::string>>();
    else if (key == "templates") s.templates = value.get<std::vector<std::string>>();
    else if (key == "images_per_combo") s.images_per_combo = value.get<std::size_t>();
    else if (key == "image_size") s.image_size = value.get<std::size_t>();
    else if (key == "seed") s.seed = value.get<std::uint64_t>();
    else if (key == "held_out") for (const auto& h : value) s.held_out.push_back(parse_combo(h));
    else throw ValidationError("unknown dataset config key '" + key + "'");
  }
  return s;
}

nlohmann::json spec_to_json(const datakit::SyntheticSpec& s) {
  std::vector<std::string> held;
  for (const auto& h : s.held_out) held.push_back(h.shape + ":" + h.color);
  return {{"shapes", s.shapes},     {"colors", s.colors},
          {"sizes", s.sizes},       {"templates", s.templates},
          {"images_per_combo", s.images_per_combo}, {"image_size", s.image_size},
          {"seed", s.seed},         {"held_out", held}};
}

// Digest over captions, metadata and pixels, independent of where images live.
std::string dataset_digest(const datakit::PairDataset& d) {
  std::string bytes;
  for (const auto& r : d.records) {
    bytes += r.text;
    bytes += '\n';
    bytes += r.metadata.dump();
    bytes += datakit::encode_ppm(r.image);
  }
  return nd::fnv1a_hex(bytes);
}

nlohmann::json summary(const datakit::PairDataset& d, const std::filesystem::path& dir) {
  return {{"dir", dir.string()}, {"records", d.size()}, {"digest", dataset_digest(d)}};
}

}  // namespace

void register_dataset(CLI::App& app, Globals& g) {
  auto* ds = app.add_subcommand("dataset", "Generate, filter and embed image-text pair datasets");
  ds->require_subcommand(1);

  struct GenOpts {
    std::string dir;
    std::optional<std::size_t> per_combo, image_size;
    std::vector<std::string> held_out;
    bool inline_images = false;
  };
  auto gen_opts = std::make_shared<GenOpts>();
  auto* gen = ds->add_subcommand("gen", "Render the synthetic captioned-shapes corpus");
  gen->add_option("--dir", gen_opts->dir, "Output directory (seen/ and held_out/ inside)")->required();
  gen->add_option("--images-per-combo", gen_opts->per_combo);
  gen->add_option("--image-size", gen_opts->image_size);
  gen->add_option("--held-out", gen_opts->held_out, "Held-out combination as shape:color (repeatable)");
  gen->add_flag("--inline", gen_opts->inline_images, "Embed images in the JSONL as base64 PPM");
  gen->callback([gen_opts, &g] {
    auto spec = spec_from_json(load_config(g.config));
    if (g.seed) spec.seed = *g.seed;
    if (gen_opts->per_combo) spec.images_per_combo = *gen_opts->per_combo;
    if (gen_opts->image_size) spec.image_size = *gen_opts->image_size;
    for (const auto& h : gen_opts->held_out) spec.held_out.push_back(parse_combo(h));
    const auto corpus = datakit::gen_synthetic(spec);
    const std::filesystem::path dir = gen_opts->dir;
    datakit::save_dataset(dir / "seen", corpus.seen, gen_opts->inline_images);
    nlohmann::json report{{"command", "dataset gen"}, {"spec", spec_to_json(spec)},
                          {"seen", summary(corpus.seen, dir / "seen")}};
    if (!corpus.held_out.empty()) {
      datakit::save_dataset(dir / "held_out", corpus.held_out, gen_opts->inline_images);
      report["held_out"] = summary(corpus.held_out, dir / "held_out");
    }
    emit(g, report);
  });

  struct BuildOpts {
    std::string source, queries, dir;
    std::size_t cap = datakit::kDefaultPerQueryCap;
    bool inline_images = false;
  };
  auto build_opts = std::make_shared<BuildOpts>();
  auto* build = ds->add_subcommand("build", "Filter pairs by caption queries with a per-query cap");
  build->add_option("--source", build_opts->source, "Source dataset (directory or .jsonl)")->required();
  build->add_option("--queries", build_opts->queries, "Query file, one per line")->required();
  build->add_option("--cap", build_opts->cap, "Maximum pairs admitted per query");
  build->add_option("--dir", build_opts->dir, "Output directory")->required();
  build->add_flag("--inline", build_opts->inline_images);
  build->callback([build_opts, &g] {
    const auto source = load_data(build_opts->source);
    require_file(build_opts->queries, "query file");
    std::vector<std::string> queries;
    std::istringstream in(nd::read_file(build_opts->queries));
    for (std::string line; std::getline(in, line);) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) queries.push_back(line);
    }
    if (queries.empty()) throw ValidationError("query file is empty");
    if (build_opts->cap == 0) throw ValidationError("--cap must be positive");
    const auto built = datakit::build_pairs(source.records, queries, build_opts->cap);
    datakit::save_dataset(build_opts->dir, built, build_opts->inline_images);
    nlohmann::json manifest = nlohmann::json::array();
    for (const auto& t : built.manifest)
      manifest.push_back({{"query", t.query}, {"matched", t.matched}, {"admitted", t.admitted}});
    emit(g, {{"command", "dataset build"},
             {"source_records", source.size()},
             {"cap", build_opts->cap},
             {"manifest", manifest},
             {"output", summary(built, build_opts->dir)}});
  });

  struct EmbedOpts {
    std::string checkpoint, data, cache;
    bool texts = false;
  };
  auto embed_opts = std::make_shared<EmbedOpts>();
  auto* embed = ds->add_subcommand("embed", "Cache joint embeddings of a dataset");
  embed->add_option("--checkpoint", embed_opts->checkpoint)->required();
  embed->add_option("--data", embed_opts->data)->required();
  embed->add_option("--cache", embed_opts->cache, "Output embedding cache")->required();
  embed->add_flag("--texts", embed_opts->texts, "Embed captions instead of images");
  embed->callback([embed_opts, &g] {
    const auto m = load_model(embed_opts->checkpoint);
    const auto data = load_data(embed_opts->data);
    if (data.empty()) throw ValidationError("dataset is empty");
    datakit::EmbeddingCache cache;
    cache.fingerprint = m.fingerprint;
    if (embed_opts->texts) {
      std::vector<std::string> texts;
      for (const auto& r : data.records) texts.push_back(r.text);
      cache.embeddings = zeroshot::encode_texts(m.model, m.tokenizer, texts);
    } else {
      std::vector<nd::Image> images;
      for (const auto& r : data.records) images.push_back(r.image);
      cache.embeddings = zeroshot::encode_images(m.model, images);
    }
    for (std::size_t i = 0; i < data.size(); ++i) cache.ids.push_back(std::to_string(i) + ":" + data.records[i].image_ref);
    cache.extra["modality"] = embed_opts->texts ? "text" : "image";
    // Labels make the cache usable as probe features.
    const bool labelled = std::all_of(data.records.begin(), data.records.end(),
                                      [](const auto& r) { return r.metadata.contains("label"); });
    if (labelled) {
      const auto names = dataset_labels(data);
      std::vector<std::size_t> labels;
      for (const auto& r : data.records) {
        const auto l = r.metadata.at("label").get<std::string>();
        labels.push_back(static_cast<std::size_t>(std::find(names.begin(), names.end(), l) - names.begin()));
      }
      cache.extra["label_names"] = names;
      cache.extra["labels"] = labels;
    }
    datakit::save_cache(embed_opts->cache, cache);
    emit(g, {{"command", "dataset embed"},
             {"rows", cache.embeddings.rows()},
             {"dim", cache.embeddings.cols()},
             {"modality", cache.extra["modality"]},
             {"labelled", labelled},
             {"fingerprint", cache.fingerprint},
             {"cache_digest", file_digest(embed_opts->cache)}});
  });
}

}  // namespace clip::cli
