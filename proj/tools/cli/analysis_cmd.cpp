#include <CLI11.hpp>

#include <memory>

#include "clip/analysis/analysis.hpp"
#include "clip/dedup/dedup.hpp"
#include "clip/nd/serialize.hpp"
#include "commands.hpp"
#include "common.hpp"

namespace clip::cli {

namespace {

nlohmann::json read_json(const std::string& path, const std::string& what) {
  require_file(path, what);
  auto j = nlohmann::json::parse(nd::read_file(path), nullptr, false);
  if (j.is_discarded()) throw ValidationError(what + " '" + path + "' is not valid JSON");
  return j;
}

std::vector<analysis::RobustnessPoint> load_points(const std::string& path) {
  auto j = read_json(path, "points file");
  if (j.is_object() && j.contains("points")) j = j.at("points");
  if (!j.is_array()) throw ValidationError("points file must hold an array of points");
  std::vector<analysis::RobustnessPoint> out;
  for (const auto& p : j) out.push_back(analysis::point_from_json(p));
  return out;
}

nlohmann::json point_json(const analysis::RobustnessPoint& p) {
  return {{"model", p.model}, {"in_dist_acc", p.in_dist_acc}, {"shift_acc", p.shift_acc},
          {"tag", analysis::tag_name(p.tag)}};
}

std::vector<nd::Image> images_of(const datakit::PairDataset& data) {
  std::vector<nd::Image> out;
  for (const auto& r : data.records) out.push_back(r.image);
  return out;
}

std::vector<std::string> ids_of(const datakit::PairDataset& data) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < data.size(); ++i) out.push_back(std::to_string(i) + ":" + data.records[i].image_ref);
  return out;
}

dedup::Detector load_detector(const std::string& path) {
  require_file(path, "detector");
  return dedup::Detector::from_checkpoint(nd::load_checkpoint(path));
}

}  // namespace

void register_robustness(CLI::App& app, Globals& g) {
  auto* rb = app.add_subcommand("robustness", "Logit-space trend fits and effective robustness");
  rb->require_subcommand(1);

  struct FitOpts {
    std::string points, csv;
    std::size_t resamples = analysis::kDefaultResamples;
    std::size_t grid = 50;
  };
  auto f = std::make_shared<FitOpts>();
  auto* fit = rb->add_subcommand("fit", "Fit shifted on in-distribution accuracy with bootstrap bands");
  fit->add_option("--points", f->points, "JSON array of {model, in_dist_acc, shift_acc, tag}")->required();
  fit->add_option("--resamples", f->resamples);
  fit->add_option("--csv", f->csv, "Also write plot data here");
  fit->add_option("--grid", f->grid, "Line samples in the plot data");
  fit->callback([f, &g] {
    const auto points = load_points(f->points);
    const auto seed = g.seed.value_or(analysis::kDefaultBootstrapSeed);
    const auto result = analysis::fit_line(points, f->resamples, seed);
    if (!f->csv.empty()) nd::write_file(f->csv, analysis::plot_csv(points, result, f->grid));
    emit(g, {{"command", "robustness fit"}, {"points", points.size()}, {"seed", seed},
             {"fit", analysis::to_json(result)}});
  });

  struct ReportOpts {
    std::string points, baseline = "linear";
    std::size_t resamples = analysis::kDefaultResamples;
  };
  auto r = std::make_shared<ReportOpts>();
  auto* report = rb->add_subcommand("report", "Effective robustness of every point against a baseline trend");
  report->add_option("--points", r->points)->required();
  report->add_option("--baseline-tag", r->baseline, "Points with this tag define the trend (default linear)");
  report->add_option("--resamples", r->resamples);
  report->callback([r, &g] {
    const auto points = load_points(r->points);
    const auto tag = analysis::parse_tag(r->baseline);
    std::vector<analysis::RobustnessPoint> base;
    for (const auto& p : points)
      if (p.tag == tag) base.push_back(p);
    if (base.size() < 2) throw ValidationError("need at least 2 baseline points tagged '" + r->baseline + "'");
    const auto seed = g.seed.value_or(analysis::kDefaultBootstrapSeed);
    const auto fit = analysis::fit_line(base, r->resamples, seed);
    auto rows = nlohmann::json::array();
    for (const auto& p : points) {
      auto row = point_json(p);
      row["predicted_shift_acc"] = fit.predict(p.in_dist_acc);
      row["effective_robustness"] = analysis::effective_robustness(p, fit);
      rows.push_back(row);
    }
    emit(g, {{"command", "robustness report"}, {"baseline_tag", analysis::tag_name(tag)}, {"seed", seed},
             {"baseline", analysis::to_json(fit)}, {"points", rows}});
  });
}

void register_overlap(CLI::App& app, Globals& g) {
  auto* ov = app.add_subcommand("overlap", "Near-duplicate detection and contamination statistics");
  ov->require_subcommand(1);

  struct TrainOpts {
    std::string data, detector;
  };
  auto t = std::make_shared<TrainOpts>();
  auto* train = ov->add_subcommand("train", "Train the duplicate detector on augmented views");
  train->add_option("--data", t->data, "Images to train on")->required();
  train->add_option("--detector", t->detector, "Output detector checkpoint")->required();
  train->callback([t, &g] {
    auto config = dedup::detector_config_from_json(load_config(g.config));
    if (g.seed) config.seed = *g.seed;
    const auto data = load_data(t->data);
    const auto run = dedup::train_detector(images_of(data), config);
    const auto ckpt = run.detector.checkpoint();
    nd::save_checkpoint(t->detector, ckpt);
    emit(g, {{"command", "overlap train"},
             {"config", dedup::to_json(config)},
             {"steps", run.losses.size()},
             {"first_loss", run.losses.empty() ? nlohmann::json(nullptr) : nlohmann::json(run.losses.front())},
             {"final_loss", run.losses.empty() ? nlohmann::json(nullptr) : nlohmann::json(run.losses.back())},
             {"proxy_accuracy", run.proxy_accuracy},
             {"fingerprint", nd::fingerprint(ckpt)}});
  });

  struct IndexOpts {
    std::string detector, data, index;
  };
  auto i = std::make_shared<IndexOpts>();
  auto* index = ov->add_subcommand("index", "Embed a reference set into a searchable index");
  index->add_option("--detector", i->detector)->required();
  index->add_option("--data", i->data, "Reference (training) images")->required();
  index->add_option("--index", i->index, "Output index file")->required();
  index->callback([i, &g] {
    const auto det = load_detector(i->detector);
    const auto data = load_data(i->data);
    const auto idx = dedup::build_index(det.embed(images_of(data)), ids_of(data));
    const auto fp = nd::fingerprint(det.checkpoint());
    dedup::save_index(i->index, idx, fp);
    emit(g, {{"command", "overlap index"}, {"entries", idx.size()}, {"fingerprint", fp},
             {"index_digest", file_digest(i->index)}});
  });

  struct SplitOpts {
    std::string detector, index, data;
    double threshold = 0.9;
  };
  auto s = std::make_shared<SplitOpts>();
  auto* split = ov->add_subcommand("split", "Split an evaluation set into Overlap and Clean");
  split->add_option("--detector", s->detector)->required();
  split->add_option("--index", s->index)->required();
  split->add_option("--data", s->data, "Evaluation images")->required();
  split->add_option("--threshold", s->threshold, "Similarity at or above which an example overlaps");
  split->callback([s, &g] {
    const auto det = load_detector(s->detector);
    require_file(s->index, "index");
    const auto idx = dedup::load_index(s->index);
    const auto data = load_data(s->data);
    const auto result = dedup::split_overlap(det.embed(images_of(data)), idx, s->threshold);
    const auto ids = ids_of(data);
    auto examples = nlohmann::json::array();
    std::vector<bool> flag(data.size(), false);
    for (auto k : result.overlap) flag[k] = true;
    for (std::size_t k = 0; k < data.size(); ++k)
      examples.push_back({{"id", ids[k]}, {"max_similarity", result.max_similarity[k]}, {"overlap", static_cast<bool>(flag[k])}});
    nlohmann::json report{{"command", "overlap split"},
                          {"threshold", s->threshold},
                          {"overlap", result.overlap.size()},
                          {"clean", result.clean.size()},
                          {"examples", examples}};
    if (!result.warning.empty()) report["warning"] = result.warning;
    emit(g, report);
  });

  struct ReportOpts {
    std::string split, results;
    double confidence = 0.995;
    std::size_t tests = 1;
  };
  auto r = std::make_shared<ReportOpts>();
  auto* report = ov->add_subcommand("report", "Accuracy on All/Clean/Overlap with binomial statistics");
  report->add_option("--split", r->split, "Output of overlap split")->required();
  report->add_option("--results", r->results, "JSON array of per-example correctness, in split order")->required();
  report->add_option("--confidence", r->confidence, "Clopper-Pearson level");
  report->add_option("--tests", r->tests, "Bonferroni family size applied to the p-value");
  report->callback([r, &g] {
    const auto split = read_json(r->split, "split file");
    auto results = read_json(r->results, "results file");
    if (results.is_object() && results.contains("correct")) results = results.at("correct");
    const auto& examples = split.at("examples");
    if (!results.is_array() || results.size() != examples.size()) {
      throw ValidationError("results must be an array with one boolean per split example");
    }
    if (r->tests == 0) throw ValidationError("--tests must be positive");
    std::vector<analysis::OverlapExample> rows;
    for (std::size_t k = 0; k < examples.size(); ++k)
      rows.push_back({examples[k].at("overlap").get<bool>(), results[k].get<bool>()});
    const auto rep = analysis::overlap_report(rows, r->confidence);
    auto j = analysis::to_json(rep);
    if (rep.binomial_p && r->tests > 1) j["binomial_p_bonferroni"] = analysis::bonferroni(*rep.binomial_p, r->tests);
    emit(g, {{"command", "overlap report"}, {"report", j}});
  });
}

}  // namespace clip::cli
