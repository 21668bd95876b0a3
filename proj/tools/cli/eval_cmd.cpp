#include <CLI11.hpp>

#include <memory>
#include <sstream>

#include "clip/nd/serialize.hpp"
#include "clip/probe/probe.hpp"
#include "clip/zeroshot/zeroshot.hpp"
#include "commands.hpp"
#include "common.hpp"

namespace clip::cli {

namespace {

std::vector<std::string> split_commas(const std::vector<std::string>& items) {
  std::vector<std::string> out;
  for (const auto& item : items) {
    std::istringstream in(item);
    for (std::string part; std::getline(in, part, ',');)
      if (!part.empty()) out.push_back(part);
  }
  return out;
}

probe::LabeledFeatures load_features(const std::string& path, std::vector<std::string>* names = nullptr) {
  require_file(path, "feature cache");
  const auto cache = datakit::load_cache(path);
  if (!cache.extra.contains("labels")) {
    throw ValidationError("feature cache '" + path + "' has no labels; embed a labelled dataset");
  }
  probe::LabeledFeatures f{cache.embeddings, cache.extra.at("labels").get<std::vector<std::size_t>>()};
  if (f.y.size() != f.x.rows()) throw ValidationError("feature cache '" + path + "' has mismatched labels");
  if (names) *names = cache.extra.value("label_names", std::vector<std::string>{});
  return f;
}

nlohmann::json sweep_json(const probe::SweepResult& s) {
  auto evaluated = nlohmann::json::array();
  for (const auto& p : s.evaluated) evaluated.push_back({{"index", p.index}, {"lambda", p.lambda}, {"score", p.score}});
  return {{"evaluated", evaluated},
          {"chosen_index", s.chosen_index},
          {"chosen_lambda", s.chosen_lambda},
          {"chosen_score", s.chosen_score}};
}

}  // namespace

void register_zeroshot(CLI::App& app, Globals& g) {
  auto* zs = app.add_subcommand("zeroshot", "Build and evaluate zero-shot classifiers");
  zs->require_subcommand(1);

  struct BuildOpts {
    std::string checkpoint, templates, classes_from, classifier;
    std::vector<std::string> classes;
  };
  auto b = std::make_shared<BuildOpts>();
  auto* build = zs->add_subcommand("build", "Embed prompt-ensembled class names into classifier weights");
  build->add_option("--checkpoint", b->checkpoint)->required();
  build->add_option("--classes", b->classes, "Class names (comma-separated or repeated)");
  build->add_option("--classes-from", b->classes_from, "Use every label of this dataset, sorted");
  build->add_option("--templates", b->templates, "Template file, one pattern per line (default: built-in set)");
  build->add_option("--classifier", b->classifier, "Output classifier file")->required();
  build->callback([b, &g] {
    auto classes = split_commas(b->classes);
    if (!b->classes_from.empty()) {
      if (!classes.empty()) throw ValidationError("give --classes or --classes-from, not both");
      classes = dataset_labels(load_data(b->classes_from));
    }
    if (classes.empty()) throw ValidationError("no class names given");
    if (!b->templates.empty()) require_file(b->templates, "template file");
    const auto templates = b->templates.empty() ? zeroshot::default_templates() : zeroshot::load_templates(b->templates);
    const auto m = load_model(b->checkpoint);
    const auto clf = zeroshot::build_classifier(classes, templates, m.model, m.tokenizer);
    zeroshot::save_classifier(b->classifier, clf, m.fingerprint);
    std::vector<std::string> patterns;
    for (const auto& t : templates) patterns.push_back(t.pattern());
    emit(g, {{"command", "zeroshot build"},
             {"classes", clf.class_names},
             {"templates", patterns},
             {"log_scale", clf.log_scale},
             {"fingerprint", m.fingerprint},
             {"classifier_digest", file_digest(b->classifier)}});
  });

  struct EvalOpts {
    std::string checkpoint, classifier, data;
  };
  auto e = std::make_shared<EvalOpts>();
  auto* eval = zs->add_subcommand("eval", "Top-1 and mean per-class accuracy on a labelled dataset");
  eval->add_option("--checkpoint", e->checkpoint)->required();
  eval->add_option("--classifier", e->classifier)->required();
  eval->add_option("--data", e->data)->required();
  eval->callback([e, &g] {
    require_file(e->classifier, "classifier");
    const auto clf = zeroshot::load_classifier(e->classifier);
    const auto m = load_model(e->checkpoint);
    const auto data = load_data(e->data);
    if (data.empty()) throw ValidationError("dataset is empty");
    std::vector<nd::Image> images;
    std::vector<std::size_t> labels;
    for (const auto& r : data.records) {
      if (!r.metadata.contains("label")) throw ValidationError("record '" + r.image_ref + "' has no label");
      const auto l = r.metadata.at("label").get<std::string>();
      const auto it = std::find(clf.class_names.begin(), clf.class_names.end(), l);
      if (it == clf.class_names.end()) throw ValidationError("label '" + l + "' is not a classifier class");
      labels.push_back(static_cast<std::size_t>(it - clf.class_names.begin()));
      images.push_back(r.image);
    }
    const auto metrics = zeroshot::evaluate(clf, zeroshot::encode_images(m.model, images), labels);
    emit(g, {{"command", "zeroshot eval"},
             {"classes", clf.num_classes()},
             {"count", metrics.count},
             {"top1", metrics.top1},
             {"mean_per_class", metrics.mean_per_class},
             {"fingerprint", m.fingerprint}});
  });
}

void register_probe(CLI::App& app, Globals& g) {
  auto* pr = app.add_subcommand("probe", "Linear probes on cached features");
  pr->require_subcommand(1);

  struct FitOpts {
    std::string train, test, metric = "accuracy";
    double lambda = 1.0;
  };
  auto f = std::make_shared<FitOpts>();
  auto* fit = pr->add_subcommand("fit", "L-BFGS logistic regression at one lambda");
  fit->add_option("--train", f->train)->required();
  fit->add_option("--test", f->test);
  fit->add_option("--lambda", f->lambda, "L2 strength (positive)");
  fit->add_option("--metric", f->metric, "accuracy | mean_per_class | roc_auc");
  fit->callback([f, &g] {
    const auto kind = probe::parse_metric(f->metric);
    std::vector<std::string> names;
    const auto train = load_features(f->train, &names);
    const std::size_t k = names.empty() ? 0 : names.size();
    const auto r = probe::fit_logreg(train.x, train.y, f->lambda, k);
    nlohmann::json report{{"command", "probe fit"},
                          {"lambda", f->lambda},
                          {"loss", r.loss},
                          {"gradient_norm", r.gradient_norm},
                          {"iterations", r.iterations},
                          {"converged", r.converged},
                          {"train_score", probe::metric(kind, probe::predict_proba(r.model, train.x), train.y)},
                          {"metric", probe::metric_name(kind)}};
    if (!f->test.empty()) {
      const auto test = load_features(f->test);
      report["test_score"] = probe::metric(kind, probe::predict_proba(r.model, test.x), test.y);
    }
    emit(g, report);
  });

  struct SweepOpts {
    std::string train, val, test, metric = "accuracy";
  };
  auto s = std::make_shared<SweepOpts>();
  auto* sweep = pr->add_subcommand("sweep", "Lambda sweep on validation, refit on train+val, score on test");
  sweep->add_option("--train", s->train)->required();
  sweep->add_option("--val", s->val)->required();
  sweep->add_option("--test", s->test)->required();
  sweep->add_option("--metric", s->metric, "accuracy | mean_per_class | roc_auc");
  sweep->callback([s, &g] {
    const auto kind = probe::parse_metric(s->metric);
    std::vector<std::string> names;
    const auto train = load_features(s->train, &names);
    const auto val = load_features(s->val), test = load_features(s->test);
    const auto r = probe::run_protocol(train, val, test, kind, names.size());
    emit(g, {{"command", "probe sweep"},
             {"metric", probe::metric_name(kind)},
             {"sweep", sweep_json(r.sweep)},
             {"test_score", r.test_score}});
  });
}

}  // namespace clip::cli
