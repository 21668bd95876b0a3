#include <CLI11.hpp>

#include <memory>

#include "clip/nd/serialize.hpp"
#include "clip/trainer/trainer.hpp"
#include "commands.hpp"
#include "common.hpp"

namespace clip::cli {

namespace {

trainer::TrainConfig train_config(const Globals& g) {
  auto c = trainer::train_config_from_json(load_config(g.config));
  if (g.seed) c.seed = *g.seed;
  return c;
}

trainer::EvalSet eval_set(const std::string& path, const std::vector<std::string>& classes) {
  if (path.empty()) return {};
  return trainer::eval_set_from(load_data(path), classes);
}

nlohmann::json curve_json(const std::vector<trainer::EvalPoint>& evals) {
  auto out = nlohmann::json::array();
  for (const auto& e : evals) out.push_back({{"step", e.step}, {"top1", e.top1}});
  return out;
}

}  // namespace

void register_train(CLI::App& app, Globals& g) {
  struct TrainOpts {
    std::string data, eval;
    std::vector<std::string> classes;
  };
  auto opts = std::make_shared<TrainOpts>();
  auto* train = app.add_subcommand(
      "train", "Train from scratch; --out names the run directory (model.ckpt, tokenizer.bpe, report.jsonl)");
  train->add_option("--data", opts->data, "Training pairs")->required();
  train->add_option("--eval", opts->eval, "Labelled dataset for zero-shot evaluation during training");
  train->add_option("--classes", opts->classes, "Class names for evaluation (default: labels of --eval)");
  train->callback([opts, &g] {
    if (g.out.empty()) throw ValidationError("train needs --out <dir>");
    const auto config = train_config(g);
    const auto data = load_data(opts->data);
    const auto eval = eval_set(opts->eval, opts->classes);
    const auto result = trainer::train(data, config, eval);
    const std::filesystem::path dir = g.out;
    nd::save_checkpoint(dir / "model.ckpt", result.checkpoint());
    textproc::save(dir / "tokenizer.bpe", result.tokenizer);
    nd::write_file(dir / "report.jsonl", result.report.jsonl());
    const auto& r = result.report;
    nlohmann::json summary{{"command", "train"},
                           {"config", trainer::to_json(config)},
                           {"steps", r.steps},
                           {"steps_per_epoch", r.steps_per_epoch},
                           {"final_loss", r.losses.empty() ? nlohmann::json(nullptr) : nlohmann::json(r.losses.back())},
                           {"final_logit_scale", result.model.logit_scale().value()},
                           {"evals", curve_json(r.evals)},
                           {"stopped_early", r.stopped_early},
                           {"checkpoint", r.checkpoint_id}};
    nd::write_file(dir / "summary.json", summary.dump(2) + "\n");
    Globals to_stdout = g;
    to_stdout.out.clear();
    emit(to_stdout, summary);
  });

  struct CompareOpts {
    std::string data, eval;
    std::vector<std::string> classes;
    double target = 0.9;
  };
  auto cmp_opts = std::make_shared<CompareOpts>();
  auto* cmp = app.add_subcommand("compare-objectives",
                                 "Steps to a zero-shot target: contrastive versus bag-of-words prediction");
  cmp->add_option("--data", cmp_opts->data)->required();
  cmp->add_option("--eval", cmp_opts->eval)->required();
  cmp->add_option("--classes", cmp_opts->classes);
  cmp->add_option("--target", cmp_opts->target, "Target top-1 accuracy in (0, 1]");
  cmp->callback([cmp_opts, &g] {
    auto contrastive = train_config(g);
    if (contrastive.eval_every == 0) throw ValidationError("compare-objectives needs eval_every > 0 in the config");
    // Nothing after the first hit changes steps-to-target.
    contrastive.stop_at_accuracy = cmp_opts->target;
    auto bow = contrastive;
    contrastive.objective = trainer::Objective::contrastive;
    bow.objective = trainer::Objective::bow;
    const auto data = load_data(cmp_opts->data);
    const auto eval = eval_set(cmp_opts->eval, cmp_opts->classes);
    const auto outcomes = trainer::compare_objectives(data, {contrastive, bow}, eval, cmp_opts->target);
    nlohmann::json out = nlohmann::json::array();
    for (const auto& o : outcomes) out.push_back(trainer::to_json(o));
    emit(g, {{"command", "compare-objectives"},
             {"target", cmp_opts->target},
             {"config", trainer::to_json(contrastive)},
             {"outcomes", out}});
  });
}

}  // namespace clip::cli
