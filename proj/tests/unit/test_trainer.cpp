#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "clip/trainer/trainer.hpp"

using namespace clip;
using trainer::Objective;
using trainer::TrainConfig;

namespace {

TrainConfig tiny(Objective objective = Objective::contrastive) {
  TrainConfig c;
  c.model.embed_dim = 16;
  c.model.text.width = 16;
  c.model.text.heads = 2;
  c.model.text.layers = 1;
  c.model.text.context_length = 12;
  c.model.image.image_size = 16;
  c.model.image.patch_size = 8;
  c.model.image.width = 16;
  c.model.image.heads = 2;
  c.model.image.layers = 1;
  c.tokenizer_vocab = 300;
  c.batch_size = 8;
  c.epochs = 50;
  c.max_steps = 6;
  c.warmup_steps = 2;
  c.objective = objective;
  return c;
}

struct Data {
  datakit::PairDataset train;
  trainer::EvalSet eval;
};

Data shapes() {
  datakit::SyntheticSpec spec;
  spec.shapes = {"circle", "square"};
  spec.colors = {"red", "blue"};
  spec.image_size = 16;
  spec.images_per_combo = 10;
  spec.seed = 3;
  auto corpus = datakit::gen_synthetic(spec);
  spec.seed = 4;
  spec.images_per_combo = 3;
  auto ev = datakit::gen_synthetic(spec);
  return {std::move(corpus.seen), trainer::eval_set_from(ev.seen)};
}

}  // namespace

TEST_CASE("train config JSON and validation") {
  auto c = tiny();
  c.stop_at_accuracy = 0.75;
  const auto back = trainer::train_config_from_json(trainer::to_json(c));
  CHECK(trainer::to_json(back) == trainer::to_json(c));
  const auto defaults = trainer::train_config_from_json(nlohmann::json{{"batch_size", 32}});
  CHECK(defaults.batch_size == 32);
  CHECK(defaults.epochs == TrainConfig{}.epochs);
  CHECK_THROWS_AS(trainer::train_config_from_json(nlohmann::json{{"batch", 32}}), std::invalid_argument);
  CHECK_THROWS_AS(trainer::train_config_from_json(nlohmann::json{{"objective", "mse"}}), std::invalid_argument);
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = tiny();
  c.epochs = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("bag-of-words targets") {
  CHECK(trainer::bow_words("A photo of a Red circle.") ==
        std::vector<std::string>{"a", "photo", "of", "a", "red", "circle"});
  trainer::BowHead head{{"a", "circle", "red", "square"}, {}};
  const auto t = head.targets({"a red circle", "the square!"});
  CHECK(t == nd::Tensor::matrix({{1, 1, 1, 0}, {0, 0, 0, 1}}));
  CHECK(head.index_of("the") == -1);
}

TEST_CASE("one step at zero learning rate leaves parameters unchanged") {
  const auto data = shapes();
  auto c = tiny();
  c.max_steps = 1;
  c.base_lr = 0.0;
  const auto r = trainer::train(data.train, c);
  CHECK(r.report.losses.size() == 1);
  CHECK(r.report.steps == 1);
  // Rebuild the untouched initialisation from the same seed.
  auto c0 = c;
  c0.max_steps = 0;
  const auto init = trainer::train(data.train, c0);
  CHECK(init.report.losses.empty());
  CHECK(nd::encode_checkpoint(init.checkpoint()) == nd::encode_checkpoint(r.checkpoint()));
}

TEST_CASE("training is deterministic in the seed") {
  const auto data = shapes();
  for (auto obj : {Objective::contrastive, Objective::bow}) {
    const auto a = trainer::train(data.train, tiny(obj), data.eval);
    const auto b = trainer::train(data.train, tiny(obj), data.eval);
    CHECK(a.report.losses == b.report.losses);
    CHECK(a.report.jsonl() == b.report.jsonl());
    CHECK(a.report.checkpoint_id == b.report.checkpoint_id);
    auto other = tiny(obj);
    other.seed = 1;
    CHECK(trainer::train(data.train, other).report.losses != a.report.losses);
  }
}

TEST_CASE("report series and the logit-scale bound") {
  const auto data = shapes();
  auto c = tiny();
  c.max_steps = 7;
  c.eval_every = 3;
  c.base_lr = 0.5;  // large steps push the temperature around
  const auto r = trainer::train(data.train, c, data.eval);
  CHECK(r.report.losses.size() == 7);
  CHECK(r.report.learning_rates.size() == 7);
  CHECK(r.report.logit_scales.size() == 7);
  REQUIRE(r.report.evals.size() == 3);
  CHECK(r.report.evals[0].step == 3);
  CHECK(r.report.evals[1].step == 6);
  CHECK(r.report.evals[2].step == 7);
  for (double s : r.report.logit_scales) CHECK(s <= 100.0);
  const auto lines = r.report.jsonl();
  CHECK(std::count(lines.begin(), lines.end(), '\n') == 7 + 3 + 1);
  CHECK(r.report.steps_per_epoch == data.train.size() / 8);
}

TEST_CASE("loss decreases on the synthetic shapes") {
  const auto data = shapes();
  auto c = tiny();
  c.max_steps = 60;
  c.base_lr = 3e-3;
  const auto r = trainer::train(data.train, c);
  const auto& l = r.report.losses;
  double first = 0.0, last = 0.0;
  for (std::size_t i = 0; i < 6; ++i) {
    first += l[i];
    last += l[l.size() - 1 - i];
  }
  CHECK(last < first);
}

TEST_CASE("weight decay skips gains, biases and the temperature") {
  nd::Rng rng(1);
  auto mc = tiny().model;
  mc.text.vocab_size = 300;
  contrastive::ClipModel model(mc, rng);
  auto params = model.parameters();
  std::vector<nd::Tensor> before, zeros;
  for (const auto& p : params) {
    before.push_back(p.var.value());
    zeros.emplace_back(p.var.value().shape());
  }
  auto opt = nd::OptimizerState::for_vit();
  opt.warmup_steps = 0;
  opt.weight_decay = 0.1;
  opt.base_lr = 0.5;
  const double lr = nd::adamw_step(opt, params, zeros);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& name = params[i].name;
    const bool exempt = name.ends_with(".bias") || name.ends_with(".gain") || name == "logit_scale";
    CHECK(params[i].decay == !exempt);
    const auto& now = params[i].var.value();
    if (exempt) {
      CHECK_MESSAGE(now == before[i], name);
    } else {
      for (std::size_t k = 0; k < now.size(); ++k) CHECK(now[k] == doctest::Approx(before[i][k] * (1 - lr * 0.1)));
    }
  }
}

TEST_CASE("non-finite loss aborts with a diagnostic") {
  CHECK_NOTHROW(trainer::check_loss(1.5, 3, 1e-3, 14.3));
  for (double bad : {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::infinity()}) {
    try {
      trainer::check_loss(bad, 17, 0.25, 42.5);
      FAIL("expected divergence");
    } catch (const trainer::TrainingDiverged& e) {
      const std::string msg = e.what();
      CHECK(msg.find("step 17") != std::string::npos);
      CHECK(msg.find("lr 0.25") != std::string::npos);
      CHECK(msg.find("logit scale 42.5") != std::string::npos);
    }
  }
  auto data = shapes();
  data.train.records[5].image.pixels[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(trainer::train(data.train, tiny()), std::invalid_argument);
  datakit::PairDataset empty;
  CHECK_THROWS_AS(trainer::train(empty, tiny()), std::invalid_argument);
}

TEST_CASE("objective comparison bookkeeping") {
  const auto data = shapes();
  auto a = tiny(Objective::contrastive), b = tiny(Objective::bow);
  a.max_steps = b.max_steps = 0;
  auto out = trainer::compare_objectives(data.train, {a, b}, data.eval, 0.5);
  REQUIRE(out.size() == 2);
  CHECK(!out[0].steps_to_target);
  CHECK(!out[1].steps_to_target);
  CHECK(trainer::to_json(out[0])["steps_to_target"] == "not reached");

  a.max_steps = 6;
  a.eval_every = 2;
  out = trainer::compare_objectives(data.train, {a, a}, data.eval, 0.3);
  CHECK(out[0].steps_to_target == out[1].steps_to_target);
  CHECK(trainer::to_json(out[0]) == trainer::to_json(out[1]));

  auto c = a;
  c.base_lr *= 2;
  c.objective = Objective::bow;
  CHECK_THROWS_AS(trainer::compare_objectives(data.train, {a, c}, data.eval, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(trainer::compare_objectives(data.train, {a}, data.eval, 0.5), std::invalid_argument);
}
