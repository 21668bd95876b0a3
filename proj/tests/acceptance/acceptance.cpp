// Acceptance runner: one PASS/FAIL line per criterion.
//
//   acceptance [--only 1,2,...] [--cli <path to clip binary>] [--work <dir>]
//
// Exit status is 0 only when every selected criterion passes.
#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "clip/analysis/analysis.hpp"
#include "clip/contrastive/contrastive.hpp"
#include "clip/datakit/datakit.hpp"
#include "clip/dedup/dedup.hpp"
#include "clip/nd/serialize.hpp"
#include "clip/probe/probe.hpp"
#include "clip/trainer/trainer.hpp"
#include "clip/zeroshot/zeroshot.hpp"
#include "gradcheck.hpp"
#include "primitive_cases.hpp"
#include "probe_oracle.hpp"

namespace fs = std::filesystem;
using namespace clip;
using nd::Tensor;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  // Records a failed check; the first failure message wins the detail line.
  void require(bool ok, const std::string& what) {
    if (!ok && pass) {
      pass = false;
      detail = what;
    }
  }
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Tensor unit_rows(nd::Rng& rng, std::size_t n, std::size_t d) {
  Tensor t = testing::random_tensor(rng, {n, d});
  for (std::size_t r = 0; r < n; ++r) {
    double s = 0.0;
    for (double v : t.row(r)) s += v * v;
    for (double& v : t.row(r)) v /= std::sqrt(s);
  }
  return t;
}

// ---------------------------------------------------------------------------
// 1. Gradient suite.

Outcome gradient_suite() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  std::size_t count = 0;
  for (const auto& pc : testing::primitive_cases()) {
    const double err = testing::primitive_worst_error(pc);
    worst = std::max(worst, err);
    ++count;
    o.require(err < 1e-4, std::string("primitive ") + pc.name + " rel err " + fmt(err));
  }

  // Full loss through 2-layer text and image towers on a 4-pair batch.
  contrastive::ModelConfig mc;
  mc.text.layers = 2;
  mc.text.width = 8;
  mc.text.heads = 2;
  mc.text.context_length = 6;
  mc.text.vocab_size = 262;
  mc.image.image_size = 8;
  mc.image.patch_size = 4;
  mc.image.layers = 2;
  mc.image.width = 8;
  mc.image.heads = 2;
  mc.embed_dim = 6;
  nd::Rng rng(8);
  contrastive::ClipModel model(mc, rng);
  std::vector<nd::Image> images;
  for (int i = 0; i < 4; ++i) {
    nd::Image img(8, 8);
    for (auto& p : img.pixels) p = rng.uniform();
    images.push_back(img);
  }
  const std::vector<textproc::TokenSequence> texts{{{260, 5, 261, 0, 0, 0}, 3},
                                                   {{260, 9, 7, 261, 0, 0}, 4},
                                                   {{260, 261, 0, 0, 0, 0}, 2},
                                                   {{260, 1, 2, 3, 4, 261}, 6}};
  std::vector<nd::Var> vars;
  for (auto& p : model.parameters()) {
    // The token table is a gather; its rows are covered by gather_rows above.
    if (p.name == "text.token_embedding") continue;
    for (auto& v : p.var.mutable_value().values()) v = rng.normal(0.0, 0.4);
    vars.push_back(p.var);
  }
  model.logit_scale().log_scale.mutable_value()[0] = 1.0;
  const auto full = testing::gradcheck([&] { return model.loss(images, texts); }, vars);
  o.require(full.max_rel_err < 1e-4, "full CLIP loss rel err " + fmt(full.max_rel_err));
  const double secs = seconds_since(t0);
  o.require(secs < 60.0, "runtime " + fmt(secs) + " s");
  if (o.pass)
    o.detail = std::to_string(count) + " primitives worst " + fmt(worst, 3) + ", full loss " +
               fmt(full.max_rel_err, 3) + ", " + fmt(secs, 3) + " s";
  return o;
}

// ---------------------------------------------------------------------------
// 2. Objective invariants.

double loss_of(const Tensor& l) { return contrastive::clip_loss(nd::constant(l)).value().item(); }

Outcome objective_invariants() {
  Outcome o;
  nd::Rng rng(2);
  double worst_perm = 0.0, worst_sym = 0.0, worst_uniform = 0.0, worst_single = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.index(16);
    const Tensor l = testing::random_tensor(rng, {n, n}, rng.uniform(0.1, 20.0));
    const double base = loss_of(l);
    worst_sym = std::max(worst_sym, std::abs(base - loss_of(nd::transpose(l))));
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    rng.shuffle(perm.begin(), perm.end());
    Tensor p({n, n});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) p(i, j) = l(perm[i], perm[j]);
    worst_perm = std::max(worst_perm, std::abs(loss_of(p) - base));
    worst_uniform = std::max(worst_uniform, std::abs(loss_of(Tensor({n, n}, rng.uniform(-50, 50))) -
                                                     std::log(static_cast<double>(n))));
    worst_single = std::max(worst_single, std::abs(loss_of(Tensor({1, 1}, rng.uniform(-100, 100)))));
  }
  o.require(worst_sym <= 1e-12, "symmetry off by " + fmt(worst_sym));
  o.require(worst_perm <= 1e-12, "permutation off by " + fmt(worst_perm));
  o.require(worst_uniform <= 1e-12, "uniform logits off ln N by " + fmt(worst_uniform));
  o.require(worst_single <= 1e-12, "N=1 loss " + fmt(worst_single));
  if (o.pass)
    o.detail = "200 trials; max deviations sym " + fmt(worst_sym, 2) + ", perm " + fmt(worst_perm, 2) +
               ", uniform " + fmt(worst_uniform, 2) + ", N=1 " + fmt(worst_single, 2);
  return o;
}

// ---------------------------------------------------------------------------
// 3. Temperature contract.

Outcome temperature_contract() {
  Outcome o;
  const double init = contrastive::LogitScale::create().value();
  o.require(std::abs(init - 1.0 / 0.07) <= 1e-9, "init scale " + fmt(init, 17));
  nd::Rng rng(3);
  contrastive::ModelConfig mc;
  mc.text.vocab_size = 300;
  const contrastive::ClipModel fresh(mc, rng);
  o.require(std::abs(fresh.logit_scale().value() - 1.0 / 0.07) <= 1e-9, "fresh model scale");

  // Matched pairs are perfectly separated, so a larger scale always lowers
  // the loss and every step pushes the temperature up. Learning rates jump
  // across five orders of magnitude; one step in ten flips the pairing so
  // the gradient also drives the scale back down.
  auto scale = contrastive::LogitScale::create();
  const Tensor img = unit_rows(rng, 6, 5);
  Tensor swapped = img;
  for (std::size_t j = 0; j < 5; ++j) std::swap(swapped(0, j), swapped(1, j));
  nd::ParamList params;
  scale.collect(params);
  nd::OptimizerState opt = nd::OptimizerState::for_vit();
  opt.warmup_steps = 0;
  opt.total_steps = 1 << 30;
  const double lrs[] = {1e-3, 1e-1, 1.0, 10.0, 100.0};
  double peak = 0.0;
  std::size_t at_cap = 0;
  for (int step = 0; step < 1000; ++step) {
    opt.base_lr = lrs[rng.index(5)];
    const Tensor& text = step % 10 == 9 ? swapped : img;
    auto loss = contrastive::clip_loss(
        contrastive::similarity_logits(nd::constant(img), nd::constant(text), scale.log_scale));
    const auto g = nd::grad(loss, std::vector<nd::Var>{scale.log_scale});
    nd::adamw_step(opt, params, g);
    contrastive::clamp_logit_scale(scale);
    const double s = scale.value();
    peak = std::max(peak, s);
    at_cap += s >= 100.0 - 1e-9;
    o.require(s <= 100.0, "step " + std::to_string(step + 1) + " scale " + fmt(s, 17));
  }
  o.require(at_cap > 0, "the schedule never reached the cap; not adversarial");
  if (o.pass)
    o.detail = "init " + fmt(init, 10) + ", 1000 steps peak " + fmt(peak, 10) + " (" + std::to_string(at_cap) +
               " steps at the cap)";
  return o;
}

// ---------------------------------------------------------------------------
// 4. Zero-shot / linear equivalence.

Outcome zeroshot_linear_equivalence() {
  Outcome o;
  nd::Rng rng(4);
  double worst = 0.0;
  std::size_t inputs = 0;
  for (int c = 0; c < 20; ++c) {
    const std::size_t k = 2 + rng.index(9), d = 2 + rng.index(15);
    zeroshot::ZeroShotClassifier clf;
    for (std::size_t i = 0; i < k; ++i) clf.class_names.push_back("c" + std::to_string(i));
    clf.weights = unit_rows(rng, k, d);
    clf.log_scale = rng.uniform(0.0, std::log(100.0));
    probe::ProbeModel lin{clf.weights, std::vector<double>(k, 0.0), 0.0};
    for (auto& v : lin.weights.values()) v *= std::exp(clf.log_scale);
    const Tensor x = unit_rows(rng, 50, d);
    const Tensor linear = probe::predict_proba(lin, x);
    for (std::size_t i = 0; i < 50; ++i, ++inputs) {
      const auto p = zeroshot::predict(clf, x.row(i));
      for (std::size_t j = 0; j < k; ++j) worst = std::max(worst, std::abs(p[j] - linear(i, j)));
    }
  }
  o.require(worst < 1e-9, "max prob diff " + fmt(worst));
  if (o.pass) o.detail = std::to_string(inputs) + " inputs, max abs prob diff " + fmt(worst, 3);
  return o;
}

// ---------------------------------------------------------------------------
// 5 and 6. Desk-scale training on synthetic shapes.

// Synthetic corpus and schedule shared by criteria 5 and 6.
constexpr std::size_t kImagesPerCombo = 500;
constexpr std::size_t kEvalPerCombo = 20;
constexpr std::size_t kStepBudget = 3000;
constexpr std::size_t kEvalEvery = 100;
constexpr double kSeenTarget = 0.9;
const std::vector<datakit::ShapeColor> kHeldOut{{"triangle", "yellow"}, {"circle", "blue"}};

struct ShapesData {
  datakit::PairDataset train;
  trainer::EvalSet seen;
  trainer::EvalSet held_out;
};

ShapesData shapes_data() {
  datakit::SyntheticSpec spec;
  spec.images_per_combo = kImagesPerCombo;
  spec.held_out = kHeldOut;
  spec.seed = 1;
  auto corpus = datakit::gen_synthetic(spec);
  auto es = spec;
  es.seed = 777;
  es.images_per_combo = kEvalPerCombo;
  const auto ev = datakit::gen_synthetic(es);
  // Seen images are scored against the seen class names. Held-out images
  // compete against every composition, so a caption the model was trained on
  // is always a wrong answer on offer.
  std::vector<std::string> all;
  for (const auto& c : spec.all_combos()) all.push_back(c.label());
  return {std::move(corpus.seen), trainer::eval_set_from(ev.seen), trainer::eval_set_from(ev.held_out, all)};
}

trainer::TrainConfig shapes_config(std::uint64_t seed) {
  trainer::TrainConfig c;  // 2-layer towers, width 64, 32×32 images, batch 64
  c.model.text.context_length = 16;
  c.epochs = 1000;
  c.max_steps = kStepBudget;
  c.eval_every = kEvalEvery;
  c.seed = seed;
  return c;
}

Outcome desk_training(const ShapesData& data) {
  Outcome o;
  const double k = static_cast<double>(data.held_out.class_names.size());
  std::size_t passed = 0;
  std::ostringstream runs;
  double slowest = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto cfg = shapes_config(seed);
    cfg.stop_at_accuracy = kSeenTarget;
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = trainer::train(data.train, cfg, data.seen);
    const double secs = seconds_since(t0);
    slowest = std::max(slowest, secs);
    double best = 0.0;
    for (const auto& e : r.report.evals) best = std::max(best, e.top1);
    const double held = trainer::zero_shot_accuracy(r, data.held_out);
    const bool ok = best >= kSeenTarget && held >= 2.0 / k && secs < 15 * 60;
    passed += ok;
    std::fprintf(stderr, "  seed %llu: seen %.3f at step %zu, held-out %.3f, %.0f s\n",
                 static_cast<unsigned long long>(seed), best, r.report.steps, held, secs);
    runs << (seed ? "; " : "") << "seed " << seed << " seen " << fmt(best, 3) << " at step " << r.report.steps
         << " held-out " << fmt(held, 3) << " " << fmt(secs, 3) << "s";
  }
  o.require(passed >= 4, std::to_string(passed) + "/5 seeds: " + runs.str());
  if (o.pass) o.detail = std::to_string(passed) + "/5 seeds (chance " + fmt(1 / k, 3) + "): " + runs.str();
  return o;
}

Outcome objective_direction(const ShapesData& data) {
  Outcome o;
  auto c = shapes_config(0);
  auto b = c;
  b.objective = trainer::Objective::bow;
  c.stop_at_accuracy = b.stop_at_accuracy = kSeenTarget;
  const auto out = trainer::compare_objectives(data.train, {c, b}, data.seen, kSeenTarget);
  auto steps = [](const trainer::ObjectiveOutcome& x) {
    return x.steps_to_target ? std::to_string(*x.steps_to_target) : std::string("not reached");
  };
  o.require(out[0].steps_to_target.has_value(), "contrastive did not reach " + fmt(kSeenTarget));
  if (out[0].steps_to_target && out[1].steps_to_target)
    o.require(*out[0].steps_to_target <= *out[1].steps_to_target, "contrastive slower than BoW");
  o.detail = (o.pass ? "" : o.detail + ": ") + std::string("steps to ") + fmt(kSeenTarget) + ": contrastive " +
             steps(out[0]) + ", BoW " + steps(out[1]) + " (final " + fmt(out[1].final_accuracy, 3) + ")";
  return o;
}

// ---------------------------------------------------------------------------
// 7. Probe protocol.

Outcome probe_protocol() {
  Outcome o;
  nd::Rng rng(7);
  for (int curve_id = 0; curve_id < 20; ++curve_id) {
    // Unimodal validation curves: peaks anywhere on (and just off) the grid,
    // widths from sharp to nearly flat, and asymmetric shoulders.
    const double peak = rng.uniform(-3.0, 98.0);
    const double left = rng.uniform(0.5, 40.0), right = rng.uniform(0.5, 40.0);
    const double power = rng.uniform(0.5, 3.0);
    auto curve = [&](std::size_t idx) {
      const double x = static_cast<double>(idx) - peak;
      return 0.9 - 0.5 * std::pow(std::abs(x) / (x < 0 ? left : right), power) / (1 + std::pow(std::abs(x) / 30, power));
    };
    std::size_t best = 0;
    for (std::size_t idx = 1; idx < probe::kGridSize; ++idx)
      if (curve(idx) > curve(best)) best = idx;
    const auto r = probe::sweep_grid(curve);
    o.require(r.chosen_index == best, "curve " + std::to_string(curve_id) + ": sweep chose " +
                                          std::to_string(r.chosen_index) + ", grid argmax " + std::to_string(best));
    o.require(r.chosen_lambda == probe::lambda_grid()[best], "chosen lambda is not the grid value");
  }
  double worst = 0.0;
  for (double lambda : {0.05, 1.0, 20.0}) {
    const auto p = testing::blobs(rng, 20, 4, 3, 1.5);
    const auto fit = probe::fit_logreg(p.x, p.y, lambda);
    worst = std::max(worst, std::abs(fit.loss - testing::gd_oracle(p, 3, lambda)));
  }
  o.require(worst < 1e-6, "fit_logreg off the oracle by " + fmt(worst));
  if (o.pass) o.detail = "20/20 curves match the grid argmax; L-BFGS vs GD oracle max loss gap " + fmt(worst, 3);
  return o;
}

// ---------------------------------------------------------------------------
// 8. Statistics oracles.

Outcome statistics_oracles() {
  Outcome o;
  double worst_sf = 0.0;
  for (std::size_t n = 0; n <= 20; ++n) {
    std::vector<std::uint64_t> count(n + 1, 0);
    for (std::uint32_t mask = 0; mask < (1u << n); ++mask) ++count[static_cast<std::size_t>(std::popcount(mask))];
    for (double p : {0.3, 0.5, 0.7}) {
      for (std::size_t k = 0; k <= n; ++k) {
        double tail = 0.0;
        for (std::size_t j = k; j <= n; ++j)
          tail += static_cast<double>(count[j]) * std::pow(p, static_cast<double>(j)) *
                  std::pow(1 - p, static_cast<double>(n - j));
        worst_sf = std::max(worst_sf, std::abs(analysis::binomial_sf(k, n, p) - tail));
      }
    }
  }
  o.require(worst_sf < 1e-14, "binomial_sf off enumeration by " + fmt(worst_sf));

  double worst_cp = 0.0;
  for (std::size_t n = 1; n <= 200; n += 7) {
    for (double conf : {0.9, 0.95, 0.995}) {
      const double a = (1 - conf) / 2;
      const auto zero = analysis::clopper_pearson(0, n, conf);
      const auto all = analysis::clopper_pearson(n, n, conf);
      const double root = std::pow(a, 1.0 / static_cast<double>(n));
      worst_cp = std::max({worst_cp, std::abs(zero.first), std::abs(zero.second - (1 - root)),
                           std::abs(all.first - root), std::abs(all.second - 1)});
    }
  }
  o.require(worst_cp < 1e-9, "Clopper-Pearson endpoints off by " + fmt(worst_cp));

  nd::Rng rng(8);
  double worst_id = 0.0;
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 2 + rng.index(300);
    std::vector<analysis::OverlapExample> ex(n);
    const double rate = rng.uniform(), acc_o = rng.uniform(), acc_c = rng.uniform();
    for (auto& e : ex) {
      e.overlap = rng.uniform() < rate;
      e.correct = rng.uniform() < (e.overlap ? acc_o : acc_c);
    }
    const auto r = analysis::overlap_report(ex);
    if (!r.acc_clean || !r.acc_overlap) continue;
    const double ratio = r.contamination_ratio;
    worst_id = std::max({worst_id, std::abs(r.acc_all - (ratio * *r.acc_overlap + (1 - ratio) * *r.acc_clean)),
                         std::abs(*r.delta_all_clean - ratio * (*r.acc_overlap - *r.acc_clean))});
  }
  o.require(worst_id <= 1e-12, "decomposition identity off by " + fmt(worst_id));

  // 100 examples: 10 overlap with 8 correct, 90 clean at 50%.
  std::vector<analysis::OverlapExample> worked;
  for (int i = 0; i < 10; ++i) worked.push_back({true, i < 8});
  for (int i = 0; i < 90; ++i) worked.push_back({false, i < 45});
  const auto w = analysis::overlap_report(worked);
  o.require(w.binomial_p && std::abs(*w.binomial_p - 0.0546875) < 1e-12,
            "worked example p " + (w.binomial_p ? fmt(*w.binomial_p, 17) : std::string("missing")));
  if (o.pass)
    o.detail = "sf vs enumeration " + fmt(worst_sf, 2) + ", CP endpoints " + fmt(worst_cp, 2) + ", identity " +
               fmt(worst_id, 2) + ", worked p " + fmt(*w.binomial_p, 8);
  return o;
}

// ---------------------------------------------------------------------------
// 9. Robustness math.

Outcome robustness_math() {
  Outcome o;
  nd::Rng rng(9);
  double worst_fit = 0.0, worst_er = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const double slope = rng.uniform(0.2, 1.8), intercept = rng.uniform(-1.5, 1.0);
    std::vector<analysis::RobustnessPoint> pts;
    const std::size_t n = 3 + rng.index(20);
    for (std::size_t i = 0; i < n; ++i) {
      const double x = rng.uniform(-2.5, 2.5);
      pts.push_back({"m" + std::to_string(i), analysis::inverse_logit(x),
                     analysis::inverse_logit(slope * x + intercept), analysis::PointTag::linear});
    }
    const auto fit = analysis::fit_line(pts, 500, 1 + trial);
    worst_fit = std::max({worst_fit, std::abs(fit.slope - slope), std::abs(fit.intercept - intercept)});
    for (const auto& p : pts) worst_er = std::max(worst_er, std::abs(analysis::effective_robustness(p, fit)));
  }
  o.require(worst_fit < 1e-9, "noiseless fit off by " + fmt(worst_fit));
  o.require(worst_er <= 1e-12, "on-line effective robustness " + fmt(worst_er));

  // y = x: the ideal robust model. The fit is the identity and a point's
  // effective robustness is exactly its shifted-minus-in-distribution gap.
  std::vector<analysis::RobustnessPoint> ideal;
  for (double a : {0.05, 0.2, 0.4, 0.6, 0.8, 0.97}) ideal.push_back({"", a, a, analysis::PointTag::other});
  const auto id = analysis::fit_line(ideal, 500);
  double worst_ideal = std::max(std::abs(id.slope - 1), std::abs(id.intercept));
  for (double a = 0.01; a < 1; a += 0.07) worst_ideal = std::max(worst_ideal, std::abs(id.predict(a) - a));
  const analysis::RobustnessPoint above{"z", 0.6, 0.7, analysis::PointTag::zeroshot};
  worst_ideal = std::max(worst_ideal, std::abs(analysis::effective_robustness(above, id) - 0.1));
  o.require(worst_ideal < 1e-12, "y=x baseline off by " + fmt(worst_ideal));
  if (o.pass)
    o.detail = "20 lines recovered to " + fmt(worst_fit, 2) + ", on-line ER " + fmt(worst_er, 2) + ", y=x " +
               fmt(worst_ideal, 2);
  return o;
}

// ---------------------------------------------------------------------------
// 10. Dedup.

Outcome dedup_recovery() {
  Outcome o;
  constexpr std::size_t kImages = 500, kPlanted = 5;
  nd::Rng rng(10);
  std::vector<nd::Image> reference;
  for (std::size_t i = 0; i < kImages; ++i) reference.push_back(datakit::render_scene(rng, 32));

  // Trained on the default (strong) augmentations; the planted copies use the
  // lighter near-duplicate distortions.
  dedup::DetectorConfig cfg;
  cfg.seed = 10;
  cfg.steps = 1500;
  cfg.warmup_steps = 150;
  const auto t0 = std::chrono::steady_clock::now();
  const auto run = dedup::train_detector(reference, cfg);
  const double secs = seconds_since(t0);
  o.require(run.proxy_accuracy > 0.95, "proxy accuracy " + fmt(run.proxy_accuracy));

  // Evaluation set: fresh scenes plus augmented copies of reference images.
  std::vector<nd::Image> eval;
  std::vector<bool> planted(kImages, false);
  for (std::size_t i = 0; i < kImages; ++i) eval.push_back(datakit::render_scene(rng, 32));
  std::vector<std::size_t> slots(kImages);
  std::iota(slots.begin(), slots.end(), std::size_t{0});
  rng.shuffle(slots.begin(), slots.end());
  for (std::size_t p = 0; p < kPlanted; ++p) {
    eval[slots[p]] = dedup::augment(reference[rng.index(kImages)], dedup::AugmentConfig::light(), rng);
    planted[slots[p]] = true;
  }
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < kImages; ++i) ids.push_back(std::to_string(i));
  const auto index = dedup::build_index(run.detector.embed(reference), ids);
  const auto eval_emb = run.detector.embed(eval);
  const auto sims = dedup::max_similarity(eval_emb, index);
  std::vector<char> flags(planted.begin(), planted.end());
  const std::span<const bool> planted_view(reinterpret_cast<const bool*>(flags.data()), flags.size());
  const auto rec = dedup::recover(sims, planted_view);
  const auto [precision, recall] = dedup::precision_recall(sims, planted_view, rec.threshold);
  o.require(precision == 1.0 && recall >= 0.8,
            "precision " + fmt(precision) + " recall " + fmt(recall) + " at " + fmt(rec.threshold, 6));

  // Raw pixels for comparison (reported, not gated).
  const auto pix_index = dedup::build_index(dedup::pixel_embeddings(reference), ids);
  const auto pix = dedup::recover(dedup::max_similarity(dedup::pixel_embeddings(eval), pix_index), planted_view);

  // Partition and monotonicity of the split over random thresholds.
  std::vector<double> ts;
  for (int i = 0; i < 50; ++i) ts.push_back(rng.uniform(-0.999, 1.0));
  std::sort(ts.begin(), ts.end());
  std::set<std::size_t> prev_clean;
  bool first = true;
  for (double t : ts) {
    const auto s = dedup::split_overlap(eval_emb, index, t);
    std::vector<std::size_t> all = s.overlap;
    all.insert(all.end(), s.clean.begin(), s.clean.end());
    std::sort(all.begin(), all.end());
    bool partition = all.size() == kImages;
    for (std::size_t k = 0; partition && k < all.size(); ++k) partition = all[k] == k;
    o.require(partition, "split at " + fmt(t) + " is not a partition");
    const std::set<std::size_t> clean(s.clean.begin(), s.clean.end());
    if (!first)
      o.require(std::includes(clean.begin(), clean.end(), prev_clean.begin(), prev_clean.end()),
                "raising the threshold to " + fmt(t) + " made a clean example overlap");
    prev_clean = clean;
    first = false;
  }
  if (o.pass)
    o.detail = "proxy " + fmt(run.proxy_accuracy, 4) + " (" + fmt(secs, 3) + " s), planted " +
               std::to_string(rec.recovered) + "/" + std::to_string(rec.planted) + " at precision 1 (pixels " +
               std::to_string(pix.recovered) + "/" + std::to_string(pix.planted) + "), 50 thresholds ok";
  return o;
}

// ---------------------------------------------------------------------------
// 11. CLI determinism.

// Callers redirect stdout themselves; diagnostics are dropped.
int run(const std::string& cmd) { return std::system((cmd + " 2>/dev/null").c_str()); }

Outcome cli_determinism(const std::string& cli, const fs::path& work) {
  Outcome o;
  if (cli.empty() || !fs::exists(cli)) {
    o.require(false, "clip binary not found at '" + cli + "'");
    return o;
  }
  fs::remove_all(work);
  fs::create_directories(work);
  auto p = [&](const std::string& name) { return (work / name).string(); };
  nd::write_file(p("train.cfg"),
                 "model.embed_dim = 16\nmodel.text.width = 16\nmodel.text.heads = 2\nmodel.text.layers = 1\n"
                 "model.text.context_length = 12\nmodel.image.image_size = 16\nmodel.image.patch_size = 8\n"
                 "model.image.width = 16\nmodel.image.heads = 2\nmodel.image.layers = 1\n"
                 "batch_size = 8\nmax_steps = 6\nwarmup_steps = 2\neval_every = 3\n");
  nd::write_file(p("detector.json"),
                 R"({"encoder": {"image_size": 16, "patch_size": 8, "width": 16, "heads": 2, "layers": 1},)"
                 R"( "embed_dim": 8, "batch_size": 8, "steps": 6, "warmup_steps": 2})");
  nd::write_file(p("queries.txt"), "circle\nred\n");
  nd::write_file(p("points.json"),
                 R"([{"model":"a","in_dist_acc":0.6,"shift_acc":0.4,"tag":"linear"},)"
                 R"({"model":"b","in_dist_acc":0.7,"shift_acc":0.5,"tag":"linear"},)"
                 R"({"model":"c","in_dist_acc":0.8,"shift_acc":0.55,"tag":"linear"},)"
                 R"({"model":"z","in_dist_acc":0.7,"shift_acc":0.65,"tag":"zeroshot"}])");

  // Each step runs twice into a/ and b/ suffixed outputs; a command's inputs
  // come from the first run so both runs see identical inputs.
  struct Step {
    std::string name;
    std::string args;  // {X} expands to the run suffix
    std::vector<std::string> files;
  };
  const std::string d = p("data"), ck = p("run_a/model.ckpt");
  const std::vector<Step> steps{
      {"dataset gen", "dataset gen --seed 5 --dir " + p("data{X}") + " --images-per-combo 6 --image-size 16 --held-out triangle:yellow",
       {"data{X}/seen/pairs.jsonl"}},
      {"dataset build", "dataset build --source " + p("data_a/seen") + " --queries " + p("queries.txt") + " --cap 10 --dir " + p("built{X}"),
       {"built{X}/pairs.jsonl"}},
      {"train", "--seed 5 train --config " + p("train.cfg") + " --data " + p("data_a/seen") + " --eval " + p("data_a/seen") + " --out " + p("run{X}"),
       {"run{X}/report.jsonl", "run{X}/summary.json", "run{X}/model.ckpt"}},
      {"dataset embed", "dataset embed --checkpoint " + ck + " --data " + p("data_a/seen") + " --cache " + p("feat{X}.bin"), {"feat{X}.bin"}},
      {"zeroshot build", "zeroshot build --checkpoint " + ck + " --classes-from " + p("data_a/seen") + " --classifier " + p("zs{X}.bin"), {"zs{X}.bin"}},
      {"zeroshot eval", "zeroshot eval --checkpoint " + ck + " --classifier " + p("zs_a.bin") + " --data " + p("data_a/seen"), {}},
      {"probe fit", "probe fit --train " + p("feat_a.bin") + " --test " + p("feat_a.bin") + " --lambda 0.5", {}},
      {"probe sweep", "probe sweep --train " + p("feat_a.bin") + " --val " + p("feat_a.bin") + " --test " + p("feat_a.bin"), {}},
      {"robustness fit", "--seed 5 robustness fit --points " + p("points.json") + " --resamples 300 --csv " + p("plot{X}.csv"), {"plot{X}.csv"}},
      {"robustness report", "--seed 5 robustness report --points " + p("points.json") + " --resamples 300", {}},
      {"overlap train", "--seed 5 overlap train --config " + p("detector.json") + " --data " + p("data_a/seen") + " --detector " + p("det{X}.ckpt"), {"det{X}.ckpt"}},
      {"overlap index", "overlap index --detector " + p("det_a.ckpt") + " --data " + p("data_a/seen") + " --index " + p("idx{X}.bin"), {"idx{X}.bin"}},
      {"overlap split", "overlap split --detector " + p("det_a.ckpt") + " --index " + p("idx_a.bin") + " --data " + p("data_a/held_out") + " --threshold 0.9", {}},
      {"overlap report", "overlap report --split " + p("split_a.json") + " --results " + p("results.json"), {}},
      {"compare-objectives", "--seed 5 compare-objectives --config " + p("train.cfg") + " --data " + p("data_a/seen") + " --eval " + p("data_a/seen") + " --target 0.5", {}},
  };
  auto expand = [](std::string s, const std::string& x) {
    for (auto pos = s.find("{X}"); pos != std::string::npos; pos = s.find("{X}")) s.replace(pos, 3, x);
    return s;
  };
  std::size_t checked = 0;
  for (const auto& st : steps) {
    for (const std::string x : {"_a", "_b"}) {
      std::string args = expand(st.args, x);
      // Reports go to --out except for train, whose --out is the run directory.
      const std::string report = p("report_" + std::to_string(checked) + x + ".json");
      const std::string cmd = st.name == "train" ? cli + " " + args + " > " + report
                                                 : cli + " --out " + report + " " + args + " > /dev/null";
      const int rc = run(cmd);
      o.require(rc == 0, st.name + " exited with " + std::to_string(rc));
      if (rc) return o;
    }
    // The split output feeds the report step.
    if (st.name == "overlap split") {
      fs::copy_file(p("report_" + std::to_string(checked) + "_a.json"), p("split_a.json"),
                    fs::copy_options::overwrite_existing);
      const auto split = nlohmann::json::parse(nd::read_file(p("split_a.json")));
      nlohmann::json results = nlohmann::json::array();
      for (std::size_t i = 0; i < split.at("examples").size(); ++i) results.push_back(i % 3 != 0);
      nd::write_file(p("results.json"), results.dump());
    }
    std::vector<std::pair<std::string, std::string>> pairs{
        {p("report_" + std::to_string(checked) + "_a.json"), p("report_" + std::to_string(checked) + "_b.json")}};
    for (const auto& f : st.files) pairs.push_back({p(expand(f, "_a")), p(expand(f, "_b"))});
    for (const auto& [a, b] : pairs) {
      std::string ra = nd::read_file(a), rb = nd::read_file(b);
      // Paths naming the run's own outputs legitimately differ by suffix.
      for (auto* s : {&ra, &rb})
        for (const std::string x : {"_a", "_b"})
          for (auto pos = s->find(x); pos != std::string::npos; pos = s->find(x, pos)) s->replace(pos, 2, "_?");
      o.require(!ra.empty() && ra == rb, st.name + ": " + fs::path(a).filename().string() + " differs between runs");
    }
    ++checked;
  }
  if (o.pass) o.detail = std::to_string(checked) + " commands, reports and artefacts byte-identical across two runs";
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria runner"};
  std::vector<int> only;
  std::string cli = CLIP_CLI_PATH;
  std::string work = (fs::temp_directory_path() / "clip_acceptance").string();
  app.add_option("--only", only, "Criteria to run (default: all)")->delimiter(',');
  app.add_option("--cli", cli, "Path to the clip binary");
  app.add_option("--work", work, "Scratch directory for the CLI runs");
  CLI11_PARSE(app, argc, argv);
  std::set<int> selected(only.begin(), only.end());
  if (selected.empty())
    for (int i = 1; i <= 11; ++i) selected.insert(i);

  std::optional<ShapesData> shapes;
  auto shapes_once = [&]() -> const ShapesData& {
    if (!shapes) shapes = shapes_data();
    return *shapes;
  };
  const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
      {1, gradient_suite},
      {2, objective_invariants},
      {3, temperature_contract},
      {4, zeroshot_linear_equivalence},
      {5, [&] { return desk_training(shapes_once()); }},
      {6, [&] { return objective_direction(shapes_once()); }},
      {7, probe_protocol},
      {8, statistics_oracles},
      {9, robustness_math},
      {10, dedup_recovery},
      {11, [&] { return cli_determinism(cli, work); }},
  };
  bool all = true;
  for (const auto& [id, fn] : criteria) {
    if (!selected.count(id)) continue;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    all = all && o.pass;
    std::printf("criterion %d: %s  %s\n", id, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
  }
  return all ? 0 : 1;
}
