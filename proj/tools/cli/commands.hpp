#pragma once

namespace CLI {
class App;
}

namespace clip::cli {

struct Globals;

void register_dataset(CLI::App& app, Globals& g);
void register_train(CLI::App& app, Globals& g);
void register_zeroshot(CLI::App& app, Globals& g);
void register_probe(CLI::App& app, Globals& g);
void register_robustness(CLI::App& app, Globals& g);
void register_overlap(CLI::App& app, Globals& g);

}  // namespace clip::cli
