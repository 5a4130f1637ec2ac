#include <CLI11.hpp>

#include <iostream>

#include "commands.hpp"
#include "svebm/errors.hpp"

namespace {

template <class T>
void optional_flag(CLI::App* app, const std::string& name, std::optional<T>& target, const std::string& help) {
  app->add_option_function<T>(name, [&target](const T& v) { target = v; }, help);
}

}  // namespace

int main(int argc, char** argv) {
  using namespace svebm::cli;
  CLI::App app{"Latent-space energy-based prior models: training, evaluation and sampling"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train a model from a configuration file");
  t->add_option("--config", train.config, "Configuration file")->required()->check(CLI::ExistingFile);
  t->add_option("--out", train.out, "Output directory (overrides output.dir)");
  optional_flag(t, "--seed", train.seed, "Random seed (overrides train.seed)");
  t->add_option("--mode", train.mode, "svebm or ib-ebm (overrides train.mode)");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  e->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  e->add_option("data", ev.data, "Dataset (default: data.eval, then data.train from the checkpoint)");
  e->add_option("--metrics", ev.metrics, "Comma-separated metric names");
  e->add_option("--out", ev.out, "Report file (default: standard output)");
  optional_flag(e, "--seed", ev.seed, "Evaluation seed");

  SampleArgs sa;
  auto* s = app.add_subcommand("sample", "Draw samples from the learned prior");
  s->add_option("--checkpoint", sa.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  s->add_option("--count", sa.count, "Number of samples");
  optional_flag(s, "--label", sa.label, "Sample from p(z | y = label)");
  s->add_option("--temperature", sa.temperature, "Decoder sampling temperature");
  s->add_option("--length", sa.length, "Tokens per sampled document");
  s->add_option("--out", sa.out, "Output file (default: standard output)");
  optional_flag(s, "--seed", sa.seed, "Random seed");

  ClassifyArgs ca;
  auto* c = app.add_subcommand("classify", "Predict y = argmax p(y | z = mean(x))");
  c->add_option("--checkpoint", ca.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  c->add_option("data", ca.data, "Dataset (default: data.train from the checkpoint)");
  c->add_option("--out", ca.out, "Output file (default: standard output)");

  PlotArgs pa;
  auto* p = app.add_subcommand("plot-density", "Write KDE density grids for 2D point models");
  p->add_option("--checkpoint", pa.checkpoint, "Checkpoint file")->check(CLI::ExistingFile);
  p->add_option("--points", pa.points, "Point file (true_x panel only)")->check(CLI::ExistingFile);
  p->add_option("data", pa.data, "Dataset for the data-driven panels (default: data.train)");
  p->add_option("--out", pa.out, "Output directory")->required();
  optional_flag(p, "--seed", pa.seed, "Random seed");

  MakeDataArgs md;
  auto* m = app.add_subcommand("make-data", "Write a synthetic dataset");
  m->add_option("kind", md.kind, "eight-gaussians, pinwheel, corpus or documents")->required();
  m->add_option("--count", md.count, "Number of examples");
  m->add_option("--seed", md.seed, "Random seed");
  m->add_option("--out", md.out, "Output file")->required();
  m->add_option("--vocab", md.vocab, "Vocabulary file for the text kinds");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    if (err.get_exit_code() == 0) return app.exit(err);
    std::cerr << "error[E_USAGE]: " << err.what() << '\n';
    return 2;
  }

  try {
    if (t->parsed()) cmd_train(train);
    else if (e->parsed()) cmd_eval(ev);
    else if (s->parsed()) cmd_sample(sa);
    else if (c->parsed()) cmd_classify(ca);
    else if (p->parsed()) cmd_plot_density(pa);
    else if (m->parsed()) cmd_make_data(md);
  } catch (const svebm::Error& err) {
    std::cerr << "error[" << err.code() << "]: " << err.what() << '\n';
    return 1;
  } catch (const std::exception& err) {
    std::cerr << "error[E_INTERNAL]: " << err.what() << '\n';
    return 1;
  }
  return 0;
}
