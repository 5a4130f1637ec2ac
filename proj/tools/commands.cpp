#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <set>

#include "svebm/checkpoint.hpp"
#include "svebm/data_synth.hpp"
#include "svebm/dataset_io.hpp"
#include "svebm/density.hpp"
#include "svebm/errors.hpp"
#include "svebm/eval_metrics.hpp"
#include "svebm/run_config.hpp"
#include "svebm/trainer.hpp"

namespace svebm::cli {

namespace {

const std::vector<std::string> kMetricNames{"accuracy", "attribute_control", "bleu", "homogeneity",
                                            "matched_accuracy", "nll", "word_kl"};

constexpr std::uint64_t kLabeledSubsetStream = 7;

std::string joined(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + v[i];
  return out;
}

bool all_labeled(std::span<const Example> xs) {
  return !xs.empty() && std::all_of(xs.begin(), xs.end(), [](const Example& x) { return x.label.has_value(); });
}

std::size_t infer_data_dim(const RunConfig& rc, const Vocabulary& vocab, std::span<const Example> xs) {
  switch (rc.model.modality) {
    case Modality::Points:
      return 2;
    case Modality::Sequence:
      return vocab.size();
    case Modality::Document: {
      if (rc.model.data_dim > 0) return rc.model.data_dim;
      if (vocab.size() > Vocabulary::kNumReserved) return vocab.size();
      int max_id = -1;
      for (const auto& x : xs)
        for (const auto& tc : std::get<DocumentExample>(x.x).counts) max_id = std::max(max_id, tc.id);
      return static_cast<std::size_t>(max_id + 1);
    }
  }
  return rc.model.data_dim;
}

std::vector<std::string> default_metrics(Modality m, bool labeled) {
  std::vector<std::string> out;
  if (labeled) out = {"homogeneity", "matched_accuracy", "accuracy"};
  if (m == Modality::Sequence) out.insert(out.end(), {"bleu", "word_kl"});
  out.push_back("nll");
  return out;
}

std::vector<std::string> resolve_metrics(const std::string& flag, const std::vector<std::string>& configured,
                                         Modality m, bool labeled) {
  std::vector<std::string> names = flag.empty() ? configured : split_list(flag);
  if (names.empty()) return default_metrics(m, labeled);
  for (const auto& n : names)
    if (std::find(kMetricNames.begin(), kMetricNames.end(), n) == kMetricNames.end())
      throw ConfigError("unknown metric '" + n + "' (valid: " + joined(kMetricNames) + ")");
  return names;
}

std::vector<TokenSeq> token_seqs(const std::vector<Observation>& obs) {
  std::vector<TokenSeq> out;
  for (const auto& o : obs) out.push_back(std::get<SequenceExample>(o).tokens);
  return out;
}

std::vector<ReportRow> evaluate(const Model& model, const ChainPool& pool, const LangevinConfig& lcfg,
                                std::span<const Example> data, const std::vector<std::string>& metrics,
                                const EvalOptions& eo, std::uint64_t seed, const std::string& ckpt_id) {
  if (data.empty()) throw DataError("evaluation dataset is empty");
  if (eo.max_examples > 0 && data.size() > eo.max_examples) data = data.first(eo.max_examples);
  std::vector<ReportRow> rows;
  auto add = [&](const std::string& name, double v, std::size_t n) { rows.push_back({name, v, n, seed, ckpt_id}); };

  std::vector<int> pred;
  auto predictions = [&]() -> const std::vector<int>& {
    if (pred.empty()) pred = classify_batch(model, data);
    return pred;
  };

  for (std::size_t mi = 0; mi < metrics.size(); ++mi) {
    const std::string& m = metrics[mi];
    Rng rng(derive_seed(seed, 100 + mi));
    if (m == "homogeneity" || m == "matched_accuracy" || m == "accuracy") {
      const std::vector<int> truth = true_labels(data);
      const auto& p = predictions();
      if (m == "homogeneity") {
        add(m, homogeneity(truth, p), data.size());
      } else if (m == "matched_accuracy") {
        const int classes = *std::max_element(truth.begin(), truth.end()) + 1;
        add(m, matched_accuracy(truth, p, model.config.num_classes, static_cast<std::size_t>(classes)), data.size());
      } else {
        std::size_t hits = 0;
        for (std::size_t i = 0; i < truth.size(); ++i) hits += truth[i] == p[i];
        add(m, static_cast<double>(hits) / static_cast<double>(truth.size()), data.size());
      }
    } else if (m == "nll") {
      const double log_z = estimate_log_partition(model.prior, eo.log_z_samples, rng);
      const std::size_t n = std::min(eo.nll_examples, data.size());
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) total += nll_importance_sampling(model, data[i], eo.nll_samples, rng, log_z);
      add(m, total / static_cast<double>(n), n);
    } else if (m == "bleu") {
      if (model.config.modality != Modality::Sequence) throw ConfigError("metric bleu needs sequence data");
      add(m, bleu_reconstruction(model, data, rng), data.size());
    } else if (m == "word_kl") {
      if (model.config.modality != Modality::Sequence) throw ConfigError("metric word_kl needs sequence data");
      std::vector<TokenSeq> real;
      for (const auto& x : data) real.push_back(std::get<SequenceExample>(x.x).tokens);
      const Matrix z = draw_prior_samples(pool, model.prior, lcfg, eo.sample_count, rng);
      SampleOptions so;
      so.max_len = model.config.max_len;
      add(m, word_kl(real, token_seqs(model.decoder.sample(z, so, rng))), eo.sample_count);
    } else if (m == "attribute_control") {
      const Judge judge = [&](const Observation& o) {
        return static_cast<int>(classify(model, Example{o, std::nullopt}).index);
      };
      SampleOptions so;
      so.max_len = model.config.max_len;
      so.document_length = 20;
      const std::size_t per_label = std::max<std::size_t>(1, eo.sample_count / model.config.num_classes);
      double acc = 0.0;
      for (std::size_t k = 0; k < model.config.num_classes; ++k)
        acc += attribute_control_accuracy(model, k, per_label, judge, lcfg, rng, so);
      add(m, acc / static_cast<double>(model.config.num_classes), per_label * model.config.num_classes);
    }
  }
  return rows;
}

void write_rows(const std::filesystem::path& out, const std::vector<ReportRow>& rows) {
  if (!out.empty()) {
    write_report(out, rows);
    return;
  }
  std::cout << kReportHeader << '\n';
  for (const auto& r : rows) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", r.value);
    std::cout << r.metric << ',' << buf << ',' << r.n << ',' << r.seed << ',' << r.checkpoint_id << '\n';
  }
}

std::filesystem::path data_path(const std::filesystem::path& given, const RunConfig& rc, bool prefer_eval) {
  if (!given.empty()) return given;
  if (prefer_eval && !rc.eval_data.empty()) return rc.eval_data;
  if (!rc.train_data.empty()) return rc.train_data;
  throw ConfigError("no dataset given and the checkpoint does not name one");
}

std::vector<Example> load_for_model(const std::filesystem::path& path, const Model& model) {
  Vocabulary vocab = model.vocab;
  auto xs = load_dataset(path, model.config.modality, vocab, false, model.config.max_len);
  if (model.config.modality == Modality::Points)
    for (const auto& x : xs)
      if (std::get<PointExample>(x.x).coords.size() != model.config.data_dim)
        throw DataError(path.string() + ": point dimension does not match the checkpoint");
  return xs;
}

std::ofstream open_output(const std::filesystem::path& p) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream os(p);
  if (!os) throw IoError("cannot write " + p.string());
  return os;
}

}  // namespace

void cmd_train(const TrainArgs& a) {
  KeyValues kv = read_key_values(a.config);
  if (a.seed) kv.set("train.seed", std::to_string(*a.seed));
  if (!a.mode.empty()) {
    kv.set("train.mode", a.mode);
    if (a.mode == "svebm") kv.set("train.lambda", "0");
    else if (!kv.contains("train.lambda") || kv.find("train.lambda")->value == "0") kv.set("train.lambda", "50");
  }
  if (!a.out.empty()) kv.set("output.dir", a.out.string());
  RunConfig rc = RunConfig::from_key_values(kv);
  if (rc.output_dir.empty()) throw ConfigError(a.config.string() + ": missing required field 'output.dir'");
  const auto resolve = [&](std::filesystem::path& p) {
    if (!p.empty() && p.is_relative() && !std::filesystem::exists(p)) p = a.config.parent_path() / p;
  };
  resolve(rc.train_data);
  resolve(rc.labeled_data);
  resolve(rc.eval_data);
  resolve(rc.vocab_path);

  Vocabulary vocab;
  const bool fixed_vocab = !rc.vocab_path.empty();
  if (fixed_vocab) vocab = Vocabulary::load(rc.vocab_path);
  std::vector<Example> train = load_dataset(rc.train_data, rc.model.modality, vocab, !fixed_vocab, rc.model.max_len);
  std::vector<Example> labeled;
  if (!rc.labeled_data.empty()) {
    labeled = load_dataset(rc.labeled_data, rc.model.modality, vocab, !fixed_vocab, rc.model.max_len);
    if (!all_labeled(labeled)) throw DataError(rc.labeled_data.string() + ": every labeled example needs a label");
  }
  if (train.empty()) throw DataError(rc.train_data.string() + ": no examples");

  std::vector<Example> unlabeled = train;
  if (rc.label_fraction > 0.0) {
    if (!all_labeled(train)) throw DataError("data.label_fraction needs a fully labeled training set");
    std::vector<std::size_t> idx(train.size());
    std::iota(idx.begin(), idx.end(), 0);
    Rng r(derive_seed(rc.train.seed, kLabeledSubsetStream));
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[r.below(i)]);
    const auto n_lab = static_cast<std::size_t>(std::llround(rc.label_fraction * static_cast<double>(train.size())));
    std::vector<bool> is_lab(train.size(), false);
    for (std::size_t i = 0; i < n_lab; ++i) is_lab[idx[i]] = true;
    unlabeled.clear();
    for (std::size_t i = 0; i < train.size(); ++i) (is_lab[i] ? labeled : unlabeled).push_back(train[i]);
  }
  if (!labeled.empty() && rc.train.labeled_batch_size == 0)
    rc.train.labeled_batch_size = std::min(rc.train.batch_size, labeled.size());
  for (const auto& x : labeled)
    if (static_cast<std::size_t>(*x.label) >= rc.model.num_classes)
      throw DataError("label " + std::to_string(*x.label) + " outside [0, model.num_classes)");

  rc.model.data_dim = infer_data_dim(rc, vocab, train);
  if (rc.model.modality == Modality::Points)
    for (const auto& x : train)
      if (std::get<PointExample>(x.x).coords.size() != 2) throw DataError("point data must be 2D");
  rc.validate();

  std::filesystem::create_directories(rc.output_dir);
  {
    auto os = open_output(rc.output_dir / "config.txt");
    rc.to_key_values().write(os);
  }
  if (vocab.size() > Vocabulary::kNumReserved) vocab.save(rc.output_dir / "vocab.txt");

  ModelState state = ModelState::create(rc.model, rc.train);
  state.model.vocab = vocab;

  FitOptions fo;
  fo.log_path = rc.output_dir / "train_log.tsv";
  if (rc.train.checkpoint_every > 0) fo.checkpoint_dir = rc.output_dir / "checkpoints";
  const KeyValues echo = rc.to_key_values();
  for (const auto& e : echo.entries())
    if (e.key.rfind("data.", 0) == 0 || e.key.rfind("eval.", 0) == 0 || e.key == "output.dir")
      fo.config_extra.emplace_back(e.key, e.value);
  fit(state, unlabeled, labeled, rc.train, fo);

  const auto final_path = rc.output_dir / "final.ckpt";
  save_checkpoint(final_path, state, rc);

  std::vector<Example> eval_data = train;
  if (!rc.eval_data.empty()) eval_data = load_for_model(rc.eval_data, state.model);
  const auto metrics = resolve_metrics("", rc.eval.metrics, rc.model.modality, all_labeled(eval_data));
  write_report(rc.output_dir / "eval_report.csv",
               evaluate(state.model, state.pool, rc.train.langevin, eval_data, metrics, rc.eval, rc.eval.seed,
                        checkpoint_id(final_path)));
}

void cmd_eval(const EvalArgs& a) {
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  const auto data = load_for_model(data_path(a.data, ck.config, true), ck.state.model);
  const auto metrics = resolve_metrics(a.metrics, ck.config.eval.metrics, ck.config.model.modality, all_labeled(data));
  const std::uint64_t seed = a.seed.value_or(ck.config.eval.seed);
  write_rows(a.out, evaluate(ck.state.model, ck.state.pool, ck.config.train.langevin, data, metrics, ck.config.eval,
                             seed, checkpoint_id(a.checkpoint)));
}

void cmd_sample(const SampleArgs& a) {
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  const Model& model = ck.state.model;
  if (a.label && *a.label >= model.config.num_classes)
    throw ConfigError("label " + std::to_string(*a.label) + " outside [0, " + std::to_string(model.config.num_classes) +
                      ")");
  if (!(a.temperature > 0.0)) throw ConfigError("temperature must be > 0");
  Rng rng(derive_seed(a.seed.value_or(ck.config.eval.seed), 11));

  std::vector<Observation> obs;
  if (a.count > 0) {
    const Matrix z = a.label ? sample_conditional_prior(model.prior, *a.label, a.count, ck.config.train.langevin, rng)
                             : draw_prior_samples(ck.state.pool, model.prior, ck.config.train.langevin, a.count, rng);
    SampleOptions so;
    so.temperature = a.temperature;
    so.max_len = model.config.max_len;
    so.document_length = a.length;
    obs = model.decoder.sample(z, so, rng);
  }

  std::ostringstream os;
  if (!obs.empty()) {
    switch (model.config.modality) {
      case Modality::Points: {
        os << "x,y\n";
        char buf[96];
        for (const auto& o : obs) {
          const auto& p = std::get<PointExample>(o);
          std::snprintf(buf, sizeof buf, "%.17g,%.17g", p.coords[0], p.coords[1]);
          os << buf << '\n';
        }
        break;
      }
      case Modality::Sequence:
        for (const auto& o : obs) os << model.vocab.decode(std::get<SequenceExample>(o).tokens) << '\n';
        break;
      case Modality::Document:
        for (const auto& o : obs) {
          const auto& d = std::get<DocumentExample>(o);
          for (std::size_t i = 0; i < d.counts.size(); ++i)
            os << (i ? " " : "") << d.counts[i].id << ':' << d.counts[i].count;
          os << '\n';
        }
        break;
    }
  }
  if (a.out.empty()) {
    std::cout << os.str();
  } else {
    auto f = open_output(a.out);
    f << os.str();
  }
}

void cmd_classify(const ClassifyArgs& a) {
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  const auto data = load_for_model(data_path(a.data, ck.config, false), ck.state.model);
  Matrix probs;
  const auto pred = classify_batch(ck.state.model, data, &probs);
  std::ostringstream os;
  os << "index";
  for (std::size_t k = 0; k < probs.cols(); ++k) os << "\tp" << k;
  os << '\n';
  char buf[40];
  for (std::size_t i = 0; i < pred.size(); ++i) {
    os << pred[i];
    for (double p : probs.row(i)) {
      std::snprintf(buf, sizeof buf, "\t%.17g", p);
      os << buf;
    }
    os << '\n';
  }
  if (a.out.empty()) {
    std::cout << os.str();
  } else {
    auto f = open_output(a.out);
    f << os.str();
  }
}

void cmd_plot_density(const PlotArgs& a) {
  if (a.checkpoint.empty() == a.points.empty())
    throw ConfigError("plot-density needs exactly one of --checkpoint or --points");
  std::vector<DensityPanel> panels;
  if (!a.points.empty()) {
    const PointDataset ds = read_points(a.points);
    if (ds.size() < 2) throw DataError(a.points.string() + ": need at least two points");
    panels.push_back(make_panel("true_x", ds.points, bounding_grid({&ds.points}, 100, 0.5)));
  } else {
    const Checkpoint ck = load_checkpoint(a.checkpoint);
    const Model& model = ck.state.model;
    if (model.config.modality != Modality::Points || model.config.data_dim != 2)
      throw ConfigError("plot-density needs a checkpoint trained on 2D points");
    const PointDataset ds = read_points(data_path(a.data, ck.config, false));
    Rng rng(derive_seed(a.seed.value_or(ck.config.eval.seed), 13));
    PanelOptions po;
    po.sample_count = ck.config.eval.sample_count;
    po.grid_size = ck.config.eval.grid_size;
    panels = density_panels(model, ck.state.pool, ck.config.train.langevin, ds.points, po, rng);
  }

  std::filesystem::create_directories(a.out);
  auto index = open_output(a.out / "index.csv");
  index << "panel,file,x_min,x_max,y_min,y_max,nx,ny,bandwidth,points\n";
  char buf[256];
  for (const auto& p : panels) {
    const std::string file = p.name + ".csv";
    auto os = open_output(a.out / file);
    for (std::size_t i = 0; i < p.density.rows(); ++i) {
      for (std::size_t j = 0; j < p.density.cols(); ++j) {
        std::snprintf(buf, sizeof buf, "%s%.17g", j ? "," : "", p.density(i, j));
        os << buf;
      }
      os << '\n';
    }
    std::snprintf(buf, sizeof buf, "%s,%s,%.17g,%.17g,%.17g,%.17g,%zu,%zu,%.17g,%zu", p.name.c_str(), file.c_str(),
                  p.grid.x_min, p.grid.x_max, p.grid.y_min, p.grid.y_max, p.grid.nx, p.grid.ny, p.bandwidth,
                  p.points.rows());
    index << buf << '\n';
  }
}

void cmd_make_data(const MakeDataArgs& a) {
  if (a.kind == "eight-gaussians" || a.kind == "pinwheel") {
    const PointDataset ds = a.kind == "pinwheel" ? pinwheel(a.count, a.seed) : eight_gaussians(a.count, a.seed);
    write_points(a.out, ds);
    return;
  }
  if (a.kind != "corpus" && a.kind != "documents")
    throw ConfigError("unknown data kind '" + a.kind + "' (valid: corpus, documents, eight-gaussians, pinwheel)");
  const TextCorpus c = toy_text_corpus(GrammarSpec::default_spec(), a.count, a.seed);
  if (a.kind == "corpus") write_corpus(a.out, c.sequences, c.vocab);
  else write_documents(a.out, c.documents);
  if (!a.vocab.empty()) c.vocab.save(a.vocab);
}

}  // namespace svebm::cli
