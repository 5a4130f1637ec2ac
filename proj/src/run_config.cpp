#include "svebm/run_config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>

#include "svebm/errors.hpp"

namespace svebm {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string fmt_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string fmt_sizes(const std::vector<std::size_t>& v) {
  if (v.empty()) return "none";
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

class Reader {
 public:
  explicit Reader(const KeyValues& kv) : kv_(kv) {}

  const KeyValue* take(const std::string& key) {
    used_.insert({key, true});
    return kv_.find(key);
  }

  [[noreturn]] void fail(const KeyValue* e, const std::string& msg) const {
    throw ConfigError(kv_.where(e) + ": " + msg);
  }

  void str(const std::string& key, std::string& out) {
    if (const auto* e = take(key)) out = e->value;
  }
  void path(const std::string& key, std::filesystem::path& out) {
    if (const auto* e = take(key)) out = e->value;
  }
  void real(const std::string& key, double& out) {
    if (const auto* e = take(key)) {
      double v = 0.0;
      const char* end = e->value.data() + e->value.size();
      const auto res = std::from_chars(e->value.data(), end, v);
      if (res.ec != std::errc() || res.ptr != end) fail(e, key + ": expected a number, got '" + e->value + "'");
      out = v;
    }
  }
  template <class Int>
  void integer(const std::string& key, Int& out) {
    if (const auto* e = take(key)) out = parse_int<Int>(e, key, e->value);
  }
  void boolean(const std::string& key, bool& out) {
    if (const auto* e = take(key)) {
      if (e->value == "true" || e->value == "1") out = true;
      else if (e->value == "false" || e->value == "0") out = false;
      else fail(e, key + ": expected true or false, got '" + e->value + "'");
    }
  }
  void sizes(const std::string& key, std::vector<std::size_t>& out) {
    if (const auto* e = take(key)) {
      out.clear();
      if (e->value == "none" || e->value.empty()) return;
      for (const auto& part : split_list(e->value)) out.push_back(parse_int<std::size_t>(e, key, part));
    }
  }
  template <class T, class Parse>
  void enumeration(const std::string& key, T& out, Parse parse) {
    if (const auto* e = take(key)) {
      try {
        out = parse(e->value);
      } catch (const Error& err) {
        fail(e, key + ": " + err.what());
      }
    }
  }

  void reject_unknown() const {
    for (const auto& e : kv_.entries())
      if (!used_.count(e.key)) fail(&e, "unknown key '" + e.key + "'");
  }

 private:
  template <class Int>
  Int parse_int(const KeyValue* e, const std::string& key, const std::string& text) const {
    Int v{};
    const char* end = text.data() + text.size();
    const auto res = std::from_chars(text.data(), end, v);
    if (res.ec != std::errc() || res.ptr != end)
      fail(e, key + ": expected a non-negative integer, got '" + text + "'");
    return v;
  }

  const KeyValues& kv_;
  std::map<std::string, bool> used_;
};

}  // namespace

std::vector<std::string> split_list(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) {
    cur = trim(cur);
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

void KeyValues::set(const std::string& key, const std::string& value, int line) {
  for (auto& e : entries_) {
    if (e.key == key) {
      e.value = value;
      e.line = line;
      return;
    }
  }
  entries_.push_back({key, value, line});
}

const KeyValue* KeyValues::find(const std::string& key) const {
  for (const auto& e : entries_)
    if (e.key == key) return &e;
  return nullptr;
}

std::string KeyValues::where(const KeyValue* kv) const {
  const std::string src = source_.empty() ? "<config>" : source_;
  if (kv != nullptr && kv->line > 0) return src + ":" + std::to_string(kv->line);
  return src;
}

void KeyValues::write(std::ostream& os) const {
  for (const auto& e : entries_) os << e.key << '=' << e.value << '\n';
}

KeyValues parse_key_values(std::istream& is, const std::string& source) {
  KeyValues kv(source);
  std::string line, section;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (t.front() == '[') {
      if (t.back() != ']' || t.size() < 3)
        throw ConfigError(source + ":" + std::to_string(lineno) + ": malformed section header '" + t + "'");
      section = trim(std::string_view(t).substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(source + ":" + std::to_string(lineno) + ": expected key=value, got '" + t + "'");
    std::string key = trim(std::string_view(t).substr(0, eq));
    if (key.empty()) throw ConfigError(source + ":" + std::to_string(lineno) + ": empty key");
    if (!section.empty()) key = section + "." + key;
    kv.set(key, trim(std::string_view(t).substr(eq + 1)), lineno);
  }
  return kv;
}

KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read config file " + path.string());
  return parse_key_values(is, path.string());
}

TrainMode parse_mode(std::string_view name) {
  if (name == "svebm") return TrainMode::Svebm;
  if (name == "ib-ebm") return TrainMode::IbEbm;
  throw ConfigError("unknown mode '" + std::string(name) + "' (expected svebm or ib-ebm)");
}

std::string_view mode_name(TrainMode m) { return m == TrainMode::IbEbm ? "ib-ebm" : "svebm"; }

KeyValues RunConfig::to_key_values() const {
  KeyValues kv("config");
  kv.set("data.modality", std::string(modality_name(model.modality)));
  kv.set("data.train", train_data.string());
  kv.set("data.labeled", labeled_data.string());
  kv.set("data.eval", eval_data.string());
  kv.set("data.vocab", vocab_path.string());
  kv.set("data.label_fraction", fmt_double(label_fraction));
  kv.set("data.max_len", std::to_string(model.max_len));

  kv.set("model.latent_dim", std::to_string(model.latent_dim));
  kv.set("model.num_classes", std::to_string(model.num_classes));
  kv.set("model.data_dim", std::to_string(model.data_dim));
  kv.set("model.prior_hidden", fmt_sizes(model.prior_hidden));
  kv.set("model.encoder_hidden", fmt_sizes(model.encoder_hidden));
  kv.set("model.decoder_hidden", fmt_sizes(model.decoder_hidden));
  kv.set("model.activation", std::string(activation_name(model.activation)));
  kv.set("model.prior_output_gain", fmt_double(model.prior_output_gain));
  kv.set("model.observation_std", fmt_double(model.observation_std));
  kv.set("model.embed_dim", std::to_string(model.embed_dim));
  kv.set("model.rnn_hidden", std::to_string(model.rnn_hidden));

  kv.set("train.mode", std::string(mode_name(mode)));
  kv.set("train.iterations", std::to_string(train.iterations));
  kv.set("train.lambda", fmt_double(train.lambda));
  kv.set("train.lr_prior", fmt_double(train.lr_prior));
  kv.set("train.lr_psi", fmt_double(train.lr_psi));
  kv.set("train.lr_sup", fmt_double(train.lr_sup));
  kv.set("train.batch_size", std::to_string(train.batch_size));
  kv.set("train.labeled_batch_size", std::to_string(train.labeled_batch_size));
  kv.set("train.langevin_step_size", fmt_double(train.langevin.step_size));
  kv.set("train.langevin_steps", std::to_string(train.langevin.steps));
  kv.set("train.num_chains", std::to_string(train.num_chains));
  kv.set("train.seed", std::to_string(train.seed));
  kv.set("train.optimizer", std::string(optimizer_name(train.optimizer)));
  kv.set("train.beta1", fmt_double(train.beta1));
  kv.set("train.beta2", fmt_double(train.beta2));
  kv.set("train.clip_norm", fmt_double(train.clip_norm));
  kv.set("train.log_every", std::to_string(train.log_every));
  kv.set("train.checkpoint_every", std::to_string(train.checkpoint_every));
  kv.set("train.kl_warmup", std::to_string(train.kl_warmup));
  kv.set("train.chain_restart_every", std::to_string(train.chain_restart_every));
  kv.set("train.labeled_in_unlabeled", train.labeled_in_unlabeled ? "true" : "false");

  std::string metrics;
  for (std::size_t i = 0; i < eval.metrics.size(); ++i) metrics += (i ? "," : "") + eval.metrics[i];
  kv.set("eval.metrics", metrics);
  kv.set("eval.nll_samples", std::to_string(eval.nll_samples));
  kv.set("eval.log_z_samples", std::to_string(eval.log_z_samples));
  kv.set("eval.max_examples", std::to_string(eval.max_examples));
  kv.set("eval.nll_examples", std::to_string(eval.nll_examples));
  kv.set("eval.grid_size", std::to_string(eval.grid_size));
  kv.set("eval.sample_count", std::to_string(eval.sample_count));
  kv.set("eval.seed", std::to_string(eval.seed));

  kv.set("output.dir", output_dir.string());
  return kv;
}

RunConfig RunConfig::from_key_values(const KeyValues& kv) {
  RunConfig c;
  Reader r(kv);
  for (const char* key : {"data.modality", "data.train"})
    if (!kv.contains(key)) throw ConfigError(kv.where(nullptr) + ": missing required field '" + key + "'");

  r.enumeration("data.modality", c.model.modality, parse_modality);
  r.path("data.train", c.train_data);
  r.path("data.labeled", c.labeled_data);
  r.path("data.eval", c.eval_data);
  r.path("data.vocab", c.vocab_path);
  r.real("data.label_fraction", c.label_fraction);
  r.integer("data.max_len", c.model.max_len);

  r.integer("model.latent_dim", c.model.latent_dim);
  r.integer("model.num_classes", c.model.num_classes);
  r.integer("model.data_dim", c.model.data_dim);
  // text dimensions default to 0 and are inferred from the vocabulary or data
  if (!kv.contains("model.data_dim")) c.model.data_dim = c.model.modality == Modality::Points ? 2 : 0;
  r.sizes("model.prior_hidden", c.model.prior_hidden);
  r.sizes("model.encoder_hidden", c.model.encoder_hidden);
  r.sizes("model.decoder_hidden", c.model.decoder_hidden);
  r.enumeration("model.activation", c.model.activation, parse_activation);
  r.real("model.prior_output_gain", c.model.prior_output_gain);
  r.real("model.observation_std", c.model.observation_std);
  r.integer("model.embed_dim", c.model.embed_dim);
  r.integer("model.rnn_hidden", c.model.rnn_hidden);

  const KeyValue* mode_kv = kv.find("train.mode");
  const KeyValue* lambda_kv = kv.find("train.lambda");
  r.enumeration("train.mode", c.mode, parse_mode);
  r.integer("train.iterations", c.train.iterations);
  r.real("train.lambda", c.train.lambda);
  if (mode_kv != nullptr && lambda_kv == nullptr && c.mode == TrainMode::IbEbm) c.train.lambda = 50.0;
  if (mode_kv == nullptr) c.mode = c.train.lambda > 0.0 ? TrainMode::IbEbm : TrainMode::Svebm;
  r.real("train.lr_prior", c.train.lr_prior);
  r.real("train.lr_psi", c.train.lr_psi);
  r.real("train.lr_sup", c.train.lr_sup);
  r.integer("train.batch_size", c.train.batch_size);
  r.integer("train.labeled_batch_size", c.train.labeled_batch_size);
  r.real("train.langevin_step_size", c.train.langevin.step_size);
  r.integer("train.langevin_steps", c.train.langevin.steps);
  r.integer("train.num_chains", c.train.num_chains);
  r.integer("train.seed", c.train.seed);
  r.enumeration("train.optimizer", c.train.optimizer, parse_optimizer);
  r.real("train.beta1", c.train.beta1);
  r.real("train.beta2", c.train.beta2);
  r.real("train.clip_norm", c.train.clip_norm);
  r.integer("train.log_every", c.train.log_every);
  r.integer("train.checkpoint_every", c.train.checkpoint_every);
  r.integer("train.kl_warmup", c.train.kl_warmup);
  r.integer("train.chain_restart_every", c.train.chain_restart_every);
  r.boolean("train.labeled_in_unlabeled", c.train.labeled_in_unlabeled);

  std::string metrics;
  r.str("eval.metrics", metrics);
  c.eval.metrics = split_list(metrics);
  r.integer("eval.nll_samples", c.eval.nll_samples);
  r.integer("eval.log_z_samples", c.eval.log_z_samples);
  r.integer("eval.max_examples", c.eval.max_examples);
  r.integer("eval.nll_examples", c.eval.nll_examples);
  r.integer("eval.grid_size", c.eval.grid_size);
  r.integer("eval.sample_count", c.eval.sample_count);
  r.integer("eval.seed", c.eval.seed);

  r.path("output.dir", c.output_dir);
  r.reject_unknown();

  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(kv.where(nullptr) + ": " + e.what());
  }
  return c;
}

void RunConfig::validate() const {
  if (mode == TrainMode::IbEbm && !(train.lambda > 0.0)) throw ConfigError("mode ib-ebm requires train.lambda > 0");
  if (mode == TrainMode::Svebm && train.lambda != 0.0) throw ConfigError("mode svebm requires train.lambda = 0");
  if (model.latent_dim < 1) throw ConfigError("model.latent_dim must be >= 1");
  if (model.num_classes < 2) throw ConfigError("model.num_classes must be >= 2");
  if (!(model.observation_std > 0.0)) throw ConfigError("model.observation_std must be > 0");
  if (label_fraction < 0.0 || label_fraction > 1.0) throw ConfigError("data.label_fraction must lie in [0, 1]");
  if (model.modality == Modality::Sequence && (model.embed_dim < 1 || model.rnn_hidden < 1))
    throw ConfigError("model.embed_dim and model.rnn_hidden must be >= 1");
  if (eval.nll_samples < 1) throw ConfigError("eval.nll_samples must be >= 1");
  if (eval.grid_size < 2) throw ConfigError("eval.grid_size must be >= 2");
  train.validate();
}

RunConfig load_run_config(const std::filesystem::path& path) {
  return RunConfig::from_key_values(read_key_values(path));
}

}  // namespace svebm
