#include "svebm/checkpoint.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "svebm/errors.hpp"

namespace svebm {

namespace {

std::string hex(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

void write_values(std::ostream& os, std::span<const double> v) {
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? " " : "") << hex(v[i]);
  os << '\n';
}

void write_moments(std::ostream& os, const std::string& group, const Optimizer& opt) {
  const auto& m = opt.first_moments();
  const auto& v = opt.second_moments();
  os << "optimizer " << group << ' ' << opt.steps_taken() << ' ' << m.size() << '\n';
  for (const auto& [name, mv] : m) {
    os << "moment " << name << ' ' << mv.size() << '\n';
    write_values(os, mv);
    write_values(os, v.at(name));
  }
}

class Parser {
 public:
  Parser(std::istream& is, std::string source) : is_(is), source_(std::move(source)) {}

  [[noreturn]] void fail(const std::string& msg) const {
    throw DataError(source_ + ":" + std::to_string(line_) + ": " + msg);
  }

  std::string line() {
    std::string s;
    if (!std::getline(is_, s)) fail("unexpected end of checkpoint");
    ++line_;
    return s;
  }

  std::istringstream header(const std::string& expected) {
    std::istringstream ss(line());
    std::string tag;
    ss >> tag;
    if (tag != expected) fail("expected '" + expected + "', found '" + tag + "'");
    return ss;
  }

  std::vector<double> values(std::size_t n) {
    const std::string s = line();
    std::vector<double> out;
    out.reserve(n);
    const char* p = s.c_str();
    for (std::size_t i = 0; i < n; ++i) {
      char* end = nullptr;
      const double v = std::strtod(p, &end);
      if (end == p) fail("expected " + std::to_string(n) + " values, found " + std::to_string(i));
      out.push_back(v);
      p = end;
    }
    while (*p == ' ') ++p;
    if (*p != '\0') fail("trailing data after " + std::to_string(n) + " values");
    return out;
  }

  template <class T>
  T read(std::istringstream& ss, const char* what) {
    T v{};
    if (!(ss >> v)) fail(std::string("malformed ") + what);
    return v;
  }

 private:
  std::istream& is_;
  std::string source_;
  int line_ = 0;
};

void read_moments(Parser& p, const std::string& group, Optimizer& opt) {
  auto ss = p.header("optimizer");
  if (p.read<std::string>(ss, "optimizer group") != group) p.fail("expected optimizer group " + group);
  opt.step_counter() = p.read<std::uint64_t>(ss, "optimizer step");
  const auto n = p.read<std::size_t>(ss, "moment count");
  for (std::size_t i = 0; i < n; ++i) {
    auto ms = p.header("moment");
    const auto name = p.read<std::string>(ms, "moment name");
    const auto len = p.read<std::size_t>(ms, "moment length");
    opt.first_moments()[name] = p.values(len);
    opt.second_moments()[name] = p.values(len);
  }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelState& state, const RunConfig& config) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp);
    if (!os) throw IoError("cannot write checkpoint " + path.string());
    auto& st = const_cast<ModelState&>(state);

    os << kCheckpointMagic << " v" << kCheckpointVersion << '\n';
    const KeyValues kv = config.to_key_values();
    os << "config " << kv.entries().size() << '\n';
    kv.write(os);

    const auto& toks = state.model.vocab.tokens();
    os << "vocab " << toks.size() << '\n';
    for (const auto& t : toks) os << t << '\n';

    const ParamRefs ps = st.model.all_params();
    os << "params " << ps.size() << '\n';
    for (const Parameter* p : ps) {
      os << "param " << p->name << ' ' << p->shape.size();
      for (std::size_t s : p->shape) os << ' ' << s;
      os << '\n';
      write_values(os, p->value);
    }

    os << "pool " << state.pool.size() << ' ' << state.pool.latent_dim() << ' ' << state.pool.seed << '\n';
    for (std::size_t i = 0; i < state.pool.ages.size(); ++i) os << (i ? " " : "") << state.pool.ages[i];
    os << '\n';
    write_values(os, state.pool.states.flat());

    write_moments(os, "prior", state.opt_prior);
    write_moments(os, "psi", state.opt_psi);
    write_moments(os, "sup", state.opt_sup);

    os << "rng " << state.rng.serialize() << '\n';
    os << "step " << state.step << '\n';
    os << "cursor unlabeled " << state.unlabeled_cursor.epoch << ' ' << state.unlabeled_cursor.position << '\n';
    os << "cursor labeled " << state.labeled_cursor.epoch << ' ' << state.labeled_cursor.position << '\n';
    os << "end\n";
    if (!os) throw IoError("failed writing checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

void save_checkpoint(const std::filesystem::path& path, const ModelState& state, const TrainConfig& cfg,
                     const ConfigExtras& extra) {
  RunConfig rc;
  rc.model = state.model.config;
  rc.train = cfg;
  rc.mode = cfg.lambda > 0.0 ? TrainMode::IbEbm : TrainMode::Svebm;
  if (!extra.empty()) {
    KeyValues kv = rc.to_key_values();
    for (const auto& [k, v] : extra) kv.set(k, v);
    rc = RunConfig::from_key_values(kv);
  }
  save_checkpoint(path, state, rc);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read checkpoint " + path.string());
  Parser p(is, path.string());

  {
    auto ss = p.header(kCheckpointMagic);
    const auto version = p.read<std::string>(ss, "version tag");
    if (version != "v" + std::to_string(kCheckpointVersion)) p.fail("unsupported checkpoint version " + version);
  }

  Checkpoint ck;
  {
    auto ss = p.header("config");
    const auto n = p.read<std::size_t>(ss, "config size");
    std::stringstream block;
    for (std::size_t i = 0; i < n; ++i) block << p.line() << '\n';
    ck.config = RunConfig::from_key_values(parse_key_values(block, path.string() + " [config]"));
  }

  ModelState& st = ck.state;
  st.model = Model(ck.config.model);
  {
    auto ss = p.header("vocab");
    const auto n = p.read<std::size_t>(ss, "vocabulary size");
    std::vector<std::string> toks;
    for (std::size_t i = 0; i < n; ++i) toks.push_back(p.line());
    st.model.vocab = Vocabulary::from_tokens(toks);
  }
  {
    const ParamRefs ps = st.model.all_params();
    std::map<std::string, Parameter*> by_name;
    for (Parameter* q : ps) by_name[q->name] = q;
    auto ss = p.header("params");
    const auto n = p.read<std::size_t>(ss, "parameter count");
    if (n != ps.size())
      p.fail("checkpoint holds " + std::to_string(n) + " arrays, model expects " + std::to_string(ps.size()));
    for (std::size_t i = 0; i < n; ++i) {
      auto hs = p.header("param");
      const auto name = p.read<std::string>(hs, "parameter name");
      const auto it = by_name.find(name);
      if (it == by_name.end()) p.fail("unknown parameter '" + name + "'");
      const auto ndim = p.read<std::size_t>(hs, "rank");
      std::vector<std::size_t> shape(ndim);
      for (auto& s : shape) s = p.read<std::size_t>(hs, "dimension");
      if (shape != it->second->shape) p.fail("shape mismatch for '" + name + "'");
      it->second->value = p.values(it->second->size());
      by_name.erase(it);
    }
  }
  {
    auto ss = p.header("pool");
    const auto L = p.read<std::size_t>(ss, "chain count");
    const auto d = p.read<std::size_t>(ss, "chain dimension");
    st.pool.seed = p.read<std::uint64_t>(ss, "pool seed");
    std::istringstream ages(p.line());
    st.pool.ages.resize(L);
    for (auto& a : st.pool.ages)
      if (!(ages >> a)) p.fail("malformed chain ages");
    st.pool.states = Matrix(L, d, p.values(L * d));
  }
  const TrainConfig& tc = ck.config.train;
  st.opt_prior = Optimizer(tc.optimizer_config(tc.lr_prior));
  st.opt_psi = Optimizer(tc.optimizer_config(tc.lr_psi));
  st.opt_sup = Optimizer(tc.optimizer_config(tc.lr_sup));
  read_moments(p, "prior", st.opt_prior);
  read_moments(p, "psi", st.opt_psi);
  read_moments(p, "sup", st.opt_sup);
  {
    const std::string l = p.line();
    if (l.rfind("rng ", 0) != 0) p.fail("expected rng state");
    st.rng = Rng::deserialize(l.substr(4));
  }
  {
    auto ss = p.header("step");
    st.step = p.read<std::uint64_t>(ss, "step");
  }
  for (DataCursor* c : {&st.unlabeled_cursor, &st.labeled_cursor}) {
    auto ss = p.header("cursor");
    p.read<std::string>(ss, "cursor name");
    c->epoch = p.read<std::uint64_t>(ss, "epoch");
    c->position = p.read<std::size_t>(ss, "position");
  }
  p.header("end");
  return ck;
}

std::string checkpoint_id(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read checkpoint " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016zx", std::hash<std::string>{}(ss.str()));
  return buf;
}

}  // namespace svebm
