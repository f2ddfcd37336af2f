#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "cavrec/experiment.hpp"

namespace cavrec {

using Json = nlohmann::json;

namespace {

bool is_synthetic(const std::string& name) { return name.rfind("synth-", 0) == 0 || name == "critique-synth"; }

template <typename T>
void read(const Json& j, const char* key, T& field) {
  if (j.contains(key)) field = j.at(key).get<T>();
}

std::vector<Trainer> trainers_from(const Json& j) {
  std::vector<Trainer> out;
  for (const auto& t : j) out.push_back(trainer_from_string(t.get<std::string>()));
  return out;
}

Json trainers_to(const std::vector<Trainer>& ts) {
  Json out = Json::array();
  for (auto t : ts) out.push_back(to_string(t));
  return out;
}

const char* subjectivity_name(synth::Subjectivity s) {
  switch (s) {
    case synth::Subjectivity::None: return "none";
    case synth::Subjectivity::Degree: return "degree";
    case synth::Subjectivity::Sense: return "sense";
  }
  return "none";
}

void read_optim(const Json& j, OptimConfig& o) {
  read(j, "learning_rate", o.learning_rate);
  read(j, "beta1", o.beta1);
  read(j, "beta2", o.beta2);
  read(j, "max_iters", o.max_iters);
  read(j, "grad_tol", o.grad_tol);
}

Json optim_json(const OptimConfig& o) {
  return {{"learning_rate", o.learning_rate}, {"beta1", o.beta1}, {"beta2", o.beta2},
          {"max_iters", o.max_iters}, {"grad_tol", o.grad_tol}};
}

}  // namespace

void ExperimentConfig::validate() const {
  const auto& names = experiment_names();
  if (std::find(names.begin(), names.end(), name) == names.end()) {
    throw ConfigError("unknown experiment '" + name + "'");
  }
  if (scale != "desk" && scale != "paper") throw ConfigError("scale must be desk or paper");
  if (is_synthetic(name)) synth.validate();
  if (!(train_fraction > 0 && train_fraction < 1)) throw ConfigError("train_fraction must lie in (0,1)");
  if (cav.neg_ratio_logistic < 1 || cav.neg_ratio_ranking < 1) throw ConfigError("neg ratios must be >= 1");
  if (cav.representation != "linear" && cav.representation != "two-tower") {
    throw ConfigError("representation must be linear or two-tower");
  }
  if (senses.s_max < 1) throw ConfigError("s_max must be >= 1");
  if (critique.slate_size < 1 || critique.steps < 0 || critique.users < 1) {
    throw ConfigError("bad critique settings");
  }
  if (critique.alpha_grid.empty()) throw ConfigError("alpha_grid must not be empty");
  if (folds < 2) throw ConfigError("folds must be >= 2");
}

ExperimentConfig default_config(const std::string& name, const std::string& scale) {
  const auto& names = experiment_names();
  if (std::find(names.begin(), names.end(), name) == names.end()) {
    throw ConfigError("unknown experiment '" + name + "'");
  }
  if (scale != "desk" && scale != "paper") throw ConfigError("scale must be desk or paper");
  ExperimentConfig c;
  c.name = name;
  c.scale = scale;
  const bool paper = scale == "paper";
  auto& s = c.synth;
  if (paper) {
    s.num_users = 25000;
    s.num_items = 10000;
    s.latent_dims = 20;
    s.soft_dims = 5;
    c.wals.dim = 25;
    c.wals.iterations = 100;
  } else {
    s.num_users = 2000;
    s.num_items = 1000;
    s.latent_dims = 11;
    s.soft_dims = 5;
    c.wals.dim = 16;
    c.wals.iterations = 30;
  }
  c.wals.kappa = 1.0;
  c.pitf.learning_rate = 0.0002;
  c.pitf.reg = 0.00005;
  c.pitf.dim = c.wals.dim;

  if (name == "synth-objective") {
    s.irrelevant_tags = 1;
  } else if (name == "synth-degree") {
    s.subjectivity = synth::Subjectivity::Degree;
  } else if (name == "synth-sense") {
    s.subjectivity = synth::Subjectivity::Sense;
    s.tag_groups = {{2, 3, 4}};
    c.senses.enabled = true;
    c.cav.trainers = {Trainer::Logistic, Trainer::RankNet};
    c.run_pitf = false;
  } else if (name == "critique-synth") {
    c.run_pitf = false;
  } else {
    // MovieLens-backed experiments.
    c.wals.dim = name.rfind("rater-eval", 0) == 0 ? 128 : 50;
    c.wals.kappa = 250.0;
    c.wals.iterations = paper ? 100 : 30;
    c.pitf.learning_rate = 0.001;
    c.pitf.reg = 0.01;
    c.pitf.dim = c.wals.dim;
    c.data.ratings = "data/ml-20m/ratings.csv";
    c.data.tags = "data/ml-20m/tags.csv";
    c.data.movies = "data/ml-20m/movies.csv";
    c.data.soft_attributes = "data/soft-attributes/soft-attributes.csv";
    if (name == "movielens-artificial" || name.rfind("rater-eval", 0) == 0) {
      c.senses.enabled = true;
      c.cav.trainers = {Trainer::RankNet};
      c.run_pitf = false;
    }
    if (name.rfind("rater-eval", 0) == 0 || name == "critique-movielens") c.run_pitf = false;
  }
  c.senses.em.trainer = Trainer::RankNet;
  return c;
}

ExperimentConfig config_from_json(const Json& j) {
  const std::string name = j.value("experiment", std::string("synth-objective"));
  const std::string scale = j.value("scale", std::string("desk"));
  ExperimentConfig c = default_config(name, scale);
  read(j, "seed", c.seed);
  read(j, "train_fraction", c.train_fraction);
  read(j, "folds", c.folds);
  read(j, "run_pitf", c.run_pitf);
  read(j, "tags", c.tags);
  if (j.contains("synth")) {
    const auto& sj = j.at("synth");
    auto& s = c.synth;
    read(sj, "num_users", s.num_users);
    read(sj, "num_items", s.num_items);
    read(sj, "latent_dims", s.latent_dims);
    read(sj, "soft_dims", s.soft_dims);
    read(sj, "num_components", s.num_components);
    read(sj, "sigma", s.sigma);
    read(sj, "zipf_a", s.zipf_a);
    read(sj, "max_ratings_per_user", s.max_ratings_per_user);
    read(sj, "softmax_temp", s.softmax_temp);
    read(sj, "no_tag_weight", s.no_tag_weight);
    read(sj, "tag_prob_min", s.tag_prob_min);
    read(sj, "tag_prob_max", s.tag_prob_max);
    read(sj, "tag_threshold", s.tag_threshold);
    read(sj, "tag_noise_std", s.tag_noise_std);
    read(sj, "rating_noise_std", s.rating_noise_std);
    read(sj, "peak_floor", s.peak_floor);
    read(sj, "threshold_ranges", s.threshold_ranges);
    read(sj, "tag_groups", s.tag_groups);
    read(sj, "irrelevant_tags", s.irrelevant_tags);
    read(sj, "irrelevant_tag_rate", s.irrelevant_tag_rate);
    if (sj.contains("utility")) {
      auto u = sj.at("utility").get<std::string>();
      if (u == "linear") s.utility = synth::UtilityKind::Linear;
      else if (u == "single-peaked") s.utility = synth::UtilityKind::SinglePeaked;
      else throw ConfigError("unknown utility kind '" + u + "'");
    }
    if (sj.contains("subjectivity")) {
      auto v = sj.at("subjectivity").get<std::string>();
      if (v == "none") s.subjectivity = synth::Subjectivity::None;
      else if (v == "degree") s.subjectivity = synth::Subjectivity::Degree;
      else if (v == "sense") s.subjectivity = synth::Subjectivity::Sense;
      else throw ConfigError("unknown subjectivity '" + v + "'");
    }
  }
  if (j.contains("wals")) {
    const auto& w = j.at("wals");
    read(w, "dim", c.wals.dim);
    read(w, "kappa", c.wals.kappa);
    read(w, "iterations", c.wals.iterations);
    read(w, "confidence_beta", c.wals.confidence_beta);
    read(w, "validation_fraction", c.wals.validation_fraction);
    read(w, "patience", c.wals.patience);
  }
  if (j.contains("two_tower")) {
    const auto& t = j.at("two_tower");
    read(t, "dim", c.tower.dim);
    read(t, "kappa", c.tower.kappa);
    read(t, "rho", c.tower.rho);
    read(t, "learning_rate", c.tower.learning_rate);
    read(t, "batch_size", c.tower.batch_size);
    read(t, "epochs", c.tower.epochs);
  }
  if (j.contains("cav")) {
    const auto& cj = j.at("cav");
    read(cj, "lambda", c.cav.lambda);
    read(cj, "neg_ratio_logistic", c.cav.neg_ratio_logistic);
    read(cj, "neg_ratio_ranking", c.cav.neg_ratio_ranking);
    read(cj, "representation", c.cav.representation);
    if (cj.contains("trainers")) c.cav.trainers = trainers_from(cj.at("trainers"));
    if (cj.contains("optimizer")) read_optim(cj.at("optimizer"), c.cav.opt);
  }
  if (j.contains("senses")) {
    const auto& sj = j.at("senses");
    read(sj, "enabled", c.senses.enabled);
    read(sj, "s_max", c.senses.s_max);
    read(sj, "eps", c.senses.eps);
    read(sj, "em_eps", c.senses.em.eps);
    read(sj, "max_em_iters", c.senses.em.max_iters);
    read(sj, "restarts", c.senses.em.restarts);
  }
  if (j.contains("pitf")) {
    const auto& p = j.at("pitf");
    read(p, "dim", c.pitf.dim);
    read(p, "learning_rate", c.pitf.learning_rate);
    read(p, "reg", c.pitf.reg);
    read(p, "epochs", c.pitf.epochs);
    read(p, "neg_ratio", c.pitf.neg_ratio);
  }
  if (j.contains("critique")) {
    const auto& cr = j.at("critique");
    read(cr, "users", c.critique.users);
    read(cr, "validation_users", c.critique.validation_users);
    read(cr, "slate_size", c.critique.slate_size);
    read(cr, "steps", c.critique.steps);
    read(cr, "alpha_grid", c.critique.alpha_grid);
    read(cr, "accept_quantile", c.critique.accept_quantile);
    read(cr, "bounds_sample", c.critique.bounds_sample);
    read(cr, "min_user_ratings", c.critique.min_user_ratings);
    if (cr.contains("trainers")) c.critique.trainers = trainers_from(cr.at("trainers"));
  }
  if (j.contains("data")) {
    const auto& d = j.at("data");
    read(d, "ratings", c.data.ratings);
    read(d, "tags", c.data.tags);
    read(d, "movies", c.data.movies);
    read(d, "soft_attributes", c.data.soft_attributes);
  }
  c.validate();
  return c;
}

Json to_json(const ExperimentConfig& c) {
  const auto& s = c.synth;
  return {
      {"experiment", c.name},
      {"scale", c.scale},
      {"seed", c.seed},
      {"train_fraction", c.train_fraction},
      {"folds", c.folds},
      {"run_pitf", c.run_pitf},
      {"tags", c.tags},
      {"synth",
       {{"num_users", s.num_users}, {"num_items", s.num_items}, {"latent_dims", s.latent_dims},
        {"soft_dims", s.soft_dims}, {"num_components", s.num_components}, {"sigma", s.sigma},
        {"zipf_a", s.zipf_a}, {"max_ratings_per_user", s.max_ratings_per_user},
        {"softmax_temp", s.softmax_temp}, {"no_tag_weight", s.no_tag_weight},
        {"tag_prob_min", s.tag_prob_min}, {"tag_prob_max", s.tag_prob_max},
        {"tag_threshold", s.tag_threshold}, {"tag_noise_std", s.tag_noise_std},
        {"rating_noise_std", s.rating_noise_std},
        {"utility", s.utility == synth::UtilityKind::Linear ? "linear" : "single-peaked"},
        {"peak_floor", s.peak_floor}, {"subjectivity", subjectivity_name(s.subjectivity)},
        {"threshold_ranges", s.threshold_ranges}, {"tag_groups", s.tag_groups},
        {"irrelevant_tags", s.irrelevant_tags}, {"irrelevant_tag_rate", s.irrelevant_tag_rate}}},
      {"wals",
       {{"dim", c.wals.dim}, {"kappa", c.wals.kappa}, {"iterations", c.wals.iterations},
        {"confidence_beta", c.wals.confidence_beta},
        {"validation_fraction", c.wals.validation_fraction}, {"patience", c.wals.patience}}},
      {"two_tower",
       {{"dim", c.tower.dim}, {"kappa", c.tower.kappa}, {"rho", c.tower.rho},
        {"learning_rate", c.tower.learning_rate}, {"batch_size", c.tower.batch_size},
        {"epochs", c.tower.epochs}}},
      {"cav",
       {{"lambda", c.cav.lambda}, {"neg_ratio_logistic", c.cav.neg_ratio_logistic},
        {"neg_ratio_ranking", c.cav.neg_ratio_ranking}, {"representation", c.cav.representation},
        {"trainers", trainers_to(c.cav.trainers)}, {"optimizer", optim_json(c.cav.opt)}}},
      {"senses",
       {{"enabled", c.senses.enabled}, {"s_max", c.senses.s_max}, {"eps", c.senses.eps},
        {"em_eps", c.senses.em.eps}, {"max_em_iters", c.senses.em.max_iters},
        {"restarts", c.senses.em.restarts}}},
      {"pitf",
       {{"dim", c.pitf.dim}, {"learning_rate", c.pitf.learning_rate}, {"reg", c.pitf.reg},
        {"epochs", c.pitf.epochs}, {"neg_ratio", c.pitf.neg_ratio}}},
      {"critique",
       {{"users", c.critique.users}, {"validation_users", c.critique.validation_users},
        {"slate_size", c.critique.slate_size}, {"steps", c.critique.steps},
        {"alpha_grid", c.critique.alpha_grid}, {"accept_quantile", c.critique.accept_quantile},
        {"bounds_sample", c.critique.bounds_sample},
        {"min_user_ratings", c.critique.min_user_ratings},
        {"trainers", trainers_to(c.critique.trainers)}}},
      {"data",
       {{"ratings", c.data.ratings}, {"tags", c.data.tags}, {"movies", c.data.movies},
        {"soft_attributes", c.data.soft_attributes}}},
  };
}

std::string config_hash(const ExperimentConfig& config) {
  // FNV-1a over the canonical JSON dump.
  const std::string text = to_json(config).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

std::string describe(const ExperimentConfig& c) {
  c.validate();
  std::ostringstream os;
  const bool paper = c.scale == "paper";
  os << "experiment: " << c.name << " (scale " << c.scale << ", seed " << c.seed << ")\n";
  auto synth_line = [&] {
    os << "  synthgen   n=" << c.synth.num_users << " m=" << c.synth.num_items
       << " D=" << c.synth.dims() << " (latent " << c.synth.latent_dims << ", soft "
       << c.synth.soft_dims << "), subjectivity " << subjectivity_name(c.synth.subjectivity) << "\n";
  };
  auto cf_line = [&] {
    os << "  cftrain    WALS d=" << c.wals.dim << " kappa=" << c.wals.kappa << " iterations="
       << c.wals.iterations;
    if (c.cav.representation == "two-tower") os << "; two-tower 3x" << c.tower.dim << ", " << c.tower.epochs << " epochs";
    os << "\n";
  };
  auto cav_line = [&] {
    os << "  cavlearn   trainers";
    const bool critique = c.name.rfind("critique", 0) == 0;
    for (auto t : critique ? c.critique.trainers : c.cav.trainers) os << ' ' << to_string(t);
    if (c.senses.enabled) os << "; EM senses (s_max " << c.senses.s_max << ")";
    os << "\n";
  };
  os << "stages:\n";
  if (c.name == "synth-objective" || c.name == "synth-degree" || c.name == "synth-sense") {
    synth_line();
    os << "  split      by (user,item) pair, train fraction " << c.train_fraction << "\n";
    cf_line();
    cav_line();
    if (c.run_pitf) os << "  baselines  PITF d=" << c.pitf.dim << ", " << c.pitf.epochs << " epochs\n";
    os << "  evalmetrics Accur, Sprmn per tag\n";
    const char* table = c.name == "synth-objective" ? "Table 2" : c.name == "synth-degree" ? "Table 3 (degree)" : "Table 4";
    os << "mirrors: " << table << " (synthetic tags)\n";
  } else if (c.name == "critique-synth") {
    synth_line();
    cf_line();
    cav_line();
    os << "  critique   " << c.critique.users << " users (+" << c.critique.validation_users
       << " validation), k=" << c.critique.slate_size << ", T=" << c.critique.steps << "\n";
    os << "mirrors: Figure 4 (synthetic critiquing curves)\n";
  } else {
    os << "  ingest     " << c.data.ratings << ", " << c.data.tags << ", " << c.data.movies;
    if (c.name.rfind("rater-eval", 0) == 0) os << ", " << c.data.soft_attributes;
    os << "\n";
    if (c.name == "movielens-artificial") os << "  ingest     artificial genre / odd-year / meta-tags\n";
    cf_line();
    cav_line();
    if (c.name.rfind("rater-eval", 0) == 0) {
      os << "  evalmetrics extended gamma G' (" << c.folds << "-fold raters for softattr)\n";
      os << "mirrors: " << (c.name == "rater-eval-movielens" ? "Table 7" : "Table 9") << "\n";
    } else if (c.name == "critique-movielens") {
      os << "  critique   test users with >= " << c.critique.min_user_ratings << " ratings\n";
      os << "mirrors: Figure 5 (MovieLens critiquing curves)\n";
    } else {
      os << "  evalmetrics Accur per tag\n";
      os << "mirrors: " << (c.name == "movielens-tags" ? "Table 3 (MovieLens)" : "Table 6") << "\n";
    }
  }
  bool long_run = paper || !is_synthetic(c.name);
  if (long_run) os << "warning: long runtime expected (hours for full MovieLens-20M or paper scale)\n";
  return os.str();
}

double mean_metric(const std::vector<MetricRow>& rows, const std::string& method,
                   const std::string& metric, const std::vector<std::string>& attributes) {
  double sum = 0.0;
  int n = 0;
  for (const auto& r : rows) {
    if (r.method != method || r.metric != metric) continue;
    if (!attributes.empty() &&
        std::find(attributes.begin(), attributes.end(), r.attribute) == attributes.end()) {
      continue;
    }
    sum += r.value;
    ++n;
  }
  if (n == 0) throw DataError("no rows for " + method + "/" + metric);
  return sum / n;
}

void write_metrics_csv(const std::string& path, const std::vector<MetricRow>& rows) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "experiment,attribute,method,fold,metric,value\n";
  auto field = [](const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
    return q + "\"";
  };
  for (const auto& r : rows) {
    std::ostringstream v;
    v << std::setprecision(10) << r.value;
    out << field(r.experiment) << ',' << field(r.attribute) << ',' << field(r.method) << ','
        << field(r.fold) << ',' << field(r.metric) << ',' << v.str() << '\n';
  }
}

void write_traces_jsonl(const std::string& path, const std::vector<TraceRecord>& traces) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  for (const auto& rec : traces) {
    for (const auto& s : rec.trace.steps) {
      Json response;
      if (s.response.accept) {
        response = {{"type", "accept"}, {"item", s.response.item}};
      } else {
        response = {{"type", "critique"}, {"tag", s.response.tag},
                    {"direction", s.response.sign > 0 ? "more" : s.response.sign < 0 ? "less" : "none"}};
      }
      Json line = {{"method", rec.method}, {"user", rec.user},    {"step", s.step},
                   {"slate", s.slate},     {"response", response}, {"umu", s.umu},
                   {"uau", s.uau},
                   {"user_embedding", std::vector<double>(s.user_embedding.data(),
                                                          s.user_embedding.data() + s.user_embedding.size())}};
      if (s.has_metrics) {
        line["ndcg"] = s.metrics.ndcg;
        line["mrr"] = s.metrics.mrr;
        line["binarized_rating"] = s.metrics.binarized;
      }
      out << line.dump() << '\n';
    }
  }
}

}  // namespace cavrec
