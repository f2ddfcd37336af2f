#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <set>

#include "cavrec/evalmetrics.hpp"
#include "cavrec/experiment.hpp"
#include "cavrec/ingest.hpp"

namespace cavrec {

using Json = nlohmann::json;

namespace {

enum Stream : std::uint64_t {
  kSplit = 11,
  kTrainExamples = 12,
  kTestExamples = 13,
  kPitf = 14,
  kSenses = 15,
  kUsers = 16,
  kBounds = 17,
  kArtificial = 18,
  kLayerSplit = 19,
};

std::string method_name(Trainer t) {
  switch (t) {
    case Trainer::Logistic: return "LogRegr";
    case Trainer::RankNet: return "RankNet";
    case Trainer::LambdaRank: return "LambdaRank";
  }
  return "?";
}

template <typename F>
auto stage(const std::string& name, F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

int neg_ratio(const CavParams& p, Trainer t) {
  return t == Trainer::Logistic ? p.neg_ratio_logistic : p.neg_ratio_ranking;
}

struct Representations {
  Mat items;                   // linear embedding or selected-layer default
  std::vector<Mat> layers;     // two-tower activations per layer (empty for linear)
  Mat users;
};

Representations train_representations(const ExperimentConfig& c, const Dataset& train) {
  Representations r;
  WalsConfig wc = c.wals;
  wc.seed = c.seed;
  auto wals = train_wals(train.ratings(), train.num_users(), train.num_items(), wc);
  r.items = wals.model.item_vecs;
  r.users = wals.model.user_vecs;
  if (c.cav.representation == "two-tower") {
    TwoTowerConfig tc = c.tower;
    tc.seed = c.seed;
    if (tc.dim != wals.model.dim()) tc.dim = wals.model.dim();
    auto deep = train_two_tower(train.ratings(), train.num_users(), train.num_items(), tc, &wals.model);
    for (int l = 1; l <= DeepEmbeddingModel::kLayers; ++l) r.layers.push_back(item_representations(deep.model, l));
    r.items = r.layers.back();
    r.users = user_representations(deep.model);
  }
  return r;
}

// Trains a CAV, choosing the two-tower layer by Q on held-out users when layers exist.
CAV fit_cav(const ExperimentConfig& c, Trainer t, const TagExamples& ex, const Representations& reps,
            std::uint64_t job, const Mat** chosen) {
  if (reps.layers.empty()) {
    *chosen = &reps.items;
    return train_cav(t, ex, reps.items, c.cav.lambda, c.cav.opt);
  }
  Rng rng = derive_rng(c.seed, {kLayerSplit, job});
  TagExamples fit, valid;
  for (const auto& u : ex) (std::bernoulli_distribution(0.8)(rng) ? fit : valid).push_back(u);
  if (fit.empty() || count_pairs(valid) == 0) fit = ex, valid = ex;
  int best = 0;
  double best_q = -1.0;
  for (std::size_t l = 0; l < reps.layers.size(); ++l) {
    double q;
    try {
      CAV cav = train_cav(t, fit, reps.layers[l], c.cav.lambda, c.cav.opt);
      q = cav_quality(cav.direction, reps.layers[l], valid);
    } catch (const DataError&) {
      continue;
    }
    if (q > best_q) {
      best_q = q;
      best = static_cast<int>(l);
    }
  }
  *chosen = &reps.layers[best];
  CAV cav = train_cav(t, ex, reps.layers[best], c.cav.lambda, c.cav.opt);
  cav.layer = best + 1;
  return cav;
}

// Accuracy of a sense model on test pairs; each test user uses their training
// assignment, or is mapped on their training pairs when unseen.
double sense_accuracy(const SenseModel& model, const Mat& reprs, const TagExamples& train_all,
                      const TagExamples& test_all, std::size_t* flagged) {
  std::vector<Vec> scores;
  for (const auto& s : model.senses) scores.push_back(cav_scores(s.direction, reprs));
  std::map<UserId, const UserExamples*> train_of;
  for (const auto& u : train_all) train_of[u.user] = &u;
  std::size_t ok = 0, total = 0;
  for (const auto& u : test_all) {
    if (u.pairs.empty()) continue;
    int sense = 0;
    auto it = model.user_assignment.find(u.user);
    if (it != model.user_assignment.end()) {
      sense = it->second;
    } else {
      auto tr = train_of.find(u.user);
      SenseAssignment a = tr == train_of.end() ? SenseAssignment{0, true}
                                               : assign_user_sense(scores, tr->second->pairs);
      sense = a.sense;
      if (a.flagged && flagged) ++*flagged;
    }
    for (const auto& p : u.pairs) ok += scores[sense][p.pos] >= scores[sense][p.neg] ? 1 : 0;
    total += u.pairs.size();
  }
  if (total == 0) throw DataError("no test pairs");
  return static_cast<double>(ok) / static_cast<double>(total);
}

// Best one-to-one relabeling agreement between clusters and ground-truth labels.
double partition_agreement(const std::map<UserId, int>& clusters, const std::map<UserId, int>& truth) {
  std::set<int> cl, tr;
  std::map<std::pair<int, int>, int> joint;
  int n = 0;
  for (const auto& [u, k] : clusters) {
    auto t = truth.find(u);
    if (t == truth.end()) continue;
    cl.insert(k);
    tr.insert(t->second);
    ++joint[{k, t->second}];
    ++n;
  }
  if (n == 0) return 0.0;
  std::vector<int> ks(cl.begin(), cl.end()), ts(tr.begin(), tr.end());
  int best = 0;
  std::vector<char> used(ts.size(), 0);
  std::function<void(std::size_t, int)> search = [&](std::size_t i, int acc) {
    if (i == ks.size()) {
      best = std::max(best, acc);
      return;
    }
    search(i + 1, acc);  // cluster left unmatched
    for (std::size_t j = 0; j < ts.size(); ++j) {
      if (used[j]) continue;
      used[j] = 1;
      auto it = joint.find({ks[i], ts[j]});
      search(i + 1, acc + (it == joint.end() ? 0 : it->second));
      used[j] = 0;
    }
  };
  if (ks.size() <= 8 && ts.size() <= 8) {
    search(0, 0);
  } else {
    for (int k : ks) {
      int m = 0;
      for (int t : ts) {
        auto it = joint.find({k, t});
        if (it != joint.end()) m = std::max(m, it->second);
      }
      best += m;
    }
  }
  return static_cast<double>(best) / n;
}

struct TagEvalContext {
  const ExperimentConfig& config;
  const SplitDataset& split;
  const Representations& reps;
  const synth::GroundTruth* truth;  // null for real data
  ExperimentResult& result;
};

// Spearman of each direction against the ground-truth attribute of the users
// it serves, weighted by the number of such users.
double weighted_spearman(const std::vector<Vec>& scores, const std::vector<std::map<int, int>>& users_by_attr,
                         const synth::GroundTruth& gt) {
  double sum = 0.0, weight = 0.0;
  for (std::size_t k = 0; k < scores.size(); ++k) {
    for (const auto& [attr, count] : users_by_attr[k]) {
      sum += count * spearman(scores[k], gt.item_attrs.col(attr));
      weight += count;
    }
  }
  if (weight == 0) throw DataError("no users to weight Spearman");
  return sum / weight;
}

void evaluate_tag(TagEvalContext& ctx, TagId g, const PitfModel* pitf) {
  const auto& c = ctx.config;
  const auto& train = ctx.split.train;
  const auto& test = ctx.split.test;
  const std::string tag = train.tag_vocab()[g];
  auto add = [&](const std::string& method, const std::string& metric, double v) {
    ctx.result.rows.push_back({c.name, tag, method, "all", metric, v});
  };

  Rng test_rng = derive_rng(c.seed, {kTestExamples, static_cast<std::uint64_t>(g)});
  TagExamples test_bal, test_all = all_examples(test, g), train_all = all_examples(train, g);
  try {
    test_bal = build_examples(test, g, 1, test_rng);
  } catch (const DataError&) {
    ctx.result.log.push_back("tag " + tag + ": no test positives, skipped");
    return;
  }
  const bool has_test_pairs = count_pairs(test_all) > 0;

  // Users that tag g, grouped by the attribute each one consults.
  bool has_truth = false;
  std::map<int, int> attr_users;
  std::map<UserId, int> user_attr;
  if (ctx.truth && ctx.truth->tags[g].kind != synth::TagKind::Irrelevant) {
    has_truth = true;
    for (const auto& u : train_all) {
      int a = ctx.truth->user_tag_attribute(u.user, g);
      ++attr_users[a];
      user_attr[u.user] = a;
    }
  }

  for (Trainer t : c.cav.trainers) {
    Rng rng = derive_rng(c.seed, {kTrainExamples, static_cast<std::uint64_t>(g), static_cast<std::uint64_t>(t)});
    TagExamples ex;
    try {
      ex = build_examples(train, g, neg_ratio(c.cav, t), rng);
    } catch (const DataError&) {
      ctx.result.log.push_back("tag " + tag + ": no training positives, skipped");
      return;
    }
    const Mat* reprs = nullptr;
    CAV cav;
    try {
      cav = fit_cav(c, t, ex, ctx.reps, (static_cast<std::uint64_t>(g) << 8) | static_cast<std::uint64_t>(t), &reprs);
    } catch (const DataError& e) {
      ctx.result.log.push_back("tag " + tag + " " + method_name(t) + ": " + e.what());
      continue;
    }
    cav.tag = g;
    Vec scores = cav_scores(cav.direction, *reprs);
    if (t == Trainer::Logistic) {
      add(method_name(t), "Accur", classification_accuracy(scores, flatten_labeled(test_bal)));
    } else if (has_test_pairs) {
      add(method_name(t), "Accur", pair_quality(scores, flatten_pairs(test_all)));
    }
    if (has_truth) add(method_name(t), "Sprmn", weighted_spearman({scores}, {attr_users}, *ctx.truth));
    if (cav.layer > 0) add(method_name(t), "layer", cav.layer);

    if (t == Trainer::Logistic && c.synth.subjectivity == synth::Subjectivity::Degree && ctx.truth) {
      // Personal thresholds fitted on each user's training tags.
      std::map<UserId, double> tau;
      for (const auto& u : train_all) {
        std::vector<double> pos, neg;
        for (const auto& li : u.labeled) (li.label > 0 ? pos : neg).push_back(scores[li.item]);
        tau[u.user] = fit_threshold(pos, neg);
      }
      std::size_t ok = 0, total = 0;
      for (const auto& u : test_bal) {
        auto it = tau.find(u.user);
        const double th = it == tau.end() ? 0.0 : it->second;
        for (const auto& li : u.labeled) {
          ok += ((scores[li.item] >= th) == (li.label > 0)) ? 1 : 0;
          ++total;
        }
      }
      if (total) add("LogRegr-PT", "Accur", static_cast<double>(ok) / total);
    }
  }

  if (pitf) {
    std::vector<LabeledTriple> triples;
    for (const auto& u : test_bal)
      for (const auto& li : u.labeled) triples.push_back({u.user, li.item, g, li.label});
    add("PITF", "Accur", pitf_predict_accuracy(*pitf, triples));
    if (has_truth) add("PITF", "Sprmn", weighted_spearman({pitf->item_scores(g)}, {attr_users}, *ctx.truth));
  }

  if (c.senses.enabled && has_test_pairs) {
    EmConfig em = c.senses.em;
    em.lambda = c.cav.lambda;
    em.opt = c.cav.opt;
    const Trainer t = em.trainer;
    Rng rng = derive_rng(c.seed, {kTrainExamples, static_cast<std::uint64_t>(g), static_cast<std::uint64_t>(t)});
    TagExamples ex = build_examples(train, g, neg_ratio(c.cav, t), rng);
    SenseSelection sel = select_sense_count(ex, train_all, ctx.reps.items, g, c.senses.s_max,
                                            c.senses.eps, em,
                                            splitmix64(c.seed ^ (kSenses << 32)));
    const std::string method = "EM-" + method_name(t);
    std::size_t flagged = 0;
    add(method, "Accur", sense_accuracy(sel.model, ctx.reps.items, train_all, test_all, &flagged));
    add(method, "senses", static_cast<double>(sel.model.senses.size()));
    add(method, "avg_quality", sel.model.avg_quality);
    if (flagged) add(method, "unassigned_test_users", static_cast<double>(flagged));
    Json qs = sel.quality_by_s;
    ctx.result.details["sense_quality"][tag] = qs;
    if (has_truth) {
      std::vector<Vec> scores;
      std::vector<std::map<int, int>> by_attr(sel.model.senses.size());
      for (const auto& s : sel.model.senses) scores.push_back(cav_scores(s.direction, ctx.reps.items));
      for (const auto& [u, k] : sel.model.user_assignment) {
        auto it = user_attr.find(u);
        if (it != user_attr.end()) ++by_attr[k][it->second];
      }
      // Each cluster is scored against its majority attribute.
      std::vector<std::map<int, int>> majority(by_attr.size());
      for (std::size_t k = 0; k < by_attr.size(); ++k) {
        int best_attr = -1, best_n = 0, size = 0;
        for (const auto& [a, n] : by_attr[k]) {
          size += n;
          if (n > best_n) best_n = n, best_attr = a;
        }
        if (best_attr >= 0) majority[k][best_attr] = size;
      }
      add(method, "Sprmn", weighted_spearman(scores, majority, *ctx.truth));
      // Users without any comparison pair keep their initial cluster and carry no signal.
      std::map<UserId, int> informed;
      for (const auto& u : train_all) {
        if (!u.pairs.empty()) informed[u.user] = user_attr.at(u.user);
      }
      add(method, "partition_agreement", partition_agreement(sel.model.user_assignment, informed));
      add(method, "users_without_pairs", static_cast<double>(user_attr.size() - informed.size()));
    }
  }
}

std::vector<TagId> selected_tags(const ExperimentConfig& c, const Dataset& d) {
  std::vector<TagId> out;
  for (TagId g = 0; g < d.num_tags(); ++g) {
    if (c.tags.empty() || std::find(c.tags.begin(), c.tags.end(), d.tag_vocab()[g]) != c.tags.end()) {
      out.push_back(g);
    }
  }
  return out;
}

std::unique_ptr<PitfModel> train_pitf_stage(const ExperimentConfig& c, const Dataset& train,
                                            ExperimentResult& result) {
  if (!c.run_pitf) return nullptr;
  return stage("baselines", [&] {
    Rng rng = derive_rng(c.seed, {kPitf});
    auto ex = pitf_examples(train, c.pitf.neg_ratio, rng);
    PitfConfig pc = c.pitf;
    pc.seed = c.seed;
    auto res = train_pitf(ex, train.num_users(), train.num_items(), train.num_tags(), pc);
    result.details["pitf_epoch_loss"] = res.epoch_loss;
    return std::make_unique<PitfModel>(std::move(res.model));
  });
}

void describe_tags(const synth::GroundTruth& gt, ExperimentResult& result) {
  for (const auto& t : gt.tags) {
    const char* kind = t.kind == synth::TagKind::Objective ? "objective"
                       : t.kind == synth::TagKind::Sense   ? "sense"
                                                           : "irrelevant";
    result.details["tag_kind"][t.name] = kind;
  }
}

ExperimentResult run_synth_tags(const ExperimentConfig& c) {
  ExperimentResult result;
  synth::SynthConfig sc = c.synth;
  sc.seed = c.seed;
  auto data = stage("synthgen", [&] { return synth::generate(sc); });
  describe_tags(data.truth, result);
  result.details["num_ratings"] = data.data.ratings().size();
  result.details["num_tag_triples"] = data.data.tags().size();
  auto split = stage("split", [&] {
    Rng rng = derive_rng(c.seed, {kSplit});
    return split_by_pair(data.data, c.train_fraction, rng);
  });
  auto reps = stage("cftrain", [&] { return train_representations(c, split.train); });
  auto pitf = train_pitf_stage(c, split.train, result);
  stage("cavlearn", [&] {
    TagEvalContext ctx{c, split, reps, &data.truth, result};
    for (TagId g : selected_tags(c, split.train)) evaluate_tag(ctx, g, pitf.get());
    return 0;
  });
  return result;
}

MovieLensData load_data(const ExperimentConfig& c) {
  return stage("ingest", [&] {
    return load_movielens(c.data.ratings, c.data.tags, c.data.movies);
  });
}

ExperimentResult run_movielens_tags(const ExperimentConfig& c, bool artificial) {
  ExperimentResult result;
  auto ml = load_data(c);
  Json funnel = {{"triples_after_rating_filter", ml.stats.triples_after_rating_filter},
                 {"unique_tags_after_rating_filter", ml.stats.unique_tags_after_rating_filter},
                 {"final_tags", ml.stats.final_tags},
                 {"final_triples", ml.stats.final_triples}};
  result.details["funnel"] = funnel;
  Dataset data = std::move(ml.data);
  if (artificial) {
    auto art = stage("ingest", [&] {
      Rng rng = derive_rng(c.seed, {kArtificial});
      return make_artificial_tags(data, ml.movies, ArtificialSpec{}, rng);
    });
    data = std::move(art.data);
  }
  auto split = stage("split", [&] {
    Rng rng = derive_rng(c.seed, {kSplit});
    return split_by_pair(data, c.train_fraction, rng);
  });
  auto reps = stage("cftrain", [&] { return train_representations(c, split.train); });
  auto pitf = train_pitf_stage(c, split.train, result);
  ExperimentConfig cc = c;
  if (artificial && cc.tags.empty()) {
    ArtificialSpec spec;
    for (const auto& g : spec.genres) cc.tags.push_back(genre_tag_name(g));
    cc.tags.push_back(kOddYearTag);
    for (const auto& [group, grounds] : spec.meta_tags) cc.tags.push_back(meta_tag_name(group));
  }
  stage("cavlearn", [&] {
    TagEvalContext ctx{cc, split, reps, nullptr, result};
    for (TagId g : selected_tags(cc, split.train)) evaluate_tag(ctx, g, pitf.get());
    return 0;
  });
  return result;
}

std::vector<RaterAssessment> load_assessments(const ExperimentConfig& c, const MovieLensData& ml,
                                              ExperimentResult& result) {
  return stage("ingest", [&] {
    auto raw = load_soft_attributes(c.data.soft_attributes);
    auto mapped = map_assessments(raw, ml.movies);
    result.details["soft_attributes"] = {{"rows", raw.size()},
                                         {"dropped_titles", mapped.dropped_titles},
                                         {"unmatched_titles", mapped.unmatched.size()}};
    const auto& keep = soft_attributes_common_filter();
    std::vector<RaterAssessment> out;
    for (auto& a : mapped.assessments) {
      if (std::find(keep.begin(), keep.end(), a.attribute) != keep.end()) out.push_back(std::move(a));
    }
    return out;
  });
}

ExperimentResult run_rater_eval_softattr(const ExperimentConfig& c) {
  ExperimentResult result;
  auto ml = load_data(c);
  auto assessments = load_assessments(c, ml, result);
  auto reps = stage("cftrain", [&] { return train_representations(c, ml.data); });
  stage("evalmetrics", [&] {
    for (bool senses : {false, true}) {
      if (senses && !c.senses.enabled) continue;
      for (Trainer t : c.cav.trainers) {
        if (t == Trainer::Logistic) continue;
        RaterEvalConfig rc;
        rc.trainer = t;
        rc.lambda = c.cav.lambda;
        rc.opt = c.cav.opt;
        rc.senses = senses;
        rc.s_max = c.senses.s_max;
        rc.sense_eps = c.senses.eps;
        rc.em = c.senses.em;
        auto res = kfold_rater_eval(assessments, reps.items, c.folds, rc, c.seed);
        const std::string method = (senses ? "EM-" : "") + method_name(t);
        for (const auto& [attr, g] : res.per_attribute) result.rows.push_back({c.name, attr, method, "mean", "G'", g});
        for (std::size_t f = 0; f < res.fold_aggregate.size(); ++f) {
          result.rows.push_back({c.name, "all", method, std::to_string(f), "G'", res.fold_aggregate[f]});
        }
        result.rows.push_back({c.name, "all", method, "mean", "G'", res.aggregate});
      }
    }
    return 0;
  });
  return result;
}

ExperimentResult run_rater_eval_movielens(const ExperimentConfig& c) {
  ExperimentResult result;
  auto ml = load_data(c);
  auto assessments = load_assessments(c, ml, result);
  auto reps = stage("cftrain", [&] { return train_representations(c, ml.data); });
  stage("evalmetrics", [&] {
    std::map<std::string, std::vector<ComparisonSet>> by_attr;
    for (const auto& a : assessments) by_attr[a.attribute].push_back(comparisons_from_assessment(a));
    for (bool senses : {false, true}) {
      if (senses && !c.senses.enabled) continue;
      for (Trainer t : c.cav.trainers) {
        const std::string method = (senses ? "EM-" : "") + method_name(t);
        GammaCounts pooled;
        for (const auto& [attr, sets] : by_attr) {
          auto g = ml.data.tag_id(attr);
          if (!g) {
            result.log.push_back("attribute " + attr + " is not a MovieLens tag");
            continue;
          }
          Rng rng = derive_rng(c.seed, {kTrainExamples, static_cast<std::uint64_t>(*g), static_cast<std::uint64_t>(t)});
          TagExamples ex = build_examples(ml.data, *g, neg_ratio(c.cav, t), rng);
          SenseModel model;
          if (senses) {
            EmConfig em = c.senses.em;
            em.trainer = t;
            em.lambda = c.cav.lambda;
            em.opt = c.cav.opt;
            model = select_sense_count(ex, all_examples(ml.data, *g), reps.items, *g, c.senses.s_max,
                                       c.senses.eps, em, splitmix64(c.seed ^ (kSenses << 32)))
                        .model;
          } else {
            model.senses.push_back(train_cav(t, ex, reps.items, c.cav.lambda, c.cav.opt));
          }
          GammaCounts counts = score_comparisons(sets, model, reps.items);
          try {
            result.rows.push_back({c.name, attr, method, "all", "G'", counts.value()});
            pooled += counts;
          } catch (const DataError&) {
          }
        }
        result.rows.push_back({c.name, "all", method, "all", "G'", pooled.value()});
      }
    }
    return 0;
  });
  return result;
}

struct CritiqueSetup {
  Mat item_embs;
  Vec prior;
  std::vector<UserId> validation_users, test_users;
  // Per trainer: system directions per tag, possibly per user through senses.
  std::map<Trainer, std::vector<SenseModel>> models;
  std::function<UserSim(UserId)> make_user;
  std::function<std::vector<Vec>(const std::vector<SenseModel>&, UserId)> directions;
};

void append_session_rows(const ExperimentConfig& c, const std::string& method,
                         const std::vector<SessionTrace>& traces, ExperimentResult& result) {
  auto uau = aggregate_steps(traces, c.critique.steps, [](const SessionStep& s) { return s.uau; });
  auto umu = aggregate_steps(traces, c.critique.steps, [](const SessionStep& s) { return s.umu; });
  for (int t = 0; t <= c.critique.steps; ++t) {
    const std::string step = std::to_string(t);
    result.rows.push_back({c.name, "all", method, step, "UAU", uau[t].mean});
    result.rows.push_back({c.name, "all", method, step, "UAU_std", uau[t].std});
    result.rows.push_back({c.name, "all", method, step, "UMU", umu[t].mean});
    result.rows.push_back({c.name, "all", method, step, "UMU_std", umu[t].std});
  }
  if (!traces.empty() && traces.front().steps.front().has_metrics) {
    for (auto [name, fn] : std::vector<std::pair<std::string, std::function<double(const SessionStep&)>>>{
             {"NDCG", [](const SessionStep& s) { return s.metrics.ndcg; }},
             {"MRR", [](const SessionStep& s) { return s.metrics.mrr; }},
             {"BinRating", [](const SessionStep& s) { return s.metrics.binarized; }}}) {
      auto agg = aggregate_steps(traces, c.critique.steps, fn);
      for (int t = 0; t <= c.critique.steps; ++t) {
        result.rows.push_back({c.name, "all", method, std::to_string(t), name, agg[t].mean});
      }
    }
  }
  std::size_t improved = 0, accepted = 0;
  for (const auto& tr : traces) {
    if (tr.steps.back().uau > tr.steps.front().uau) ++improved;
    if (tr.accepted) ++accepted;
  }
  const double n = static_cast<double>(std::max<std::size_t>(traces.size(), 1));
  result.rows.push_back({c.name, "all", method, "all", "improved_fraction", improved / n});
  result.rows.push_back({c.name, "all", method, "all", "accepted_fraction", accepted / n});
  const double u0 = uau.front().mean, uT = uau.back().mean;
  result.rows.push_back({c.name, "all", method, "all", "UAU_rel_improvement",
                         u0 != 0.0 ? (uT - u0) / std::abs(u0) : 0.0});
}

std::vector<SessionTrace> run_sessions(const ExperimentConfig& c, const CritiqueSetup& s,
                                       const std::vector<SenseModel>& models,
                                       const std::vector<UserId>& users, double alpha) {
  std::vector<SessionTrace> traces(users.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(users.size()); ++k) {
    UserSim sim = s.make_user(users[k]);
    traces[k] = run_session(s.item_embs, s.directions(models, users[k]), sim, s.prior,
                            c.critique.slate_size, c.critique.steps, alpha);
  }
  return traces;
}

void run_critique(const ExperimentConfig& c, CritiqueSetup& s, ExperimentResult& result) {
  const double scale = std::max(s.prior.norm(), 1e-12);
  result.details["alpha_scale"] = scale;
  for (Trainer t : c.critique.trainers) {
    const auto& models = s.models.at(t);
    double best_alpha = c.critique.alpha_grid.front(), best_uau = -std::numeric_limits<double>::infinity();
    for (double a : c.critique.alpha_grid) {
      auto traces = run_sessions(c, s, models, s.validation_users, a * scale);
      auto uau = aggregate_steps(traces, c.critique.steps, [](const SessionStep& st) { return st.uau; });
      result.rows.push_back({c.name, "all", method_name(t), "validation", "UAU_alpha_" + std::to_string(a), uau.back().mean});
      if (uau.back().mean > best_uau) {
        best_uau = uau.back().mean;
        best_alpha = a;
      }
    }
    result.rows.push_back({c.name, "all", method_name(t), "all", "alpha0", best_alpha});
    auto traces = run_sessions(c, s, models, s.test_users, best_alpha * scale);
    append_session_rows(c, method_name(t), traces, result);
    for (std::size_t k = 0; k < traces.size(); ++k) {
      result.traces.push_back({method_name(t), s.test_users[k], std::move(traces[k])});
    }
  }
  // Zero-step control with the first configured trainer's CAVs.
  const Trainer t0 = c.critique.trainers.front();
  auto control = run_sessions(c, s, s.models.at(t0), s.test_users, 0.0);
  append_session_rows(c, method_name(t0) + "-alpha0", control, result);
}

std::vector<Vec> normalized_directions(const std::vector<SenseModel>& models, UserId user) {
  std::vector<Vec> out;
  for (const auto& m : models) {
    int k = 0;
    auto it = m.user_assignment.find(user);
    if (it != m.user_assignment.end()) k = it->second;
    Vec d = m.senses.at(k).direction;
    const double n = d.norm();
    out.push_back(n > 0 ? Vec(d / n) : d);
  }
  return out;
}

std::vector<SenseModel> train_system_cavs(const ExperimentConfig& c, const Dataset& data, const Mat& reprs,
                                          Trainer t) {
  std::vector<SenseModel> models;
  for (TagId g = 0; g < data.num_tags(); ++g) {
    Rng rng = derive_rng(c.seed, {kTrainExamples, static_cast<std::uint64_t>(g), static_cast<std::uint64_t>(t)});
    SenseModel m;
    m.tag = g;
    TagExamples ex;
    try {
      ex = build_examples(data, g, neg_ratio(c.cav, t), rng);
    } catch (const DataError&) {
      m.senses.push_back(CAV{g, t, 0, c.cav.lambda, Vec::Zero(reprs.cols()), 0.0});
      models.push_back(std::move(m));
      continue;
    }
    if (c.senses.enabled) {
      EmConfig em = c.senses.em;
      em.trainer = t;
      em.lambda = c.cav.lambda;
      em.opt = c.cav.opt;
      m = select_sense_count(ex, all_examples(data, g), reprs, g, c.senses.s_max, c.senses.eps, em,
                             splitmix64(c.seed ^ (kSenses << 32)))
              .model;
    } else {
      m.senses.push_back(train_cav(t, ex, reprs, c.cav.lambda, c.cav.opt));
    }
    models.push_back(std::move(m));
  }
  return models;
}

ExperimentResult run_critique_synth(const ExperimentConfig& c) {
  ExperimentResult result;
  synth::SynthConfig sc = c.synth;
  sc.seed = c.seed;
  auto data = stage("synthgen", [&] { return synth::generate(sc); });
  describe_tags(data.truth, result);
  auto reps = stage("cftrain", [&] { return train_representations(c, data.data); });
  CritiqueSetup s;
  s.item_embs = reps.items;
  s.prior = reps.users.colwise().mean().transpose();
  stage("cavlearn", [&] {
    for (Trainer t : c.critique.trainers) s.models[t] = train_system_cavs(c, data.data, reps.items, t);
    return 0;
  });
  Rng brng = derive_rng(c.seed, {kBounds});
  AttrBounds bounds = estimate_attr_bounds(data.truth.item_attrs, c.critique.bounds_sample, brng);
  std::vector<UserId> users(data.data.num_users());
  std::iota(users.begin(), users.end(), 0);
  Rng urng = derive_rng(c.seed, {kUsers});
  std::shuffle(users.begin(), users.end(), urng);
  const auto nv = std::min<std::size_t>(c.critique.validation_users, users.size());
  const auto nt = std::min<std::size_t>(c.critique.users, users.size() - nv);
  s.validation_users.assign(users.begin(), users.begin() + nv);
  s.test_users.assign(users.begin() + nv, users.begin() + nv + nt);
  const auto& truth = data.truth;
  s.make_user = [&](UserId u) {
    return synthetic_user(truth, sc, u, bounds, c.critique.accept_quantile);
  };
  s.directions = normalized_directions;
  stage("critique", [&] {
    run_critique(c, s, result);
    return 0;
  });
  return result;
}

ExperimentResult run_critique_movielens(const ExperimentConfig& c) {
  ExperimentResult result;
  auto ml = load_data(c);
  auto split = stage("split", [&] {
    Rng rng = derive_rng(c.seed, {kSplit});
    return split_by_pair(ml.data, c.train_fraction, rng);
  });
  auto reps = stage("cftrain", [&] { return train_representations(c, split.train); });
  CritiqueSetup s;
  s.item_embs = reps.items;
  s.prior = reps.users.colwise().mean().transpose();
  stage("cavlearn", [&] {
    for (Trainer t : c.critique.trainers) s.models[t] = train_system_cavs(c, split.train, reps.items, t);
    return 0;
  });
  Rng brng = derive_rng(c.seed, {kBounds});
  AttrBounds bounds = estimate_attr_bounds(reps.items, c.critique.bounds_sample, brng);
  std::vector<UserId> eligible;
  for (UserId u = 0; u < split.test.num_users(); ++u) {
    if (static_cast<int>(split.test.user_ratings(u).size()) >= c.critique.min_user_ratings) eligible.push_back(u);
  }
  Rng urng = derive_rng(c.seed, {kUsers});
  std::shuffle(eligible.begin(), eligible.end(), urng);
  const auto nv = std::min<std::size_t>(c.critique.validation_users, eligible.size());
  const auto nt = std::min<std::size_t>(c.critique.users, eligible.size() - nv);
  s.validation_users.assign(eligible.begin(), eligible.begin() + nv);
  s.test_users.assign(eligible.begin() + nv, eligible.begin() + nv + nt);
  const Trainer sim_trainer = c.critique.trainers.back();
  const auto& test = split.test;
  s.make_user = [&, sim_trainer](UserId u) {
    Vec ratings = Vec::Constant(test.num_items(), std::numeric_limits<double>::quiet_NaN());
    for (const auto& r : test.user_ratings(u)) ratings[r.item] = r.value;
    return embedding_user(reps.items, reps.users.row(u).transpose(),
                          normalized_directions(s.models.at(sim_trainer), u), bounds,
                          c.critique.accept_quantile, ratings);
  };
  s.directions = normalized_directions;
  stage("critique", [&] {
    run_critique(c, s, result);
    return 0;
  });
  return result;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config) {
  stage("config", [&] {
    config.validate();
    return 0;
  });
  const auto& n = config.name;
  if (n == "synth-objective" || n == "synth-degree" || n == "synth-sense") return run_synth_tags(config);
  if (n == "critique-synth") return run_critique_synth(config);
  if (n == "movielens-tags") return run_movielens_tags(config, false);
  if (n == "movielens-artificial") return run_movielens_tags(config, true);
  if (n == "rater-eval-softattr") return run_rater_eval_softattr(config);
  if (n == "rater-eval-movielens") return run_rater_eval_movielens(config);
  if (n == "critique-movielens") return run_critique_movielens(config);
  throw StageError("config", "unknown experiment '" + n + "'");
}

}  // namespace cavrec
