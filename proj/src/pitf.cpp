#include <algorithm>
#include <cmath>
#include <sstream>

#include "cavrec/baselines.hpp"
#include "cavrec/cavlearn.hpp"
#include "cavrec/kernels.hpp"

namespace cavrec {

double PitfModel::predict(UserId u, ItemId i, TagId g) const {
  return user_vecs.row(u).dot(tag_user_vecs.row(g)) + item_vecs.row(i).dot(tag_item_vecs.row(g));
}

Vec PitfModel::item_scores(TagId g) const { return item_vecs * tag_item_vecs.row(g).transpose(); }

std::vector<LabeledTriple> pitf_examples(const Dataset& dataset, int neg_ratio, Rng& rng) {
  std::vector<LabeledTriple> out;
  for (TagId g = 0; g < dataset.num_tags(); ++g) {
    TagExamples ex;
    try {
      ex = build_examples(dataset, g, neg_ratio, rng);
    } catch (const DataError&) {
      continue;
    }
    for (const auto& ue : ex)
      for (const auto& li : ue.labeled) out.push_back({ue.user, li.item, g, li.label});
  }
  return out;
}

PitfResult train_pitf(const std::vector<LabeledTriple>& examples, int num_users, int num_items,
                      int num_tags, const PitfConfig& config) {
  if (examples.empty()) throw DataError("PITF needs labeled triples");
  if (config.dim < 1 || config.epochs < 1 || config.learning_rate <= 0) {
    throw ConfigError("bad PITF configuration");
  }
  Rng rng = derive_rng(config.seed, {0x9177});
  std::normal_distribution<double> init(0.0, 0.1 / std::sqrt(static_cast<double>(config.dim)));
  auto make = [&](int rows) {
    Mat m(rows, config.dim);
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = init(rng);
    return m;
  };
  PitfResult out;
  PitfModel& model = out.model;
  model.user_vecs = make(num_users);
  model.item_vecs = make(num_items);
  model.tag_user_vecs = make(num_tags);
  model.tag_item_vecs = make(num_tags);

  std::vector<LabeledTriple> order = examples;
  const double lr = config.learning_rate, reg = config.reg;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (const auto& e : order) {
      auto u = model.user_vecs.row(e.user);
      auto i = model.item_vecs.row(e.item);
      auto tu = model.tag_user_vecs.row(e.tag);
      auto ti = model.tag_item_vecs.row(e.tag);
      const double z = e.label * (u.dot(tu) + i.dot(ti));
      total += kernels::softplus_neg(z);
      const double c = e.label * kernels::sigmoid_neg(z);
      Eigen::RowVectorXd u0 = u, i0 = i;
      u += lr * (c * tu - reg * u);
      tu += lr * (c * u0 - reg * tu);
      i += lr * (c * ti - reg * i);
      ti += lr * (c * i0 - reg * ti);
    }
    double mean = total / static_cast<double>(order.size());
    if (!std::isfinite(mean)) {
      std::ostringstream msg;
      msg << "PITF training diverged at epoch " << epoch << " (lr " << lr << ")";
      throw DataError(msg.str());
    }
    out.epoch_loss.push_back(mean);
  }
  return out;
}

double pitf_predict_accuracy(const PitfModel& model, const std::vector<LabeledTriple>& examples) {
  if (examples.empty()) throw DataError("accuracy is undefined on an empty set");
  std::size_t ok = 0;
  for (const auto& e : examples) {
    ok += ((model.predict(e.user, e.item, e.tag) >= 0.0) == (e.label > 0)) ? 1 : 0;
  }
  return static_cast<double>(ok) / static_cast<double>(examples.size());
}

}  // namespace cavrec
