#include "cavrec/serialize.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "cavrec/ingest.hpp"

namespace cavrec {

namespace {

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

TagId tag_of(const std::string& name, const std::vector<std::string>& vocab) {
  for (std::size_t k = 0; k < vocab.size(); ++k)
    if (vocab[k] == name) return static_cast<TagId>(k);
  throw DataError("tag '" + name + "' is not in the vocabulary");
}

Json tower_to_json(const Tower& t) {
  return {{"emb", matrix_to_json(t.emb)}, {"w2", matrix_to_json(t.w2)}, {"b2", vector_to_json(t.b2)},
          {"w3", matrix_to_json(t.w3)}, {"b3", vector_to_json(t.b3)}};
}

Tower tower_from_json(const Json& j) {
  return {matrix_from_json(j.at("emb")), matrix_from_json(j.at("w2")), vector_from_json(j.at("b2")),
          matrix_from_json(j.at("w3")), vector_from_json(j.at("b3"))};
}

}  // namespace

Json matrix_to_json(const Mat& m) {
  return {{"rows", m.rows()},
          {"cols", m.cols()},
          {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

Mat matrix_from_json(const Json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw DataError("matrix size mismatch");
  Mat m(rows, cols);
  std::copy(data.begin(), data.end(), m.data());
  return m;
}

Json vector_to_json(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vec vector_from_json(const Json& j) {
  auto data = j.get<std::vector<double>>();
  return Eigen::Map<Vec>(data.data(), static_cast<Eigen::Index>(data.size()));
}

Json to_json(const LinearEmbeddingModel& model) {
  return {{"dim", model.dim()},
          {"kappa", model.kappa},
          {"user_vecs", matrix_to_json(model.user_vecs)},
          {"item_vecs", matrix_to_json(model.item_vecs)}};
}

Json to_json(const DeepEmbeddingModel& model) {
  return {{"dim", model.dim()},
          {"layers", DeepEmbeddingModel::kLayers},
          {"kappa", model.kappa},
          {"rho", model.rho},
          {"user", tower_to_json(model.user)},
          {"item", tower_to_json(model.item)}};
}

Json to_json(const PitfModel& model) {
  return {{"dim", model.dim()},
          {"user_vecs", matrix_to_json(model.user_vecs)},
          {"item_vecs", matrix_to_json(model.item_vecs)},
          {"tag_user_vecs", matrix_to_json(model.tag_user_vecs)},
          {"tag_item_vecs", matrix_to_json(model.tag_item_vecs)}};
}

Json to_json(const CAV& cav, const std::vector<std::string>& vocab) {
  return {{"tag", vocab.at(cav.tag)},
          {"trainer", to_string(cav.trainer)},
          {"layer", cav.layer},
          {"lambda", cav.lambda},
          {"direction", vector_to_json(cav.direction)},
          {"quality", cav.quality}};
}

Json to_json(const SenseModel& model, const std::vector<std::string>& vocab) {
  Json senses = Json::array();
  for (const auto& c : model.senses) senses.push_back(to_json(c, vocab));
  Json assignment = Json::object();
  for (const auto& [u, k] : model.user_assignment) assignment[std::to_string(u)] = k;
  return {{"tag", vocab.at(model.tag)},
          {"senses", senses},
          {"user_assignment", assignment},
          {"avg_quality", model.avg_quality}};
}

LinearEmbeddingModel linear_from_json(const Json& j) {
  LinearEmbeddingModel m;
  m.kappa = j.at("kappa").get<double>();
  m.user_vecs = matrix_from_json(j.at("user_vecs"));
  m.item_vecs = matrix_from_json(j.at("item_vecs"));
  return m;
}

DeepEmbeddingModel deep_from_json(const Json& j) {
  DeepEmbeddingModel m;
  m.kappa = j.at("kappa").get<double>();
  m.rho = j.at("rho").get<double>();
  m.user = tower_from_json(j.at("user"));
  m.item = tower_from_json(j.at("item"));
  return m;
}

PitfModel pitf_from_json(const Json& j) {
  PitfModel m;
  m.user_vecs = matrix_from_json(j.at("user_vecs"));
  m.item_vecs = matrix_from_json(j.at("item_vecs"));
  m.tag_user_vecs = matrix_from_json(j.at("tag_user_vecs"));
  m.tag_item_vecs = matrix_from_json(j.at("tag_item_vecs"));
  return m;
}

CAV cav_from_json(const Json& j, const std::vector<std::string>& vocab) {
  CAV c;
  c.tag = tag_of(j.at("tag").get<std::string>(), vocab);
  c.trainer = trainer_from_string(j.at("trainer").get<std::string>());
  c.layer = j.at("layer").get<int>();
  c.lambda = j.at("lambda").get<double>();
  c.direction = vector_from_json(j.at("direction"));
  c.quality = j.at("quality").get<double>();
  return c;
}

SenseModel sense_model_from_json(const Json& j, const std::vector<std::string>& vocab) {
  SenseModel m;
  m.tag = tag_of(j.at("tag").get<std::string>(), vocab);
  for (const auto& s : j.at("senses")) m.senses.push_back(cav_from_json(s, vocab));
  for (const auto& [u, k] : j.at("user_assignment").items()) {
    m.user_assignment[static_cast<UserId>(std::stol(u))] = k.get<int>();
  }
  m.avg_quality = j.value("avg_quality", 0.0);
  return m;
}

void save_checkpoint(const std::string& path, const std::string& kind, const Json& model) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  Json j = {{"format", "cavrec-model"}, {"version", kCheckpointVersion}, {"kind", kind}, {"model", model}};
  out << j.dump() << "\n";
}

Json load_checkpoint(const std::string& path, const std::string& kind) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  Json j = Json::parse(in);
  if (j.value("format", "") != "cavrec-model") throw DataError(path + " is not a cavrec checkpoint");
  if (j.value("version", 0) != kCheckpointVersion) throw DataError(path + ": unsupported version");
  if (j.value("kind", "") != kind) {
    throw DataError(path + ": expected a '" + kind + "' checkpoint, found '" + j.value("kind", "") + "'");
  }
  return j.at("model");
}

void write_dataset(const std::string& dir, const Dataset& dataset) {
  std::filesystem::create_directories(dir);
  std::ofstream meta(dir + "/dataset.json");
  meta << Json{{"num_users", dataset.num_users()},
               {"num_items", dataset.num_items()},
               {"tag_vocab", dataset.tag_vocab()}}
              .dump(2)
       << "\n";
  std::ofstream ratings(dir + "/ratings.csv");
  ratings << "user,item,rating\n";
  for (const auto& r : dataset.ratings()) ratings << r.user << ',' << r.item << ',' << format_double(r.value) << '\n';
  std::ofstream tags(dir + "/tags.csv");
  tags << "user,item,tag\n";
  for (const auto& t : dataset.tags()) {
    const auto& name = dataset.tag_vocab().at(t.tag);
    tags << t.user << ',' << t.item << ',';
    if (name.find_first_of(",\"") != std::string::npos) {
      std::string q;
      for (char c : name) q += c == '"' ? std::string("\"\"") : std::string(1, c);
      tags << '"' << q << '"';
    } else {
      tags << name;
    }
    tags << '\n';
  }
}

Dataset read_dataset(const std::string& dir) {
  std::ifstream meta_in(dir + "/dataset.json");
  if (!meta_in) throw DataError("ingest: cannot open " + dir + "/dataset.json");
  Json meta = Json::parse(meta_in);
  auto vocab = meta.at("tag_vocab").get<std::vector<std::string>>();
  std::map<std::string, TagId> index;
  for (std::size_t k = 0; k < vocab.size(); ++k) index[vocab[k]] = static_cast<TagId>(k);

  std::vector<Rating> ratings;
  std::ifstream r_in(dir + "/ratings.csv");
  if (!r_in) throw DataError("ingest: cannot open " + dir + "/ratings.csv");
  std::string line;
  std::getline(r_in, line);
  while (std::getline(r_in, line)) {
    if (line.empty()) continue;
    auto f = parse_csv_line(line);
    if (f.size() < 3) throw DataError("malformed rating row: " + line);
    ratings.push_back({std::stoi(f[0]), std::stoi(f[1]), std::stod(f[2])});
  }
  std::vector<TagTriple> tags;
  std::ifstream t_in(dir + "/tags.csv");
  if (!t_in) throw DataError("ingest: cannot open " + dir + "/tags.csv");
  std::getline(t_in, line);
  while (std::getline(t_in, line)) {
    if (line.empty()) continue;
    auto f = parse_csv_line(line);
    if (f.size() < 3 || !index.count(f[2])) throw DataError("malformed tag row: " + line);
    tags.push_back({std::stoi(f[0]), std::stoi(f[1]), index[f[2]]});
  }
  return Dataset(meta.at("num_users").get<int>(), meta.at("num_items").get<int>(), std::move(ratings),
                 std::move(tags), std::move(vocab));
}

Json to_json(const synth::GroundTruth& gt) {
  Json tags = Json::array();
  for (const auto& t : gt.tags) {
    const char* kind = t.kind == synth::TagKind::Objective ? "objective"
                       : t.kind == synth::TagKind::Sense   ? "sense"
                                                           : "irrelevant";
    tags.push_back({{"name", t.name}, {"kind", kind}, {"attributes", t.attributes}, {"group", t.group}});
  }
  return {{"item_attrs", matrix_to_json(gt.item_attrs)},
          {"item_popularity", vector_to_json(gt.item_popularity)},
          {"user_weights", matrix_to_json(gt.user_weights)},
          {"user_peaks", matrix_to_json(gt.user_peaks)},
          {"user_tag_thresholds", matrix_to_json(gt.user_tag_thresholds)},
          {"user_sense", gt.user_sense},
          {"user_tag_prob", vector_to_json(gt.user_tag_prob)},
          {"tags", tags}};
}

}  // namespace cavrec
