#include "cavrec/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>
#include <unordered_map>

#include "json.hpp"

namespace cavrec {

namespace {

std::ifstream open_or_throw(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("ingest: cannot open " + path);
  return in;
}

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

bool parse_int64(const std::string& s, std::int64_t& out) {
  try {
    std::size_t pos = 0;
    out = std::stoll(s, &pos);
    return pos == s.size();
  } catch (...) {
    return false;
  }
}

bool parse_double(const std::string& s, double& out) {
  try {
    std::size_t pos = 0;
    out = std::stod(s, &pos);
    return pos == s.size();
  } catch (...) {
    return false;
  }
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  return out;
}

}  // namespace

std::vector<std::string> parse_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t k = 0; k < line.size(); ++k) {
    char c = line[k];
    if (quoted) {
      if (c == '"') {
        if (k + 1 < line.size() && line[k + 1] == '"') {
          cur += '"';
          ++k;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

std::pair<std::string, int> normalize_title(const std::string& title) {
  std::string t = trim(title);
  int year = -1;
  if (t.size() >= 6 && t.back() == ')') {
    auto open = t.rfind('(');
    if (open != std::string::npos && t.size() - open == 6) {
      std::string digits = t.substr(open + 1, 4);
      if (std::all_of(digits.begin(), digits.end(), ::isdigit)) {
        year = std::stoi(digits);
        t = trim(t.substr(0, open));
      }
    }
  }
  t = lower(t);
  for (const char* article : {", the", ", a", ", an"}) {
    std::string a = article;
    if (t.size() > a.size() && t.compare(t.size() - a.size(), a.size(), a) == 0) {
      t = a.substr(2) + " " + t.substr(0, t.size() - a.size());
      break;
    }
  }
  std::string out;
  bool space = false;
  for (char c : t) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      if (space && !out.empty()) out += ' ';
      out += c;
      space = false;
    } else if (c == ' ' || c == '-' || c == '_' || c == '/') {
      space = true;
    }
  }
  return {out, year};
}

void print_funnel(std::ostream& os, const IngestStats& s) {
  os << "ratings rows:                 " << s.rating_rows << " (malformed " << s.rating_malformed << ")\n"
     << "movies rows:                  " << s.movie_rows << " (malformed " << s.movie_malformed << ")\n"
     << "tag rows:                     " << s.tag_rows << " (malformed " << s.tag_malformed << ")\n"
     << "  duplicate after lowercase:  " << s.tag_duplicates << "\n"
     << "  without a rating:           " << s.tag_without_rating << "\n"
     << "  rating below threshold:     " << s.tag_low_rating << "\n"
     << "triples after rating filter:  " << s.triples_after_rating_filter << "\n"
     << "unique tags at that point:    " << s.unique_tags_after_rating_filter << "\n"
     << "tags after popularity filter: " << s.final_tags << "\n"
     << "final triples:                " << s.final_triples << "\n";
}

MovieLensData load_movielens(const std::string& ratings_path, const std::string& tags_path,
                             const std::string& movies_path, const FilterConfig& filter) {
  auto ratings_in = open_or_throw(ratings_path);
  auto tags_in = open_or_throw(tags_path);
  auto movies_in = open_or_throw(movies_path);
  MovieLensData out;
  IngestStats& st = out.stats;
  std::string line;

  std::map<std::int64_t, MovieMeta> movie_rows;
  std::getline(movies_in, line);
  while (std::getline(movies_in, line)) {
    if (trim(line).empty()) continue;
    ++st.movie_rows;
    auto f = parse_csv_line(line);
    std::int64_t id;
    if (f.size() < 3 || !parse_int64(trim(f[0]), id)) {
      ++st.movie_malformed;
      continue;
    }
    MovieMeta m;
    m.movie_id = id;
    m.title = trim(f[1]);
    m.year = normalize_title(m.title).second;
    for (auto& g : split(trim(f[2]), '|')) {
      if (!g.empty() && g != "(no genres listed)") m.genres.push_back(lower(g));
    }
    movie_rows[id] = std::move(m);
  }

  struct RawRating {
    std::int64_t user, movie;
    double value;
  };
  std::vector<RawRating> raw_ratings;
  std::getline(ratings_in, line);
  while (std::getline(ratings_in, line)) {
    if (trim(line).empty()) continue;
    ++st.rating_rows;
    auto f = parse_csv_line(line);
    RawRating r;
    if (f.size() < 3 || !parse_int64(trim(f[0]), r.user) || !parse_int64(trim(f[1]), r.movie) ||
        !parse_double(trim(f[2]), r.value)) {
      ++st.rating_malformed;
      continue;
    }
    raw_ratings.push_back(r);
  }

  // Dense ids: users and movies sorted by raw id.
  std::set<std::int64_t> user_set, movie_set;
  for (const auto& r : raw_ratings) {
    user_set.insert(r.user);
    movie_set.insert(r.movie);
  }
  for (const auto& [id, m] : movie_rows) movie_set.insert(id);
  std::unordered_map<std::int64_t, UserId> user_index;
  std::unordered_map<std::int64_t, ItemId> item_index;
  for (auto id : user_set) {
    user_index[id] = static_cast<UserId>(out.user_ids.size());
    out.user_ids.push_back(id);
  }
  for (auto id : movie_set) {
    MovieMeta m;
    auto it = movie_rows.find(id);
    if (it != movie_rows.end()) m = it->second;
    m.movie_id = id;
    m.item = static_cast<ItemId>(out.movies.size());
    item_index[id] = m.item;
    out.movies.push_back(std::move(m));
  }

  std::map<std::pair<UserId, ItemId>, double> rating_of;
  std::vector<Rating> ratings;
  ratings.reserve(raw_ratings.size());
  for (const auto& r : raw_ratings) {
    UserId u = user_index[r.user];
    ItemId i = item_index[r.movie];
    auto [it, fresh] = rating_of.emplace(std::make_pair(u, i), r.value);
    if (!fresh) it->second = r.value;
  }
  for (const auto& [key, v] : rating_of) ratings.push_back({key.first, key.second, v});
  raw_ratings.clear();

  struct Triple {
    UserId user;
    ItemId item;
    std::string tag;
    bool operator<(const Triple& o) const {
      return std::tie(user, item, tag) < std::tie(o.user, o.item, o.tag);
    }
  };
  std::set<Triple> triples;
  std::getline(tags_in, line);
  while (std::getline(tags_in, line)) {
    if (trim(line).empty()) continue;
    ++st.tag_rows;
    auto f = parse_csv_line(line);
    std::int64_t uid, mid;
    if (f.size() < 3 || !parse_int64(trim(f[0]), uid) || !parse_int64(trim(f[1]), mid) ||
        trim(f[2]).empty()) {
      ++st.tag_malformed;
      continue;
    }
    auto ui = user_index.find(uid);
    auto mi = item_index.find(mid);
    if (ui == user_index.end() || mi == item_index.end()) {
      ++st.tag_without_rating;
      continue;
    }
    auto r = rating_of.find({ui->second, mi->second});
    if (r == rating_of.end()) {
      ++st.tag_without_rating;
      continue;
    }
    if (r->second < filter.min_tag_rating) {
      ++st.tag_low_rating;
      continue;
    }
    if (!triples.insert({ui->second, mi->second, lower(trim(f[2]))}).second) ++st.tag_duplicates;
  }
  st.triples_after_rating_filter = triples.size();

  std::map<std::string, std::set<ItemId>> movies_of;
  std::map<std::string, std::set<UserId>> users_of;
  for (const auto& t : triples) {
    movies_of[t.tag].insert(t.item);
    users_of[t.tag].insert(t.user);
  }
  st.unique_tags_after_rating_filter = movies_of.size();
  auto top = [](const auto& counts, int limit) {
    std::vector<std::pair<std::size_t, std::string>> v;
    for (const auto& [tag, set] : counts) v.push_back({set.size(), tag});
    std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
      return a.first > b.first || (a.first == b.first && a.second < b.second);
    });
    std::set<std::string> keep;
    for (std::size_t k = 0; k < v.size() && static_cast<int>(k) < limit; ++k) keep.insert(v[k].second);
    return keep;
  };
  auto by_movies = top(movies_of, filter.top_by_movies);
  auto by_users = top(users_of, filter.top_by_users);
  std::vector<std::string> vocab;
  for (const auto& t : by_movies)
    if (by_users.count(t)) vocab.push_back(t);
  std::map<std::string, TagId> tag_index;
  for (std::size_t k = 0; k < vocab.size(); ++k) tag_index[vocab[k]] = static_cast<TagId>(k);
  std::vector<TagTriple> tags;
  for (const auto& t : triples) {
    auto it = tag_index.find(t.tag);
    if (it != tag_index.end()) tags.push_back({t.user, t.item, it->second});
  }
  st.final_tags = vocab.size();
  st.final_triples = tags.size();
  out.data = Dataset(static_cast<int>(out.user_ids.size()), static_cast<int>(out.movies.size()),
                     std::move(ratings), std::move(tags), std::move(vocab));
  return out;
}

SplitDataset split_by_pair(const Dataset& dataset, double train_fraction, Rng& rng) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("train_fraction must lie strictly between 0 and 1");
  }
  std::bernoulli_distribution to_train(train_fraction);
  std::map<std::pair<UserId, ItemId>, bool> side;
  auto decide = [&](UserId u, ItemId i) {
    auto [it, fresh] = side.emplace(std::make_pair(u, i), false);
    if (fresh) it->second = to_train(rng);
    return it->second;
  };
  // Pairs are visited in sorted (user, item) order so the draw sequence is fixed.
  std::vector<std::pair<UserId, ItemId>> keys;
  for (const auto& r : dataset.ratings()) keys.push_back({r.user, r.item});
  for (const auto& t : dataset.tags()) keys.push_back({t.user, t.item});
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
  for (const auto& [u, i] : keys) decide(u, i);

  std::vector<Rating> r_train, r_test;
  std::vector<TagTriple> t_train, t_test;
  for (const auto& r : dataset.ratings()) (side[{r.user, r.item}] ? r_train : r_test).push_back(r);
  for (const auto& t : dataset.tags()) (side[{t.user, t.item}] ? t_train : t_test).push_back(t);
  return {Dataset(dataset.num_users(), dataset.num_items(), std::move(r_train), std::move(t_train),
                  dataset.tag_vocab()),
          Dataset(dataset.num_users(), dataset.num_items(), std::move(r_test), std::move(t_test),
                  dataset.tag_vocab())};
}

std::string genre_tag_name(const std::string& genre) { return "genre-" + genre; }
std::string meta_tag_name(const std::string& group) { return "meta-" + group; }

ArtificialResult make_artificial_tags(const Dataset& dataset, const std::vector<MovieMeta>& movies,
                                      const ArtificialSpec& spec, Rng& rng) {
  const auto& vocab = dataset.tag_vocab();
  std::map<std::string, std::string> ground_to_group;
  for (const auto& [group, grounds] : spec.meta_tags) {
    for (const auto& g : grounds) {
      if (!dataset.tag_id(g)) throw ConfigError("unknown ground tag '" + g + "' in meta-tag " + group);
      ground_to_group[g] = group;
    }
  }
  auto has_genre = [&](ItemId i, const std::string& genre) {
    if (i < 0 || i >= static_cast<ItemId>(movies.size())) return false;
    const auto& g = movies[i].genres;
    return std::find(g.begin(), g.end(), genre) != g.end();
  };

  ArtificialResult out;
  // Designated sense per user and group.
  for (const auto& [group, grounds] : spec.meta_tags) {
    auto& map = out.designated[group];
    for (UserId u = 0; u < dataset.num_users(); ++u) {
      std::set<std::string> used;
      for (const auto& t : dataset.user_tags(u)) {
        const auto& name = vocab[t.tag];
        if (std::find(grounds.begin(), grounds.end(), name) != grounds.end()) used.insert(name);
      }
      std::vector<std::string> pool = used.empty() ? grounds
                                                   : std::vector<std::string>(used.begin(), used.end());
      std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
      map[u] = pool[pick(rng)];
    }
  }

  std::set<std::tuple<UserId, ItemId, std::string>> triples;
  for (const auto& t : dataset.tags()) {
    const auto& name = vocab[t.tag];
    auto g = ground_to_group.find(name);
    if (g != ground_to_group.end() && out.designated[g->second][t.user] == name) {
      triples.insert({t.user, t.item, meta_tag_name(g->second)});
    } else {
      triples.insert({t.user, t.item, name});
    }
  }
  std::bernoulli_distribution genre_coin(spec.genre_rate), odd_coin(spec.odd_year_rate);
  std::set<std::pair<UserId, ItemId>> pairs;
  for (const auto& t : dataset.tags()) pairs.insert({t.user, t.item});
  for (const auto& [u, i] : pairs) {
    for (const auto& genre : spec.genres) {
      if (genre_coin(rng) && has_genre(i, genre)) triples.insert({u, i, genre_tag_name(genre)});
    }
    if (spec.odd_year && odd_coin(rng)) {
      int year = (i >= 0 && i < static_cast<ItemId>(movies.size())) ? movies[i].year : -1;
      if (year > 0 && year % 2 == 1) triples.insert({u, i, kOddYearTag});
    }
  }

  std::set<std::string> names;
  for (const auto& t : triples) names.insert(std::get<2>(t));
  std::vector<std::string> new_vocab(names.begin(), names.end());
  std::map<std::string, TagId> index;
  for (std::size_t k = 0; k < new_vocab.size(); ++k) index[new_vocab[k]] = static_cast<TagId>(k);
  std::vector<TagTriple> tags;
  for (const auto& [u, i, name] : triples) tags.push_back({u, i, index[name]});
  out.data = Dataset(dataset.num_users(), dataset.num_items(), dataset.ratings(), std::move(tags),
                     std::move(new_vocab));
  return out;
}

namespace {

std::vector<std::string> parse_title_list(const std::string& cell) {
  std::string s = trim(cell);
  std::vector<std::string> out;
  if (s.empty()) return out;
  if (s.front() == '[') {
    try {
      auto j = nlohmann::json::parse(s);
      for (const auto& e : j) out.push_back(trim(e.get<std::string>()));
      return out;
    } catch (const std::exception&) {
      // fall through to separator parsing
      s = s.substr(1, s.size() >= 2 ? s.size() - 2 : 0);
    }
  }
  char sep = s.find('|') != std::string::npos ? '|' : ';';
  for (auto& t : split(s, sep)) {
    t = trim(t);
    if (t.size() >= 2 && (t.front() == '\'' || t.front() == '"') && t.back() == t.front()) {
      t = t.substr(1, t.size() - 2);
    }
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

std::vector<std::string> split_record(const std::string& line, bool tabs) {
  if (!tabs) return parse_csv_line(line);
  auto f = split(line, '\t');
  if (!line.empty() && line.back() == '\t') f.push_back("");
  return f;
}

}  // namespace

std::vector<RawAssessment> load_soft_attributes(const std::string& path) {
  auto in = open_or_throw(path);
  std::string header;
  if (!std::getline(in, header)) throw DataError("ingest: empty SoftAttributes file " + path);
  const bool tabs = header.find('\t') != std::string::npos;
  auto cols = split_record(header, tabs);
  auto find = [&](std::initializer_list<const char*> keys) {
    for (std::size_t c = 0; c < cols.size(); ++c) {
      std::string name = lower(trim(cols[c]));
      for (const char* k : keys)
        if (name.find(k) != std::string::npos) return static_cast<int>(c);
    }
    return -1;
  };
  const int c_rater = find({"rater"});
  const int c_attr = find({"attribute"});
  const int c_anchor = find({"reference", "anchor"});
  const int c_less = find({"less"});
  const int c_same = find({"same", "about"});
  const int c_more = find({"more"});
  if (std::min({c_rater, c_attr, c_anchor, c_less, c_same, c_more}) < 0) {
    throw DataError("ingest: SoftAttributes header lacks required columns in " + path);
  }
  std::vector<RawAssessment> out;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    auto f = split_record(line, tabs);
    const int need = std::max({c_rater, c_attr, c_anchor, c_less, c_same, c_more});
    if (static_cast<int>(f.size()) <= need) continue;
    RawAssessment a;
    a.rater = trim(f[c_rater]);
    a.attribute = lower(trim(f[c_attr]));
    a.anchor = trim(f[c_anchor]);
    a.less = parse_title_list(f[c_less]);
    a.same = parse_title_list(f[c_same]);
    a.more = parse_title_list(f[c_more]);
    out.push_back(std::move(a));
  }
  return out;
}

MappedAssessments map_assessments(const std::vector<RawAssessment>& raw,
                                  const std::vector<MovieMeta>& movies) {
  std::unordered_map<std::string, std::vector<std::pair<int, ItemId>>> by_name;
  for (const auto& m : movies) {
    auto [name, year] = normalize_title(m.title);
    if (!name.empty()) by_name[name].push_back({year, m.item});
  }
  MappedAssessments out;
  std::set<std::string> unmatched;
  auto lookup = [&](const std::string& title) -> ItemId {
    auto [name, year] = normalize_title(title);
    auto it = by_name.find(name);
    if (it != by_name.end()) {
      for (const auto& [y, item] : it->second)
        if (year < 0 || y < 0 || y == year) return item;
    }
    unmatched.insert(title);
    ++out.dropped_titles;
    return -1;
  };
  for (const auto& r : raw) {
    RaterAssessment a;
    a.rater = r.rater;
    a.attribute = r.attribute;
    a.anchor = lookup(r.anchor);
    std::set<ItemId> seen;
    auto fill = [&](const std::vector<std::string>& titles, std::vector<ItemId>& dst) {
      for (const auto& t : titles) {
        ItemId i = lookup(t);
        if (i >= 0 && seen.insert(i).second) dst.push_back(i);
      }
    };
    if (a.anchor >= 0) {
      seen.insert(a.anchor);
      a.same.push_back(a.anchor);
    }
    fill(r.more, a.more);
    fill(r.same, a.same);
    fill(r.less, a.less);
    out.assessments.push_back(std::move(a));
  }
  out.unmatched.assign(unmatched.begin(), unmatched.end());
  return out;
}

const std::vector<std::string>& soft_attributes_common_filter() {
  static const std::vector<std::string> names{
      "animated",     "artsy",        "believable",  "big budget", "bizarre",
      "boring",       "cartoonish",   "cheesy",      "complicated", "confusing",
      "dramatic",     "entertaining", "exaggerated", "factual",    "funny",
      "gory",         "harsh",        "incomprehensible", "intense", "interesting",
      "light-hearted", "long",        "mainstream",  "mindless",   "original",
      "over the top", "overrated",    "pointless",   "predictable", "realistic",
      "romantic",     "sappy",        "scary",       "terrifying", "unrealistic",
      "violent"};
  return names;
}

}  // namespace cavrec
