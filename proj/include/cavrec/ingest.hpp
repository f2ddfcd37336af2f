#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "cavrec/core.hpp"
#include "cavrec/evalmetrics.hpp"
#include "cavrec/rng.hpp"

namespace cavrec {

struct MovieMeta {
  ItemId item = -1;
  std::int64_t movie_id = 0;
  std::string title;
  std::vector<std::string> genres;
  int year = -1;  // -1 when the title carries no "(YYYY)"
};

struct FilterConfig {
  double min_tag_rating = 4.0;
  int top_by_movies = 250;
  int top_by_users = 250;
};

/// Row counts through each loading/filtering stage.
struct IngestStats {
  std::size_t rating_rows = 0, rating_malformed = 0;
  std::size_t tag_rows = 0, tag_malformed = 0;
  std::size_t movie_rows = 0, movie_malformed = 0;
  std::size_t tag_duplicates = 0;
  std::size_t tag_without_rating = 0;
  std::size_t tag_low_rating = 0;
  std::size_t triples_after_rating_filter = 0;
  std::size_t unique_tags_after_rating_filter = 0;
  std::size_t final_tags = 0;
  std::size_t final_triples = 0;
};

void print_funnel(std::ostream& os, const IngestStats& stats);

struct MovieLensData {
  Dataset data;
  std::vector<MovieMeta> movies;  // indexed by dense item id
  std::vector<std::int64_t> user_ids;  // raw id per dense user id
  IngestStats stats;
};

/// Splits one CSV record honoring double quotes ("" escapes a quote).
std::vector<std::string> parse_csv_line(const std::string& line);

/// Title → (lowercase, punctuation-free name with a trailing ", The"-style
/// article moved to the front, year or −1).
std::pair<std::string, int> normalize_title(const std::string& title);

/// Throws DataError("ingest: ...") for unreadable files.
MovieLensData load_movielens(const std::string& ratings_path, const std::string& tags_path,
                             const std::string& movies_path, const FilterConfig& filter = {});

/// Every distinct (user, item) pair goes wholly to train (probability
/// `train_fraction`) or test together with all of its records.
SplitDataset split_by_pair(const Dataset& dataset, double train_fraction, Rng& rng);

struct ArtificialSpec {
  std::vector<std::string> genres{"comedy", "horror", "fantasy", "romance"};
  double genre_rate = 0.5;
  bool odd_year = true;
  double odd_year_rate = 0.5;
  std::map<std::string, std::vector<std::string>> meta_tags{
      {"monsters", {"zombies", "ghosts", "vampires"}},
      {"funny", {"parody", "satire", "dark humor"}},
      {"intrigue", {"corruption", "conspiracy", "politics"}},
      {"relationship", {"family", "friendship", "love story"}},
  };
};

/// Names given to constructed tags (prefixed so they never collide with user tags).
std::string genre_tag_name(const std::string& genre);
std::string meta_tag_name(const std::string& group);
inline constexpr const char* kOddYearTag = "odd-year";

struct ArtificialResult {
  Dataset data;
  /// meta-tag group → user → designated ground tag.
  std::map<std::string, std::map<UserId, std::string>> designated;
};

/// Throws ConfigError when a meta-tag's ground tag is not in the vocabulary.
ArtificialResult make_artificial_tags(const Dataset& dataset, const std::vector<MovieMeta>& movies,
                                      const ArtificialSpec& spec, Rng& rng);

/// Assessment with movie titles, as read from a SoftAttributes file.
struct RawAssessment {
  std::string rater;
  std::string attribute;
  std::string anchor;
  std::vector<std::string> less, same, more;
};

/// Tabular SoftAttributes rows (CSV or TSV, header required). Columns are
/// located by name: rater, attribute, reference/anchor, less, same/about,
/// more. List cells are JSON arrays or '|' / ';' separated titles.
std::vector<RawAssessment> load_soft_attributes(const std::string& path);

struct MappedAssessments {
  std::vector<RaterAssessment> assessments;
  std::size_t dropped_titles = 0;
  std::vector<std::string> unmatched;  // distinct titles without a MovieLens match
};

MappedAssessments map_assessments(const std::vector<RawAssessment>& raw,
                                  const std::vector<MovieMeta>& movies);

/// The 36 SoftAttributes attributes that also occur as MovieLens tags.
const std::vector<std::string>& soft_attributes_common_filter();

}  // namespace cavrec
