#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace cavrec {

using UserId = std::int32_t;
using ItemId = std::int32_t;
using TagId = std::int32_t;

// Row-major so that one row is one item (or user) representation.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

/// Raised for malformed configurations (synthgen, trainers, experiments).
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Raised when the data cannot support the requested computation
/// (no positives for a tag, no comparable pairs, constant input, ...).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Rating {
  UserId user;
  ItemId item;
  double value;  // rating-scale units, 1..5 with half steps allowed

  bool operator==(const Rating&) const = default;
};

struct TagTriple {
  UserId user;
  ItemId item;
  TagId tag;

  bool operator==(const TagTriple&) const = default;
};

/// Immutable ratings + tag triples with per-user indices.
///
/// Records are stored sorted by (user, item[, tag]) so that all per-user
/// access is a contiguous span. The constructor does not reject invalid
/// input; run validate_dataset() to audit it. Records with out-of-range
/// user ids are kept in ratings()/tags() but are not reachable through the
/// per-user accessors.
class Dataset {
 public:
  Dataset() = default;
  Dataset(int num_users, int num_items, std::vector<Rating> ratings,
          std::vector<TagTriple> tags, std::vector<std::string> tag_vocab);

  int num_users() const { return num_users_; }
  int num_items() const { return num_items_; }
  int num_tags() const { return static_cast<int>(tag_vocab_.size()); }

  const std::vector<Rating>& ratings() const { return ratings_; }
  const std::vector<TagTriple>& tags() const { return tags_; }
  const std::vector<std::string>& tag_vocab() const { return tag_vocab_; }

  std::span<const Rating> user_ratings(UserId u) const;
  std::span<const TagTriple> user_tags(UserId u) const;

  std::optional<double> rating_of(UserId u, ItemId i) const;
  std::optional<TagId> tag_id(const std::string& name) const;

  /// Distinct items the user tagged with any tag (T_u), ascending.
  std::vector<ItemId> tagged_items(UserId u) const;

  /// Users that applied `tag` at least once, ascending.
  std::vector<UserId> users_of_tag(TagId tag) const;

 private:
  int num_users_ = 0;
  int num_items_ = 0;
  std::vector<Rating> ratings_;
  std::vector<TagTriple> tags_;
  std::vector<std::string> tag_vocab_;
  std::vector<std::size_t> rating_offsets_;  // size num_users_ + 1
  std::vector<std::size_t> tag_offsets_;
};

/// One user's positives (T_{u,g}) and implicit negatives (T_{u,ḡ}) for a tag.
struct TagView {
  UserId user = 0;
  TagId tag = 0;
  std::vector<ItemId> positives;
  std::vector<ItemId> negatives;
};

struct SplitDataset {
  Dataset train;
  Dataset test;
};

enum class ViolationKind { OrphanTag, OutOfRange, DuplicateRating, DuplicateTag };

struct Violation {
  ViolationKind kind;
  std::string detail;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool empty() const { return violations.empty(); }
  std::size_t count(ViolationKind kind) const;
};

ValidationReport validate_dataset(const Dataset& dataset);

/// Throws std::out_of_range for ids outside the dataset.
TagView tag_view(const Dataset& dataset, UserId user, TagId tag);

const char* to_string(ViolationKind kind);

}  // namespace cavrec
