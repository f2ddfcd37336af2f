#include "cavrec/core.hpp"

#include <algorithm>
#include <tuple>

namespace cavrec {

namespace {

template <typename Record>
std::vector<std::size_t> build_offsets(const std::vector<Record>& records, int num_users) {
  std::vector<std::size_t> offsets(static_cast<std::size_t>(num_users) + 1, 0);
  // Records are sorted by user; negative ids sort first, too-large ids last.
  std::size_t pos = 0;
  while (pos < records.size() && records[pos].user < 0) ++pos;
  for (int u = 0; u < num_users; ++u) {
    offsets[u] = pos;
    while (pos < records.size() && records[pos].user == u) ++pos;
  }
  offsets[num_users] = pos;
  return offsets;
}

}  // namespace

Dataset::Dataset(int num_users, int num_items, std::vector<Rating> ratings,
                 std::vector<TagTriple> tags, std::vector<std::string> tag_vocab)
    : num_users_(num_users),
      num_items_(num_items),
      ratings_(std::move(ratings)),
      tags_(std::move(tags)),
      tag_vocab_(std::move(tag_vocab)) {
  if (num_users_ < 0 || num_items_ < 0) throw ConfigError("negative dataset dimensions");
  std::stable_sort(ratings_.begin(), ratings_.end(), [](const Rating& a, const Rating& b) {
    return std::tie(a.user, a.item) < std::tie(b.user, b.item);
  });
  std::stable_sort(tags_.begin(), tags_.end(), [](const TagTriple& a, const TagTriple& b) {
    return std::tie(a.user, a.item, a.tag) < std::tie(b.user, b.item, b.tag);
  });
  rating_offsets_ = build_offsets(ratings_, num_users_);
  tag_offsets_ = build_offsets(tags_, num_users_);
}

std::span<const Rating> Dataset::user_ratings(UserId u) const {
  if (u < 0 || u >= num_users_) throw std::out_of_range("user id out of range");
  return {ratings_.data() + rating_offsets_[u], rating_offsets_[u + 1] - rating_offsets_[u]};
}

std::span<const TagTriple> Dataset::user_tags(UserId u) const {
  if (u < 0 || u >= num_users_) throw std::out_of_range("user id out of range");
  return {tags_.data() + tag_offsets_[u], tag_offsets_[u + 1] - tag_offsets_[u]};
}

std::optional<double> Dataset::rating_of(UserId u, ItemId i) const {
  auto row = user_ratings(u);
  auto it = std::lower_bound(row.begin(), row.end(), i,
                             [](const Rating& r, ItemId item) { return r.item < item; });
  if (it != row.end() && it->item == i) return it->value;
  return std::nullopt;
}

std::optional<TagId> Dataset::tag_id(const std::string& name) const {
  auto it = std::find(tag_vocab_.begin(), tag_vocab_.end(), name);
  if (it == tag_vocab_.end()) return std::nullopt;
  return static_cast<TagId>(it - tag_vocab_.begin());
}

std::vector<ItemId> Dataset::tagged_items(UserId u) const {
  std::vector<ItemId> items;
  for (const auto& t : user_tags(u)) {
    if (items.empty() || items.back() != t.item) items.push_back(t.item);
  }
  return items;
}

std::vector<UserId> Dataset::users_of_tag(TagId tag) const {
  std::vector<UserId> users;
  for (const auto& t : tags_) {
    if (t.tag == tag && t.user >= 0 && t.user < num_users_ &&
        (users.empty() || users.back() != t.user)) {
      users.push_back(t.user);
    }
  }
  return users;
}

std::size_t ValidationReport::count(ViolationKind kind) const {
  return static_cast<std::size_t>(std::count_if(
      violations.begin(), violations.end(), [kind](const Violation& v) { return v.kind == kind; }));
}

const char* to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::OrphanTag: return "orphan-tag";
    case ViolationKind::OutOfRange: return "out-of-range";
    case ViolationKind::DuplicateRating: return "duplicate-rating";
    case ViolationKind::DuplicateTag: return "duplicate-tag";
  }
  return "unknown";
}

ValidationReport validate_dataset(const Dataset& dataset) {
  ValidationReport report;
  auto add = [&](ViolationKind kind, std::string detail) {
    report.violations.push_back({kind, std::move(detail)});
  };
  auto in_range = [&](int u, int i) {
    return u >= 0 && u < dataset.num_users() && i >= 0 && i < dataset.num_items();
  };

  const auto& ratings = dataset.ratings();
  for (std::size_t k = 0; k < ratings.size(); ++k) {
    const auto& r = ratings[k];
    if (!in_range(r.user, r.item)) {
      add(ViolationKind::OutOfRange,
          "rating (" + std::to_string(r.user) + "," + std::to_string(r.item) + ")");
    }
    if (k > 0 && ratings[k - 1].user == r.user && ratings[k - 1].item == r.item) {
      add(ViolationKind::DuplicateRating,
          "rating (" + std::to_string(r.user) + "," + std::to_string(r.item) + ")");
    }
  }

  const auto& tags = dataset.tags();
  for (std::size_t k = 0; k < tags.size(); ++k) {
    const auto& t = tags[k];
    std::string where = "(" + std::to_string(t.user) + "," + std::to_string(t.item) + "," +
                        std::to_string(t.tag) + ")";
    if (!in_range(t.user, t.item) || t.tag < 0 || t.tag >= dataset.num_tags()) {
      add(ViolationKind::OutOfRange, "tag " + where);
      continue;
    }
    if (k > 0 && tags[k - 1].user == t.user && tags[k - 1].item == t.item &&
        tags[k - 1].tag == t.tag) {
      add(ViolationKind::DuplicateTag, "tag " + where);
    }
    if (!dataset.rating_of(t.user, t.item)) add(ViolationKind::OrphanTag, "tag " + where);
  }
  return report;
}

TagView tag_view(const Dataset& dataset, UserId user, TagId tag) {
  if (tag < 0 || tag >= dataset.num_tags()) throw std::out_of_range("tag id out of range");
  TagView view{user, tag, {}, {}};
  auto triples = dataset.user_tags(user);  // checks the user id
  std::size_t k = 0;
  while (k < triples.size()) {
    ItemId item = triples[k].item;
    bool has_tag = false;
    for (; k < triples.size() && triples[k].item == item; ++k) has_tag |= triples[k].tag == tag;
    (has_tag ? view.positives : view.negatives).push_back(item);
  }
  // Implicit negatives only count once the user has shown they use the tag.
  if (view.positives.empty()) view.negatives.clear();
  return view;
}

}  // namespace cavrec
