#include "doctest.h"
#include "test_util.hpp"

using namespace cavrec;

namespace {

Dataset toy() {
  // u0: i0 {g0}, i1 {g1}; u1: i1 {g0, g1}; u2: i2 {g1}
  return Dataset(3, 3, {{0, 0, 4}, {0, 1, 3}, {1, 1, 5}, {2, 2, 2}},
                 {{0, 0, 0}, {0, 1, 1}, {1, 1, 0}, {1, 1, 1}, {2, 2, 1}}, {"g", "h"});
}

}  // namespace

TEST_CASE("well-formed toy dataset validates cleanly") {
  CHECK(validate_dataset(toy()).empty());
  CHECK(validate_dataset(Dataset()).empty());
}

TEST_CASE("orphan tag is reported once") {
  Dataset d(2, 2, {{0, 0, 4}}, {{0, 0, 0}, {1, 1, 0}}, {"g"});
  auto r = validate_dataset(d);
  CHECK(r.count(ViolationKind::OrphanTag) == 1);
  CHECK(r.violations.size() == 1);
}

TEST_CASE("duplicates and out-of-range ids are reported") {
  Dataset d(2, 2, {{0, 0, 4}, {0, 0, 5}, {0, 3, 1}}, {{0, 0, 0}, {0, 0, 0}, {0, 0, 2}}, {"g"});
  auto r = validate_dataset(d);
  CHECK(r.count(ViolationKind::DuplicateRating) == 1);
  CHECK(r.count(ViolationKind::DuplicateTag) == 1);
  CHECK(r.count(ViolationKind::OutOfRange) == 2);
}

TEST_CASE("tag_view follows the T_{u,g} / T_{u,not g} definitions") {
  Dataset d = toy();
  auto v = tag_view(d, 0, 0);
  CHECK(v.positives == std::vector<ItemId>{0});
  CHECK(v.negatives == std::vector<ItemId>{1});

  auto both = tag_view(d, 1, 0);
  CHECK(both.positives == std::vector<ItemId>{1});
  CHECK(both.negatives.empty());

  auto unused = tag_view(d, 2, 0);
  CHECK(unused.positives.empty());
  CHECK(unused.negatives.empty());

  CHECK_THROWS_AS(tag_view(d, 3, 0), std::out_of_range);
  CHECK_THROWS_AS(tag_view(d, 0, 2), std::out_of_range);
}

TEST_CASE("tag_view partitions the user's tagged items") {
  Rng rng(7);
  for (int trial = 0; trial < 30; ++trial) {
    Dataset d = testutil::random_dataset(rng, 8, 12, 3);
    REQUIRE(validate_dataset(d).empty());
    for (UserId u = 0; u < d.num_users(); ++u) {
      auto all = d.tagged_items(u);
      for (TagId g = 0; g < d.num_tags(); ++g) {
        auto v = tag_view(d, u, g);
        if (v.positives.empty()) {
          CHECK(v.negatives.empty());
          continue;
        }
        std::vector<ItemId> joined = v.positives;
        joined.insert(joined.end(), v.negatives.begin(), v.negatives.end());
        std::sort(joined.begin(), joined.end());
        CHECK(joined == all);
        for (ItemId i : v.positives) CHECK(!std::binary_search(v.negatives.begin(), v.negatives.end(), i));
      }
    }
  }
}

TEST_CASE("dataset accessors") {
  Dataset d = toy();
  CHECK(d.rating_of(0, 1).value() == 3);
  CHECK(!d.rating_of(2, 0).has_value());
  CHECK(d.tag_id("h").value() == 1);
  CHECK(!d.tag_id("nope").has_value());
  CHECK(d.users_of_tag(1) == std::vector<UserId>{0, 1, 2});
  CHECK(d.users_of_tag(0) == std::vector<UserId>{0, 1});
  CHECK(d.user_ratings(1).size() == 1);
  CHECK(d.user_tags(1).size() == 2);
}
