#include <catch2/catch_amalgamated.hpp>

#include "binoc/groups.hpp"

using namespace binoc;

namespace {

std::set<std::string> strings(const std::set<GroupId>& gs) {
    std::set<std::string> out;
    for (const auto& g : gs) out.insert(g.str());
    return out;
}

// Interval-adjacency oracle: all groups of length <= d whose dyadic windows
// overlap or share a boundary with s's window.
std::set<std::string> neighbor_oracle(const GroupId& s, uint32_t d) {
    auto bounds = [](const GroupId& g) {
        double w = 1.0 / double(uint64_t(1) << g.length);
        return std::pair<double, double>{g.bits * w, (g.bits + 1) * w};
    };
    auto [a0, a1] = bounds(s);
    std::set<std::string> out;
    for (const GroupId& r : all_groups_lex(d)) {
        auto [b0, b1] = bounds(r);
        if (a0 <= b1 && b0 <= a1) out.insert(r.str());
    }
    return out;
}

}  // namespace

TEST_CASE("group increment") {
    CHECK(group_increment(GroupId::from_string("10"), +1)->str() == "11");
    CHECK(!group_increment(GroupId::from_string("00"), -1).has_value());
    CHECK(group_increment(GroupId::from_string("011"), +1)->str() == "100");
    CHECK(!group_increment(GroupId::from_string("111"), +1).has_value());
    CHECK(group_increment(GroupId::from_string("100"), -1)->str() == "011");
}

TEST_CASE("lexicographic order and windows") {
    auto g = all_groups_lex(2);
    std::vector<std::string> got;
    for (const auto& x : g) got.push_back(x.str());
    std::vector<std::string> expect = {"", "0", "00", "01", "1", "10", "11"};
    CHECK(got == expect);
    for (size_t i = 0; i < g.size(); ++i) CHECK(group_lex_rank(g[i], 2) == i);

    auto w = GroupId::from_string("10").window();
    CHECK(w.level == 2);
    CHECK(w.index == 2);
}

TEST_CASE("neighbor set for the worked two-level example") {
    GroupId s = GroupId::from_string("10");
    auto n = neighbor_groups(s, 2);
    CHECK(strings(n) == std::set<std::string>{"10", "1", "", "01", "0", "11"});

    auto pred = predecessor_subset(s, 2);
    CHECK(strings(pred) == std::set<std::string>{"", "0", "01", "1", "10"});
}

TEST_CASE("neighbor sets equal the interval-adjacency oracle") {
    for (uint32_t d = 0; d <= 4; ++d)
        for (const GroupId& s : all_groups_lex(d))
            CHECK(strings(neighbor_groups(s, d)) == neighbor_oracle(s, d));
}

TEST_CASE("predecessor subsets are bounded by 3(d+1)") {
    for (uint32_t d = 0; d <= 6; ++d)
        for (const GroupId& s : all_groups_lex(d))
            CHECK(predecessor_subset(s, d).size() <= 3 * (d + 1));
}

TEST_CASE("group rank matches list position at depth 5") {
    auto g = all_groups_lex(5);
    for (size_t i = 0; i < g.size(); ++i) CHECK(group_lex_rank(g[i], 5) == i);
}
