#ifndef BINOC_GROUPS_HPP
#define BINOC_GROUPS_HPP

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "binoc/common.hpp"

namespace binoc {

// A temporal node group named by a binary string: the empty string is the
// root window, appending 0/1 selects the left/right half. Stored as
// (length, bits) with the first character in the most significant position.
struct GroupId {
    uint32_t length = 0;
    uint64_t bits = 0;  // value of the string read as a binary number

    static GroupId root() { return {}; }

    static GroupId from_string(const std::string& s) {
        GroupId g;
        for (char c : s) {
            BINOC_CHECK(c == '0' || c == '1', "group string must be binary");
            g.bits = (g.bits << 1) | static_cast<uint64_t>(c - '0');
            ++g.length;
        }
        return g;
    }

    static GroupId from_window(const DyadicInterval& w) { return {w.level, w.index}; }

    std::string str() const {
        std::string s(length, '0');
        for (uint32_t i = 0; i < length; ++i)
            if ((bits >> (length - 1 - i)) & 1) s[i] = '1';
        return s;
    }

    DyadicInterval window() const { return {length, bits}; }

    bool empty() const { return length == 0; }
    GroupId child(int b) const { return {length + 1, (bits << 1) | static_cast<uint64_t>(b)}; }
    GroupId parent() const {
        BINOC_CHECK(length > 0, "root group has no parent");
        return {length - 1, bits >> 1};
    }

    bool operator==(const GroupId& o) const { return length == o.length && bits == o.bits; }

    // Lexicographic string order ("" < "0" < "00" < "01" < "1").
    bool operator<(const GroupId& o) const {
        uint32_t n = std::min(length, o.length);
        uint64_t a = n < length ? bits >> (length - n) : bits;
        uint64_t b = n < o.length ? o.bits >> (o.length - n) : o.bits;
        if (a != b) return a < b;
        return length < o.length;  // a proper prefix sorts first
    }
    bool operator<=(const GroupId& o) const { return *this == o || *this < o; }
};

// Fixed-length binary increment; no neighbor past the sequence boundary.
inline std::optional<GroupId> group_increment(const GroupId& s, int delta) {
    if (delta == 0) return s;
    BINOC_CHECK(!s.empty(), "group_increment needs a non-empty group");
    if (delta < 0) {
        if (s.bits == 0) return std::nullopt;
        return GroupId{s.length, s.bits - 1};
    }
    uint64_t top = (s.length >= 64) ? ~0ull : ((1ull << s.length) - 1);
    if (s.bits == top) return std::nullopt;
    return GroupId{s.length, s.bits + 1};
}

inline void append_ancestors(const GroupId& s, std::set<GroupId>& out) {
    GroupId g = s;
    while (!g.empty()) {
        g = g.parent();
        out.insert(g);
    }
}

inline void append_descendants(const GroupId& s, uint32_t d, std::set<GroupId>& out) {
    if (s.length >= d) return;
    for (int b = 0; b < 2; ++b) {
        GroupId c = s.child(b);
        out.insert(c);
        append_descendants(c, d, out);
    }
}

// Children reached by appending only 1's (right) or only 0's (left).
inline void append_branch(const GroupId& s, uint32_t d, int bit, std::set<GroupId>& out) {
    GroupId g = s;
    while (g.length < d) {
        g = g.child(bit);
        out.insert(g);
    }
}

// All groups whose windows overlap or touch the window of s, built from the
// closed-form decomposition into s's own tree line and the two side columns.
inline std::set<GroupId> neighbor_groups(const GroupId& s, uint32_t d) {
    BINOC_CHECK(s.length <= d, "group longer than temporal depth");
    std::set<GroupId> n;
    n.insert(s);
    append_descendants(s, d, n);
    append_ancestors(s, n);
    if (s.empty()) return n;  // the root window has no side neighbors
    if (auto prev = group_increment(s, -1)) {
        n.insert(*prev);
        append_branch(*prev, d, 1, n);
        append_ancestors(*prev, n);
    }
    if (auto next = group_increment(s, +1)) {
        n.insert(*next);
        append_branch(*next, d, 0, n);
        append_ancestors(*next, n);
    }
    return n;
}

// The subset of neighbors already visited under lexicographic traversal.
inline std::set<GroupId> predecessor_subset(const GroupId& s, uint32_t d) {
    std::set<GroupId> out;
    for (const GroupId& r : neighbor_groups(s, d))
        if (r <= s) out.insert(r);
    return out;
}

// All binary strings of length <= d in lexicographic order.
inline std::vector<GroupId> all_groups_lex(uint32_t d) {
    std::vector<GroupId> out;
    out.reserve((size_t(1) << (d + 1)) - 1);
    std::function<void(GroupId)> walk = [&](GroupId g) {
        out.push_back(g);
        if (g.length < d)
            for (int b = 0; b < 2; ++b) walk(g.child(b));
    };
    walk(GroupId::root());
    return out;
}

// Rank of s in all_groups_lex(d), computable without materializing the list:
// lexicographic order is preorder of the binary trie.
inline uint64_t group_lex_rank(const GroupId& s, uint32_t d) {
    BINOC_CHECK(s.length <= d, "group longer than temporal depth");
    auto subtree = [d](uint32_t len) -> uint64_t {
        uint32_t extra = d - len;
        return (uint64_t(1) << (extra + 1)) - 1;
    };
    uint64_t rank = 0;
    for (uint32_t i = 0; i < s.length; ++i) {
        rank += 1;
        if ((s.bits >> (s.length - 1 - i)) & 1) rank += subtree(i + 1);
    }
    return rank;
}

}  // namespace binoc

#endif
