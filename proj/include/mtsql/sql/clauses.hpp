#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mtsql/sql/ast.hpp"

namespace mtsql::sql {

// Per-clause canonical forms; two queries exact-set-match iff their
// ClauseSets compare equal.
struct ClauseSets {
  bool distinct = false;
  std::vector<std::string> select;        // sorted multiset
  std::vector<std::string> from_tables;   // sorted multiset
  std::vector<std::string> join_conds;    // sorted set, equality sides ordered
  std::vector<std::string> where;         // sorted set of top-level conjuncts
  std::vector<std::string> group_by;      // sorted set
  std::vector<std::string> having;        // sorted set of top-level conjuncts
  std::string order;                      // direction + ordered keys, "" if absent
  std::string limit;
  std::string set_op;
  std::shared_ptr<ClauseSets> set_rhs;

  bool operator==(const ClauseSets& o) const;
  std::string to_string() const;
};

ClauseSets decompose_clauses(const Query& q);

}  // namespace mtsql::sql
