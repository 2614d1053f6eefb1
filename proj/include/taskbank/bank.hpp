#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "taskbank/rl.hpp"

namespace taskbank {

struct MergeRecord {
  std::string student_id;
  std::vector<std::string> parent_ids;
  double similarity = 0.0;  // symmetrized delta at merge time
  double final_loss = 0.0;
  std::vector<std::string> inherited_experiences;  // Experience::key()
  std::vector<std::string> grouped_tasks;
  int iteration = 0;
};

nlohmann::json to_json(const MergeRecord& r);
MergeRecord merge_record_from_json(const nlohmann::json& j);

struct PolicyBank {
  std::vector<rl::Policy> policies;
  // Tasks grouped with a policy (not counting the tasks it was trained on).
  std::map<std::string, std::set<std::string>> groups;
  long w_steps = 0;
  int iteration = 0;
  int next_merge_id = 0;
  std::vector<MergeRecord> merges;

  std::size_t size() const { return policies.size(); }
  const rl::Policy* find(const std::string& policy_id) const;
  // Every task the bank covers, training tasks and grouped tasks alike.
  std::multiset<std::string> covered_tasks() const;
  std::multiset<std::string> grouped_tasks() const;
  std::multiset<std::string> experience_keys() const;
};

}  // namespace taskbank
