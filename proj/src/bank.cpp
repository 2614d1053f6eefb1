#include "taskbank/bank.hpp"

namespace taskbank {

nlohmann::json to_json(const MergeRecord& r) {
  return {{"student_id", r.student_id},
          {"parent_ids", r.parent_ids},
          {"similarity", r.similarity},
          {"final_loss", r.final_loss},
          {"inherited_experiences", r.inherited_experiences},
          {"grouped_tasks", r.grouped_tasks},
          {"iteration", r.iteration}};
}

MergeRecord merge_record_from_json(const nlohmann::json& j) {
  MergeRecord r;
  r.student_id = j.at("student_id").get<std::string>();
  r.parent_ids = j.at("parent_ids").get<std::vector<std::string>>();
  r.similarity = j.at("similarity").get<double>();
  r.final_loss = j.at("final_loss").get<double>();
  r.inherited_experiences =
      j.at("inherited_experiences").get<std::vector<std::string>>();
  r.grouped_tasks = j.at("grouped_tasks").get<std::vector<std::string>>();
  r.iteration = j.value("iteration", 0);
  return r;
}

const rl::Policy* PolicyBank::find(const std::string& policy_id) const {
  for (const auto& p : policies)
    if (p.policy_id == policy_id) return &p;
  return nullptr;
}

std::multiset<std::string> PolicyBank::grouped_tasks() const {
  std::multiset<std::string> out;
  for (const auto& [id, tasks] : groups) out.insert(tasks.begin(), tasks.end());
  return out;
}

std::multiset<std::string> PolicyBank::covered_tasks() const {
  auto out = grouped_tasks();
  for (const auto& p : policies)
    out.insert(p.provenance.trained_task_ids.begin(),
               p.provenance.trained_task_ids.end());
  return out;
}

std::multiset<std::string> PolicyBank::experience_keys() const {
  std::multiset<std::string> out;
  for (const auto& p : policies)
    for (const auto& e : p.training_experiences) out.insert(e.key());
  return out;
}

}  // namespace taskbank
