#include "cfbench/bayesnet.hpp"
#include "cfbench/errors.hpp"

namespace cfbench {

namespace {

nlohmann::json vector_json(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd vector_from(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

nlohmann::json to_json(const BayesNetModel& model) {
  nlohmann::json j;
  j["format"] = "cfbench-bayesnet-model";
  j["version"] = 1;
  j["scale"] = model.scale;
  j["items"] = model.items;
  auto& trees = j["trees"] = nlohmann::json::array();
  for (const auto& cpd : model.cpds) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : cpd.nodes()) {
      nlohmann::json node;
      node["split"] = n.is_leaf() ? nlohmann::json(nullptr) : nlohmann::json(n.split);
      node["children"] = n.children;
      node["counts"] = vector_json(n.counts);
      node["prior"] = vector_json(n.prior);
      node["probs"] = vector_json(n.probs);
      nodes.push_back(std::move(node));
    }
    trees.push_back({{"target", cpd.target()}, {"nodes", std::move(nodes)}});
  }
  return j;
}

BayesNetModel bayes_net_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "cfbench-bayesnet-model" || j.value("version", 0) != 1)
    throw ParseError("not a version-1 bayes net model document", 0);
  BayesNetModel model;
  model.scale = j.at("scale").get<VoteScale>();
  model.items = j.at("items").get<std::vector<std::string>>();
  const auto& trees = j.at("trees");
  if (static_cast<int>(trees.size()) != model.num_items())
    throw ParseError("bayes net model: one tree per item required", 0);
  try {
    for (int t = 0; t < model.num_items(); ++t) {
      const auto& tree = trees[t];
      if (tree.at("target").get<int>() != t)
        throw ParseError("bayes net model: trees must be listed in item order", 0);
      std::vector<DecisionTreeCPD::Node> nodes;
      for (const auto& jn : tree.at("nodes")) {
        DecisionTreeCPD::Node n;
        if (!jn.at("split").is_null()) {
          n.split = jn.at("split").get<int>();
          if (n.split < 0 || n.split >= model.num_items())
            throw ParseError("bayes net model: split item out of range", 0);
        }
        n.children = jn.at("children").get<std::vector<int>>();
        n.counts = vector_from(jn.at("counts"));
        n.prior = vector_from(jn.at("prior"));
        n.probs = vector_from(jn.at("probs"));
        if (n.counts.size() != model.num_states())
          throw ParseError("bayes net model: node has the wrong state count", 0);
        nodes.push_back(std::move(n));
      }
      for (int i = 0; i < static_cast<int>(nodes.size()); ++i)
        for (int c : nodes[i].children)
          if (c >= 0 && c < static_cast<int>(nodes.size())) nodes[c].parent = i;
      model.cpds.push_back(DecisionTreeCPD::from_nodes(t, std::move(nodes)));
    }
  } catch (const DomainError& e) {
    throw ParseError(std::string("bayes net model: ") + e.what(), 0);
  }
  if (!model.is_acyclic()) throw ParseError("bayes net model: parent graph has a cycle", 0);
  return model;
}

}  // namespace cfbench
