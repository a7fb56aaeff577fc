#include "cfbench/cluster.hpp"
#include "cfbench/errors.hpp"

namespace cfbench {

nlohmann::json to_json(const ClusterModel& model) {
  nlohmann::json j;
  j["format"] = "cfbench-cluster-model";
  j["version"] = 1;
  j["scale"] = model.scale;
  j["items"] = model.items;
  j["class_prior"] = std::vector<double>(model.class_prior.data(),
                                         model.class_prior.data() + model.class_prior.size());
  auto& cond = j["cond"] = nlohmann::json::array();
  for (const auto& m : model.cond) {
    nlohmann::json rows = nlohmann::json::array();
    for (int r = 0; r < m.rows(); ++r) {
      std::vector<double> row(m.cols());
      for (int s = 0; s < m.cols(); ++s) row[s] = m(r, s);
      rows.push_back(std::move(row));
    }
    cond.push_back(std::move(rows));
  }
  return j;
}

ClusterModel cluster_model_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "cfbench-cluster-model" || j.value("version", 0) != 1)
    throw ParseError("not a version-1 cluster model document", 0);
  ClusterModel model;
  model.scale = j.at("scale").get<VoteScale>();
  model.items = j.at("items").get<std::vector<std::string>>();
  const auto prior = j.at("class_prior").get<std::vector<double>>();
  model.class_prior = Eigen::Map<const Eigen::VectorXd>(prior.data(), prior.size());
  const int r = model.scale.num_states();
  for (const auto& rows : j.at("cond")) {
    if (static_cast<int>(rows.size()) != model.num_items())
      throw ParseError("cluster model: conditional table has the wrong item count", 0);
    Eigen::MatrixXd m(model.num_items(), r);
    for (int i = 0; i < model.num_items(); ++i) {
      const auto row = rows[i].get<std::vector<double>>();
      if (static_cast<int>(row.size()) != r)
        throw ParseError("cluster model: conditional row has the wrong state count", 0);
      for (int s = 0; s < r; ++s) m(i, s) = row[s];
    }
    model.cond.push_back(std::move(m));
  }
  if (static_cast<int>(model.cond.size()) != model.num_classes())
    throw ParseError("cluster model: one conditional table per class required", 0);
  return model;
}

}  // namespace cfbench
