#include "cnsdiff/trainer.hpp"

#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "cnsdiff/version.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace cnsdiff {

namespace {

json metric_block_json(const MetricBlock& mb, const char* split_name) {
  json j;
  if (split_name) j["split"] = split_name;
  for (std::size_t i = 0; i < mb.ks.size(); ++i) {
    j["recall@" + std::to_string(mb.ks[i])] = mb.recall[i];
    j["ndcg@" + std::to_string(mb.ks[i])] = mb.ndcg[i];
  }
  j["users"] = mb.num_evaluated_users;
  return j;
}

json nan_to_null(double x) {
  if (std::isnan(x)) return nullptr;
  return x;
}

}  // namespace

void write_run_report(const std::string& dir, const RunReport& report) {
  fs::create_directories(dir);

  json epochs = json::array();
  for (const auto& r : report.records) {
    if (!r.evaluated) continue;
    json e = {{"epoch", r.epoch}};
    if (r.has_loss) {
      e["loss"] = {{"total", r.loss.total},
                   {"bpr", r.loss.bpr},
                   {"neg_sampling", r.loss.neg_sampling},
                   {"contrastive", r.loss.contrastive}};
    } else {
      e["loss"] = nullptr;
    }
    e["fhns_ratio"] = nan_to_null(r.fhns);
    e["val"] = metric_block_json(r.val, nullptr);
    epochs.push_back(std::move(e));
  }
  json metrics = {{"version", kVersion},
                  {"config", config_to_json(report.config)},
                  {"best_epoch", report.best_epoch},
                  {"epochs", epochs},
                  {"final", json::array({metric_block_json(report.final_iid, "iid"),
                                         metric_block_json(report.final_ood, "ood")})}};
  {
    std::ofstream out(fs::path(dir) / "metrics.json");
    out << metrics.dump(2) << "\n";
  }
  {
    std::ofstream out(fs::path(dir) / "epochs.csv");
    out << "epoch,total,bpr,neg_sampling,contrastive,recall@10,ndcg@10,recall@20,ndcg@20,"
           "fhns_ratio,seconds\n";
    auto num = [](double x) { return std::isnan(x) ? std::string("nan") : std::to_string(x); };
    for (const auto& r : report.records) {
      out << r.epoch << ',';
      if (r.has_loss) {
        out << r.loss.total << ',' << r.loss.bpr << ',' << r.loss.neg_sampling << ','
            << r.loss.contrastive << ',';
      } else {
        out << "nan,nan,nan,nan,";
      }
      if (r.evaluated) {
        out << r.val.recall[0] << ',' << r.val.ndcg[0] << ',' << r.val.recall[1] << ','
            << r.val.ndcg[1] << ',';
      } else {
        out << "nan,nan,nan,nan,";
      }
      out << num(r.fhns) << ',' << r.seconds << "\n";
    }
  }
  {
    std::ofstream out(fs::path(dir) / "fhns.csv");
    out << "epoch,ratio\n";
    for (const auto& r : report.records) {
      if (r.epoch == 0) continue;
      out << r.epoch << ',' << (std::isnan(r.fhns) ? std::string("nan") : std::to_string(r.fhns))
          << "\n";
    }
  }
}

}  // namespace cnsdiff
