#include <iomanip>
#include <sstream>

#include "narrative/corpus.hpp"
#include "pipeline_internal.hpp"

namespace narrative::pipeline {

namespace {

std::string fixed(double v, int digits = 2) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

std::string pm(const json& ms, double scale = 1.0, int digits = 2) {
  return fixed(ms.at("mean").get<double>() * scale, digits) + " ± " + fixed(ms.at("std").get<double>() * scale, digits);
}

// Published numbers shown beside the local results.
json reference_values() {
  return json::parse(R"({
  "relation_f1": {
    "Majority": {"Temporal": 0.00, "Causal": 0.00, "None": 0.83, "All": 0.27},
    "Random": {"Temporal": 0.23, "Causal": 0.18, "None": 0.45, "All": 0.28},
    "LR": {"Temporal": 0.32, "Causal": 0.22, "None": 0.51, "All": 0.35},
    "Model": {"Temporal": 0.59, "Causal": 0.42, "None": 0.78, "All": 0.60}
  },
  "relation_cv": {"accuracy": [64.86, 0.38], "precision": [57.51, 0.37], "recall": [64.86, 0.38], "macro_f1": [59.49, 0.45]},
  "chains_per_article": 54,
  "best_k": {"immigration": 150, "gun_control": 50},
  "intrusion": {
    "immigration": {"alpha": 82.61, "accuracy": 67.5},
    "gun_control": {"alpha": 65.89, "accuracy": 37.5}
  },
  "neural": {
    "immigration": {"k": 150, "embedding_only": {"accuracy": 0.65, "f1": 0.66}, "fusion": {"accuracy": 0.67, "f1": 0.67}},
    "gun_control": {"k": 50, "embedding_only": {"accuracy": 0.65, "f1": 0.65}, "fusion": {"accuracy": 0.68, "f1": 0.66}}
  }
})");
}

class Report {
 public:
  explicit Report(const StageContext& ctx) : ctx_(ctx) {}

  bool have(const std::string& stage) const { return ctx_.available.count(stage) > 0; }
  json load(const std::string& stage, const std::string& file) const { return read_json(ctx_.input(stage, file)); }

  void section(const std::string& title) { md_ << "\n## " << title << "\n\n"; }
  void not_run(const std::string& stage, const std::string& key) {
    md_ << "not run (`narrative " << stage << "` has no current outputs)\n";
    json_[key] = "not run";
  }

  std::ostringstream& md() { return md_; }
  json& data() { return json_; }

 private:
  const StageContext& ctx_;
  std::ostringstream md_;
  json json_ = json::object();
};

void corpus_section(Report& r) {
  r.section("Corpus");
  if (!r.have("ingest")) return r.not_run("ingest", "corpus");
  const auto summary = r.load("ingest", "summary.json");
  json out = {{"documents", summary["documents"]}, {"per_split", summary["per_split"]}, {"per_label", summary["per_label"]}};
  r.md() << "| documents | train | test | labeled frames |\n|---|---|---|---|\n"
         << "| " << summary["documents"] << " | " << summary["per_split"].value("train", 0) << " | "
         << summary["per_split"].value("test", 0) << " | " << summary["labels"].size() << " |\n";
  if (r.have("build-chains")) {
    const auto chains = r.load("build-chains", "summary.json");
    out["chains"] = chains["chains"];
    out["chains_per_article"] = chains["chains_per_article"];
    r.md() << "\nChains per article: " << fixed(chains["chains_per_article"].get<double>())
           << " (reference: about " << reference_values()["chains_per_article"] << ").\n";
  }
  r.data()["corpus"] = out;
}

void relation_section(Report& r) {
  r.section("Relation classification (cross-validated)");
  if (!r.have("evaluate")) return r.not_run("evaluate", "relation");
  const auto cv = r.load("evaluate", "relation_cv.json");
  const auto ref = reference_values();
  const std::vector<std::pair<std::string, std::string>> rows{
      {"majority", "Majority"}, {"random", "Random"}, {"static_lr", "LR"}, {"model", "Model"}};
  const std::vector<std::string> classes{"Temporal", "Causal", "None"};

  json out = json::object();
  r.md() << "F1 per class, mean over folds.\n\n"
         << "| method | Temporal | Causal | None | All | reference Temporal | Causal | None | All |\n"
         << "|---|---|---|---|---|---|---|---|---|\n";
  for (const auto& [key, label] : rows) {
    const auto& refs = ref["relation_f1"][label];
    r.md() << "| " << label << " | ";
    if (cv[key].is_null()) {
      r.md() << "not run | | | | ";
      out[key] = "not run";
    } else {
      json local = json::object();
      for (const auto& c : classes) {
        double sum = 0.0;
        for (const auto& fold : cv[key]["folds"]) sum += fold["metrics"]["per_class"][c]["f1"].get<double>();
        local[c] = sum / static_cast<double>(cv[key]["folds"].size());
        r.md() << fixed(local[c].get<double>()) << " | ";
      }
      local["All"] = cv[key]["macro_f1"]["mean"];
      r.md() << fixed(local["All"].get<double>()) << " | ";
      out[key] = local;
    }
    for (const auto& c : {"Temporal", "Causal", "None", "All"}) r.md() << fixed(refs[c].get<double>()) << " | ";
    r.md() << "\n";
  }

  r.md() << "\nRelation head, percent, mean ± std over folds.\n\n"
         << "| | accuracy | precision | recall | macro-F1 |\n|---|---|---|---|---|\n";
  const auto& model = cv["model"];
  r.md() << "| local | " << pm(model["accuracy"], 100) << " | " << pm(model["weighted_precision"], 100) << " | "
         << pm(model["weighted_recall"], 100) << " | " << pm(model["macro_f1"], 100) << " |\n";
  const auto& rc = ref["relation_cv"];
  r.md() << "| reference";
  for (const auto& m : {"accuracy", "precision", "recall", "macro_f1"})
    r.md() << " | " << fixed(rc[m][0].get<double>()) << " ± " << fixed(rc[m][1].get<double>());
  r.md() << " |\n";
  out["model_cv"] = {{"accuracy", model["accuracy"]},
                     {"weighted_precision", model["weighted_precision"]},
                     {"weighted_recall", model["weighted_recall"]},
                     {"macro_f1", model["macro_f1"]}};
  out["reference"] = ref["relation_f1"];
  r.data()["relation"] = out;
}

std::string cell(const json& entry) {
  if (entry.is_null()) return "not run";
  if (entry.contains("error")) return "failed";
  return fixed(entry["macro_f1"].get<double>(), 3);
}

void frame_section(Report& r, const std::vector<int>& ks, const std::string& method) {
  r.section("Frame prediction across k (macro-F1 on the test split)");
  if (!r.have("train-frame-lr") && !r.have("baselines"))
    r.md() << "not run (`narrative train-frame-lr` and `narrative baselines` have no current outputs)\n\n";
  const json lr = r.have("train-frame-lr") ? r.load("train-frame-lr", "results.json") : json();
  const json base = r.have("baselines") ? r.load("baselines", "results.json") : json();
  auto lookup = [](const json& root, const std::vector<std::string>& path) {
    const json* node = &root;
    for (const auto& p : path) {
      if (!node->is_object() || !node->contains(p)) return json();
      node = &(*node)[p];
    }
    return *node;
  };

  const std::string cluster_col = method == "template" ? "template_lr" : "cluster_lr (" + method + ")";
  r.md() << "| k | " << cluster_col << " |" << (method == "template" ? "" : " template_lr |")
         << " lda_lr | event_type_lr |\n|---|---|" << (method == "template" ? "" : "---|") << "---|---|\n";
  json rows = json::array();
  for (int k : ks) {
    const auto key = std::to_string(k);
    const json cluster = lookup(lr, {"methods", method, "k", key});
    const json templ = lookup(lr, {"methods", "template", "k", key});
    const json lda = lookup(base, {"lda_lr", key});
    const json event = lookup(base, {"event_type_lr", key});
    r.md() << "| " << k << " | " << cell(cluster) << " | ";
    if (method != "template") r.md() << cell(templ) << " | ";
    r.md() << cell(lda) << " | " << cell(event) << " |\n";
    rows.push_back({{"k", k},
                    {"cluster_lr", cell(cluster)},
                    {"template_lr", cell(templ)},
                    {"lda_lr", cell(lda)},
                    {"event_type_lr", cell(event)}});
  }
  const json random = lookup(base, {"random"});
  r.md() << "\nRandom baseline: " << cell(random) << ".\n";
  const json best = lookup(lr, {"methods", method, "best_k"});
  r.md() << "Best k locally: " << (best.is_null() ? std::string("n/a") : best.dump())
         << " (reference: 150 for immigration, 50 for gun control).\n";
  r.data()["frames"] = {{"method", method}, {"ks", ks}, {"rows", rows}, {"random", cell(random)}, {"best_k", best},
                        {"reference_best_k", reference_values()["best_k"]}};
}

void neural_section(Report& r) {
  r.section("Neural fusion head");
  if (!r.have("train-frame-neural")) return r.not_run("train-frame-neural", "neural");
  const auto fusion = r.load("train-frame-neural", "fusion.json");
  const auto text = r.load("train-frame-neural", "embedding_only.json");
  const auto summary = r.load("train-frame-neural", "summary.json");
  const auto ref = reference_values()["neural"];
  r.md() << "Local k = " << summary["k"] << ", mean ± std over " << fusion["runs"].size() << " seeds.\n\n"
         << "| | accuracy | macro-F1 | reference immigration acc / F1 | reference gun control acc / F1 |\n"
         << "|---|---|---|---|---|\n";
  r.md() << "| embedding only | " << pm(text["accuracy"]) << " | " << pm(text["macro_f1"]) << " | "
         << fixed(ref["immigration"]["embedding_only"]["accuracy"].get<double>()) << " / "
         << fixed(ref["immigration"]["embedding_only"]["f1"].get<double>()) << " | "
         << fixed(ref["gun_control"]["embedding_only"]["accuracy"].get<double>()) << " / "
         << fixed(ref["gun_control"]["embedding_only"]["f1"].get<double>()) << " |\n";
  r.md() << "| + clusters | " << pm(fusion["accuracy"]) << " | " << pm(fusion["macro_f1"]) << " | "
         << fixed(ref["immigration"]["fusion"]["accuracy"].get<double>()) << " / "
         << fixed(ref["immigration"]["fusion"]["f1"].get<double>()) << " | "
         << fixed(ref["gun_control"]["fusion"]["accuracy"].get<double>()) << " / "
         << fixed(ref["gun_control"]["fusion"]["f1"].get<double>()) << " |\n";
  r.data()["neural"] = {{"k", summary["k"]},
                        {"fusion", {{"accuracy", fusion["accuracy"]}, {"macro_f1", fusion["macro_f1"]}}},
                        {"embedding_only", {{"accuracy", text["accuracy"]}, {"macro_f1", text["macro_f1"]}}},
                        {"reference", ref}};
}

void intrusion_section(Report& r) {
  r.section("Intrusion test");
  const auto ref = reference_values()["intrusion"];
  json local;
  if (r.have("intrusion-score")) {
    const auto score = r.load("intrusion-score", "score.json");
    local = {{"alpha", score["alpha"]}, {"accuracy", score["accuracy"]}, {"items", score["items"]}};
  }
  r.md() << "| | Krippendorff alpha | accuracy (%) |\n|---|---|---|\n";
  if (local.is_null())
    r.md() << "| local | not run | not run |\n";
  else
    r.md() << "| local (" << local["items"] << " items) | " << fixed(local["alpha"].get<double>()) << " | "
           << fixed(local["accuracy"].get<double>(), 1) << " |\n";
  r.md() << "| reference immigration | " << fixed(ref["immigration"]["alpha"].get<double>()) << " | "
         << fixed(ref["immigration"]["accuracy"].get<double>(), 1) << " |\n"
         << "| reference gun control | " << fixed(ref["gun_control"]["alpha"].get<double>()) << " | "
         << fixed(ref["gun_control"]["accuracy"].get<double>(), 1) << " |\n";
  r.data()["intrusion"] = {{"local", local.is_null() ? json("not run") : local}, {"reference", ref}};
}

void mi_section(Report& r) {
  r.section("Clusters most informative of each frame");
  if (!r.have("mi-report")) return r.not_run("mi-report", "mi");
  const auto table = r.load("mi-report", "table.json");
  r.md() << "k = " << table["k"] << "; MI in nats over binary cluster presence.\n\n"
         << "| frame | top cluster | MI |\n|---|---|---|\n";
  json out = json::object();
  for (auto it = table["top"].begin(); it != table["top"].end(); ++it) {
    if (it.value().empty()) continue;
    const auto& first = it.value().front();
    r.md() << "| " << it.key() << " | " << first["cluster"] << " | " << fixed(first["mi"].get<double>(), 4) << " |\n";
    out[it.key()] = first;
  }
  r.data()["mi"] = {{"k", table["k"]}, {"top", out}};
}

}  // namespace

void run_report(StageContext& ctx) {
  Report r(ctx);
  const auto ks = ctx.config.get("clustering.ks").get<std::vector<int>>();
  const auto method = ctx.config.get("expansion.method").get<std::string>();
  r.md() << "# Narrative framing report\n\n"
         << "Numbers come from the stage artifacts next to this report. Columns marked reference hold published "
            "values for comparison; they are not produced by this run.\n";
  corpus_section(r);
  relation_section(r);
  frame_section(r, ks, method);
  neural_section(r);
  intrusion_section(r);
  mi_section(r);
  write_text_atomic(ctx.dir / "report.md", r.md().str());
  write_json(ctx.dir / "report.json", r.data());
  ctx.out << "report: " << ctx.available.size() << " upstream stage(s) with current outputs\n";
}

}  // namespace narrative::pipeline
