// Copyright 2026 The adassl Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "adassl/tables.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "adassl/error.hpp"
#include "adassl/version.hpp"

namespace adassl {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) fail(ErrorKind::kIo, "cannot write '" + path.string() + "'");
  os << text;
  if (!os) fail(ErrorKind::kIo, "failed writing '" + path.string() + "'");
}

ExperimentConfig scaled(TableScale scale) {
  ExperimentConfig c;
  if (scale == TableScale::kPaper) {
    c.train.steps = 200000;
    c.train.batch = 2048;
    c.eval.probe_train = 100000;
    c.eval.probe_test = 100000;
  }
  return c;
}

const char* short_regime(NoiseRegime r) {
  switch (r) {
    case NoiseRegime::kZero: return "0";
    case NoiseRegime::kIsotropic: return "1";
    default: return regime_name(r);
  }
}

const char* model_label(Objective o) {
  switch (o) {
    case Objective::kInfoNce: return "InfoNCE";
    case Objective::kAnInfoNce: return "AnInfoNCE";
    case Objective::kHInfoNceAffine: return "H-InfoNCE_Affine";
    case Objective::kHInfoNceMlp: return "H-InfoNCE_MLP";
    case Objective::kByol: return "BYOL";
    case Objective::kAdasslV: return "AdaSSL-V";
    case Objective::kAdasslS: return "AdaSSL-S";
  }
  return "unknown";
}

TableCell cell(TableScale scale, NoiseRegime regime, Objective objective, ModelSpace space,
               bool predictor, const std::string& table_id) {
  ExperimentConfig c = scaled(scale);
  c.dgp.regime = regime;
  c.model.space = space;
  c.model.hinfonce_predictor = predictor;
  c.loss.objective = objective;
  c.loss.base = objective == Objective::kByol ? BaseLoss::kByol : BaseLoss::kInfoNce;
  c = with_objective_defaults(c);
  TableCell t;
  t.group = short_regime(regime);
  t.label = model_label(objective);
  t.space = space_name(space);
  t.id = std::string(regime_name(regime)) + "." + objective_name(objective) + "." + t.space;
  c.name = table_id + "." + t.id;
  t.config = c;
  return t;
}

}  // namespace

const char* table_scale_name(TableScale s) { return s == TableScale::kDesk ? "desk" : "paper"; }

TableScale parse_table_scale(std::string_view name) {
  if (name == "desk") return TableScale::kDesk;
  if (name == "paper") return TableScale::kPaper;
  fail(ErrorKind::kConfig, "unknown table scale '" + std::string(name) + "' (desk | paper)");
}

std::vector<TableCell> table_preset(std::string_view table_id, TableScale scale) {
  std::vector<TableCell> cells;
  const std::string id(table_id);
  if (table_id == "t1") {
    TableCell identity;
    identity.id = "identity";
    identity.group = "-";
    identity.label = "Identity";
    identity.space = "any";
    identity.identity = true;
    identity.config = scaled(scale);
    identity.config.name = id + ".identity";
    cells.push_back(identity);
    // E[z+ | z] = z throughout, so H-InfoNCE needs no mean predictor here.
    const std::vector<std::pair<NoiseRegime, std::vector<Objective>>> rows = {
        {NoiseRegime::kZero, {Objective::kInfoNce}},
        {NoiseRegime::kIsotropic, {Objective::kInfoNce, Objective::kHInfoNceAffine}},
        {NoiseRegime::kAnisotropic,
         {Objective::kInfoNce, Objective::kAnInfoNce, Objective::kHInfoNceAffine}},
        {NoiseRegime::kHeteroscedastic,
         {Objective::kInfoNce, Objective::kAnInfoNce, Objective::kHInfoNceAffine,
          Objective::kHInfoNceMlp}},
    };
    for (const auto& [regime, objectives] : rows) {
      for (Objective o : objectives) {
        for (ModelSpace s : {ModelSpace::kUnbounded, ModelSpace::kHypersphere}) {
          cells.push_back(cell(scale, regime, o, s, false, id));
        }
      }
    }
  } else if (table_id == "t2") {
    for (Objective o : {Objective::kInfoNce, Objective::kAnInfoNce, Objective::kHInfoNceMlp,
                        Objective::kAdasslV, Objective::kAdasslS}) {
      cells.push_back(cell(scale, NoiseRegime::kComplex, o, ModelSpace::kHypersphere,
                           o == Objective::kHInfoNceMlp, id));
    }
  } else {
    fail(ErrorKind::kConfig, "unknown table '" + id + "' (t1 | t2)");
  }
  return cells;
}

TrialSetResult run_identity_trials(const ExperimentConfig& cfg, const std::string& run_dir) {
  validate(cfg);
  TrialSetResult result;
  const fs::path dir(run_dir);
  fs::create_directories(dir);
  write_text(dir / "config.json", to_json(cfg));
  write_text(dir / "VERSION", std::string(kVersionString) + "\n");
  for (std::size_t t = 0; t < cfg.trials.n_seeds; ++t) {
    const fs::path tdir = dir / ("trial_" + std::to_string(t));
    fs::create_directories(tdir);
    EvalReport r = identity_trial(cfg, t);
    write_text(tdir / "identity_report.json", report_json(r));
    result.reports.push_back(std::move(r));
  }
  result.rows = aggregate(result.reports);
  write_text(dir / "results.csv", results_csv(result.rows));
  return result;
}

TableResult run_table(const std::vector<TableCell>& cells, const std::string& run_dir,
                      const CellCallback& on_cell) {
  TableResult out;
  out.cells = cells;
  const fs::path dir(run_dir);
  fs::create_directories(dir);
  for (const auto& c : cells) {
    const std::string cdir = (dir / c.id).string();
    TrialSetResult r = c.identity ? run_identity_trials(c.config, cdir) : run_trials(c.config, cdir);
    out.complete = out.complete && r.complete;
    if (on_cell) on_cell(c, r);
    out.results.push_back(std::move(r));
  }
  write_text(dir / "table.csv", table_csv(out));
  return out;
}

std::string table_csv(const TableResult& result) {
  std::ostringstream os;
  os << "group,model,space,pz_mean,pz_std,wide_mean,wide_std,wide_ood_mean,wide_ood_std,n_seeds\n";
  char buf[64];
  for (std::size_t i = 0; i < result.cells.size() && i < result.results.size(); ++i) {
    const TableCell& c = result.cells[i];
    os << c.group << ',' << c.label << ',' << c.space;
    std::size_t n = 0;
    for (const char* regime : {"pz", "wide", "wide_ood"}) {
      const AggregateRow* row = nullptr;
      for (const auto& r : result.results[i].rows) {
        if (r.regime == regime && r.metric == "r2") row = &r;
      }
      if (row) {
        std::snprintf(buf, sizeof(buf), ",%.10f,%.10f", row->mean, row->std);
        os << buf;
        n = row->n_seeds;
      } else {
        os << ",,";
      }
    }
    os << ',' << n << '\n';
  }
  return os.str();
}

}  // namespace adassl
