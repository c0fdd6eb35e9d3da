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

// Preset experiment grids for the two linear-probe tables: t1 (unimodal
// conditionals, both embedding spaces) and t2 (complex conditional,
// hypersphere only).

#ifndef ADASSL_TABLES_HPP_
#define ADASSL_TABLES_HPP_

#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "adassl/config.hpp"
#include "adassl/train_eval.hpp"

namespace adassl {

enum class TableScale { kDesk, kPaper };

const char* table_scale_name(TableScale s);
TableScale parse_table_scale(std::string_view name);

struct TableCell {
  std::string id;     // directory name, unique within the table
  std::string group;  // noise-regime row group
  std::string label;  // model row label
  std::string space;  // unbounded | hypersphere | any
  ExperimentConfig config;
  bool identity = false;  // probe on raw observations, no training
};

// Throws a config error for an unknown table id.
std::vector<TableCell> table_preset(std::string_view table_id, TableScale scale);

// Probe-only baseline over cfg.trials.n_seeds trials, written like run_trials.
TrialSetResult run_identity_trials(const ExperimentConfig& cfg, const std::string& run_dir);

struct TableResult {
  std::vector<TableCell> cells;
  std::vector<TrialSetResult> results;  // aligned with cells
  bool complete = true;
};

using CellCallback = std::function<void(const TableCell&, const TrialSetResult&)>;

// Runs every cell under run_dir/<cell id>/ and writes run_dir/table.csv.
TableResult run_table(const std::vector<TableCell>& cells, const std::string& run_dir,
                      const CellCallback& on_cell = {});

// One line per cell: group, model, space, then mean and std of the test R²
// for p(z), N(0, 5I) and N(0, 5I)_OOD, and the number of completed seeds.
std::string table_csv(const TableResult& result);

}  // namespace adassl

#endif  // ADASSL_TABLES_HPP_
