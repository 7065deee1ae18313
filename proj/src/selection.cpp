#include "sattn/selection.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace sattn {

namespace {

struct ScoreRow {
  int layer;
  std::string dimension;
  double baseline, replace, skip;
};

ScoreTable table_from_rows(const std::vector<ScoreRow>& rows) {
  ScoreTable table;
  for (const ScoreRow& r : rows) {
    if (std::find(table.layers.begin(), table.layers.end(), r.layer) == table.layers.end()) {
      table.layers.push_back(r.layer);
    }
    if (std::find(table.dimensions.begin(), table.dimensions.end(), r.dimension) ==
        table.dimensions.end()) {
      table.dimensions.push_back(r.dimension);
    }
  }
  std::sort(table.layers.begin(), table.layers.end());
  const std::size_t nl = table.layers.size(), nd = table.dimensions.size();
  table.baseline.assign(nd, std::nan(""));
  table.replaced.assign(nl, std::vector<double>(nd, std::nan("")));
  table.skipped.assign(nl, std::vector<double>(nd, std::nan("")));
  for (const ScoreRow& r : rows) {
    const std::size_t li = static_cast<std::size_t>(
        std::find(table.layers.begin(), table.layers.end(), r.layer) - table.layers.begin());
    const std::size_t di = table.dim_index(r.dimension);
    if (!std::isnan(table.baseline[di]) && table.baseline[di] != r.baseline) {
      throw std::invalid_argument("score table: dimension '" + r.dimension +
                                  "' has inconsistent baseline values");
    }
    if (!std::isnan(table.replaced[li][di])) {
      throw std::invalid_argument("score table: duplicate cell for layer " +
                                  std::to_string(r.layer) + ", dimension '" + r.dimension + "'");
    }
    table.baseline[di] = r.baseline;
    table.replaced[li][di] = r.replace;
    table.skipped[li][di] = r.skip;
  }
  table.validate();
  return table;
}

}  // namespace

std::size_t ScoreTable::dim_index(const std::string& name) const {
  const auto it = std::find(dimensions.begin(), dimensions.end(), name);
  if (it == dimensions.end()) throw std::invalid_argument("score table: unknown dimension");
  return static_cast<std::size_t>(it - dimensions.begin());
}

void ScoreTable::validate() const {
  if (layers.empty() || dimensions.empty()) {
    throw std::invalid_argument("score table: needs at least one layer and one dimension");
  }
  if (baseline.size() != dimensions.size() || replaced.size() != layers.size() ||
      skipped.size() != layers.size()) {
    throw std::invalid_argument("score table: inconsistent extents");
  }
  for (double b : baseline) {
    if (!std::isfinite(b)) throw std::invalid_argument("score table: missing baseline cell");
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (replaced[l].size() != dimensions.size() || skipped[l].size() != dimensions.size()) {
      throw std::invalid_argument("score table: inconsistent row width");
    }
    for (std::size_t d = 0; d < dimensions.size(); ++d) {
      if (!std::isfinite(replaced[l][d]) || !std::isfinite(skipped[l][d])) {
        throw std::invalid_argument("score table: missing cell for layer " +
                                    std::to_string(layers[l]) + ", dimension '" + dimensions[d] +
                                    "'");
      }
    }
  }
}

ScoreTable ScoreTable::from_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::invalid_argument("score csv: empty input");
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(item);
    return out;
  };
  const std::vector<std::string> header = split(line);
  const std::vector<std::string> expected = {"layer", "dimension", "baseline", "replace", "skip"};
  if (header != expected) {
    throw std::invalid_argument("score csv: header must be layer,dimension,baseline,replace,skip");
  }
  std::vector<ScoreRow> rows;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split(line);
    if (fields.size() != 5) {
      throw std::invalid_argument("score csv: line " + std::to_string(line_no) +
                                  " has " + std::to_string(fields.size()) + " fields, want 5");
    }
    try {
      rows.push_back({std::stoi(fields[0]), fields[1], std::stod(fields[2]), std::stod(fields[3]),
                      std::stod(fields[4])});
    } catch (const std::exception&) {
      throw std::invalid_argument("score csv: unparsable number on line " +
                                  std::to_string(line_no));
    }
  }
  return table_from_rows(rows);
}

ScoreTable ScoreTable::from_json_text(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  if (!j.is_array()) {
    throw std::invalid_argument("score json: expected an array of row objects");
  }
  std::vector<ScoreRow> rows;
  for (const auto& item : j) {
    for (const char* key : {"layer", "dimension", "baseline", "replace", "skip"}) {
      if (!item.contains(key)) {
        throw std::invalid_argument("score json: row missing field '" + std::string(key) + "'");
      }
    }
    rows.push_back({item.at("layer").get<int>(), item.at("dimension").get<std::string>(),
                    item.at("baseline").get<double>(), item.at("replace").get<double>(),
                    item.at("skip").get<double>()});
  }
  return table_from_rows(rows);
}

ArrMatrix attention_recovery(const ScoreTable& table, double epsilon_denom) {
  table.validate();
  ArrMatrix arr;
  arr.cells.assign(table.layers.size(), std::vector<ArrCell>(table.dimensions.size()));
  for (std::size_t l = 0; l < table.layers.size(); ++l) {
    for (std::size_t d = 0; d < table.dimensions.size(); ++d) {
      const double denom = table.baseline[d] - table.skipped[l][d];
      if (std::abs(denom) < epsilon_denom) continue;  // undefined: skip cost nothing here
      arr.cells[l][d].value = (table.replaced[l][d] - table.skipped[l][d]) / denom;
      arr.cells[l][d].defined = true;
    }
  }
  return arr;
}

DimClasses classify_dims(const ArrMatrix& arr, double threshold_hr) {
  if (threshold_hr <= 0.0 || threshold_hr >= 1.0) {
    throw std::invalid_argument("classify_dims: threshold must lie in (0,1)");
  }
  DimClasses out;
  if (arr.cells.empty()) return out;
  const std::size_t nd = arr.cells.front().size();
  for (std::size_t d = 0; d < nd; ++d) {
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& row : arr.cells) {
      if (!row[d].defined) continue;
      sum += row[d].value;
      ++count;
    }
    if (count == 0) {
      out.unclassifiable.push_back(d);
    } else if (sum / static_cast<double>(count) >= threshold_hr) {
      out.recoverable.push_back(d);
    } else {
      out.sensitive.push_back(d);
    }
  }
  return out;
}

std::vector<double> protection_scores(const ScoreTable& table, const DimClasses& dims,
                                      double beta, std::ostream* warnings) {
  if (beta < 0.0) throw std::invalid_argument("protection_scores: beta must be >= 0");
  if (dims.sensitive.empty() && warnings != nullptr) {
    *warnings << "warning: no sensitive dimensions; the sensitive term is 0 for every layer\n";
  }
  auto mean_degradation = [&table](std::size_t layer, const std::vector<std::size_t>& group) {
    if (group.empty()) return 0.0;
    double sum = 0.0;
    for (std::size_t d : group) sum += table.baseline[d] - table.replaced[layer][d];
    return sum / static_cast<double>(group.size());
  };
  std::vector<double> p(table.layers.size());
  for (std::size_t l = 0; l < table.layers.size(); ++l) {
    const double hs = mean_degradation(l, dims.sensitive);
    const double hr = mean_degradation(l, dims.recoverable);
    p[l] = hs + beta * std::max(hr, 0.0);
  }
  return p;
}

std::vector<int> select_smallest(const std::vector<double>& protection,
                                 const std::vector<int>& layer_ids, std::size_t budget,
                                 std::vector<std::string>* tiebreak_log) {
  if (protection.size() != layer_ids.size()) {
    throw std::invalid_argument("select: score and id counts differ");
  }
  if (budget > layer_ids.size()) {
    throw std::invalid_argument("select: budget exceeds the number of layers");
  }
  std::vector<std::size_t> order(layer_ids.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (protection[a] != protection[b]) return protection[a] < protection[b];
    return layer_ids[a] < layer_ids[b];
  });
  if (tiebreak_log != nullptr && budget > 0 && budget < order.size()) {
    const double cut = protection[order[budget - 1]];
    if (protection[order[budget]] == cut) {
      std::string entry = "tie at p=" + std::to_string(cut) + ": kept layer " +
                          std::to_string(layer_ids[order[budget - 1]]) + ", dropped layer " +
                          std::to_string(layer_ids[order[budget]]) + " (smaller id wins)";
      tiebreak_log->push_back(std::move(entry));
    }
  }
  std::vector<int> selected;
  selected.reserve(budget);
  for (std::size_t i = 0; i < budget; ++i) selected.push_back(layer_ids[order[i]]);
  std::sort(selected.begin(), selected.end());
  return selected;
}

SelectionResult select_layers(const ScoreTable& table, std::size_t budget, double beta,
                              double threshold_hr, std::ostream* warnings) {
  SelectionResult result;
  result.arr = attention_recovery(table);
  result.dims = classify_dims(result.arr, threshold_hr);
  result.protection = protection_scores(table, result.dims, beta, warnings);
  result.replaced = select_smallest(result.protection, table.layers, budget,
                                    &result.tiebreak_log);
  return result;
}

std::string selection_to_json(const ScoreTable& table, const SelectionResult& result,
                              std::size_t budget, double beta, double threshold_hr) {
  nlohmann::json j;
  j["dimensions"] = table.dimensions;
  j["layers"] = table.layers;
  nlohmann::json arr = nlohmann::json::array();
  nlohmann::json dropped = nlohmann::json::array();
  for (std::size_t l = 0; l < table.layers.size(); ++l) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t d = 0; d < table.dimensions.size(); ++d) {
      const ArrCell& cell = result.arr.cells[l][d];
      if (cell.defined) {
        row.push_back(cell.value);
      } else {
        row.push_back(nullptr);
        dropped.push_back({{"layer", table.layers[l]}, {"dimension", table.dimensions[d]}});
      }
    }
    arr.push_back(std::move(row));
  }
  j["recovery"] = std::move(arr);
  j["dropped_cells"] = std::move(dropped);
  auto dim_names = [&table](const std::vector<std::size_t>& idx) {
    std::vector<std::string> names;
    for (std::size_t d : idx) names.push_back(table.dimensions[d]);
    return names;
  };
  j["recoverable_dimensions"] = dim_names(result.dims.recoverable);
  j["sensitive_dimensions"] = dim_names(result.dims.sensitive);
  j["unclassifiable_dimensions"] = dim_names(result.dims.unclassifiable);
  j["protection_scores"] = result.protection;
  j["replaced_layers"] = result.replaced;
  j["tiebreak_log"] = result.tiebreak_log;
  j["budget"] = budget;
  j["beta"] = beta;
  j["threshold_hr"] = threshold_hr;
  return j.dump(2) + "\n";
}

}  // namespace sattn
