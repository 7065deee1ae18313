#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace sattn {

inline constexpr double kArrEpsilonDenom = 1e-9;
inline constexpr double kDefaultHrThreshold = 0.85;
inline constexpr double kDefaultSelectionBeta = 0.5;

/// Per-layer, per-dimension evaluation scores for three conditions: the
/// untouched model (baseline), one layer replaced by its hybrid module
/// (replace), and that layer's attention output zeroed (skip).
struct ScoreTable {
  std::vector<std::string> dimensions;
  std::vector<int> layers;
  std::vector<double> baseline;               // per dimension
  std::vector<std::vector<double>> replaced;  // [layer][dimension]
  std::vector<std::vector<double>> skipped;   // [layer][dimension]

  /// Rows of {layer, dimension, baseline, replace, skip}; every (layer,
  /// dimension) cell must be present and a dimension's baseline consistent.
  static ScoreTable from_csv(std::istream& is);
  static ScoreTable from_json_text(const std::string& text);

  void validate() const;
  std::size_t dim_index(const std::string& name) const;
};

struct ArrCell {
  double value = 0.0;
  bool defined = false;  // false when |baseline - skip| < epsilon: skipping cost nothing
};

struct ArrMatrix {
  std::vector<std::vector<ArrCell>> cells;  // [layer][dimension]
};

/// Recovery fraction (replace - skip) / (baseline - skip) per cell.
/// Degenerate denominators are flagged undefined, not thrown, and excluded
/// from aggregates.
ArrMatrix attention_recovery(const ScoreTable& table, double epsilon_denom = kArrEpsilonDenom);

struct DimClasses {
  std::vector<std::size_t> recoverable;     // layer-mean recovery >= threshold
  std::vector<std::size_t> sensitive;       // below threshold
  std::vector<std::size_t> unclassifiable;  // no defined cells
};

/// Classifies each dimension by its layer-averaged recovery over defined
/// cells; the threshold is inclusive.
DimClasses classify_dims(const ArrMatrix& arr, double threshold_hr = kDefaultHrThreshold);

/// p = mean sensitive-dimension degradation + beta * max(mean recoverable
/// degradation, 0), degradation being baseline minus replace. An empty
/// sensitive set contributes 0 and emits a warning line when a sink is given.
std::vector<double> protection_scores(const ScoreTable& table, const DimClasses& dims,
                                      double beta = kDefaultSelectionBeta,
                                      std::ostream* warnings = nullptr);

struct SelectionResult {
  ArrMatrix arr;
  DimClasses dims;
  std::vector<double> protection;  // per layer
  std::vector<int> replaced;       // layer ids, ordered ascending
  std::vector<std::string> tiebreak_log;
};

/// Picks the budget layers with the smallest protection score; ties break
/// toward the smaller layer id and are logged. Deterministic and stable
/// under permutation of the input order.
std::vector<int> select_smallest(const std::vector<double>& protection,
                                 const std::vector<int>& layer_ids, std::size_t budget,
                                 std::vector<std::string>* tiebreak_log = nullptr);

/// Full pipeline: recovery matrix, dimension classes, protection scores,
/// replacement set.
SelectionResult select_layers(const ScoreTable& table, std::size_t budget,
                              double beta = kDefaultSelectionBeta,
                              double threshold_hr = kDefaultHrThreshold,
                              std::ostream* warnings = nullptr);

/// JSON report with the recovery matrix (null for undefined cells), the
/// dimension partition, per-layer scores, the replacement set, and the
/// tiebreak log.
std::string selection_to_json(const ScoreTable& table, const SelectionResult& result,
                              std::size_t budget, double beta, double threshold_hr);

}  // namespace sattn
