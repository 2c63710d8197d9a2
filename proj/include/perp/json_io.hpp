#pragma once

#include <string>

#include <json.hpp>

#include "perp/cramer_solver.hpp"
#include "perp/factor_models.hpp"
#include "perp/mc_engine.hpp"
#include "perp/multivariate.hpp"
#include "perp/tail_engine.hpp"

namespace perp {

// Descriptor parsing rejects unknown fields. check_drift is disabled for matrix entries.
FactorModel model_from_json(const nlohmann::json& j, bool check_drift = true);
FactorModel model_from_string(const std::string& text);
nlohmann::json model_to_json(const FactorModel& m);

MatrixEnsemble ensemble_from_json(const nlohmann::json& j);
MatrixEnsemble ensemble_from_string(const std::string& text);
nlohmann::json ensemble_to_json(const MatrixEnsemble& e);

nlohmann::json to_json(const CramerSolution& s);
nlohmann::json to_json(const ConditionReport& r);
nlohmann::json to_json(const TiltedEstimate& e);
nlohmann::json to_json(const Estimate& e);
nlohmann::json to_json(const LindleyStats& s);
nlohmann::json to_json(const MultivariateCramer& mv);
nlohmann::json to_json(const MvTailResult& r);
nlohmann::json to_json(const TailCurve& c);

CramerSolution cramer_from_json(const nlohmann::json& j);
MultivariateCramer mv_cramer_from_json(const nlohmann::json& j);

}  // namespace perp
