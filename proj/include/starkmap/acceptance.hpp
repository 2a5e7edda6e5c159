#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "starkmap/pipeline.hpp"

namespace starkmap {

struct CriterionResult {
    int id = 0;
    std::string name;
    bool pass = false;
    std::vector<std::string> details;  // measured values and thresholds
};

/// Runs acceptance criteria 1-11 against `ctx.cfg`, using scratch runs below
/// `<ctx.out>/validate`. Progress and one PASS/FAIL line per criterion go to
/// `log` when given.
std::vector<CriterionResult> run_acceptance(const RunContext& ctx, std::ostream* log = nullptr);

bool all_passed(const std::vector<CriterionResult>& r);

/// `<out>/validate/report.json` and `report.txt`.
void write_acceptance_report(const std::vector<CriterionResult>& r, const RunContext& ctx);

}  // namespace starkmap
