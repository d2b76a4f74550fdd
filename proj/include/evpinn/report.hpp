#pragma once

#include <string>
#include <vector>

namespace evpinn {

/// One logged loss evaluation. split is 'T' (training) or 'V' (validation);
/// physics is the lambda-weighted component and total == data + physics.
struct LossRow {
    int epoch;
    char split;
    double total;
    double data;
    double physics;
};

struct LossReport {
    std::vector<LossRow> rows;

    /// CSV `epoch,split,total,data,physics`, shortest round-trip formatting.
    void save_csv(const std::string& path) const;
    const LossRow* find(int epoch, char split) const;
};

}  // namespace evpinn
