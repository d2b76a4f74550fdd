#include "evpinn/report.hpp"

#include <fstream>
#include <stdexcept>

#include "num_format.hpp"

namespace evpinn {

void LossReport::save_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "epoch,split,total,data,physics\n";
    for (const auto& r : rows) {
        out << r.epoch << ',' << r.split << ',' << detail::format_double(r.total) << ','
            << detail::format_double(r.data) << ',' << detail::format_double(r.physics) << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

const LossRow* LossReport::find(int epoch, char split) const {
    for (const auto& r : rows) {
        if (r.epoch == epoch && r.split == split) return &r;
    }
    return nullptr;
}

}  // namespace evpinn
