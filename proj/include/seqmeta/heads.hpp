#pragma once

#include <cstddef>
#include <vector>

#include "seqmeta/param_vector.hpp"

namespace seqmeta {

/// Shared trunk plus one output head per task seen so far (multi-head mode).
struct HeadBank {
    ParamVector trunk;
    std::size_t head_size = 0;
    std::vector<ParamVector> heads;

    /// Trunk followed by head `i`, in the owning network's parameter layout.
    ParamVector assemble(std::size_t i) const;
};

/// Returns `bank` with a copy of `head_init` appended; existing heads are not
/// touched. Throws ShapeError when head_init does not match bank.head_size.
HeadBank add_head(HeadBank bank, const ParamVector& head_init);

}  // namespace seqmeta
