#include "derc/tensor.hpp"

#include <cmath>

namespace derc {

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace derc
