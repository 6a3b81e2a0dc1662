#include "mvad/optim.hpp"

#include <cmath>

#include "mvad/errors.hpp"

namespace mvad {

void Adam::step(std::span<const TensorRef> params, std::span<const TensorRef> grads) {
  require(params.size() == grads.size(), ErrorKind::kDimensionError,
          "parameter and gradient lists differ in length");
  if (m_.empty()) {
    for (const TensorRef& p : params) {
      m_.emplace_back(p.data.size(), 0.0);
      v_.emplace_back(p.data.size(), 0.0);
    }
  }
  require(m_.size() == params.size(), ErrorKind::kDimensionError,
          "parameter list changed between steps");
  ++t_;
  simd::AdamArgs args;
  args.lr = cfg_.lr;
  args.beta1 = cfg_.beta1;
  args.beta2 = cfg_.beta2;
  args.eps = cfg_.eps;
  const double t = static_cast<double>(t_);
  args.bias_correction1 = 1.0 / (1.0 - std::pow(cfg_.beta1, t));
  args.bias_correction2 = 1.0 / (1.0 - std::pow(cfg_.beta2, t));
  const auto& k = simd::active();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::size_t n = params[i].data.size();
    require(grads[i].data.size() == n && m_[i].size() == n, ErrorKind::kDimensionError,
            "tensor shape changed between steps");
    const double* g = grads[i].data.data();
    if (cfg_.weight_decay != 0.0) {
      scratch_.assign(g, g + n);
      k.axpy(n, cfg_.weight_decay, params[i].data.data(), scratch_.data());
      g = scratch_.data();
    }
    k.adam_update(n, args, g, m_[i].data(), v_[i].data(), params[i].data.data());
  }
}

}  // namespace mvad
