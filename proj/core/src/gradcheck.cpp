#include "hufor/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hufor/errors.hpp"
#include "hufor/rng.hpp"

namespace hufor {

std::vector<FdEstimate> finite_diff_grad(const std::function<double(const ParameterStore&)>& loss,
                                         ParameterStore& params, const FdOptions& options) {
  if (!(options.eps > 0.0)) throw InvalidArgument("finite_diff_grad: eps must be positive");
  std::vector<FdEstimate> out;
  Rng rng(options.seed);
  for (const auto& name : params.names()) {
    if (!name.starts_with(options.prefix)) continue;
    Param& p = params.at(name);
    std::vector<std::size_t> coords(p.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (options.per_entry > 0 && coords.size() > options.per_entry) {
      rng.shuffle(coords.begin(), coords.end());
      coords.resize(options.per_entry);
      std::sort(coords.begin(), coords.end());
    }
    auto central = [&](std::size_t idx, double h) {
      const double saved = p.value[idx];
      p.value[idx] = saved + h;
      const double up = loss(params);
      p.value[idx] = saved - h;
      const double down = loss(params);
      p.value[idx] = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw NumericFailure("finite_diff_grad: non-finite loss when perturbing '" + name + "'[" +
                             std::to_string(idx) + "]");
      }
      return (up - down) / (2.0 * h);
    };
    for (std::size_t idx : coords) {
      const double d = central(idx, options.eps);
      out.push_back({name, idx, options.richardson ? (4.0 * d - central(idx, 2.0 * options.eps)) / 3.0 : d});
    }
  }
  return out;
}

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

double GradcheckReport::worst() const {
  double w = 0.0;
  for (const auto& g : groups) w = std::max(w, g.worst);
  return w;
}

std::size_t GradcheckReport::probes() const {
  std::size_t n = 0;
  for (const auto& g : groups) n += g.probes;
  return n;
}

GradcheckReport compare_gradients(const ParameterStore& params, const std::vector<FdEstimate>& estimates) {
  GradcheckReport report;
  for (const auto& e : estimates) {
    auto it = std::find_if(report.groups.begin(), report.groups.end(),
                           [&](const GradcheckGroup& g) { return g.name == e.name; });
    if (it == report.groups.end()) {
      report.groups.push_back({e.name, 0, 0.0, 0});
      it = report.groups.end() - 1;
    }
    const double err = relative_error(params.at(e.name).grad[e.index], e.value);
    ++it->probes;
    if (err >= it->worst) {
      it->worst = err;
      it->worst_index = e.index;
    }
  }
  return report;
}

}  // namespace hufor
