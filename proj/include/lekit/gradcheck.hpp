#pragma once
#include <cmath>
#include <cstring>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "lekit/tape.hpp"

namespace lekit {

struct NamedMatrix {
  std::string name;
  Matrix value;
};

/// Builds a scalar loss on the tape from already-registered parameter nodes.
/// Must be deterministic: two builds from the same values have to agree
/// bit-for-bit.
using LossBuilder = std::function<NodeId(Tape&, const std::vector<NodeId>&)>;

struct GradCheckBlock {
  std::string name;
  double max_rel_dev = 0.0;
  std::size_t worst_index = 0;  // flat index into the block
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckBlock> blocks;
  double rtol = 0.0;

  double worst() const {
    double w = 0.0;
    for (const auto& b : blocks) w = std::max(w, b.max_rel_dev);
    return w;
  }
  bool passed() const { return worst() <= rtol; }
};

namespace detail {
inline double eval_loss(const LossBuilder& build, const std::vector<NamedMatrix>& params) {
  Tape tape;
  std::vector<NodeId> ids;
  ids.reserve(params.size());
  for (const auto& p : params) ids.push_back(tape.parameter(p.value));
  const NodeId loss = build(tape, ids);
  const Matrix& v = tape.value(loss);
  if (!v.is_scalar()) throw ShapeError("grad_check loss", v.shape_str(), "1x1");
  return v(0, 0);
}
}  // namespace detail

/// Compares reverse-mode gradients against central finite differences,
/// entry by entry. Deviation is |a - n| / max(|a|, |n|, 1e-6); the absolute
/// floor keeps true-zero gradients from being swamped by difference noise.
inline GradCheckReport grad_check(const LossBuilder& build, std::vector<NamedMatrix> params,
                                  double step, double rtol) {
  if (!(step > 0.0)) throw ConfigError("grad_check: step must be > 0");

  const double f0 = detail::eval_loss(build, params);
  const double f0_again = detail::eval_loss(build, params);
  if (std::memcmp(&f0, &f0_again, sizeof f0) != 0)
    throw Error("grad_check: loss builder is non-deterministic (two forward passes disagree)");

  // analytic pass
  Tape tape;
  std::vector<NodeId> ids;
  for (const auto& p : params) ids.push_back(tape.parameter(p.value));
  const NodeId loss = build(tape, ids);
  const GradientSet grads = tape.backward(loss);

  GradCheckReport report;
  report.rtol = rtol;
  for (std::size_t b = 0; b < params.size(); ++b) {
    GradCheckBlock block;
    block.name = params[b].name;
    Matrix& w = params[b].value;
    const bool has_grad = grads.contains(ids[b]);
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double saved = w.data[k];
      w.data[k] = saved + step;
      const double fp = detail::eval_loss(build, params);
      w.data[k] = saved - step;
      const double fm = detail::eval_loss(build, params);
      w.data[k] = saved;

      const double numeric = (fp - fm) / (2.0 * step);
      const double analytic = has_grad ? grads.at(ids[b]).data[k] : 0.0;
      const double dev =
          std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
      if (dev >= block.max_rel_dev) {
        block.max_rel_dev = dev;
        block.worst_index = k;
        block.analytic_at_worst = analytic;
        block.numeric_at_worst = numeric;
      }
    }
    report.blocks.push_back(std::move(block));
  }
  return report;
}

}  // namespace lekit
