#include "owc/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <variant>

#include "owc/nn/loss.hpp"

namespace owc::nn {

GradCheckReport finite_difference_check(const Objective& objective, std::span<GradientProbe> probes, double step,
                                        Index samples_per_probe, Rng& rng) {
  if (!(step >= 1e-6 && step <= 1e-4)) throw ArgumentError("grad_check: step must lie in [1e-6, 1e-4]");
  GradCheckReport report;
  const std::uint64_t base_signature = objective().signature;
  for (auto& probe : probes) {
    VectorX<double>& values = *probe.values;
    std::vector<Index> coords(static_cast<std::size_t>(values.size()));
    std::iota(coords.begin(), coords.end(), Index{0});
    if (values.size() > samples_per_probe) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(static_cast<std::size_t>(samples_per_probe));
    }
    for (Index i : coords) {
      const double original = values[i];
      values[i] = original + step;
      const Evaluation plus = objective();
      values[i] = original - step;
      const Evaluation minus = objective();
      values[i] = original;
      if (plus.signature != base_signature || minus.signature != base_signature) {
        ++report.skipped_nonsmooth;
        continue;
      }
      const double numeric = (plus.loss - minus.loss) / (2.0 * step);
      const double analytic = probe.analytic[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      const double rel = std::abs(analytic - numeric) / denom;
      ++report.checked;
      if (rel >= report.max_relative_error) {
        report.max_relative_error = rel;
        std::ostringstream os;
        os.precision(10);
        os << probe.name << '[' << i << "] analytic=" << analytic << " numeric=" << numeric;
        report.worst = os.str();
      }
    }
  }
  objective();  // leave caches describing the unperturbed point
  return report;
}

GradCheckReport grad_check(Network<double>& net, const Tensor<double>& x, double step, Index samples_per_probe,
                           Rng& rng, std::vector<int> labels) {
  const bool classify = !net.layers().empty() &&
                        std::holds_alternative<ActivationSpec>(net.layers().back()) &&
                        std::get<ActivationSpec>(net.layers().back()).kind == Activation::softmax;
  const Index batch = x.batch();
  if (classify && labels.empty()) {
    std::uniform_int_distribution<int> pick(0, static_cast<int>(net.output_size()) - 1);
    for (Index b = 0; b < batch; ++b) labels.push_back(pick(rng));
  }
  MatrixX<double> weights;
  if (!classify) {
    std::normal_distribution<double> normal;
    weights = MatrixX<double>::NullaryExpr(net.output_size(), batch, [&] { return normal(rng); });
  }

  Tensor<double> input = x;
  auto upstream = [&](const Tensor<double>& y) -> LossWithGradient<double> {
    if (classify) return cross_entropy_batch<double>(y.samples(), labels);
    return {(y.samples().array() * weights.array()).sum(), weights};
  };
  auto evaluate = [&]() -> Evaluation {
    return {upstream(net.forward(input, Mode::train)).value, net.pattern_signature()};
  };

  const auto base = upstream(net.forward(input, Mode::train));
  const Tensor<double> input_grad = net.backward(Tensor<double>::from_samples(base.grad, net.output_shape()));

  std::vector<GradientProbe> probes;
  auto& tensors = net.params().tensors;
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (!tensors[i].trainable) continue;
    probes.push_back({tensors[i].name, &tensors[i].value, net.gradients()[i]});
  }
  probes.push_back({"input", &input.data(), input_grad.data()});
  return finite_difference_check(evaluate, probes, step, samples_per_probe, rng);
}

}  // namespace owc::nn
