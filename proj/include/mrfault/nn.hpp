#pragma once

#include <cstddef>
#include <vector>

#include "mrfault/accelerator.hpp"
#include "mrfault/model.hpp"
#include "mrfault/tensor.hpp"

namespace mrfault::nn {

// Electronic operators, exact in float32.
Tensor conv2d(const Conv2d& layer, const Tensor& input);
Tensor linear(const Linear& layer, const Tensor& input);
Tensor relu(const Tensor& input);
Tensor max_pool2d(const MaxPool2d& pool, const Tensor& input);
Tensor avg_pool2d(const AvgPool2d& pool, const Tensor& input);
Tensor batch_norm(const BatchNorm& bn, const Tensor& input);
Tensor add(const Tensor& a, const Tensor& b);

/// Dense forward pass with no accelerator involvement. Throws ContractError
/// when the input does not match the model's input shape.
Tensor reference_forward(const Model& model, const Tensor& input);

/// Forward pass with conv / fc layers run through the compiled accelerator
/// and everything else computed exactly.
Tensor accelerated_forward(const Model& model, const Tensor& input, const accel::CompiledPlan& compiled);

/// Convenience overload; compiles the plan against `facc` on every call.
Tensor accelerated_forward(const Model& model, const Tensor& input, const accel::MappingPlan& plan,
                           const accel::FaultedAccelerator& facc);

std::size_t argmax(const Tensor& logits);

struct AccuracyResult {
    double accuracy = 0.0;
    std::size_t correct = 0;
    std::size_t total = 0;
    std::vector<std::size_t> per_class_correct;
    std::vector<std::size_t> per_class_total;
};

/// Top-1 accuracy over the whole dataset. Throws ContractError for an empty
/// dataset or an out-of-range label. `workers` = 0 picks the hardware count.
AccuracyResult evaluate_accuracy(const Model& model, const Dataset& data, const accel::CompiledPlan& compiled,
                                 unsigned workers = 1);

AccuracyResult evaluate_accuracy(const Model& model, const Dataset& data, const accel::MappingPlan& plan,
                                 const accel::FaultedAccelerator& facc, unsigned workers = 1);

/// Accuracy of the reference (fault-free, accelerator-free) forward pass.
AccuracyResult evaluate_reference_accuracy(const Model& model, const Dataset& data, unsigned workers = 1);

}  // namespace mrfault::nn
