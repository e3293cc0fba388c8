#pragma once

#include <span>

#include "dejavu/ad/tape.h"

namespace dejavu::ad {

// Elementwise arithmetic on equally shaped operands.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);

Var sum(Var a);
Var mean(Var a);
// Sum of squared differences; scalar.
Var squared_error(Var a, Var b);

// [n,k] x [k,m] -> [n,m]
Var matmul(Var a, Var b);
// x·W + b for x of shape [in] or [n,in]; W is [in,out], b is [out].
Var dense(Var x, Var weight, Var bias);

// Valid cross-correlation over time. x: [W, C_in], kernels: [k, C_in, C_out],
// bias: [C_out] -> [W-k+1, C_out].
Var conv1d(Var x, Var kernels, Var bias);
// Adjoint of conv1d's linear map. x: [W', C_in], kernels: [k, C_out, C_in],
// bias: [C_out] -> [W'+k-1, C_out]. Passing conv1d's kernels undoes its shape.
Var conv1d_transpose(Var x, Var kernels, Var bias);

// Gate blocks are laid out [reset | update | candidate] along the last axis.
struct GruWeights {
  Var input_weight;   // [D, 3*H]
  Var hidden_weight;  // [H, 3*H]
  Var bias;           // [3*H]
};
// Runs a GRU from a zero state over x: [W, D]; returns all states [W, H].
//   r = σ(x·Wr + h·Ur + br), z = σ(x·Wz + h·Uz + bz)
//   n = tanh(x·Wn + r ⊙ (h·Un) + bn), h' = (1 - z) ⊙ n + z ⊙ h
Var gru_sequence(Var x, const GruWeights& weights);

// Exact form x·Φ(x).
Var gelu(Var x);
Var sigmoid(Var x);
Var tanh(Var x);
Var leaky_rectifier(Var x, double slope);
Var log(Var x);
// Softmax over the last axis.
Var softmax(Var x);

// Concatenate rank-2 tensors with equal row counts along columns.
Var concat_columns(std::span<const Var> parts);
// Stack rank-1 tensors of equal length into [n, len].
Var stack_rows(std::span<const Var> rows);
Var reshape(Var x, Shape shape);

// Scalar reference functions shared with the model.
double gelu_value(double x);
double gelu_derivative(double x);
double sigmoid_value(double x);

}  // namespace dejavu::ad
