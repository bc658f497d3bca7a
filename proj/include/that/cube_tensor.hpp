#pragma once

// Bridges between the pixel-major cube/pan containers and [N,C,H,W] tensors.

#include <cstddef>

#include "that/hypercube.hpp"
#include "that/tensor.hpp"

namespace that {

template <class T>
Tensor<T> cube_to_tensor(const HyperCube& c) {
  auto t = Tensor<T>::zeros({1, c.s, c.h, c.w});
  auto& v = t.data();
  for (int y = 0; y < c.h; ++y)
    for (int x = 0; x < c.w; ++x)
      for (int b = 0; b < c.s; ++b)
        v[(static_cast<std::size_t>(b) * c.h + y) * c.w + x] = static_cast<T>(c.at(y, x, b));
  return t;
}

template <class T>
HyperCube tensor_to_cube(const Tensor<T>& t) {
  if (t.rank() != 4 || t.dim(0) != 1)
    throw ShapeError("tensor_to_cube: expected [1,S,H,W], got " + shape_str(t.shape()));
  HyperCube c(t.dim(2), t.dim(3), t.dim(1));
  for (int y = 0; y < c.h; ++y)
    for (int x = 0; x < c.w; ++x)
      for (int b = 0; b < c.s; ++b)
        c.at(y, x, b) =
            static_cast<float>(t.data()[(static_cast<std::size_t>(b) * c.h + y) * c.w + x]);
  return c;
}

template <class T>
Tensor<T> pan_to_tensor(const PanImage& p) {
  auto t = Tensor<T>::zeros({1, 1, p.h, p.w});
  for (std::size_t i = 0; i < p.data.size(); ++i) t.data()[i] = static_cast<T>(p.data[i]);
  return t;
}

}  // namespace that
