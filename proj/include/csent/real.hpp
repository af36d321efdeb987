#pragma once

// Scalar type of tensor storage. Builds with CSENT_DOUBLE use double and live
// in a separate inline namespace, so both precisions can link into one binary.

namespace csent {

#if defined(CSENT_DOUBLE)
#define CSENT_ABI f64
inline namespace f64 {
using real = double;
}
#else
#define CSENT_ABI f32
inline namespace f32 {
using real = float;
}
#endif

}  // namespace csent
