#pragma once

namespace textscale {

/// Digamma function psi(x) for x > 0.
double digamma(double x);

}  // namespace textscale
