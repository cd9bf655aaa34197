#pragma once

#include "synthcp/nn/gradcheck.hpp"

namespace synthcp::testing {

// Finite-difference checks of the trainable objectives, all in double precision
// on small inputs.
nn::GradCheckResult check_spade_norm();
nn::GradCheckResult check_segmenter_loss();
nn::GradCheckResult check_gan_d_objective();
nn::GradCheckResult check_gan_g_objective();
nn::GradCheckResult check_comparator_loss();

}  // namespace synthcp::testing
