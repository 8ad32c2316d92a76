#ifndef NSDEHAZE_SRC_CONFIG_JSON_HPP
#define NSDEHAZE_SRC_CONFIG_JSON_HPP

#include <json.hpp>

#include "nsdehaze/harness.hpp"
#include "nsdehaze/losses.hpp"
#include "nsdehaze/networks.hpp"

namespace nsd::physics {
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(DcpParams, patch_radius, omega, top_frac, t_floor,
                                                guided_radius, guided_eps)
}  // namespace nsd::physics

namespace nsd::nets {
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(NetworkConfig, base_channels, generator_res_blocks,
                                                discriminator_channels, alpha, mu, top_frac, t_floor,
                                                guided_radius, guided_eps, generator_rough_skip,
                                                airlight_bias_init, dcp, seed)
}  // namespace nsd::nets

namespace nsd::losses {
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(LossWeights, omega1, omega2, theta, gamma, eta, cx_bandwidth,
                                                cx_epsilon, cx_max_positions, scales)
}  // namespace nsd::losses

namespace nsd::harness {
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TrainConfig, lr, adam_beta1, adam_beta2, adam_eps, epochs, batch,
                                                max_steps, loss_weights, network, seed, checkpoint_every, out_dir,
                                                crop, feature_layers, feature_width_divisor)
}  // namespace nsd::harness

namespace nsd::detail {

/// Throws ArgumentError naming the first key of `given` absent from `reference`
/// (recursing into objects).
void reject_unknown_keys(const nlohmann::json& given, const nlohmann::json& reference,
                         const std::string& where);

}  // namespace nsd::detail

#endif  // NSDEHAZE_SRC_CONFIG_JSON_HPP
