# NOTES:
# Uplink repeater-assisted massive MIMO: channel model, LMMSE evaluation, amplification control and energy policies.
