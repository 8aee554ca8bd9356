"""relaynet: min-max MSE transceiver design for K-pair MIMO relay networks.

The package contains a dense complex linear-algebra kernel, an embedded
small-scale conic (SDP/SOCP) interior-point solver, the network/system
model, the one-way and two-way joint source/relay/receiver optimizers, and
a Monte-Carlo simulation harness with a command-line front end.
"""

__version__ = "0.1.0"
