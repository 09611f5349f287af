"""lablink: a self-hosted living-lab operations platform.

Subsystems: member registry with a three-tier permission matrix, grid-based
floor plans, device registry with field schemas, an embedded append-only
time-series store, anonymized survey scheduling with compliance tracking,
auto-generated dashboards, automated sensor-fault detection, an HTTP gateway
binding it all, and a deterministic fleet simulator.
"""

__version__ = "0.1.0"
