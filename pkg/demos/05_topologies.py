#!/usr/bin/env python3
"""Generate the four topology families and enumerate paths through them.

Device naming follows each family's addressing scheme; servers attach to
edge devices and act as packet sources and sinks only.
"""

import tempfile
from pathlib import Path

from matpipe import topology as topo

for kind, params in (
    ("fat_tree", {"k": 4}),
    ("dcell", {"n": 3, "levels": 2}),
    ("bcube", {"n": 4, "levels": 1}),
    ("jellyfish", {"n": 20, "d": 4}),
):
    net = topo.generate(kind, seed=7, **params)
    hosts = sorted(net.hosts)
    paths = topo.enumerate_paths(net, hosts[0], hosts[-1], limit=8)
    print(
        "%-9s %-18s %4d devices %5d links %4d hosts | %d paths %s..%s, shortest %d hops"
        % (
            kind,
            ",".join("%s=%s" % kv for kv in sorted(params.items())),
            len(net.devices),
            len(net.links),
            len(net.hosts),
            len(paths.paths),
            hosts[0],
            hosts[-1],
            len(paths.paths[0]),
        )
    )

# Files round-trip through a versioned JSON shape; capacities can be edited
# there (or overridden via `matpipe topo-gen ... --stage-count/--tcam/...`).
net = topo.generate("fat_tree", k=4)
out = Path(tempfile.mkdtemp(prefix="demo05_")) / "net.json"
topo.save_network(net, out)
again = topo.load_network(out)
assert sorted(again.devices) == sorted(net.devices)
assert again.links == net.links
print("fat_tree k=4 round-trips through %s" % out)

one = next(iter(again.devices.values()))
print(
    "device %s: %d stages, %d TCAM + %d SRAM entries per stage, %d mul slots"
    % (one.device_id, one.stage_count, one.tcam_capacity, one.sram_capacity, one.mul_slots)
)
