#!/usr/bin/env python3
"""Place a translated program across a fat-tree, minimizing the objective.

The planner weighs serving latency, number of devices used, and wire
overhead; moving the weights shifts the chosen split.
"""

from matpipe import model_ir as mir
from matpipe import planner as pln
from matpipe import topology as topo
from matpipe import translator as trn

from workload_helpers import chain_tree

# An 8-level tree gives a 9-stage program, too big for the 6-stage devices
# below, so the plan must span devices.
spec = chain_tree(feature_count=4, depth=8, value_bits=8)
program = trn.translate(spec)
print("program: %d stages" % program.stage_count)

net = topo.fat_tree(k=4)
infos = [
    d if not d.programmable else
    topo.DeviceInfo(d.device_id, stage_count=6, tcam_capacity=256, sram_capacity=512)
    for d in net.devices.values()
]
net = topo.custom_network(infos, net.links, net.hosts, kind=net.kind, params=net.params)
hosts = sorted(net.hosts)
src, dst = hosts[0], hosts[-1]
print("network: %d devices, src %s, dst %s" % (len(net.devices), src, dst))

paths = topo.enumerate_paths(net, src, dst, limit=16)
print("candidate paths: %d (shortest %d hops)" % (len(paths.paths), len(paths.paths[0])))

costs = pln.CostModel.from_layout(program.meta.layout())
for weights, note in (
    ((1 / 3, 1 / 3, 1 / 3), "balanced"),
    ((0.98, 0.01, 0.01), "latency-heavy"),
    ((0.01, 0.98, 0.01), "device-count-heavy"),
):
    problem = pln.build_problem(program, net, paths, costs=costs, weights=weights)
    plan = pln.solve(problem)
    devices = list(dict.fromkeys(dev for dev, _ in plan.placements))
    o = plan.objective
    print(
        "%-18s total=%8.4f  latency=%6.2f devices=%d overhead=%7.2f  on %s"
        % (note, o.total, o.latency, int(o.devices), o.overhead, "+".join(devices))
    )
    ok, violations = pln.validate_plan(plan, problem)
    assert ok, violations

# The solver's optimum is certified against a brute-force oracle in the test
# suite; validate_plan re-checks order, capacity, and grouping constraints.
