#!/usr/bin/env python3
"""Deploy a model onto a 3-device line and watch a packet cross it.

A request enters at the source host, picks up table actions on each
programmable device, turns into a 4-byte response at the device holding the
final program stage, and rides the rest of the path to the destination.
"""

from matpipe import orchestrator as orch
from matpipe import topology as topo

from workload_helpers import chain_tree, labeled_dataset, random_rows

spec = chain_tree(feature_count=3, depth=6, value_bits=4)

net = topo.custom_network(
    [
        topo.DeviceInfo("ingress", stage_count=4, tcam_capacity=64),
        topo.DeviceInfo("middle", stage_count=4, tcam_capacity=64),
        topo.DeviceInfo("egress", stage_count=4, tcam_capacity=64),
    ],
    [("ingress", "middle"), ("middle", "egress")],
    {"client": "ingress", "server": "egress"},
)

deployment = orch.deploy_pipeline(spec, net)
plan = deployment.plan
print("path: %s" % " -> ".join(plan.path))
print("placements (program stage -> device/device stage):")
for i, (device, stage) in enumerate(plan.placements):
    print("  %2d -> %s/%d" % (i, device, stage))

for summary in deployment.install_summary():
    used = ", ".join(
        "stage %d %s[%d]=%d" % (s, kind, slot, count)
        for (s, kind, slot), count in sorted(summary["tables"].items())
    )
    print("%s: %s" % (summary["device_id"], used))

layout = deployment.layout
print(
    "request is %d bytes (4 header + %d features + %d intermediates); responses are 4"
    % (
        layout.request_bytes(),
        layout.feature_section_bytes(),
        layout.intermediate_section_bytes(),
    )
)

rows = random_rows(seed=3, count=6, feature_count=3, value_bits=4)
dataset = labeled_dataset(spec, rows)
labels, wire_bytes = deployment.infer_rows(dataset.features)
for row, label in zip(rows, labels):
    print("  %s -> class %d" % (row, label))
print("total wire bytes for %d requests: %d" % (len(rows), wire_bytes))

report = orch.run_pipeline(spec, net, dataset)
print("kappa vs oracle: %.3f on %d rows" % (
    report.metrics["kappa_vs_oracle"], report.counters["rows"]))
