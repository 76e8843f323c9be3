#!/usr/bin/env python3
"""Time the placement solver across topology families and program sizes.

This is a trimmed version of `matpipe bench` (the full twelve-setup sweep);
each row reports topology build, path enumeration, and solve wall clock.
"""

from matpipe import orchestrator as orch

rows = orch.bench_planner(
    setups=(
        ("fat_tree", {"k": 8}),
        ("dcell", {"n": 3, "levels": 2}),
        ("bcube", {"n": 5, "levels": 2}),
        ("jellyfish", {"n": 80, "d": 3}),
    ),
    stage_totals=(2, 10, 20),
)

header = orch.BenchRow.header()
cells = [header] + [row.row() for row in rows]
widths = [max(len(str(r[i])) for r in cells) for i in range(len(header))]
for r in cells:
    print("  ".join(str(v).ljust(w) for v, w in zip(r, widths)).rstrip())

worst = max(rows, key=lambda r: r.total_ms)
print(
    "\nworst instance: %s (%s) with %d stages at %.1f ms"
    % (worst.topology, worst.params, worst.stage_total, worst.total_ms)
)
