"""Command line entry points.

Subcommands: translate, plan, deploy, infer, eval, topo-gen, bench. Every
artifact crossing the CLI boundary is one of the documented structured-text
formats: model exchange JSON, table-entry JSONL, topology JSON, plan JSON,
dataset CSV, report JSON, benchmark CSV.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace

from . import model_ir as mir
from . import orchestrator as orch
from . import planner as pln
from . import topology as topo
from .data_plane import DataPlaneError
from .packet import PacketError
from .translator import (
    TranslateConfig,
    TranslateError,
    count_resources,
    read_entries_file,
    write_entries_file,
)

_ERRORS = (
    mir.ModelError,
    TranslateError,
    topo.TopologyError,
    pln.PlanningError,
    DataPlaneError,
    PacketError,
    orch.OrchestratorError,
    OSError,
    json.JSONDecodeError,
)


def _add_weight_flags(p):
    p.add_argument("--w-latency", type=float, default=1.0 / 3,
                   help="objective weight on serving latency (default 1/3)")
    p.add_argument("--w-devices", type=float, default=1.0 / 3,
                   help="objective weight on devices used (default 1/3)")
    p.add_argument("--w-overhead", type=float, default=1.0 / 3,
                   help="objective weight on wire overhead (default 1/3)")


def _weights(args):
    raw = (args.w_latency, args.w_devices, args.w_overhead)
    if any(w <= 0 for w in raw):
        raise pln.PlanningError("objective weights must be positive")
    total = sum(raw)
    return tuple(w / total for w in raw)  # normalized so they sum to 1


def _add_translate_flags(p):
    p.add_argument("--mid", type=int, default=1, help="model id (4 bits)")
    p.add_argument("--vid", type=int, default=1, help="version id (4 bits)")
    p.add_argument("--code-bits", type=int, default=None)
    p.add_argument("--tree-budget", type=int, default=None)
    p.add_argument("--hyperplane-budget", type=int, default=None)
    p.add_argument("--index-bits", type=int, default=None)
    p.add_argument("--block-slots", type=int, default=None)


def _translate_config(args):
    cfg = TranslateConfig()
    overrides = {
        "code_bits": args.code_bits,
        "tree_slot_budget": args.tree_budget,
        "hyperplane_budget": args.hyperplane_budget,
        "mul_index_bits": args.index_bits,
        "svm_block_slots": args.block_slots,
    }
    chosen = {k: v for k, v in overrides.items() if v is not None}
    return replace(cfg, **chosen) if chosen else cfg


def _add_path_flags(p):
    p.add_argument("--src", default=None, help="source host (default: first)")
    p.add_argument("--dst", default=None, help="destination host (default: last)")
    p.add_argument("--path-limit", type=int, default=topo.DEFAULT_PATH_LIMIT)
    p.add_argument("--bandwidth", type=float, default=1.0,
                   help="bytes per delay unit for the transfer cost terms")


def _pipeline_config(args):
    return orch.PipelineConfig(
        src=args.src,
        dst=args.dst,
        mid=args.mid,
        vid=args.vid,
        rid=args.rid,
        weights=_weights(args),
        translate=_translate_config(args),
        bandwidth=args.bandwidth,
        path_limit=args.path_limit,
    )


def _print_objective(plan):
    o = plan.objective
    print("path: %s" % " -> ".join(plan.path))
    print("placements: %s" % " ".join(
        "%d:%s/%d" % (i, dev, stage)
        for i, (dev, stage) in enumerate(plan.placements)
    ))
    print("objective: total=%.6f latency=%.4f devices=%d overhead=%.4f"
          % (o.total, o.latency, int(o.devices), o.overhead))
    if plan.stats is not None:
        s = plan.stats
        print("solver: %d nodes, %.1f ms, %d/%d paths feasible"
              % (s.nodes, s.wall_ms, s.paths_feasible, s.paths_total))


def _print_install_summary(summaries):
    for summary in summaries:
        print("%s: %d/%d stages used, models %s" % (
            summary["device_id"],
            len(summary["used_stages"]),
            summary["stage_count"],
            ",".join("(%d,%d)" % tag for tag in summary["models"]) or "-",
        ))
        for (stage, kind, slot), count in summary["tables"].items():
            print("  stage %2d %s[%d]: %d entries" % (stage, kind, slot, count))


def _parse_setup(text):
    kind, _, arg_text = text.partition(":")
    params = {}
    if arg_text:
        for part in arg_text.split(","):
            key, eq, value = part.partition("=")
            if not eq:
                raise orch.OrchestratorError(
                    "setup parameter %r is not key=value" % part)
            params[key.strip()] = int(value)
    return kind.strip(), params


# ---------------------------------------------------------------------------
# Subcommand bodies


def _cmd_translate(args):
    spec = mir.load_model(args.model)
    program = orch.translate_model(spec, _translate_config(args), args.mid, args.vid)
    write_entries_file(program, args.out)
    report = count_resources(program)
    print("%s model (mid=%d vid=%d): %d stages, %d TCAM + %d SRAM entries -> %s"
          % (report["kind"], args.mid, args.vid, report["stages_total"],
             report["tcam_total"], report["sram_total"], args.out))
    return 0


def _cmd_topo_gen(args):
    params = {}
    for part in args.param or []:
        key, eq, value = part.partition("=")
        if not eq:
            raise topo.TopologyError("--param needs key=value, got %r" % part)
        params[key] = int(value)
    net = topo.generate(args.kind, seed=args.seed, **params)
    overrides = {
        "stage_count": args.stage_count,
        "tcam_capacity": args.tcam,
        "sram_capacity": args.sram,
        "mul_slots": args.mul_slots,
    }
    chosen = {k: v for k, v in overrides.items() if v is not None}
    if chosen:
        infos = [
            replace(info, **chosen) if info.programmable else info
            for info in net.devices.values()
        ]
        net = topo.custom_network(
            infos, net.links, net.hosts, kind=net.kind, params=net.params
        )
    topo.save_network(net, args.out)
    print("%s: %d devices, %d links, %d hosts -> %s"
          % (net.kind, len(net.devices), len(net.links), len(net.hosts), args.out))
    return 0


def _cmd_plan(args):
    program = read_entries_file(args.entries)
    net = orch.resolve_network(args.topology)
    hosts = sorted(net.hosts)
    src = args.src if args.src is not None else hosts[0]
    dst = args.dst if args.dst is not None else hosts[-1]
    paths = topo.enumerate_paths(net, src, dst, limit=args.path_limit)
    costs = pln.CostModel.from_layout(
        program.meta.layout(), bandwidth=args.bandwidth
    )
    problem = pln.build_problem(
        program, net, paths, costs=costs, weights=_weights(args)
    )
    plan = pln.solve(problem)
    pln.save_plan(plan, args.out)
    _print_objective(plan)
    print("plan -> %s" % args.out)
    return 0


def _cmd_deploy(args):
    program = read_entries_file(args.entries)
    net = orch.resolve_network(args.topology)
    plan = pln.load_plan(args.plan)
    runtime = orch.NetworkRuntime(net)
    runtime.deploy(program, plan, rid=args.rid)
    used = list(dict.fromkeys(device for device, _ in plan.placements))
    _print_install_summary(runtime.install_summary(used))
    return 0


def _parse_feature_row(text):
    try:
        return tuple(int(x) for x in text.replace(" ", "").split(",") if x != "")
    except ValueError:
        raise orch.OrchestratorError("feature row %r is not comma-separated integers" % text)


def _cmd_infer(args):
    if not args.features and args.dataset is None:
        raise orch.OrchestratorError("infer needs --features or --dataset")
    deployment = orch.deploy_pipeline(args.model, args.topology, _pipeline_config(args))
    rows = [_parse_feature_row(text) for text in args.features or []]
    if args.dataset is not None:
        rows.extend(mir.load_dataset_csv(args.dataset).features)
    for i, row in enumerate(rows):
        label = deployment.infer(row)
        print("%d: %s -> %d" % (i, ",".join(str(v) for v in row), label))
    return 0


def _cmd_eval(args):
    report = orch.run_pipeline(
        args.model, args.topology, args.dataset, _pipeline_config(args)
    )
    _print_objective(report.plan)
    m = report.metrics
    print("rows: %d" % report.counters["rows"])
    print("kappa_vs_oracle: %.6f" % m["kappa_vs_oracle"])
    print("accuracy_vs_oracle: %.6f" % m["accuracy_vs_oracle"])
    print("accuracy: %.6f" % m["accuracy"])
    print("macro_f1: %.6f" % m["macro_f1"])
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            json.dump(report.to_dict(), f, indent=1)
            f.write("\n")
        print("report -> %s" % args.out)
    return 0


def _cmd_bench(args):
    setups = [_parse_setup(s) for s in args.setup] if args.setup else orch.TABLE5_SETUPS
    stage_totals = tuple(int(x) for x in args.stages.split(","))
    rows = orch.bench_planner(
        setups=setups,
        stage_totals=stage_totals,
        seed=args.seed,
        path_limit=args.path_limit,
    )
    header = orch.BenchRow.header()
    cells = [header] + [row.row() for row in rows]
    widths = [max(len(str(r[i])) for r in cells) for i in range(len(header))]
    for r in cells:
        print("  ".join(str(v).ljust(w) for v, w in zip(r, widths)).rstrip())
    worst = max(row.total_ms for row in rows)
    print("worst instance: %.1f ms" % worst)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(header)
            for row in rows:
                writer.writerow(row.row())
        print("table -> %s" % args.out)
    return 0


# ---------------------------------------------------------------------------
# Parser


def build_parser():
    parser = argparse.ArgumentParser(
        prog="matpipe",
        description="Compile classifiers to match-action pipelines, place "
                    "them on a network, and run packet-level inference.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("translate", help="model exchange JSON -> table entries JSONL")
    p.add_argument("model", help="model exchange JSON file")
    p.add_argument("-o", "--out", required=True, help="entries JSONL output")
    _add_translate_flags(p)
    p.set_defaults(fn=_cmd_translate)

    p = sub.add_parser("topo-gen", help="generate a topology file")
    p.add_argument("kind", choices=["fat_tree", "dcell", "bcube", "jellyfish"])
    p.add_argument("-p", "--param", action="append",
                   help="generator parameter key=value (repeatable)")
    p.add_argument("--seed", type=int, default=0, help="seed for random wiring")
    p.add_argument("--stage-count", type=int, default=None)
    p.add_argument("--tcam", type=int, default=None, help="TCAM entries per table")
    p.add_argument("--sram", type=int, default=None, help="SRAM entries per table")
    p.add_argument("--mul-slots", type=int, default=None)
    p.add_argument("-o", "--out", required=True, help="topology JSON output")
    p.set_defaults(fn=_cmd_topo_gen)

    p = sub.add_parser("plan", help="choose a path and per-stage placements")
    p.add_argument("--entries", required=True, help="table entries JSONL")
    p.add_argument("--topology", required=True,
                   help="topology JSON file or spec like fat_tree:k=4")
    _add_path_flags(p)
    _add_weight_flags(p)
    p.add_argument("-o", "--out", required=True, help="plan JSON output")
    p.set_defaults(fn=_cmd_plan)

    p = sub.add_parser("deploy", help="install a planned program on the virtual network")
    p.add_argument("--entries", required=True, help="table entries JSONL")
    p.add_argument("--topology", required=True, help="topology JSON file or spec")
    p.add_argument("--plan", required=True, help="plan JSON file")
    p.add_argument("--rid", type=int, default=0, help="forwarding id (4 bits)")
    p.set_defaults(fn=_cmd_deploy)

    p = sub.add_parser("infer", help="classify feature rows through the pipeline")
    p.add_argument("--model", required=True, help="model exchange JSON file")
    p.add_argument("--topology", required=True, help="topology JSON file or spec")
    p.add_argument("--features", action="append",
                   help="comma-separated quantized feature row (repeatable)")
    p.add_argument("--dataset", default=None, help="dataset CSV to classify")
    p.add_argument("--rid", type=int, default=0)
    _add_path_flags(p)
    _add_weight_flags(p)
    _add_translate_flags(p)
    p.set_defaults(fn=_cmd_infer)

    p = sub.add_parser("eval", help="run a dataset end to end and score it")
    p.add_argument("--model", required=True, help="model exchange JSON file")
    p.add_argument("--topology", required=True, help="topology JSON file or spec")
    p.add_argument("--dataset", required=True, help="dataset CSV with labels")
    p.add_argument("--rid", type=int, default=0)
    p.add_argument("--out", default=None, help="write the full report JSON here")
    _add_path_flags(p)
    _add_weight_flags(p)
    _add_translate_flags(p)
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("bench", help="time the planner across topology setups")
    p.add_argument("--setup", action="append",
                   help="topology spec like bcube:n=5,levels=2 (repeatable; "
                        "default: the standard twelve-setup sweep)")
    p.add_argument("--stages", default="2,5,10,20",
                   help="comma-separated synthetic program sizes")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--path-limit", type=int, default=topo.DEFAULT_PATH_LIMIT)
    p.add_argument("--out", default=None, help="write the table as CSV here")
    p.set_defaults(fn=_cmd_bench)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except _ERRORS as e:
        print("error: %s" % e, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
