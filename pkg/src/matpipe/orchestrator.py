"""End-to-end driver: translate a model, choose a placement, install the
table entries on virtual devices, walk request packets along the chosen
path, and score the answers against the fixed-point reference.

Also home to the agreement metrics used when scoring and to the planner
benchmark sweep over the four datacenter topology families.
"""

from __future__ import annotations

import os
import time
from collections import Counter
from contextlib import contextmanager
from dataclasses import dataclass, field

from . import model_ir as mir
from . import packet as pkt
from . import planner as pln
from . import topology as topo
from .data_plane import DeviceConfig, VirtualDevice
from .translator import (
    KIND_DT_LAYER,
    KIND_DT_PREDICT,
    TranslateConfig,
    count_resources,
    translate_dt,
    translate_rf,
    translate_svm,
)

PACKET_ID_SPACE = 1 << pkt.PACKET_ID_BITS


class OrchestratorError(Exception):
    pass


class PhaseError(OrchestratorError):
    """Failure inside one pipeline phase, labelled with the phase name."""

    def __init__(self, phase, cause):
        self.phase = phase
        self.cause = cause
        super().__init__("%s phase failed: %s" % (phase, cause))


# ---------------------------------------------------------------------------
# Agreement metrics


def cohens_kappa(pred_a, pred_b):
    """Chance-corrected agreement between two label sequences, in [-1, 1].

    Exact integer arithmetic until the final division, so full agreement is
    exactly 1.0. The degenerate case (both sequences constant and equal,
    chance agreement 1) is defined as 1.0.
    """
    pred_a, pred_b = list(pred_a), list(pred_b)
    if len(pred_a) != len(pred_b):
        raise OrchestratorError(
            "label sequences differ in length: %d vs %d" % (len(pred_a), len(pred_b))
        )
    n = len(pred_a)
    if n == 0:
        raise OrchestratorError("need at least one label pair")
    agree = sum(a == b for a, b in zip(pred_a, pred_b))
    count_a = Counter(pred_a)
    count_b = Counter(pred_b)
    chance = sum(count_a[k] * count_b.get(k, 0) for k in count_a)  # times n^2
    if chance == n * n:
        return 1.0
    return (agree * n - chance) / (n * n - chance)


def score(preds, truth):
    """Accuracy and macro-averaged F1 over the classes present in either
    sequence; a class seen on only one side scores F1 = 0 and still counts."""
    preds, truth = list(preds), list(truth)
    if len(preds) != len(truth):
        raise OrchestratorError(
            "label sequences differ in length: %d vs %d" % (len(preds), len(truth))
        )
    if not preds:
        raise OrchestratorError("need at least one label pair")
    accuracy = sum(p == t for p, t in zip(preds, truth)) / len(preds)
    f1s = []
    for cls in sorted(set(preds) | set(truth)):
        tp = sum(p == cls and t == cls for p, t in zip(preds, truth))
        fp = sum(p == cls and t != cls for p, t in zip(preds, truth))
        fn = sum(p != cls and t == cls for p, t in zip(preds, truth))
        denom = 2 * tp + fp + fn
        f1s.append(2 * tp / denom if denom else 0.0)
    return {"accuracy": accuracy, "macro_f1": sum(f1s) / len(f1s)}


# ---------------------------------------------------------------------------
# Translation dispatch

_TRANSLATORS = {
    mir.MODEL_DT: translate_dt,
    mir.MODEL_RF: translate_rf,
    mir.MODEL_SVM: translate_svm,
}


def translate_model(spec, cfg=None, mid=1, vid=1):
    try:
        fn = _TRANSLATORS[spec.kind]
    except KeyError:
        raise OrchestratorError("no translator for model kind %r" % spec.kind)
    return fn(spec, cfg, mid, vid)


# ---------------------------------------------------------------------------
# Simulated network runtime


class NetworkRuntime:
    """One VirtualDevice per network node plus per-request-id forwarding."""

    def __init__(self, net):
        self.net = net
        self.devices = {}
        for info in net.devices.values():
            self.devices[info.device_id] = VirtualDevice(
                info.device_id,
                programmable=info.programmable,
                config=DeviceConfig(
                    stage_count=info.stage_count,
                    tcam_capacity=info.tcam_capacity,
                    sram_capacity=info.sram_capacity,
                    mul_slots=info.mul_slots,
                ),
            )
        self._routes = {}  # rid -> (path, sink)

    def wire_path(self, rid, path, sink):
        """Point every device on the path at its successor under this rid."""
        if not 0 <= rid < (1 << pkt.RID_BITS):
            raise OrchestratorError("rid %d does not fit %d bits" % (rid, pkt.RID_BITS))
        route = (tuple(path), sink)
        known = self._routes.get(rid)
        if known is not None and known != route:
            raise OrchestratorError("rid %d already wired to a different path" % rid)
        for i, device in enumerate(path):
            if device not in self.devices:
                raise OrchestratorError("path device %r is not in the network" % device)
            egress = path[i + 1] if i + 1 < len(path) else sink
            self.devices[device].set_route(rid, egress)
        self._routes[rid] = route

    def deploy(self, program, plan, rid=0, sink="_sink"):
        """Install a plan's placements and wire its path under one rid."""
        per_device = {}
        for prog_stage, (device, dev_stage) in enumerate(plan.placements):
            per_device.setdefault(device, {})[prog_stage] = dev_stage
        for device, placement in per_device.items():
            if device not in self.devices:
                raise OrchestratorError("plan names unknown device %r" % device)
            self.devices[device].install(program, placement)
        self.wire_path(rid, plan.path, sink)

    def send(self, path, features, layout, mid=1, vid=1, packet_id=0, rid=0):
        """Walk one request along the path; returns (result, wire bytes per hop)."""
        request = pkt.make_request(packet_id, mid, vid, rid, features, layout)
        data = pkt.encode(request, layout)
        hop_bytes = []
        for device in path:
            _, data = self.devices[device].process_packet(data)
            hop_bytes.append(len(data))
        header = pkt.decode_header(data[: pkt.HEADER_BYTES])
        if header.ptype != pkt.TYPE_RESPONSE:
            raise OrchestratorError(
                "request %d reached the end of the path unanswered" % packet_id
            )
        response = pkt.decode(data)
        if response.header.packet_id != packet_id % PACKET_ID_SPACE:
            raise OrchestratorError(
                "response id %d does not match request id %d"
                % (response.header.packet_id, packet_id)
            )
        return response.header.rslt, hop_bytes

    def install_summary(self, devices=None):
        names = devices if devices is not None else sorted(self.devices)
        return [self.devices[d].query_resources() for d in names]


# ---------------------------------------------------------------------------
# Pipeline


@dataclass
class PipelineConfig:
    src: str | None = None  # default: first host in id order
    dst: str | None = None  # default: last host in id order
    mid: int = 1
    vid: int = 1
    rid: int = 0
    weights: tuple = pln.DEFAULT_WEIGHTS
    translate: TranslateConfig | None = None
    costs: pln.CostModel | None = None
    bandwidth: float = 1.0
    path_limit: int = topo.DEFAULT_PATH_LIMIT


@dataclass
class Deployment:
    """A deployed model: everything needed to push packets and read labels."""

    spec: mir.ModelSpec
    program: object
    problem: pln.PlannerProblem
    plan: pln.DeploymentPlan
    runtime: NetworkRuntime
    config: PipelineConfig
    _sent: int = field(default=0, repr=False)

    @property
    def layout(self):
        return self.program.meta.layout()

    def infer(self, features, packet_id=None):
        if packet_id is None:
            packet_id = self._sent % PACKET_ID_SPACE
        self._sent += 1
        label, _ = self.runtime.send(
            self.plan.path,
            features,
            self.layout,
            mid=self.config.mid,
            vid=self.config.vid,
            packet_id=packet_id,
            rid=self.config.rid,
        )
        return label

    def infer_rows(self, rows):
        """Labels for many rows plus wire-byte accounting."""
        labels = []
        wire_bytes = 0
        for i, row in enumerate(rows):
            label, hop_bytes = self.runtime.send(
                self.plan.path,
                row,
                self.layout,
                mid=self.config.mid,
                vid=self.config.vid,
                packet_id=i % PACKET_ID_SPACE,
                rid=self.config.rid,
            )
            labels.append(label)
            wire_bytes += sum(hop_bytes)
        return labels, wire_bytes

    def reference_labels(self, rows):
        cfg = self.config.translate or TranslateConfig()
        return [
            mir.reference_predict(self.spec, row, svm_index_bits=cfg.mul_index_bits)
            for row in rows
        ]

    def install_summary(self):
        used = list(dict.fromkeys(device for device, _ in self.plan.placements))
        return self.runtime.install_summary(used)


@dataclass
class RunReport:
    model_kind: str
    class_count: int
    plan: pln.DeploymentPlan
    resources: dict  # translated entry counts per (kind, resource)
    installs: list  # per-device usage after install
    predictions: tuple
    oracle_labels: tuple
    truth_labels: tuple
    metrics: dict
    counters: dict
    timings_ms: dict

    def to_dict(self):
        return {
            "model_kind": self.model_kind,
            "class_count": self.class_count,
            "plan": pln.plan_to_dict(self.plan),
            "resources": self.resources,
            "installs": [
                {**summary, "tables": {
                    "stage%d/%s/%d" % key: count
                    for key, count in summary["tables"].items()
                }}
                for summary in self.installs
            ],
            "predictions": list(self.predictions),
            "oracle_labels": list(self.oracle_labels),
            "truth_labels": list(self.truth_labels),
            "metrics": self.metrics,
            "counters": self.counters,
            "timings_ms": self.timings_ms,
        }


@contextmanager
def _phase(name, timings):
    begin = time.perf_counter()
    try:
        yield
    except PhaseError:
        raise
    except Exception as e:
        raise PhaseError(name, e) from e
    finally:
        timings[name] = round((time.perf_counter() - begin) * 1000.0, 3)


def parse_topology_spec(text):
    """'fat_tree:k=4' or 'jellyfish:n=10,d=3,seed=2' -> NetworkModel."""
    kind, _, arg_text = text.partition(":")
    params = {}
    if arg_text:
        for part in arg_text.split(","):
            key, eq, value = part.partition("=")
            if not eq:
                raise OrchestratorError(
                    "topology spec parameter %r is not key=value" % part
                )
            try:
                params[key.strip()] = int(value)
            except ValueError:
                raise OrchestratorError(
                    "topology spec parameter %r is not an integer" % part
                )
    return topo.generate(kind.strip(), **params)


def resolve_network(source):
    if isinstance(source, topo.NetworkModel):
        return source
    source = os.fspath(source)
    if os.path.exists(source):
        return topo.load_network(source)
    return parse_topology_spec(source)


def _resolve_model(source):
    if isinstance(source, mir.ModelSpec):
        return source
    return mir.load_model(source)


def _resolve_dataset(source):
    if source is None or isinstance(source, mir.Dataset):
        return source
    return mir.load_dataset_csv(source)


def _pick_hosts(net, config):
    hosts = sorted(net.hosts)
    src = config.src if config.src is not None else hosts[0]
    dst = config.dst if config.dst is not None else hosts[-1]
    if src == dst:
        raise OrchestratorError(
            "need two distinct hosts; the network offers %d" % len(hosts)
        )
    return src, dst


def deploy_pipeline(model, network, config=None, timings=None):
    """load -> translate -> plan -> install; returns a live Deployment."""
    config = config or PipelineConfig()
    timings = timings if timings is not None else {}
    with _phase("load", timings):
        spec = _resolve_model(model)
        net = resolve_network(network)
    with _phase("translate", timings):
        program = translate_model(spec, config.translate, config.mid, config.vid)
    with _phase("plan", timings):
        src, dst = _pick_hosts(net, config)
        paths = topo.enumerate_paths(net, src, dst, limit=config.path_limit)
        costs = config.costs or pln.CostModel.from_layout(
            program.meta.layout(), bandwidth=config.bandwidth
        )
        problem = pln.build_problem(
            program, net, paths, costs=costs, weights=config.weights
        )
        plan = pln.solve(problem)
        ok, violations = pln.validate_plan(plan, problem)
        if not ok:
            raise pln.PlanningError("; ".join(violations))
    with _phase("install", timings):
        runtime = NetworkRuntime(net)
        runtime.deploy(program, plan, rid=config.rid, sink=dst)
    return Deployment(
        spec=spec,
        program=program,
        problem=problem,
        plan=plan,
        runtime=runtime,
        config=config,
    )


def run_pipeline(model, network, dataset, config=None):
    """Full pass over a dataset; reproducible given identical inputs."""
    config = config or PipelineConfig()
    timings = {}
    deployment = deploy_pipeline(model, network, config, timings)
    with _phase("load_dataset", timings):
        data = _resolve_dataset(dataset)
        if data is None:
            raise OrchestratorError("run_pipeline needs a dataset; use "
                                    "deploy_pipeline for deploy-only runs")
    with _phase("infer", timings):
        predictions, wire_bytes = deployment.infer_rows(data.features)
        oracle = deployment.reference_labels(data.features)
    with _phase("score", timings):
        vs_truth = score(predictions, data.labels)
        metrics = {
            "kappa_vs_oracle": cohens_kappa(predictions, oracle),
            "accuracy_vs_oracle": score(predictions, oracle)["accuracy"],
            "accuracy": vs_truth["accuracy"],
            "macro_f1": vs_truth["macro_f1"],
        }
    layout = deployment.layout
    plan = deployment.plan
    counters = {
        "rows": len(data),
        "path_devices": len(plan.path),
        "last_device_position": plan.path.index(plan.last_device) + 1,
        "request_bytes": layout.request_bytes(),
        "response_bytes": layout.response_bytes(),
        "wire_bytes_total": wire_bytes,
    }
    return RunReport(
        model_kind=deployment.spec.kind,
        class_count=deployment.program.meta.class_count,
        plan=plan,
        resources=count_resources(deployment.program),
        installs=deployment.install_summary(),
        predictions=tuple(predictions),
        oracle_labels=tuple(oracle),
        truth_labels=tuple(data.labels),
        metrics=metrics,
        counters=counters,
        timings_ms=timings,
    )


# ---------------------------------------------------------------------------
# Planner benchmark sweep

TABLE5_SETUPS = (
    ("fat_tree", {"k": 12}),
    ("fat_tree", {"k": 16}),
    ("fat_tree", {"k": 20}),
    ("dcell", {"n": 3, "levels": 2}),
    ("dcell", {"n": 4, "levels": 2}),
    ("dcell", {"n": 5, "levels": 2}),
    ("bcube", {"n": 5, "levels": 2}),
    ("bcube", {"n": 7, "levels": 2}),
    ("bcube", {"n": 8, "levels": 2}),
    ("jellyfish", {"n": 80, "d": 3}),
    ("jellyfish", {"n": 125, "d": 4}),
    ("jellyfish", {"n": 170, "d": 3}),
)

DEFAULT_BENCH_STAGES = (2, 5, 10, 20)


@dataclass(frozen=True)
class BenchRow:
    topology: str
    params: str
    device_count: int
    path_count: int
    stage_total: int
    build_ms: float
    paths_ms: float
    solve_ms: float
    total_ms: float
    objective: float
    devices_used: int

    @staticmethod
    def header():
        return (
            "topology",
            "params",
            "devices",
            "paths",
            "stages",
            "build_ms",
            "paths_ms",
            "solve_ms",
            "total_ms",
            "objective",
            "devices_used",
        )

    def row(self):
        return (
            self.topology,
            self.params,
            self.device_count,
            self.path_count,
            self.stage_total,
            "%.1f" % self.build_ms,
            "%.1f" % self.paths_ms,
            "%.1f" % self.solve_ms,
            "%.1f" % self.total_ms,
            "%.4f" % self.objective,
            self.devices_used,
        )


def synthetic_stage_needs(stage_total, layer_entries=64):
    """Program shaped like a translated tree: layer stages, then a predict."""
    if stage_total < 1:
        raise OrchestratorError("need at least one stage")
    needs = []
    for _ in range(stage_total - 1):
        needs.append(
            pln.StageNeed(
                tables=(
                    (KIND_DT_LAYER, 0, layer_entries),
                    (KIND_DT_LAYER, 1, layer_entries),
                )
            )
        )
    needs.append(pln.StageNeed(tables=((KIND_DT_PREDICT, 0, layer_entries + 1),)))
    return tuple(needs)


def bench_planner(
    setups=TABLE5_SETUPS,
    stage_totals=DEFAULT_BENCH_STAGES,
    seed=0,
    path_limit=topo.DEFAULT_PATH_LIMIT,
    costs=None,
    weights=pln.DEFAULT_WEIGHTS,
):
    """Wall-clock table: one row per (topology setup, program size).

    Source and destination are the first and last host in id order, two
    different servers of the same network. The build and path enumeration
    times are shared across the program sizes of a setup but charged to
    every row so total_ms stands alone.
    """
    costs = costs or pln.CostModel(
        request_delay=16.0, response_delay=4.0, request_bytes=16, response_bytes=4
    )
    rows = []
    for kind, params in setups:
        t0 = time.perf_counter()
        net = topo.generate(kind, seed=seed, **params)
        t1 = time.perf_counter()
        hosts = sorted(net.hosts)
        paths = topo.enumerate_paths(net, hosts[0], hosts[-1], limit=path_limit)
        t2 = time.perf_counter()
        build_ms = (t1 - t0) * 1000.0
        paths_ms = (t2 - t1) * 1000.0
        for stage_total in stage_totals:
            problem = pln.PlannerProblem(
                name="%s %s x%d" % (kind, params, stage_total),
                stages=synthetic_stage_needs(stage_total),
                net=net,
                paths=paths,
                costs=costs,
                weights=weights,
            )
            t3 = time.perf_counter()
            plan = pln.solve(problem)
            solve_ms = (time.perf_counter() - t3) * 1000.0
            rows.append(
                BenchRow(
                    topology=kind,
                    params=",".join("%s=%s" % kv for kv in sorted(params.items())),
                    device_count=len(net.devices),
                    path_count=len(paths.paths),
                    stage_total=stage_total,
                    build_ms=build_ms,
                    paths_ms=paths_ms,
                    solve_ms=solve_ms,
                    total_ms=build_ms + paths_ms + solve_ms,
                    objective=plan.objective.total,
                    devices_used=int(plan.objective.devices),
                )
            )
    return rows
