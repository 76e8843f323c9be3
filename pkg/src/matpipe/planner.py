"""Placement planning for staged table programs on a network.

Given a translated program, a network, and a set of candidate paths between
the request's source and destination, the planner picks one path and assigns
every program stage to a device stage along it. The objective blends three
weighted terms: serving latency, number of devices used, and extra bytes
carried on the wire. Each path is solved exactly: program stages split into
contiguous runs over the path's programmable devices, device stages are
assigned greedily earliest-first inside a run (safe: any feasible increasing
assignment implies the greedy one), and a small dynamic program minimizes
device count per final-stage position. Candidates from all paths are merged
deterministically: lowest objective, then shorter path, then lexicographic.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace

from .topology import PathSet
from .translator import (
    KIND_DT_LAYER,
    KIND_DT_PREDICT,
    KIND_SVM_MUL,
    KIND_SVM_PREDICT,
    KIND_VOTING,
    RESOURCE_TCAM,
    kind_resource,
)

PLAN_FORMAT_VERSION = 1
DEFAULT_WEIGHTS = (1.0 / 3, 1.0 / 3, 1.0 / 3)
_INF = float("inf")


class PlanningError(Exception):
    pass


class InfeasibleError(PlanningError):
    pass


@dataclass(frozen=True)
class CostModel:
    """Time constants and packet sizes feeding the objective."""

    device_delay: float = 1.0  # per used device
    hop_delay: float = 1.0  # per hop of the chosen path
    request_delay: float = 1.0  # per hop carrying the full request
    response_delay: float = 1.0  # per hop carrying the short response
    request_bytes: int = 0
    response_bytes: int = 0

    @classmethod
    def from_layout(cls, layout, device_delay=1.0, hop_delay=1.0, bandwidth=1.0):
        req = layout.request_bytes()
        resp = layout.response_bytes()
        return cls(
            device_delay=device_delay,
            hop_delay=hop_delay,
            request_delay=req / bandwidth,
            response_delay=resp / bandwidth,
            request_bytes=req,
            response_bytes=resp,
        )


@dataclass(frozen=True)
class StageNeed:
    """What one program stage asks of a device stage."""

    tables: tuple  # of (kind, slot, entry_count)
    group: int | None = None  # stages sharing a group must share a device


@dataclass
class PlannerProblem:
    name: str
    stages: tuple
    net: object
    paths: PathSet
    costs: CostModel
    weights: tuple = DEFAULT_WEIGHTS
    # device id -> {(device_stage, kind, slot): already-installed entries}
    installed: dict = field(default_factory=dict)

    def __post_init__(self):
        w = self.weights
        if len(w) != 3 or any(x <= 0 for x in w) or abs(sum(w) - 1.0) > 1e-9:
            raise PlanningError("weights must be three positives summing to 1")
        if not self.stages:
            raise PlanningError("nothing to place: empty stage list")


@dataclass(frozen=True)
class DecisionVars:
    x: frozenset  # {(program_stage, device_stage, device_id)}
    y: frozenset  # {device_id}
    z: int | None  # chosen path index
    c: tuple  # ((path_index, device_id),) last-stage markers


@dataclass(frozen=True)
class ObjectiveBreakdown:
    latency: float
    devices: float
    overhead: float
    total: float


@dataclass
class SolveStats:
    nodes: int = 0
    wall_ms: float = 0.0
    paths_total: int = 0
    paths_feasible: int = 0


@dataclass
class DeploymentPlan:
    path: tuple
    placements: tuple  # (device_id, device_stage) per program stage
    last_device: str
    objective: ObjectiveBreakdown
    stats: SolveStats | None = field(default=None, compare=False)


def _position(path, device):
    # 1-indexed position on the path, 0 when absent
    try:
        return path.index(device) + 1
    except ValueError:
        return 0


def objective(vars, problem):
    c = problem.costs
    w_l, w_d, w_o = problem.weights
    latency = c.device_delay * len(vars.y)
    if vars.z is not None:
        latency += c.hop_delay * len(problem.paths.paths[vars.z])
    overhead = 0.0
    for path_index, device in vars.c:
        path = problem.paths.paths[path_index]
        pos = _position(path, device)
        tail = len(path) - pos
        latency += c.request_delay * pos + c.response_delay * tail
        overhead += c.request_bytes * pos + c.response_bytes * tail
    devices = float(len(vars.y))
    total = w_l * latency + w_d * devices + w_o * overhead
    return ObjectiveBreakdown(latency, devices, overhead, total)


def plan_to_vars(plan, problem):
    try:
        z = problem.paths.paths.index(plan.path)
    except ValueError:
        z = None
    x = frozenset(
        (i, dev_stage, dev) for i, (dev, dev_stage) in enumerate(plan.placements)
    )
    y = frozenset(dev for dev, _ in plan.placements)
    c = ((z, plan.last_device),) if z is not None else ()
    return DecisionVars(x=x, y=y, z=z, c=c)


# ---------------------------------------------------------------------------
# Fit checks


def _slot_exists(kind, slot, info):
    if kind == KIND_DT_LAYER:
        return 0 <= slot < 2
    if kind == KIND_SVM_MUL:
        return 0 <= slot < info.mul_slots
    if kind in (KIND_DT_PREDICT, KIND_VOTING, KIND_SVM_PREDICT):
        return slot == 0
    return False


def _capacity(kind, info):
    if kind_resource(kind) == RESOURCE_TCAM:
        return info.tcam_capacity
    return info.sram_capacity


def _fits(need, info, installed, dev_stage):
    for kind, slot, count in need.tables:
        if not _slot_exists(kind, slot, info):
            return False
        free = _capacity(kind, info) - installed.get((dev_stage, kind, slot), 0)
        if free < count:
            return False
    return True


# ---------------------------------------------------------------------------
# Per-path exact search


def _cut_points(stages):
    # ok[b]: the boundary between stage b-1 and stage b may separate devices
    count = len(stages)
    ok = [True] * (count + 1)
    for b in range(1, count):
        left = stages[b - 1].group
        right = stages[b].group
        ok[b] = left is None or right is None or left != right
    return ok


def _greedy_run(problem, stages, info, installed, start, floor_stage):
    """From program stage `start`, how far one device reaches; returns
    (stop, device_stages)."""
    reached = start
    assigned = []
    dev_stage = floor_stage
    while reached < len(stages):
        dev_stage += 1
        while dev_stage < info.stage_count and not _fits(
            stages[reached], info, installed, dev_stage
        ):
            dev_stage += 1
        if dev_stage >= info.stage_count:
            break
        assigned.append(dev_stage)
        reached += 1
    return reached, assigned


def _solve_on_path(problem, path, floor, stats):
    stages = problem.stages
    count = len(stages)
    length = len(path)
    floor_pos, floor_stage = floor if floor else (0, -1)
    cut_ok = _cut_points(stages)

    reach = {}  # (pos, start) -> (stop, device_stages)
    for pos in range(1, length + 1):
        info = problem.net.devices[path[pos - 1]]
        if not info.programmable or pos < floor_pos + 1:
            continue
        base = floor_stage if pos == floor_pos + 1 else -1
        installed = problem.installed.get(path[pos - 1], {})
        for start in range(count):
            reach[(pos, start)] = _greedy_run(
                problem, stages, info, installed, start, base
            )

    table = [[_INF] * (length + 1) for _ in range(count + 1)]
    table[0][0] = 0.0
    for placed in range(1, count + 1):
        if not cut_ok[placed]:
            continue
        for pos in range(1, length + 1):
            best = _INF
            for start in range(placed):
                if not cut_ok[start]:
                    continue
                got = reach.get((pos, start))
                stats.nodes += 1
                if got is None or got[0] < placed:
                    continue
                prev = min(table[start][:pos])
                if prev + 1 < best:
                    best = prev + 1
            table[placed][pos] = best

    candidates = []
    for pos in range(1, length + 1):
        if table[count][pos] < _INF:
            placements = _reconstruct(problem, path, table, reach, cut_ok, pos)
            candidates.append(placements)
    progress = max(
        (placed for placed in range(count + 1) if min(table[placed]) < _INF),
        default=0,
    )
    return candidates, progress


def _reconstruct(problem, path, table, reach, cut_ok, final_pos):
    placements = []
    placed, pos = len(problem.stages), final_pos
    while placed > 0:
        want = table[placed][pos] - 1
        start = None
        for cand in range(placed):
            if not cut_ok[cand]:
                continue
            got = reach.get((pos, cand))
            if got is None or got[0] < placed:
                continue
            if min(table[cand][:pos]) == want:
                start = cand
                break
        if start is None:  # cannot happen for a reachable table cell
            raise PlanningError("internal: lost the placement trail")
        device = path[pos - 1]
        stage_slots = reach[(pos, start)][1]
        run = [
            (device, stage_slots[i - start]) for i in range(start, placed)
        ]
        placements = run + placements
        prev_pos = next(
            p for p in range(pos) if table[start][p] == want
        )
        placed, pos = start, prev_pos
    return tuple(placements)


def solve(problem, floor=None):
    """Exact minimum-objective plan over the problem's candidate paths."""
    stats = SolveStats(paths_total=len(problem.paths.paths))
    begin = time.perf_counter()
    best = None
    best_key = None
    progress = {}
    for path in problem.paths.paths:
        candidates, reached = _solve_on_path(problem, path, floor, stats)
        progress[path] = reached
        if candidates:
            stats.paths_feasible += 1
        for placements in candidates:
            plan = DeploymentPlan(
                path=path,
                placements=placements,
                last_device=placements[-1][0],
                objective=ObjectiveBreakdown(0, 0, 0, 0),
            )
            breakdown = objective(plan_to_vars(plan, problem), problem)
            plan.objective = breakdown
            key = (breakdown.total, len(path), path, placements)
            if best_key is None or key < best_key:
                best, best_key = plan, key
    stats.wall_ms = (time.perf_counter() - begin) * 1000.0
    if best is None:
        raise InfeasibleError(_describe_blockage(problem, progress, floor))
    best.stats = stats
    return best


def _describe_blockage(problem, progress, floor):
    if not progress:
        return "%s: no candidate paths" % problem.name
    path = max(progress, key=lambda p: (progress[p], -len(p)))
    blocked = progress[path]
    if blocked >= len(problem.stages):
        return "%s: feasible placements exist per stage but no path admits a full ordering" % problem.name
    need = problem.stages[blocked]
    worst = None
    for kind, slot, count in need.tables:
        best_free = -1
        where = None
        for device in path:
            info = problem.net.devices[device]
            if not info.programmable or not _slot_exists(kind, slot, info):
                continue
            installed = problem.installed.get(device, {})
            for dev_stage in range(info.stage_count):
                free = _capacity(kind, info) - installed.get(
                    (dev_stage, kind, slot), 0
                )
                if free > best_free:
                    best_free, where = free, (device, dev_stage)
        deficit = count - best_free
        if worst is None or deficit > worst[0]:
            worst = (deficit, kind, slot, count, best_free, where)
    deficit, kind, slot, count, best_free, where = worst
    spot = "%s stage %d" % where if where else "any device"
    extra = " (placement floor active)" if floor else ""
    return (
        "%s: program stage %d does not fit any path; tightest table %s[%d] "
        "needs %d entries, best free is %d at %s%s"
        % (problem.name, blocked, kind, slot, count, max(best_free, 0), spot, extra)
    )


# ---------------------------------------------------------------------------
# Multi-problem sequential planning


def plan_multi(problems):
    """Solve related problems in pipeline order on one shared network.

    The first solve picks the path; later problems stay on it, start strictly
    after the previous problem's last placement, and see capacity already
    consumed by earlier plans.
    """
    if not problems:
        return []
    net = problems[0].net
    installed = {
        dev: dict(tables) for dev, tables in problems[0].installed.items()
    }
    plans = []
    fixed_paths = None
    floor = None
    for problem in problems:
        if problem.net is not net:
            raise PlanningError("plan_multi problems must share one network")
        scoped = replace(
            problem, installed=installed, paths=fixed_paths or problem.paths
        )
        try:
            plan = solve(scoped, floor=floor)
        except InfeasibleError as e:
            raise InfeasibleError(str(e)) from None
        plans.append(plan)
        if fixed_paths is None:
            fixed_paths = replace(problem.paths, paths=(plan.path,))
        for need, (device, dev_stage) in zip(problem.stages, plan.placements):
            per_device = installed.setdefault(device, {})
            for kind, slot, count in need.tables:
                key = (dev_stage, kind, slot)
                per_device[key] = per_device.get(key, 0) + count
        last_device, last_stage = plan.placements[-1]
        floor = (plan.path.index(last_device), last_stage)
    return plans


def merge_plans(whole_problem, plans):
    if not plans:
        raise PlanningError("no plans to merge")
    path = plans[0].path
    if any(plan.path != path for plan in plans):
        raise PlanningError("plans disagree on the path")
    placements = tuple(pl for plan in plans for pl in plan.placements)
    merged = DeploymentPlan(
        path=path,
        placements=placements,
        last_device=placements[-1][0],
        objective=ObjectiveBreakdown(0, 0, 0, 0),
    )
    merged.objective = objective(plan_to_vars(merged, whole_problem), whole_problem)
    return merged


# ---------------------------------------------------------------------------
# Validation


def validate_plan(plan, problem):
    """Re-check every constraint family; returns (ok, violations)."""
    v = []
    stages = problem.stages
    if plan.path not in problem.paths.paths:
        v.append("path %r is not among the candidates" % (plan.path,))
    if len(plan.placements) != len(stages):
        v.append(
            "plan places %d stages, program has %d"
            % (len(plan.placements), len(stages))
        )
        return False, v
    last_pos = 0
    last_stage_on_device = {}
    group_device = {}
    loads = {}
    for i, (device, dev_stage) in enumerate(plan.placements):
        info = problem.net.devices.get(device)
        if info is None:
            v.append("stage %d on unknown device %r" % (i, device))
            continue
        if not info.programmable:
            v.append("stage %d on non-programmable device %s" % (i, device))
        if not 0 <= dev_stage < info.stage_count:
            v.append(
                "stage %d uses device stage %d outside 0..%d on %s"
                % (i, dev_stage, info.stage_count - 1, device)
            )
            continue
        pos = _position(plan.path, device)
        if pos == 0:
            v.append("stage %d placed off the chosen path (%s)" % (i, device))
        elif pos < last_pos:
            v.append("stage %d placed earlier on the path than stage %d" % (i, i - 1))
        else:
            last_pos = pos
        prev = last_stage_on_device.get(device)
        if prev is not None and dev_stage <= prev:
            v.append(
                "stage %d reuses device stage %d on %s out of order"
                % (i, dev_stage, device)
            )
        last_stage_on_device[device] = dev_stage
        group = stages[i].group
        if group is not None:
            anchor = group_device.setdefault(group, device)
            if anchor != device:
                v.append(
                    "group %s split across devices %s and %s" % (group, anchor, device)
                )
        for kind, slot, count in stages[i].tables:
            if not _slot_exists(kind, slot, info):
                v.append(
                    "stage %d wants missing table %s[%d] on %s" % (i, kind, slot, device)
                )
                continue
            key = (device, dev_stage, kind, slot)
            loads[key] = loads.get(key, 0) + count
    for (device, dev_stage, kind, slot), count in sorted(loads.items()):
        info = problem.net.devices[device]
        already = problem.installed.get(device, {}).get((dev_stage, kind, slot), 0)
        cap = _capacity(kind, info)
        if already + count > cap:
            v.append(
                "capacity exceeded on %s stage %d %s[%d]: %d over %d"
                % (device, dev_stage, kind, slot, already + count, cap)
            )
    if plan.placements and plan.last_device != plan.placements[-1][0]:
        v.append(
            "last_device %s does not match final placement %s"
            % (plan.last_device, plan.placements[-1][0])
        )
    want = objective(plan_to_vars(plan, problem), problem)
    if abs(want.total - plan.objective.total) > 1e-9:
        v.append(
            "objective drifted: plan says %.6f, recomputed %.6f"
            % (plan.objective.total, want.total)
        )
    return not v, v


# ---------------------------------------------------------------------------
# Problem construction from a translated program


def stage_needs(program):
    needs = []
    for stage in program.stages:
        tables = tuple(
            (table.kind, table.slot, len(table.entries)) for table in stage.tables
        )
        needs.append(StageNeed(tables=tables, group=stage.group))
    return tuple(needs)


def build_problem(
    program, net, paths, costs=None, weights=DEFAULT_WEIGHTS, installed=None, name=None
):
    if costs is None:
        costs = CostModel.from_layout(program.meta.layout())
    return PlannerProblem(
        name=name or ("model %d.%d" % (program.meta.mid, program.meta.vid)),
        stages=stage_needs(program),
        net=net,
        paths=paths,
        costs=costs,
        weights=weights,
        installed=installed or {},
    )


def decompose_ranges(program):
    """Named contiguous stage ranges solved one at a time: per tree or per
    hyperplane, with the shared final stage as its own range."""
    kinds = [
        tuple(table.kind for table in stage.tables) for stage in program.stages
    ]
    total = len(kinds)
    ranges = []
    if program.meta.kind == "dt":
        return [("tree 0", 0, total)]
    if program.meta.kind == "rf":
        start = 0
        tree = 0
        for i, stage_kinds in enumerate(kinds[:-1]):
            if KIND_DT_PREDICT in stage_kinds:
                ranges.append(("tree %d" % tree, start, i + 1))
                start = i + 1
                tree += 1
        ranges.append(("voting", total - 1, total))
        return ranges
    start = 0
    for i in range(total - 1):
        group = program.stages[i].group
        next_group = program.stages[i + 1].group if i + 1 < total - 1 else None
        if group != next_group:
            ranges.append(("hyperplane %s" % group, start, i + 1))
            start = i + 1
    ranges.append(("predict", total - 1, total))
    return ranges


def decompose_problem(problem, program):
    return [
        replace(problem, name=name, stages=problem.stages[start:end])
        for name, start, end in decompose_ranges(program)
    ]


# ---------------------------------------------------------------------------
# Plan file


def plan_to_dict(plan):
    return {
        "format_version": PLAN_FORMAT_VERSION,
        "path": list(plan.path),
        "placements": [
            {"program_stage": i, "device": dev, "device_stage": stage}
            for i, (dev, stage) in enumerate(plan.placements)
        ],
        "last_device": plan.last_device,
        "objective": {
            "latency": plan.objective.latency,
            "devices": plan.objective.devices,
            "overhead": plan.objective.overhead,
            "total": plan.objective.total,
        },
    }


def plan_from_dict(obj):
    if obj.get("format_version") != PLAN_FORMAT_VERSION:
        raise PlanningError(
            "unsupported plan format_version %r" % obj.get("format_version")
        )
    records = sorted(obj["placements"], key=lambda r: r["program_stage"])
    if [r["program_stage"] for r in records] != list(range(len(records))):
        raise PlanningError("plan placements must cover stages 0..n-1 once each")
    o = obj["objective"]
    return DeploymentPlan(
        path=tuple(obj["path"]),
        placements=tuple((r["device"], r["device_stage"]) for r in records),
        last_device=obj["last_device"],
        objective=ObjectiveBreakdown(
            o["latency"], o["devices"], o["overhead"], o["total"]
        ),
    )


def save_plan(plan, path):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(plan_to_dict(plan), f, indent=1)
        f.write("\n")


def load_plan(path):
    with open(path, "r", encoding="utf-8") as f:
        try:
            obj = json.load(f)
        except json.JSONDecodeError as e:
            raise PlanningError("plan file is not JSON: %s" % e)
    return plan_from_dict(obj)
