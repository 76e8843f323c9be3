"""Virtual programmable devices: staged match-action pipelines.

A device holds up to ``stage_count`` pipeline stages. Each stage offers a
fixed block layout of table slots: two ternary tree-step tables, a row of
exact product tables, and one slot each for the exact result tables. Entries
are installed tagged with (model id, version id) so several models can share
a device and be flushed independently. Packets are processed one stage at a
time with parallel-read semantics: every table in a stage matches against
the register state left by the previous stage, then all fired actions apply.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from . import packet as pkt
from .model_ir import sign_bit, svm_table_index, wrap_signed
from .ternary import TernaryKey, matches as ternary_matches
from .translator import (
    KIND_DT_LAYER,
    KIND_DT_PREDICT,
    KIND_SVM_MUL,
    KIND_SVM_PREDICT,
    KIND_VOTING,
    RESOURCE_TCAM,
    TableProgram,
    kind_resource,
    read_entries_file,
)


class DataPlaneError(Exception):
    pass


class CapacityError(DataPlaneError):
    pass


@dataclass(frozen=True)
class DeviceConfig:
    """Capacities; defaults are deliberate round numbers, not measurements."""

    stage_count: int = 20
    tcam_capacity: int = 2048
    sram_capacity: int = 4096
    mul_slots: int = 4


# Table slots available in every stage, per kind. Evaluation order within a
# stage is fixed but irrelevant: all tables read the same pre-stage state.
_KIND_ORDER = (KIND_DT_LAYER, KIND_SVM_MUL, KIND_DT_PREDICT, KIND_VOTING, KIND_SVM_PREDICT)


def _slots_for_kind(kind, config):
    if kind == KIND_DT_LAYER:
        return 2
    if kind == KIND_SVM_MUL:
        return config.mul_slots
    if kind in (KIND_DT_PREDICT, KIND_VOTING, KIND_SVM_PREDICT):
        return 1
    return 0


@dataclass
class PacketContext:
    """Live register state while a request walks one device's stages."""

    features: tuple
    value_bits: int
    code_bits: int
    acc_bits: int
    mul_index_bits: int
    code_0: int = 0
    code_1: int = 0
    f0: int = 0
    f1: int = 0
    slots: list = field(default_factory=list)
    accs: list = field(default_factory=list)
    final: int | None = None
    slots_written: set = field(default_factory=set)

    def read(self, name):
        if name == "code_0":
            return self.code_0
        if name == "code_1":
            return self.code_1
        if name == "f0":
            return self.f0
        if name == "f1":
            return self.f1
        if name == "sign_pattern":
            bits = 0
            for h, acc in enumerate(self.accs):
                bits |= sign_bit(acc, self.acc_bits) << h
            return bits
        if name.startswith("slot"):
            return self.slots[int(name[4:])]
        if name.startswith("feat"):
            q = self.features[int(name[4:])]
            return svm_table_index(q, self.value_bits, self.mul_index_bits)
        raise DataPlaneError("unknown match field %r" % name)


class _InstalledModel:
    def __init__(self, program: TableProgram, placement):
        self.meta = program.meta
        self.init = program.init
        self.layout = program.meta.layout()
        self.has_init = 0 in placement
        self.has_final = program.final_stage_index() in placement
        self.placement = dict(placement)
        # device stage -> [((kind, slot), entries)], evaluation order fixed
        self.stage_tables = {}
        order = {k: i for i, k in enumerate(_KIND_ORDER)}
        for prog_stage, dev_stage in placement.items():
            tables = []
            for table in program.stages[prog_stage].tables:
                tables.append(((table.kind, table.slot), list(table.entries)))
            tables.sort(key=lambda item: (order[item[0][0]], item[0][1]))
            self.stage_tables[dev_stage] = tables

    @property
    def device_stages(self):
        return sorted(self.stage_tables)


class VirtualDevice:
    def __init__(self, device_id, programmable=True, config=None):
        self.device_id = device_id
        self.programmable = programmable
        self.config = config or DeviceConfig()
        self.forwarding = {}  # rid -> egress (opaque to the device)
        self.models = {}  # (mid, vid) -> _InstalledModel
        # (stage, kind, slot) -> {(mid, vid): entry count}, for capacity math
        self._counts = {}

    # -- control plane ------------------------------------------------------

    def set_route(self, rid, egress):
        self.forwarding[rid] = egress

    def table_capacity(self, kind):
        if kind_resource(kind) == RESOURCE_TCAM:
            return self.config.tcam_capacity
        return self.config.sram_capacity

    def installed_count(self, stage, kind, slot):
        return sum(self._counts.get((stage, kind, slot), {}).values())

    def install(self, program: TableProgram, placement=None):
        """Install a program's stages at the given device stages.

        placement maps program stage index -> device stage index; identity
        when omitted. Rejects the whole install (no partial state) if any
        table would not fit.
        """
        if not self.programmable:
            raise DataPlaneError("device %r is not programmable" % self.device_id)
        if placement is None:
            placement = {i: i for i in range(program.stage_count)}
        if not placement:
            raise DataPlaneError("empty placement")
        tag = (program.meta.mid, program.meta.vid)
        if tag in self.models:
            raise DataPlaneError(
                "model (%d, %d) already installed on device %r" % (tag + (self.device_id,))
            )
        last_dev = -1
        for prog_stage in sorted(placement):
            dev_stage = placement[prog_stage]
            if not 0 <= prog_stage < program.stage_count:
                raise DataPlaneError("program has no stage %d" % prog_stage)
            if not 0 <= dev_stage < self.config.stage_count:
                raise DataPlaneError(
                    "device %r has no stage %d" % (self.device_id, dev_stage)
                )
            if dev_stage <= last_dev:
                raise DataPlaneError(
                    "placement must map later program stages to later device stages"
                )
            last_dev = dev_stage
        # Dry-run capacity check before touching shared state.
        additions = {}
        for prog_stage, dev_stage in placement.items():
            for table in program.stages[prog_stage].tables:
                if _slots_for_kind(table.kind, self.config) == 0:
                    raise DataPlaneError("unknown table kind %r" % table.kind)
                if not 0 <= table.slot < _slots_for_kind(table.kind, self.config):
                    raise DataPlaneError(
                        "no slot %d for %s tables on device %r"
                        % (table.slot, table.kind, self.device_id)
                    )
                key = (dev_stage, table.kind, table.slot)
                additions[key] = additions.get(key, 0) + len(table.entries)
        for key, extra in additions.items():
            have = self.installed_count(*key)
            cap = self.table_capacity(key[1])
            if have + extra > cap:
                raise CapacityError(
                    "device %r stage %d %s[%d]: %d entries over capacity %d"
                    % (self.device_id, key[0], key[1], key[2], have + extra, cap)
                )
        for key, extra in additions.items():
            if extra:
                self._counts.setdefault(key, {})[tag] = extra
        self.models[tag] = _InstalledModel(program, placement)

    def install_entries_file(self, path, placement=None):
        self.install(read_entries_file(path), placement)

    def flush_model(self, mid, vid):
        tag = (mid, vid)
        self.models.pop(tag, None)
        for key in list(self._counts):
            self._counts[key].pop(tag, None)
            if not self._counts[key]:
                del self._counts[key]

    def query_resources(self):
        tables = {
            key: sum(per.values()) for key, per in sorted(self._counts.items())
        }
        used = sorted({stage for stage, _, _ in tables})
        return {
            "device_id": self.device_id,
            "programmable": self.programmable,
            "stage_count": self.config.stage_count,
            "tables": tables,
            "models": sorted(self.models),
            "used_stages": used,
            "free_stages": self.config.stage_count - len(used),
        }

    # -- data plane ---------------------------------------------------------

    def process_packet(self, data):
        """One hop: returns (egress, packet bytes out)."""
        try:
            header = pkt.decode_header(bytes(data[: pkt.HEADER_BYTES]))
        except pkt.PacketError as e:
            raise DataPlaneError("malformed packet: %s" % e)
        if header.rid not in self.forwarding:
            raise DataPlaneError(
                "device %r has no route for rid %d" % (self.device_id, header.rid)
            )
        egress = self.forwarding[header.rid]
        if header.ptype != pkt.TYPE_REQUEST or not self.programmable:
            return egress, data
        model = self.models.get((header.mid, header.vid))
        if model is None:
            return egress, data
        try:
            packet = pkt.decode(data, model.layout)
        except pkt.PacketError as e:
            raise DataPlaneError("malformed packet: %s" % e)
        ctx = self._make_context(packet, model)
        for dev_stage in model.device_stages:
            self._run_stage(ctx, model.stage_tables[dev_stage])
        if model.has_final:
            label = self._final_label(ctx, model)
            return egress, pkt.encode(pkt.make_response(header, label))
        out = replace(
            packet,
            code_0=ctx.code_0,
            code_1=ctx.code_1,
            f0=ctx.f0,
            f1=ctx.f1,
            slots=tuple(ctx.slots),
            accumulators=tuple(ctx.accs),
        )
        return egress, pkt.encode(out, model.layout)

    def _make_context(self, packet, model):
        meta = model.meta
        ctx = PacketContext(
            features=packet.features,
            value_bits=meta.quantization.value_bits,
            code_bits=meta.code_bits,
            acc_bits=meta.quantization.acc_bits,
            mul_index_bits=meta.mul_index_bits,
            slots=list(packet.slots),
            accs=list(packet.accumulators),
        )
        if model.has_init:
            init = model.init
            ctx.code_0 = init.code_0
            ctx.code_1 = init.code_1
            self._apply_loads(ctx, init.loads)
            ctx.accs = list(init.acc_init)
        else:
            ctx.code_0 = packet.code_0
            ctx.code_1 = packet.code_1
            ctx.f0 = packet.f0
            ctx.f1 = packet.f1
        return ctx

    def _run_stage(self, ctx, tables):
        fired = []
        step_actions = 0
        for (kind, _slot), entries in tables:
            winner = self._match_table(ctx, kind, entries)
            if winner is None:
                continue
            if kind == KIND_DT_LAYER:
                step_actions += 1
            fired.append(winner.action)
        if step_actions > 1:
            raise DataPlaneError("two tree-step actions fired in one stage")
        for action in fired:
            self._apply_action(ctx, action)

    def _match_table(self, ctx, kind, entries):
        best = None
        best_priority = None
        tied = False
        for entry in entries:
            if not all(self._key_matches(ctx, name, key) for name, key in entry.keys):
                continue
            if best is None or entry.priority > best_priority:
                best, best_priority, tied = entry, entry.priority, False
            elif entry.priority == best_priority:
                tied = True
        if tied:
            raise DataPlaneError("ambiguous match in %s table" % kind)
        return best

    def _key_matches(self, ctx, name, key):
        value = ctx.read(name)
        if isinstance(key, TernaryKey):
            return ternary_matches(key, value)
        return value == key

    def _apply_loads(self, ctx, loads):
        mask = (1 << ctx.value_bits) - 1
        for register, feature_index in loads:
            value = ctx.features[feature_index] & mask
            if register == "f0":
                ctx.f0 = value
            elif register == "f1":
                ctx.f1 = value
            else:
                raise DataPlaneError("unknown feature register %r" % register)

    def _apply_action(self, ctx, action):
        if action.kind == "write_code":
            code = action.code & ((1 << ctx.code_bits) - 1)
            if action.target == "code_0":
                ctx.code_0 = code
            elif action.target == "code_1":
                ctx.code_1 = code
            else:
                raise DataPlaneError("unknown code register %r" % action.target)
            self._apply_loads(ctx, action.loads)
        elif action.kind == "set_dt_result":
            ctx.slots[action.tree_slot] = action.label
            ctx.slots_written.add(action.tree_slot)
            if action.reset is not None:
                ctx.code_0, ctx.code_1 = action.reset
            self._apply_loads(ctx, action.loads)
        elif action.kind == "set_vote":
            ctx.final = action.label
        elif action.kind == "add_product":
            h = action.hyperplane
            ctx.accs[h] = wrap_signed(ctx.accs[h] + action.product, ctx.acc_bits)
        elif action.kind == "set_svm_result":
            ctx.final = action.label
        else:
            raise DataPlaneError("unknown action kind %r" % action.kind)

    def _final_label(self, ctx, model):
        if model.meta.kind == "dt":
            label = ctx.slots[0] if 0 in ctx.slots_written else None
        else:
            label = ctx.final
        if label is None:
            raise DataPlaneError("pipeline finished without a result")
        return label
