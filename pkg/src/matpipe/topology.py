"""Network model, topology generators, and candidate path enumeration.

Four standard datacenter fabrics are generated by construction: k-ary
fat-tree, DCell, BCube, and jellyfish (seeded random regular graph). Switches
are programmable devices; the server nodes of the server-centric fabrics
relay traffic but run no tables. Path candidates between two hosts are the
simple device paths in shortest-first order with lexicographic tie-breaking,
capped by a configurable limit.
"""

from __future__ import annotations

import heapq
import itertools
import json
from dataclasses import asdict, dataclass, field

import networkx as nx

TOPOLOGY_FORMAT_VERSION = 1
DEFAULT_PATH_LIMIT = 64


class TopologyError(ValueError):
    pass


@dataclass(frozen=True)
class DeviceInfo:
    device_id: str
    programmable: bool = True
    stage_count: int = 20
    tcam_capacity: int = 2048
    sram_capacity: int = 4096
    mul_slots: int = 4
    edge: bool = False  # has hosts attached


@dataclass
class NetworkModel:
    kind: str
    params: dict
    devices: dict
    links: tuple  # sorted (a, b) pairs, a < b
    hosts: dict  # host id -> device id
    _adjacency: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        adj = {d: [] for d in self.devices}
        for a, b in self.links:
            if a not in self.devices or b not in self.devices:
                raise TopologyError("link (%s, %s) references unknown device" % (a, b))
            adj[a].append(b)
            adj[b].append(a)
        for d in adj:
            adj[d].sort()
        self._adjacency = adj
        for host, dev in self.hosts.items():
            if dev not in self.devices:
                raise TopologyError("host %s attached to unknown device %s" % (host, dev))
        if self.devices and not self._connected():
            raise TopologyError("network is not connected")

    def _connected(self):
        start = next(iter(self.devices))
        seen = {start}
        stack = [start]
        while stack:
            for n in self._adjacency[stack.pop()]:
                if n not in seen:
                    seen.add(n)
                    stack.append(n)
        return len(seen) == len(self.devices)

    def neighbors(self, device_id):
        return self._adjacency[device_id]

    def device_count(self):
        return len(self.devices)

    def switch_count(self):
        return sum(1 for d in self.devices.values() if d.programmable)


@dataclass(frozen=True)
class PathSet:
    src: str
    dst: str
    src_device: str
    dst_device: str
    paths: tuple  # tuple of device-id tuples, shortest first


def _norm_link(a, b):
    return (a, b) if a < b else (b, a)


def _build(kind, params, devices, links, hosts):
    links = tuple(sorted(set(_norm_link(a, b) for a, b in links)))
    edge_devices = set(hosts.values())
    devices = {
        d.device_id: (
            DeviceInfo(**{**asdict(d), "edge": d.device_id in edge_devices})
        )
        for d in devices
    }
    return NetworkModel(kind=kind, params=params, devices=devices, links=links, hosts=hosts)


# ---------------------------------------------------------------------------
# Generators


def fat_tree(k):
    if k < 2 or k % 2:
        raise TopologyError("fat_tree needs an even k >= 2, got %r" % k)
    half = k // 2
    devices = []
    links = []
    cores = ["core%03d" % i for i in range(half * half)]
    devices += [DeviceInfo(c) for c in cores]
    hosts = {}
    for pod in range(k):
        aggs = ["agg%03d_%03d" % (pod, a) for a in range(half)]
        edges = ["edge%03d_%03d" % (pod, e) for e in range(half)]
        devices += [DeviceInfo(d) for d in aggs + edges]
        for e in edges:
            links += [(e, a) for a in aggs]
        for a_idx, a in enumerate(aggs):
            links += [(a, cores[a_idx * half + c]) for c in range(half)]
        for e_idx, e in enumerate(edges):
            hosts["h%03d_%03d" % (pod, e_idx)] = e
    return _build("fat_tree", {"k": k}, devices, links, hosts)


def dcell(n, levels):
    if n < 2 or levels < 0:
        raise TopologyError("dcell needs n >= 2 and levels >= 0")
    devices = []
    links = []

    def build_cell(prefix, level):
        # Returns the cell's server ids in uid order.
        if level == 0:
            tag = "_".join("%02d" % p for p in prefix) or "0"
            switch = "sw%s" % tag
            devices.append(DeviceInfo(switch))
            servers = ["srv%s_%02d" % (tag, i) for i in range(n)]
            devices.extend(DeviceInfo(s, programmable=False) for s in servers)
            links.extend((switch, s) for s in servers)
            return servers
        subs = []
        size = _dcell_servers(n, level - 1)
        for i in range(size + 1):
            subs.append(build_cell(prefix + (i,), level - 1))
        for i in range(len(subs)):
            for j in range(i + 1, len(subs)):
                links.append((subs[i][j - 1], subs[j][i]))
        return list(itertools.chain.from_iterable(subs))

    servers = build_cell((), levels)
    hosts = {"h%04d" % i: s for i, s in enumerate(servers)}
    return _build("dcell", {"n": n, "levels": levels}, devices, links, hosts)


def _dcell_servers(n, level):
    t = n
    for _ in range(level):
        t = t * (t + 1)
    return t


def bcube(n, levels):
    if n < 2 or levels < 0:
        raise TopologyError("bcube needs n >= 2 and levels >= 0")
    digits = levels + 1
    devices = []
    links = []
    servers = {}
    for addr in itertools.product(range(n), repeat=digits):
        name = "srv" + "_".join("%02d" % a for a in addr)
        servers[addr] = name
        devices.append(DeviceInfo(name, programmable=False))
    for level in range(digits):
        for rest in itertools.product(range(n), repeat=digits - 1):
            switch = "sw%d_" % level + "_".join("%02d" % r for r in rest)
            devices.append(DeviceInfo(switch))
            for port in range(n):
                addr = rest[:level] + (port,) + rest[level:]
                links.append((switch, servers[addr]))
    hosts = {
        "h%04d" % i: servers[addr] for i, addr in enumerate(sorted(servers))
    }
    return _build("bcube", {"n": n, "levels": levels}, devices, links, hosts)


def jellyfish(n, d, seed=0):
    if d >= n:
        raise TopologyError("jellyfish needs degree d < n")
    if (n * d) % 2:
        raise TopologyError("jellyfish needs n*d even")
    # Same seed, same graph; bump deterministically until connected.
    for attempt in range(100):
        g = nx.random_regular_graph(d, n, seed=seed + attempt)
        if nx.is_connected(g):
            break
    else:
        raise TopologyError("could not draw a connected %d-regular graph" % d)
    names = {i: "sw%03d" % i for i in range(n)}
    devices = [DeviceInfo(names[i]) for i in range(n)]
    links = [(names[a], names[b]) for a, b in g.edges()]
    hosts = {"h%03d" % i: names[i] for i in range(n)}
    return _build("jellyfish", {"n": n, "d": d, "seed": seed}, devices, links, hosts)


def custom_network(devices, links, hosts, kind="custom", params=None):
    """Hand-built network from DeviceInfo records, links, and host mounts."""
    return _build(kind, params or {}, devices, links, hosts)


_GENERATORS = {
    "fat_tree": fat_tree,
    "dcell": dcell,
    "bcube": bcube,
    "jellyfish": jellyfish,
}


def generate(kind, seed=None, **params):
    if kind not in _GENERATORS:
        raise TopologyError(
            "unknown topology kind %r (have %s)" % (kind, ", ".join(sorted(_GENERATORS)))
        )
    if kind == "jellyfish" and seed is not None:
        params = {**params, "seed": seed}
    try:
        return _GENERATORS[kind](**params)
    except TypeError as e:
        raise TopologyError("bad parameters for %s: %s" % (kind, e))


# ---------------------------------------------------------------------------
# Path enumeration


def enumerate_paths(net, src, dst, limit=DEFAULT_PATH_LIMIT, max_len=None):
    """Simple src->dst device paths, shortest first, ties in id order."""
    for name in (src, dst):
        if name not in net.hosts:
            raise TopologyError("unknown host %r" % name)
    if src == dst:
        raise TopologyError("src and dst must be distinct hosts")
    a, b = net.hosts[src], net.hosts[dst]
    paths = []
    if a == b:
        paths.append((a,))  # both hosts hang off one device
    else:
        heap = [(1, (a,))]
        while heap and len(paths) < limit:
            length, path = heapq.heappop(heap)
            tail = path[-1]
            if tail == b:
                paths.append(path)
                continue
            if max_len is not None and length >= max_len:
                continue
            for n in net.neighbors(tail):
                if n not in path:
                    heapq.heappush(heap, (length + 1, path + (n,)))
    if not paths:
        raise TopologyError("no path between %s and %s" % (src, dst))
    return PathSet(src=src, dst=dst, src_device=a, dst_device=b, paths=tuple(paths))


# ---------------------------------------------------------------------------
# File format


def network_to_dict(net):
    return {
        "format_version": TOPOLOGY_FORMAT_VERSION,
        "kind": net.kind,
        "params": net.params,
        "devices": [
            {
                "device_id": d.device_id,
                "programmable": d.programmable,
                "stage_count": d.stage_count,
                "tcam_capacity": d.tcam_capacity,
                "sram_capacity": d.sram_capacity,
                "mul_slots": d.mul_slots,
                "edge": d.edge,
            }
            for _, d in sorted(net.devices.items())
        ],
        "links": [list(l) for l in net.links],
        "hosts": dict(sorted(net.hosts.items())),
    }


def network_from_dict(obj):
    if obj.get("format_version") != TOPOLOGY_FORMAT_VERSION:
        raise TopologyError(
            "unsupported topology format_version %r" % obj.get("format_version")
        )
    devices = {}
    for rec in obj["devices"]:
        info = DeviceInfo(**rec)
        devices[info.device_id] = info
    return NetworkModel(
        kind=obj.get("kind", "custom"),
        params=obj.get("params", {}),
        devices=devices,
        links=tuple(sorted(_norm_link(a, b) for a, b in obj["links"])),
        hosts=dict(obj["hosts"]),
    )


def save_network(net, path):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(network_to_dict(net), f, indent=1)
        f.write("\n")


def load_network(path):
    with open(path, "r", encoding="utf-8") as f:
        try:
            obj = json.load(f)
        except json.JSONDecodeError as e:
            raise TopologyError("topology file is not JSON: %s" % e)
    return network_from_dict(obj)
